//! k-subsets of `{0..p}` and the swap moves of the Johnson graph.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Above this ambient dimension the membership bitmap is skipped.
const BITMAP_LIMIT: u32 = 1 << 20;

/// A sorted k-subset of `{0, .., p-1}`, i.e. a k-sparse binary vector.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSupport", into = "RawSupport")]
pub struct Support {
    p: u32,
    indices: Vec<u32>,
    bitmap: Option<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct RawSupport {
    p: u32,
    indices: Vec<u32>,
}

impl TryFrom<RawSupport> for Support {
    type Error = Error;
    fn try_from(raw: RawSupport) -> Result<Self> {
        Support::new(raw.p, raw.indices)
    }
}

impl From<Support> for RawSupport {
    fn from(s: Support) -> Self {
        RawSupport { p: s.p, indices: s.indices }
    }
}

impl PartialEq for Support {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.indices == other.indices
    }
}

impl Eq for Support {}

impl std::hash::Hash for Support {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.p.hash(state);
        self.indices.hash(state);
    }
}

impl fmt::Debug for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Support(p={}, {:?})", self.p, self.indices)
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, x) in self.indices.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("}")
    }
}

/// Replace `out_index` (in the support) by `in_index` (absent from it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapMove {
    pub out_index: u32,
    pub in_index: u32,
}

impl SwapMove {
    pub fn new(out_index: u32, in_index: u32) -> Self {
        SwapMove { out_index, in_index }
    }

    pub fn reverse(self) -> SwapMove {
        SwapMove { out_index: self.in_index, in_index: self.out_index }
    }
}

impl Support {
    /// Builds a support from arbitrary distinct indices (sorted internally).
    pub fn new(p: u32, mut indices: Vec<u32>) -> Result<Self> {
        if p == 0 {
            return invalid("p must be positive");
        }
        if indices.is_empty() {
            return invalid("support must be non-empty");
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate index in {indices:?}")));
        }
        if let Some(&last) = indices.last() {
            if last >= p {
                return Err(Error::InvalidInput(format!("index {last} out of range for p={p}")));
            }
        }
        Ok(Self::from_sorted_unchecked(p, indices))
    }

    pub(crate) fn from_sorted_unchecked(p: u32, indices: Vec<u32>) -> Self {
        let bitmap = (p <= BITMAP_LIMIT).then(|| {
            let mut bits = vec![0u64; (p as usize).div_ceil(64)];
            for &i in &indices {
                bits[(i / 64) as usize] |= 1 << (i % 64);
            }
            bits
        });
        Support { p, indices, bitmap }
    }

    /// `{0, .., k-1}`.
    pub fn first(p: u32, k: u32) -> Result<Self> {
        check_dims(p, k)?;
        Ok(Self::from_sorted_unchecked(p, (0..k).collect()))
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn k(&self) -> u32 {
        self.indices.len() as u32
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    #[inline]
    pub fn contains(&self, i: u32) -> bool {
        match &self.bitmap {
            Some(bits) => i < self.p && bits[(i / 64) as usize] & (1 << (i % 64)) != 0,
            None => self.indices.binary_search(&i).is_ok(),
        }
    }

    /// Indices not in the support, ascending.
    pub fn complement(&self) -> Vec<u32> {
        (0..self.p).filter(|&i| !self.contains(i)).collect()
    }

    pub fn check_move(&self, m: SwapMove) -> Result<()> {
        if m.out_index == m.in_index {
            return Err(Error::Precondition(format!("swap {} -> {} is a no-op", m.out_index, m.in_index)));
        }
        if !self.contains(m.out_index) {
            return Err(Error::Precondition(format!("{} is not in the support", m.out_index)));
        }
        if m.in_index >= self.p || self.contains(m.in_index) {
            return Err(Error::Precondition(format!("{} cannot enter the support", m.in_index)));
        }
        Ok(())
    }

    /// Applies a validated move in place.
    pub fn apply_in_place(&mut self, m: SwapMove) {
        debug_assert!(self.check_move(m).is_ok());
        let pos = self.indices.binary_search(&m.out_index).expect("out_index in support");
        self.indices.remove(pos);
        let at = self.indices.binary_search(&m.in_index).unwrap_err();
        self.indices.insert(at, m.in_index);
        if let Some(bits) = &mut self.bitmap {
            bits[(m.out_index / 64) as usize] &= !(1 << (m.out_index % 64));
            bits[(m.in_index / 64) as usize] |= 1 << (m.in_index % 64);
        }
    }

    pub fn apply(&self, m: SwapMove) -> Result<Support> {
        self.check_move(m)?;
        let mut next = self.clone();
        next.apply_in_place(m);
        Ok(next)
    }

    /// A uniformly random Johnson neighbor, as a move. `None` if `k = p`.
    pub fn propose(&self, rng: &mut RngStream) -> Option<SwapMove> {
        let k = self.indices.len() as u64;
        let absent = self.p as u64 - k;
        if absent == 0 {
            return None;
        }
        let out_index = self.indices[rng.below(k) as usize];
        // the r-th absent index: walk the sorted support, skipping members
        let mut target = rng.below(absent) as u32;
        for &s in &self.indices {
            if s <= target {
                target += 1;
            } else {
                break;
            }
        }
        Some(SwapMove { out_index, in_index: target })
    }

    pub fn overlap(&self, other: &Support) -> Result<u32> {
        overlap(self, other)
    }
}

fn check_dims(p: u32, k: u32) -> Result<()> {
    if k == 0 || k > p {
        return invalid(format!("need 1 <= k <= p, got k={k}, p={p}"));
    }
    Ok(())
}

/// A support drawn uniformly from all `C(p, k)` k-subsets.
pub fn random_support(p: u32, k: u32, rng: &mut RngStream) -> Result<Support> {
    check_dims(p, k)?;
    let mut idx: Vec<u32> = rand::seq::index::sample(rng, p as usize, k as usize)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    idx.sort_unstable();
    Ok(Support::from_sorted_unchecked(p, idx))
}

/// `|a ∩ b|` by merging the sorted index lists.
pub fn overlap(a: &Support, b: &Support) -> Result<u32> {
    if a.p != b.p {
        return invalid(format!("supports live in different dimensions ({} vs {})", a.p, b.p));
    }
    let (mut i, mut j, mut n) = (0, 0, 0);
    let (x, y) = (&a.indices, &b.indices);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(n)
}

/// All `k(p-k)` swap moves, ordered lexicographically by `(out_index, in_index)`.
pub fn neighbors(s: &Support) -> impl Iterator<Item = SwapMove> + '_ {
    let absent = s.complement();
    s.indices.iter().flat_map(move |&o| {
        absent.clone().into_iter().map(move |i| SwapMove { out_index: o, in_index: i })
    })
}

/// Colex ranking of k-subsets, for dense per-state tables.
#[derive(Clone, Debug)]
pub struct SupportIndexer {
    p: u32,
    k: u32,
    // choose[n][j] = C(n, j)
    choose: Vec<Vec<u64>>,
    count: u64,
}

impl SupportIndexer {
    pub fn new(p: u32, k: u32) -> Result<Self> {
        check_dims(p, k)?;
        let mut choose = vec![vec![0u64; k as usize + 1]; p as usize + 1];
        for n in 0..=p as usize {
            choose[n][0] = 1;
            for j in 1..=(k as usize).min(n) {
                choose[n][j] = choose[n - 1][j - 1].saturating_add(if j < n { choose[n - 1][j] } else { 0 });
            }
        }
        let count = choose[p as usize][k as usize];
        if count == u64::MAX {
            return Err(Error::Resource(format!("C({p},{k}) does not fit in 64 bits")));
        }
        Ok(SupportIndexer { p, k, choose, count })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn rank(&self, s: &Support) -> u64 {
        s.indices
            .iter()
            .enumerate()
            .map(|(j, &c)| self.choose[c as usize][j + 1])
            .sum()
    }

    pub fn unrank(&self, mut r: u64) -> Support {
        let mut idx = vec![0u32; self.k as usize];
        let mut c = self.p;
        for j in (1..=self.k as usize).rev() {
            c -= 1;
            while self.choose[c as usize][j] > r {
                c -= 1;
            }
            idx[j - 1] = c;
            r -= self.choose[c as usize][j];
        }
        Support::from_sorted_unchecked(self.p, idx)
    }

    /// Every support, in rank order.
    pub fn all(&self) -> impl Iterator<Item = Support> + '_ {
        (0..self.count).map(move |r| self.unrank(r))
    }
}
