//! Exhaustive verification on small state spaces: ascent spanning trees, the bounds they
//! imply, and exact stationary / transition-matrix computations to check them against.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::Model;
use crate::error::{invalid, Error, Result};
use crate::math::log_sum_exp;
use crate::support::{neighbors, Support, SupportIndexer, SwapMove};

/// Default cap on enumerated states.
pub const DEFAULT_STATE_BUDGET: u64 = 200_000;
/// Cap for dense transition-matrix work.
pub const PROBE_STATE_BUDGET: u64 = 2_000;

/// `H` tabulated over every k-subset, indexed by colex rank.
#[derive(Clone, Debug)]
pub struct HamiltonianTable {
    indexer: SupportIndexer,
    h: Vec<f64>,
    argmax: usize,
    planted: Support,
    p: u32,
    k: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableCache {
    pub support: Support,
    pub rank: usize,
}

impl HamiltonianTable {
    pub fn from_fn(p: u32, k: u32, budget: u64, mut h: impl FnMut(&Support) -> Result<f64>) -> Result<Self> {
        let indexer = SupportIndexer::new(p, k)?;
        if indexer.count() > budget {
            return Err(Error::Resource(format!("C({p},{k}) = {} states exceed the budget {budget}", indexer.count())));
        }
        let values = indexer.all().map(|s| h(&s)).collect::<Result<Vec<_>>>()?;
        Self::build(indexer, values)
    }

    pub fn from_model<M: Model>(model: &M) -> Result<Self> {
        let planted = model.planted();
        Self::from_fn(planted.p(), planted.k(), DEFAULT_STATE_BUDGET, |s| model.hamiltonian(s))
    }

    /// Values listed in colex rank order (see [`SupportIndexer`]).
    pub fn from_values(p: u32, k: u32, values: Vec<f64>) -> Result<Self> {
        let indexer = SupportIndexer::new(p, k)?;
        if values.len() as u64 != indexer.count() {
            return Err(Error::InvalidInput(format!("expected {} values, got {}", indexer.count(), values.len())));
        }
        Self::build(indexer, values)
    }

    fn build(indexer: SupportIndexer, h: Vec<f64>) -> Result<Self> {
        if let Some(i) = h.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite H at state {}", indexer.unrank(i as u64))));
        }
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tops: Vec<usize> = (0..h.len()).filter(|&i| h[i] == max).collect();
        if tops.len() > 1 {
            let names: Vec<String> = tops.iter().take(4).map(|&i| indexer.unrank(i as u64).to_string()).collect();
            return Err(Error::Degenerate(format!("{} global maximizers, e.g. {}", tops.len(), names.join(" "))));
        }
        let argmax = tops[0];
        let planted = indexer.unrank(argmax as u64);
        let (p, k) = (planted.p(), planted.k());
        Ok(HamiltonianTable { indexer, h, argmax, planted, p, k })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn value(&self, rank: usize) -> f64 {
        self.h[rank]
    }

    pub fn rank(&self, s: &Support) -> usize {
        self.indexer.rank(s) as usize
    }

    pub fn state(&self, rank: usize) -> Support {
        self.indexer.unrank(rank as u64)
    }

    pub fn argmax(&self) -> usize {
        self.argmax
    }

    /// Johnson-graph degree `k (p - k)`.
    pub fn degree(&self) -> u64 {
        self.k as u64 * (self.p - self.k) as u64
    }

    /// `max H - min H`.
    pub fn range(&self) -> f64 {
        let min = self.h.iter().copied().fold(f64::INFINITY, f64::min);
        self.h[self.argmax] - min
    }

    /// Neighbor ranks of a state, in lexicographic move order.
    pub fn neighbor_ranks(&self, rank: usize) -> Vec<usize> {
        let s = self.state(rank);
        neighbors(&s).map(|m| self.rank(&s.apply(m).expect("valid neighbor"))).collect()
    }
}

impl Model for HamiltonianTable {
    type Cache = TableCache;

    fn planted(&self) -> &Support {
        &self.planted
    }

    fn init(&self, s: Support) -> Result<TableCache> {
        if s.p() != self.p || s.k() != self.k {
            return invalid("support does not match the table dimensions");
        }
        Ok(TableCache { rank: self.rank(&s), support: s })
    }

    fn support<'c>(&self, cache: &'c TableCache) -> &'c Support {
        &cache.support
    }

    fn h_value(&self, cache: &TableCache) -> f64 {
        self.h[cache.rank]
    }

    fn delta(&self, cache: &TableCache, m: SwapMove) -> f64 {
        let mut next = cache.support.clone();
        next.apply_in_place(m);
        self.h[self.rank(&next)] - self.h[cache.rank]
    }

    fn commit(&self, cache: &mut TableCache, m: SwapMove, _delta: f64) {
        cache.support.apply_in_place(m);
        cache.rank = self.rank(&cache.support);
    }

    fn hamiltonian(&self, s: &Support) -> Result<f64> {
        Ok(self.h[self.rank(s)])
    }
}

/// Threshold temperatures and iteration-bound products implied by an ascent tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    /// `(log Delta + 2) / delta`: stationary mass at the optimum is at least 3/4 above this.
    pub beta1: f64,
    /// `D Delta (log |X| + beta R_H)`.
    pub mix1: f64,
    /// `(2 / delta) (log |X| + log(40 R_H / delta))`.
    pub beta2: f64,
    /// `Delta R_H / delta`.
    pub mix2: f64,
}

/// Evaluates the bound formulas. Constants hidden in the asymptotic statements are dropped.
pub fn theorem_2_3_bounds(delta: f64, diameter: f64, max_degree: f64, r_h: f64, n_states: f64, beta: f64) -> Result<TheoremBounds> {
    for (name, v) in [("delta", delta), ("diameter", diameter), ("degree", max_degree), ("R_H", r_h), ("n_states", n_states), ("beta", beta)] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be finite and positive, got {v}"));
        }
    }
    let log_states = n_states.ln();
    Ok(TheoremBounds {
        beta1: (max_degree.ln() + 2.0) / delta,
        mix1: diameter * max_degree * (log_states + beta * r_h),
        beta2: (2.0 / delta) * (log_states + (40.0 * r_h / delta).ln()),
        mix2: max_degree * r_h / delta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Smallest parent gap; `None` for a single-state space.
    pub delta: Option<f64>,
    /// Twice the largest root depth.
    pub diameter: u32,
    pub max_degree: u64,
    pub r_h: f64,
    pub n_states: u64,
    pub root: Support,
    /// Parent rank per state rank; `None` at the root.
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<u32>,
    /// Bounds evaluated at `beta = beta1`; `None` for a single-state space.
    pub bounds: Option<TheoremBounds>,
    /// Exact stationary mass at the root at `beta = beta1`.
    pub pi_mass_at_optimum: f64,
}

impl CertificateReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Graphviz rendering of the tree, edges labelled by their gap.
    pub fn to_dot(&self, table: &HamiltonianTable) -> String {
        let mut out = String::from("digraph ascent {\n  rankdir=BT;\n");
        for (r, parent) in self.parent.iter().enumerate() {
            let _ = writeln!(out, "  s{r} [label=\"{}\\nH={:.4}\"];", table.state(r), table.value(r));
            if let Some(q) = parent {
                let _ = writeln!(out, "  s{r} -> s{q} [label=\"{:.4}\"];", table.value(*q) - table.value(r));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Each non-root state points to its highest-valued strictly improving neighbor. Fails with
/// [`Error::Trapped`] if some non-optimal state has no improving neighbor.
pub fn build_ascent_tree(table: &HamiltonianTable) -> Result<CertificateReport> {
    let n = table.len();
    let root = table.argmax();
    let mut parent = vec![None; n];
    let mut delta = f64::INFINITY;
    for (r, slot) in parent.iter_mut().enumerate() {
        if r == root {
            continue;
        }
        let here = table.value(r);
        let mut best: Option<usize> = None;
        for q in table.neighbor_ranks(r) {
            if table.value(q) > here && best.is_none_or(|b| table.value(q) > table.value(b)) {
                best = Some(q);
            }
        }
        let Some(q) = best else {
            return Err(Error::Trapped { state: table.state(r).indices().to_vec() });
        };
        delta = delta.min(table.value(q) - here);
        *slot = Some(q);
    }
    // parents have strictly larger H, so visiting in decreasing H order fills depths in one pass
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| table.value(b).total_cmp(&table.value(a)));
    let mut depth = vec![0u32; n];
    for &r in &order {
        if let Some(q) = parent[r] {
            depth[r] = depth[q] + 1;
        }
    }
    let diameter = 2 * depth.iter().copied().max().unwrap_or(0);
    let r_h = table.range();
    let (delta, bounds, pi_mass_at_optimum) = if n == 1 {
        (None, None, 1.0)
    } else {
        let b1 = (table.degree() as f64).ln() + 2.0;
        let bounds = theorem_2_3_bounds(delta, diameter as f64, table.degree() as f64, r_h, n as f64, b1 / delta)?;
        let pi = exact_stationary(table, bounds.beta1)?[root];
        (Some(delta), Some(bounds), pi)
    };
    Ok(CertificateReport {
        delta,
        diameter,
        max_degree: table.degree(),
        r_h,
        n_states: n as u64,
        root: table.state(root),
        parent,
        depth,
        bounds,
        pi_mass_at_optimum,
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return invalid(format!("beta must be finite and >= 0, got {beta}"));
    }
    Ok(())
}

/// `pi_beta(x) ∝ exp(beta H(x))`, normalized in log space.
pub fn exact_stationary(table: &HamiltonianTable, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let logw: Vec<f64> = table.values().iter().map(|h| beta * h).collect();
    let z = log_sum_exp(logw.iter().copied());
    Ok(logw.iter().map(|w| (w - z).exp()).collect())
}

/// `pi_beta(inner) / pi_beta(enclosing)`, sets given as state ranks.
pub fn bottleneck_ratio(table: &HamiltonianTable, beta: f64, inner: &[usize], enclosing: &[usize]) -> Result<f64> {
    check_beta(beta)?;
    if enclosing.is_empty() {
        return Err(Error::InvalidInput("enclosing set is empty".into()));
    }
    let mut member = vec![false; table.len()];
    for &r in enclosing {
        if r >= table.len() {
            return Err(Error::InvalidInput(format!("state rank {r} out of range")));
        }
        member[r] = true;
    }
    if let Some(&r) = inner.iter().find(|&&r| r >= table.len() || !member[r]) {
        return Err(Error::InvalidInput(format!("state rank {r} is not in the enclosing set")));
    }
    let lw = |set: &[usize]| log_sum_exp(set.iter().map(|&r| beta * table.value(r)));
    Ok((lw(inner) - lw(enclosing)).exp())
}

/// One row of the sparse kernel: `(neighbor, probability)` pairs and the hold probability.
pub type TransitionRow = (Vec<(usize, f64)>, f64);

/// Sparse Metropolis kernel, one row per state.
pub fn transition_rows(table: &HamiltonianTable, beta: f64) -> Result<Vec<TransitionRow>> {
    check_beta(beta)?;
    let degree = table.degree() as f64;
    Ok((0..table.len())
        .map(|r| {
            let here = table.value(r);
            let moves: Vec<(usize, f64)> = table
                .neighbor_ranks(r)
                .into_iter()
                .map(|q| (q, crate::dynamics::acceptance_probability(table.value(q) - here, beta) / degree))
                .collect();
            let hold = 1.0 - moves.iter().map(|m| m.1).sum::<f64>();
            (moves, hold.max(0.0))
        })
        .collect())
}

/// `max |pi(a) P(a,b) - pi(b) P(b,a)|` over all edges.
pub fn detailed_balance_residual(table: &HamiltonianTable, beta: f64) -> Result<f64> {
    let pi = exact_stationary(table, beta)?;
    let rows = transition_rows(table, beta)?;
    let mut worst: f64 = 0.0;
    for (a, (moves, _)) in rows.iter().enumerate() {
        for &(b, pab) in moves {
            let pba = rows[b].0.iter().find(|m| m.0 == a).map_or(0.0, |m| m.1);
            worst = worst.max((pi[a] * pab - pi[b] * pba).abs());
        }
    }
    Ok(worst)
}

fn dense_kernel(table: &HamiltonianTable, beta: f64) -> Result<Vec<f64>> {
    if table.len() as u64 > PROBE_STATE_BUDGET {
        return Err(Error::Resource(format!("{} states exceed the dense budget {PROBE_STATE_BUDGET}", table.len())));
    }
    let n = table.len();
    let mut dense = vec![0.0; n * n];
    for (a, (moves, hold)) in transition_rows(table, beta)?.into_iter().enumerate() {
        dense[a * n + a] = hold;
        for (b, pr) in moves {
            dense[a * n + b] += pr;
        }
    }
    Ok(dense)
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let x = a[i * n + l];
            if x == 0.0 {
                continue;
            }
            let (row_b, row_c) = (&b[l * n..(l + 1) * n], &mut c[i * n..(i + 1) * n]);
            row_c.iter_mut().zip(row_b).for_each(|(c, b)| *c += x * b);
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingProbe {
    pub steps: u64,
    pub tv: f64,
    pub worst_start: usize,
}

/// Total variation between `P^T(x, .)` and `pi_beta`, maximized over the start `x`.
pub fn exact_mixing_probe(table: &HamiltonianTable, beta: f64, steps: u64) -> Result<MixingProbe> {
    let n = table.len();
    let kernel = dense_kernel(table, beta)?;
    let pi = exact_stationary(table, beta)?;
    let mut power: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
    let (mut base, mut e) = (kernel, steps);
    while e > 0 {
        if e & 1 == 1 {
            power = mat_mul(&power, &base, n);
        }
        e >>= 1;
        if e > 0 {
            base = mat_mul(&base, &base, n);
        }
    }
    let (worst_start, tv) = (0..n)
        .map(|x| (x, 0.5 * (0..n).map(|y| (power[x * n + y] - pi[y]).abs()).sum::<f64>()))
        .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    Ok(MixingProbe { steps, tv, worst_start })
}

/// Smallest probability, over starting states, of visiting the optimum within `steps` steps.
pub fn hitting_probability(table: &HamiltonianTable, beta: f64, steps: u64) -> Result<f64> {
    let rows = transition_rows(table, beta)?;
    let root = table.argmax();
    let mut hit: Vec<f64> = (0..table.len()).map(|r| (r == root) as u8 as f64).collect();
    for _ in 0..steps {
        let next: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(a, (moves, hold))| {
                if a == root {
                    1.0
                } else {
                    hold * hit[a] + moves.iter().map(|&(b, pr)| pr * hit[b]).sum::<f64>()
                }
            })
            .collect();
        hit = next;
    }
    Ok(hit.into_iter().fold(1.0, f64::min))
}
