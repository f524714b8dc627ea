//! Sparse Gaussian additive model (sparse tensor PCA when the link is `x^t`).
//!
//! The Hamiltonian of a support `x` with overlap `l` against the planted support is
//! `signal_coef * f(l/k) + noise_coef * sum(W[i_1..i_t])`, the noise sum running over all
//! `k^t` ordered tuples drawn from `x`. Noise is never symmetrized.
//!
//! Two scalings are offered:
//! - [`Scaling::Normalized`]: `signal_coef = lambda`, `noise_coef = k^{-t/2}`,
//! - [`Scaling::Unnormalized`]: `H = <lambda v*^{⊗t} + W, x^{⊗t}>`, i.e. `signal_coef = lambda k^t`
//!   and `noise_coef = 1`. This is the form used by the phase-transition experiments.

use serde::{Deserialize, Serialize};

use crate::dynamics::Model;
use crate::error::{invalid, Error, Result};
use crate::rng::{streams, RngStream};
use crate::support::{random_support, Support, SwapMove};

/// Default cap on materialized noise entries.
pub const DEFAULT_DENSE_BUDGET: u64 = 200_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkFunction {
    Monomial { degree: u32 },
    /// Values of `f`, `f'` and `f''` on an increasing grid covering `[0, 1]`.
    Tabulated { grid: Vec<f64>, f: Vec<f64>, df: Vec<f64>, d2f: Vec<f64> },
}

impl LinkFunction {
    pub fn monomial(degree: u32) -> Self {
        LinkFunction::Monomial { degree }
    }

    /// Tabulates `f, f', f''` on `n` uniform points.
    pub fn tabulate(n: usize, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, d2f: impl Fn(f64) -> f64) -> Self {
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        LinkFunction::Tabulated {
            f: grid.iter().map(|&x| f(x)).collect(),
            df: grid.iter().map(|&x| df(x)).collect(),
            d2f: grid.iter().map(|&x| d2f(x)).collect(),
            grid,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LinkFunction::Monomial { degree } if *degree == 0 => invalid("monomial degree must be >= 1"),
            LinkFunction::Monomial { .. } => Ok(()),
            LinkFunction::Tabulated { grid, f, df, d2f } => {
                if grid.len() < 2 || f.len() != grid.len() || df.len() != grid.len() || d2f.len() != grid.len() {
                    return Err(Error::InvalidInput("tabulated link needs equal-length tables of size >= 2".into()));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("tabulated grid is not strictly increasing".into()));
                }
                if grid[0] > 0.0 || grid[grid.len() - 1] < 1.0 {
                    return Err(Error::InvalidInput("tabulated grid must cover [0, 1]".into()));
                }
                Ok(())
            }
        }
    }

    fn interpolate(grid: &[f64], ys: &[f64], x: f64) -> f64 {
        let i = grid.partition_point(|&g| g <= x).clamp(1, grid.len() - 1);
        let (x0, x1) = (grid[i - 1], grid[i]);
        let w = (x - x0) / (x1 - x0);
        ys[i - 1] * (1.0 - w) + ys[i] * w
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Monomial { degree } => x.powi(*degree as i32),
            LinkFunction::Tabulated { grid, f, .. } => Self::interpolate(grid, f, x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Monomial { degree: 1 } => 1.0,
            LinkFunction::Monomial { degree } => *degree as f64 * x.powi(*degree as i32 - 1),
            LinkFunction::Tabulated { grid, df, .. } => Self::interpolate(grid, df, x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Monomial { degree: 1 } => 0.0,
            LinkFunction::Monomial { degree: 2 } => 2.0,
            LinkFunction::Monomial { degree } => {
                let d = *degree as f64;
                d * (d - 1.0) * x.powi(*degree as i32 - 2)
            }
            LinkFunction::Tabulated { grid, d2f, .. } => Self::interpolate(grid, d2f, x),
        }
    }
}

/// Outcome of the numerical smoothness screen on a link function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub passes: bool,
    pub violations: Vec<String>,
    pub f_at_zero: f64,
    pub f_at_one: f64,
    /// Best `c` with `f'(x) >= c x^{t-1}` on the grid points of `(0, eps]`.
    pub derivative_constant: f64,
    /// `max |f''|` over the grid points of `[1 - eps, 1]`.
    pub curvature_bound: f64,
}

/// Grid screen for: `f(0) = 0`, `f` nondecreasing and convex, `f'(x) >= c x^{t-1}` near 0,
/// and `f''` bounded near 1. Not a proof.
pub fn check_smoothness(link: &LinkFunction, eps: f64, t: u32, grid_size: usize) -> Result<SmoothnessReport> {
    if grid_size < 16 {
        return invalid("grid_size must be at least 16");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0, 1)");
    }
    if t == 0 {
        return invalid("t must be >= 1");
    }
    link.validate()?;
    let xs: Vec<f64> = (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| link.value(x)).collect();
    let mut violations = Vec::new();

    let f_at_zero = fs[0];
    if f_at_zero.abs() > 1e-9 {
        violations.push(format!("f(0) = {f_at_zero} != 0"));
    }
    let f_at_one = fs[grid_size - 1];
    if !f_at_one.is_finite() {
        violations.push("f(1) is not finite".into());
    }
    if let Some(i) = (1..grid_size).find(|&i| fs[i] < fs[i - 1] - 1e-12) {
        violations.push(format!("f decreases between x={} and x={}", xs[i - 1], xs[i]));
    }
    if let Some(i) = (1..grid_size - 1).find(|&i| fs[i + 1] - 2.0 * fs[i] + fs[i - 1] < -1e-9) {
        violations.push(format!("f is not convex at x={}", xs[i]));
    }

    let derivative_constant = xs
        .iter()
        .filter(|&&x| x > 0.0 && x <= eps)
        .map(|&x| link.derivative(x) / x.powi(t as i32 - 1))
        .fold(f64::INFINITY, f64::min);
    if !(derivative_constant > 0.0) {
        violations.push(format!("f'(x) >= c x^(t-1) fails near 0 (best c = {derivative_constant})"));
    }
    let curvature_bound = xs
        .iter()
        .filter(|&&x| x >= 1.0 - eps)
        .map(|&x| link.second_derivative(x).abs())
        .fold(0.0, f64::max);
    if !curvature_bound.is_finite() {
        violations.push("f'' is unbounded near 1".into());
    }

    Ok(SmoothnessReport {
        passes: violations.is_empty(),
        violations,
        f_at_zero,
        f_at_one,
        derivative_constant,
        curvature_bound,
    })
}

/// Typical overlap of a uniform support with the planted one: 1 when `k <= sqrt(p ln p)`,
/// otherwise `ceil(k^2 / p)`.
pub fn typical_overlap(p: u32, k: u32) -> u32 {
    let (pf, kf) = (p as f64, k as f64);
    if kf <= (pf * pf.ln()).sqrt() {
        1
    } else {
        ((kf * kf) / pf).ceil() as u32
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    Normalized,
    Unnormalized,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Auto,
    Dense,
    Lazy,
}

/// Everything needed to regenerate an instance. Noise is rebuilt from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamParams {
    pub p: u32,
    pub k: u32,
    pub t: u32,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub link: Option<LinkFunction>,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default = "default_budget")]
    pub dense_budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_DENSE_BUDGET
}

impl GamParams {
    pub fn new(p: u32, k: u32, t: u32, lambda: f64, seed: u64) -> Self {
        GamParams {
            p,
            k,
            t,
            lambda,
            seed,
            link: None,
            scaling: Scaling::Normalized,
            noise_mode: NoiseMode::Auto,
            dense_budget: DEFAULT_DENSE_BUDGET,
        }
    }

    pub fn scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn noise_mode(mut self, mode: NoiseMode) -> Self {
        self.noise_mode = mode;
        self
    }

    /// The link function, `x^t` unless overridden.
    pub fn link(&self) -> LinkFunction {
        self.link.clone().unwrap_or(LinkFunction::Monomial { degree: self.t })
    }
}

/// JSON header: parameters and planted support, never the noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamHeader {
    pub params: GamParams,
    pub planted: Support,
    pub dense: bool,
}

#[derive(Clone, Debug)]
pub struct GamInstance {
    params: GamParams,
    link: LinkFunction,
    planted: Support,
    noise: RngStream,
    dense: Option<Vec<f64>>,
    /// `p^j` for `j < t`.
    strides: Vec<u64>,
    signal_coef: f64,
    noise_coef: f64,
}

/// Per-chain cached state.
#[derive(Clone, Debug, PartialEq)]
pub struct GamCache {
    pub support: Support,
    pub overlap_with_planted: u32,
    /// `noise_coef * sum of W over ordered tuples of the support`.
    pub noise_part: f64,
    pub h_value: f64,
}

/// Convenience wrapper with the default (normalized, auto) options.
pub fn generate_gam(p: u32, k: u32, t: u32, lambda: f64, seed: u64) -> Result<GamInstance> {
    GamInstance::generate(GamParams::new(p, k, t, lambda, seed))
}

impl GamInstance {
    pub fn generate(params: GamParams) -> Result<Self> {
        let mut planted_rng = RngStream::new(params.seed, streams::PLANTED);
        let planted = random_support(params.p, params.k, &mut planted_rng)?;
        Self::with_planted(params, planted)
    }

    /// Builds an instance around a given planted support.
    pub fn with_planted(params: GamParams, planted: Support) -> Result<Self> {
        let GamParams { p, k, t, lambda, .. } = params;
        if t < 2 {
            return invalid(format!("tensor order t must be >= 2, got {t}"));
        }
        if k == 0 || k > p {
            return invalid(format!("need 1 <= k <= p, got k={k}, p={p}"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return invalid(format!("lambda must be finite and >= 0, got {lambda}"));
        }
        if planted.p() != p || planted.k() != k {
            return invalid("planted support does not match (p, k)");
        }
        let link = params.link();
        link.validate()?;
        let entries = (p as u64)
            .checked_pow(t)
            .ok_or_else(|| Error::Resource(format!("p^t = {p}^{t} overflows the tuple index")))?;
        let dense_wanted = match params.noise_mode {
            NoiseMode::Lazy => false,
            NoiseMode::Auto => entries <= params.dense_budget,
            NoiseMode::Dense if entries <= params.dense_budget => true,
            NoiseMode::Dense => {
                return Err(Error::Resource(format!(
                    "dense noise needs {entries} entries, budget is {}",
                    params.dense_budget
                )))
            }
        };
        let noise = RngStream::new(params.seed, streams::NOISE);
        let dense = dense_wanted.then(|| (0..entries).map(|i| noise.gaussian(i)).collect());
        let strides = (0..t).map(|j| (p as u64).pow(j)).collect();
        let kf = k as f64;
        let (signal_coef, noise_coef) = match params.scaling {
            Scaling::Normalized => (lambda, kf.powf(-(t as f64) / 2.0)),
            Scaling::Unnormalized => (lambda * kf.powi(t as i32), 1.0),
        };
        Ok(GamInstance { params, link, planted, noise, dense, strides, signal_coef, noise_coef })
    }

    pub fn from_header(header: &GamHeader) -> Result<Self> {
        Self::with_planted(header.params.clone(), header.planted.clone())
    }

    pub fn header(&self) -> GamHeader {
        GamHeader { params: self.params.clone(), planted: self.planted.clone(), dense: self.is_dense() }
    }

    /// Test hook: drops the noise entirely.
    pub fn with_zero_noise(mut self) -> Self {
        self.noise_coef = 0.0;
        self
    }

    pub fn params(&self) -> &GamParams {
        &self.params
    }

    pub fn p(&self) -> u32 {
        self.params.p
    }

    pub fn k(&self) -> u32 {
        self.params.k
    }

    pub fn t(&self) -> u32 {
        self.params.t
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn planted(&self) -> &Support {
        &self.planted
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn noise_coef(&self) -> f64 {
        self.noise_coef
    }

    /// Signal term for a given overlap with the planted support.
    pub fn signal(&self, overlap: u32) -> f64 {
        self.signal_coef * self.link.value(overlap as f64 / self.params.k as f64)
    }

    /// Raw noise entry at an ordered tuple.
    pub fn noise_entry(&self, tuple: &[u32]) -> f64 {
        debug_assert_eq!(tuple.len(), self.params.t as usize);
        let t = tuple.len();
        let flat = tuple.iter().enumerate().map(|(j, &i)| i as u64 * self.strides[t - 1 - j]).sum();
        self.entry(flat)
    }

    #[inline]
    fn entry(&self, flat: u64) -> f64 {
        match &self.dense {
            Some(d) => d[flat as usize],
            None => self.noise.gaussian(flat),
        }
    }

    #[inline]
    fn entry2(&self, a: u32, b: u32) -> f64 {
        self.entry(a as u64 * self.params.p as u64 + b as u64)
    }

    /// Unscaled sum of `W` over all ordered tuples drawn from `indices`.
    pub fn raw_noise_sum(&self, indices: &[u32]) -> f64 {
        let t = self.params.t as usize;
        if t == 2 {
            let mut acc = 0.0;
            for &a in indices {
                for &b in indices {
                    acc += self.entry2(a, b);
                }
            }
            return acc;
        }
        let n = indices.len();
        if n == 0 {
            return 0.0;
        }
        let mut digits = vec![0usize; t];
        let mut acc = 0.0;
        loop {
            let flat: u64 = (0..t).map(|j| indices[digits[j]] as u64 * self.strides[t - 1 - j]).sum();
            acc += self.entry(flat);
            let mut j = t;
            loop {
                if j == 0 {
                    return acc;
                }
                j -= 1;
                digits[j] += 1;
                if digits[j] < n {
                    break;
                }
                digits[j] = 0;
            }
        }
    }

    /// Unscaled sum of `W` over tuples from `rest ∪ {special}` that contain `special`.
    pub fn raw_incidence_sum(&self, special: u32, rest: &[u32]) -> f64 {
        let t = self.params.t as usize;
        if t == 2 {
            let mut acc = self.entry2(special, special);
            for &c in rest {
                acc += self.entry2(special, c) + self.entry2(c, special);
            }
            return acc;
        }
        // split by the position of the first occurrence of `special`
        let mut with: Vec<u32> = rest.to_vec();
        with.push(special);
        let mut acc = 0.0;
        let mut digits = vec![0usize; t];
        for first in 0..t {
            let radix = |pos: usize| if pos < first { rest.len() } else { with.len() };
            if first > 0 && rest.is_empty() {
                continue;
            }
            digits.iter_mut().for_each(|d| *d = 0);
            'tuples: loop {
                let mut flat = special as u64 * self.strides[t - 1 - first];
                for pos in (0..t).filter(|&pos| pos != first) {
                    let idx = if pos < first { rest[digits[pos]] } else { with[digits[pos]] };
                    flat += idx as u64 * self.strides[t - 1 - pos];
                }
                acc += self.entry(flat);
                let mut pos = t;
                loop {
                    if pos == 0 {
                        break 'tuples;
                    }
                    pos -= 1;
                    if pos == first {
                        continue;
                    }
                    digits[pos] += 1;
                    if digits[pos] < radix(pos) {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
        }
        acc
    }

    fn check_support(&self, s: &Support) -> Result<()> {
        if s.p() != self.params.p || s.k() != self.params.k {
            return invalid(format!(
                "support has (p, k) = ({}, {}), instance has ({}, {})",
                s.p(),
                s.k(),
                self.params.p,
                self.params.k
            ));
        }
        Ok(())
    }

    /// Full recomputation, `O(k^t)` noise lookups.
    pub fn hamiltonian(&self, s: &Support) -> Result<f64> {
        self.check_support(s)?;
        let ov = crate::support::overlap(s, &self.planted)?;
        Ok(self.signal(ov) + self.noise_coef * self.raw_noise_sum(s.indices()))
    }

    pub fn cache(&self, s: Support) -> Result<GamCache> {
        self.check_support(&s)?;
        let overlap_with_planted = crate::support::overlap(&s, &self.planted)?;
        let noise_part = self.noise_coef * self.raw_noise_sum(s.indices());
        Ok(GamCache {
            h_value: self.signal(overlap_with_planted) + noise_part,
            support: s,
            overlap_with_planted,
            noise_part,
        })
    }

    fn overlap_after(&self, cache: &GamCache, m: SwapMove) -> u32 {
        cache.overlap_with_planted + self.planted.contains(m.in_index) as u32
            - self.planted.contains(m.out_index) as u32
    }

    fn noise_delta(&self, cache: &GamCache, m: SwapMove) -> f64 {
        let rest: Vec<u32> = cache.support.indices().iter().copied().filter(|&i| i != m.out_index).collect();
        self.noise_coef * (self.raw_incidence_sum(m.in_index, &rest) - self.raw_incidence_sum(m.out_index, &rest))
    }

    /// `H(apply(s, m)) - H(s)`, touching only tuples that contain a swapped index.
    pub fn delta_hamiltonian(&self, cache: &GamCache, m: SwapMove) -> Result<f64> {
        cache.support.check_move(m)?;
        Ok(self.delta_unchecked(cache, m))
    }

    fn delta_unchecked(&self, cache: &GamCache, m: SwapMove) -> f64 {
        let signal = self.signal(self.overlap_after(cache, m)) - self.signal(cache.overlap_with_planted);
        if self.noise_coef == 0.0 {
            return signal;
        }
        signal + self.noise_delta(cache, m)
    }

    pub fn commit(&self, cache: &mut GamCache, m: SwapMove, delta: f64) {
        let overlap = self.overlap_after(cache, m);
        let signal_change = self.signal(overlap) - self.signal(cache.overlap_with_planted);
        cache.noise_part += delta - signal_change;
        cache.overlap_with_planted = overlap;
        cache.h_value += delta;
        cache.support.apply_in_place(m);
    }

    /// Materializes the full tensor (small instances only).
    pub fn materialize(&self) -> Result<Vec<f64>> {
        let entries = (self.params.p as u64).pow(self.params.t);
        if entries > self.params.dense_budget {
            return Err(Error::Resource(format!("{entries} noise entries exceed the budget")));
        }
        Ok((0..entries).map(|i| self.entry(i)).collect())
    }
}

impl Model for GamInstance {
    type Cache = GamCache;

    fn planted(&self) -> &Support {
        &self.planted
    }

    fn init(&self, s: Support) -> Result<GamCache> {
        self.cache(s)
    }

    fn support<'c>(&self, cache: &'c GamCache) -> &'c Support {
        &cache.support
    }

    fn h_value(&self, cache: &GamCache) -> f64 {
        cache.h_value
    }

    fn delta(&self, cache: &GamCache, m: SwapMove) -> f64 {
        self.delta_unchecked(cache, m)
    }

    fn commit(&self, cache: &mut GamCache, m: SwapMove, delta: f64) {
        GamInstance::commit(self, cache, m, delta)
    }

    fn hamiltonian(&self, s: &Support) -> Result<f64> {
        GamInstance::hamiltonian(self, s)
    }

    fn overlap(&self, cache: &GamCache) -> u32 {
        cache.overlap_with_planted
    }
}
