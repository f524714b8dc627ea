//! Threshold formulas and overlap-landscape diagnostics.

use serde::{Deserialize, Serialize};

use crate::certificate::HamiltonianTable;
use crate::error::{invalid, Error, Result};
use crate::gam::GamInstance;
use crate::math::{binomial, ln_binomial};
use crate::regression::RegressionInstance;
use crate::rng::RngStream;
use crate::support::{overlap, Support};

/// Default cap on supports enumerated per overlap shell.
pub const DEFAULT_SHELL_BUDGET: u64 = 10_000_000;

const CONVENTION: &str = "polylogarithmic factors and constants dropped";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ThresholdModel {
    Pca { t: u32, k: u32, p: u32 },
    Regression { k: u32, p: u32, sigma2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    #[serde(flatten)]
    pub model: ThresholdModel,
    pub stats: f64,
    pub alg: f64,
    /// Low-temperature MCMC threshold (PCA only).
    pub mcmc: Option<f64>,
    /// LASSO sample size (regression only).
    pub lasso: Option<f64>,
    /// `sqrt(mcmc * stats) / alg` (PCA only).
    pub geometric_gap: Option<f64>,
    /// `true` when `k <= sqrt(p)` selects the first branch of each minimum (PCA only).
    pub sparse_branch: Option<bool>,
    pub convention: String,
}

impl ThresholdSet {
    pub fn geometric_residual(&self) -> Option<f64> {
        self.geometric_gap.map(|g| (g - 1.0).abs())
    }
}

/// Signal thresholds for sparse tensor PCA:
/// `stats = sqrt(k)`, `alg = min(k^{t/2}, p^{(t-1)/2} / k^{t/2-1})`,
/// `mcmc = min(k^{t-1/2}, p^{t-1} / k^{t-3/2})`.
pub fn pca_thresholds(t: u32, k: u32, p: u32) -> Result<ThresholdSet> {
    if t < 2 || k == 0 || k > p {
        return invalid(format!("need t >= 2 and 1 <= k <= p, got t={t}, k={k}, p={p}"));
    }
    let (tf, kf, pf) = (t as f64, k as f64, p as f64);
    let stats = kf.sqrt();
    let alg = kf.powf(tf / 2.0).min(pf.powf((tf - 1.0) / 2.0) / kf.powf(tf / 2.0 - 1.0));
    let mcmc = kf.powf(tf - 0.5).min(pf.powf(tf - 1.0) / kf.powf(tf - 1.5));
    Ok(ThresholdSet {
        model: ThresholdModel::Pca { t, k, p },
        stats,
        alg,
        mcmc: Some(mcmc),
        lasso: None,
        geometric_gap: Some((mcmc * stats).sqrt() / alg),
        sparse_branch: Some(kf * kf <= pf),
        convention: CONVENTION.into(),
    })
}

/// Sample-size thresholds for sparse regression:
/// `stats = 2k log(p/k) / log(k/sigma2 + 1)`, `alg = k log(p/k)`, `lasso = (2k + sigma2) log(p/k)`.
pub fn regression_thresholds(k: u32, p: u32, sigma2: f64) -> Result<ThresholdSet> {
    if k == 0 || k >= p {
        return invalid(format!("need 1 <= k < p, got k={k}, p={p}"));
    }
    if !(sigma2 > 0.0) {
        return invalid(format!("sigma2 must be > 0, got {sigma2}"));
    }
    let (kf, pf) = (k as f64, p as f64);
    let log_ratio = (pf / kf).ln();
    Ok(ThresholdSet {
        model: ThresholdModel::Regression { k, p, sigma2 },
        stats: 2.0 * kf * log_ratio / (kf / sigma2 + 1.0).ln(),
        alg: kf * log_ratio,
        mcmc: None,
        lasso: Some((2.0 * kf + sigma2) * log_ratio),
        geometric_gap: None,
        sparse_branch: None,
        convention: CONVENTION.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProfileMode {
    Exact,
    /// Max over uniform draws from each shell: a lower bound on the shell maximum.
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaProfile {
    pub ell: Vec<u32>,
    /// Largest `H` over supports with overlap exactly `ell`.
    pub gamma: Vec<f64>,
    /// Running maximum of `gamma`.
    pub gamma_prefix_max: Vec<f64>,
    pub best: Vec<Support>,
    #[serde(flatten)]
    pub mode: ProfileMode,
}

impl GammaProfile {
    pub fn at(&self, ell: u32) -> Option<(f64, f64)> {
        self.ell.iter().position(|&e| e == ell).map(|i| (self.gamma[i], self.gamma_prefix_max[i]))
    }
}

/// Number of supports with overlap exactly `ell` with a fixed k-subset.
pub fn shell_size(p: u32, k: u32, ell: u32) -> Option<u64> {
    binomial(k as u64, ell as u64)?.checked_mul(binomial((p - k) as u64, (k - ell) as u64)?)
}

/// Depth-first enumeration of k-subsets with an incrementally maintained additive score.
struct ShellWalker<'a> {
    /// Score added when an element joins the already chosen ones.
    incidence: &'a dyn Fn(u32, &[u32]) -> f64,
}

impl ShellWalker<'_> {
    fn walk(&self, pool: &[u32], need: usize, chosen: &mut Vec<u32>, score: f64, leaf: &mut dyn FnMut(&[u32], f64)) {
        if need == 0 {
            leaf(chosen, score);
            return;
        }
        if pool.len() < need {
            return;
        }
        for i in 0..=pool.len() - need {
            let e = pool[i];
            let next = score + (self.incidence)(e, chosen);
            chosen.push(e);
            self.walk(&pool[i + 1..], need - 1, chosen, next, leaf);
            chosen.pop();
        }
    }

    /// Visits every support built from `ell` elements of `inner` and `k - ell` of `outer`.
    fn shell(&self, inner: &[u32], outer: &[u32], ell: usize, k: usize, leaf: &mut dyn FnMut(&[u32], f64)) {
        self.walk(inner, ell, &mut Vec::with_capacity(k), 0.0, &mut |head, score| {
            let mut chosen = head.to_vec();
            self.walk(outer, k - ell, &mut chosen, score, leaf);
        });
    }
}

pub fn gamma_profile(inst: &GamInstance, ell_max: u32, mode: ProfileMode) -> Result<GammaProfile> {
    gamma_profile_with_budget(inst, ell_max, mode, DEFAULT_SHELL_BUDGET)
}

/// Shell maxima of `H` for overlaps `0..=ell_max`.
pub fn gamma_profile_with_budget(inst: &GamInstance, ell_max: u32, mode: ProfileMode, shell_budget: u64) -> Result<GammaProfile> {
    let (p, k) = (inst.p(), inst.k());
    if ell_max > k {
        return invalid(format!("ell_max {ell_max} exceeds k = {k}"));
    }
    let lo = (2 * k).saturating_sub(p);
    let ells: Vec<u32> = (lo..=ell_max).collect();
    let planted = inst.planted().indices().to_vec();
    let outer = inst.planted().complement();
    if mode == ProfileMode::Exact {
        for &l in &ells {
            let size = shell_size(p, k, l).unwrap_or(u64::MAX);
            if size > shell_budget {
                return Err(Error::Resource(format!(
                    "shell {l} has {size} supports (budget {shell_budget}); use monte_carlo mode"
                )));
            }
        }
    }
    let noise_coef = inst.noise_coef();
    let incidence = (mode == ProfileMode::Exact).then(|| incidence_fn(inst));
    let mut gamma = Vec::with_capacity(ells.len());
    let mut best = Vec::with_capacity(ells.len());
    for &l in &ells {
        let (value, arg) = match mode {
            ProfileMode::Exact => {
                let walker = ShellWalker { incidence: &**incidence.as_ref().expect("built for exact mode") };
                let mut top = (f64::NEG_INFINITY, Vec::new());
                walker.shell(&planted, &outer, l as usize, k as usize, &mut |chosen, score| {
                    if score > top.0 {
                        top = (score, chosen.to_vec());
                    }
                });
                (inst.signal(l) + noise_coef * top.0, Support::new(p, top.1)?)
            }
            ProfileMode::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return invalid("monte_carlo mode needs samples >= 1");
                }
                let mut rng = RngStream::new(seed, l as u64);
                let mut top = (f64::NEG_INFINITY, None);
                for _ in 0..samples {
                    let mut idx: Vec<u32> = rand::seq::index::sample(&mut rng, planted.len(), l as usize)
                        .into_iter()
                        .map(|i| planted[i])
                        .collect();
                    idx.extend(
                        rand::seq::index::sample(&mut rng, outer.len(), (k - l) as usize).into_iter().map(|i| outer[i]),
                    );
                    let s = Support::new(p, idx)?;
                    let h = inst.hamiltonian(&s)?;
                    if h > top.0 {
                        top = (h, Some(s));
                    }
                }
                (top.0, top.1.expect("at least one sample"))
            }
        };
        gamma.push(value);
        best.push(arg);
    }
    let gamma_prefix_max = gamma
        .iter()
        .scan(f64::NEG_INFINITY, |acc, &g| {
            *acc = acc.max(g);
            Some(*acc)
        })
        .collect();
    Ok(GammaProfile { ell: ells, gamma, gamma_prefix_max, best, mode })
}

/// Raw-noise incidence sums; `t = 2` uses a local symmetrized copy of the matrix.
type IncidenceFn<'a> = Box<dyn Fn(u32, &[u32]) -> f64 + 'a>;

fn incidence_fn(inst: &GamInstance) -> IncidenceFn<'_> {
    if inst.t() == 2 {
        let p = inst.p() as usize;
        let mut sym = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                let w = inst.noise_entry(&[a as u32, b as u32]);
                if a == b {
                    sym[a * p + a] += w;
                } else {
                    sym[a * p + b] += w;
                    sym[b * p + a] += w;
                }
            }
        }
        Box::new(move |e, chosen| {
            let row = &sym[e as usize * p..(e as usize + 1) * p];
            row[e as usize] + chosen.iter().map(|&c| row[c as usize]).sum::<f64>()
        })
    } else {
        Box::new(move |e, chosen| inst.raw_incidence_sum(e, chosen))
    }
}

/// `floor((k^{t-1/2} / (32 lambda sqrt(log(p/k))))^{1/(t-1)})`, clamped to `[0, k]`.
pub fn ell_star(lambda: f64, k: u32, p: u32, t: u32) -> Result<u32> {
    if t < 2 || k == 0 || k >= p || !(lambda > 0.0) {
        return invalid(format!("need t >= 2, 0 < k < p, lambda > 0 (t={t}, k={k}, p={p}, lambda={lambda})"));
    }
    let (kf, tf) = (k as f64, t as f64);
    let base = kf.powf(tf - 0.5) / (32.0 * lambda * (p as f64 / kf).ln().sqrt());
    let v = base.powf(1.0 / (tf - 1.0)).floor();
    Ok(v.clamp(0.0, kf) as u32)
}

/// `log(C(k,l) C(p-k,k-l)) - log C(p,k)`: log-probability that a uniform support has overlap `l`.
pub fn binom_gap(p: u32, k: u32, ell: u32) -> Result<f64> {
    if ell > k || k > p {
        return invalid(format!("need 0 <= ell <= k <= p, got ell={ell}, k={k}, p={p}"));
    }
    let (p, k, l) = (p as u64, k as u64, ell as u64);
    Ok(ln_binomial(k, l) + ln_binomial(p - k, k - l) - ln_binomial(p, k))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmLm {
    pub k_m: f64,
    pub l_m: f64,
}

/// The two second-moment weights at overlap `m`, evaluated in log space.
pub fn km_lm(p: u32, k: u32, t: u32, m: u32) -> Result<KmLm> {
    if m >= k {
        return invalid(format!("m must be < k (1 - m^t/k^t vanishes at m = k), got m={m}, k={k}"));
    }
    if k > p || t < 2 {
        return invalid(format!("need k <= p and t >= 2, got k={k}, p={p}, t={t}"));
    }
    let (kf, mf) = (k as f64, m as f64);
    let ratio = (mf / kf).powi(t as i32);
    let weight = ratio / (1.0 + ratio); // m^t / (k^t + m^t)
    let log_k = 1.5 * ratio.ln_1p() - 0.5 * (-ratio).ln_1p() - weight * kf.ln();
    let log_choose = ln_binomial(p as u64, k as u64);
    let log_l = ln_binomial(k as u64, m as u64) + ln_binomial((p - k) as u64, (k - m) as u64)
        - (1.0 - ratio) / (1.0 + ratio) * log_choose;
    Ok(KmLm { k_m: log_k.exp(), l_m: log_l.exp() })
}

/// Default slowly growing sequence `3 log log p`.
pub fn default_a_p(p: u32) -> f64 {
    3.0 * (p as f64).ln().ln()
}

/// Predicted high-probability upper bound on the shell maximum at overlap `ell` (normalized
/// scaling, monomial link). `None` if the square-root argument is negative.
pub fn shell_upper_bound(lambda: f64, p: u32, k: u32, t: u32, ell: u32, a_p: f64) -> Option<f64> {
    let (kf, pf) = (k as f64, p as f64);
    let count = ln_binomial(k as u64, ell as u64) + ln_binomial((p - k) as u64, (k - ell) as u64);
    let arg = 2.0 * count - (kf * (pf / kf).ln()).ln() + a_p;
    (arg >= 0.0).then(|| lambda * (ell as f64 / kf).powi(t as i32) + arg.sqrt())
}

/// Predicted high-probability lower bound on the prefix maximum. `None` if the argument is negative.
pub fn prefix_lower_bound(p: u32, k: u32, a_p: f64) -> Option<f64> {
    let (kf, pf) = (k as f64, p as f64);
    let arg = 2.0 * ln_binomial(p as u64, k as u64) - (kf * (pf / kf).ln()).ln() - a_p;
    (arg >= 0.0).then(|| arg.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub flat: bool,
    /// Smallest `bound - |deviation|` over `ell = 1..k-1` (the end points are identically zero).
    pub worst_margin: f64,
    pub worst_ell: u32,
}

pub const FLATNESS_MAX_K: u32 = 22;

/// Checks `|s'Ws - (l/k)^2 x'Wx| <= 2 sqrt((k^2 - l^2) log C(k,l))` for every sub-support `s` of `x`.
pub fn flatness_check(inst: &GamInstance, x: &Support) -> Result<FlatnessReport> {
    if inst.t() != 2 {
        return invalid("flatness is defined for t = 2");
    }
    let k = x.k();
    if k > FLATNESS_MAX_K {
        return Err(Error::Resource(format!("k = {k} exceeds the enumeration limit {FLATNESS_MAX_K}")));
    }
    if x.p() != inst.p() {
        return invalid("support dimension does not match the instance");
    }
    let kf = k as f64;
    let total = inst.raw_noise_sum(x.indices());
    let incidence = incidence_fn(inst);
    let walker = ShellWalker { incidence: &*incidence };
    let mut report = FlatnessReport { flat: true, worst_margin: f64::INFINITY, worst_ell: 0 };
    for ell in 1..k {
        let lf = ell as f64;
        let bound = 2.0 * ((kf * kf - lf * lf) * ln_binomial(k as u64, ell as u64)).sqrt();
        let share = (lf / kf).powi(2) * total;
        let mut worst = f64::INFINITY;
        walker.walk(x.indices(), ell as usize, &mut Vec::new(), 0.0, &mut |_, sub| {
            worst = worst.min(bound - (sub - share).abs());
        });
        if worst < report.worst_margin {
            report.worst_margin = worst;
            report.worst_ell = ell;
        }
    }
    report.flat = report.worst_margin >= 0.0;
    Ok(report)
}

/// Region of the overlap partition, by mismatch fraction `|v - v*|_0 / (2k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapRegion {
    /// Mismatch fraction above `zeta2`.
    Low,
    Medium,
    /// Mismatch fraction below `zeta1`.
    High,
}

/// Computable pieces of the regression bottleneck argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionBottleneck {
    pub k: u32,
    pub p: u32,
    pub n: u32,
    pub sigma2: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub mu: f64,
    pub alpha: f64,
}

pub const DEFAULT_MU: f64 = 0.95;
pub const DEFAULT_ETA: f64 = 0.1;

/// `(1 + eta) / (2 + eta)`.
pub fn alpha_from_eta(eta: f64) -> f64 {
    (1.0 + eta) / (2.0 + eta)
}

/// `(0.1, 0.8)` with the upper end pulled strictly below `0.9 - alpha`.
pub fn default_zetas(alpha: f64) -> (f64, f64) {
    let cap = 0.99 * (0.9 - alpha);
    (0.1f64.min(0.5 * cap), 0.8f64.min(cap))
}

impl RegressionBottleneck {
    pub fn new(k: u32, p: u32, n: u32, sigma2: f64, zeta1: f64, zeta2: f64) -> Result<Self> {
        if k == 0 || k >= p || n == 0 {
            return invalid(format!("need 0 < k < p and n > 0, got k={k}, p={p}, n={n}"));
        }
        if !(sigma2 >= 0.0) {
            return invalid("sigma2 must be >= 0");
        }
        if !(0.0 < zeta1 && zeta1 < zeta2 && zeta2 < 1.0) {
            return Err(Error::InvalidInput(format!("need 0 < zeta1 < zeta2 < 1, got [{zeta1}, {zeta2}]")));
        }
        Ok(RegressionBottleneck { k, p, n, sigma2, zeta1, zeta2, mu: DEFAULT_MU, alpha: alpha_from_eta(DEFAULT_ETA) })
    }

    pub fn with_defaults(k: u32, p: u32, n: u32, sigma2: f64) -> Result<Self> {
        let (z1, z2) = default_zetas(alpha_from_eta(DEFAULT_ETA));
        Self::new(k, p, n, sigma2, z1, z2)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.alpha = alpha_from_eta(eta);
        self
    }

    fn rate(&self) -> f64 {
        self.k as f64 * (self.p as f64 / self.k as f64).ln() / self.n as f64
    }

    /// `sqrt(2 zeta k + sigma2) exp(-zeta k log(p/k) / n)`.
    pub fn gamma(&self, zeta: f64) -> f64 {
        (2.0 * zeta * self.k as f64 + self.sigma2).sqrt() * (-zeta * self.rate()).exp()
    }

    /// Minimizer of `gamma` on `[zeta1, zeta2]`. `log gamma` is concave, so it is an end point.
    pub fn zeta_star(&self) -> f64 {
        if self.gamma(self.zeta1) <= self.gamma(self.zeta2) {
            self.zeta1
        } else {
            self.zeta2
        }
    }

    /// Lower bound on the best normalized residual among supports with `ell` mismatched indices.
    pub fn phi2_lower(&self, ell: u32) -> f64 {
        let lf = ell as f64;
        (-1.5f64).exp() * (2.0 * lf + self.sigma2).sqrt() * (-lf * (self.p as f64 / self.k as f64).ln() / self.n as f64).exp()
    }

    /// The bracketed energy gap `M` of the ratio bound.
    pub fn energy_gap(&self) -> f64 {
        let (kf, zs) = (self.k as f64, self.zeta_star());
        (-3f64).exp() * zs * (2.0 * kf + self.sigma2) * (-2.0 * zs * self.rate()).exp()
            - (2.0 * self.mu * kf + self.sigma2) * (-2.0 * (self.mu - self.alpha) * self.rate()).exp()
    }

    /// Log of the bound on `pi_beta(A1) / pi_beta(A0)`.
    pub fn log_ratio_bound(&self, beta: f64) -> f64 {
        let (kf, pf) = (self.k as f64, self.p as f64);
        kf * (pf * std::f64::consts::E / kf).ln() - self.alpha / 5.0 * kf * (pf / kf).ln()
            - beta * self.n as f64 * self.energy_gap()
    }

    pub fn region(&self, mismatched: u32) -> OverlapRegion {
        let frac = mismatched as f64 / self.k as f64;
        if frac > self.zeta2 {
            OverlapRegion::Low
        } else if frac < self.zeta1 {
            OverlapRegion::High
        } else {
            OverlapRegion::Medium
        }
    }
}

/// Exact `min n^{-1/2} ||Y - Xv||` over supports with `ell` indices outside the planted one.
pub fn exact_phi2(inst: &RegressionInstance, ell: u32, shell_budget: u64) -> Result<f64> {
    let (p, k) = (inst.p(), inst.k());
    if ell > k || ell > p - k {
        return invalid(format!("no support has {ell} mismatches at p={p}, k={k}"));
    }
    let size = shell_size(p, k, k - ell).unwrap_or(u64::MAX);
    if size > shell_budget {
        return Err(Error::Resource(format!("{size} supports exceed the budget {shell_budget}")));
    }
    let zero = |_: u32, _: &[u32]| 0.0;
    let walker = ShellWalker { incidence: &zero };
    let planted = inst.planted().indices().to_vec();
    let outer = inst.planted().complement();
    let mut best = f64::INFINITY;
    let mut failure = None;
    walker.shell(&planted, &outer, (k - ell) as usize, k as usize, &mut |chosen, _| {
        match Support::new(p, chosen.to_vec()).and_then(|s| inst.hamiltonian(&s)) {
            Ok(h) => best = best.min(-h),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((best / inst.n() as f64).sqrt())
}

/// State ranks of a table grouped by overlap with `reference`.
pub fn overlap_shells(table: &HamiltonianTable, reference: &Support) -> Result<Vec<Vec<usize>>> {
    let mut shells = vec![Vec::new(); reference.k() as usize + 1];
    for r in 0..table.len() {
        shells[overlap(&table.state(r), reference)? as usize].push(r);
    }
    Ok(shells)
}
