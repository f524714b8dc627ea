//! Gaussian sparse linear regression with a binary planted signal.
//!
//! `Y = X v* + W`, `X` iid standard normal, `W ~ N(0, sigma2 I)`, and `H(v) = -||Y - X v||^2`.
//! The design is stored column-major: a swap touches two columns, so the `O(n)` delta reads
//! contiguous memory. Entries are keyed by their row-major position, so the values do not
//! depend on the storage layout.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{csv_error, Model, TraceRow};
use crate::error::{invalid, Error, Result};
use crate::rng::{streams, RngStream};
use crate::support::{overlap, random_support, Support, SwapMove};

/// Default cap on `n * p` design entries.
pub const DEFAULT_DESIGN_BUDGET: u64 = 200_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    pub n: u32,
    pub p: u32,
    pub k: u32,
    pub sigma2: f64,
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub design_budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_DESIGN_BUDGET
}

impl RegressionParams {
    pub fn new(n: u32, p: u32, k: u32, sigma2: f64, seed: u64) -> Self {
        RegressionParams { n, p, k, sigma2, seed, design_budget: DEFAULT_DESIGN_BUDGET }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionHeader {
    pub params: RegressionParams,
    pub planted: Support,
}

#[derive(Clone, Debug)]
pub struct RegressionInstance {
    params: RegressionParams,
    planted: Support,
    /// Column-major, column `j` at `j*n .. (j+1)*n`.
    design: Vec<f64>,
    column_norms: Vec<f64>,
    response: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCache {
    pub support: Support,
    /// `Y - X v`.
    pub residual: Vec<f64>,
    /// `-||residual||^2`.
    pub h_value: f64,
}

pub fn generate_regression(n: u32, p: u32, k: u32, sigma2: f64, seed: u64) -> Result<RegressionInstance> {
    RegressionInstance::generate(RegressionParams::new(n, p, k, sigma2, seed))
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RegressionInstance {
    pub fn generate(params: RegressionParams) -> Result<Self> {
        let mut rng = RngStream::new(params.seed, streams::PLANTED);
        let planted = random_support(params.p, params.k, &mut rng)?;
        Self::with_planted(params, planted)
    }

    pub fn with_planted(params: RegressionParams, planted: Support) -> Result<Self> {
        let RegressionParams { n, p, k, sigma2, seed, design_budget } = params;
        if n == 0 {
            return invalid("n must be >= 1");
        }
        if k == 0 || k > p {
            return invalid(format!("need 1 <= k <= p, got k={k}, p={p}"));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return invalid(format!("sigma2 must be finite and >= 0, got {sigma2}"));
        }
        if planted.p() != p || planted.k() != k {
            return invalid("planted support does not match (p, k)");
        }
        let entries = n as u64 * p as u64;
        if entries > design_budget {
            return Err(Error::Resource(format!("design needs {entries} entries, budget is {design_budget}")));
        }
        let (n, p) = (n as usize, p as usize);
        let design_rng = RngStream::new(seed, streams::DESIGN);
        let mut design = vec![0.0; n * p];
        for j in 0..p {
            for i in 0..n {
                design[j * n + i] = design_rng.gaussian((i * p + j) as u64);
            }
        }
        let column_norms = design.chunks_exact(n).map(sq_norm).collect();
        let noise_rng = RngStream::new(seed, streams::NOISE);
        let sigma = sigma2.sqrt();
        let mut inst = RegressionInstance { params, planted, design, column_norms, response: Vec::new() };
        let signal = inst.fitted(inst.planted.indices());
        inst.response = signal.iter().enumerate().map(|(i, s)| s + sigma * noise_rng.gaussian(i as u64)).collect();
        Ok(inst)
    }

    pub fn from_header(header: &RegressionHeader) -> Result<Self> {
        Self::with_planted(header.params.clone(), header.planted.clone())
    }

    pub fn header(&self) -> RegressionHeader {
        RegressionHeader { params: self.params.clone(), planted: self.planted.clone() }
    }

    pub fn params(&self) -> &RegressionParams {
        &self.params
    }

    pub fn n(&self) -> u32 {
        self.params.n
    }

    pub fn p(&self) -> u32 {
        self.params.p
    }

    pub fn k(&self) -> u32 {
        self.params.k
    }

    pub fn planted(&self) -> &Support {
        &self.planted
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column(&self, j: u32) -> &[f64] {
        let n = self.params.n as usize;
        &self.design[j as usize * n..(j as usize + 1) * n]
    }

    /// `X[i, j]`.
    pub fn entry(&self, i: u32, j: u32) -> f64 {
        self.column(j)[i as usize]
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

    /// `Y - X v` computed from scratch.
    pub fn residual(&self, s: &Support) -> Result<Vec<f64>> {
        self.check_support(s)?;
        let fitted = self.fitted(s.indices());
        Ok(self.response.iter().zip(fitted).map(|(y, f)| y - f).collect())
    }

    /// `X v` for the 0/1 vector with the given support.
    fn fitted(&self, support: &[u32]) -> Vec<f64> {
        let mut acc = vec![0.0; self.params.n as usize];
        for &j in support {
            acc.iter_mut().zip(self.column(j)).for_each(|(a, x)| *a += x);
        }
        acc
    }

    pub fn hamiltonian(&self, s: &Support) -> Result<f64> {
        Ok(-sq_norm(&self.residual(s)?))
    }

    pub fn cache(&self, s: Support) -> Result<ResidualCache> {
        let residual = self.residual(&s)?;
        Ok(ResidualCache { h_value: -sq_norm(&residual), residual, support: s })
    }

    fn delta_unchecked(&self, cache: &ResidualCache, m: SwapMove) -> f64 {
        let (xo, xi) = (self.column(m.out_index), self.column(m.in_index));
        let mut acc = 0.0;
        for ((r, a), b) in cache.residual.iter().zip(xo).zip(xi) {
            let d = a - b;
            acc += d * (2.0 * r + d);
        }
        -acc
    }

    /// `||r||^2 - ||r + X_out - X_in||^2` in `O(n)`.
    pub fn delta_hamiltonian(&self, cache: &ResidualCache, m: SwapMove) -> Result<f64> {
        cache.support.check_move(m)?;
        Ok(self.delta_unchecked(cache, m))
    }

    pub fn commit(&self, cache: &mut ResidualCache, m: SwapMove, delta: f64) {
        let (xo, xi) = (self.column(m.out_index), self.column(m.in_index));
        for ((r, a), b) in cache.residual.iter_mut().zip(xo).zip(xi) {
            *r += a - b;
        }
        cache.h_value += delta;
        cache.support.apply_in_place(m);
    }

    /// CSV with header `y,x0,..,x{p-1}`, one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y".to_string()];
        header.extend((0..self.params.p).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(csv_error)?;
        for i in 0..self.params.n {
            let mut row = vec![self.response[i as usize].to_string()];
            row.extend((0..self.params.p).map(|j| self.entry(i, j).to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Model for RegressionInstance {
    type Cache = ResidualCache;

    fn planted(&self) -> &Support {
        &self.planted
    }

    fn init(&self, s: Support) -> Result<ResidualCache> {
        self.cache(s)
    }

    fn support<'c>(&self, cache: &'c ResidualCache) -> &'c Support {
        &cache.support
    }

    fn h_value(&self, cache: &ResidualCache) -> f64 {
        cache.h_value
    }

    fn delta(&self, cache: &ResidualCache, m: SwapMove) -> f64 {
        self.delta_unchecked(cache, m)
    }

    fn commit(&self, cache: &mut ResidualCache, m: SwapMove, delta: f64) {
        RegressionInstance::commit(self, cache, m, delta)
    }

    fn hamiltonian(&self, s: &Support) -> Result<f64> {
        RegressionInstance::hamiltonian(self, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlsaStep {
    /// `None` when no swap strictly lowers the error.
    pub mv: Option<SwapMove>,
    pub new_error: f64,
}

/// Best single column replacement. Columns already in the support are skipped: they can not
/// enter, and replacing a column by itself leaves the error unchanged. Ties go to the
/// lexicographically smallest `(out, in)`.
pub fn blsa_step(inst: &RegressionInstance, cache: &ResidualCache) -> BlsaStep {
    let current = sq_norm(&cache.residual);
    let absent = cache.support.complement();
    let mut best: Option<(f64, SwapMove)> = None;
    let mut shifted = vec![0.0; cache.residual.len()];
    for &i in cache.support.indices() {
        shifted.iter_mut().zip(&cache.residual).zip(inst.column(i)).for_each(|((u, r), x)| *u = r + x);
        let base = sq_norm(&shifted);
        for &j in &absent {
            let err = base - 2.0 * dot(&shifted, inst.column(j)) + inst.column_norms[j as usize];
            if err < current && best.is_none_or(|(b, _)| err < b) {
                best = Some((err, SwapMove::new(i, j)));
            }
        }
    }
    match best {
        Some((err, m)) => BlsaStep { mv: Some(m), new_error: err },
        None => BlsaStep { mv: None, new_error: current },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlsaRun {
    /// Iteration 0 plus one row per accepted swap; `h_value` is minus the error.
    pub rows: Vec<TraceRow>,
    /// Error decrease of each accepted swap.
    pub decreases: Vec<f64>,
    pub final_support: Support,
    /// False if the iteration budget ran out first.
    pub terminated: bool,
}

impl BlsaRun {
    pub fn iterations(&self) -> usize {
        self.decreases.len()
    }
}

/// Iterates [`blsa_step`] until no strict improvement exists or `max_iters` swaps were made.
pub fn run_blsa(inst: &RegressionInstance, init: Support, max_iters: u64) -> Result<BlsaRun> {
    if max_iters == 0 {
        return invalid("max_iters must be >= 1");
    }
    let mut cache = inst.cache(init)?;
    let kf = inst.k() as f64;
    let row = |it: u64, c: &ResidualCache| -> Result<TraceRow> {
        Ok(TraceRow {
            iter: it,
            overlap_fraction: overlap(&c.support, &inst.planted)? as f64 / kf,
            h_value: c.h_value,
        })
    };
    let mut rows = vec![row(0, &cache)?];
    let mut decreases = Vec::new();
    let mut terminated = false;
    for it in 1..=max_iters {
        let step = blsa_step(inst, &cache);
        let Some(m) = step.mv else {
            terminated = true;
            break;
        };
        let before = -cache.h_value;
        let delta = inst.delta_unchecked(&cache, m);
        inst.commit(&mut cache, m, delta);
        let after = -cache.h_value;
        decreases.push(before - after);
        rows.push(row(it, &cache)?);
    }
    if !terminated {
        terminated = blsa_step(inst, &cache).mv.is_none();
    }
    Ok(BlsaRun { rows, decreases, final_support: cache.support, terminated })
}
