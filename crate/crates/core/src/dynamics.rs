//! Metropolis chain on the Johnson graph, its greedy limit, and the run loop.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::rng::{derive_seed, streams, RngStream};
use crate::support::{random_support, Support, SwapMove};

/// A Hamiltonian on k-subsets with an incremental cache.
///
/// `delta` and `commit` receive moves that are valid for the cached support.
pub trait Model: Sync {
    type Cache: Clone + Send;

    fn planted(&self) -> &Support;
    fn init(&self, s: Support) -> Result<Self::Cache>;
    fn support<'c>(&self, cache: &'c Self::Cache) -> &'c Support;
    fn h_value(&self, cache: &Self::Cache) -> f64;
    fn delta(&self, cache: &Self::Cache, m: SwapMove) -> f64;
    fn commit(&self, cache: &mut Self::Cache, m: SwapMove, delta: f64);
    /// Full recomputation, for checks.
    fn hamiltonian(&self, s: &Support) -> Result<f64>;

    fn overlap(&self, cache: &Self::Cache) -> u32 {
        crate::support::overlap(self.support(cache), self.planted()).unwrap_or(0)
    }
}

/// Inverse temperature; `+inf` is the randomized greedy limit. Serialized as a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Beta(pub f64);

impl Beta {
    pub const INFINITE: Beta = Beta(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn validate(self) -> Result<()> {
        if self.0.is_nan() || self.0 <= 0.0 {
            return invalid(format!("beta must be > 0, got {}", self.0));
        }
        Ok(())
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Beta {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "Infinity" => Ok(Beta::INFINITE),
            other => other.parse::<f64>().map(Beta).map_err(|e| format!("bad beta {other:?}: {e}")),
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Beta(x)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub beta: Beta,
    pub max_iters: u64,
    pub halt_on_recovery: bool,
    pub record_every: u64,
    pub seed: u64,
    pub replica_id: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            beta: Beta(1.0),
            max_iters: 1_000_000,
            halt_on_recovery: true,
            record_every: 100,
            seed: 0,
            replica_id: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        if self.record_every == 0 {
            return invalid("record_every must be >= 1");
        }
        Ok(())
    }

    fn stream_seed(&self) -> u64 {
        derive_seed(&[self.seed, self.replica_id])
    }
}

/// How the chain is started.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Random,
    Given(Support),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// `None` only when the support is the whole ground set.
    pub proposal: Option<SwapMove>,
    pub delta: f64,
}

/// `min{1, exp(beta * delta)}`, with the `beta = inf` limit (1 if `delta >= 0`, else 0).
pub fn acceptance_probability(delta: f64, beta: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else if beta == f64::INFINITY {
        0.0
    } else {
        (beta * delta).exp()
    }
}

fn step_with<M: Model>(model: &M, cache: &mut M::Cache, beta: f64, rng: &mut RngStream) -> StepOutcome {
    let Some(m) = model.support(cache).propose(rng) else {
        return StepOutcome { accepted: false, proposal: None, delta: 0.0 };
    };
    let delta = model.delta(cache, m);
    let accepted = delta >= 0.0 || (beta.is_finite() && rng.unit() < (beta * delta).exp());
    if accepted {
        model.commit(cache, m, delta);
    }
    StepOutcome { accepted, proposal: Some(m), delta }
}

/// One Metropolis step: uniform neighbor proposal, accept with `min{1, exp(beta dH)}`.
pub fn metropolis_step<M: Model>(
    model: &M,
    cache: &mut M::Cache,
    beta: f64,
    rng: &mut RngStream,
) -> Result<StepOutcome> {
    Beta(beta).validate()?;
    Ok(step_with(model, cache, beta, rng))
}

/// One randomized-greedy step: accept iff `dH >= 0`.
pub fn greedy_step<M: Model>(model: &M, cache: &mut M::Cache, rng: &mut RngStream) -> StepOutcome {
    step_with(model, cache, f64::INFINITY, rng)
}

/// A running chain: model, cached state, stream, and iteration counter.
pub struct ChainState<'m, M: Model> {
    model: &'m M,
    pub cache: M::Cache,
    pub rng: RngStream,
    pub iteration: u64,
}

impl<'m, M: Model> ChainState<'m, M> {
    pub fn new(model: &'m M, config: &ChainConfig, init: Init) -> Result<Self> {
        config.validate()?;
        let seed = config.stream_seed();
        let start = match init {
            Init::Given(s) => s,
            Init::Random => {
                let planted = model.planted();
                random_support(planted.p(), planted.k(), &mut RngStream::new(seed, streams::SAMPLING))?
            }
        };
        let cache = model.init(start)?;
        Ok(ChainState { model, cache, rng: RngStream::new(seed, streams::CHAIN), iteration: 0 })
    }

    pub fn step(&mut self, beta: Beta) -> StepOutcome {
        self.iteration += 1;
        step_with(self.model, &mut self.cache, beta.0, &mut self.rng)
    }

    pub fn support(&self) -> &Support {
        self.model.support(&self.cache)
    }

    pub fn h_value(&self) -> f64 {
        self.model.h_value(&self.cache)
    }

    pub fn overlap(&self) -> u32 {
        self.model.overlap(&self.cache)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u64,
    pub overlap_fraction: f64,
    pub h_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Recovered { iteration: u64 },
    Censored { max_iters: u64 },
}

impl Outcome {
    pub fn recovered(&self) -> Option<u64> {
        match self {
            Outcome::Recovered { iteration } => Some(*iteration),
            Outcome::Censored { .. } => None,
        }
    }

    /// Recovery time with censored runs replaced by `censor_at`.
    pub fn censored_time(&self, censor_at: u64) -> u64 {
        self.recovered().map_or(censor_at, |i| i.min(censor_at))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub outcome: Outcome,
    pub final_support: Support,
    /// Largest overlap seen at any iteration, recorded or not.
    pub max_overlap: u32,
    pub accepted: u64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    outcome: &'a Outcome,
    final_support: &'a Support,
    max_overlap: u32,
    accepted: u64,
    rows: usize,
}

impl Trace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            outcome: &self.outcome,
            final_support: &self.final_support,
            max_overlap: self.max_overlap,
            accepted: self.accepted,
            rows: self.rows.len(),
        })?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.sidecar_json()?)?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::InvalidInput(format!("csv: {other:?}")),
    }
}

/// Runs the chain until recovery (exact support equality) or `max_iters`.
pub fn run_chain<M: Model>(model: &M, config: &ChainConfig, init: Init) -> Result<Trace> {
    let mut chain = ChainState::new(model, config, init)?;
    let k = model.planted().k();
    let kf = k as f64;
    let row = |c: &ChainState<M>| TraceRow {
        iter: c.iteration,
        overlap_fraction: c.overlap() as f64 / kf,
        h_value: c.h_value(),
    };
    let mut rows = vec![row(&chain)];
    let mut overlap = chain.overlap();
    let mut max_overlap = overlap;
    let mut accepted = 0;
    let mut outcome = Outcome::Censored { max_iters: config.max_iters };
    if config.halt_on_recovery && overlap == k {
        outcome = Outcome::Recovered { iteration: 0 };
    } else {
        while chain.iteration < config.max_iters {
            let step = chain.step(config.beta);
            if step.accepted {
                accepted += 1;
                overlap = chain.overlap();
                max_overlap = max_overlap.max(overlap);
            }
            let done = config.halt_on_recovery && overlap == k;
            if done || chain.iteration % config.record_every == 0 {
                rows.push(row(&chain));
            }
            if done {
                outcome = Outcome::Recovered { iteration: chain.iteration };
                break;
            }
        }
        if rows.last().map(|r| r.iter) != Some(chain.iteration) {
            rows.push(row(&chain));
        }
    }
    Ok(Trace { rows, outcome, final_support: chain.support().clone(), max_overlap, accepted })
}

/// True iff every recorded row has overlap at least `k^2 / (10 p)`. A floor below one is
/// treated as vacuous (the sparse regime, where the statement carries no information).
pub fn escape_diagnostic(trace: &Trace, p: u32, k: u32) -> bool {
    let floor = (k as f64).powi(2) / (10.0 * p as f64);
    if floor < 1.0 {
        return true;
    }
    trace.rows.iter().all(|r| r.overlap_fraction * k as f64 >= floor - 1e-12)
}
