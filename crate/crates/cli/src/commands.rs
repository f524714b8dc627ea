use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sparse_mcmc::certificate::{build_ascent_tree, HamiltonianTable, DEFAULT_STATE_BUDGET};
use sparse_mcmc::dynamics::{run_chain, Beta, ChainConfig, Init, Model};
use sparse_mcmc::experiments::{emit_reports, run_sweep, ModelKind, ReportFormats, SweepConfig, SweepResult};
use sparse_mcmc::gam::{GamHeader, GamInstance, GamParams, NoiseMode, Scaling};
use sparse_mcmc::landscape::{
    default_a_p, ell_star, exact_phi2, gamma_profile_with_budget, pca_thresholds, prefix_lower_bound,
    regression_thresholds, shell_upper_bound, ProfileMode, RegressionBottleneck, ThresholdSet, DEFAULT_ETA,
    DEFAULT_MU, DEFAULT_SHELL_BUDGET,
};
use sparse_mcmc::regression::{run_blsa, RegressionHeader, RegressionInstance, RegressionParams};
use sparse_mcmc::Error;

use crate::config::{CliError, CliResult, Layers};

/// Parameters shared by every command that builds a planted instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub model: ModelKind,
    pub p: u32,
    pub k: u32,
    pub t: u32,
    pub lambda: f64,
    pub n: u32,
    pub sigma2: f64,
    pub seed: u64,
    pub scaling: Scaling,
    pub noise_mode: NoiseMode,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            model: ModelKind::Pca,
            p: 200,
            k: 8,
            t: 2,
            lambda: 150.0,
            n: 100,
            sigma2: 0.05,
            seed: 0,
            scaling: Scaling::Normalized,
            noise_mode: NoiseMode::Auto,
        }
    }
}

/// A generated instance, tagged by model. Noise and design are rebuilt from the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InstanceFile {
    Pca(GamHeader),
    Regression(RegressionHeader),
}

pub enum Built {
    Pca(Box<GamInstance>),
    Regression(RegressionInstance),
}

impl InstanceConfig {
    pub fn build(&self) -> CliResult<Built> {
        Ok(match self.model {
            ModelKind::Pca => {
                let params = GamParams::new(self.p, self.k, self.t, self.lambda, self.seed)
                    .scaling(self.scaling)
                    .noise_mode(self.noise_mode);
                Built::Pca(Box::new(GamInstance::generate(params)?))
            }
            ModelKind::Regression => Built::Regression(RegressionInstance::generate(RegressionParams::new(
                self.n,
                self.p,
                self.k,
                self.sigma2,
                self.seed,
            ))?),
        })
    }
}

impl Built {
    fn load(path: &Path) -> CliResult<Built> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("instance: {}: {e}", path.display())))?;
        let file: InstanceFile =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("instance: {}: {e}", path.display())))?;
        Ok(match file {
            InstanceFile::Pca(h) => Built::Pca(Box::new(GamInstance::from_header(&h)?)),
            InstanceFile::Regression(h) => Built::Regression(RegressionInstance::from_header(&h)?),
        })
    }

    fn file(&self) -> InstanceFile {
        match self {
            Built::Pca(inst) => InstanceFile::Pca(inst.header()),
            Built::Regression(inst) => InstanceFile::Regression(inst.header()),
        }
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, config: &impl Serialize) -> CliResult<()> {
    let manifest = json!({
        "software": "sparse-mcmc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    write_json(dir, "manifest.json", &manifest)
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

// gen

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    #[serde(flatten)]
    pub instance: InstanceConfig,
    /// Also write the regression data as CSV.
    pub dump_data: bool,
}

pub fn gen(layers: &Layers, out: &Path) -> CliResult<()> {
    let config: GenConfig = layers.resolve(&GenConfig::default())?;
    let built = config.instance.build()?;
    write_json(out, "instance.json", &built.file())?;
    if let (true, Built::Regression(inst)) = (config.dump_data, &built) {
        inst.write_csv(fs::File::create(out.join("data.csv"))?)?;
    }
    write_manifest(out, "gen", &config)?;
    info!("wrote instance to {}", out.display());
    Ok(())
}

// run

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    Planted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Metropolis,
    /// Best local search (regression only).
    Blsa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub instance: InstanceConfig,
    /// Path to an `instance.json` written by `gen`; overrides the instance parameters.
    pub instance_file: Option<String>,
    pub beta: Beta,
    pub max_iters: u64,
    pub record_every: u64,
    pub halt_on_recovery: bool,
    pub init: InitKind,
    pub algorithm: Algorithm,
    pub replica_id: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let chain = ChainConfig::default();
        RunConfig {
            instance: InstanceConfig::default(),
            instance_file: None,
            beta: Beta(10.0),
            max_iters: chain.max_iters,
            record_every: chain.record_every,
            halt_on_recovery: true,
            init: InitKind::Random,
            algorithm: Algorithm::Metropolis,
            replica_id: 0,
        }
    }
}

fn run_metropolis<M: Model>(model: &M, config: &RunConfig, out: &Path) -> CliResult<()> {
    let chain = ChainConfig {
        beta: config.beta,
        max_iters: config.max_iters,
        halt_on_recovery: config.halt_on_recovery,
        record_every: config.record_every,
        seed: config.instance.seed,
        replica_id: config.replica_id,
    };
    let init = match config.init {
        InitKind::Random => Init::Random,
        InitKind::Planted => Init::Given(model.planted().clone()),
    };
    let trace = run_chain(model, &chain, init)?;
    trace.save(out, "trace")?;
    print_json(&json!({
        "outcome": trace.outcome,
        "max_overlap": trace.max_overlap,
        "accepted": trace.accepted,
        "final_support": trace.final_support,
    }))
}

pub fn run(layers: &Layers, out: &Path) -> CliResult<()> {
    let config: RunConfig = layers.resolve(&RunConfig::default())?;
    let built = match &config.instance_file {
        Some(path) => Built::load(Path::new(path))?,
        None => config.instance.build()?,
    };
    write_manifest(out, "run", &config)?;
    write_json(out, "instance.json", &built.file())?;
    match (&built, config.algorithm) {
        (Built::Pca(inst), Algorithm::Metropolis) => run_metropolis(inst.as_ref(), &config, out),
        (Built::Regression(inst), Algorithm::Metropolis) => run_metropolis(inst, &config, out),
        (Built::Regression(inst), Algorithm::Blsa) => {
            let init = match config.init {
                InitKind::Random => {
                    let mut rng = sparse_mcmc::RngStream::new(config.instance.seed, 4);
                    sparse_mcmc::random_support(inst.p(), inst.k(), &mut rng)?
                }
                InitKind::Planted => inst.planted().clone(),
            };
            let result = run_blsa(inst, init, config.max_iters)?;
            write_json(out, "blsa.json", &result)?;
            print_json(&json!({
                "terminated": result.terminated,
                "iterations": result.iterations(),
                "reached_planted": &result.final_support == inst.planted(),
                "final_support": result.final_support,
            }))
        }
        (Built::Pca(_), Algorithm::Blsa) => {
            Err(CliError::Config("algorithm: blsa needs the regression model".into()))
        }
    }
}

// sweep

pub fn sweep(layers: &Layers, out: &Path) -> CliResult<()> {
    let base = match layers.peek("model").and_then(|v| v.as_str()) {
        Some("regression") => SweepConfig::regression(),
        _ => SweepConfig::pca(),
    };
    let config: SweepConfig = layers.resolve(&base)?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let result = run_sweep(&config)?;
    let failed: Vec<&str> =
        result.points.iter().flat_map(|p| &p.replicas).filter_map(|r| r.error.as_deref()).collect();
    if let Some(first) = failed.first() {
        warn!("{} replicas failed; first error: {first}", failed.len());
    }
    let files = emit_reports(&result, out, ReportFormats::default())?;
    info!("wrote {} files to {}", files.len(), out.display());
    let total = result.points.iter().map(|p| p.replicas.len()).sum::<usize>();
    if total > 0 && failed.len() == total {
        let first = failed[0];
        return Err(if first.contains("resource") { CliError::Resource(first.into()) } else { CliError::Failure(first.into()) });
    }
    for point in &result.points {
        println!(
            "{}\t{}",
            point.grid_value,
            point.median_censored_time.map_or("failed".to_string(), |m| m.to_string())
        );
    }
    Ok(())
}

// certify

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    #[serde(flatten)]
    pub instance: InstanceConfig,
    pub state_budget: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            instance: InstanceConfig { p: 8, k: 2, lambda: 30.0, n: 10, ..InstanceConfig::default() },
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }
}

fn tabulate<M: Model>(model: &M, budget: u64) -> CliResult<HamiltonianTable> {
    let planted = model.planted();
    Ok(HamiltonianTable::from_fn(planted.p(), planted.k(), budget, |s| model.hamiltonian(s))?)
}

pub fn certify(layers: &Layers, out: Option<&Path>) -> CliResult<()> {
    let config: CertifyConfig = layers.resolve(&CertifyConfig::default())?;
    let (table, planted) = match config.instance.build()? {
        Built::Pca(inst) => (tabulate(inst.as_ref(), config.state_budget)?, inst.planted().clone()),
        Built::Regression(inst) => (tabulate(&inst, config.state_budget)?, inst.planted().clone()),
    };
    match build_ascent_tree(&table) {
        Ok(report) => {
            if let Some(dir) = out {
                write_manifest(dir, "certify", &config)?;
                write_json(dir, "certificate.json", &report)?;
                fs::write(dir.join("ascent.dot"), report.to_dot(&table))?;
            }
            if report.root != planted {
                warn!("the global maximizer differs from the planted support");
            }
            println!("{}", report.to_json()?);
            Ok(())
        }
        Err(Error::Trapped { state }) => {
            warn!("no certificate: {state:?} is a competing local maximum");
            let body = json!({ "certified": false, "trapped_state": state, "n_states": table.len() });
            if let Some(dir) = out {
                write_manifest(dir, "certify", &config)?;
                write_json(dir, "certificate.json", &body)?;
            }
            print_json(&body)
        }
        Err(e) => Err(e.into()),
    }
}

// landscape

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeConfig {
    #[serde(flatten)]
    pub instance: InstanceConfig,
    /// Largest overlap (PCA) or mismatch count (regression) to evaluate; `None` means `k`.
    pub ell_max: Option<u32>,
    pub mode: ProfileKind,
    pub samples: u64,
    pub shell_budget: u64,
    /// Defaults to `3 log log p`.
    pub a_p: Option<f64>,
    pub beta: f64,
    pub mu: f64,
    pub eta: f64,
    pub zeta1: Option<f64>,
    pub zeta2: Option<f64>,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            instance: InstanceConfig { p: 30, k: 4, lambda: 5.0, n: 20, ..InstanceConfig::default() },
            ell_max: None,
            mode: ProfileKind::Exact,
            samples: 10_000,
            shell_budget: DEFAULT_SHELL_BUDGET,
            a_p: None,
            beta: 100.0,
            mu: DEFAULT_MU,
            eta: DEFAULT_ETA,
            zeta1: None,
            zeta2: None,
        }
    }
}

pub fn landscape(layers: &Layers, out: Option<&Path>) -> CliResult<()> {
    let config: LandscapeConfig = layers.resolve(&LandscapeConfig::default())?;
    let inst_cfg = &config.instance;
    let (p, k) = (inst_cfg.p, inst_cfg.k);
    let ell_max = config.ell_max.unwrap_or(k).min(k);
    let mode = match config.mode {
        ProfileKind::Exact => ProfileMode::Exact,
        ProfileKind::MonteCarlo => ProfileMode::MonteCarlo { samples: config.samples, seed: inst_cfg.seed },
    };
    let body = match config.instance.build()? {
        Built::Pca(inst) => {
            let profile = gamma_profile_with_budget(&inst, ell_max, mode, config.shell_budget)?;
            let a_p = config.a_p.unwrap_or_else(|| default_a_p(p));
            let bounds: Vec<Option<f64>> =
                profile.ell.iter().map(|&l| shell_upper_bound(inst_cfg.lambda, p, k, inst_cfg.t, l, a_p)).collect();
            json!({
                "model": "pca",
                "ell_star": ell_star(inst_cfg.lambda, k, p, inst_cfg.t).ok(),
                "a_p": a_p,
                "profile": profile,
                "shell_upper_bound": bounds,
                "prefix_lower_bound": prefix_lower_bound(p, k, a_p),
                "thresholds": pca_thresholds(inst_cfg.t, k, p)?,
            })
        }
        Built::Regression(inst) => {
            let mut bottleneck = match (config.zeta1, config.zeta2) {
                (None, None) => RegressionBottleneck::with_defaults(k, p, inst_cfg.n, inst_cfg.sigma2)?,
                (z1, z2) => {
                    let (d1, d2) = sparse_mcmc::landscape::default_zetas(sparse_mcmc::landscape::alpha_from_eta(config.eta));
                    RegressionBottleneck::new(k, p, inst_cfg.n, inst_cfg.sigma2, z1.unwrap_or(d1), z2.unwrap_or(d2))?
                }
            };
            bottleneck = bottleneck.with_mu(config.mu).with_eta(config.eta);
            let mut rows = Vec::new();
            for ell in 0..=ell_max.min(p - k) {
                let exact = match config.mode {
                    ProfileKind::Exact => Some(exact_phi2(&inst, ell, config.shell_budget)?),
                    ProfileKind::MonteCarlo => None,
                };
                rows.push(json!({
                    "mismatched": ell,
                    "region": bottleneck.region(ell),
                    "phi2_lower": bottleneck.phi2_lower(ell),
                    "phi2_exact": exact,
                }));
            }
            let zeta_star = bottleneck.zeta_star();
            json!({
                "model": "regression",
                "bottleneck": bottleneck,
                "zeta_star": zeta_star,
                "gamma_at_zeta_star": bottleneck.gamma(zeta_star),
                "energy_gap": bottleneck.energy_gap(),
                "beta": config.beta,
                "log_ratio_bound": bottleneck.log_ratio_bound(config.beta),
                "shells": rows,
                "thresholds": regression_thresholds(k, p, inst_cfg.sigma2)?,
            })
        }
    };
    if let Some(dir) = out {
        write_manifest(dir, "landscape", &config)?;
        write_json(dir, "landscape.json", &body)?;
    }
    print_json(&body)
}

// thresholds

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdsConfig {
    pub model: ModelKind,
    pub t: u32,
    pub k: u32,
    pub p: u32,
    pub sigma2: f64,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        ThresholdsConfig { model: ModelKind::Pca, t: 2, k: 15, p: 3500, sigma2: 0.05 }
    }
}

/// Rounds to three decimals and drops trailing zeros.
fn short(x: f64) -> String {
    let s = format!("{:.3}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

pub fn render_thresholds(th: &ThresholdSet) -> String {
    match (th.mcmc, th.lasso) {
        (Some(mcmc), _) => format!(
            "stats/alg/mcmc = {}/{}/{}\ngeometric rule residual = {}\nbranch = {}",
            short(th.stats),
            short(th.alg),
            short(mcmc),
            short(th.geometric_residual().unwrap_or(f64::NAN)),
            if th.sparse_branch == Some(true) { "sparse (k^2 <= p)" } else { "dense (k^2 > p)" }
        ),
        (None, Some(lasso)) => {
            format!("stats/alg/lasso = {}/{}/{}", short(th.stats), short(th.alg), short(lasso))
        }
        (None, None) => format!("stats/alg = {}/{}", short(th.stats), short(th.alg)),
    }
}

pub fn thresholds(layers: &Layers, as_json: bool) -> CliResult<()> {
    let config: ThresholdsConfig = layers.resolve(&ThresholdsConfig::default())?;
    let th = match config.model {
        ModelKind::Pca => pca_thresholds(config.t, config.k, config.p)?,
        ModelKind::Regression => regression_thresholds(config.k, config.p, config.sigma2)?,
    };
    if as_json {
        print_json(&th)
    } else {
        println!("{}", render_thresholds(&th));
        Ok(())
    }
}

// report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// A `result.json` written by `sweep`.
    pub input: String,
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
    pub gnuplot: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        let f = ReportFormats::default();
        ReportConfig { input: "result.json".into(), csv: f.csv, json: f.json, svg: f.svg, gnuplot: f.gnuplot }
    }
}

pub fn report(layers: &Layers, out: &Path) -> CliResult<()> {
    let config: ReportConfig = layers.resolve(&ReportConfig::default())?;
    let text = fs::read_to_string(&config.input)
        .map_err(|e| CliError::Config(format!("input: {}: {e}", config.input)))?;
    let result: SweepResult =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("input: {}: {e}", config.input)))?;
    let formats = ReportFormats { csv: config.csv, json: config.json, svg: config.svg, gnuplot: config.gnuplot };
    let files = emit_reports(&result, out, formats)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
