//! Replica sweeps over a signal or sample-size grid, aggregation, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{csv_error, run_chain, Beta, ChainConfig, Init, Outcome, Trace, TraceRow};
use crate::error::{invalid, Error, Result};
use crate::gam::{GamInstance, GamParams, NoiseMode, Scaling};
use crate::landscape::regression_thresholds;
use crate::math::median;
use crate::regression::{RegressionInstance, RegressionParams};
use crate::rng::derive_seed;

/// Recovery-time cutoffs reported per grid point.
pub const RECOVERY_CUTOFFS: [u64; 2] = [200_000, 1_000_000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Sparse tensor PCA, the Gaussian additive model; `gam` is accepted as an alias.
    #[serde(alias = "gam")]
    Pca,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `lambda = k^x` over the grid of `x`.
    LambdaExponent,
    /// `n` over the grid.
    SampleSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub p: u32,
    pub k: u32,
    pub t: u32,
    pub sigma2: f64,
    pub scaling: Scaling,
    pub noise_mode: NoiseMode,
    pub beta: Beta,
    pub axis: SweepAxis,
    /// Empty means the default grid for the axis.
    pub grid: Vec<f64>,
    pub replicas: u32,
    pub seed: u64,
    pub censor_at: u64,
    pub record_every: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            model: ModelKind::Pca,
            p: 3500,
            k: 15,
            t: 2,
            sigma2: 0.05,
            scaling: Scaling::Normalized,
            noise_mode: NoiseMode::Auto,
            beta: Beta(1000.0),
            axis: SweepAxis::LambdaExponent,
            grid: Vec::new(),
            replicas: 5,
            seed: 0,
            censor_at: 1_000_000,
            record_every: 100,
        }
    }
}

fn stepped(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).map(|x| (x * 1e9).round() / 1e9).collect()
}

impl SweepConfig {
    /// The signal-exponent sweep with the paper-sized defaults.
    pub fn pca() -> Self {
        SweepConfig::default()
    }

    /// The sample-size sweep with the paper-sized defaults.
    pub fn regression() -> Self {
        SweepConfig {
            model: ModelKind::Regression,
            p: 20_000,
            k: 18,
            beta: Beta(100.0),
            axis: SweepAxis::SampleSize,
            ..SweepConfig::default()
        }
    }

    pub fn resolved_grid(&self) -> Vec<f64> {
        if !self.grid.is_empty() {
            return self.grid.clone();
        }
        match self.axis {
            SweepAxis::LambdaExponent => stepped(1.0, 2.0, 0.05),
            SweepAxis::SampleSize => stepped(100.0, 500.0, 50.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.model, self.axis) {
            (ModelKind::Pca, SweepAxis::SampleSize) => return invalid("axis: sample_size needs model regression"),
            (ModelKind::Regression, SweepAxis::LambdaExponent) => return invalid("axis: lambda_exponent needs model pca"),
            _ => {}
        }
        if self.k == 0 || self.k > self.p {
            return invalid(format!("k: need 1 <= k <= p, got k={}, p={}", self.k, self.p));
        }
        if self.model == ModelKind::Pca && self.t < 2 {
            return invalid("t: must be >= 2");
        }
        if self.replicas == 0 {
            return invalid("replicas: must be >= 1");
        }
        if self.record_every == 0 {
            return invalid("record_every: must be >= 1");
        }
        self.beta.validate().map_err(|e| Error::InvalidParameter(format!("beta: {e}")))?;
        let grid = self.resolved_grid();
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
            return invalid("grid: must be finite and strictly increasing");
        }
        if self.axis == SweepAxis::SampleSize && grid.iter().any(|&n| n < 1.0 || n.fract() != 0.0) {
            return invalid("grid: sample sizes must be positive integers");
        }
        Ok(())
    }

    pub fn replica_seed(&self, grid_value: f64, replica: u32) -> u64 {
        replica_seed(self.seed, grid_value, replica)
    }

    pub fn chain_config(&self, grid_value: f64, replica: u32) -> ChainConfig {
        ChainConfig {
            beta: self.beta,
            max_iters: self.censor_at,
            halt_on_recovery: true,
            record_every: self.record_every,
            seed: self.replica_seed(grid_value, replica),
            replica_id: replica as u64,
        }
    }
}

/// Seed of one replica, keyed by the grid value rather than its position so that reordering
/// the grid leaves every replica unchanged.
pub fn replica_seed(master_seed: u64, grid_value: f64, replica: u32) -> u64 {
    derive_seed(&[master_seed, grid_value.to_bits(), replica as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub grid_value: f64,
    pub replica: u32,
    pub seed: u64,
    /// `None` if the replica failed (e.g. a resource limit); see `error`.
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
    pub max_overlap: u32,
    pub final_overlap_fraction: f64,
}

impl ReplicaResult {
    pub fn recovery_iter(&self) -> Option<u64> {
        self.outcome.and_then(|o| o.recovered())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub grid_value: f64,
    pub replicas: Vec<ReplicaResult>,
    /// Median recovery time, censored runs counted as `censor_at`.
    pub median_censored_time: Option<f64>,
    /// `(cutoff, fraction of replicas recovered within it)`.
    pub fraction_recovered: Vec<(u64, f64)>,
    /// `(iteration bucket, median overlap fraction)`.
    pub median_trajectory: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub points: Vec<PointSummary>,
}

/// Builds the instance for one replica and runs its chain.
pub fn run_replica(config: &SweepConfig, grid_value: f64, replica: u32) -> Result<Trace> {
    let chain = config.chain_config(grid_value, replica);
    match config.model {
        ModelKind::Pca => {
            let lambda = (config.k as f64).powf(grid_value);
            let params = GamParams::new(config.p, config.k, config.t, lambda, chain.seed)
                .scaling(config.scaling)
                .noise_mode(config.noise_mode);
            run_chain(&GamInstance::generate(params)?, &chain, Init::Random)
        }
        ModelKind::Regression => {
            let params = RegressionParams::new(grid_value as u32, config.p, config.k, config.sigma2, chain.seed);
            run_chain(&RegressionInstance::generate(params)?, &chain, Init::Random)
        }
    }
}

fn summarize_replica(config: &SweepConfig, grid_value: f64, replica: u32) -> (ReplicaResult, Option<Vec<TraceRow>>) {
    let seed = config.replica_seed(grid_value, replica);
    match run_replica(config, grid_value, replica) {
        Ok(trace) => {
            log::debug!("x={grid_value} replica={replica}: {:?}", trace.outcome);
            let result = ReplicaResult {
                grid_value,
                replica,
                seed,
                outcome: Some(trace.outcome),
                error: None,
                max_overlap: trace.max_overlap,
                final_overlap_fraction: trace.rows.last().map_or(0.0, |r| r.overlap_fraction),
            };
            (result, Some(trace.rows))
        }
        Err(e) => {
            log::warn!("x={grid_value} replica={replica} failed: {e}");
            let result = ReplicaResult {
                grid_value,
                replica,
                seed,
                outcome: None,
                error: Some(e.to_string()),
                max_overlap: 0,
                final_overlap_fraction: 0.0,
            };
            (result, None)
        }
    }
}

/// Runs every `(grid value, replica)` pair. Results do not depend on scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let grid = config.resolved_grid();
    let tasks: Vec<(f64, u32)> = grid.iter().flat_map(|&g| (0..config.replicas).map(move |r| (g, r))).collect();
    #[cfg(feature = "parallel")]
    let outputs: Vec<_> = {
        use rayon::prelude::*;
        tasks.par_iter().map(|&(g, r)| summarize_replica(config, g, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outputs: Vec<_> = tasks.iter().map(|&(g, r)| summarize_replica(config, g, r)).collect();

    let mut points = Vec::with_capacity(grid.len());
    for (i, &g) in grid.iter().enumerate() {
        let chunk = &outputs[i * config.replicas as usize..(i + 1) * config.replicas as usize];
        let replicas: Vec<ReplicaResult> = chunk.iter().map(|c| c.0.clone()).collect();
        let ok: Vec<&ReplicaResult> = replicas.iter().filter(|r| r.outcome.is_some()).collect();
        let times: Vec<f64> = ok
            .iter()
            .map(|r| r.outcome.expect("filtered").censored_time(config.censor_at) as f64)
            .collect();
        let fraction_recovered = RECOVERY_CUTOFFS
            .iter()
            .map(|&c| {
                let hit = ok.iter().filter(|r| r.recovery_iter().is_some_and(|t| t <= c)).count();
                (c, if ok.is_empty() { 0.0 } else { hit as f64 / ok.len() as f64 })
            })
            .collect();
        let traces: Vec<&[TraceRow]> = chunk.iter().filter_map(|c| c.1.as_deref()).collect();
        let median_trajectory = if traces.is_empty() {
            Vec::new()
        } else {
            aggregate_trajectories(&traces, config.record_every)?
        };
        points.push(PointSummary {
            grid_value: g,
            replicas,
            median_censored_time: median(&times),
            fraction_recovered,
            median_trajectory,
        });
    }
    Ok(SweepResult { config: config.clone(), points })
}

/// Median overlap fraction per bucket `0, stride, 2 stride, ..`. Each trace contributes its
/// latest row at or before the bucket, so finished runs carry their last value forward.
pub fn aggregate_trajectories(traces: &[&[TraceRow]], stride: u64) -> Result<Vec<(u64, f64)>> {
    if traces.is_empty() || traces.iter().any(|t| t.is_empty()) {
        return Err(Error::InvalidInput("need at least one non-empty trace".into()));
    }
    if stride == 0 {
        return invalid("stride must be >= 1");
    }
    let horizon = traces.iter().map(|t| t.last().expect("non-empty").iter).max().unwrap_or(0);
    let mut cursors = vec![0usize; traces.len()];
    let mut out = Vec::new();
    let mut bucket = 0;
    loop {
        let values: Vec<f64> = traces
            .iter()
            .zip(cursors.iter_mut())
            .map(|(t, c)| {
                while *c + 1 < t.len() && t[*c + 1].iter <= bucket {
                    *c += 1;
                }
                t[*c].overlap_fraction
            })
            .collect();
        out.push((bucket, median(&values).expect("non-empty")));
        if bucket >= horizon {
            break;
        }
        bucket = (bucket + stride).min(horizon.div_ceil(stride) * stride);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFormats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
    pub gnuplot: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        ReportFormats { csv: true, json: true, svg: true, gnuplot: true }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    config: &'a SweepConfig,
    grid: Vec<f64>,
    seed_derivation: &'static str,
    replicas: Vec<ManifestReplica>,
}

#[derive(Serialize)]
struct ManifestReplica {
    grid_value: f64,
    replica: u32,
    seed: u64,
}

#[derive(Serialize)]
struct SweepRow {
    grid_value: f64,
    replica: u32,
    seed: u64,
    outcome: &'static str,
    recovery_iter: Option<u64>,
    censored: bool,
}

/// Vertical reference lines for the time plot: `(position, label)`.
pub fn threshold_markers(config: &SweepConfig) -> Vec<(f64, String)> {
    match config.model {
        ModelKind::Pca => vec![(1.5, "lambda_MCMC = k^1.5".into())],
        ModelKind::Regression => match regression_thresholds(config.k, config.p, config.sigma2) {
            Ok(th) => vec![
                (th.stats.round(), format!("n_STATS ~ {:.0}", th.stats)),
                (th.lasso.unwrap_or(f64::NAN).round(), format!("n_LASSO ~ {:.0}", th.lasso.unwrap_or(f64::NAN))),
            ],
            Err(_) => Vec::new(),
        },
    }
}

fn axis_label(config: &SweepConfig) -> &'static str {
    match config.axis {
        SweepAxis::LambdaExponent => "x (lambda = k^x)",
        SweepAxis::SampleSize => "n",
    }
}

/// Writes CSV, JSON and plot files into `dir`. Returns the paths written.
pub fn emit_reports(result: &SweepResult, dir: &Path, formats: ReportFormats) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let config = &result.config;
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        grid: result.points.iter().map(|p| p.grid_value).collect(),
        seed_derivation: "derive_seed([master_seed, grid_value.to_bits(), replica])",
        replicas: result
            .points
            .iter()
            .flat_map(|p| p.replicas.iter().map(|r| ManifestReplica { grid_value: r.grid_value, replica: r.replica, seed: r.seed }))
            .collect(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(path);
    if result.points.is_empty() {
        log::warn!("sweep result is empty; wrote the manifest only");
        return Ok(written);
    }

    if formats.csv {
        let path = dir.join("sweep.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        for r in result.points.iter().flat_map(|p| &p.replicas) {
            let outcome = match r.outcome {
                Some(Outcome::Recovered { .. }) => "recovered",
                Some(Outcome::Censored { .. }) => "censored",
                None => "failed",
            };
            w.serialize(SweepRow {
                grid_value: r.grid_value,
                replica: r.replica,
                seed: r.seed,
                outcome,
                recovery_iter: r.recovery_iter(),
                censored: !matches!(r.outcome, Some(Outcome::Recovered { .. })),
            })
            .map_err(csv_error)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("trajectory.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        w.write_record(["grid_value", "iter_bucket", "median_overlap_fraction"]).map_err(csv_error)?;
        for p in &result.points {
            for (it, v) in &p.median_trajectory {
                w.write_record([p.grid_value.to_string(), it.to_string(), v.to_string()]).map_err(csv_error)?;
            }
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("medians.csv");
        let mut text = format!("# censored runs are counted as {} iterations\n", config.censor_at);
        let _ = write!(text, "grid_value,median_censored_time");
        for c in RECOVERY_CUTOFFS {
            let _ = write!(text, ",fraction_within_{c}");
        }
        text.push('\n');
        for p in &result.points {
            let _ = write!(text, "{},{}", p.grid_value, p.median_censored_time.map_or(String::new(), |m| m.to_string()));
            for (_, f) in &p.fraction_recovered {
                let _ = write!(text, ",{f}");
            }
            text.push('\n');
        }
        fs::write(&path, text)?;
        written.push(path);
    }

    if formats.json {
        let path = dir.join("result.json");
        fs::write(&path, serde_json::to_string_pretty(result)?)?;
        written.push(path);
    }

    let markers = threshold_markers(config);
    if formats.svg {
        let path = dir.join("median_time.svg");
        fs::write(&path, time_plot_svg(result, &markers))?;
        written.push(path);
        let path = dir.join("trajectories.svg");
        fs::write(&path, trajectory_plot_svg(result))?;
        written.push(path);
    }
    if formats.gnuplot {
        let path = dir.join("median_time.gp");
        fs::write(&path, gnuplot_script(result, &markers))?;
        written.push(path);
    }
    Ok(written)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0).max(1e-12) * (H - 2.0 * PAD)
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
            b = H - PAD,
            r = W - PAD
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 15.0);
        let _ = writeln!(out, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel}</text>"#, H / 2.0, H / 2.0);
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, self.px(fx), H - PAD + 16.0, trim(fx));
            let _ = writeln!(out, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, PAD - 4.0, self.py(fy) + 4.0, trim(fy));
        }
    }
}

fn trim(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{:.2}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn svg_open() -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="13">"#) + "\n"
}

fn time_plot_svg(result: &SweepResult, markers: &[(f64, String)]) -> String {
    let xs: Vec<f64> = result.points.iter().map(|p| p.grid_value).collect();
    let (x0, x1) = (xs[0].min(markers.iter().map(|m| m.0).fold(f64::INFINITY, f64::min)), xs[xs.len() - 1]);
    let x1 = x1.max(markers.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max));
    let frame = Frame { x0, x1, y0: 0.0, y1: result.config.censor_at as f64 };
    let mut out = svg_open();
    frame.axes(&mut out, axis_label(&result.config), "median iterations to recovery (censored)");
    for (pos, label) in markers {
        let x = frame.px(*pos);
        let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{PAD}" x2="{x:.1}" y2="{}" stroke="red" stroke-dasharray="5,4"/>"#, H - PAD);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" fill="red" font-size="11">{label}</text>"#, x + 3.0, PAD - 6.0);
    }
    let pts: Vec<String> = result
        .points
        .iter()
        .filter_map(|p| p.median_censored_time.map(|m| format!("{:.1},{:.1}", frame.px(p.grid_value), frame.py(m))))
        .collect();
    let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, pts.join(" "));
    for p in pts {
        let (cx, cy) = p.split_once(',').expect("formatted pair");
        let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="steelblue"/>"#);
    }
    out.push_str("</svg>\n");
    out
}

fn trajectory_plot_svg(result: &SweepResult) -> String {
    let horizon = result
        .points
        .iter()
        .filter_map(|p| p.median_trajectory.last().map(|t| t.0))
        .max()
        .unwrap_or(1)
        .max(1);
    let frame = Frame { x0: 0.0, x1: horizon as f64, y0: 0.0, y1: 1.0 };
    let mut out = svg_open();
    frame.axes(&mut out, "iteration", "median overlap fraction");
    let n = result.points.len().max(2) - 1;
    for (i, p) in result.points.iter().enumerate() {
        let hue = 240.0 - 240.0 * i as f64 / n as f64;
        let pts: Vec<String> = p
            .median_trajectory
            .iter()
            .map(|(it, v)| format!("{:.1},{:.1}", frame.px(*it as f64), frame.py(*v)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="hsl({hue:.0},70%,45%)" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#, pts.join(" "), p.grid_value);
    }
    out.push_str("</svg>\n");
    out
}

fn gnuplot_script(result: &SweepResult, markers: &[(f64, String)]) -> String {
    let mut out = String::from("set datafile separator ','\nset datafile commentschars '#'\nset key off\n");
    let _ = writeln!(out, "set xlabel '{}'\nset ylabel 'median iterations to recovery (censored)'", axis_label(&result.config));
    let _ = writeln!(out, "set yrange [0:{}]", result.config.censor_at);
    for (i, (pos, label)) in markers.iter().enumerate() {
        let _ = writeln!(out, "set arrow {} from {pos}, graph 0 to {pos}, graph 1 nohead dashtype 2 lc rgb 'red'", i + 1);
        let _ = writeln!(out, "set label {} '{label}' at {pos}, graph 1.03 tc rgb 'red'", i + 1);
    }
    out.push_str("plot 'medians.csv' every ::1 using 1:2 with linespoints lw 2\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(vals: &[(u64, f64)]) -> Vec<TraceRow> {
        vals.iter().map(|&(iter, f)| TraceRow { iter, overlap_fraction: f, h_value: 0.0 }).collect()
    }

    #[test]
    fn default_grids() {
        let g = SweepConfig::pca().resolved_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[10], 1.5);
        assert_eq!(g[20], 2.0);
        assert_eq!(SweepConfig::regression().resolved_grid(), stepped(100.0, 500.0, 50.0));
    }

    #[test]
    fn trajectory_median() {
        let a = rows(&[(0, 0.0), (10, 0.0)]);
        let b = rows(&[(0, 0.5), (10, 0.5)]);
        let c = rows(&[(0, 1.0), (10, 1.0)]);
        let agg = aggregate_trajectories(&[&a, &b, &c], 10).unwrap();
        assert_eq!(agg, vec![(0, 0.5), (10, 0.5)]);
        assert!(aggregate_trajectories(&[], 10).is_err());
    }

    #[test]
    fn axis_model_mismatch() {
        let mut c = SweepConfig::pca();
        c.axis = SweepAxis::SampleSize;
        assert!(c.validate().is_err());
    }
}
