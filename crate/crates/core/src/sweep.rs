//! Parameter sweeps: the full pipeline repeated over a grid of values and
//! seeds.
//!
//! A sweep file is TOML:
//!
//! ```toml
//! parameter = "noise_std"         # or "epsilon" (sets eps1 and eps2), "lambda"
//! values = [0.01, 0.1, 1.0, 10.0]
//! seed_count = 10                 # seeds 1..=10; or an explicit `seeds = [..]`
//! scenario = "paper"              # scenario file, relative to this file
//! noise_std = 0.1                 # optional override of the scenario value
//!
//! [estimator]                     # optional, defaults as in EstimatorOptions
//! lambda = 0.1
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_scenario, parse_scenario, PAPER_CFG};
use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, EstimatorOptions};
use crate::metrics;
use crate::model::ScenarioConfig;
use crate::pipeline;

pub const FIG4_SWEEP: &str = include_str!("../presets/fig4.sweep");
pub const FIG5_SWEEP: &str = include_str!("../presets/fig5.sweep");
pub const FIG6_SWEEP: &str = include_str!("../presets/fig6.sweep");

pub const DEFAULT_SEED_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NoiseStd,
    Epsilon,
    Lambda,
}

impl SweepParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::NoiseStd => "noise_std",
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: SweepParameter,
    values: Vec<f64>,
    seeds: Option<Vec<u64>>,
    seed_count: Option<usize>,
    #[serde(default = "default_scenario")]
    scenario: PathBuf,
    noise_std: Option<f64>,
    #[serde(default)]
    estimator: EstimatorOptions,
}

fn default_scenario() -> PathBuf {
    PathBuf::from("paper")
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::validation("sweep.values", "must not be empty"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation("sweep.values", format!("{v} is not finite")));
        }
        if self.parameter != SweepParameter::Epsilon {
            if let Some(v) = self.values.iter().find(|v| **v < 0.0) {
                return Err(Error::validation(
                    "sweep.values",
                    format!("{} must be >= 0, got {v}", self.parameter.key()),
                ));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("sweep.seeds", "must not be empty"));
        }
        self.scenario.validate()?;
        self.estimator.validate()
    }

    /// Scenario and options for one cell.
    pub fn cell(&self, value: f64, seed: u64) -> (ScenarioConfig, EstimatorOptions) {
        let mut cfg = self.scenario.clone();
        let mut opts = self.estimator;
        cfg.seed = seed;
        match self.parameter {
            SweepParameter::NoiseStd => cfg.noise_std = value,
            SweepParameter::Epsilon => opts = opts.with_eps(value),
            SweepParameter::Lambda => opts.lambda = value,
        }
        (cfg, opts)
    }
}

/// Parses a sweep file. A relative `scenario` path resolves against
/// `base_dir`.
pub fn parse_sweep(text: &str, base_dir: Option<&Path>) -> Result<SweepSpec> {
    let raw: RawSweep = toml::from_str(text).map_err(|e| Error::parse("sweep", e))?;
    let seeds = match (raw.seeds, raw.seed_count) {
        (Some(_), Some(_)) => {
            return Err(Error::validation("sweep", "give either `seeds` or `seed_count`"))
        }
        (Some(seeds), None) => seeds,
        (None, count) => (1..=count.unwrap_or(DEFAULT_SEED_COUNT) as u64).collect(),
    };
    let mut scenario = if raw.scenario == Path::new("paper") {
        parse_scenario(PAPER_CFG, None)?
    } else {
        let path = match base_dir {
            Some(dir) if raw.scenario.is_relative() => dir.join(&raw.scenario),
            _ => raw.scenario,
        };
        load_scenario(&path)?
    };
    if let Some(eta) = raw.noise_std {
        scenario.noise_std = eta;
    }
    let spec = SweepSpec {
        parameter: raw.parameter,
        values: raw.values,
        seeds,
        scenario,
        estimator: raw.estimator,
    };
    spec.validate()?;
    Ok(spec)
}

/// Loads a sweep file; `fig4`, `fig5` and `fig6` (with or without the
/// `.sweep` suffix) select the bundled grids when no such file exists.
pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    if !path.exists() {
        let bundled = match path.to_str() {
            Some("fig4" | "fig4.sweep") => Some(FIG4_SWEEP),
            Some("fig5" | "fig5.sweep") => Some(FIG5_SWEEP),
            Some("fig6" | "fig6.sweep") => Some(FIG6_SWEEP),
            _ => None,
        };
        if let Some(text) = bundled {
            return parse_sweep(text, None);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep(&text, path.parent())
}

/// One `(value, seed)` cell. Numeric fields are empty when the cell failed
/// before producing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub seed: u64,
    pub tre: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    pub omega_hat: Option<f64>,
    pub wall_time_s: f64,
    pub kkt_residual: Option<f64>,
    pub max_violation: Option<f64>,
    /// `ok`, `iteration_limit`, or `error: <message>`.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn run_cell(spec: &SweepSpec, value: f64, seed: u64) -> SweepRow {
    let started = Instant::now();
    let (cfg, opts) = spec.cell(value, seed);
    let mut row = SweepRow {
        parameter: spec.parameter.key().to_string(),
        value,
        seed,
        tre: None,
        alpha_hat: None,
        beta_hat: None,
        omega_hat: None,
        wall_time_s: 0.0,
        kkt_residual: None,
        max_violation: None,
        status: "ok".into(),
    };
    let fill = |row: &mut SweepRow, est: &EstimationResult| {
        row.alpha_hat = Some(est.alpha_hat);
        row.beta_hat = Some(est.beta_hat);
        row.omega_hat = Some(est.omega_hat);
        row.kkt_residual = Some(est.stats.kkt_residual);
        row.max_violation = Some(est.stats.max_constraint_violation);
    };
    match pipeline::run(&cfg, &opts) {
        Ok(out) => {
            fill(&mut row, &out.estimate);
            row.tre = Some(out.score.tre);
        }
        Err(Error::IterationLimit(est)) => {
            // The returned point is still feasible, so it can be scored.
            fill(&mut row, &est);
            row.status = "iteration_limit".into();
            let scored = pipeline::simulate_sensors(&cfg).and_then(|(truth, _)| {
                let map = metrics::to_mobility_map(
                    &est.mob_heat_hat,
                    opts.q_avg,
                    cfg.time_range_steps,
                )?;
                metrics::score(&truth.schedule, &map)
            });
            row.tre = scored.ok().map(|s| s.tre);
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row.wall_time_s = started.elapsed().as_secs_f64();
    log::info!(
        "{}={} seed {}: {} tre={:?} ({:.2} s)",
        row.parameter,
        value,
        seed,
        row.status,
        row.tre,
        row.wall_time_s
    );
    row
}

/// Runs every cell on at most `jobs` threads (all cores when `None`). Rows
/// come back sorted by value, then seed, whatever order the cells finish in.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if jobs == Some(0) {
        return Err(Error::validation("jobs", "must be at least 1"));
    }
    let mut cells: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cells.dedup();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::validation("jobs", e.to_string()))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, s)| run_cell(spec, v, s))
            .collect()
    }))
}

/// Mean and sample standard deviation over the seeds of one value, taken over
/// the cells with status `ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub value: f64,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub tre_mean: Option<f64>,
    pub tre_std: Option<f64>,
    pub alpha_hat_mean: Option<f64>,
    pub beta_hat_mean: Option<f64>,
    pub omega_hat_mean: Option<f64>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let value = rows[start].value;
        let end = start + rows[start..].iter().take_while(|r| r.value == value).count();
        let group = &rows[start..end];
        let ok: Vec<&SweepRow> = group.iter().filter(|r| r.is_ok()).collect();
        let column = |f: fn(&SweepRow) -> Option<f64>| -> Vec<f64> {
            ok.iter().filter_map(|r| f(r)).collect()
        };
        let (tre_mean, tre_std) = mean_std(&column(|r| r.tre));
        out.push(SummaryRow {
            parameter: rows[start].parameter.clone(),
            value,
            seeds_ok: ok.len(),
            seeds_failed: group.len() - ok.len(),
            tre_mean,
            tre_std,
            alpha_hat_mean: mean_std(&column(|r| r.alpha_hat)).0,
            beta_hat_mean: mean_std(&column(|r| r.beta_hat)).0,
            omega_hat_mean: mean_std(&column(|r| r.omega_hat)).0,
        });
        start = end;
    }
    out
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes the per-value summary (`sweep_summary.csv`).
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(path, rows)
}
