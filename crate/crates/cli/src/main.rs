use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermocc::config::{load_scenario, save_scenario};
use thermocc::estimator::{self, EstimationResult, EstimatorOptions};
use thermocc::ingest::{ingest_csv, load_column_map, load_policy};
use thermocc::metrics::{count_windows, score_maps, to_mobility_map};
use thermocc::model::ScenarioConfig;
use thermocc::{io, pipeline, simulator, sweep, Error, ErrorKind, Result};

/// Building thermal simulation and occupancy reconstruction.
#[derive(Parser)]
#[command(name = "thermocc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one day and write sensors.csv and truth.csv.
    Simulate {
        /// Scenario file, or `paper` for the bundled default.
        #[arg(long, default_value = "paper")]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate occupant heat from sensors.csv and build the mobility map.
    Reconstruct {
        #[arg(long)]
        sensors: PathBuf,
        /// Scenario file giving the layout and the known constants.
        #[arg(long, default_value = "paper")]
        config: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Reporting window in steps; defaults to the scenario's.
        #[arg(long)]
        tr_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter sweep and write sweep.csv and sweep_summary.csv.
    Sweep {
        /// Sweep file, or `fig4`, `fig5`, `fig6` for the bundled grids.
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; all cores by default.
        #[arg(long)]
        jobs: Option<usize>,
        /// Replace the seed list with 1..=N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert an external sensor CSV into sensors.csv.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Scenario to restrict to the ingested rooms; written as scenario.cfg.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score estimate.csv against truth.csv.
    Score {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        tr_steps: usize,
        #[arg(long, default_value_t = EstimatorOptions::default().q_avg)]
        q_avg: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long)]
    lambda: Option<f64>,
    /// Sets both eps1 and eps2.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps2: Option<f64>,
    #[arg(long)]
    n_guess: Option<f64>,
    #[arg(long)]
    q_avg: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
}

impl EstimatorArgs {
    fn options(&self) -> EstimatorOptions {
        let mut o = EstimatorOptions::default();
        if let Some(eps) = self.eps {
            o = o.with_eps(eps);
        }
        o.eps1 = self.eps1.unwrap_or(o.eps1);
        o.eps2 = self.eps2.unwrap_or(o.eps2);
        o.lambda = self.lambda.unwrap_or(o.lambda);
        o.n_guess = self.n_guess.unwrap_or(o.n_guess);
        o.q_avg = self.q_avg.unwrap_or(o.q_avg);
        o.ridge = self.ridge.unwrap_or(o.ridge);
        o
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn simulate(config: &Path, seed: Option<u64>, noise_std: Option<f64>, out: &Path) -> Result<()> {
    let mut cfg = load_scenario(config)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.noise_std = noise_std.unwrap_or(cfg.noise_std);
    let (truth, sensors) = pipeline::simulate_sensors(&cfg)?;
    create_dir(out)?;
    io::write_sensors(&out.join("sensors.csv"), &sensors)?;
    io::write_truth(&out.join("truth.csv"), &truth)?;
    save_scenario(&cfg, &out.join("scenario.cfg"))?;
    let s = simulator::summarize(&truth);
    println!(
        "k={} z={} N={} seed={} noise_std={} temps {:.2}..{:.2} K, HVAC on {:.1}% of room-steps",
        cfg.k(),
        cfg.horizon_steps,
        cfg.n_people,
        cfg.seed,
        cfg.noise_std,
        s.min_temp,
        s.max_temp,
        100.0 * s.on_fraction
    );
    Ok(())
}

fn write_estimate_files(
    out: &Path,
    result: &EstimationResult,
    opts: &EstimatorOptions,
    tr_steps: usize,
    truth_path: Option<&Path>,
) -> Result<()> {
    io::write_estimate(&out.join("estimate.csv"), result)?;
    io::write_stats(&out.join("stats.json"), &result.stats)?;
    let map = to_mobility_map(&result.mob_heat_hat, opts.q_avg, tr_steps)?;
    let truth = match truth_path {
        Some(p) => Some(count_windows(&io::read_truth(p)?.n, tr_steps)?),
        None => None,
    };
    io::write_mobility_map(&out.join("mobility_map.csv"), &map, truth.as_ref())?;
    if let Some(t) = truth {
        let score = score_maps(&t, &map)?;
        io::write_score(&out.join("score.json"), &score)?;
        println!("TRE {:.4}", score.tre);
    }
    Ok(())
}

fn reconstruct(
    sensors_path: &Path,
    config: &Path,
    args: &EstimatorArgs,
    tr_steps: Option<usize>,
    out: &Path,
) -> Result<()> {
    let cfg: ScenarioConfig = load_scenario(config)?;
    let sensors = io::read_sensors(sensors_path)?;
    let opts = args.options();
    let tr = tr_steps.unwrap_or(cfg.time_range_steps);
    let problem = estimator::assemble(&sensors, &cfg.layout, &pipeline::known_constants(&cfg), &opts)?;
    let truth = sensors_path.with_file_name("truth.csv");
    let truth = truth.exists().then_some(truth.as_path());
    create_dir(out)?;
    match estimator::solve(&problem) {
        Ok(result) => {
            write_estimate_files(out, &result, &opts, tr, truth)?;
            println!(
                "alpha={:.5} beta={:.5} omega={:.5} in {} iterations ({:.2} s)",
                result.alpha_hat,
                result.beta_hat,
                result.omega_hat,
                result.stats.iterations,
                result.stats.wall_time_s
            );
            Ok(())
        }
        Err(Error::IterationLimit(result)) => {
            write_estimate_files(out, &result, &opts, tr, truth)?;
            Err(Error::IterationLimit(result))
        }
        Err(e) => Err(e),
    }
}

fn run_sweep(config: &Path, jobs: Option<usize>, seeds: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = sweep::load_sweep(config)?;
    if let Some(n) = seeds {
        spec.seeds = (1..=n).collect();
    }
    create_dir(out)?;
    let rows = sweep::run_sweep(&spec, jobs)?;
    let summary = sweep::summarize(&rows);
    sweep::write_sweep(&out.join("sweep.csv"), &rows)?;
    sweep::write_summary(&out.join("sweep_summary.csv"), &summary)?;
    println!("{:>10} {:>10} {:>10} {:>6}", spec.parameter.key(), "tre_mean", "tre_std", "failed");
    for s in &summary {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:>10} {:>10} {:>10} {:>6}",
            s.value,
            fmt(s.tre_mean),
            fmt(s.tre_std),
            s.seeds_failed
        );
    }
    Ok(())
}

fn ingest(
    csv: &Path,
    map: &Path,
    policy: &Path,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let map = load_column_map(map)?;
    let policy = load_policy(policy)?;
    let cfg = config.map(load_scenario).transpose()?;
    let result = ingest_csv(csv, &map, &policy, cfg.as_ref().map(|c| &c.layout))?;
    create_dir(out)?;
    io::write_sensors(&out.join("sensors.csv"), &result.trace)?;
    if let (Some(mut cfg), Some(layout)) = (cfg, result.layout) {
        let keep = &result.rooms;
        cfg.params.t_hvac = keep.iter().map(|&i| cfg.params.t_hvac[i]).collect();
        cfg.layout = layout;
        cfg.horizon_steps = result.trace.steps();
        cfg.time_range_steps = cfg.time_range_steps.min(cfg.horizon_steps);
        save_scenario(&cfg, &out.join("scenario.cfg"))?;
    }
    let rooms: Vec<usize> = result.rooms.iter().map(|i| i + 1).collect();
    println!(
        "k={} z={} delta_t={} h rooms {:?}",
        result.trace.k(),
        result.trace.steps(),
        result.trace.delta_t,
        rooms
    );
    Ok(())
}

fn score(truth: &Path, estimate: &Path, tr_steps: usize, q_avg: f64, out: &Path) -> Result<()> {
    let truth = io::read_truth(truth)?;
    let estimate = io::read_estimate(estimate)?;
    let map = to_mobility_map(&estimate.mob_heat_hat, q_avg, tr_steps)?;
    let truth_map = count_windows(&truth.n, tr_steps)?;
    let score = score_maps(&truth_map, &map)?;
    create_dir(out)?;
    io::write_mobility_map(&out.join("mobility_map.csv"), &map, Some(&truth_map))?;
    io::write_score(&out.join("score.json"), &score)?;
    println!("TRE {:.4}", score.tre);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Solver => 2,
        ErrorKind::Io => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("THERMOCC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate {
            config,
            seed,
            noise_std,
            out,
        } => simulate(config, *seed, *noise_std, out),
        Command::Reconstruct {
            sensors,
            config,
            estimator,
            tr_steps,
            out,
        } => reconstruct(sensors, config, estimator, *tr_steps, out),
        Command::Sweep {
            config,
            jobs,
            seeds,
            out,
        } => run_sweep(config, *jobs, *seeds, out),
        Command::Ingest {
            csv,
            map,
            policy,
            config,
            out,
        } => ingest(csv, map, policy, config.as_deref(), out),
        Command::Score {
            truth,
            estimate,
            tr_steps,
            q_avg,
            out,
        } => score(truth, estimate, *tr_steps, *q_avg, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::IterationLimit(r) = &e {
                eprintln!(
                    "stats: kkt_residual={:.3e} max_violation={:.3e}",
                    r.stats.kkt_residual, r.stats.max_constraint_violation
                );
            }
            log::debug!("{e:?}");
            ExitCode::from(exit_code(&e))
        }
    }
}
