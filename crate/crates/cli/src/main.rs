//! CLI for two-stage spectral latent subgroup analysis.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/ingestion error,
//! 4 numerical failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use subspect::harness::{self, AnalyzeOptions, Axis};
use subspect::harness::config::Stage2;
use subspect::lcm;
use subspect::{Error, Result};

#[derive(Parser)]
#[command(
    name = "subspect",
    version,
    about = "Two-stage spectral latent subgroup analysis: simulate, analyze, diagnose"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario from a preset name (lowdim, highdim,
    /// noninform, toy-fig2) or a TOML config file.
    Simulate {
        /// Preset name or config path.
        #[arg(long)]
        config: String,
        /// Override the replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this estimator (overrides the config and its sweep).
        #[arg(long)]
        estimator: Option<String>,
        /// Output directory; each scenario writes to <out>/<scenario-id>/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze a dataset: an n x J binary response CSV plus an outcome CSV
    /// with columns Y, D, X_1..X_p.
    Analyze {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        outcome: PathBuf,
        /// Fixed number of subgroups.
        #[arg(long, conflicts_with = "auto_g")]
        g: Option<usize>,
        /// Select the number of subgroups by parallel analysis (default).
        #[arg(long)]
        auto_g: bool,
        /// Stage-two estimator: ols, lasso, or dl (default: by regime).
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Number of most-variable items exported for the heatmap.
        #[arg(long, default_value_t = 20)]
        top_k: usize,
        /// Cap for parallel-analysis selection.
        #[arg(long, default_value_t = 10)]
        max_g: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Separability and design-condition diagnostics for an item-parameter
    /// CSV.
    CheckDesign {
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
    },
    /// Collect scenario summaries from <in>/*/summary.csv into a tidy CSV
    /// along one axis (j, j_noninf, or n).
    PlotData {
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            replicates,
            seed,
            estimator,
            out,
        } => simulate(&config, replicates, seed, estimator.as_deref(), &out),
        Command::Analyze {
            responses,
            outcome,
            g,
            auto_g: _,
            estimator,
            seed,
            level,
            top_k,
            max_g,
            out,
        } => analyze(
            &responses,
            &outcome,
            g,
            estimator.as_deref(),
            seed,
            level,
            top_k,
            max_g,
            &out,
        ),
        Command::CheckDesign { theta, delta, n, p } => check_design(&theta, delta, n, p),
        Command::PlotData { r#in, axis, out } => plot_data(&r#in, &axis, &out),
    }
}

fn simulate(
    config: &str,
    replicates: Option<usize>,
    seed: Option<u64>,
    estimator: Option<&str>,
    out: &PathBuf,
) -> Result<()> {
    let mut config = harness::load_config(config)?;
    if let Some(reps) = replicates {
        config.replicates = reps;
    }
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(est) = estimator {
        let est = est.parse()?;
        config.estimator = est;
        if let Some(sweep) = config.sweep.as_mut() {
            sweep.estimators = Some(vec![est]);
        }
    }
    config.validate()?;

    let scenarios = config.expand()?;
    for sc in &scenarios {
        let outcome = harness::run_scenario(sc);
        let dir = out.join(&sc.id);
        harness::write_outputs(&dir, sc, &outcome)?;
        let s = &outcome.summary;
        println!(
            "{}: replicates={} failed={} misclass={:.4} rmse={:.4} mean_time={:.3}s",
            sc.id,
            s.replicates,
            s.failed,
            s.misclass_mean,
            s.rmse_pooled,
            outcome.mean_wall_time.as_secs_f64()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    responses: &PathBuf,
    outcome: &PathBuf,
    g: Option<usize>,
    estimator: Option<&str>,
    seed: u64,
    level: f64,
    top_k: usize,
    max_g: usize,
    out: &PathBuf,
) -> Result<()> {
    let estimator = match estimator {
        None => None,
        Some("ols") => Some(Stage2::Ols),
        Some("lasso") => Some(Stage2::Lasso),
        Some("dl") => Some(Stage2::Dl),
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown estimator {other:?} (expected ols, lasso, or dl)"
            )))
        }
    };
    let opts = AnalyzeOptions {
        g,
        max_g,
        estimator,
        level,
        seed,
        top_k,
        ..AnalyzeOptions::default()
    };
    let report = harness::analyze_files(responses, outcome, &opts)?;
    harness::write_report(out, &report)?;
    println!(
        "n={} J={} p={} G={}{}",
        report.n,
        report.j,
        report.p,
        report.g,
        if report.g_from_parallel_analysis {
            " (parallel analysis)"
        } else {
            ""
        }
    );
    for k in 0..report.g {
        let ci = report
            .intervals
            .as_ref()
            .map(|ci| format!(" [{:.3}, {:.3}]", ci[k].0, ci[k].1))
            .unwrap_or_default();
        println!(
            "subgroup {}: tau_hat={:.3} mu_hat={:.3}{ci}",
            k + 1,
            report.tau_hat[k],
            report.mu[k]
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn check_design(theta_path: &PathBuf, delta: f64, n: usize, p: usize) -> Result<()> {
    let theta = lcm::io::read_theta_csv(theta_path)?;
    let g = theta.ncols();
    let report = lcm::separability(&theta, delta)?;
    println!(
        "theta: {} items x {g} classes, delta = {delta}",
        theta.nrows()
    );
    println!("J_I (min over class pairs) = {}", report.j_informative);
    for pair in &report.pairs {
        println!(
            "pair ({}, {}): {} informative items",
            pair.class_a,
            pair.class_b,
            pair.items.len()
        );
    }
    let diag = lcm::check_design_conditions(&report, n, p, g, None, Some(&theta));
    println!(
        "regime: {} (n = {n}, p = {p}, 2G+p = {})",
        match diag.regime {
            lcm::Regime::LowDim => "low-dim",
            lcm::Regime::HighDim => "high-dim",
        },
        2 * g + p
    );
    println!("signal exp(J_I delta^2) = {:.6e}", diag.signal_exp);
    for c in &diag.conditions {
        println!(
            "{:<20} threshold {:>12.4}  {}",
            c.name,
            c.threshold,
            match c.flag {
                lcm::Flag::Pass => "pass",
                lcm::Flag::Warn => "warn",
            }
        );
    }
    if let Some(w) = diag.singular_ratio {
        println!("singular ratio ||theta||_2 / sigma_min = {w:.4}");
    }
    Ok(())
}

fn plot_data(dir: &PathBuf, axis: &str, out: &PathBuf) -> Result<()> {
    let axis: Axis = axis.parse()?;
    let summaries = harness::collect_summaries(dir)?;
    let rows = harness::emit_plot_data(&summaries, axis)?;
    std::fs::write(out, harness::plot_csv(axis, &rows))?;
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}
