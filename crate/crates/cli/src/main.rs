use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use pmbm_core::config::{apply_override, ExperimentConfig};
use pmbm_core::experiment::{metrics_csv, run_many, summarize};
use pmbm_core::simulator::simulate;
use pmbm_core::tracker::Variant;
use serde_json::{json, Value};

/// Batch runner for PMBM trackers over sets of trajectories.
#[derive(Parser)]
#[command(name = "pmbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, track and score Monte Carlo runs.
    Run(RunArgs),
    /// Write the simulated truth and measurements of one run as JSON lines.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    scenario: PathBuf,
    /// Base seed; run `r` uses `seed + r`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a configuration value by dotted path, e.g.
    /// `--set tracker.update.k_best=5`. May be repeated.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = ["current", "all", "filter"])]
    tracker: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Check the configuration and exit without writing anything.
    #[arg(long)]
    validate_only: bool,
    /// Disable gating, new-track floors, hypothesis caps and pruning.
    #[arg(long)]
    exact_mode: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    run: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common, extra: Vec<String>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&common.scenario).with_context(|| format!("reading {}", common.scenario.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", common.scenario.display()))?;
    let mut all = extra;
    if let Some(s) = common.seed {
        all.push(format!("scenario.seed={s}"));
    }
    all.extend(common.overrides.iter().cloned());
    for o in &all {
        apply_override(&mut v, o)?;
    }
    Ok(ExperimentConfig::from_value(v).context("invalid configuration")?)
}

fn run(args: &RunArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(t) = &args.tracker {
        let variant: Variant = t.parse().map_err(anyhow::Error::msg)?;
        extra.push(format!("tracker.variant={}", serde_json::to_string(&variant)?));
    }
    if let Some(r) = args.runs {
        extra.push(format!("scenario.runs={r}"));
    }
    if args.exact_mode {
        extra.push("tracker.exact=true".into());
    }
    let cfg = load(&args.common, extra)?;
    if args.validate_only {
        println!("configuration is valid");
        return Ok(());
    }
    info!("{} runs of {} steps", cfg.scenario.runs, cfg.scenario.duration);
    let results = run_many(&cfg)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut est = String::new();
    for rec in results.iter().flat_map(|r| &r.estimates) {
        est.push_str(&serde_json::to_string(rec)?);
        est.push('\n');
    }
    write(&args.out_dir.join("estimates.jsonl"), &est)?;
    write(&args.out_dir.join("metrics.csv"), &metrics_csv(&results))?;
    let summary = summarize(&cfg, &results);
    write(&args.out_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;

    let m = &summary.mean_summed;
    println!("{:<8} {:>10} {:>10} {:>10} {:>10} {:>10}", "", "Metric", "Loc", "Miss", "False", "Switch");
    println!(
        "{:<8} {:>10.1} {:>10.1} {:>10.1} {:>10.1} {:>10.1}",
        serde_json::to_value(summary.variant)?.as_str().unwrap_or(""),
        m.total,
        m.location,
        m.missed,
        m.false_,
        m.switch
    );
    println!("mean step time {:.4} s", summary.step_seconds.mean);
    Ok(())
}

fn write(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let cfg = load(&args.common, Vec::new())?;
    let models = cfg.models.build()?;
    let sim = simulate(&models, &cfg.scenario, cfg.models.dt, args.run)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    for (k, frame) in sim.frames.iter().enumerate() {
        let truth: Vec<Value> = sim
            .truth
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.state_at(k).map(|s| json!({"target": i, "state": s.as_slice()})))
            .collect();
        let zs: Vec<&[f64]> = frame.iter().map(|z| z.as_slice()).collect();
        writeln!(out, "{}", json!({"time": k, "truth": truth, "measurements": zs}))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => run(a),
        Command::Simulate(a) => simulate_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
