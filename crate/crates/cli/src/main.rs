use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wiretie::harness::{export_csv, export_log, read_ndjson, run_scenario, ScenarioConfig, CSV_NAME, PRESETS};

#[derive(Parser)]
#[command(name = "wiretie", version, about = "Run wire-tying robot scenarios in simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file, or one of the built-in presets: cliff, branch, four-wire.
    #[arg(long)]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the control loop rate.
    #[arg(long)]
    ticks_per_second: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write run.ndjson and trajectories.csv.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Suppress the summary.
        #[arg(long)]
        quiet: bool,
    },
    /// Check a scenario file without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        quiet: bool,
    },
    /// Convert a structured run log into the trajectory CSV.
    ExportCsv {
        /// Structured log written by `run`.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, String> {
    let path = Path::new(&args.scenario);
    let mut cfg = if path.exists() {
        ScenarioConfig::load(path).map_err(|e| e.to_string())?
    } else if let Some(cfg) = ScenarioConfig::preset(&args.scenario) {
        cfg
    } else {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        return Err(format!(
            "no scenario file {} and no preset of that name (presets: {})",
            args.scenario,
            names.join(", ")
        ));
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(tps) = args.ticks_per_second {
        cfg.ticks_per_second = tps;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cmd: Cmd) -> Result<bool, String> {
    match cmd {
        Cmd::Run { scenario, out, quiet } => {
            let cfg = load(&scenario)?;
            let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
            let (json, csv) = export_log(&log, &out).map_err(|e| e.to_string())?;
            let o = &log.outcome;
            if !quiet {
                println!("scenario {} seed {}: {} ticks", cfg.name, cfg.seed, log.ticks.len());
                println!("ties verified: {}", o.ties_verified);
                println!("robot rise: {:.3} m", o.robot_rise);
                for (dir, d) in &o.maneuvers {
                    println!("maneuver {dir:?}: {d:.3} m");
                }
                match &o.failure {
                    None => println!("mission complete"),
                    Some(f) => println!("mission incomplete: {f}"),
                }
                println!("wrote {} and {}", json.display(), csv.display());
            }
            Ok(o.completed)
        }
        Cmd::Validate { scenario, quiet } => {
            let cfg = load(&scenario)?;
            if !quiet {
                println!("{}: ok ({} anchors, {} cylinders)", cfg.name, cfg.anchors.len(), cfg.cylinders.len());
            }
            Ok(true)
        }
        Cmd::ExportCsv { log, out, quiet } => {
            let run = read_ndjson(&log).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let path = out.join(CSV_NAME);
            export_csv(&run, &path).map_err(|e| e.to_string())?;
            if !quiet {
                println!("wrote {}", path.display());
            }
            Ok(run.outcome.completed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
