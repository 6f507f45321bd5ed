//! `ranctl`: train, baseline, evaluate, fit traffic profiles, export curves.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ranctl_core::harness::{self, Environment, ExperimentConfig};
use ranctl_core::ransim::{fit_traffic_profiles, read_traffic_records, UeProfile};
use ranctl_core::Error;

#[derive(Parser)]
#[command(
    name = "ranctl",
    version,
    about = "Learn MAC scheduler selection on a simulated LTE cell"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agent; writes curve.csv, checkpoints and the resolved config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from OUT/checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate all five constant scheduler options; writes baseline.csv.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a trained network without learning and report its mean reward.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint directory or `.qnet` file.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit UE traffic profiles from session records; writes a `[[ue_profiles]]` TOML snippet.
    FitTraffic {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a run's learning curve.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn invalid(e: Error) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Loads, applies the seed override, validates, and echoes the resolved config.
fn resolve(config: &Path, seed: Option<u64>) -> Result<(ExperimentConfig, Environment), Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(invalid)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let env = Environment::new(&cfg).map_err(invalid)?;
    println!("# resolved configuration");
    print!("{}", cfg.to_toml_string());
    println!("# end of configuration");
    Ok((cfg, env))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| {
        runtime(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| {
        runtime(Error::Io {
            path: dir.into(),
            source: e,
        })
    })
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    episodes: usize,
    epsilon: f64,
    mean_reward: f64,
    stderr: f64,
    episode_means: Vec<f64>,
}

#[derive(Serialize)]
struct ProfileFile {
    ue_profiles: Vec<UeProfile>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            resume,
        } => {
            let (cfg, env) = resolve(&config, seed)?;
            create_dir(&out)?;
            write(&out.join("config.resolved.toml"), &cfg.to_toml_string())?;
            let outcome = harness::train_experiment(&env, Some(&out), resume)
                .map_err(|e| Failure::Runtime(format!("{e} (partial results in {})", out.display())))?;
            if let Some(last) = outcome.curve.last() {
                println!(
                    "trained {} episodes; last mean reward {:.6} (stderr {:.6}), epsilon {:.4}",
                    outcome.curve.len(),
                    last.mean_reward,
                    last.stderr,
                    last.epsilon_end
                );
            } else {
                println!("trained 0 episodes");
            }
            println!("curve: {}", harness::curve_path(&out).display());
            Ok(())
        }
        Command::Baseline { config, out, seed } => {
            let (cfg, env) = resolve(&config, seed)?;
            create_dir(&out)?;
            write(&out.join("config.resolved.toml"), &cfg.to_toml_string())?;
            let table = harness::run_baseline_suite(&env).map_err(runtime)?;
            let path = out.join("baseline.csv");
            harness::write_baseline_csv(&path, &table).map_err(runtime)?;
            for r in &table.rows {
                println!("{:<26} {:>10.6} +- {:.6}", r.action.name(), r.mean_reward, r.stderr);
            }
            let reference = table.reference(cfg.baseline_action);
            println!("best: {}; reference: {}", table.best().action, reference.action);
            println!("table: {}", path.display());
            Ok(())
        }
        Command::Eval {
            config,
            checkpoint,
            episodes,
            epsilon,
            seed,
            report,
        } => {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(Failure::Validation(format!(
                    "--epsilon must be in [0, 1], got {epsilon}"
                )));
            }
            if episodes == 0 {
                return Err(Failure::Validation("--episodes must be positive".into()));
            }
            let (_, env) = resolve(&config, seed)?;
            let online = harness::load_policy_network(&checkpoint).map_err(runtime)?;
            let results = harness::evaluate(&env, &online, episodes, epsilon).map_err(runtime)?;
            let means: Vec<f64> = results.iter().map(|r| r.mean_reward).collect();
            let (mean_reward, stderr) = harness::episode_stats(&means).map_err(runtime)?;
            let rep = EvalReport {
                checkpoint,
                episodes,
                epsilon,
                mean_reward,
                stderr,
                episode_means: means,
            };
            let json = serde_json::to_string_pretty(&rep).expect("report serializes");
            println!("{json}");
            if let Some(path) = report {
                write(&path, &(json + "\n"))?;
            }
            Ok(())
        }
        Command::FitTraffic { records, k, out, seed } => {
            let recs = read_traffic_records(&records).map_err(invalid)?;
            let profiles = fit_traffic_profiles(&recs, k, seed).map_err(invalid)?;
            let text = toml::to_string(&ProfileFile { ue_profiles: profiles }).expect("profiles serialize");
            write(&out, &text)?;
            print!("{text}");
            Ok(())
        }
        Command::Export { run, format, out } => {
            let curve = harness::read_curve_csv(&harness::curve_path(&run)).map_err(runtime)?;
            let text = match format {
                Format::Csv => harness::curve_to_csv(&curve),
                Format::Json => serde_json::to_string_pretty(&curve).expect("curve serializes") + "\n",
            };
            match out {
                Some(path) => write(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
