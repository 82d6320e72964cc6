use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sttl_experiments::config::{parse_override, parse_value};
use sttl_experiments::run::{finish_run, PolicyFile, POLICY_FILE};
use sttl_experiments::{presets, report, run, sweep, ExperimentConfig, Mode, ReportStatus, RunOptions};

#[derive(Parser)]
#[command(name = "sttl", version, about = "Learned soft-TTL caching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file; a result file's echoed config is accepted too.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see `sttl presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Override one config key, e.g. `--set num_files=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn overrides(&self) -> anyhow::Result<Vec<(String, String)>> {
        let mut o = self.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
        if let Some(seed) = self.seed {
            o.push(("seed".into(), seed.to_string()));
        }
        Ok(o)
    }

    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let overrides = self.overrides()?;
        Ok(match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path, &overrides).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(name)) => {
                let text = presets::get(name).with_context(|| format!("no preset named {name:?}"))?;
                ExperimentConfig::parse(text, &overrides)?
            }
            (None, None) => ExperimentConfig::parse("", &overrides)?,
        })
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for result files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Directory memoizing oracle results.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Also log every step of the first evaluation episode.
    #[arg(long)]
    step_log: bool,
}

impl OutputArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            cache_dir: self.cache.clone(),
            sweep: None,
            step_log: self.step_log,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent controlling all caches in lockstep.
    TrainSarl {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Train one independent agent per SBS.
    TrainMarl {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Score a saved policy on the evaluation traces.
    Evaluate {
        /// A `policy.json` written by a previous run.
        #[arg(long)]
        policy: PathBuf,
        /// Override keys of the policy's own config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Search lockstep tables: exhaustive grid, or per file under a hard
    /// capacity bound with `--sync`.
    Oracle {
        #[arg(long)]
        sync: bool,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run every point of the config's sweep that has no results yet.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Summarize all runs below a directory; exits 1 if any run misses its
    /// threshold and 2 if there are no runs.
    Report { dir: PathBuf },
    /// List or print the built-in configurations.
    Presets { name: Option<String> },
}

fn print_summary(s: &sttl_experiments::Summary) {
    println!(
        "{} {} seed {}: L/omega {:.4}, objective {:.4}, penalized {:.4}",
        s.name, s.mode, s.seed, s.l_over_omega, s.objective, s.penalized
    );
    if let (Some(o), Some(g)) = (s.oracle_penalized, s.oracle_gap) {
        println!("oracle penalized {o:.4}, gap {:.2}%", 100.0 * g);
    }
}

fn main_inner() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::TrainSarl { config, output } => {
            print_summary(&run(&config.load()?, Mode::Sarl, &output.out, &output.options())?);
        }
        Command::TrainMarl { config, output } => {
            print_summary(&run(&config.load()?, Mode::Marl, &output.out, &output.options())?);
        }
        Command::Oracle { sync, config, output } => {
            let mode = if sync { Mode::SyncOracle } else { Mode::Oracle };
            print_summary(&run(&config.load()?, mode, &output.out, &output.options())?);
        }
        Command::Evaluate { policy, overrides, output } => {
            let mut p = PolicyFile::load(&policy).with_context(|| format!("loading {}", policy.display()))?;
            let overrides = overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
            let mut cfg = p.config.clone();
            for (k, v) in &overrides {
                cfg = cfg.with_value(k, parse_value(v))?;
            }
            if cfg.num_files != p.config.num_files || cfg.num_sbs != p.config.num_sbs || cfg.num_updates != p.config.num_updates {
                bail!("num_files, num_sbs and num_updates are fixed by the policy");
            }
            p.config = cfg.clone();
            std::fs::create_dir_all(&output.out)?;
            if output.out.join(POLICY_FILE) != policy {
                p.save(&output.out.join(POLICY_FILE))?;
            }
            print_summary(&finish_run(&cfg, &p, &output.out, &output.options())?);
        }
        Command::Sweep { config, output } => {
            let outcome = sweep(&config.load()?, &output.out, &output.options())?;
            println!("{} points run, {} already complete", outcome.ran, outcome.skipped);
            for s in &outcome.summaries {
                print_summary(s);
            }
        }
        Command::Report { dir } => {
            let r = report(&dir)?;
            print!("{}", r.text);
            return Ok(match r.status {
                ReportStatus::Passed => ExitCode::SUCCESS,
                ReportStatus::Failed(_) => ExitCode::from(1),
                ReportStatus::NoResults => ExitCode::from(2),
            });
        }
        Command::Presets { name: None } => {
            for n in presets::names() {
                println!("{n}");
            }
        }
        Command::Presets { name: Some(name) } => match presets::get(&name) {
            Some(text) => print!("{text}"),
            None => bail!("no preset named {name:?}"),
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
