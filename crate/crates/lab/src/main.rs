use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use furl_lab::audit::{audit_rewards, write_audit_csv};
use furl_lab::checkpoint::load_heads;
use furl_lab::runner::run_to_dir;
use furl_lab::settings::{RunSpec, Settings};
use furl_lab::sweep::{sweep, SweepParam};
use furl_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "furl", version, about = "Fuzzy embedding rewards, reward alignment and relay exploration on point-mass tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its CSVs.
    Run(Common),
    /// Score an expert episode with raw and (optionally) aligned rewards.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Heads checkpoint from a previous run.
        #[arg(long)]
        heads: Option<PathBuf>,
        /// Start the expert at `x,y` instead of the task's start.
        #[arg(long, value_parser = parse_point)]
        start: Option<[f64; 2]>,
    },
    /// Run every (value, seed) pair and aggregate the summaries.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rho or epsilon.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// INI file with [run], [env], [oracle], [sac], [heads], [align] and [relay] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory; falls back to $FURL_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, as `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    Ok([x.trim().parse().map_err(|_| "bad x")?, y.trim().parse().map_err(|_| "bad y")?])
}

impl Common {
    fn resolve(&self) -> Result<RunSpec> {
        let mut s = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::new(),
        };
        let mut cli = Settings::new();
        for a in &self.sets {
            cli.set_assignment(a)?;
        }
        let opt = |v: &Option<String>| v.clone();
        let flags = [
            ("run", "algo", opt(&self.algo)),
            ("run", "env", opt(&self.env)),
            ("run", "seed", self.seed.map(|x| x.to_string())),
            ("run", "rho", self.rho.map(|x| x.to_string())),
            ("oracle", "epsilon", self.epsilon.map(|x| x.to_string())),
            ("run", "steps", self.steps.map(|x| x.to_string())),
            ("run", "out_dir", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (section, key, v) in flags {
            if let Some(v) = v {
                cli.set(section, key, &v)?;
            }
        }
        s.merge(&cli);
        s.resolve()
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("furl: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let spec = common.resolve()?;
            let out = run_to_dir(&spec)?;
            let s = &out.log.summary;
            println!(
                "{} seed {}: final success {} auc {:.4} first success {} -> {}",
                spec.cfg.algo.name(),
                spec.cfg.seed,
                s.final_success,
                s.auc,
                s.first_success_step.map_or("never".to_string(), |x| x.to_string()),
                spec.out_dir.display()
            );
        }
        Command::Audit { common, heads, start } => {
            let spec = common.resolve()?;
            let heads = heads.map(|p| load_heads(&p)).transpose()?;
            let audit = audit_rewards(&spec.cfg, heads.as_ref(), start)?;
            std::fs::create_dir_all(&spec.out_dir).map_err(|e| LabError::io(&spec.out_dir, e))?;
            write_audit_csv(&spec.out_dir, &audit)?;
            print!("raw spearman {:.4}", audit.raw.value);
            if let Some(a) = audit.aligned {
                print!(", aligned spearman {:.4}", a.value);
            }
            println!(" over {} steps -> {}", audit.rows.len(), spec.out_dir.display());
        }
        Command::Sweep { common, param, values, seeds } => {
            let spec = common.resolve()?;
            let p = SweepParam::from_name(&param)
                .ok_or_else(|| LabError::Config(format!("cannot sweep `{param}`; use rho or epsilon")))?;
            let cells = sweep(&spec, p, &values, &seeds)?;
            for c in &cells {
                println!(
                    "{}={}: final success {:.3} ± {:.3}, auc {:.3} ± {:.3}, {} failed",
                    p.name(),
                    c.value,
                    c.mean_final_success(),
                    c.std_final_success(),
                    c.mean_auc(),
                    c.std_auc(),
                    c.failures.len()
                );
            }
        }
    }
    Ok(())
}
