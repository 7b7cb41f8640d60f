use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ghostlab_cli::{format_report, load, output_dir, run_experiment, run_sweep, Overrides};

#[derive(Parser)]
#[command(name = "ghostlab", version, about = "Ghost imaging and ghost diffraction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its outputs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Run a config once per value of one key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: config `out`, then $GHOSTLAB_OUT, then ./ghostlab_out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides {
            seed: f.seed,
            frames: f.frames,
            workers: f.workers,
            out: f.out,
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::Run { config, flags } => {
            let ov = Overrides::from(flags);
            let cfg = load(&config, &ov)?;
            let dir = output_dir(&cfg, &ov);
            let report = run_experiment(&cfg, &dir)?;
            print!("{}", format_report(&report));
            println!("outputs in {}", dir.display());
            Ok(report.passed())
        }
        Command::Validate { config } => {
            let cfg = load(&config, &Overrides::default())?;
            for (k, v) in cfg.scenario.echo() {
                println!("{k} = {v}");
            }
            println!("workers = {}", cfg.workers());
            Ok(true)
        }
        Command::Sweep {
            config,
            key,
            values,
            flags,
        } => {
            let ov = Overrides::from(flags);
            let runs = run_sweep(&config, &ov, &key, &values)?;
            let mut all = true;
            for (v, r) in &runs {
                println!("# {key} = {v}");
                print!("{}", format_report(r));
                all &= r.passed();
            }
            Ok(all)
        }
    }
}
