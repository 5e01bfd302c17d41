use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twostage_mot::io::{load_config, run_eval, run_sim, run_track, table_path};
use twostage_mot::{Ablation, Error, Solver, TrackerConfig};

/// Online 3D multi-object tracker with local and global association.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Tracker config JSON; the embedded default is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the LAP solver.
    #[arg(long, value_parser = parse_solver)]
    solver: Option<Solver>,
    /// Apply an ablation preset on top of the config.
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<Ablation>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrackerConfig, Error> {
        let mut config = load_config(self.config.as_deref())?;
        if let Some(a) = self.ablation {
            config = config.with_ablation(a);
        }
        if let Some(s) = self.solver {
            config.solver = s;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection log and write a track log.
    Track {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a track log against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// Track log to evaluate.
        #[arg(long)]
        input: PathBuf,
        /// JSON report path; the text table goes next to it with a .txt extension.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate synthetic scenes from a scenario spec file.
    Sim {
        /// Scenario spec (one scenario or a list).
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the embedded default config.
    Config,
}

fn parse_solver(s: &str) -> Result<Solver, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Track {
            input,
            output,
            config,
        } => {
            let summary = run_track(&input, &config.resolve()?, &output)?;
            println!(
                "scenes {}  frames {}  created {}  linked {}  terminated {}  deleted {}",
                summary.scenes,
                summary.frames,
                summary.created,
                summary.linked,
                summary.terminated,
                summary.deleted
            );
        }
        Command::Eval {
            gt,
            input,
            output,
            config,
        } => {
            let report = run_eval(&gt, &input, &config.resolve()?, output.as_deref())?;
            print!("{}", report.to_table());
            if let Some(p) = output {
                log::info!("wrote {} and {}", p.display(), table_path(&p).display());
            }
        }
        Command::Sim { input, output } => {
            for (gt, dets) in run_sim(&input, &output)? {
                println!("{}\t{}", gt.display(), dets.display());
            }
        }
        Command::Config => print!("{}", twostage_mot::config::DEFAULT_CONFIG_JSON),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TWOSTAGE_MOT_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
