use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uwbloc_cli::ablate::ablate;
use uwbloc_cli::baseline::baseline;
use uwbloc_cli::evaluate::evaluate;
use uwbloc_cli::learn::train_models;
use uwbloc_cli::prepare::prepare;
use uwbloc_cli::probe::overfit_probe;
use uwbloc_cli::simulate::simulate;
use uwbloc_cli::{CliError, ModelKind, Run, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "uwbloc", version, about = "UWB localization experiments: simulate, prepare, train, baseline, evaluate, ablate")]
struct Cli {
    /// TOML run config; overrides --profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled config: desk (small) or full (full sizes).
    #[arg(long, global = true, default_value = "desk")]
    profile: String,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 1 runs serially, 0 uses every core. Outputs do not
    /// depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Directory all artifacts are read from and written to.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trials and write the train/test manifest.
    Simulate {
        /// Overrides trajectory.n_trials.
        #[arg(long)]
        n_trials: Option<usize>,
    },
    /// Bin, label, window and normalize the trials.
    Prepare,
    /// Train learned models (default: model.methods).
    Train {
        #[arg(long = "model")]
        models: Vec<ModelKind>,
    },
    /// Run the classical solver on the test trials.
    Baseline,
    /// Score all methods on the test trials and write comparison tables.
    Evaluate,
    /// Retrain over the labels x tags grid.
    Ablate,
    /// Train the configured Mamba on a few clean windows until it memorizes them.
    Probe,
    /// Simulate, prepare, train, baseline and evaluate in one go.
    Pipeline,
    /// Print the resolved config and its hash.
    ShowConfig,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::profile(&cli.profile)?,
    };
    if let Command::Simulate { n_trials: Some(n) } = cli.command {
        cfg.trajectory.n_trials = n;
        cfg.validate()?;
    }
    let run = Run::new(cfg, cli.seed, &cli.workdir, cli.force);
    let warn = |ws: &[String]| ws.iter().for_each(|w| eprintln!("warning: {w}"));
    match cli.command {
        Command::Simulate { .. } => {
            let s = simulate(&run)?;
            println!("{s}");
            warn(&s.warnings);
        }
        Command::Prepare => {
            let s = prepare(&run)?;
            println!("{s}");
            warn(&s.warnings);
        }
        Command::Train { models } => {
            let kinds = if models.is_empty() { run.cfg.model.methods.clone() } else { models };
            for r in train_models(&run, &kinds)? {
                print!("{r}");
            }
        }
        Command::Baseline => {
            for s in baseline(&run)? {
                println!("{s}");
            }
        }
        Command::Evaluate => print!("{}", evaluate(&run)?),
        Command::Ablate => {
            let a = ablate(&run)?;
            print!("{a}");
            warn(&a.warnings);
        }
        Command::Probe => println!("{}", overfit_probe(&run)?),
        Command::Pipeline => {
            let s = simulate(&run)?;
            warn(&s.warnings);
            let p = prepare(&run)?;
            println!("{p}");
            warn(&p.warnings);
            for r in train_models(&run, &run.cfg.model.methods)? {
                print!("{r}");
            }
            baseline(&run)?;
            print!("{}", evaluate(&run)?);
        }
        Command::ShowConfig => {
            println!("# {}", run.provenance());
            print!("{}", run.cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build();
    let result = match pool {
        Ok(pool) => pool.install(|| execute(cli)),
        Err(e) => Err(CliError::Config(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
