use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boostleak::cli::{self, Axis, ExperimentSpec, Overrides, Stage, StageError};

#[derive(Parser)]
#[command(name = "boostleak", version, about = "Federated GBDT reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seconds per assignment problem; overrides the spec.
    #[arg(long = "time-limit")]
    time_limit: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Split the data into a test set and client shards.
    Partition(Common),
    /// Run the federated protocol and save the model and the observer's view.
    Train(Common),
    /// Reconstruct the victim's data from the saved view.
    Attack(Common),
    /// Score the saved reconstruction and write summary.csv.
    Evaluate(Common),
    /// All four stages in sequence.
    Run(Common),
    /// One run per axis value, aggregated into sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `depth=3..8`, `epsilon=inf,1,0.125` or `n_clients=3,5,10`.
        #[arg(long)]
        axis: Option<String>,
    },
}

fn load(c: &Common) -> Result<ExperimentSpec, StageError> {
    let mut spec = ExperimentSpec::load(&c.config).map_err(|source| StageError {
        stage: Stage::Config,
        source,
    })?;
    Overrides {
        seed: c.seed,
        out: c.out.clone(),
        time_limit: c.time_limit,
    }
    .apply(&mut spec);
    Ok(spec)
}

fn print_summary(s: &cli::Summary) {
    println!(
        "{} depth {} trees {} epsilon {}: RA(all) {:.4} RA(top-k) {:.4} RA(phase 1) {:.4} F1 {:.4} AUC {:.4}",
        s.protocol, s.depth, s.n_trees, s.epsilon, s.ra_all, s.ra_topk, s.ra_phase1, s.f1, s.auc
    );
}

fn dispatch(command: Command) -> Result<(), StageError> {
    match command {
        Command::Partition(c) => {
            let p = cli::cmd_partition(&load(&c)?)?;
            let sizes: Vec<String> = p.clients.iter().map(|d| d.len().to_string()).collect();
            println!("clients: {}; test rows: {}", sizes.join(", "), p.test.len());
        }
        Command::Train(c) => {
            let o = cli::cmd_train(&load(&c)?)?;
            println!("trained {} trees", o.global.len());
        }
        Command::Attack(c) => {
            let r = cli::cmd_attack(&load(&c)?)?;
            println!("reconstructed {} samples", r.complete.dataset.len());
        }
        Command::Evaluate(c) => print_summary(&cli::cmd_evaluate(&load(&c)?)?.summary),
        Command::Run(c) => print_summary(&cli::cmd_run(&load(&c)?)?.summary),
        Command::Sweep { common, axis } => {
            let spec = load(&common)?;
            let axis = axis
                .map(|a| a.parse::<Axis>())
                .transpose()
                .map_err(|source| StageError {
                    stage: Stage::Config,
                    source,
                })?;
            for row in cli::cmd_sweep(&spec, axis.as_ref())? {
                print!("{}={}: ", row.axis, row.value);
                print_summary(&row.summary);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors are config errors; clap's own code 2 would read as a training failure.
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
