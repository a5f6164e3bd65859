use std::path::PathBuf;
use std::process::ExitCode;

use aggnet::aggregation::AggregationOp;
use aggnet_cli::{cmd_compose, cmd_evaluate, cmd_forgetting_report, cmd_synth, cmd_train, exit_code, write_report};
use clap::{Parser, Subcommand, ValueEnum};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "aggnet", version, about = "Train aggregable networks and compose them at test time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Sum,
    Mean,
}

#[derive(Subcommand)]
enum Command {
    /// Train a run and write its checkpoints, metrics.csv and config echo.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory names, overriding the config's `datasets`.
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
    },
    /// Combine (`+`) and remove (`-`) extractors of a run, e.g. "(N1+N2)-N2".
    Compose {
        expr: String,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Extractor supplying the normalisation parameters [default: Nstar, else the first operand].
        #[arg(long)]
        donor: Option<String>,
        /// Aggregation operator [default: the run's].
        #[arg(long, value_enum)]
        op: Option<Op>,
    },
    /// Accuracy table on each dataset's test split and their union.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        /// Row expressions [default: every trained model, then N1+..+Nn].
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Composed checkpoints written by `compose`.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Also write report.csv and report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Commutativity and selective-forgetting table for a two-dataset joint run.
    ForgettingReport {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic dataset pair as IDX files (synth-a, synth-b).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        train_per_class: usize,
        #[arg(long, default_value_t = 100)]
        test_per_class: usize,
    },
}

fn run(cli: Cli) -> aggnet::Result<()> {
    match cli.command {
        Command::Train { config, data, out, datasets } => {
            let bundle = cmd_train(&config, &data, &out, &datasets)?;
            for rec in &bundle.history {
                let vals: Vec<String> =
                    rec.models.iter().map(|m| format!("{} val {:.4}", m.model, m.val_accuracy)).collect();
                println!(
                    "epoch {:>3}  L_task {:.4}  L_agg {:.4}  J {:.4}  {}",
                    rec.epoch,
                    rec.loss_task,
                    rec.loss_agg,
                    rec.loss_total,
                    vals.join("  ")
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Compose { expr, run, out, donor, op } => {
            let op = op.map(|o| match o {
                Op::Sum => AggregationOp::Sum,
                Op::Mean => AggregationOp::Mean,
            });
            let ck = cmd_compose(&expr, &run, &out, donor.as_deref(), op)?;
            let c = ck.manifest.composition.as_ref().expect("compose records its expression");
            println!("{} (donor {}, {} operands) -> {}", c.expression, c.donor, c.count, out.display());
        }
        Command::Evaluate { run, data, datasets, models, checkpoints, out } => {
            let table = cmd_evaluate(&run, &data, &datasets, &models, &checkpoints)?;
            print!("{}", table.to_text());
            if let Some(dir) = out {
                write_report(&dir, "report", &table.to_csv(), &table.to_text())?;
            }
        }
        Command::ForgettingReport { run, data, datasets, out } => {
            let report = cmd_forgetting_report(&run, &data, &datasets)?;
            print!("{}", report.to_text());
            if let Some(dir) = out {
                write_report(&dir, "forgetting", &report.table.to_csv(), &report.to_text())?;
            }
        }
        Command::Synth { out, seed, train_per_class, test_per_class } => {
            cmd_synth(&out, seed, train_per_class, test_per_class)?;
            println!("wrote synth-a and synth-b under {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
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
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
