use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eccvol_core::pipeline::{inspect_embedding, Pipeline, PipelineError, ProviderKind};

#[derive(Parser)]
#[command(name = "eccvol", version, about = "Earnings-call volatility pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, short, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Validate transcripts and prices and write the corpus store and split.
    Ingest,
    /// Compute log-volatility labels for every call and horizon.
    Label,
    /// Write per-call audio and sentence embedding matrices.
    Embed {
        #[arg(long, value_enum)]
        provider: Option<ProviderKind>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summaries, focus extraction and text embeddings.
    Analyze {
        #[arg(long, value_enum)]
        provider: Option<ProviderKind>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid-search and train one model per horizon.
    Train,
    /// Test-split MSE of the trained models.
    Eval {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Train and evaluate the seven feature combinations.
    Ablate {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the header and value statistics of an embedding file.
    Inspect { file: PathBuf },
    /// ingest, label, embed, analyze, train and eval in one go.
    Run {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn print_table(table: &eccvol_core::eval::ResultTable, format: Format) {
    match format {
        Format::Text => print!("{}", table.render()),
        Format::Csv => print!("{}", table.to_csv_string()),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::Inspect { file } = &cli.command {
        let s = inspect_embedding(file)?;
        println!(
            "{}",
            serde_json::to_string_pretty(&s).expect("stats serialize")
        );
        return Ok(());
    }
    let p = Pipeline::load(&cli.config)?;
    let provider_for = |kind: Option<ProviderKind>, seed: Option<u64>| {
        p.provider(
            kind.unwrap_or(p.config.provider.kind),
            seed.unwrap_or(p.config.provider.seed),
        )
    };
    match cli.command {
        Command::Ingest => {
            let split = p.ingest()?;
            eprintln!(
                "train {} / test {}",
                split.train_ids.len(),
                split.test_ids.len()
            );
        }
        Command::Label => {
            let (n, issues) = p.label()?;
            eprintln!("{n} labels written, {issues} unlabelled (call, tau) pairs");
        }
        Command::Embed { provider, seed } => {
            let n = p.embed(provider_for(provider, seed)?.as_ref())?;
            eprintln!("embedded {n} calls");
        }
        Command::Analyze { provider, seed } => {
            let provider = provider_for(provider, seed)?;
            let n = p.analyze(p.client()?.as_ref(), provider.as_ref())?;
            eprintln!("analyzed {n} calls");
        }
        Command::Train => {
            for s in p.train()? {
                eprintln!(
                    "tau {}: batch {} lr {:e}{}",
                    s.tau,
                    s.batch_size,
                    s.learning_rate,
                    if s.failed_cells.is_empty() {
                        String::new()
                    } else {
                        format!(" ({} cells failed)", s.failed_cells.len())
                    }
                );
            }
        }
        Command::Eval { format } => print_table(&p.eval()?, format),
        Command::Ablate { format } => {
            let report = p.ablate()?;
            for f in &report.failures {
                eprintln!("{} failed: {}", f.config, f.error);
            }
            print_table(&report.table, format);
        }
        Command::Run { format } => print_table(&p.run_all()?, format),
        Command::Inspect { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
