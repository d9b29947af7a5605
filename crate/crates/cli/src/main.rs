use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mercbo_cli::{load_config, run_experiment, CliError};

#[derive(Parser, Debug)]
#[command(name = "mercbo", version, about = "Combinatorial Bayesian optimization experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MERCBO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Check a config and list every violation.
    Validate { config: PathBuf },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::Validate { config } => match load_config(&config).and_then(|c| c.validate()) {
            Ok(()) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run { config, output_dir, seed, repeats } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            match run_experiment(&cfg) {
                Ok(report) => {
                    for r in &report.manifest.runs {
                        println!(
                            "run {:>3}  seed {:>20}  best {}  at {}",
                            r.run_id,
                            r.seed,
                            r.best_value.map_or("-".into(), |v| v.to_string()),
                            r.best_point.as_deref().unwrap_or("-")
                        );
                    }
                    println!("wrote {}", report.output_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
