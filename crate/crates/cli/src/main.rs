use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgdecay_cli::{exit, run, Overrides, RunConfig};
use kgdecay_core::{lambert_w0, Workers};

#[derive(Parser)]
#[command(
    name = "kgdecay",
    version,
    about = "Decay certificates for damped Klein-Gordon equations with periodic coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the certification pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides run.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Stage to run; repeat for several. Overrides run.stages.
        #[arg(long = "stage")]
        stages: Vec<String>,
    },
    /// Print the principal Lambert W value W(x).
    W {
        #[arg(allow_negative_numbers = true)]
        x: f64,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return code(if e.use_stderr() {
                exit::PARSE
            } else {
                exit::OK
            });
        }
    };
    match cli.command {
        Command::W { x } => match lambert_w0(x) {
            Ok(w) => {
                println!("{w:.12}");
                code(exit::OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit::PARSE)
            }
        },
        Command::Run {
            config,
            out,
            workers,
            seed,
            stages,
        } => {
            let overrides = Overrides { out, seed, stages };
            let result = RunConfig::load(&config, &overrides).and_then(|cfg| {
                let workers = Workers::new(workers)?;
                run(&cfg, &workers).map(|c| (c, cfg.output_dir))
            });
            match result {
                Ok((cert, dir)) => {
                    println!("wrote {}", dir.join("certificate.json").display());
                    if !cert.all_passed {
                        eprintln!(
                            "some checks failed; see {}",
                            dir.join("summary.txt").display()
                        );
                    }
                    code(cert.exit_code)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(e.exit_code())
                }
            }
        }
    }
}
