use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use wizundry_server::cli;
use wizundry_server::config::{load_config, SECRET_ENV};
use wizundry_server::serve::{start, termination_signal};

#[derive(Parser)]
#[command(name = "wizundry", version, about = "Multi-wizard Wizard-of-Oz orchestration server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Study analytics over exported files.
    Analytics {
        #[command(subcommand)]
        command: Analytics,
    },
}

#[derive(Subcommand)]
enum Analytics {
    /// NASA-TLX statistics for a scores CSV.
    Tlx {
        scores: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Feature usage per wizard from a trial log CSV.
    Usage {
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { config } => serve(config),
        Command::Analytics { command } => {
            let out = match command {
                Analytics::Tlx { scores, json } => cli::tlx(&scores, json),
                Analytics::Usage { log, json } => cli::usage(&log, json),
            };
            match out {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

fn serve(path: PathBuf) -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let loaded = match load_config(&path, std::env::var(SECRET_ENV).ok()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    for key in &loaded.unknown_keys {
        tracing::warn!(key, "ignoring unknown config key");
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = runtime.block_on(async {
        let signal = termination_signal()?;
        let running = start(&loaded.config).await?;
        println!("listening on {}", running.addr);
        signal.await;
        running.stop().await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
