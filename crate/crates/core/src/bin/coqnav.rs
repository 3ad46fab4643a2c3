use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use coqnav::config::Config;
use coqnav::extract::{extract, ExtractOptions, MockMode};
use coqnav::mock::{record, replay, Fixture, Substitutions};

#[derive(Parser)]
#[command(name = "coqnav", version, about = "Coq proof data extraction over coq-lsp")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract every proof of a workspace into JSON.
    Extract {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// File pattern relative to the workspace; repeatable. Default `**/*.v`.
        #[arg(long = "glob")]
        globs: Vec<String>,
        /// Per-file limit in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replay recorded fixtures from this directory instead of running a server.
        #[arg(long, conflicts_with = "record")]
        mock: Option<PathBuf>,
        /// Record one fixture per file into this directory.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Summarize an extracted dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Fixture replay and recording.
    Mock {
        #[command(subcommand)]
        command: MockCmd,
    },
}

#[derive(Subcommand)]
enum MockCmd {
    /// Act as a language server on stdio, answering from a fixture.
    Replay {
        fixture: PathBuf,
        /// NAME=PATH placeholder binding; repeatable.
        #[arg(long)]
        subst: Vec<String>,
    },
    /// Relay stdio to a server and write what passed into a fixture.
    Record {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        subst: Vec<String>,
        #[arg(last = true, required = true)]
        command: Vec<String>,
    },
}

fn substitutions(args: &[String]) -> Result<Substitutions, String> {
    let mut subs = Substitutions::new();
    for a in args {
        subs.bind_arg(a)?;
    }
    Ok(subs)
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Cmd::Extract { workspace, output, globs, timeout, jobs, config, mock, record } => {
            let config = match config {
                Some(p) => Config::load(&p)?,
                None => Config::default(),
            };
            let mut opts = ExtractOptions::new(workspace, output, config);
            opts.globs = globs;
            opts.timeout = timeout.map(Duration::from_secs_f64);
            opts.jobs = jobs;
            opts.mock = mock.map(MockMode::Replay).or(record.map(MockMode::Record));
            opts.mock_command = vec![std::env::current_exe()?.display().to_string()];
            let summary = extract(&opts)?;
            let c = &summary.counts;
            println!(
                "{} files: {} ok, {} with Coq errors, {} timed out, {} failed",
                c.files, c.ok, c.coq_errors, c.timeout, c.failed
            );
            for f in summary.files.iter().filter(|f| !f.errors.is_empty()) {
                eprintln!("{}: {:?}: {}", f.file, f.status, f.errors.join("; "));
            }
            Ok(if c.failed > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Cmd::Stats { dataset, json } => {
            let s = coqnav::stats::stats(&dataset)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{s}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Mock { command: MockCmd::Replay { fixture, subst } } => {
            let f = Fixture::load(&fixture)?;
            let subs = substitutions(&subst)?;
            match replay(&f, subs, std::io::stdin().lock(), std::io::stdout().lock()) {
                Ok(_) => Ok(ExitCode::SUCCESS),
                Err(e) => {
                    eprintln!("coqnav mock replay: {e}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Cmd::Mock { command: MockCmd::Record { output, subst, command } } => {
            let subs = substitutions(&subst)?;
            let f = record(&command, subs, std::io::stdin().lock(), std::io::stdout())?;
            let tmp = output.with_extension("json.tmp");
            std::fs::write(&tmp, f.to_pretty())?;
            std::fs::rename(&tmp, &output)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("coqnav: {e}");
            ExitCode::FAILURE
        }
    }
}
