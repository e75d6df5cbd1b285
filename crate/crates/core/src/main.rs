use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use weylforge::cli_harness::{execute, load_problem, Command, OutputFormat, Overrides, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Exact Fedosov star products on action–angle charts.
#[derive(Parser, Debug)]
#[command(name = "weylforge", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Problem file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Highest power N of ℏ.
    #[arg(long)]
    order: Option<u32>,
    /// Weyl degree cap D (default 2N).
    #[arg(long)]
    degree: Option<u32>,
    /// Accept D < 2N; the top ℏ-order is then possibly truncated.
    #[arg(long)]
    allow_shallow_degree: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Reuse a solved connection written by `--save-state`.
    #[arg(long)]
    load_state: Option<PathBuf>,
    #[arg(long)]
    save_state: Option<PathBuf>,
    /// Write the table computed by `star-table`.
    #[arg(long)]
    save_table: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { order: cli.order, degree: cli.degree, seed: cli.seed, allow_shallow_degree: cli.allow_shallow_degree };
    let opts = RunOptions { load_state: cli.load_state, save_state: cli.save_state, save_table: cli.save_table };
    let format = match cli.format {
        Format::Text => OutputFormat::Text,
        Format::Json => OutputFormat::Json,
    };
    let result = load_problem(&cli.spec, &overrides).and_then(|spec| execute(&spec, cli.command, &opts));
    match result {
        Ok(report) => {
            let text = report.render(format);
            match &cli.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
