use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tfde::{metadata, run, CliError, ExampleId, ExperimentConfig, Format, RunOptions, SchemeChoice};

/// Reproduce tempered fractional PDE benchmarks from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "tfde", version)]
struct Cli {
    /// Example to run.
    #[arg(value_enum)]
    example: ExampleId,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; without it the table goes to stdout and no sidecar
    /// is written.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Solve with wavelet-preconditioned GMRES (ex1) or GMRES shifted solves
    /// (ex2) instead of direct factorizations.
    #[arg(long)]
    iterative: bool,
    /// Time-integration scheme; overrides the config.
    #[arg(long, value_enum)]
    scheme: Option<SchemeChoice>,
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let (cfg, raw) = ExperimentConfig::load(&cli.config)?;
    let opts = RunOptions { iterative: cli.iterative, scheme: cli.scheme };
    let table = run(cli.example, &cfg, opts)?;
    for d in &table.diagnostics {
        eprintln!("note: {d}");
    }
    for f in &table.flags {
        eprintln!("flagged row {}: {}", f.row, f.reason);
    }
    match &cli.out {
        Some(dir) => {
            let stem = cli.example.name();
            let paths = table.write(dir, stem, cli.format)?;
            let meta = metadata(cli.example, &raw, opts, cli.format, &table);
            let meta_path = dir.join(format!("{stem}.meta.json"));
            std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
            for p in paths.iter().chain(std::iter::once(&meta_path)) {
                eprintln!("wrote {}", p.display());
            }
        }
        None => match cli.format {
            Format::Csv => print!("{}", table.to_csv()),
            Format::Json => print!("{}", table.to_json()),
        },
    }
    Ok(table.is_partial())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(tfde::EXIT_FAILURE as u8) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(tfde::EXIT_PARTIAL as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(tfde::EXIT_FAILURE as u8)
        }
    }
}
