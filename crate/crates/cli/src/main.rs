use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kerr_cli::{parse_config, run, Command, RunError, EXIT_ASSERT, EXIT_OK};

/// Kerr wave, geodesic and symbol experiments driven by flat config files.
#[derive(Parser)]
#[command(name = "kerrlab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// `key = value` scenario file
    config: PathBuf,
    /// overrides the `output` key
    #[arg(long)]
    out: Option<PathBuf>,
    /// exit with status 4 when a property check fails
    #[arg(long)]
    assert: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match go(&args) {
        Ok(failures) if args.assert && !failures.is_empty() => {
            for f in &failures {
                eprintln!("{}", serde_json::json!({ "error": "AssertionFailed", "messages": [f] }));
            }
            EXIT_ASSERT
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn go(args: &Args) -> Result<Vec<String>, RunError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| RunError::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = &args.out {
        cfg.set_output(dir.clone());
    }
    let outcome = run(args.command, &cfg)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.failures)
}
