use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use morinflow_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            if let (Some(path), Some(svg)) = (&cli.svg, &out.svg) {
                if let Err(e) = std::fs::write(path, svg) {
                    eprintln!("error: io: {e}");
                    return ExitCode::from(1);
                }
            }
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.stdout.as_bytes()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
