use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hpf_cli::commands::Format;
use hpf_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let out = match cli.format {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
                Format::Text => report.to_text(),
            };
            // a closed pipe is not an error of the run
            let _ = writeln!(std::io::stdout(), "{}", out.trim_end());
            ExitCode::from(if report.failed() { 1 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
