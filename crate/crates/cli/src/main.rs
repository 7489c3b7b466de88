use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use hmc_cli::config::ReportFormat;
use hmc_cli::{exit, exit_code, parse_args, parse_config, run, write_output};

fn main() -> ExitCode {
    ExitCode::from(real_main() as u8)
}

fn real_main() -> i32 {
    let args = match parse_args(std::env::args_os()) {
        Ok(args) => args,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return exit::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return exit::CONFIG;
        }
    };
    let config = match parse_config(&args, None) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    let output = match run(&config) {
        Ok(output) => output,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::RUNTIME;
        }
    };
    if let Err(e) = write_output(&output, &config, &config.output_dir) {
        eprintln!("error: cannot write output to {}: {e}", config.output_dir.display());
        return exit::RUNTIME;
    }
    let summary = match config.report_format {
        ReportFormat::Text => output.report.to_text(),
        ReportFormat::Json => format!("{}\n", output.report.to_json()),
    };
    // A closed stdout (e.g. piped into `head`) is not a sampling failure.
    let _ = std::io::stdout().lock().write_all(summary.as_bytes());
    exit_code(&output)
}
