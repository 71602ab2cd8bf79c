use std::process::ExitCode;

use onomastat_cli::CliError;

fn main() -> ExitCode {
    match onomastat_cli::run(std::env::args_os()) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            ExitCode::SUCCESS
        }
        // help, version and usage errors (exit 2)
        Err(CliError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
