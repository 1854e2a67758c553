use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cdeconv::Cli::parse();
    match cdeconv::run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
