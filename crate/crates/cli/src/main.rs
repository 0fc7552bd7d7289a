use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DITTO_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = ditto_cli::Cli::parse();
    match ditto_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
