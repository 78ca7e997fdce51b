use std::process::ExitCode;

use clap::Parser;
use geomalign::cli::{self, Cli, Invocation};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = cli::init_thread_pool().and_then(|()| match &cli.invocation {
        Invocation::Run(command) => command.run(),
        Invocation::Replay(args) => cli::replay(args),
    });
    match outcome {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let name = match &cli.invocation {
                Invocation::Run(command) => command.name(),
                Invocation::Replay(_) => "replay",
            };
            eprintln!("geomalign {name}: {e}");
            ExitCode::FAILURE
        }
    }
}
