use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use shapefrac::cli::{load_config, run, Args};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match load_config(&args).and_then(|cfg| run(&cfg)) {
        Ok(summary) => {
            match summary.onset {
                Some(u) => println!("{} load steps, crack growth onset at {u} mm", summary.steps),
                None => println!("{} load steps, no crack growth detected", summary.steps),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

