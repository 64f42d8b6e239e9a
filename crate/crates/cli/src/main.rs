use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use demodocus_cli::{execute, Cli, Commands, EXIT_ERROR};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Commands::Crawl(args) = cli.command;
    match execute(&args) {
        Ok(outcome) => {
            if args.out.is_none() {
                let mut stdout = std::io::stdout().lock();
                if let Err(e) = stdout.write_all(&outcome.report).and_then(|_| stdout.flush()) {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_ERROR as u8);
                }
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
