mod args;
mod commands;
mod config;
mod eval;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;

const EXIT_ABSENT: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::resolve(&cli.settings)?;
    if cli.print_config {
        commands::emit(&cfg.to_toml()?)?;
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no command given; see --help");
    };
    match command {
        Command::Keygen => commands::keygen(&cfg)?,
        Command::Embed { cover, symbol } => commands::embed(&cfg, &cover, symbol)?,
        Command::Detect { input } => {
            if !commands::detect(&cfg, &input)? {
                return Ok(ExitCode::from(EXIT_ABSENT));
            }
        }
        Command::Decode { input } => commands::decode(&cfg, &input)?,
        Command::Channel { input } => commands::channel(&cfg, &input)?,
        Command::Eval(args) => eval::run(&cfg, &args)?,
        Command::TrainModel {
            order,
            smoothing,
            vocab_out,
        } => commands::train_model(&cfg, order, smoothing, vocab_out.as_ref())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
