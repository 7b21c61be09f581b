use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use microseg::pipeline::{run_command, Command, RunOptions};

#[derive(Parser)]
#[command(name = "microseg", version, about = "Security groups and firewall rules from flow logs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Pipeline config file (`key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Fail on the first malformed log line
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate a labeled synthetic flow log
    Synth,
    /// Learn security groups
    Group,
    /// Synthesize the group-level ruleset
    Rules,
    /// Score groups against ground truth
    Eval,
    /// Grid-search settings against ground truth
    Tune,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(1);
    };
    let command = match cli.command {
        Cmd::Synth => Command::Synth,
        Cmd::Group => Command::Group,
        Cmd::Rules => Command::Rules,
        Cmd::Eval => Command::Eval,
        Cmd::Tune => Command::Tune,
    };
    let options = RunOptions {
        config,
        seed: cli.seed,
        workers: cli.workers,
        strict: cli.strict,
    };
    match run_command(command, &options) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
