//! The file-backed commands in sequence, as the CLI runs them.
//!
//! cargo run --example pipeline_files -- /tmp/microseg-demo

use std::path::PathBuf;

use microseg::pipeline::{run_command, Command, RunOptions};

fn main() -> microseg::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "microseg-demo".into()));
    std::fs::create_dir_all(&dir).map_err(|e| microseg::Error::Internal(e.to_string()))?;
    std::fs::write(dir.join("grid.txt"), "k=endpoints\nk=frac:0.5\nk=6\n")
        .map_err(|e| microseg::Error::Internal(e.to_string()))?;
    let config = dir.join("pipeline.conf");
    std::fs::write(
        &config,
        "out_dir = out\ngrid = grid.txt\nsynth_groups = 6\nsynth_endpoints_per_group = 3\nsynth_windows = 8\nsynth_flows = 12\nsynth_noise = 0.05\n",
    )
    .map_err(|e| microseg::Error::Internal(e.to_string()))?;

    let options = RunOptions {
        config,
        seed: Some(3),
        workers: Some(2),
        strict: false,
    };
    for command in [Command::Synth, Command::Group, Command::Rules, Command::Eval, Command::Tune] {
        print!("{}", run_command(command, &options)?);
    }
    println!("artifacts in {}", dir.join("out").display());
    Ok(())
}
