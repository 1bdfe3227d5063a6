use std::path::PathBuf;

use clap::{Parser, Subcommand};
use shepherd_cli::commands::{check_command, plot_command, run_command, RunOptions, OUTPUT_DIR_ENV};

/// Multi-dog herding simulator.
#[derive(Parser)]
#[command(name = "shepherd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its log, summary and (optionally) figures.
    Run {
        scenario: PathBuf,
        /// Output directory [default: <base>/<scenario name>].
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Base directory for default output directories.
        #[arg(long, env = OUTPUT_DIR_ENV, default_value = "shepherd-out")]
        output_base: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        /// `key=value`, repeatable. Keys are dotted (`gains.p1`) or unique bare names (`p1`).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also render SVG figures.
        #[arg(long)]
        plot: bool,
    },
    /// Audit parameters, placement and passage widths without running.
    Check {
        scenario: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render SVG figures from the files of a finished run.
    Plot { dir: PathBuf },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match Cli::parse().command {
        Command::Run {
            scenario,
            output,
            output_base,
            seed,
            dt,
            t_final,
            overrides,
            plot,
        } => run_command(
            &scenario,
            &RunOptions {
                output,
                output_base: Some(output_base),
                seed,
                dt,
                t_final,
                overrides,
                plot,
            },
        ),
        Command::Check { scenario, overrides } => check_command(&scenario, &overrides),
        Command::Plot { dir } => plot_command(&dir),
    };
    std::process::exit(code);
}
