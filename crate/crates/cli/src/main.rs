use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harmap_core::pipeline::{format_checks, parse_config, run_pipeline, RunOptions, TargetChoice};

/// Harmonic maps into symmetric spaces by the loop-group method, their compact duals,
/// and the associated minimal surfaces.
///
/// Exit codes: 0 when every enabled check passes, 1 when a check fails or a stage
/// fails numerically, 2 for configuration errors.
#[derive(Parser, Debug)]
#[command(name = "harmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline described by a TOML configuration.
    ///
    /// Config keys (defaults in brackets): potential {kind = "example", f2, f4} or
    /// {kind = "custom", entries = [{row, col, num, den [1]}]}; grid {center, h, nx, ny};
    /// window [8]; samples [32]; target ["both"]; lambdas [[1,0],[0,1],[-1,0]];
    /// flatness_lambdas [8]; uhlenbeck_lambdas [8]; pole_radius [5% of grid extent];
    /// tolerances.*; checks.disabled [[]]; output {dir ["out"], frames_csv [true],
    /// meshes [true]}. Polynomials are coefficient lists, lowest degree first; a
    /// coefficient is a number or [re, im].
    Run {
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid size (overrides grid.nx, grid.ny).
        #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
        grid: Option<Vec<usize>>,
        /// Grid spacing (overrides grid.h).
        #[arg(long)]
        h: Option<f64>,
        /// Loop truncation window M.
        #[arg(long)]
        window: Option<i32>,
        /// Circle samples N (at least 2M+1).
        #[arg(long)]
        samples: Option<usize>,
        /// compact, noncompact or both.
        #[arg(long)]
        target: Option<TargetChoice>,
        /// Compute and report the checks; write report.json and timing.json only.
        #[arg(long)]
        check_only: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        grid,
        h,
        window,
        samples,
        target,
        check_only,
    } = cli.command;
    let mut cfg = match parse_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if let Some(g) = grid {
        cfg.grid.nx = g[0];
        cfg.grid.ny = g[1];
    }
    if let Some(h) = h {
        cfg.grid.h = h;
    }
    if let Some(m) = window {
        cfg.window = m;
    }
    if let Some(n) = samples {
        cfg.samples = n;
    }
    if let Some(t) = target {
        cfg.target = t;
    }
    match run_pipeline(&cfg, RunOptions { check_only }) {
        Ok(outcome) => {
            print!("{}", format_checks(&outcome.report));
            println!(
                "{} in {:.1} s; report in {}",
                if outcome.report.passed { "passed" } else { "failed" },
                outcome.timing.total_seconds,
                cfg.output.dir.join("report.json").display()
            );
            if outcome.report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
