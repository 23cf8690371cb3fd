use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use odkla::config::RunConfig;
use odkla::data::synthesize;
use odkla::error::Error;
use odkla::experiment::{compare, run, write_comparison};
use odkla::fixtures::regenerate_goldens;

#[derive(Parser)]
#[command(name = "odkla", version, about = "Decentralized online kernel learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and write per-round metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `output` key of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs on shared data and write a long-format table.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic regression dataset as CSV.
    Synth {
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate golden trajectories from the matrix-form recursion.
    Goldens {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
}

fn exec(cli: Cli) -> odkla::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if out.is_some() {
                cfg.output = out;
            }
            let result = run(&cfg)?;
            println!("{}", result.summary);
        }
        Command::Compare { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| RunConfig::load(p))
                .collect::<odkla::Result<Vec<_>>>()?;
            let cmp = compare(&cfgs)?;
            write_comparison(&out, &cmp)?;
            for (_, r) in &cmp.runs {
                println!("{}\n", r.summary);
            }
        }
        Command::Synth {
            samples,
            dim,
            seed,
            sigma,
            noise,
            out,
        } => {
            let ds = synthesize(samples, dim, sigma, noise, seed)?;
            ds.write_csv(&out)?;
        }
        Command::Goldens { out_dir, seeds } => {
            for p in regenerate_goldens(&out_dir, &seeds)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match exec(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::MismatchedExperiment { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
