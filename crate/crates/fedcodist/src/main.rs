//! Command-line experiment runner.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedcodist::data::{audit_disjointness, pooled_training_batch, write_dataset};
use fedcodist::harness::{
    build_experiment_data, load_config, metrics_to_csv, summary_to_csv, sweep, write_metrics,
};
use fedcodist::Error;

#[derive(Parser)]
#[command(
    name = "fedcodist",
    version,
    about = "Deterministic simulator for heterogeneous federated learning with codistillation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its metrics CSV.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV path; written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one numeric config field over a list of values and seeds.
    Sweep {
        /// Base experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Dotted path of the numeric field to vary, e.g. `schedule.alpha`.
        #[arg(long)]
        axis: String,
        /// Comma-separated field values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated seeds run for every value.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Output directory for per-run CSVs and `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an experiment's datasets and export them as columnar text.
    GenData {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; one file per data split.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> fedcodist::Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let records = fedcodist::harness::run_experiment(&cfg)?;
            match out {
                Some(path) => write_metrics(&records, &path)?,
                None => print!("{}", metrics_to_csv(&records)),
            }
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
        } => {
            let text = fs::read_to_string(&config).map_err(|e| {
                Error::ConfigSyntaxError(format!("cannot read {}: {e}", config.display()))
            })?;
            let (cells, runs) = sweep(&text, &axis, &values, &seeds)?;
            fs::create_dir_all(&out)?;
            let axis_slug = axis.replace('.', "_");
            for run in &runs {
                let path = out.join(format!(
                    "run_{axis_slug}_{}_seed{}.csv",
                    run.value, run.seed
                ));
                write_metrics(&run.records, &path)?;
            }
            let summary = summary_to_csv(&cells);
            fs::write(out.join("summary.csv"), &summary)?;
            print!("{summary}");
            Ok(())
        }
        Command::GenData { config, out } => {
            let cfg = load_config(&config)?;
            let data = build_experiment_data(&cfg)?;
            audit_disjointness(&data).map_err(|reason| {
                Error::NotEnoughExamples(format!("data split audit failed: {reason}"))
            })?;
            fs::create_dir_all(&out)?;
            write_dataset(&pooled_training_batch(&data.pool), &out.join("train.csv"))?;
            if let Some(distill) = &data.distill {
                write_dataset(&distill.batch, &out.join("distill.csv"))?;
            }
            write_dataset(&data.heldout, &out.join("heldout.csv"))?;
            write_dataset(&data.test_mixed, &out.join("test_mixed.csv"))?;
            write_dataset(&data.test_domain_a, &out.join("test_domain_a.csv"))?;
            write_dataset(&data.test_domain_b, &out.join("test_domain_b.csv"))?;
            Ok(())
        }
    }
}
