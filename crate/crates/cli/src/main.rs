use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use cyclebench::data::RecessionCalendar;
use cyclebench::experiment::{
    compare, load_calendar, model_index, prepare, render_comparison, run_gbm, run_prepared, write_comparison,
    write_gbm, Comparison, ExperimentConfig, RunOptions,
};
use cyclebench::metrics::read_metric_rows;
use cyclebench::recession_index::write_index_csv;
use cyclebench::synthetic::{write_factor_csv, write_price_csv, SyntheticMarket};
use cyclebench::train::read_model;
use cyclebench::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cyclebench",
    version,
    about = "Regime-aware stock-price forecasting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured cell.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Recompute cells that already have a stored record.
        #[arg(long)]
        force: bool,
    },
    /// Build comparison tables from a run directory's metrics.csv.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// rt-vs-nrt, rf-vs-norf or recession-vs-expansion; repeatable.
        #[arg(long = "compare", required = true)]
        compare: Vec<String>,
    },
    /// Score the GBM baseline over several seeds.
    SimulateGbm {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `gbm.seeds` from the config.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Median-filtered squared-error index from a checkpoint.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<out.dir>/index.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Write a synthetic price/factor data set and a config that uses it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AllCellsFailed(_) => 2,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, force } => {
            let cfg = ExperimentConfig::load(&config)?;
            let data = prepare(&cfg)?;
            let s = run_prepared(&cfg, &data, RunOptions { force })?;
            info!(
                "{} cells done, {} failed; outputs in {}",
                s.records.len(),
                s.failures.len(),
                cfg.out.dir.display()
            );
            for c in &s.correlations {
                println!("corr {} {} n={} r={:.4}", c.grain, c.metric, c.n, c.pearson);
            }
            for c in &s.comparisons {
                for k in &c.counts {
                    println!(
                        "{} {} {}: {}/{}",
                        c.comparison.as_str(),
                        k.regime,
                        k.metric.as_str(),
                        k.better,
                        k.total
                    );
                }
            }
            Ok(())
        }
        Command::Report { dir, compare: names } => {
            let path = dir.join("metrics.csv");
            let file = fs::File::open(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let rows = read_metric_rows(file)?;
            for name in names {
                let c = compare(&rows, name.parse::<Comparison>()?);
                write_comparison(&dir, &c)?;
                print!("{}", render_comparison(&c));
            }
            Ok(())
        }
        Command::SimulateGbm { config, seeds } => {
            let cfg = ExperimentConfig::load(&config)?;
            let data = prepare(&cfg)?;
            let s = run_gbm(&cfg, &data, seeds.unwrap_or(cfg.gbm.seeds))?;
            write_gbm(&cfg.out.dir, &s)?;
            for f in &s.fractions {
                println!(
                    "{} {}: mean fraction of sub-periods with recession MSE > expansion MSE = {:.4} over {} seeds",
                    f.trainset.as_str(),
                    f.scoring.as_str(),
                    f.mean,
                    f.per_seed.len()
                );
            }
            Ok(())
        }
        Command::Index {
            model,
            config,
            out,
            window,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let text = fs::read_to_string(&model).map_err(|e| Error::Config(format!("{}: {e}", model.display())))?;
            let m = read_model(&text)?;
            let data = prepare(&cfg)?;
            let panel = data
                .panels
                .iter()
                .map(|(_, p)| p)
                .find(|p| p.n_features() == m.scaler.features.len())
                .ok_or_else(|| Error::Config("no configured feature variant matches the checkpoint".into()))?;
            let idx = model_index(panel, &m, window.unwrap_or(cfg.eval.index_window))?;
            let out = out.unwrap_or_else(|| cfg.out.dir.join("index.csv"));
            write_index_csv(&idx, create(&out)?)?;
            info!("wrote {} rows to {}", idx.dates.len(), out.display());
            Ok(())
        }
        Command::Synth { out, seed } => {
            let market = SyntheticMarket {
                seed,
                ..Default::default()
            };
            let (prices, factors) = market.generate(&RecessionCalendar::nber())?;
            write_price_csv(&prices, create(&out.join("prices.csv"))?)?;
            write_factor_csv(&factors, create(&out.join("factors.csv"))?)?;
            fs::write(out.join("cyclebench.toml"), SYNTH_CONFIG).map_err(|e| Error::Config(e.to_string()))?;
            // fail early if the written config does not load
            let cfg = ExperimentConfig::load(out.join("cyclebench.toml"))?;
            load_calendar(&cfg.data)?;
            info!("wrote {} days to {}", prices.len(), out.display());
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    }
    fs::File::create(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

const SYNTH_CONFIG: &str = r#"models = ["lstm", "blstm", "gru"]

[data]
prices = "prices.csv"
factors = "factors.csv"
factors_percent = false

[features]
use_rf = false

[train]
variants = ["iswor"]
seed = 0
max_epochs = 20

[grid]
width = [32]
lag = [5]

[out]
dir = "out"
"#;
