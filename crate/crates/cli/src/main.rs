//! `peri-pinn`: generate data, train, plot, sweep and diagnose horizon-learning runs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical abort, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use peri_pinn::diagnostics::{
    grad_competition, pl_ratio, sign_indicator, tangent_kernel_min_eig_at, TANGENT_KERNEL_LIMIT,
};
use peri_pinn::experiment::{
    load_dataset, run_experiment, run_stem, run_sweep, sweep_csv, unique_stem, write_generated, write_run, ConfigError,
    ExperimentConfig, RunError,
};
use peri_pinn::network::NetworkParams;
use peri_pinn::plot::write_trace_panels;
use peri_pinn::training::{LossModel, TrainTrace};

#[derive(Parser)]
#[command(
    name = "peri-pinn",
    version,
    about = "Learn the peridynamic horizon with a physics-informed network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a collocation dataset (CSV plus JSON provenance).
    Generate(Common),
    /// Train and write the trace, checkpoint and expanded config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV from `generate`; generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write the three SVG panels.
        #[arg(long)]
        plot: bool,
    },
    /// Render the three panels of a trace CSV as SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train from several initial horizons and write a summary CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated initial horizons.
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
    },
    /// Recompute diagnostics from a checkpoint.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the expanded configuration of a preset or file.
    Config(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: data2, data3, data3-poly, data8, ex2d.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    delta_init: Option<f64>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            other => Failure::Other(other.into()),
        }
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => return Err(Failure::Config("one of --config or --preset is required".into())),
        };
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(d) = self.delta_init {
            cfg = cfg.with_delta_init(d);
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.display().to_string();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(&cfg.output.dir)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.load()?;
            let path = write_generated(&cfg, &out_dir(&cfg))?;
            println!("{}", path.display());
        }
        Command::Train { common, data, plot } => {
            let cfg = common.load()?;
            let set = data.as_deref().map(|p| load_dataset(&cfg, p)).transpose()?;
            let result = run_experiment(&cfg, set.as_ref())?;
            let dir = out_dir(&cfg);
            let files = write_run(&result, &dir)?;
            if plot {
                let stem = files
                    .trace
                    .file_name()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_suffix(".trace.csv"))
                    .unwrap_or("run")
                    .to_string();
                write_trace_panels(&result.outcome.trace, &dir, &stem).context("writing panels")?;
            }
            let v = &result.verdict;
            println!("trace {}", files.trace.display());
            println!("checkpoint {}", files.checkpoint.display());
            println!(
                "final_delta {} converged {} direction {} monotone_after {}",
                result.outcome.params.horizon(),
                v.converged,
                v.direction.as_str(),
                v.monotone_after
            );
            if let Some(a) = &result.outcome.abort {
                return Err(Failure::Numerical(format!(
                    "training aborted at epoch {}: {} (partial trace written)",
                    a.epoch, a.reason
                )));
            }
        }
        Command::Plot { trace, out } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let parsed = TrainTrace::from_csv(&text).map_err(|e| anyhow!("{}: {e}", trace.display()))?;
            let dir = out.unwrap_or_else(|| trace.parent().map(Path::to_path_buf).unwrap_or_default());
            let name = trace.file_name().and_then(|n| n.to_str()).unwrap_or("trace");
            let stem = name.strip_suffix(".csv").unwrap_or(name);
            let stem = stem.strip_suffix(".trace").unwrap_or(stem);
            for f in write_trace_panels(&parsed, &dir, stem).context("writing panels")? {
                println!("{}", f.display());
            }
        }
        Command::Sweep { common, deltas } => {
            let cfg = common.load()?;
            let rows = run_sweep(&cfg, &deltas)?;
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let stem = format!("{}.sweep", unique_stem(&dir, &run_stem(&cfg)));
            let path = dir.join(format!("{stem}.csv"));
            let csv = sweep_csv(&rows);
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            print!("{csv}");
            println!("summary {}", path.display());
        }
        Command::Diagnose {
            common,
            checkpoint,
            data,
        } => {
            let cfg = common.load()?;
            let text = fs::read_to_string(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let params = NetworkParams::from_checkpoint(&text).map_err(|e| anyhow!("{}: {e}", checkpoint.display()))?;
            let set = match data {
                Some(p) => load_dataset(&cfg, &p)?,
                None => peri_pinn::experiment::generate_dataset(&cfg)?.0,
            };
            let model = LossModel::new(cfg.problem()?, cfg.residual_config(), &set).map_err(|e| anyhow!(e))?;
            let variant = cfg.training.loss_variant;
            let report = model.evaluate(&params, false);
            println!("delta {}", params.horizon());
            println!("R_s {}", report.r_s(variant));
            println!("R_d {}", report.r_d(variant));
            println!("sign_indicator {}", sign_indicator(&params, &model));
            let gc = grad_competition(&params, &model, variant);
            println!("grad_competition_inner {}", gc.inner);
            match gc.ratio {
                Some(r) => println!("grad_competition_ratio {r}"),
                None => println!("grad_competition_ratio n/a"),
            }
            match pl_ratio(&params, &model, variant) {
                Some(r) => println!("pl_ratio {r}"),
                None => println!("pl_ratio n/a"),
            }
            // evenly spaced subset of the data points when there are too many
            let pts = model.data_coords();
            let stride = pts.len().div_ceil(TANGENT_KERNEL_LIMIT).max(1);
            let subset: Vec<[f64; 2]> = pts.iter().step_by(stride).copied().collect();
            let lam = tangent_kernel_min_eig_at(&params, &subset).map_err(|e| anyhow!(e))?;
            println!("tangent_kernel_min_eig {lam} (over {} points)", subset.len());
            let dphi = params.dphi_ddelta(&pts[0]).map_err(|e| anyhow!(e))?;
            println!("dphi_ddelta {dphi}");
        }
        Command::Config(common) => {
            let cfg = common.load()?;
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical abort: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
