//! Experiment configuration, presets and the end-to-end runner.
//!
//! A configuration is a small TOML file with one table per concern (`problem`, `kernel`,
//! `data`, `model`, `training`, `quad`, `output`). Presets expand to complete
//! configurations, so dumping a preset and reading it back reproduces the same run.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::{
    build_collocation, read_dataset, write_dataset, CollocationSet, DatagenError, ForwardProblem1D, Generator,
    MeshSpec, PlateProblem, Provenance,
};
use crate::diagnostics::{default_transient, delta_monotonicity, ConvergenceVerdict};
use crate::kernels::KernelSpec;
use crate::network::{init_params, Architecture, InputMap, NetworkParams};
use crate::nonlocal::{Problem, ResidualConfig, SignConvention};
use crate::training::{
    train_with, LossError, LossModel, LossVariant, Optimizer, Schedule, TraceRecord, TrainConfig, TrainOutcome,
};

pub const PRESETS: [&str; 5] = ["data2", "data3", "data3-poly", "data8", "ex2d"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset `{0}` (known: data2, data3, data3-poly, data8, ex2d)")]
    UnknownPreset(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DatagenError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Preset name this config was expanded from, or `custom`.
    #[serde(default = "custom")]
    pub name: String,
    pub dim: usize,
    /// 1D spatial domain.
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
    /// 1D final time.
    #[serde(default)]
    pub t_final: Option<f64>,
    /// 2D plate sides and wave speed.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
}

fn custom() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// `gauss`, `vshape`, `distributed` or `tent`; ignored in 2D.
    #[serde(rename = "type", default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    pub delta_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub ghosts_per_edge: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub delta_init: f64,
    pub layers: usize,
    pub width: usize,
    /// Rescale inputs to `[-1, 1]` over the domain box before the first layer.
    #[serde(default)]
    pub input_normalization: bool,
    #[serde(default)]
    pub sign_convention: SignConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub loss_variant: LossVariant,
    /// `constant`, `cyclic_polynomial` or `cosine`.
    pub schedule: String,
    pub eta0: f64,
    #[serde(default)]
    pub eta_end: Option<f64>,
    #[serde(default)]
    pub cycle_epochs: Option<usize>,
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default)]
    pub decay_steps: Option<usize>,
    #[serde(default)]
    pub warmup: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    pub nodes_1d: usize,
    pub radial: usize,
    pub angular: usize,
}

impl Default for QuadSection {
    fn default() -> Self {
        let r = ResidualConfig::default();
        Self {
            nodes_1d: r.quad_nodes_1d,
            radial: r.quad_nodes_radial,
            angular: r.quad_nodes_angular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "runs".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub kernel: KernelSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub quad: QuadSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Seeds derived from one root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedFan {
    pub init: u64,
    pub data: u64,
    pub sampling: u64,
}

impl SeedFan {
    /// The first three outputs of ChaCha8 seeded with `root`, in the order init, data,
    /// sampling.
    pub fn from_root(root: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        Self {
            init: rng.next_u64(),
            data: rng.next_u64(),
            sampling: rng.next_u64(),
        }
    }
}

fn line_preset(
    name: &str,
    kind: &str,
    lambda: Option<f64>,
    delta_true: f64,
    domain: [f64; 2],
    delta_init: f64,
) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSection {
            name: name.into(),
            dim: 1,
            domain: Some(domain),
            t_final: Some(1.0),
            a: None,
            b: None,
            c: None,
        },
        kernel: KernelSection {
            kind: Some(kind.into()),
            lambda,
            mu: None,
            delta_true,
        },
        data: DataSection {
            nx: 50,
            ny: 20,
            ghosts_per_edge: 0,
        },
        model: ModelSection {
            delta_init,
            layers: 8,
            width: 20,
            input_normalization: false,
            sign_convention: SignConvention::Standard,
        },
        training: TrainingSection {
            epochs: 1000,
            optimizer: "adam".into(),
            loss_variant: LossVariant::MeanSquared,
            schedule: "constant".into(),
            eta0: 1e-2,
            eta_end: None,
            cycle_epochs: None,
            degree: None,
            decay_steps: None,
            warmup: None,
            seed: 0,
        },
        quad: QuadSection::default(),
        output: OutputSection::default(),
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let cfg = match name {
            "data2" => line_preset(name, "vshape", Some(0.6), 10.0, [-40.0, 40.0], 10.1),
            "data3" => line_preset(name, "distributed", Some(10.0), 1.0, [-10.0, 10.0], 1.5),
            "data3-poly" => {
                let mut c = line_preset(name, "distributed", Some(10.0), 1.0, [-10.0, 10.0], 1.5);
                c.training.schedule = "cyclic_polynomial".into();
                c.training.eta_end = Some(1e-4);
                c.training.cycle_epochs = Some(100);
                c.training.degree = Some(3);
                c
            }
            "data8" => {
                let mut c = line_preset(name, "tent", None, 1.0, [-4.0, 4.0], 1.1);
                c.training.schedule = "cosine".into();
                c.training.eta0 = 1e-4;
                c.training.decay_steps = Some(1000);
                c.training.warmup = Some(0);
                c
            }
            "ex2d" => {
                let mut c = line_preset(name, "", None, 0.1, [0.0, 0.0], 0.095);
                c.problem = ProblemSection {
                    name: name.into(),
                    dim: 2,
                    domain: None,
                    t_final: None,
                    a: Some(1.0),
                    b: Some(1.0),
                    c: Some(1.0),
                };
                c.kernel.kind = None;
                c.data = DataSection {
                    nx: 20,
                    ny: 20,
                    ghosts_per_edge: 16,
                };
                c.training.schedule = "cosine".into();
                c.training.eta0 = 1e-3;
                c.training.decay_steps = Some(1000);
                c.training.warmup = Some(0);
                c
            }
            other => return Err(ConfigError::UnknownPreset(other.into())),
        };
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// First 12 hex digits of the SHA-256 of the canonical TOML form, output directory
    /// excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let digest = Sha256::digest(c.to_toml_string().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.model.delta_init > 0.0 && self.model.delta_init.is_finite()) {
            return bad(format!(
                "model.delta_init must be positive, got {}",
                self.model.delta_init
            ));
        }
        if self.model.layers == 0 || self.model.width == 0 {
            return bad("model.layers and model.width must be at least 1".into());
        }
        if self.data.nx == 0 || self.data.ny == 0 {
            return bad("data.nx and data.ny must be at least 1".into());
        }
        match self.training.optimizer.as_str() {
            "adam" | "sgd" => {}
            o => return bad(format!("training.optimizer `{o}` is not adam or sgd")),
        }
        self.schedule()?.validate().map_err(ConfigError::Invalid)?;
        self.residual_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match self.problem.dim {
            1 => {
                let k = self.kernel_spec()?;
                if k.delta().is_none() {
                    return bad("the kernel has no horizon to learn".into());
                }
                let [lo, hi] = self.domain()?;
                if !(hi > lo) {
                    return bad("problem.domain must have lo < hi".into());
                }
                if !(self.problem.t_final.unwrap_or(1.0) > 0.0) {
                    return bad("problem.t_final must be positive".into());
                }
            }
            2 => {
                let p = self.plate();
                if !(p.a > 0.0 && p.b > 0.0 && p.c > 0.0 && p.delta_true > 0.0) {
                    return bad("plate sides, wave speed and delta_true must be positive".into());
                }
            }
            d => return bad(format!("problem.dim must be 1 or 2, got {d}")),
        }
        Ok(())
    }

    fn domain(&self) -> Result<[f64; 2], ConfigError> {
        self.problem
            .domain
            .ok_or_else(|| ConfigError::Invalid("problem.domain is required in 1D".into()))
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, ConfigError> {
        let k = &self.kernel;
        let need =
            |v: Option<f64>, name: &str| v.ok_or_else(|| ConfigError::Invalid(format!("kernel.{name} is required")));
        let spec = match k.kind.as_deref() {
            Some("gauss") => KernelSpec::gauss(need(k.lambda, "lambda")?, need(k.mu, "mu")?),
            Some("vshape") => KernelSpec::vshape(need(k.lambda, "lambda")?, k.delta_true),
            Some("distributed") => KernelSpec::distributed(need(k.lambda, "lambda")?, k.delta_true),
            Some("tent") => KernelSpec::tent(k.delta_true),
            Some(other) => return Err(ConfigError::Invalid(format!("unknown kernel type `{other}`"))),
            None => return Err(ConfigError::Invalid("kernel.type is required in 1D".into())),
        };
        spec.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn plate(&self) -> PlateProblem {
        PlateProblem {
            a: self.problem.a.unwrap_or(1.0),
            b: self.problem.b.unwrap_or(1.0),
            c: self.problem.c.unwrap_or(1.0),
            delta_true: self.kernel.delta_true,
        }
    }

    pub fn delta_true(&self) -> f64 {
        self.kernel.delta_true
    }

    pub fn schedule(&self) -> Result<Schedule, ConfigError> {
        let t = &self.training;
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| ConfigError::Invalid(format!("training.{name} is required for this schedule")))
        };
        Ok(match t.schedule.as_str() {
            "constant" => Schedule::Constant { eta0: t.eta0 },
            "cyclic_polynomial" => Schedule::CyclicPolynomial {
                eta0: t.eta0,
                eta_end: t
                    .eta_end
                    .ok_or_else(|| ConfigError::Invalid("training.eta_end is required".into()))?,
                cycle_epochs: need(t.cycle_epochs, "cycle_epochs")?,
                degree: t.degree.unwrap_or(1),
            },
            "cosine" => Schedule::Cosine {
                eta0: t.eta0,
                decay_steps: need(t.decay_steps, "decay_steps")?,
                warmup: t.warmup.unwrap_or(0),
            },
            other => return Err(ConfigError::Invalid(format!("unknown schedule `{other}`"))),
        })
    }

    pub fn residual_config(&self) -> ResidualConfig {
        ResidualConfig {
            sign_convention: self.model.sign_convention,
            quad_nodes_1d: self.quad.nodes_1d,
            quad_nodes_radial: self.quad.radial,
            quad_nodes_angular: self.quad.angular,
            wave_speed: self.problem.c.unwrap_or(1.0),
        }
    }

    pub fn problem(&self) -> Result<Problem, ConfigError> {
        Ok(match self.problem.dim {
            1 => {
                let [lo, hi] = self.domain()?;
                Problem::Line {
                    kernel: self.kernel_spec()?,
                    domain: (lo, hi),
                }
            }
            _ => {
                let p = self.plate();
                Problem::Plate { a: p.a, b: p.b }
            }
        })
    }

    pub fn generator(&self) -> Result<Generator, ConfigError> {
        Ok(match self.problem.dim {
            1 => {
                let [lo, hi] = self.domain()?;
                let mut fp =
                    ForwardProblem1D::pulse(self.kernel_spec()?, (lo, hi), self.problem.t_final.unwrap_or(1.0));
                fp.sign_convention = SignConvention::Standard;
                Generator::Line(fp)
            }
            _ => Generator::Plate(self.plate()),
        })
    }

    pub fn mesh(&self) -> MeshSpec {
        MeshSpec {
            nx: self.data.nx,
            ny: self.data.ny,
            ghosts_per_edge: self.data.ghosts_per_edge,
        }
    }

    pub fn architecture(&self) -> Result<Architecture, ConfigError> {
        let arch = Architecture::new(2, self.model.layers, self.model.width);
        if !self.model.input_normalization {
            return Ok(arch);
        }
        let bounds = match self.problem.dim {
            1 => {
                let [lo, hi] = self.domain()?;
                [(lo, hi), (0.0, self.problem.t_final.unwrap_or(1.0))]
            }
            _ => {
                let p = self.plate();
                [(0.0, p.a), (0.0, p.b)]
            }
        };
        Ok(arch.with_input_map(InputMap::from_box(&bounds)))
    }

    pub fn seeds(&self) -> SeedFan {
        SeedFan::from_root(self.training.seed)
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        Ok(TrainConfig {
            epochs: self.training.epochs,
            optimizer: match self.training.optimizer.as_str() {
                "sgd" => Optimizer::Sgd,
                _ => Optimizer::default(),
            },
            loss_variant: self.training.loss_variant,
            schedule: self.schedule()?,
            seed: self.seeds().sampling,
        })
    }

    pub fn initial_params(&self) -> Result<NetworkParams, ConfigError> {
        Ok(init_params(&self.architecture()?, self.seeds().init).with_horizon(self.model.delta_init))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.training.seed = seed;
        self
    }

    pub fn with_delta_init(mut self, delta: f64) -> Self {
        self.model.delta_init = delta;
        self
    }

    /// Tolerance on `|δ − δ*|` used to call a run converged: half a percent of `δ*`, except
    /// 2% of `δ*` in 2D.
    pub fn convergence_tolerance(&self) -> f64 {
        match self.problem.dim {
            2 => 0.02 * self.delta_true(),
            _ => 0.005 * self.delta_true(),
        }
    }
}

/// Dataset for `cfg`, with its provenance.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<(CollocationSet, Provenance), RunError> {
    cfg.validate()?;
    let generator = cfg.generator()?;
    let mesh = cfg.mesh();
    let seed = cfg.seeds().data;
    let set = build_collocation(&generator, &mesh, seed)?;
    let prov = Provenance {
        generator,
        mesh,
        seed,
        points: set.len(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
    };
    Ok((set, prov))
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub init: NetworkParams,
    pub outcome: TrainOutcome,
    pub verdict: ConvergenceVerdict,
}

/// Trains on `set` (or a freshly generated dataset) without touching the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig, set: Option<&CollocationSet>) -> Result<RunResult, RunError> {
    run_experiment_with(cfg, set, |_, _| {})
}

pub fn run_experiment_with<F>(
    cfg: &ExperimentConfig,
    set: Option<&CollocationSet>,
    on_epoch: F,
) -> Result<RunResult, RunError>
where
    F: FnMut(&TraceRecord, &NetworkParams),
{
    cfg.validate()?;
    let owned;
    let set = match set {
        Some(s) => s,
        None => {
            owned = generate_dataset(cfg)?.0;
            &owned
        }
    };
    if set.dim != cfg.problem.dim {
        return Err(ConfigError::Invalid(format!(
            "dataset dimension {} does not match problem.dim {}",
            set.dim, cfg.problem.dim
        ))
        .into());
    }
    let model = LossModel::new(cfg.problem()?, cfg.residual_config(), set)?;
    let init = cfg.initial_params()?;
    let outcome = train_with(&cfg.train_config()?, &model, init.clone(), on_epoch);
    let verdict = delta_monotonicity(
        &outcome.trace,
        default_transient(cfg.training.epochs),
        cfg.delta_true(),
        cfg.convergence_tolerance(),
    );
    Ok(RunResult {
        config: cfg.clone(),
        init,
        outcome,
        verdict,
    })
}

/// `dir/<stem>`, `dir/<stem>-1`, … : the first stem for which no file in `dir` starts with
/// it followed by a dot.
pub fn unique_stem(dir: &Path, stem: &str) -> String {
    let taken = |s: &str| {
        fs::read_dir(dir).ok().is_some_and(|entries| {
            entries.flatten().any(|e| {
                e.file_name()
                    .to_str()
                    .is_some_and(|n| n.strip_prefix(s).is_some_and(|rest| rest.starts_with('.')))
            })
        })
    };
    if !taken(stem) {
        return stem.to_string();
    }
    (1..)
        .map(|k| format!("{stem}-{k}"))
        .find(|s| !taken(s))
        .expect("unbounded search")
}

/// Output stem `<name>-<hash>-s<seed>`.
pub fn run_stem(cfg: &ExperimentConfig) -> String {
    format!("{}-{}-s{}", cfg.problem.name, cfg.hash(), cfg.training.seed)
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes `<stem>.data.csv`, `<stem>.data.json` and `<stem>.data.config.toml`; returns the CSV path.
pub fn write_generated(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, RunError> {
    let (set, prov) = generate_dataset(cfg)?;
    ensure_dir(dir)?;
    let stem = format!("{}.data", unique_stem(dir, &run_stem(cfg)));
    write_dataset(dir, &stem, &set, &prov)?;
    let cfg_path = dir.join(format!("{stem}.config.toml"));
    fs::write(&cfg_path, cfg.to_toml_string()).map_err(io_err(&cfg_path))?;
    Ok(dir.join(format!("{stem}.csv")))
}

/// Files written by [`write_run`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub trace: PathBuf,
    pub checkpoint: PathBuf,
    pub config: PathBuf,
}

/// Writes trace, checkpoint and config under a fresh stem. The trace is written even when
/// training aborted.
pub fn write_run(result: &RunResult, dir: &Path) -> Result<RunFiles, RunError> {
    ensure_dir(dir)?;
    let stem = unique_stem(dir, &run_stem(&result.config));
    let files = RunFiles {
        trace: dir.join(format!("{stem}.trace.csv")),
        checkpoint: dir.join(format!("{stem}.ckpt")),
        config: dir.join(format!("{stem}.config.toml")),
    };
    fs::write(&files.trace, result.outcome.trace.to_csv()).map_err(io_err(&files.trace))?;
    fs::write(&files.checkpoint, result.outcome.params.to_checkpoint()).map_err(io_err(&files.checkpoint))?;
    fs::write(&files.config, result.config.to_toml_string()).map_err(io_err(&files.config))?;
    Ok(files)
}

/// Reads a dataset and checks it against the configured dimension.
pub fn load_dataset(cfg: &ExperimentConfig, csv: &Path) -> Result<CollocationSet, RunError> {
    let (set, prov) = read_dataset(csv)?;
    let dim = match prov.generator {
        Generator::Line(_) => 1,
        Generator::Plate(_) => 2,
    };
    if dim != cfg.problem.dim || set.dim != cfg.problem.dim {
        return Err(ConfigError::Invalid(format!(
            "dataset {} is {dim}D but the config is {}D",
            csv.display(),
            cfg.problem.dim
        ))
        .into());
    }
    Ok(set)
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta_init: f64,
    pub seed: u64,
    pub outcome: Result<SweepOk, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOk {
    pub converged: bool,
    pub direction: &'static str,
    pub final_delta: f64,
    pub final_r_s: f64,
    pub final_r_d: f64,
    pub aborted: bool,
}

pub const SWEEP_HEADER: &str = "delta_init,seed,converged,direction,final_delta,final_R_s,final_R_d,status";

/// Trains once per initial horizon on a shared dataset. Failures are recorded per row.
pub fn run_sweep(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<Vec<SweepRow>, RunError> {
    if deltas.len() < 2 {
        return Err(ConfigError::Invalid("a sweep needs at least two initial horizons".into()).into());
    }
    let (set, _) = generate_dataset(cfg)?;
    Ok(deltas
        .iter()
        .map(|&d| {
            let c = cfg.clone().with_delta_init(d);
            let outcome = run_experiment(&c, Some(&set))
                .map_err(|e| e.to_string())
                .map(|r| sweep_ok(&r));
            SweepRow {
                delta_init: d,
                seed: cfg.training.seed,
                outcome,
            }
        })
        .collect())
}

fn sweep_ok(r: &RunResult) -> SweepOk {
    let last = r.outcome.trace.records.last();
    SweepOk {
        converged: r.verdict.converged,
        direction: r.verdict.direction.as_str(),
        final_delta: r.outcome.params.horizon(),
        final_r_s: last.map_or(f64::NAN, |l| l.r_s),
        final_r_d: last.map_or(f64::NAN, |l| l.r_d),
        aborted: r.outcome.abort.is_some(),
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        match &r.outcome {
            Ok(o) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.delta_init,
                r.seed,
                if o.converged { "yes" } else { "no" },
                o.direction,
                o.final_delta,
                o.final_r_s,
                o.final_r_d,
                if o.aborted { "aborted" } else { "ok" }
            )),
            Err(e) => out.push_str(&format!(
                "{},{},no,none,NaN,NaN,NaN,\"error: {}\"\n",
                r.delta_init,
                r.seed,
                e.replace('"', "'")
            )),
        }
    }
    out
}
