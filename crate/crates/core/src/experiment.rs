//! Experiment definitions, the run driver, and cross-run comparison.
//!
//! An experiment is a TOML file listing problems, algorithms and seeds. Every
//! (problem, algorithm, seed) cell writes into its own directory:
//!
//! ```text
//! <output_dir>/<problem>/<algorithm>/seed-<i>/{log.csv, front.csv, summary.json}
//! <output_dir>/metrics.csv
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_nsga, GaConfig, NsgaKind};
use crate::error::{Error, Result};
use crate::indicators::{
    additive_epsilon, cardinality_against, gd, hypervolume, igd, MetricReport,
};
use crate::io;
use crate::pareto::{non_dominated_indices, Relation, Solution};
use crate::problems::{non_dominated_subset, Environment, Problem};
use crate::rewards::{
    ConstraintConfig, ConstraintMode, RankerKind, RewardEngine, RewardVariant, UniformityConfig,
    UniformityKind,
};
use crate::stats::{friedman, nemenyi, FriedmanResult, NemenyiResult, RankMatrix};
use crate::trainer::{train, LogRow, PearlSetup, TrainerConfig};

pub const CONFIG_VERSION: u32 = 1;
/// Relative output directories are resolved against this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "MOORL_OUTPUT_ROOT";
pub const FAILED_MARKER: &str = "FAILED";
const DEFAULT_KAPPA: usize = 64;
const DEFAULT_REFERENCE_POINTS: usize = 1000;

fn default_kappa() -> usize {
    DEFAULT_KAPPA
}
fn default_nu() -> f64 {
    0.05
}
fn default_lambda() -> f64 {
    1.0
}
fn default_n_steps() -> usize {
    32
}
fn default_ncores() -> usize {
    8
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_mode() -> ConstraintMode {
    ConstraintMode::DistanceCl
}
fn default_uniformity() -> UniformityKind {
    UniformityKind::Cosine
}

/// Either a number of seeds (indices `0..n`) or explicit seed indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn indices(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// Optional replacements for trainer hyperparameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerOverrides {
    pub learning_rate: Option<f64>,
    pub clip_range: Option<f64>,
    pub ent_coef: Option<f64>,
    pub vf_coef: Option<f64>,
    pub n_epochs: Option<usize>,
    pub n_minibatches: Option<usize>,
    /// Zero or a negative value disables gradient clipping.
    pub max_grad_norm: Option<f64>,
    pub normalize_advantage: Option<bool>,
    pub init_log_std: Option<f64>,
    pub hidden: Option<Vec<usize>>,
}

impl TrainerOverrides {
    fn apply(&self, cfg: &mut TrainerConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { cfg.$f = v.clone(); })*};
        }
        set!(learning_rate, clip_range, ent_coef, vf_coef, n_epochs, n_minibatches,
            normalize_advantage, init_log_std, hidden);
        if let Some(g) = self.max_grad_norm {
            cfg.max_grad_norm = (g > 0.0).then_some(g);
        }
    }
}

/// Optional replacements for evolutionary baseline settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaOverrides {
    pub lambda_: Option<usize>,
    pub mu: Option<usize>,
    pub mutpb: Option<f64>,
    pub cxpb: Option<f64>,
    pub pop_size: Option<usize>,
    pub indpb: Option<f64>,
    pub blend_alpha: Option<f64>,
    pub sigma: Option<f64>,
}

impl GaOverrides {
    fn apply(&self, cfg: &mut GaConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(lambda_, mu, mutpb, cxpb, pop_size, blend_alpha, sigma);
        if self.indpb.is_some() {
            cfg.indpb = self.indpb;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_uniformity")]
    pub uniformity: UniformityKind,
    #[serde(default)]
    pub normalized_obj: bool,
    #[serde(default)]
    pub resample_period: Option<usize>,
    #[serde(default)]
    pub rays_per_worker: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSpec {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_kappa")]
    pub kappa: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdsSpec {
    pub ranker: RankerKind,
    #[serde(default = "default_kappa")]
    pub kappa: usize,
}

/// Reward used for the feasible part of a constrained run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InnerSpec {
    PearlE(EnvelopeSpec),
    PearlEps(EpsilonSpec),
    PearlNds(NdsSpec),
}

impl InnerSpec {
    fn label(&self) -> String {
        match self {
            InnerSpec::PearlE(_) => "pearl-e".into(),
            InnerSpec::PearlEps(_) => "pearl-eps".into(),
            InnerSpec::PearlNds(s) => format!("pearl-nds-{}", ranker_name(s.ranker)),
        }
    }

    fn setup(&self, constraints: Option<ConstraintConfig>) -> PearlSetup {
        let (variant, kappa, alpha, resample_period, rays_per_worker) = match self {
            InnerSpec::PearlE(s) => (
                RewardVariant::Envelope(UniformityConfig {
                    kind: s.uniformity,
                    lambda: s.lambda,
                    normalized_obj: s.normalized_obj,
                }),
                DEFAULT_KAPPA,
                s.alpha.clone(),
                s.resample_period,
                s.rays_per_worker,
            ),
            InnerSpec::PearlEps(s) => (RewardVariant::Epsilon { nu: s.nu }, s.kappa, None, None, None),
            InnerSpec::PearlNds(s) => (RewardVariant::NonDominated(s.ranker), s.kappa, None, None, None),
        };
        PearlSetup {
            variant,
            constraints,
            kappa,
            alpha,
            resample_period,
            rays_per_worker,
        }
    }
}

fn ranker_name(r: RankerKind) -> &'static str {
    match r {
        RankerKind::Crowding => "crowding",
        RankerKind::Niching => "niching",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstrainedSpec {
    pub inner: InnerSpec,
    #[serde(default = "default_mode")]
    pub mode: ConstraintMode,
    /// Per-constraint weights.
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// Infeasibility penalty; the buffer size when absent.
    #[serde(default, rename = "M", alias = "m")]
    pub bonus: Option<f64>,
    /// Upper limits for raw constraint outputs, for problems whose
    /// constraints are not already violation-positive.
    #[serde(default)]
    pub limits: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    PearlE(EnvelopeSpec),
    PearlEps(EpsilonSpec),
    PearlNds(NdsSpec),
    CPearl(ConstrainedSpec),
    Nsga2,
    Nsga3 {
        #[serde(default)]
        constrained: bool,
    },
}

/// One algorithm entry of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    /// Directory and report label; derived from the method when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainerOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ga: Option<GaOverrides>,
    #[serde(flatten)]
    pub method: Method,
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.method {
            Method::PearlE(_) => "pearl-e".into(),
            Method::PearlEps(_) => "pearl-eps".into(),
            Method::PearlNds(s) => format!("pearl-nds-{}", ranker_name(s.ranker)),
            Method::CPearl(c) => {
                let mode = match c.mode {
                    ConstraintMode::DistanceCl => "distance-cl",
                    ConstraintMode::Rank2 => "rank2",
                };
                format!("c-{}-{mode}", c.inner.label())
            }
            Method::Nsga2 => "nsga2".into(),
            Method::Nsga3 { constrained: false } => "nsga3".into(),
            Method::Nsga3 { constrained: true } => "nsga3-constrained".into(),
        }
    }

    /// Reward setup for policy-trained methods.
    pub fn pearl_setup(&self) -> Option<PearlSetup> {
        match &self.method {
            Method::PearlE(s) => Some(InnerSpec::PearlE(s.clone()).setup(None)),
            Method::PearlEps(s) => Some(InnerSpec::PearlEps(s.clone()).setup(None)),
            Method::PearlNds(s) => Some(InnerSpec::PearlNds(s.clone()).setup(None)),
            Method::CPearl(c) => Some(c.inner.setup(Some(ConstraintConfig {
                limits: c.limits.clone(),
                weights: c.gammas.clone(),
                bonus: c.bonus,
                mode: c.mode,
            }))),
            Method::Nsga2 | Method::Nsga3 { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub problems: Vec<String>,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Problem evaluations per run.
    pub budget: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_ncores")]
    pub ncores: usize,
    pub seeds: Seeds,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Size of the true-front sample used by distance metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_points: Option<usize>,
    #[serde(default)]
    pub trainer: TrainerOverrides,
    #[serde(default)]
    pub ga: GaOverrides,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn seed_for(&self, index: u64) -> u64 {
        self.base_seed.wrapping_add(index)
    }

    pub fn reference_points(&self) -> usize {
        self.reference_points.unwrap_or(DEFAULT_REFERENCE_POINTS)
    }

    pub fn trainer_config(&self, alg: &AlgorithmSpec, seed: u64) -> TrainerConfig {
        let mut cfg = TrainerConfig {
            n_steps: self.n_steps,
            ncores: self.ncores,
            budget: self.budget,
            seed,
            ..TrainerConfig::default()
        };
        self.trainer.apply(&mut cfg);
        if let Some(o) = &alg.trainer {
            o.apply(&mut cfg);
        }
        cfg
    }

    pub fn ga_config(&self, alg: &AlgorithmSpec, seed: u64) -> GaConfig {
        let mut cfg = match alg.method {
            Method::Nsga3 { constrained: true } => GaConfig::constrained_preset(),
            _ => GaConfig::unconstrained_preset(),
        };
        cfg.budget = self.budget;
        cfg.seed = seed;
        self.ga.apply(&mut cfg);
        if let Some(o) = &alg.ga {
            o.apply(&mut cfg);
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.problems.is_empty() {
            return Err(Error::config("problems", "list at least one problem"));
        }
        let mut problems = Vec::new();
        for (i, name) in self.problems.iter().enumerate() {
            let p = Problem::by_name(name).map_err(|_| {
                Error::config(format!("problems[{i}]"), format!("unknown problem `{name}`"))
            })?;
            problems.push(p);
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "list at least one algorithm"));
        }
        let seeds = self.seeds.indices();
        if seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(Error::config("seeds", "seed indices must be distinct"));
        }
        if self.reference_points == Some(0) {
            return Err(Error::config("reference_points", "must be positive"));
        }
        let mut labels = BTreeSet::new();
        for (i, alg) in self.algorithms.iter().enumerate() {
            let at = |e: Error| match e {
                Error::Config { key, message } if !matches!(key.as_str(), "budget" | "n_steps" | "ncores") => {
                    Error::config(format!("algorithms[{i}].{key}"), message)
                }
                other => other,
            };
            let label = alg.label();
            if label.is_empty() || label.contains(['/', '\\']) || label.starts_with('.') {
                return Err(Error::config(format!("algorithms[{i}].name"), "not a usable directory name"));
            }
            if !labels.insert(label.clone()) {
                return Err(Error::config(
                    format!("algorithms[{i}].name"),
                    format!("duplicate algorithm label `{label}`"),
                ));
            }
            match alg.pearl_setup() {
                Some(setup) => {
                    self.trainer_config(alg, 0).validate().map_err(at)?;
                    if setup.rays_per_worker == Some(0) {
                        return Err(at(Error::config("rays_per_worker", "must be positive")));
                    }
                    for p in &problems {
                        RewardEngine::new(
                            setup.variant.clone(),
                            setup.constraints.clone(),
                            setup.kappa,
                            p.n_obj(),
                        )
                        .map_err(at)?;
                        if let Some(a) = &setup.alpha {
                            if a.len() != p.n_obj() || a.iter().any(|v| !(*v > 0.0)) {
                                return Err(at(Error::config(
                                    "alpha",
                                    format!("{} needs {} positive concentrations", p.kind().name(), p.n_obj()),
                                )));
                            }
                        }
                        if let Some(l) = setup.constraints.as_ref().and_then(|c| c.limits.as_ref()) {
                            if l.len() != p.n_constraints() {
                                return Err(at(Error::config(
                                    "limits",
                                    format!("{} has {} constraints", p.kind().name(), p.n_constraints()),
                                )));
                            }
                        }
                    }
                }
                None => self.ga_config(alg, 0).validate().map_err(at)?,
            }
        }
        Ok(())
    }
}

/// Where `run` writes: the configured directory, resolved against `root`
/// when it is relative and a root is given.
pub fn resolve_output_dir(cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if cfg.output_dir.is_relative() => r.join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub problem: String,
    pub algorithm: String,
    pub seed_index: u64,
}

impl CellId {
    pub fn run_id(&self) -> String {
        format!("{}/{}/seed-{}", self.problem, self.algorithm, self.seed_index)
    }

    pub fn parse(run_id: &str) -> Result<Self> {
        let parts: Vec<&str> = run_id.split('/').collect();
        let seed = match parts.as_slice() {
            [_, _, s] => s.strip_prefix("seed-").and_then(|v| v.parse().ok()),
            _ => None,
        };
        match seed {
            Some(seed_index) => Ok(CellId {
                problem: parts[0].into(),
                algorithm: parts[1].into(),
                seed_index,
            }),
            None => Err(Error::usage(format!(
                "run id `{run_id}` is not of the form <problem>/<algorithm>/seed-<i>"
            ))),
        }
    }
}

/// Contents of a run's `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub problem: String,
    pub algorithm: String,
    pub seed_index: u64,
    pub seed: u64,
    pub evaluations: usize,
    pub front_size: usize,
    pub feasible_front_size: usize,
    pub wall_time_s: f64,
    pub metrics: MetricReport,
    pub config: ExperimentConfig,
}

/// Reads back the configuration echoed into a run summary.
pub fn read_summary_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut v: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = v
        .get_mut("config")
        .map(serde_json::Value::take)
        .ok_or_else(|| Error::usage(format!("{} has no config echo", path.display())))?;
    Ok(serde_json::from_value(cfg)?)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub force: bool,
    /// Cells run concurrently; 0 and 1 both mean sequential.
    pub parallel_cells: usize,
    pub output_root: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub metrics: Vec<MetricReport>,
    /// Run ids and error messages of cells that failed.
    pub failures: Vec<(String, String)>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A finished cell: its final front and its evaluation log.
#[derive(Clone, Debug)]
pub struct CellRun {
    pub front: Vec<Solution>,
    pub log: Vec<LogRow>,
}

/// Produces the result of one cell. [`run_experiment`] uses [`run_algorithm`].
pub type CellRunner = dyn Fn(&ExperimentConfig, &AlgorithmSpec, &Problem, &CellId) -> Result<CellRun> + Sync;

/// Trains or evolves `alg` on `problem` with the cell's seed.
pub fn run_algorithm(
    cfg: &ExperimentConfig,
    alg: &AlgorithmSpec,
    problem: &Problem,
    id: &CellId,
) -> Result<CellRun> {
    let seed = cfg.seed_for(id.seed_index);
    match alg.pearl_setup() {
        Some(setup) => {
            let r = train(problem, &setup, &cfg.trainer_config(alg, seed))?;
            Ok(CellRun {
                front: r.front,
                log: r.log,
            })
        }
        None => {
            let kind = match alg.method {
                Method::Nsga3 { constrained } => NsgaKind::Nsga3 { constrained },
                _ => NsgaKind::Nsga2,
            };
            let r = run_nsga(problem, kind, &cfg.ga_config(alg, seed))?;
            Ok(CellRun {
                front: r.front,
                log: r.log,
            })
        }
    }
}

struct CellOutput {
    id: CellId,
    seed: u64,
    front: Vec<Solution>,
    evaluations: usize,
    wall_time_s: f64,
}

fn run_cell(
    cfg: &ExperimentConfig,
    alg: &AlgorithmSpec,
    problem: &Problem,
    id: CellId,
    dir: &Path,
    runner: &CellRunner,
) -> Result<CellOutput> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let start = Instant::now();
    let CellRun { front, log } = runner(cfg, alg, problem, &id)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let (n_x, n_obj, n_g) = (problem.n_x(), problem.n_obj(), problem.n_constraints());
    io::write_log(&dir.join("log.csv"), &log, n_x, n_obj, n_g)?;
    io::write_solutions(&dir.join("front.csv"), &front, n_x, n_obj, n_g)?;
    Ok(CellOutput {
        seed: cfg.seed_for(id.seed_index),
        id,
        front,
        evaluations: log.len(),
        wall_time_s,
    })
}

/// Metrics of one feasible front. Distance metrics are NaN when the front is
/// empty; hypervolume is NaN without a reference point.
pub fn front_metrics(
    id: &CellId,
    front: &[Vec<f64>],
    nadir: Option<&[f64]>,
    distance_reference: &[Vec<f64>],
    combined: &[Vec<f64>],
) -> Result<MetricReport> {
    let hv = match nadir {
        Some(r) => hypervolume(front, r)?,
        None => f64::NAN,
    };
    let (gd_v, igd_v, eps) = if front.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            gd(front, distance_reference)?,
            igd(front, distance_reference)?,
            additive_epsilon(front, distance_reference)?,
        )
    };
    let card = cardinality_against(front, combined);
    Ok(MetricReport {
        run_id: id.run_id(),
        algorithm: id.algorithm.clone(),
        problem: id.problem.clone(),
        hv,
        gd: gd_v,
        igd: igd_v,
        eps,
        i_c: card.i_c,
        c_metric: card.c_metric,
    })
}

fn feasible_objectives(front: &[Solution]) -> Vec<Vec<f64>> {
    front
        .iter()
        .filter(|s| s.is_feasible())
        .map(Solution::minimization_objectives)
        .collect()
}

fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    let occupied = match fs::read_dir(dir) {
        Ok(mut entries) => entries.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(Error::io(dir, e)),
    };
    if occupied {
        if !force {
            return Err(Error::usage(format!(
                "{} already contains results; use --force to overwrite",
                dir.display()
            )));
        }
        warn!("removing previous results in {}", dir.display());
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs every cell of an experiment and writes logs, fronts, summaries and
/// `metrics.csv`. Failed cells leave a `FAILED` file with the error message;
/// the other cells still complete.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    run_experiment_with(cfg, opts, &run_algorithm)
}

/// [`run_experiment`] with a custom cell runner.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    runner: &CellRunner,
) -> Result<RunReport> {
    cfg.validate()?;
    let out = resolve_output_dir(cfg, opts.output_root.as_deref());
    let problems: Vec<Problem> = cfg
        .problems
        .iter()
        .map(|n| Problem::by_name(n))
        .collect::<Result<_>>()?;
    // Load reference fronts up front so a missing file fails before any training.
    let references: Vec<Vec<Vec<f64>>> = problems
        .iter()
        .map(|p| p.reference_front(cfg.reference_points()))
        .collect::<Result<_>>()?;
    prepare_output_dir(&out, opts.force)?;
    io::write_json(&out.join("experiment.json"), cfg)?;

    let mut cells = Vec::new();
    for (pi, p) in problems.iter().enumerate() {
        for alg in &cfg.algorithms {
            for s in cfg.seeds.indices() {
                let id = CellId {
                    problem: p.kind().name().to_string(),
                    algorithm: alg.label(),
                    seed_index: s,
                };
                cells.push((pi, alg, id));
            }
        }
    }
    let exec = |(pi, alg, id): &(usize, &AlgorithmSpec, CellId)| {
        let dir = out.join(id.run_id());
        info!("running {}", id.run_id());
        let r = run_cell(cfg, alg, &problems[*pi], id.clone(), &dir, runner);
        if let Err(e) = &r {
            warn!("{} failed: {e}", id.run_id());
            let _ = fs::create_dir_all(&dir);
            if let Err(w) = fs::write(dir.join(FAILED_MARKER), format!("{e}\n")) {
                warn!("could not write failure marker in {}: {w}", dir.display());
            }
        }
        (id.run_id(), r)
    };
    let results: Vec<(String, Result<CellOutput>)> = if opts.parallel_cells > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.parallel_cells)
            .build()
            .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
        pool.install(|| cells.par_iter().map(exec).collect())
    } else {
        cells.iter().map(exec).collect()
    };

    let mut failures = Vec::new();
    let mut done: Vec<(usize, CellOutput)> = Vec::new();
    for ((pi, _, _), (run_id, r)) in cells.iter().zip(results) {
        match r {
            Ok(c) => done.push((*pi, c)),
            Err(e) => failures.push((run_id, e.to_string())),
        }
    }

    let mut combined: Vec<Vec<Vec<f64>>> = vec![Vec::new(); problems.len()];
    for (pi, c) in &done {
        combined[*pi].extend(feasible_objectives(&c.front));
    }
    let combined: Vec<Vec<Vec<f64>>> = combined.into_iter().map(non_dominated_subset).collect();

    let mut metrics = Vec::with_capacity(done.len());
    for (pi, c) in &done {
        let p = &problems[*pi];
        let feasible = feasible_objectives(&c.front);
        let m = front_metrics(&c.id, &feasible, Some(p.nadir()), &references[*pi], &combined[*pi])?;
        let summary = RunSummary {
            run_id: c.id.run_id(),
            problem: c.id.problem.clone(),
            algorithm: c.id.algorithm.clone(),
            seed_index: c.id.seed_index,
            seed: c.seed,
            evaluations: c.evaluations,
            front_size: c.front.len(),
            feasible_front_size: feasible.len(),
            wall_time_s: c.wall_time_s,
            metrics: m.clone(),
            config: cfg.clone(),
        };
        io::write_json(&out.join(c.id.run_id()).join("summary.json"), &summary)?;
        metrics.push(m);
    }
    io::write_metrics(&out.join("metrics.csv"), &metrics)?;
    Ok(RunReport {
        output_dir: out,
        metrics,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Fronts on disk
// ---------------------------------------------------------------------------

fn find_fronts(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_fronts(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "front.csv") {
            found.push(p);
        }
    }
    Ok(())
}

/// The front stored in `dir/front.csv`, or the non-dominated union (feasible
/// first) of every `front.csv` below `dir`. Returns objectives and violations.
pub fn merged_front(dir: &Path) -> Result<io::FrontRows> {
    let own = dir.join("front.csv");
    if own.is_file() {
        return io::read_front(&own);
    }
    let mut paths = Vec::new();
    find_fronts(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(Error::usage(format!("no front.csv under {}", dir.display())));
    }
    let mut pool = Vec::new();
    let mut n_obj = None;
    for p in &paths {
        let rows = io::read_front(p)?;
        if *n_obj.get_or_insert(rows.n_obj) != rows.n_obj {
            return Err(Error::usage(format!(
                "{} has {} objectives, other fronts have {}",
                p.display(),
                rows.n_obj,
                n_obj.unwrap_or(0)
            )));
        }
        for (f, cv) in rows.objectives.into_iter().zip(rows.cv) {
            pool.push(Solution::with_cv(Vec::new(), f.iter().map(|v| -v).collect(), Vec::new(), cv));
        }
    }
    let keep = non_dominated_indices(&pool, Relation::Constrained);
    Ok(io::FrontRows {
        n_obj: n_obj.unwrap_or(0),
        objectives: keep.iter().map(|&i| pool[i].minimization_objectives()).collect(),
        cv: keep.iter().map(|&i| pool[i].cv).collect(),
    })
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Hv,
    Gd,
    Igd,
    Eps,
    IC,
    CMetric,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Hv,
        Metric::Gd,
        Metric::Igd,
        Metric::Eps,
        Metric::IC,
        Metric::CMetric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Hv => "hv",
            Metric::Gd => "gd",
            Metric::Igd => "igd",
            Metric::Eps => "eps",
            Metric::IC => "i_c",
            Metric::CMetric => "c_metric",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::usage(format!("unknown metric `{name}`")))
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Hv | Metric::IC | Metric::CMetric)
    }

    pub fn of(self, r: &MetricReport) -> f64 {
        match self {
            Metric::Hv => r.hv,
            Metric::Gd => r.gd,
            Metric::Igd => r.igd,
            Metric::Eps => r.eps,
            Metric::IC => r.i_c as f64,
            Metric::CMetric => r.c_metric,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub alpha: f64,
    /// Metric the rank tests are run on.
    pub metric: Metric,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            alpha: 0.05,
            metric: Metric::Hv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemComparison {
    pub problem: String,
    pub algorithms: Vec<String>,
    pub seeds: Vec<u64>,
    pub combined_front_size: usize,
    /// `summary[metric][algorithm]`, algorithms in `algorithms` order.
    pub summary: BTreeMap<String, Vec<MeanStd>>,
    pub friedman: Option<FriedmanResult>,
    pub nemenyi: Option<NemenyiResult>,
    /// Why the rank tests were skipped, when they were.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub alpha: f64,
    pub metric: Metric,
    pub problems: Vec<ProblemComparison>,
    pub metrics: Vec<MetricReport>,
    pub warnings: Vec<String>,
}

struct RunEntry {
    dir: PathBuf,
    report: MetricReport,
    id: CellId,
}

/// Compares runs from one or more experiment output directories.
///
/// Reads each directory's `metrics.csv` and the listed runs' front files,
/// builds one combined non-dominated reference front per problem from every
/// run's feasible front, recomputes distance and cardinality metrics against
/// it, and runs Friedman and Nemenyi tests on the chosen metric. Hypervolume
/// is taken from the metric files.
pub fn compare(dirs: &[PathBuf], opts: &CompareOptions) -> Result<CompareReport> {
    if dirs.is_empty() {
        return Err(Error::usage("no result directories given"));
    }
    let mut runs: Vec<RunEntry> = Vec::new();
    let mut seen = HashMap::new();
    for dir in dirs {
        for report in io::read_metrics(&dir.join("metrics.csv"))? {
            let id = CellId::parse(&report.run_id)?;
            if let Some(prev) = seen.insert(report.run_id.clone(), dir.clone()) {
                return Err(Error::usage(format!(
                    "run {} appears in both {} and {}",
                    report.run_id,
                    prev.display(),
                    dir.display()
                )));
            }
            runs.push(RunEntry {
                dir: dir.clone(),
                report,
                id,
            });
        }
    }

    let mut by_problem: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    for r in runs {
        by_problem.entry(r.id.problem.clone()).or_default().push(r);
    }
    if by_problem.is_empty() {
        return Err(Error::usage("metric files list no runs"));
    }

    let mut missing = Vec::new();
    for (problem, entries) in &by_problem {
        let algs: BTreeSet<&str> = entries.iter().map(|r| r.id.algorithm.as_str()).collect();
        let seeds: BTreeSet<u64> = entries.iter().map(|r| r.id.seed_index).collect();
        if algs.len() < 2 {
            return Err(Error::usage(format!(
                "{problem}: need at least two algorithms to compare, found {}",
                algs.len()
            )));
        }
        let have: BTreeSet<(&str, u64)> = entries
            .iter()
            .map(|r| (r.id.algorithm.as_str(), r.id.seed_index))
            .collect();
        for a in &algs {
            for s in &seeds {
                if !have.contains(&(*a, *s)) {
                    missing.push(format!("{problem}/{a}/seed-{s}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::usage(format!(
            "seed sets differ between algorithms; missing cells: {}",
            missing.join(", ")
        )));
    }

    let mut warnings = Vec::new();
    let mut problems = Vec::new();
    let mut all_metrics = Vec::new();
    for (problem, entries) in by_problem {
        let fronts: Vec<Vec<Vec<f64>>> = entries
            .iter()
            .map(|r| io::read_front(&r.dir.join(&r.report.run_id).join("front.csv")).map(|f| f.feasible()))
            .collect::<Result<_>>()?;
        let combined = non_dominated_subset(fronts.iter().flatten().cloned().collect());
        let mut recomputed = Vec::with_capacity(entries.len());
        for (r, front) in entries.iter().zip(&fronts) {
            let mut m = front_metrics(&r.id, front, None, &combined, &combined)?;
            m.hv = r.report.hv;
            recomputed.push(m);
        }

        let algorithms: Vec<String> = entries
            .iter()
            .map(|r| r.id.algorithm.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let seeds: Vec<u64> = entries
            .iter()
            .map(|r| r.id.seed_index)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let lookup: HashMap<(&str, u64), &MetricReport> = entries
            .iter()
            .zip(&recomputed)
            .map(|(r, m)| ((r.id.algorithm.as_str(), r.id.seed_index), m))
            .collect();

        let mut summary = BTreeMap::new();
        for metric in Metric::ALL {
            let cells = algorithms
                .iter()
                .map(|a| {
                    let vals: Vec<f64> = seeds.iter().map(|s| metric.of(lookup[&(a.as_str(), *s)])).collect();
                    mean_std(&vals)
                })
                .collect();
            summary.insert(metric.name().to_string(), cells);
        }

        let table: Vec<Vec<f64>> = seeds
            .iter()
            .map(|s| {
                algorithms
                    .iter()
                    .map(|a| opts.metric.of(lookup[&(a.as_str(), *s)]))
                    .collect()
            })
            .collect();
        let (mut fr, mut nm, mut skipped) = (None, None, None);
        if seeds.len() < 2 {
            skipped = Some(format!("only {} seed; rank tests need at least 2", seeds.len()));
        } else if table.iter().flatten().any(|v| v.is_nan()) {
            skipped = Some(format!("{} is undefined for some runs", opts.metric.name()));
        } else {
            let m = RankMatrix::new(table, opts.metric.higher_is_better())?;
            fr = Some(friedman(&m)?);
            nm = Some(nemenyi(&m, opts.alpha)?);
        }
        if let Some(why) = &skipped {
            let msg = format!("{problem}: statistics skipped: {why}");
            warn!("{msg}");
            warnings.push(msg);
        }
        problems.push(ProblemComparison {
            problem,
            algorithms,
            seeds,
            combined_front_size: combined.len(),
            summary,
            friedman: fr,
            nemenyi: nm,
            skipped,
        });
        all_metrics.extend(recomputed);
    }
    Ok(CompareReport {
        alpha: opts.alpha,
        metric: opts.metric,
        problems,
        metrics: all_metrics,
        warnings,
    })
}

fn fmt_p(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn fmt_cell(m: &MeanStd) -> String {
    if m.mean.is_nan() {
        "-".into()
    } else {
        format!("{:.4}/{:.4}", m.mean, m.std)
    }
}

impl CompareReport {
    /// One row per algorithm, one `mean/std` column per problem, for `metric`.
    pub fn table(&self, metric: Metric) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["algorithm".to_string()];
        header.extend(self.problems.iter().map(|p| p.problem.clone()));
        let algs: BTreeSet<&String> = self.problems.iter().flat_map(|p| &p.algorithms).collect();
        let rows = algs
            .into_iter()
            .map(|a| {
                let mut row = vec![a.clone()];
                for p in &self.problems {
                    row.push(match p.algorithms.iter().position(|x| x == a) {
                        Some(j) => fmt_cell(&p.summary[metric.name()][j]),
                        None => "-".into(),
                    });
                }
                row
            })
            .collect();
        (header, rows)
    }

    /// Plain-text rendering of every metric table followed by the test results.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for metric in Metric::ALL {
            let (header, rows) = self.table(metric);
            out.push_str(&format!("== {} (mean/std)\n", metric.name()));
            let mut widths: Vec<usize> = header.iter().map(String::len).collect();
            for r in &rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.len());
                }
            }
            for r in std::iter::once(&header).chain(&rows) {
                let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
            out.push('\n');
        }
        for p in &self.problems {
            out.push_str(&format!("== {} rank tests on {}\n", p.problem, self.metric.name()));
            match (&p.friedman, &p.nemenyi) {
                (Some(f), Some(n)) => {
                    out.push_str(&format!(
                        "friedman chi2 = {:.4}, df = {}, p = {}\n",
                        f.statistic, f.df, fmt_p(f.p_value)
                    ));
                    out.push_str(&format!(
                        "nemenyi alpha = {}, critical difference = {:.4}\n",
                        n.alpha, n.critical_difference
                    ));
                    for (a, r) in p.algorithms.iter().zip(&n.mean_ranks) {
                        out.push_str(&format!("  {a}: mean rank {r:.3}\n"));
                    }
                    for (i, j, pv, sig) in significance_pairs(p) {
                        out.push_str(&format!(
                            "  {} vs {}: p = {}{}\n",
                            p.algorithms[i],
                            p.algorithms[j],
                            fmt_p(pv),
                            if sig { " *" } else { "" }
                        ));
                    }
                }
                _ => out.push_str(&format!(
                    "skipped: {}\n",
                    p.skipped.as_deref().unwrap_or("no result")
                )),
            }
            out.push('\n');
        }
        out
    }

    /// Writes `metrics.csv`, one `table-<metric>.csv` per metric,
    /// `significance.csv`, `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_metrics(&dir.join("metrics.csv"), &self.metrics)?;
        for metric in Metric::ALL {
            let (header, rows) = self.table(metric);
            io::write_table(&dir.join(format!("table-{}.csv", metric.name())), &header, &rows)?;
        }
        let header: Vec<String> = ["problem", "algorithm_a", "algorithm_b", "rank_difference", "p_value", "significant"]
            .map(String::from)
            .to_vec();
        let mut rows = Vec::new();
        for p in &self.problems {
            if let Some(n) = &p.nemenyi {
                for (i, j, pv, sig) in significance_pairs(p) {
                    rows.push(vec![
                        p.problem.clone(),
                        p.algorithms[i].clone(),
                        p.algorithms[j].clone(),
                        (n.mean_ranks[i] - n.mean_ranks[j]).abs().to_string(),
                        pv.to_string(),
                        sig.to_string(),
                    ]);
                }
            }
        }
        io::write_table(&dir.join("significance.csv"), &header, &rows)?;
        io::write_json(&dir.join("report.json"), self)?;
        fs::write(dir.join("report.txt"), self.render()).map_err(|e| Error::io(dir, e))
    }
}

fn significance_pairs(p: &ProblemComparison) -> Vec<(usize, usize, f64, bool)> {
    let Some(n) = &p.nemenyi else {
        return Vec::new();
    };
    let k = p.algorithms.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            out.push((i, j, n.p_values[i][j], n.significant[i][j]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
version = 1
name = "smoke"
problems = ["dtlz2"]
budget = 512
seeds = 2

[[algorithms]]
kind = "pearl-nds"
ranker = "crowding"

[[algorithms]]
kind = "c-pearl"
mode = "rank2"
gammas = [1.0]
M = 10.0
inner = { kind = "pearl-eps", nu = 0.1 }

[[algorithms]]
kind = "nsga3"
constrained = true
ga = { mu = 4 }
"#;

    #[test]
    fn parses_and_labels() {
        let cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        let labels: Vec<String> = cfg.algorithms.iter().map(AlgorithmSpec::label).collect();
        assert_eq!(labels, ["pearl-nds-crowding", "c-pearl-eps-rank2", "nsga3-constrained"]);
        assert_eq!(cfg.seeds.indices(), vec![0, 1]);
        assert_eq!(cfg.n_steps, 32);
        let setup = cfg.algorithms[1].pearl_setup().unwrap();
        let c = setup.constraints.unwrap();
        assert_eq!(c.bonus, Some(10.0));
        assert_eq!(c.mode, ConstraintMode::Rank2);
        assert_eq!(setup.variant, RewardVariant::Epsilon { nu: 0.1 });
        let ga = cfg.ga_config(&cfg.algorithms[2], 7);
        assert_eq!((ga.mu, ga.seed, ga.budget), (4, 7, 512));
    }

    #[test]
    fn unknown_problem_names_key() {
        let text = BASIC.replace("\"dtlz2\"", "\"dtlz2\", \"dtlz9\"");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "problems[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_reported() {
        let text = BASIC.replace("ranker = \"crowding\"", "ranker = \"crowding\"\nkapa = 3");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("kapa"), "{err}");
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(BASIC).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn cell_ids_parse() {
        let id = CellId {
            problem: "c2-dtlz2".into(),
            algorithm: "nsga2".into(),
            seed_index: 12,
        };
        assert_eq!(CellId::parse(&id.run_id()).unwrap(), id);
        assert!(CellId::parse("dtlz2/nsga2").is_err());
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let m = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]).std, 0.0);
    }
}
