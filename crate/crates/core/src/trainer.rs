//! Clipped-surrogate policy-gradient training for one-step (bandit) problems.
//!
//! A state-independent diagonal Gaussian over an unconstrained latent `z`
//! is squashed into the decision box by a logistic map. Each rollout worker
//! owns a reward engine (and therefore its own buffer), draws `n_steps`
//! actions per batch, and the trainer updates the shared parameters once the
//! whole batch is in.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::pareto::{merge_fronts, Relation, Solution};
use crate::problems::Environment;
use crate::rewards::{
    sample_preferences, ConstraintConfig, ConstraintMode, RewardEngine, RewardVariant,
};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub n_steps: usize,
    pub ncores: usize,
    pub budget: usize,
    pub learning_rate: f64,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub n_epochs: usize,
    pub n_minibatches: usize,
    pub max_grad_norm: Option<f64>,
    pub normalize_advantage: bool,
    pub init_log_std: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            n_steps: 32,
            ncores: 8,
            budget: 10_000,
            learning_rate: 5e-3,
            clip_range: 0.2,
            ent_coef: 0.01,
            vf_coef: 0.5,
            n_epochs: 4,
            n_minibatches: 4,
            max_grad_norm: Some(0.5),
            normalize_advantage: true,
            init_log_std: 0.0,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn batch_size(&self) -> usize {
        self.n_steps * self.ncores
    }

    pub fn n_updates(&self) -> usize {
        self.budget / self.batch_size().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.ncores == 0 {
            return Err(Error::config("n_steps", "n_steps and ncores must be positive"));
        }
        if self.budget < self.batch_size() {
            return Err(Error::config(
                "budget",
                format!("{} is smaller than one batch of {}", self.budget, self.batch_size()),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(self.clip_range >= 0.0) {
            return Err(Error::config("clip_range", "must be nonnegative"));
        }
        if self.n_epochs == 0 || self.n_minibatches == 0 || self.n_minibatches > self.batch_size() {
            return Err(Error::config(
                "n_minibatches",
                "epochs and minibatches must be positive and minibatches at most the batch size",
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        Ok(())
    }
}

/// Policy mean network, state-independent log standard deviations, value
/// network and optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    pub learning_rate: f64,
    adam: Adam,
}

impl PolicyState {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        n_x: usize,
        hidden: &[usize],
        init_log_std: f64,
        learning_rate: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_x);
        let policy = Mlp::new(&sizes, 0.01, rng);
        *sizes.last_mut().expect("non-empty") = 1;
        let value = Mlp::new(&sizes, 1.0, rng);
        let n = policy.n_params() + n_x + value.n_params();
        PolicyState {
            policy,
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); n_x],
            value,
            learning_rate,
            adam: Adam::new(n),
        }
    }

    pub fn n_params(&self) -> usize {
        self.policy.n_params() + self.log_std.len() + self.value.n_params()
    }

    /// Policy weights, then log standard deviations, then value weights.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.policy.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(self.value.params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let (p, rest) = flat.split_at(self.policy.n_params());
        let (s, v) = rest.split_at(self.log_std.len());
        self.policy.params_mut().copy_from_slice(p);
        self.log_std.copy_from_slice(s);
        self.value.params_mut().copy_from_slice(v);
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.policy.forward(obs)
    }

    pub fn predict_value(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    pub fn log_prob(&self, mean: &[f64], z: &[f64]) -> f64 {
        mean.iter()
            .zip(z)
            .zip(&self.log_std)
            .map(|((m, z), s)| {
                let d = (z - m) / s.exp();
                -0.5 * d * d - s - HALF_LN_2PI
            })
            .sum()
    }

    /// Entropy of the latent Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|v| v.is_finite())
    }

    fn clamp_log_std(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Maps a latent sample into the box `[lower, upper]`.
pub fn squash(z: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&z, (&lo, &hi))| (lo + (hi - lo) * sigmoid(z)).clamp(lo, hi))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub z: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    /// Reward fed to the update (rank rewards divided by the buffer size).
    pub train_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub worker: usize,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub cv: f64,
    pub reward: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub rows: Vec<LogRow>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// One rollout worker: its random stream and reward engine.
pub struct Worker {
    pub index: usize,
    pub rng: ChaCha8Rng,
    pub engine: RewardEngine,
}

impl Worker {
    pub fn new(index: usize, seed: u64, engine: RewardEngine) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        Worker { index, rng, engine }
    }

    /// Observation fed to the policy: the worker's first ray for envelope
    /// rewards, a constant token otherwise.
    pub fn observation(&self) -> Vec<f64> {
        match self.engine.rays().first() {
            Some(w) if !self.engine.is_ranked() => w.clone(),
            _ => vec![1.0],
        }
    }
}

/// Draws `n_steps` actions on every worker and scores them.
///
/// `first_step` is the global evaluation index of the batch's first sample.
pub fn rollout(
    state: &PolicyState,
    env: &dyn Environment,
    workers: &mut [Worker],
    n_steps: usize,
    first_step: u64,
) -> Result<RolloutBatch> {
    let per_worker: Vec<Result<(Vec<Transition>, Vec<LogRow>)>> = workers
        .par_iter_mut()
        .map(|w| {
            let obs = w.observation();
            let mean = state.mean(&obs);
            let value = state.predict_value(&obs);
            let std: Vec<f64> = state.log_std.iter().map(|s| s.exp()).collect();
            let kappa = w.engine.kappa() as f64;
            let scale = if w.engine.is_ranked() { kappa } else { 1.0 };
            let mut transitions = Vec::with_capacity(n_steps);
            let mut rows = Vec::with_capacity(n_steps);
            for t in 0..n_steps {
                let z: Vec<f64> = mean
                    .iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let e: f64 = w.rng.sample(StandardNormal);
                        m + s * e
                    })
                    .collect();
                let x = squash(&z, env.lower(), env.upper());
                debug_assert!(x
                    .iter()
                    .zip(env.lower().iter().zip(env.upper()))
                    .all(|(v, (lo, hi))| v >= lo && v <= hi));
                let step = first_step + (w.index * n_steps + t) as u64;
                let (reward, row) = match env.evaluate(&x) {
                    Ok(e) => {
                        let s = w.engine.make_solution(x.clone(), &e.f, &e.g)?;
                        let cv = s.cv;
                        let out = w.engine.reward(s)?;
                        (
                            out.reward,
                            LogRow {
                                step,
                                worker: w.index,
                                x,
                                f: e.f,
                                g: e.g,
                                cv,
                                reward: out.reward,
                                failed: false,
                            },
                        )
                    }
                    Err(Error::Evaluation(msg)) => {
                        warn!("worker {} step {step}: {msg}", w.index);
                        let r = w.engine.failure_reward();
                        (
                            r,
                            LogRow {
                                step,
                                worker: w.index,
                                x,
                                f: vec![f64::NAN; env.n_obj()],
                                g: vec![f64::NAN; env.n_constraints()],
                                cv: f64::NAN,
                                reward: r,
                                failed: true,
                            },
                        )
                    }
                    Err(e) => return Err(e),
                };
                transitions.push(Transition {
                    obs: obs.clone(),
                    log_prob: state.log_prob(&mean, &z),
                    z,
                    value,
                    train_reward: reward / scale,
                });
                rows.push(row);
            }
            Ok((transitions, rows))
        })
        .collect();
    let mut batch = RolloutBatch {
        transitions: Vec::with_capacity(n_steps * workers.len()),
        rows: Vec::with_capacity(n_steps * workers.len()),
    };
    for r in per_worker {
        let (t, rows) = r?;
        batch.transitions.extend(t);
        batch.rows.extend(rows);
    }
    Ok(batch)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
}

/// Clipped surrogate + value MSE - entropy bonus on a minibatch, with its
/// gradient in [`PolicyState::flat_params`] layout.
///
/// The surrogate gradient flows through the ratio only where the unclipped
/// term is the active minimum: strictly inside `(1 - clip, 1 + clip)`, or
/// strictly smaller than the clipped term.
pub fn loss_and_grad(
    state: &PolicyState,
    batch: &[&Transition],
    advantages: &[f64],
    w: LossWeights,
) -> (LossTerms, Vec<f64>) {
    let n_pol = state.policy.n_params();
    let n_x = state.log_std.len();
    let mut grad = vec![0.0; state.n_params()];
    let (gp, rest) = grad.split_at_mut(n_pol);
    let (gs, gv) = rest.split_at_mut(n_x);
    let b = batch.len() as f64;
    let std: Vec<f64> = state.log_std.iter().map(|s| s.exp()).collect();
    let mut terms = LossTerms::default();
    for (t, &adv) in batch.iter().zip(advantages) {
        let ptrace = state.policy.trace(&t.obs);
        let mean = ptrace.output();
        let logp = state.log_prob(mean, &t.z);
        let ratio = (logp - t.log_prob).exp();
        let lo = 1.0 - w.clip_range;
        let hi = 1.0 + w.clip_range;
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(lo, hi) * adv;
        terms.policy -= surr1.min(surr2) / b;
        let active = (ratio > lo && ratio < hi) || surr1 < surr2;
        if active {
            // d(-ratio * adv / b) / d(logp)
            let dlogp = -adv * ratio / b;
            let dmean: Vec<f64> = (0..n_x)
                .map(|i| dlogp * (t.z[i] - mean[i]) / (std[i] * std[i]))
                .collect();
            state.policy.backward(&ptrace, &dmean, gp);
            for i in 0..n_x {
                let d = (t.z[i] - mean[i]) / std[i];
                gs[i] += dlogp * (d * d - 1.0);
            }
        }
        let vtrace = state.value.trace(&t.obs);
        let v = vtrace.output()[0];
        let diff = v - t.train_reward;
        terms.value += diff * diff / b;
        state.value.backward(&vtrace, &[w.vf_coef * 2.0 * diff / b], gv);
    }
    terms.entropy = state.entropy();
    for g in gs.iter_mut() {
        *g -= w.ent_coef;
    }
    terms.total = terms.policy + w.vf_coef * terms.value - w.ent_coef * terms.entropy;
    (terms, grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: LossTerms,
    pub skipped: usize,
    pub steps: usize,
}

/// Advantages `r - V` for every transition, optionally standardized.
fn advantages(batch: &[&Transition], normalize: bool) -> Vec<f64> {
    let mut a: Vec<f64> = batch.iter().map(|t| t.train_reward - t.value).collect();
    if normalize && a.len() > 1 {
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        a.iter_mut().for_each(|v| *v = (*v - mean) / (sd + 1e-8));
    }
    a
}

/// Several epochs of shuffled minibatch Adam steps on one batch.
pub fn update<R: Rng + ?Sized>(
    state: &mut PolicyState,
    batch: &RolloutBatch,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> UpdateStats {
    let weights = LossWeights {
        clip_range: cfg.clip_range,
        ent_coef: cfg.ent_coef,
        vf_coef: cfg.vf_coef,
    };
    let mut stats = UpdateStats::default();
    let n = batch.len();
    let mb = n.div_ceil(cfg.n_minibatches);
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.n_epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(mb) {
            let items: Vec<&Transition> = chunk.iter().map(|&i| &batch.transitions[i]).collect();
            let adv = advantages(&items, cfg.normalize_advantage);
            let (terms, mut grad) = loss_and_grad(state, &items, &adv, weights);
            if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                state.learning_rate /= 2.0;
                warn!(
                    "non-finite loss; skipping step and lowering learning rate to {}",
                    state.learning_rate
                );
                stats.skipped += 1;
                continue;
            }
            if let Some(max) = cfg.max_grad_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    grad.iter_mut().for_each(|g| *g *= max / norm);
                }
            }
            let before = state.flat_params();
            let mut params = before.clone();
            let lr = state.learning_rate;
            state.adam.step(&mut params, &grad, lr);
            if params.iter().any(|p| !p.is_finite()) {
                state.learning_rate /= 2.0;
                warn!("non-finite parameters after step; reverting");
                stats.skipped += 1;
                continue;
            }
            state.set_flat_params(&params);
            state.clamp_log_std();
            stats.loss = terms;
            stats.steps += 1;
        }
    }
    stats
}

/// Reward-side configuration of a policy-trained run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PearlSetup {
    pub variant: RewardVariant,
    pub constraints: Option<ConstraintConfig>,
    pub kappa: usize,
    /// Dirichlet concentration for envelope rays; all ones when absent.
    pub alpha: Option<Vec<f64>>,
    /// Evaluations per worker between ray resamples, rounded up to whole batches.
    pub resample_period: Option<usize>,
    /// Rays drawn for each worker at every resample; the first one is the
    /// worker's observation. Defaults to 1.
    pub rays_per_worker: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Non-dominated union of every worker's buffer.
    pub front: Vec<Solution>,
    pub log: Vec<LogRow>,
    pub updates: usize,
    pub evaluations: usize,
    pub final_learning_rate: f64,
}

impl RunResult {
    pub fn feasible_front(&self) -> Vec<&Solution> {
        self.front.iter().filter(|s| s.is_feasible()).collect()
    }
}

/// Alternates rollouts and updates until the budget is spent.
pub fn train(env: &dyn Environment, setup: &PearlSetup, cfg: &TrainerConfig) -> Result<RunResult> {
    cfg.validate()?;
    let n_obj = env.n_obj();
    let envelope = matches!(setup.variant, RewardVariant::Envelope(_));
    let alpha = match &setup.alpha {
        Some(a) if a.len() != n_obj => {
            return Err(Error::config(
                "alpha",
                format!("expected {n_obj} concentrations, got {}", a.len()),
            ))
        }
        Some(a) => a.clone(),
        None => vec![1.0; n_obj],
    };
    let mut trainer_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    trainer_rng.set_stream(0);
    let obs_dim = if envelope { n_obj } else { 1 };
    let mut state = PolicyState::new(
        obs_dim,
        env.n_x(),
        &cfg.hidden,
        cfg.init_log_std,
        cfg.learning_rate,
        &mut trainer_rng,
    );
    let mut workers = (0..cfg.ncores)
        .map(|i| {
            let engine = RewardEngine::new(
                setup.variant.clone(),
                setup.constraints.clone(),
                setup.kappa,
                n_obj,
            )?;
            Ok(Worker::new(i, cfg.seed, engine))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_rays = setup.rays_per_worker.unwrap_or(1);
    if n_rays == 0 {
        return Err(Error::config("rays_per_worker", "must be positive"));
    }
    let period_batches = setup
        .resample_period
        .unwrap_or(cfg.n_steps)
        .div_ceil(cfg.n_steps)
        .max(1);
    let updates = cfg.n_updates();
    let mut log = Vec::with_capacity(updates * cfg.batch_size());
    for u in 0..updates {
        if envelope && u % period_batches == 0 {
            for w in &mut workers {
                let rays = sample_preferences(&alpha, n_rays, &mut trainer_rng)?;
                w.engine.set_rays(rays);
            }
        }
        let first = (u * cfg.batch_size()) as u64;
        let batch = rollout(&state, env, &mut workers, cfg.n_steps, first)?;
        update(&mut state, &batch, cfg, &mut trainer_rng);
        debug_assert!(state.is_finite());
        log.extend(batch.rows);
    }

    let relation = match &setup.constraints {
        Some(c) if c.mode == ConstraintMode::Rank2 => Relation::Constrained,
        _ => Relation::Plain,
    };
    let archives: Vec<_> = workers.into_iter().map(|w| w.engine.into_archive()).collect();
    let front = merge_fronts(archives.iter().map(|a| a.members()), relation);
    Ok(RunResult {
        front,
        evaluations: log.len(),
        log,
        updates,
        final_learning_rate: state.learning_rate,
    })
}
