//! Scalar reward assignment for single-policy Pareto front search.
//!
//! Three families turn a new solution's objective vector into a scalar:
//!
//! * **envelope** (`pearl-e`): the best preference-weighted scalarization over
//!   a set of sampled rays, plus a uniformity term aligning the objective
//!   vector with the ray;
//! * **epsilon** (`pearl-eps`): the rank of the solution by additive-epsilon
//!   indicator fitness inside the worker's non-dominated buffer;
//! * **non-dominated** (`pearl-nds`): the rank of the solution by a density
//!   estimate (crowding or niching) inside the buffer.
//!
//! Ranked rewards are `-rank`, or `-kappa` for a dominated solution. The
//! constrained wrapper either gates the inner reward behind feasibility with a
//! distance penalty (curriculum mode) or folds feasibility into dominance
//! (`rank2` mode).

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::density::{lex_cmp, CrowdingRanker, DensityRank, FrontRanker, NichingRanker};
use crate::error::{Error, Result};
use crate::pareto::{InsertOutcome, ParetoArchive, Relation, Solution, FEASIBILITY_TOL};

// ---------------------------------------------------------------------------
// Constraint violation
// ---------------------------------------------------------------------------

/// `sum max(0, g_i)^2` over violation-positive constraint values.
pub fn unit_violation(g: &[f64]) -> f64 {
    g.iter()
        .filter(|&&v| v > FEASIBILITY_TOL)
        .map(|v| v * v)
        .sum()
}

/// Weighted squared violation of raw quantities against upper limits.
///
/// Each quantity above its limit contributes `weight * ((value - limit) / |limit|)^2`.
/// A zero limit falls back to the absolute overshoot.
pub fn constraint_violation(values: &[f64], limits: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != limits.len() {
        return Err(Error::usage(format!(
            "{} constraint values but {} limits",
            values.len(),
            limits.len()
        )));
    }
    let mut cv = 0.0;
    for (i, (&v, &c)) in values.iter().zip(limits).enumerate() {
        let over = v - c;
        if over <= FEASIBILITY_TOL {
            continue;
        }
        let scaled = if c != 0.0 { over / c.abs() } else { over };
        cv += weight_at(weights, i) * scaled * scaled;
    }
    Ok(cv)
}

/// Weighted squared violation for constraints already written as `g(x) <= 0`.
pub fn weighted_violation(g: &[f64], weights: &[f64]) -> f64 {
    g.iter()
        .enumerate()
        .filter(|(_, &v)| v > FEASIBILITY_TOL)
        .map(|(i, &v)| weight_at(weights, i) * v * v)
        .sum()
}

fn weight_at(weights: &[f64], i: usize) -> f64 {
    weights.get(i).copied().unwrap_or(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// Infeasible solutions get `-cv - bonus`; the inner reward only sees feasible ones.
    DistanceCl,
    /// Feasibility is folded into dominance and the buffer ranks everything.
    Rank2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// Upper limits for raw constraint quantities. When absent, the problem's
    /// constraint values are already violation-positive.
    #[serde(default)]
    pub limits: Option<Vec<f64>>,
    /// Per-constraint weights; missing entries default to 1.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Penalty added to every infeasible reward. Defaults to the buffer size.
    #[serde(default)]
    pub bonus: Option<f64>,
    pub mode: ConstraintMode,
}

impl ConstraintConfig {
    pub fn new(mode: ConstraintMode) -> Self {
        ConstraintConfig {
            limits: None,
            weights: Vec::new(),
            bonus: None,
            mode,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::config("weights", "constraint weights must be positive"));
        }
        if let Some(b) = self.bonus {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::config("bonus", "bonus must be a nonnegative number"));
            }
        }
        Ok(())
    }

    /// Converts raw constraint output into violation-positive values and a scalar violation.
    pub fn apply(&self, raw: &[f64]) -> Result<(Vec<f64>, f64)> {
        match &self.limits {
            Some(limits) => {
                let cv = constraint_violation(raw, limits, &self.weights)?;
                let g = raw.iter().zip(limits).map(|(v, c)| v - c).collect();
                Ok((g, cv))
            }
            None => Ok((raw.to_vec(), weighted_violation(raw, &self.weights))),
        }
    }
}

// ---------------------------------------------------------------------------
// Preference sampling
// ---------------------------------------------------------------------------

/// `count` independent Dirichlet(`alpha`) draws, each a point on the simplex.
pub fn sample_preferences<R: Rng + ?Sized>(
    alpha: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if alpha.is_empty() {
        return Err(Error::usage("Dirichlet concentration vector is empty"));
    }
    let gammas = alpha
        .iter()
        .map(|&a| {
            if a > 0.0 && a.is_finite() {
                Gamma::new(a, 1.0).map_err(|e| Error::usage(e.to_string()))
            } else {
                Err(Error::usage(format!("Dirichlet concentration must be positive, got {a}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rays = Vec::with_capacity(count);
    while rays.len() < count {
        let draw: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draw.iter().sum();
        // All-underflow draws happen for very small concentrations; redraw.
        if total > 0.0 && total.is_finite() {
            rays.push(draw.into_iter().map(|v| v / total).collect());
        }
    }
    Ok(rays)
}

/// Rays active for one resampling period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSet {
    pub alpha: Vec<f64>,
    pub rays: Vec<Vec<f64>>,
    pub resample_period: usize,
}

impl PreferenceSet {
    pub fn sample<R: Rng + ?Sized>(
        alpha: Vec<f64>,
        count: usize,
        resample_period: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let rays = sample_preferences(&alpha, count, rng)?;
        Ok(PreferenceSet {
            alpha,
            rays,
            resample_period,
        })
    }
}

// ---------------------------------------------------------------------------
// Envelope reward
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformityKind {
    #[serde(alias = "cos")]
    Cosine,
    Kl,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityConfig {
    pub kind: UniformityKind,
    pub lambda: f64,
    #[serde(default)]
    pub normalized_obj: bool,
}

impl Default for UniformityConfig {
    fn default() -> Self {
        UniformityConfig {
            kind: UniformityKind::Cosine,
            lambda: 1.0,
            normalized_obj: false,
        }
    }
}

/// Componentwise running min/max of every reward vector seen so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunningBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl RunningBounds {
    pub fn observe(&mut self, r: &[f64]) {
        if self.lo.is_empty() {
            self.lo = r.to_vec();
            self.hi = r.to_vec();
            return;
        }
        for (k, &v) in r.iter().enumerate() {
            self.lo[k] = self.lo[k].min(v);
            self.hi[k] = self.hi[k].max(v);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Min-max scales `r` into `[0, 1]`; a degenerate range maps to 0.
    pub fn normalize(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .enumerate()
            .map(|(k, &v)| {
                let range = self.hi[k] - self.lo[k];
                if range > 0.0 {
                    (v - self.lo[k]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between `w` and `r`, 0 when either has zero norm.
pub fn cosine_uniformity(w: &[f64], r: &[f64]) -> f64 {
    let nw = dot(w, w).sqrt();
    let nr = dot(r, r).sqrt();
    if nw == 0.0 || nr == 0.0 {
        return 0.0;
    }
    dot(w, r) / (nw * nr)
}

/// Negative KL divergence between the weighted profile `w_i r_i / sum_k w_k r_k`
/// and the uniform distribution. Zero iff the profile is uniform.
pub fn kl_uniformity(w: &[f64], r: &[f64]) -> f64 {
    let f = w.len() as f64;
    let weighted: Vec<f64> = w.iter().zip(r).map(|(a, b)| a * b).collect();
    let total: f64 = weighted.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return 0.0;
    }
    let mut profile: Vec<f64> = weighted.iter().map(|v| v / total).collect();
    if profile.iter().any(|&p| p < 0.0) {
        // Mixed-sign objectives: keep the same-signed mass only.
        profile.iter_mut().for_each(|p| *p = p.max(0.0));
        let s: f64 = profile.iter().sum();
        if s == 0.0 {
            return 0.0;
        }
        profile.iter_mut().for_each(|p| *p /= s);
    }
    let kl: f64 = profile
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * f).ln())
        .sum();
    -kl
}

/// Envelope reward: `max_j w_j . r + lambda * u(w_j, r)`.
pub fn pearl_e_reward(
    r: &[f64],
    rays: &[Vec<f64>],
    cfg: &UniformityConfig,
    bounds: Option<&RunningBounds>,
) -> Result<f64> {
    if rays.is_empty() {
        return Err(Error::usage("envelope reward needs at least one ray"));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::usage("reward vector is not finite"));
    }
    let scaled;
    let r = match bounds {
        Some(b) if cfg.normalized_obj && !b.is_empty() => {
            scaled = b.normalize(r);
            scaled.as_slice()
        }
        _ => r,
    };
    let mut best = f64::NEG_INFINITY;
    for w in rays {
        if w.len() != r.len() {
            return Err(Error::usage(format!(
                "ray has {} components, reward has {}",
                w.len(),
                r.len()
            )));
        }
        let u = if cfg.lambda == 0.0 {
            0.0
        } else {
            match cfg.kind {
                UniformityKind::Cosine => cosine_uniformity(w, r),
                UniformityKind::Kl => kl_uniformity(w, r),
            }
        };
        best = best.max(dot(w, r) + cfg.lambda * u);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Ranked rewards
// ---------------------------------------------------------------------------

/// Additive-epsilon indicator fitness on min-max normalized objectives.
///
/// `F(x) = sum_{y != x} -exp(-I(y, x) / nu)` where `I(y, x)` is the smallest
/// shift that lets `y` weakly dominate `x`.
pub fn epsilon_fitness(front: &[&[f64]], nu: f64) -> Vec<f64> {
    let n = front.len();
    if n == 0 {
        return Vec::new();
    }
    let m = front[0].len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for p in front {
        for k in 0..m {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let norm: Vec<Vec<f64>> = front
        .iter()
        .map(|p| {
            (0..m)
                .map(|k| {
                    let range = hi[k] - lo[k];
                    if range > 0.0 {
                        (p[k] - lo[k]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|x| {
            (0..n)
                .filter(|&y| y != x)
                .map(|y| {
                    let eps = (0..m)
                        .map(|k| norm[x][k] - norm[y][k])
                        .fold(f64::NEG_INFINITY, f64::max);
                    -(-eps / nu).exp()
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct EpsilonRanker {
    pub nu: f64,
}

impl FrontRanker for EpsilonRanker {
    fn rank(&self, front: &[&[f64]]) -> Result<DensityRank> {
        if front.is_empty() {
            return Err(Error::usage("cannot rank an empty front"));
        }
        let scores = epsilon_fitness(front, self.nu);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| lex_cmp(front[a], front[b]))
        });
        Ok(DensityRank { order, scores })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardOutcome {
    pub reward: f64,
    pub feasible: bool,
    pub archived: bool,
}

fn bounded_kappa(archive: &ParetoArchive) -> Result<usize> {
    archive
        .capacity()
        .ok_or_else(|| Error::usage("ranked rewards need a bounded archive"))
}

fn ranked_reward(s: Solution, archive: &mut ParetoArchive, ranker: &dyn FrontRanker) -> Result<RewardOutcome> {
    let kappa = bounded_kappa(archive)?;
    let feasible = s.is_feasible();
    let outcome = archive.insert(s, ranker)?;
    Ok(match outcome {
        InsertOutcome::Dominated => RewardOutcome {
            reward: -(kappa as f64),
            feasible,
            archived: false,
        },
        InsertOutcome::Rank(k) => RewardOutcome {
            reward: -(k.min(kappa) as f64),
            feasible,
            archived: k < kappa,
        },
    })
}

pub fn pearl_eps_reward(s: Solution, archive: &mut ParetoArchive, nu: f64) -> Result<RewardOutcome> {
    ranked_reward(s, archive, &EpsilonRanker { nu })
}

pub fn pearl_nds_reward(
    s: Solution,
    archive: &mut ParetoArchive,
    ranker: &dyn FrontRanker,
) -> Result<RewardOutcome> {
    ranked_reward(s, archive, ranker)
}

/// The reward used once a solution is allowed through the constraint gate.
pub enum InnerReward<'a> {
    Envelope {
        rays: &'a [Vec<f64>],
        cfg: &'a UniformityConfig,
        bounds: Option<&'a RunningBounds>,
    },
    Epsilon {
        nu: f64,
    },
    NonDominated {
        ranker: &'a dyn FrontRanker,
    },
}

impl InnerReward<'_> {
    fn evaluate(&self, s: Solution, archive: &mut ParetoArchive) -> Result<RewardOutcome> {
        match self {
            InnerReward::Envelope { rays, cfg, bounds } => {
                let reward = pearl_e_reward(&s.obj, rays, cfg, *bounds)?;
                let feasible = s.is_feasible();
                let archived = archive.insert_unranked(s);
                Ok(RewardOutcome {
                    reward,
                    feasible,
                    archived,
                })
            }
            InnerReward::Epsilon { nu } => pearl_eps_reward(s, archive, *nu),
            InnerReward::NonDominated { ranker } => pearl_nds_reward(s, archive, *ranker),
        }
    }
}

/// Constrained reward. `s.cv` must already reflect `ccfg`.
pub fn c_pearl_reward(
    s: Solution,
    archive: &mut ParetoArchive,
    inner: &InnerReward<'_>,
    ccfg: &ConstraintConfig,
    kappa: usize,
) -> Result<RewardOutcome> {
    match ccfg.mode {
        ConstraintMode::DistanceCl => {
            if s.is_feasible() {
                inner.evaluate(s, archive)
            } else {
                let bonus = ccfg.bonus.unwrap_or(kappa as f64);
                Ok(RewardOutcome {
                    reward: -s.cv - bonus,
                    feasible: false,
                    archived: false,
                })
            }
        }
        ConstraintMode::Rank2 => {
            if archive.relation() != Relation::Constrained {
                return Err(Error::usage("rank2 mode needs a constrained-dominance archive"));
            }
            match inner {
                InnerReward::Envelope { .. } => Err(Error::usage(
                    "rank2 constraint handling needs a ranked inner reward",
                )),
                other => other.evaluate(s, archive),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Per-worker engine
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    Crowding,
    Niching,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RewardVariant {
    Envelope(UniformityConfig),
    Epsilon { nu: f64 },
    NonDominated(RankerKind),
}

enum Ranker {
    Crowding(CrowdingRanker),
    Niching(NichingRanker),
    Epsilon(EpsilonRanker),
}

impl Ranker {
    fn as_dyn(&self) -> &dyn FrontRanker {
        match self {
            Ranker::Crowding(r) => r,
            Ranker::Niching(r) => r,
            Ranker::Epsilon(r) => r,
        }
    }
}

/// Owns one worker's buffer and turns each new solution into a scalar reward.
pub struct RewardEngine {
    variant: RewardVariant,
    constraints: Option<ConstraintConfig>,
    kappa: usize,
    archive: ParetoArchive,
    ranker: Option<Ranker>,
    bounds: RunningBounds,
    rays: Vec<Vec<f64>>,
}

impl RewardEngine {
    pub fn new(
        variant: RewardVariant,
        constraints: Option<ConstraintConfig>,
        kappa: usize,
        n_obj: usize,
    ) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::config("kappa", "buffer size must be positive"));
        }
        if let Some(c) = &constraints {
            c.validate()?;
        }
        let relation = match &constraints {
            Some(c) if c.mode == ConstraintMode::Rank2 => Relation::Constrained,
            _ => Relation::Plain,
        };
        let ranker = match &variant {
            RewardVariant::Envelope(cfg) => {
                if !cfg.lambda.is_finite() {
                    return Err(Error::config("lambda", "must be finite"));
                }
                if matches!(&constraints, Some(c) if c.mode == ConstraintMode::Rank2) {
                    return Err(Error::config(
                        "mode",
                        "rank2 constraint handling needs a ranked variant",
                    ));
                }
                None
            }
            RewardVariant::Epsilon { nu } => {
                if !(*nu > 0.0) {
                    return Err(Error::config("nu", "must be positive"));
                }
                Some(Ranker::Epsilon(EpsilonRanker { nu: *nu }))
            }
            RewardVariant::NonDominated(RankerKind::Crowding) => Some(Ranker::Crowding(CrowdingRanker)),
            RewardVariant::NonDominated(RankerKind::Niching) => {
                Some(Ranker::Niching(NichingRanker::for_capacity(n_obj, kappa)?))
            }
        };
        let archive = match variant {
            RewardVariant::Envelope(_) => ParetoArchive::unbounded(relation),
            _ => ParetoArchive::new(kappa, relation)?,
        };
        Ok(RewardEngine {
            variant,
            constraints,
            kappa,
            archive,
            ranker,
            bounds: RunningBounds::default(),
            rays: Vec::new(),
        })
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn variant(&self) -> &RewardVariant {
        &self.variant
    }

    /// Whether rewards are buffer ranks (as opposed to envelope scalarizations).
    pub fn is_ranked(&self) -> bool {
        !matches!(self.variant, RewardVariant::Envelope(_))
    }

    pub fn archive(&self) -> &ParetoArchive {
        &self.archive
    }

    pub fn into_archive(self) -> ParetoArchive {
        self.archive
    }

    pub fn set_rays(&mut self, rays: Vec<Vec<f64>>) {
        self.rays = rays;
    }

    pub fn rays(&self) -> &[Vec<f64>] {
        &self.rays
    }

    /// Builds a solution from raw problem output, applying the constraint
    /// configuration to compute its violation.
    pub fn make_solution(&self, x: Vec<f64>, f_min: &[f64], raw_g: &[f64]) -> Result<Solution> {
        let obj: Vec<f64> = f_min.iter().map(|v| -v).collect();
        match &self.constraints {
            Some(c) => {
                let (g, cv) = c.apply(raw_g)?;
                Ok(Solution::with_cv(x, obj, g, cv))
            }
            None => Ok(Solution::new(x, obj, raw_g.to_vec())),
        }
    }

    /// Reward assigned to a dominated or failed sample.
    pub fn failure_reward(&self) -> f64 {
        -(self.kappa as f64)
    }

    pub fn reward(&mut self, s: Solution) -> Result<RewardOutcome> {
        if let RewardVariant::Envelope(cfg) = &self.variant {
            if cfg.normalized_obj {
                self.bounds.observe(&s.obj);
            }
        }
        let inner = match (&self.variant, &self.ranker) {
            (RewardVariant::Envelope(cfg), _) => InnerReward::Envelope {
                rays: &self.rays,
                cfg,
                bounds: Some(&self.bounds),
            },
            (RewardVariant::Epsilon { nu }, _) => InnerReward::Epsilon { nu: *nu },
            (RewardVariant::NonDominated(_), Some(r)) => InnerReward::NonDominated { ranker: r.as_dyn() },
            (RewardVariant::NonDominated(_), None) => unreachable!("ranker built in new"),
        };
        match &self.constraints {
            Some(c) => c_pearl_reward(s, &mut self.archive, &inner, c, self.kappa),
            None => {
                let feasible = s.is_feasible();
                match inner {
                    InnerReward::Envelope { .. } => {
                        let mut out = inner.evaluate(s, &mut self.archive)?;
                        out.feasible = feasible;
                        Ok(out)
                    }
                    other => other.evaluate(s, &mut self.archive),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::CrowdingRanker;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sol(obj: &[f64]) -> Solution {
        Solution::unconstrained(vec![], obj.to_vec())
    }

    #[test]
    fn dirichlet_uniform_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rays = sample_preferences(&[1.0, 1.0, 1.0], 10_000, &mut rng).unwrap();
        let mut mean = [0.0; 3];
        for r in &rays {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.iter().all(|&v| v >= 0.0));
            for k in 0..3 {
                mean[k] += r[k] / rays.len() as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.02, "{m}");
        }
    }

    #[test]
    fn dirichlet_concentration_shrinks_variance() {
        // Var = a_i (a0 - a_i) / (a0^2 (a0 + 1)): 2/36 for (1,1,1), 200/8100*... for (10,10,10)
        let var = |alpha: f64| {
            let a0 = 3.0 * alpha;
            alpha * (a0 - alpha) / (a0 * a0 * (a0 + 1.0))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let empirical = |alpha: f64, rng: &mut ChaCha8Rng| {
            let rays = sample_preferences(&[alpha; 3], 10_000, rng).unwrap();
            let m: f64 = rays.iter().map(|r| r[0]).sum::<f64>() / rays.len() as f64;
            rays.iter().map(|r| (r[0] - m).powi(2)).sum::<f64>() / rays.len() as f64
        };
        let v1 = empirical(1.0, &mut rng);
        let v10 = empirical(10.0, &mut rng);
        assert!(v10 < v1);
        assert!((v1 - var(1.0)).abs() < 0.1 * var(1.0));
        assert!((v10 - var(10.0)).abs() < 0.1 * var(10.0));
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_preferences(&[1.0, 1.0], 0, &mut rng).unwrap().is_empty());
        assert!(sample_preferences(&[1.0, 0.0], 1, &mut rng).is_err());
        assert!(sample_preferences(&[1.0, -2.0], 1, &mut rng).is_err());
    }

    #[test]
    fn envelope_examples() {
        let lin = UniformityConfig {
            kind: UniformityKind::Cosine,
            lambda: 0.0,
            normalized_obj: false,
        };
        assert_eq!(pearl_e_reward(&[2.0, 4.0], &[vec![0.5, 0.5]], &lin, None).unwrap(), 3.0);

        let kl = UniformityConfig {
            kind: UniformityKind::Kl,
            lambda: 1.0,
            normalized_obj: false,
        };
        assert_eq!(pearl_e_reward(&[1.0, 1.0], &[vec![0.5, 0.5]], &kl, None).unwrap(), 1.0);

        let cos = UniformityConfig {
            kind: UniformityKind::Cosine,
            lambda: 1.0,
            normalized_obj: false,
        };
        assert_eq!(pearl_e_reward(&[1.0, 0.0], &[vec![1.0, 0.0]], &cos, None).unwrap(), 2.0);
        assert_eq!(cosine_uniformity(&[1.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(pearl_e_reward(&[1.0, 0.0], &[], &cos, None).is_err());
    }

    #[test]
    fn envelope_takes_best_ray() {
        let lin = UniformityConfig {
            kind: UniformityKind::Cosine,
            lambda: 0.0,
            normalized_obj: false,
        };
        let rays = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(pearl_e_reward(&[-1.0, -3.0], &rays, &lin, None).unwrap(), -1.0);
    }

    #[test]
    fn kl_uniformity_sign() {
        assert_eq!(kl_uniformity(&[0.5, 0.5], &[2.0, 2.0]), 0.0);
        assert!(kl_uniformity(&[0.5, 0.5], &[2.0, 1.0]) < 0.0);
        // Weighted profile uniform even though r is not.
        assert!(kl_uniformity(&[0.25, 0.75], &[3.0, 1.0]).abs() < 1e-15);
    }

    #[test]
    fn normalized_envelope_uses_running_bounds() {
        let cfg = UniformityConfig {
            kind: UniformityKind::Cosine,
            lambda: 0.0,
            normalized_obj: true,
        };
        let mut b = RunningBounds::default();
        b.observe(&[0.0, 10.0]);
        b.observe(&[2.0, 30.0]);
        let r = pearl_e_reward(&[1.0, 20.0], &[vec![0.5, 0.5]], &cfg, Some(&b)).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn violation_examples() {
        assert_eq!(constraint_violation(&[1.0, 2.0], &[5.0, 5.0], &[]).unwrap(), 0.0);
        let cv = constraint_violation(&[1320.0], &[1200.0], &[1.0]).unwrap();
        assert!((cv - 0.01).abs() < 1e-15);
        assert!((weighted_violation(&[0.5, 0.2], &[1.0, 1.0]) - 0.29).abs() < 1e-15);
        let cv = constraint_violation(&[0.5], &[0.0], &[2.0]).unwrap();
        assert!((cv - 0.5).abs() < 1e-15);
        assert!(constraint_violation(&[1.0], &[], &[]).is_err());
    }

    #[test]
    fn epsilon_reward_examples() {
        let mut a = ParetoArchive::new(8, Relation::Plain).unwrap();
        let out = pearl_eps_reward(sol(&[0.0, 1.0]), &mut a, 0.05).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.archived);

        // Both normalized shifts are 1 so fitnesses tie at -exp(-20);
        // the lexicographic tie-break puts (0,1) first.
        let out = pearl_eps_reward(sol(&[1.0, 0.0]), &mut a, 0.05).unwrap();
        let f = epsilon_fitness(&[&[0.0, 1.0], &[1.0, 0.0]], 0.05);
        assert!((f[0] + (-20.0f64).exp()).abs() < 1e-20);
        assert_eq!(f[0], f[1]);
        assert_eq!(out.reward, -1.0);
        assert_eq!(a.len(), 2);

        let out = pearl_eps_reward(sol(&[-1.0, -1.0]), &mut a, 0.05).unwrap();
        assert_eq!(out.reward, -8.0);
        assert!(!out.archived);
    }

    #[test]
    fn epsilon_fitness_prefers_isolated_points() {
        let front: Vec<&[f64]> = vec![&[0.0, 1.0], &[0.45, 0.55], &[0.5, 0.5], &[1.0, 0.0]];
        let r = EpsilonRanker { nu: 0.05 }.rank(&front).unwrap();
        // The two near-duplicates in the middle lose the most fitness.
        assert!(r.order[2..].contains(&1) && r.order[2..].contains(&2));
    }

    #[test]
    fn nds_reward_examples() {
        let mut a = ParetoArchive::new(2, Relation::Plain).unwrap();
        let out = pearl_nds_reward(sol(&[0.0, 2.0]), &mut a, &CrowdingRanker).unwrap();
        assert_eq!(out.reward, 0.0);
        pearl_nds_reward(sol(&[2.0, 0.0]), &mut a, &CrowdingRanker).unwrap();
        let out = pearl_nds_reward(sol(&[1.0, 1.0]), &mut a, &CrowdingRanker).unwrap();
        assert_eq!(out.reward, -2.0);
        assert!(!out.archived);
        let out = pearl_nds_reward(sol(&[3.0, 3.0]), &mut a, &CrowdingRanker).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn constrained_examples() {
        let mut ccfg = ConstraintConfig::new(ConstraintMode::DistanceCl);
        let mut a = ParetoArchive::new(64, Relation::Plain).unwrap();
        let inner = InnerReward::NonDominated {
            ranker: &CrowdingRanker,
        };
        let out = c_pearl_reward(sol(&[1.0, 1.0]), &mut a, &inner, &ccfg, 64).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.feasible);

        let bad = Solution::with_cv(vec![], vec![9.0, 9.0], vec![0.5, 0.2], 0.29);
        let out = c_pearl_reward(bad.clone(), &mut a, &inner, &ccfg, 64).unwrap();
        assert!((out.reward + 64.29).abs() < 1e-12);
        assert_eq!(a.len(), 1);

        ccfg.mode = ConstraintMode::Rank2;
        assert!(c_pearl_reward(bad.clone(), &mut a, &inner, &ccfg, 64).is_err());
        let mut a = ParetoArchive::new(64, Relation::Constrained).unwrap();
        c_pearl_reward(sol(&[0.0, 0.0]), &mut a, &inner, &ccfg, 64).unwrap();
        let out = c_pearl_reward(bad, &mut a, &inner, &ccfg, 64).unwrap();
        assert_eq!(out.reward, -64.0);
    }

    #[test]
    fn engine_applies_limits() {
        let mut ccfg = ConstraintConfig::new(ConstraintMode::DistanceCl);
        ccfg.limits = Some(vec![1200.0]);
        ccfg.bonus = Some(10.0);
        let mut e = RewardEngine::new(
            RewardVariant::NonDominated(RankerKind::Crowding),
            Some(ccfg),
            16,
            2,
        )
        .unwrap();
        let s = e.make_solution(vec![], &[1.0, 1.0], &[1320.0]).unwrap();
        assert!((s.cv - 0.01).abs() < 1e-15);
        assert!((s.g[0] - 120.0).abs() < 1e-12);
        let out = e.reward(s).unwrap();
        assert!((out.reward + 10.01).abs() < 1e-12);
        let s = e.make_solution(vec![], &[1.0, 1.0], &[1000.0]).unwrap();
        assert!(s.is_feasible());
        assert_eq!(e.reward(s).unwrap().reward, 0.0);
    }

    #[test]
    fn engine_rejects_bad_configs() {
        let rank2 = ConstraintConfig::new(ConstraintMode::Rank2);
        assert!(RewardEngine::new(
            RewardVariant::Envelope(UniformityConfig::default()),
            Some(rank2),
            8,
            2
        )
        .is_err());
        assert!(RewardEngine::new(RewardVariant::Epsilon { nu: 0.0 }, None, 8, 2).is_err());
        assert!(RewardEngine::new(RewardVariant::NonDominated(RankerKind::Crowding), None, 0, 2).is_err());
        let mut c = ConstraintConfig::new(ConstraintMode::DistanceCl);
        c.weights = vec![1.0, -1.0];
        assert!(RewardEngine::new(RewardVariant::Epsilon { nu: 0.05 }, Some(c), 8, 2).is_err());
    }

    #[test]
    fn envelope_engine_keeps_unbounded_front() {
        let mut e = RewardEngine::new(
            RewardVariant::Envelope(UniformityConfig {
                kind: UniformityKind::Cosine,
                lambda: 0.0,
                normalized_obj: false,
            }),
            None,
            2,
            2,
        )
        .unwrap();
        e.set_rays(vec![vec![0.5, 0.5]]);
        for i in 0..10 {
            let t = i as f64 / 9.0;
            let s = e.make_solution(vec![], &[t, 1.0 - t], &[]).unwrap();
            let out = e.reward(s).unwrap();
            assert!((out.reward + 0.5).abs() < 1e-12);
        }
        assert_eq!(e.archive().len(), 10);
    }
}
