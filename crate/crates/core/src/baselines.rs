//! NSGA-II and NSGA-III generational loops with (mu, lambda) evolution
//! strategy variation.
//!
//! Each generation draws `lambda_` offspring from the `mu` best members:
//! with probability `cxpb` a blend crossover of two parents, with
//! probability `mutpb` a Gaussian mutation of one parent, otherwise a clone.
//! Survivors are picked from parents and offspring together by
//! non-dominated sorting, with crowding distance (NSGA-II) or reference
//! direction niching (NSGA-III) splitting the last admitted front.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::density::{
    associate, crowding_rank, das_dennis, default_divisions, lex_cmp, ReferenceDirectionSet,
};
use crate::error::{Error, Result};
use crate::pareto::{non_dominated_sort, ParetoArchive, Relation, Solution};
use crate::problems::Environment;
use crate::trainer::LogRow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub lambda_: usize,
    pub mu: usize,
    pub mutpb: f64,
    pub cxpb: f64,
    pub pop_size: usize,
    pub budget: usize,
    pub seed: u64,
    /// Per-gene mutation probability; `1 / n_x` when absent.
    pub indpb: Option<f64>,
    pub blend_alpha: f64,
    /// Mutation standard deviation as a fraction of each variable's range.
    pub sigma: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            lambda_: 32,
            mu: 32,
            mutpb: 0.3,
            cxpb: 0.65,
            pop_size: 32,
            budget: 10_000,
            seed: 0,
            indpb: None,
            blend_alpha: 0.5,
            sigma: 0.1,
        }
    }
}

impl GaConfig {
    /// Settings used for the unconstrained benchmarks: `mu = lambda_ = 32`.
    pub fn unconstrained_preset() -> Self {
        GaConfig::default()
    }

    /// Settings used for the constrained benchmarks: `mu = 2`.
    pub fn constrained_preset() -> Self {
        GaConfig {
            mu: 2,
            ..GaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, p) in [("mutpb", self.mutpb), ("cxpb", self.cxpb)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        if self.mutpb + self.cxpb > 1.0 + 1e-12 {
            return Err(Error::config("cxpb", "cxpb + mutpb must not exceed 1"));
        }
        if self.mu == 0 || self.mu > self.lambda_ {
            return Err(Error::config("mu", "need 1 <= mu <= lambda_"));
        }
        if self.mu > self.pop_size {
            return Err(Error::config("mu", "mu cannot exceed the population size"));
        }
        if self.pop_size == 0 || self.budget < self.pop_size {
            return Err(Error::config(
                "budget",
                "budget must cover at least the initial population",
            ));
        }
        if let Some(p) = self.indpb {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("indpb", "must lie in [0, 1]"));
            }
        }
        if !(self.sigma >= 0.0) || !(self.blend_alpha >= 0.0) {
            return Err(Error::config("sigma", "sigma and blend_alpha must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    /// Members in survival order, best first.
    pub members: Vec<Solution>,
    pub generation: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NsgaKind {
    Nsga2,
    Nsga3 { constrained: bool },
}

/// Evaluates decision vectors and keeps the run log.
pub struct Evaluator<'a> {
    env: &'a dyn Environment,
    pub log: Vec<LogRow>,
}

impl<'a> Evaluator<'a> {
    pub fn new(env: &'a dyn Environment) -> Self {
        Evaluator {
            env,
            log: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.log.len()
    }

    pub fn evaluate(&mut self, x: Vec<f64>) -> Result<Solution> {
        let e = self.env.evaluate(&x)?;
        let s = Solution::from_minimization(x, &e.f, e.g);
        self.log.push(LogRow {
            step: self.log.len() as u64,
            worker: 0,
            x: s.x.clone(),
            f: e.f,
            g: s.g.clone(),
            cv: s.cv,
            reward: f64::NAN,
            failed: false,
        });
        Ok(s)
    }
}

fn blend<R: Rng + ?Sized>(a: &[f64], b: &[f64], alpha: f64, rng: &mut R) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x1, &x2)| {
            let gamma = (1.0 + 2.0 * alpha) * rng.random::<f64>() - alpha;
            (1.0 - gamma) * x1 + gamma * x2
        })
        .collect()
}

fn mutate<R: Rng + ?Sized>(
    x: &mut [f64],
    env: &dyn Environment,
    indpb: f64,
    sigma: f64,
    rng: &mut R,
) {
    for (i, v) in x.iter_mut().enumerate() {
        if rng.random::<f64>() < indpb {
            let width = env.upper()[i] - env.lower()[i];
            if let Ok(n) = Normal::new(0.0, sigma * width) {
                *v += n.sample(rng);
            }
        }
    }
}

fn clamp_to_box(x: &mut [f64], env: &dyn Environment) {
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(env.lower()[i], env.upper()[i]);
    }
}

/// `lambda_` offspring decision vectors from the first `mu` members.
pub fn make_offspring<R: Rng + ?Sized>(
    parents: &[Solution],
    cfg: &GaConfig,
    env: &dyn Environment,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let pool = &parents[..cfg.mu.min(parents.len())];
    let indpb = cfg.indpb.unwrap_or(1.0 / env.n_x() as f64);
    (0..cfg.lambda_)
        .map(|_| {
            let op: f64 = rng.random();
            let mut child = if op < cfg.cxpb {
                let a = pool.choose(rng).expect("non-empty pool");
                let b = pool.choose(rng).expect("non-empty pool");
                blend(&a.x, &b.x, cfg.blend_alpha, rng)
            } else if op < cfg.cxpb + cfg.mutpb {
                let mut x = pool.choose(rng).expect("non-empty pool").x.clone();
                mutate(&mut x, env, indpb, cfg.sigma, rng);
                x
            } else {
                pool.choose(rng).expect("non-empty pool").x.clone()
            };
            clamp_to_box(&mut child, env);
            child
        })
        .collect()
}

/// Fronts of `pool` admitted whole, plus the last front that must be split.
fn split_fronts(pool: &[Solution], n: usize, relation: Relation) -> Result<(Vec<usize>, Vec<usize>)> {
    let fronts = non_dominated_sort(pool, relation)?;
    let mut admitted = Vec::with_capacity(n);
    for front in fronts {
        if admitted.len() + front.len() <= n {
            admitted.extend(front);
            if admitted.len() == n {
                return Ok((admitted, Vec::new()));
            }
        } else {
            return Ok((admitted, front));
        }
    }
    Ok((admitted, Vec::new()))
}

/// NSGA-II survival: whole fronts, then the most crowding-isolated members of the last one.
pub fn crowding_survival(pool: &[Solution], n: usize, relation: Relation) -> Result<Vec<usize>> {
    let (mut chosen, last) = split_fronts(pool, n, relation)?;
    if !last.is_empty() {
        let objs: Vec<&[f64]> = last.iter().map(|&i| pool[i].obj.as_slice()).collect();
        let rank = crowding_rank(&objs)?;
        chosen.extend(rank.order.iter().take(n - chosen.len()).map(|&k| last[k]));
    }
    Ok(chosen)
}

/// Scales minimization-sense points by the ideal of `all` and the nadir of `first_front`.
fn normalize_min(points: &[Vec<f64>], all: &[Vec<f64>], first_front: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = points.first().map_or(0, |p| p.len());
    let ideal: Vec<f64> = (0..m)
        .map(|k| all.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let nadir: Vec<f64> = (0..m)
        .map(|k| first_front.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    points
        .iter()
        .map(|p| {
            (0..m)
                .map(|k| {
                    let range = nadir[k] - ideal[k];
                    let range = if range > 1e-12 { range } else { 1.0 };
                    (p[k] - ideal[k]) / range
                })
                .collect()
        })
        .collect()
}

/// Picks `k` members of `last` by niche count, given the members already chosen.
///
/// Points are normalized minimization-sense vectors. The least crowded
/// direction is served first (ties at random); an empty niche takes its
/// closest candidate, a populated one a random candidate.
pub fn niche_select<R: Rng + ?Sized>(
    chosen: &[Vec<f64>],
    last: &[Vec<f64>],
    k: usize,
    dirs: &ReferenceDirectionSet,
    rng: &mut R,
) -> Vec<usize> {
    let mut count = vec![0usize; dirs.len()];
    for (j, _) in associate(chosen, dirs) {
        count[j] += 1;
    }
    let assoc = associate(last, dirs);
    let mut taken = vec![false; last.len()];
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k.min(last.len()) {
        let mut open: Vec<usize> = (0..dirs.len())
            .filter(|&j| (0..last.len()).any(|i| !taken[i] && assoc[i].0 == j))
            .collect();
        let min = open.iter().map(|&j| count[j]).min().expect("candidates remain");
        open.retain(|&j| count[j] == min);
        let j = *open.choose(rng).expect("non-empty");
        let cands: Vec<usize> = (0..last.len())
            .filter(|&i| !taken[i] && assoc[i].0 == j)
            .collect();
        let i = if count[j] == 0 {
            *cands
                .iter()
                .min_by(|&&a, &&b| {
                    assoc[a]
                        .1
                        .total_cmp(&assoc[b].1)
                        .then_with(|| lex_cmp(&last[a], &last[b]))
                })
                .expect("non-empty")
        } else {
            *cands.choose(rng).expect("non-empty")
        };
        taken[i] = true;
        count[j] += 1;
        picked.push(i);
    }
    picked
}

/// NSGA-III survival: whole fronts, then niche-count selection from the last one.
pub fn niching_survival<R: Rng + ?Sized>(
    pool: &[Solution],
    n: usize,
    relation: Relation,
    dirs: &ReferenceDirectionSet,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let (mut chosen, last) = split_fronts(pool, n, relation)?;
    if last.is_empty() {
        return Ok(chosen);
    }
    let fronts = non_dominated_sort(pool, relation)?;
    let f_min = |i: &usize| pool[*i].minimization_objectives();
    let first: Vec<Vec<f64>> = fronts[0].iter().map(f_min).collect();
    let considered: Vec<Vec<f64>> = chosen.iter().chain(&last).map(f_min).collect();
    let chosen_n = normalize_min(&chosen.iter().map(f_min).collect::<Vec<_>>(), &considered, &first);
    let last_n = normalize_min(&last.iter().map(f_min).collect::<Vec<_>>(), &considered, &first);
    let picks = niche_select(&chosen_n, &last_n, n - chosen.len(), dirs, rng);
    chosen.extend(picks.into_iter().map(|i| last[i]));
    Ok(chosen)
}

fn step<R: Rng + ?Sized>(
    pop: Population,
    cfg: &GaConfig,
    eval: &mut Evaluator<'_>,
    rng: &mut R,
    survive: &mut dyn FnMut(&[Solution], &mut R) -> Result<Vec<usize>>,
) -> Result<(Population, Vec<Solution>)> {
    let offspring_x = make_offspring(&pop.members, cfg, eval.env, rng);
    let offspring = offspring_x
        .into_iter()
        .map(|x| eval.evaluate(x))
        .collect::<Result<Vec<_>>>()?;
    let mut pool = pop.members;
    pool.extend(offspring.iter().cloned());
    let keep = survive(&pool, rng)?;
    let members = keep.into_iter().map(|i| pool[i].clone()).collect();
    Ok((
        Population {
            members,
            generation: pop.generation + 1,
        },
        offspring,
    ))
}

pub fn nsga2_step<R: Rng + ?Sized>(
    pop: Population,
    cfg: &GaConfig,
    eval: &mut Evaluator<'_>,
    rng: &mut R,
) -> Result<(Population, Vec<Solution>)> {
    let n = cfg.pop_size;
    step(pop, cfg, eval, rng, &mut |pool, _| {
        crowding_survival(pool, n, Relation::Plain)
    })
}

pub fn nsga3_step<R: Rng + ?Sized>(
    pop: Population,
    cfg: &GaConfig,
    eval: &mut Evaluator<'_>,
    dirs: &ReferenceDirectionSet,
    constrained: bool,
    rng: &mut R,
) -> Result<(Population, Vec<Solution>)> {
    let n = cfg.pop_size;
    let relation = if constrained {
        Relation::Constrained
    } else {
        Relation::Plain
    };
    step(pop, cfg, eval, rng, &mut |pool, rng| {
        niching_survival(pool, n, relation, dirs, rng)
    })
}

#[derive(Clone, Debug)]
pub struct GaResult {
    /// Non-dominated set of every evaluation made.
    pub front: Vec<Solution>,
    pub log: Vec<LogRow>,
    pub generations: usize,
    pub final_population: Population,
}

pub fn run_nsga(env: &dyn Environment, kind: NsgaKind, cfg: &GaConfig) -> Result<GaResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval = Evaluator::new(env);
    let relation = match kind {
        NsgaKind::Nsga3 { constrained: true } => Relation::Constrained,
        _ => Relation::Plain,
    };
    let mut all = ParetoArchive::unbounded(relation);
    let mut members = Vec::with_capacity(cfg.pop_size);
    for _ in 0..cfg.pop_size {
        let x: Vec<f64> = (0..env.n_x())
            .map(|i| rng.random_range(env.lower()[i]..=env.upper()[i]))
            .collect();
        let s = eval.evaluate(x)?;
        all.insert_unranked(s.clone());
        members.push(s);
    }
    let dirs = das_dennis(env.n_obj(), default_divisions(env.n_obj(), cfg.pop_size))?;
    // Initial ordering so that the first `mu` parents are meaningful.
    let order = match kind {
        NsgaKind::Nsga2 => crowding_survival(&members, cfg.pop_size, relation)?,
        NsgaKind::Nsga3 { .. } => niching_survival(&members, cfg.pop_size, relation, &dirs, &mut rng)?,
    };
    let mut pop = Population {
        members: order.into_iter().map(|i| members[i].clone()).collect(),
        generation: 0,
    };
    while eval.count() + cfg.lambda_ <= cfg.budget {
        let (next, offspring) = match kind {
            NsgaKind::Nsga2 => nsga2_step(pop, cfg, &mut eval, &mut rng)?,
            NsgaKind::Nsga3 { constrained } => {
                nsga3_step(pop, cfg, &mut eval, &dirs, constrained, &mut rng)?
            }
        };
        for s in offspring {
            all.insert_unranked(s);
        }
        pop = next;
    }
    Ok(GaResult {
        front: all.into_members(),
        log: eval.log,
        generations: pop.generation,
        final_population: pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Problem, ProblemKind};

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        assert!(GaConfig::constrained_preset().validate().is_ok());
        let bad = GaConfig {
            mutpb: 0.5,
            cxpb: 0.65,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GaConfig {
            mu: 40,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn one_generation_keeps_size() {
        let p = Problem::new(ProblemKind::Dtlz2);
        let cfg = GaConfig {
            budget: 64,
            ..GaConfig::default()
        };
        let r = run_nsga(&p, NsgaKind::Nsga2, &cfg).unwrap();
        assert_eq!(r.generations, 1);
        assert_eq!(r.final_population.members.len(), 32);
        assert_eq!(r.log.len(), 64);
    }

    #[test]
    fn no_variation_clones_parents() {
        let p = Problem::new(ProblemKind::Dtlz2);
        let cfg = GaConfig {
            mutpb: 0.0,
            cxpb: 0.0,
            ..GaConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut eval = Evaluator::new(&p);
        let parents: Vec<Solution> = (0..32)
            .map(|_| eval.evaluate((0..12).map(|_| rng.random()).collect()).unwrap())
            .collect();
        let kids = make_offspring(&parents, &cfg, &p, &mut rng);
        assert!(kids.iter().all(|k| parents.iter().any(|s| &s.x == k)));
    }

    #[test]
    fn niche_select_hand_case() {
        // Directions (1,0), (0.5,0.5), (0,1). One chosen member on (1,0).
        // Last front: a on (0,1) [d=0.1], b on (0.5,0.5), c on (0,1) [d=0.05].
        let dirs = das_dennis(2, 2).unwrap();
        let chosen = vec![vec![1.0, 0.0]];
        let last = vec![vec![0.1, 1.0], vec![0.5, 0.5], vec![0.05, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picks = niche_select(&chosen, &last, 2, &dirs, &mut rng);
        // Both empty niches are served before anyone shares; in the (0,1)
        // niche the closer point c wins.
        let mut sorted = picks.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 2]);
    }

    #[test]
    fn feasible_individual_survives() {
        let mk = |obj: f64, cv: f64| Solution::with_cv(vec![], vec![obj, obj], vec![cv], cv);
        let mut pool: Vec<Solution> = (0..6).map(|i| mk(10.0 + i as f64, 1.0 + i as f64)).collect();
        pool.push(mk(-100.0, 0.0));
        let dirs = das_dennis(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let keep = niching_survival(&pool, 3, Relation::Constrained, &dirs, &mut rng).unwrap();
        assert!(keep.contains(&6));
    }
}
