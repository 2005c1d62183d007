//! Density ranking of a non-dominated set.
//!
//! Two estimators are provided: the crowding distance and association to
//! simplex reference directions (niching). Both produce a [`DensityRank`],
//! a best-first permutation of the input. Ties are always broken by
//! ascending lexicographic order of the objective vectors so that results
//! do not depend on input order.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Best-first ordering of a front plus the per-member score that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityRank {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Anything that can order a mutually non-dominated set, best first.
pub trait FrontRanker {
    fn rank(&self, front: &[&[f64]]) -> Result<DensityRank>;
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Crowding distance of every member of `front`; boundary points get infinity.
pub fn crowding_distances(front: &[&[f64]]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].len();
    let mut idx: Vec<usize> = (0..n).collect();
    for k in 0..m {
        idx.sort_by(|&a, &b| {
            front[a][k]
                .total_cmp(&front[b][k])
                .then_with(|| lex_cmp(front[a], front[b]))
        });
        let lo = front[idx[0]][k];
        let hi = front[idx[n - 1]][k];
        dist[idx[0]] = f64::INFINITY;
        dist[idx[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = idx[w];
            if dist[i].is_finite() {
                dist[i] += (front[idx[w + 1]][k] - front[idx[w - 1]][k]) / range;
            }
        }
    }
    dist
}

pub fn crowding_rank(front: &[&[f64]]) -> Result<DensityRank> {
    if front.is_empty() {
        return Err(Error::usage("cannot rank an empty front"));
    }
    let scores = crowding_distances(front);
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| lex_cmp(front[a], front[b]))
    });
    Ok(DensityRank { order, scores })
}

/// Lattice points `k/p` on the unit simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDirectionSet {
    pub directions: Vec<Vec<f64>>,
    pub divisions: usize,
}

impl ReferenceDirectionSet {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Das–Dennis systematic directions on the `n_obj`-simplex with `divisions` steps.
pub fn das_dennis(n_obj: usize, divisions: usize) -> Result<ReferenceDirectionSet> {
    if n_obj < 2 || divisions < 1 {
        return Err(Error::usage(format!(
            "das_dennis needs n_obj >= 2 and divisions >= 1, got ({n_obj}, {divisions})"
        )));
    }
    fn fill(left: usize, depth: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if depth == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / p as f64).collect());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            fill(left - k, depth - 1, p, cur, out);
            cur.pop();
        }
    }
    let mut directions = Vec::with_capacity(binomial(n_obj + divisions - 1, divisions));
    fill(divisions, n_obj, divisions, &mut Vec::new(), &mut directions);
    Ok(ReferenceDirectionSet {
        directions,
        divisions,
    })
}

/// Smallest division count giving at least `capacity` directions.
pub fn default_divisions(n_obj: usize, capacity: usize) -> usize {
    let mut p = 1;
    while binomial(n_obj + p - 1, p) < capacity {
        p += 1;
    }
    p
}

/// Perpendicular distance from `point` to the ray through `dir`.
pub(crate) fn perpendicular_distance(point: &[f64], dir: &[f64]) -> f64 {
    let dd: f64 = dir.iter().map(|d| d * d).sum();
    if dd == 0.0 {
        return point.iter().map(|p| p * p).sum::<f64>().sqrt();
    }
    let t = point.iter().zip(dir).map(|(p, d)| p * d).sum::<f64>() / dd;
    point
        .iter()
        .zip(dir)
        .map(|(p, d)| (p - t * d).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Associates each (already normalized, minimization-sense) point with its
/// closest direction. Returns `(direction index, distance)` per point.
pub(crate) fn associate(points: &[Vec<f64>], dirs: &ReferenceDirectionSet) -> Vec<(usize, f64)> {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, d) in dirs.directions.iter().enumerate() {
                let dist = perpendicular_distance(p, d);
                if dist < best.1 {
                    best = (j, dist);
                }
            }
            best
        })
        .collect()
}

/// Maps maximization-sense vectors to `[0, 1]` with the front's best value at 0.
/// A constant objective maps to 0.
pub(crate) fn normalize_to_unit(front: &[&[f64]]) -> Vec<Vec<f64>> {
    let m = front[0].len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for p in front {
        for k in 0..m {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    front
        .iter()
        .map(|p| {
            (0..m)
                .map(|k| {
                    let range = hi[k] - lo[k];
                    if range > 0.0 {
                        (hi[k] - p[k]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Niching rank: fewer neighbours sharing a reference direction is better.
///
/// `scores` holds the niche count of each member's direction.
pub fn niching_rank(front: &[&[f64]], dirs: &ReferenceDirectionSet) -> Result<DensityRank> {
    if front.is_empty() {
        return Err(Error::usage("cannot rank an empty front"));
    }
    if dirs.dim() != front[0].len() {
        return Err(Error::usage(format!(
            "reference directions have dimension {}, front has {}",
            dirs.dim(),
            front[0].len()
        )));
    }
    let normalized = normalize_to_unit(front);
    let assoc = associate(&normalized, dirs);
    let mut niche = vec![0usize; dirs.len()];
    for &(j, _) in &assoc {
        niche[j] += 1;
    }
    let scores: Vec<f64> = assoc.iter().map(|&(j, _)| niche[j] as f64).collect();
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then_with(|| assoc[a].1.total_cmp(&assoc[b].1))
            .then_with(|| lex_cmp(front[a], front[b]))
    });
    Ok(DensityRank { order, scores })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CrowdingRanker;

impl FrontRanker for CrowdingRanker {
    fn rank(&self, front: &[&[f64]]) -> Result<DensityRank> {
        crowding_rank(front)
    }
}

#[derive(Clone, Debug)]
pub struct NichingRanker {
    pub dirs: ReferenceDirectionSet,
}

impl NichingRanker {
    /// Directions sized so that every archive slot can own one.
    pub fn for_capacity(n_obj: usize, capacity: usize) -> Result<Self> {
        let dirs = das_dennis(n_obj, default_divisions(n_obj, capacity))?;
        Ok(NichingRanker { dirs })
    }
}

impl FrontRanker for NichingRanker {
    fn rank(&self, front: &[&[f64]]) -> Result<DensityRank> {
        niching_rank(front, &self.dirs)
    }
}
