//! Front quality indicators, all in minimization sense.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::density::lex_cmp;
use crate::error::{Error, Result};
use crate::problems::non_dominated_subset;

/// Objective-vector equality tolerance for front membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub algorithm: String,
    pub problem: String,
    pub hv: f64,
    pub gd: f64,
    pub igd: f64,
    pub eps: f64,
    pub i_c: usize,
    pub c_metric: f64,
}

fn check_dims(points: &[Vec<f64>], dim: usize) -> Result<()> {
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::usage(format!(
            "point has {} objectives, expected {dim}",
            p.len()
        )));
    }
    Ok(())
}

/// Exact hypervolume dominated by `front` and bounded by `reference`.
///
/// Points that do not strictly dominate the reference point contribute nothing.
pub fn hypervolume(front: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let dim = reference.len();
    if !(2..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    check_dims(front, dim)?;
    let pts: Vec<&[f64]> = front
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a < r))
        .map(|p| p.as_slice())
        .collect();
    Ok(match dim {
        2 => hv2(pts, reference[0], reference[1]),
        _ => hv3(pts, reference),
    })
}

/// Sweep along the first objective keeping the running minimum of the second.
fn hv2(mut pts: Vec<&[f64]>, r0: f64, r1: f64) -> f64 {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut best = r1;
    for (i, p) in pts.iter().enumerate() {
        if p[1] < best {
            best = p[1];
        }
        let next = pts.get(i + 1).map_or(r0, |q| q[0]);
        area += (next - p[0]) * (r1 - best);
    }
    area
}

/// Slices along the third objective; each slab is a 2D problem.
fn hv3(mut pts: Vec<&[f64]>, r: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut vol = 0.0;
    for i in 0..pts.len() {
        let top = pts.get(i + 1).map_or(r[2], |q| q[2]);
        let depth = top - pts[i][2];
        if depth > 0.0 {
            vol += depth * hv2(pts[..=i].to_vec(), r[0], r[1]);
        }
    }
    vol
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_nearest(from: &[Vec<f64>], to: &[Vec<f64>]) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::usage("distance indicators need non-empty sets"));
    }
    let total: f64 = from
        .iter()
        .map(|a| to.iter().map(|z| euclid(a, z)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / from.len() as f64)
}

/// Mean distance from each front point to its nearest reference point.
pub fn gd(front: &[Vec<f64>], reference_front: &[Vec<f64>]) -> Result<f64> {
    mean_nearest(front, reference_front)
}

/// Mean distance from each reference point to its nearest front point.
pub fn igd(front: &[Vec<f64>], reference_front: &[Vec<f64>]) -> Result<f64> {
    mean_nearest(reference_front, front)
}

/// Smallest shift `e` such that every reference point is weakly dominated by
/// some front point moved by `-e`.
pub fn additive_epsilon(front: &[Vec<f64>], reference_front: &[Vec<f64>]) -> Result<f64> {
    if front.is_empty() || reference_front.is_empty() {
        return Err(Error::usage("epsilon indicator needs non-empty sets"));
    }
    Ok(reference_front
        .iter()
        .map(|z| {
            front
                .iter()
                .map(|a| {
                    a.iter()
                        .zip(z)
                        .map(|(ai, zi)| ai - zi)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= MEMBERSHIP_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cardinality {
    pub i_c: usize,
    pub c_metric: f64,
}

/// Contribution of each front to the non-dominated union of all of them.
///
/// `i_c` counts an algorithm's non-dominated points present in the combined
/// front; `c_metric` is that count over the size of its own non-dominated set.
pub fn cardinality_metrics(fronts: &[Vec<Vec<f64>>]) -> Result<Vec<Cardinality>> {
    if fronts.is_empty() {
        return Err(Error::usage("need at least one front"));
    }
    let union: Vec<Vec<f64>> = fronts.iter().flatten().cloned().collect();
    let combined = non_dominated_subset(union);
    Ok(fronts
        .iter()
        .map(|a| cardinality_against(a, &combined))
        .collect())
}

/// Cardinality of `front` against a fixed reference front.
pub fn cardinality_against(front: &[Vec<f64>], reference: &[Vec<f64>]) -> Cardinality {
    let own = non_dominated_subset(front.to_vec());
    let i_c = own
        .iter()
        .filter(|a| reference.iter().any(|z| same_point(a, z)))
        .count();
    let c_metric = if own.is_empty() {
        0.0
    } else {
        i_c as f64 / own.len() as f64
    };
    Cardinality { i_c, c_metric }
}

/// Objective weights of the entropy-weight method on a payoff matrix.
///
/// Columns are min-max scaled before forming proportions so that negative or
/// offset objectives behave; constant columns get entropy 1 and weight 0.
/// When every column is constant the weights fall back to uniform.
pub fn entropy_weights(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    let scaled = min_max_columns(rows);
    let mut div = vec![0.0; n];
    for j in 0..n {
        let col_sum: f64 = scaled.iter().map(|r| r[j]).sum();
        if col_sum <= 0.0 || m < 2 {
            continue;
        }
        let h: f64 = scaled
            .iter()
            .map(|r| r[j] / col_sum)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum();
        let e = -h / (m as f64).ln();
        div[j] = (1.0 - e).max(0.0);
    }
    let total: f64 = div.iter().sum();
    if total > 0.0 {
        div.iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn min_max_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.first().map_or(0, |r| r.len());
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for r in rows {
        for j in 0..n {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    rows.iter()
        .map(|r| {
            (0..n)
                .map(|j| {
                    let range = hi[j] - lo[j];
                    if range > 0.0 {
                        (r[j] - lo[j]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// The `k` distinct objective vectors with the lowest entropy-weighted score.
pub fn entropy_select(front: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for p in front {
        if !distinct.iter().any(|q| q == p) {
            distinct.push(p.clone());
        }
    }
    if k == 0 || k > distinct.len() {
        return Err(Error::usage(format!(
            "cannot select {k} of {} distinct solutions",
            distinct.len()
        )));
    }
    if let Some(p) = distinct.iter().find(|p| p.len() != distinct[0].len()) {
        return Err(Error::usage(format!("ragged payoff row {p:?}")));
    }
    let w = entropy_weights(&distinct);
    let scaled = min_max_columns(&distinct);
    let scores: Vec<f64> = scaled
        .iter()
        .map(|r| r.iter().zip(&w).map(|(v, wj)| v * wj).sum())
        .collect();
    let mut idx: Vec<usize> = (0..distinct.len()).collect();
    idx.sort_by(|&a, &b| match scores[a].total_cmp(&scores[b]) {
        Ordering::Equal => lex_cmp(&distinct[a], &distinct[b]),
        o => o,
    });
    Ok(idx.into_iter().take(k).map(|i| distinct[i].clone()).collect())
}
