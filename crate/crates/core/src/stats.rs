//! Friedman omnibus test and Nemenyi post-hoc comparisons over per-seed metric tables.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// `n` blocks (seeds) by `k` treatments (algorithms) with per-block ranks.
///
/// Rank 1 is the best treatment in a block; ties get the average of the
/// ranks they span.
#[derive(Clone, Debug, PartialEq)]
pub struct RankMatrix {
    values: Vec<Vec<f64>>,
    ranks: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn new(values: Vec<Vec<f64>>, higher_is_better: bool) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::usage(format!("need at least 2 blocks, got {n}")));
        }
        let k = values[0].len();
        if k < 2 {
            return Err(Error::usage(format!("need at least 2 treatments, got {k}")));
        }
        if values.iter().any(|row| row.len() != k) {
            return Err(Error::usage("blocks have different treatment counts"));
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::usage("metric table contains NaN"));
        }
        let ranks = values
            .iter()
            .map(|row| {
                let keyed: Vec<f64> = if higher_is_better {
                    row.iter().map(|v| -v).collect()
                } else {
                    row.clone()
                };
                average_ranks(&keyed)
            })
            .collect();
        Ok(RankMatrix { values, ranks })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.values[0].len()
    }

    pub fn ranks(&self) -> &[Vec<f64>] {
        &self.ranks
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.k())
            .map(|j| self.ranks.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

/// Ranks ascending from 1 with ties averaged.
pub fn average_ranks(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

/// `chi2 = 12n / (k(k+1)) * sum_j (R_j - (k+1)/2)^2` on mean ranks, no tie correction.
pub fn friedman(m: &RankMatrix) -> Result<FriedmanResult> {
    let n = m.n() as f64;
    let k = m.k() as f64;
    let center = (k + 1.0) / 2.0;
    let ss: f64 = m.mean_ranks().iter().map(|r| (r - center).powi(2)).sum();
    let statistic = 12.0 * n / (k * (k + 1.0)) * ss;
    let df = m.k() - 1;
    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        let chi = ChiSquared::new(df as f64).map_err(|e| Error::usage(e.to_string()))?;
        chi.sf(statistic)
    };
    Ok(FriedmanResult {
        statistic,
        p_value,
        df,
    })
}

/// Critical values `q_alpha` of the Nemenyi test (studentized range over `sqrt 2`),
/// infinite degrees of freedom, for k = 2..=10.
const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(Q <= w)` for the range of `k` standard normals,
/// `k * integral phi(z) (Phi(z) - Phi(z - w))^(k-1) dz`, by composite Simpson.
pub fn studentized_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    const STEPS: usize = 2000;
    let (a, b) = (-8.0, 8.0 + w);
    let h = (b - a) / STEPS as f64;
    let f = |z: f64| std_normal_pdf(z) * (std_normal_cdf(z) - std_normal_cdf(z - w)).powi(k as i32 - 1);
    let mut s = f(a) + f(b);
    for i in 1..STEPS {
        let z = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
    }
    (k as f64 * s * h / 3.0).clamp(0.0, 1.0)
}

fn numeric_q(alpha: f64, k: usize) -> f64 {
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / std::f64::consts::SQRT_2
}

/// Nemenyi critical value: tabulated for `alpha` in `[0.05, 0.10]` and
/// `k <= 10` (interpolated linearly in `alpha`), computed numerically otherwise.
pub fn nemenyi_q(alpha: f64, k: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if k < 2 {
        return Err(Error::usage("need at least 2 treatments"));
    }
    if k <= 10 && (0.05..=0.10).contains(&alpha) {
        let t = (alpha - 0.05) / 0.05;
        return Ok(Q_05[k - 2] + t * (Q_10[k - 2] - Q_05[k - 2]));
    }
    Ok(numeric_q(alpha, k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub alpha: f64,
    pub critical_difference: f64,
    pub mean_ranks: Vec<f64>,
    /// Pairwise p-values; symmetric with a unit diagonal.
    pub p_values: Vec<Vec<f64>>,
    /// Whether the mean-rank difference exceeds the critical difference.
    pub significant: Vec<Vec<bool>>,
}

pub fn nemenyi(m: &RankMatrix, alpha: f64) -> Result<NemenyiResult> {
    let k = m.k();
    let n = m.n() as f64;
    let se = (k as f64 * (k as f64 + 1.0) / (6.0 * n)).sqrt();
    let cd = nemenyi_q(alpha, k)? * se;
    let mean_ranks = m.mean_ranks();
    let mut p_values = vec![vec![1.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let diff = (mean_ranks[i] - mean_ranks[j]).abs();
            let q = diff / se;
            let p = 1.0 - studentized_range_cdf(q * std::f64::consts::SQRT_2, k);
            p_values[i][j] = p;
            p_values[j][i] = p;
            let sig = diff > cd;
            significant[i][j] = sig;
            significant[j][i] = sig;
        }
    }
    Ok(NemenyiResult {
        alpha,
        critical_difference: cd,
        mean_ranks,
        p_values,
        significant,
    })
}
