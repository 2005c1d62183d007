//! Benchmark problems: DTLZ (2, 4, 5, 6, 7), constrained DTLZ (C2-DTLZ2,
//! C3-DTLZ4) and CTP (1–4).
//!
//! Objectives and constraints are returned in minimization sense with
//! constraints written as `g(x) <= 0`. Formulas follow the pymoo
//! implementations, which in turn follow Deb et al. (DTLZ), Jain & Deb
//! (C-DTLZ) and Deb, Pratap & Meyarivan (CTP).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::das_dennis;
use crate::error::{Error, Result};
use crate::pareto::{non_dominated_indices, Relation, Solution};

/// Environment variable overriding the directory holding reference-front files.
pub const FRONT_DIR_ENV: &str = "MOORL_FRONT_DIR";

/// Anything a trainer or baseline can optimize: a box-bounded vector input
/// mapped to minimization objectives and `g <= 0` constraints.
pub trait Environment: Sync {
    fn name(&self) -> &str;
    fn n_x(&self) -> usize;
    fn n_obj(&self) -> usize;
    fn n_constraints(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRecord {
    pub index: u64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Dtlz2,
    Dtlz4,
    Dtlz5,
    Dtlz6,
    Dtlz7,
    C2Dtlz2,
    C3Dtlz4,
    Ctp1,
    Ctp2,
    Ctp3,
    Ctp4,
}

pub const ALL_PROBLEMS: [ProblemKind; 11] = [
    ProblemKind::Dtlz2,
    ProblemKind::Dtlz4,
    ProblemKind::Dtlz5,
    ProblemKind::Dtlz6,
    ProblemKind::Dtlz7,
    ProblemKind::C2Dtlz2,
    ProblemKind::C3Dtlz4,
    ProblemKind::Ctp1,
    ProblemKind::Ctp2,
    ProblemKind::Ctp3,
    ProblemKind::Ctp4,
];

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Dtlz2 => "dtlz2",
            ProblemKind::Dtlz4 => "dtlz4",
            ProblemKind::Dtlz5 => "dtlz5",
            ProblemKind::Dtlz6 => "dtlz6",
            ProblemKind::Dtlz7 => "dtlz7",
            ProblemKind::C2Dtlz2 => "c2-dtlz2",
            ProblemKind::C3Dtlz4 => "c3-dtlz4",
            ProblemKind::Ctp1 => "ctp1",
            ProblemKind::Ctp2 => "ctp2",
            ProblemKind::Ctp3 => "ctp3",
            ProblemKind::Ctp4 => "ctp4",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase().replace('_', "-");
        ALL_PROBLEMS
            .into_iter()
            .find(|k| k.name() == key || k.name().replace('-', "") == key)
            .ok_or_else(|| Error::config("problem", format!("unknown problem `{name}`")))
    }

    fn is_ctp(self) -> bool {
        matches!(
            self,
            ProblemKind::Ctp1 | ProblemKind::Ctp2 | ProblemKind::Ctp3 | ProblemKind::Ctp4
        )
    }

    pub fn default_n_x(self) -> usize {
        match self {
            ProblemKind::C2Dtlz2 | ProblemKind::C3Dtlz4 => 7,
            k if k.is_ctp() => 2,
            _ => 12,
        }
    }

    pub fn default_n_obj(self) -> usize {
        if self.is_ctp() {
            2
        } else {
            3
        }
    }

    fn front_file(self) -> Option<&'static str> {
        match self {
            ProblemKind::Dtlz7 => Some("dtlz7.csv"),
            ProblemKind::Ctp1 => Some("ctp1.csv"),
            ProblemKind::Ctp2 => Some("ctp2.csv"),
            ProblemKind::Ctp3 => Some("ctp3.csv"),
            ProblemKind::Ctp4 => Some("ctp4.csv"),
            _ => None,
        }
    }
}

/// DTLZ4 bias exponent.
const DTLZ4_ALPHA: f64 = 100.0;

/// CTP2–4 constraint shape `(theta, a, b, c, d, e)`, from the CTP definitions.
struct CtpShape {
    theta: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
}

const CTP2: CtpShape = CtpShape {
    theta: -0.2 * PI,
    a: 0.2,
    b: 10.0,
    c: 1.0,
    d: 6.0,
    e: 1.0,
};
const CTP3: CtpShape = CtpShape {
    theta: -0.2 * PI,
    a: 0.1,
    b: 10.0,
    c: 1.0,
    d: 0.5,
    e: 1.0,
};
const CTP4: CtpShape = CtpShape {
    theta: -0.2 * PI,
    a: 0.75,
    b: 10.0,
    c: 1.0,
    d: 0.5,
    e: 1.0,
};

/// CTP1 boundary coefficients `(a_j, b_j)` for `n` constraints.
///
/// Each boundary `a_j exp(-b_j f1)` passes through the unconstrained front at
/// evenly spaced `f1`, halving the gap to the previous boundary.
pub fn ctp1_coefficients(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![1.0; n + 1];
    let mut b = vec![1.0; n + 1];
    let delta = 1.0 / (n as f64 + 1.0);
    let mut alpha = delta;
    for j in 0..n {
        let beta = a[j] * (-b[j] * alpha).exp();
        a[j + 1] = (a[j] + beta) / 2.0;
        b[j + 1] = -(beta / a[j + 1]).ln() / alpha;
        alpha += delta;
    }
    (a[1..].to_vec(), b[1..].to_vec())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    n_x: usize,
    n_obj: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    nadir: Vec<f64>,
    ctp1: Option<(Vec<f64>, Vec<f64>)>,
}

impl Problem {
    /// A problem with its registered defaults.
    pub fn new(kind: ProblemKind) -> Self {
        Self::with_dims(kind, kind.default_n_x(), kind.default_n_obj())
            .expect("registered defaults are valid")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(ProblemKind::from_name(name)?))
    }

    pub fn with_dims(kind: ProblemKind, n_x: usize, n_obj: usize) -> Result<Self> {
        if kind.is_ctp() {
            if n_obj != 2 {
                return Err(Error::config("n_obj", "ctp problems have two objectives"));
            }
            if n_x < 2 {
                return Err(Error::config("n_x", "ctp problems need at least 2 variables"));
            }
        } else {
            if n_obj < 2 {
                return Err(Error::config("n_obj", "need at least two objectives"));
            }
            if n_x < n_obj {
                return Err(Error::config(
                    "n_x",
                    format!("{} needs at least {n_obj} variables", kind.name()),
                ));
            }
        }
        let nadir = match kind {
            ProblemKind::Dtlz7 => {
                let mut v = vec![3.0; n_obj];
                v[n_obj - 1] = 7.0;
                v
            }
            _ => vec![3.0; n_obj],
        };
        Ok(Problem {
            kind,
            n_x,
            n_obj,
            lower: vec![0.0; n_x],
            upper: vec![1.0; n_x],
            nadir,
            ctp1: (kind == ProblemKind::Ctp1).then(|| ctp1_coefficients(2)),
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    /// Hypervolume reference point in minimization sense.
    pub fn nadir(&self) -> &[f64] {
        &self.nadir
    }

    fn check_box(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_x {
            return Err(Error::usage(format!(
                "{} expects {} variables, got {}",
                self.kind.name(),
                self.n_x,
                x.len()
            )));
        }
        for (i, &v) in x.iter().enumerate() {
            if !(v >= self.lower[i] && v <= self.upper[i]) {
                return Err(Error::usage(format!(
                    "x[{i}] = {v} outside [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    /// Evaluates and also folds the result into an archive-ready solution.
    pub fn solution(&self, x: Vec<f64>) -> Result<Solution> {
        let e = self.evaluate(&x)?;
        Ok(Solution::from_minimization(x, &e.f, e.g))
    }

    /// `n_points` points of the true Pareto front, minimization sense.
    ///
    /// Sphere and curve fronts are generated analytically; disconnected ones
    /// are read from the bundled CSV files (directory overridable through
    /// [`FRONT_DIR_ENV`]).
    pub fn reference_front(&self, n_points: usize) -> Result<Vec<Vec<f64>>> {
        self.reference_front_in(&default_front_dir(), n_points)
    }

    pub fn reference_front_in(&self, dir: &Path, n_points: usize) -> Result<Vec<Vec<f64>>> {
        if n_points == 0 {
            return Err(Error::usage("n_points must be positive"));
        }
        let points = match self.kind {
            ProblemKind::Dtlz2 | ProblemKind::Dtlz4 => sphere_front(self.n_obj, n_points)?,
            ProblemKind::Dtlz5 | ProblemKind::Dtlz6 => self.curve_front(n_points)?,
            ProblemKind::C2Dtlz2 => self.c2_front(n_points)?,
            ProblemKind::C3Dtlz4 => self.c3_front(n_points)?,
            kind => {
                let file = kind.front_file().expect("file-backed problem");
                load_front(&dir.join(file), self.n_obj)?
            }
        };
        Ok(stride_subsample(points, n_points))
    }

    fn curve_front(&self, n_points: usize) -> Result<Vec<Vec<f64>>> {
        let n = n_points.max(2);
        let mut x = vec![0.5; self.n_x];
        if self.kind == ProblemKind::Dtlz6 {
            x[self.n_obj - 1..].iter_mut().for_each(|v| *v = 0.0);
        }
        (0..n)
            .map(|i| {
                x[0] = i as f64 / (n - 1) as f64;
                Ok(self.evaluate(&x)?.f)
            })
            .collect()
    }

    fn c2_front(&self, n_points: usize) -> Result<Vec<Vec<f64>>> {
        // The feasible part of the sphere is a small fraction of it, so
        // oversample before filtering.
        let mut divisions = 1;
        loop {
            let dirs = das_dennis(self.n_obj, divisions)?;
            let pts: Vec<Vec<f64>> = dirs
                .directions
                .iter()
                .map(|d| unit(d))
                .filter(|f| c2_constraint(f) <= 0.0)
                .collect();
            if pts.len() >= n_points || divisions >= 400 {
                return Ok(non_dominated_subset(pts));
            }
            divisions *= 2;
        }
    }

    fn c3_front(&self, n_points: usize) -> Result<Vec<Vec<f64>>> {
        let mut divisions = 1;
        loop {
            let dirs = das_dennis(self.n_obj, divisions)?;
            let pts: Vec<Vec<f64>> = dirs
                .directions
                .iter()
                .map(|d| {
                    // Scale the direction out until every quadratic constraint holds.
                    let sq: f64 = d.iter().map(|v| v * v).sum();
                    let t = d
                        .iter()
                        .map(|v| 1.0 / (sq - 0.75 * v * v).sqrt())
                        .fold(0.0, f64::max);
                    d.iter().map(|v| v * t).collect()
                })
                .collect();
            let nd = non_dominated_subset(pts);
            if nd.len() >= n_points || divisions >= 400 {
                return Ok(nd);
            }
            divisions *= 2;
        }
    }
}

impl Environment for Problem {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn n_x(&self) -> usize {
        self.n_x
    }

    fn n_obj(&self) -> usize {
        self.n_obj
    }

    fn n_constraints(&self) -> usize {
        match self.kind {
            ProblemKind::C2Dtlz2 => 1,
            ProblemKind::C3Dtlz4 => self.n_obj,
            ProblemKind::Ctp1 => 2,
            ProblemKind::Ctp2 | ProblemKind::Ctp3 | ProblemKind::Ctp4 => 1,
            _ => 0,
        }
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.check_box(x)?;
        let m = self.n_obj;
        let (head, tail) = x.split_at(m - 1);
        let e = match self.kind {
            ProblemKind::Dtlz2 => Evaluation {
                f: sphere(head, g_sphere(tail), 1.0),
                g: vec![],
            },
            ProblemKind::Dtlz4 => Evaluation {
                f: sphere(head, g_sphere(tail), DTLZ4_ALPHA),
                g: vec![],
            },
            ProblemKind::Dtlz5 => {
                let g = g_sphere(tail);
                Evaluation {
                    f: sphere(&degenerate_angles(head, g), g, 1.0),
                    g: vec![],
                }
            }
            ProblemKind::Dtlz6 => {
                let g: f64 = tail.iter().map(|v| v.powf(0.1)).sum();
                Evaluation {
                    f: sphere(&degenerate_angles(head, g), g, 1.0),
                    g: vec![],
                }
            }
            ProblemKind::Dtlz7 => {
                let g = 1.0 + 9.0 / tail.len() as f64 * tail.iter().sum::<f64>();
                let h = m as f64
                    - head
                        .iter()
                        .map(|&f| f / (1.0 + g) * (1.0 + (3.0 * PI * f).sin()))
                        .sum::<f64>();
                let mut f = head.to_vec();
                f.push((1.0 + g) * h);
                Evaluation { f, g: vec![] }
            }
            ProblemKind::C2Dtlz2 => {
                let f = sphere(head, g_sphere(tail), 1.0);
                let g = vec![c2_constraint(&f)];
                Evaluation { f, g }
            }
            ProblemKind::C3Dtlz4 => {
                let f = sphere(head, g_sphere(tail), DTLZ4_ALPHA);
                let g = c3_constraints(&f);
                Evaluation { f, g }
            }
            ProblemKind::Ctp1 => {
                let f1 = x[0];
                let gl = 1.0 + x[1..].iter().sum::<f64>();
                let f2 = gl * (-f1 / gl).exp();
                let (a, b) = self.ctp1.as_ref().expect("ctp1 coefficients");
                let g = a
                    .iter()
                    .zip(b)
                    .map(|(aj, bj)| -(f2 - aj * (-bj * f1).exp()))
                    .collect();
                Evaluation { f: vec![f1, f2], g }
            }
            ProblemKind::Ctp2 | ProblemKind::Ctp3 | ProblemKind::Ctp4 => {
                let shape = match self.kind {
                    ProblemKind::Ctp2 => &CTP2,
                    ProblemKind::Ctp3 => &CTP3,
                    _ => &CTP4,
                };
                let f1 = x[0];
                let gl = 1.0 + x[1..].iter().sum::<f64>();
                let f2 = gl * (1.0 - (f1 / gl).sqrt());
                Evaluation {
                    f: vec![f1, f2],
                    g: vec![ctp_constraint(shape, f1, f2)],
                }
            }
        };
        if e.f.iter().chain(&e.g).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "{} produced a non-finite value",
                self.kind.name()
            )));
        }
        Ok(e)
    }
}

fn g_sphere(tail: &[f64]) -> f64 {
    tail.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
}

/// `f_i = (1+g) prod_{j < M-1-i} cos(y_j pi/2) * sin(y_{M-1-i} pi/2)` with `y = x^alpha`.
fn sphere(head: &[f64], g: f64, alpha: f64) -> Vec<f64> {
    let m = head.len() + 1;
    let y: Vec<f64> = head.iter().map(|v| v.powf(alpha) * PI / 2.0).collect();
    (0..m)
        .map(|i| {
            let mut f = 1.0 + g;
            for yj in &y[..m - 1 - i] {
                f *= yj.cos();
            }
            if i > 0 {
                f *= y[m - 1 - i].sin();
            }
            f
        })
        .collect()
}

/// Angle map of DTLZ5/6: the first angle is free, the others collapse towards 1/2.
fn degenerate_angles(head: &[f64], g: f64) -> Vec<f64> {
    head.iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == 0 {
                v
            } else {
                (1.0 + 2.0 * g * v) / (2.0 * (1.0 + g))
            }
        })
        .collect()
}

fn c2_radius(m: usize) -> f64 {
    match m {
        2 => 0.2,
        3 => 0.4,
        _ => 0.5,
    }
}

/// Feasible inside `M` corner spheres and one central sphere of radius `r`.
fn c2_constraint(f: &[f64]) -> f64 {
    let m = f.len();
    let r2 = c2_radius(m).powi(2);
    let sq: f64 = f.iter().map(|v| v * v).sum();
    let corner = f
        .iter()
        .map(|&fi| (fi - 1.0).powi(2) + (sq - fi * fi) - r2)
        .fold(f64::INFINITY, f64::min);
    let a = 1.0 / (m as f64).sqrt();
    let center: f64 = f.iter().map(|v| (v - a).powi(2)).sum::<f64>() - r2;
    corner.min(center)
}

fn c3_constraints(f: &[f64]) -> Vec<f64> {
    let sq: f64 = f.iter().map(|v| v * v).sum();
    f.iter().map(|&fi| 1.0 - fi * fi / 4.0 - (sq - fi * fi)).collect()
}

fn ctp_constraint(s: &CtpShape, f1: f64, f2: f64) -> f64 {
    let (sin, cos) = s.theta.sin_cos();
    let exp1 = (f2 - s.e) * cos - f1 * sin;
    let exp2 = (f2 - s.e) * sin + f1 * cos;
    let wave = (s.b * PI * exp2.powf(s.c)).sin().abs().powf(s.d);
    -(exp1 - s.a * wave)
}

fn unit(d: &[f64]) -> Vec<f64> {
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    d.iter().map(|v| v / n).collect()
}

fn sphere_front(n_obj: usize, n_points: usize) -> Result<Vec<Vec<f64>>> {
    let mut divisions = 1;
    while crate::density::binomial(n_obj + divisions - 1, divisions) < n_points {
        divisions += 1;
    }
    Ok(das_dennis(n_obj, divisions)?
        .directions
        .iter()
        .map(|d| unit(d))
        .collect())
}

/// Keeps the mutually non-dominated points (minimization), in input order.
pub fn non_dominated_subset(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let sols: Vec<Solution> = points
        .iter()
        .map(|p| Solution::from_minimization(vec![], p, vec![]))
        .collect();
    let keep = non_dominated_indices(&sols, Relation::Plain);
    let mut mask = vec![false; points.len()];
    for i in keep {
        mask[i] = true;
    }
    points
        .into_iter()
        .zip(mask)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// `n` evenly strided points, or all of them when fewer are available.
pub fn stride_subsample(points: Vec<Vec<f64>>, n: usize) -> Vec<Vec<f64>> {
    let len = points.len();
    if n >= len {
        return points;
    }
    let mut out = Vec::with_capacity(n);
    let mut it = points.into_iter().enumerate();
    for i in 0..n {
        let target = i * len / n;
        for (j, p) in it.by_ref() {
            if j == target {
                out.push(p);
                break;
            }
        }
    }
    out
}

pub fn default_front_dir() -> PathBuf {
    std::env::var_os(FRONT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")))
}

/// Reads a front CSV with header `f1,...,fF`.
pub fn load_front(path: &Path, n_obj: usize) -> Result<Vec<Vec<f64>>> {
    if !path.is_file() {
        return Err(Error::config(
            "reference_front",
            format!("front file {} not found", path.display()),
        ));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let p = row
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::config("reference_front", format!("{}: {e}", path.display()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if p.len() != n_obj {
            return Err(Error::config(
                "reference_front",
                format!("{}: expected {n_obj} columns, got {}", path.display(), p.len()),
            ));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_front(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(first) = points.first() {
        w.write_record((1..=first.len()).map(|i| format!("f{i}")))?;
    }
    for p in points {
        w.write_record(p.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtlz2_center() {
        let p = Problem::new(ProblemKind::Dtlz2);
        let e = p.evaluate(&[0.5; 12]).unwrap();
        assert!((e.f[0] - 0.5).abs() < 1e-12);
        assert!((e.f[1] - 0.5).abs() < 1e-12);
        assert!((e.f[2] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(e.g.is_empty());
    }

    #[test]
    fn out_of_box_is_usage_error() {
        let p = Problem::new(ProblemKind::Dtlz2);
        let mut x = [0.5; 12];
        x[3] = 1.5;
        assert!(matches!(p.evaluate(&x), Err(Error::Usage(_))));
        assert!(matches!(p.evaluate(&[0.5; 3]), Err(Error::Usage(_))));
        x[3] = f64::NAN;
        assert!(p.evaluate(&x).is_err());
    }

    #[test]
    fn registry_defaults() {
        assert_eq!(Problem::new(ProblemKind::C2Dtlz2).n_x(), 7);
        assert_eq!(Problem::new(ProblemKind::Ctp3).n_x(), 2);
        assert_eq!(Problem::new(ProblemKind::Dtlz7).nadir(), &[3.0, 3.0, 7.0]);
        assert_eq!(Problem::new(ProblemKind::Ctp1).nadir(), &[3.0, 3.0]);
        assert_eq!(ProblemKind::from_name("C2_DTLZ2").unwrap(), ProblemKind::C2Dtlz2);
        assert_eq!(ProblemKind::from_name("c3dtlz4").unwrap(), ProblemKind::C3Dtlz4);
        assert!(ProblemKind::from_name("dtlz1").is_err());
    }

    #[test]
    fn ctp1_coefficients_match_hand_recursion() {
        let (a, b) = ctp1_coefficients(2);
        // j=0: beta = e^{-1/3}, a1 = (1 + e^{-1/3})/2, b1 = -3 ln(beta / a1)
        let beta0 = (-1.0f64 / 3.0).exp();
        let a1 = (1.0 + beta0) / 2.0;
        let b1 = -3.0 * (beta0 / a1).ln();
        assert!((a[0] - a1).abs() < 1e-15);
        assert!((b[0] - b1).abs() < 1e-12);
        // Each boundary meets the unconstrained front at f1 = (j+1)/3.
        for (j, (aj, bj)) in a.iter().zip(&b).enumerate() {
            let f1 = (j + 1) as f64 / 3.0;
            let prev = if j == 0 {
                (-f1).exp()
            } else {
                a[j - 1] * (-b[j - 1] * f1).exp()
            };
            assert!(aj * (-bj * f1).exp() <= prev + 1e-12);
        }
    }

    #[test]
    fn sphere_front_on_unit_sphere() {
        let p = Problem::new(ProblemKind::Dtlz2);
        let front = p.reference_front(200).unwrap();
        assert_eq!(front.len(), 200);
        for f in &front {
            let s: f64 = f.iter().map(|v| v * v).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert_eq!(p.reference_front(1).unwrap().len(), 1);
    }

    #[test]
    fn stride_subsample_picks_evenly() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let s = stride_subsample(pts.clone(), 5);
        assert_eq!(s, vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0], vec![8.0]]);
        assert_eq!(stride_subsample(pts, 20).len(), 10);
    }

    #[test]
    fn missing_front_file_is_config_error() {
        let p = Problem::new(ProblemKind::Ctp2);
        let r = p.reference_front_in(Path::new("/nonexistent-front-dir"), 10);
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn dtlz5_front_is_a_curve() {
        let p = Problem::new(ProblemKind::Dtlz5);
        let front = p.reference_front(50).unwrap();
        for f in &front {
            let s: f64 = f.iter().map(|v| v * v).sum();
            assert!((s - 1.0).abs() < 1e-9);
            // f1 = f2 on the degenerate curve for three objectives.
            assert!((f[0] - f[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn dtlz6_front_matches_dtlz5() {
        let a = Problem::new(ProblemKind::Dtlz5).reference_front(20).unwrap();
        let b = Problem::new(ProblemKind::Dtlz6).reference_front(20).unwrap();
        for (p, q) in a.iter().zip(&b) {
            for (u, v) in p.iter().zip(q) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constrained_fronts_are_feasible() {
        let c2 = Problem::new(ProblemKind::C2Dtlz2);
        for f in c2.reference_front(100).unwrap() {
            assert!(c2_constraint(&f) <= 1e-12);
        }
        let c3 = Problem::new(ProblemKind::C3Dtlz4);
        for f in c3.reference_front(100).unwrap() {
            assert!(c3_constraints(&f).iter().all(|&g| g <= 1e-9), "{f:?}");
        }
    }
}
