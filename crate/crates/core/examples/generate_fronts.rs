//! Regenerates the bundled reference fronts in `crates/core/data`.
//!
//! ```text
//! cargo run --release -p moorl --example generate_fronts [out-dir]
//! ```
//!
//! dtlz7: the front lies at `g = 1` (tail variables zero); a grid over the
//! two position variables is filtered to its non-dominated subset.
//!
//! ctp1–4: with the first variable fixed, `f2` increases monotonically in the
//! tail sum, so the best feasible point per `x1` is the smallest feasible
//! tail value. It is located by a coarse scan refined by bisection, then the
//! candidates are filtered to their non-dominated subset.

use std::path::PathBuf;

use moorl::problems::{non_dominated_subset, write_front, Environment, Problem, ProblemKind};
use moorl::Result;

const X1_STEPS: usize = 4000;
const TAIL_STEPS: usize = 2000;
const DTLZ7_STEPS: usize = 200;

fn feasible(p: &Problem, x: &[f64]) -> Result<Option<Vec<f64>>> {
    let e = p.evaluate(x)?;
    Ok(e.g.iter().all(|&g| g <= 0.0).then_some(e.f))
}

fn ctp_front(kind: ProblemKind) -> Result<Vec<Vec<f64>>> {
    let p = Problem::new(kind);
    let mut candidates = Vec::new();
    for i in 0..=X1_STEPS {
        let x1 = i as f64 / X1_STEPS as f64;
        let at = |t: f64| [x1, t];
        if let Some(f) = feasible(&p, &at(0.0))? {
            candidates.push(f);
            continue;
        }
        let mut lo = 0.0;
        let mut hi = None;
        for j in 1..=TAIL_STEPS {
            let t = j as f64 / TAIL_STEPS as f64;
            if feasible(&p, &at(t))?.is_some() {
                hi = Some(t);
                break;
            }
            lo = t;
        }
        let Some(mut hi) = hi else { continue };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(&p, &at(mid))?.is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        candidates.push(feasible(&p, &at(hi))?.expect("bisection keeps hi feasible"));
    }
    Ok(non_dominated_2d(candidates))
}

fn non_dominated_2d(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        if out.last().is_none_or(|q| p[1] < q[1]) {
            out.push(p);
        }
    }
    out
}

fn dtlz7_front() -> Result<Vec<Vec<f64>>> {
    let p = Problem::new(ProblemKind::Dtlz7);
    let mut pts = Vec::new();
    let mut x = vec![0.0; p.n_x()];
    for i in 0..=DTLZ7_STEPS {
        for j in 0..=DTLZ7_STEPS {
            x[0] = i as f64 / DTLZ7_STEPS as f64;
            x[1] = j as f64 / DTLZ7_STEPS as f64;
            pts.push(p.evaluate(&x)?.f);
        }
    }
    Ok(non_dominated_subset(pts))
}

fn main() -> Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")));
    std::fs::create_dir_all(&dir).map_err(|e| moorl::Error::Evaluation(e.to_string()))?;

    let dtlz7 = dtlz7_front()?;
    write_front(&dir.join("dtlz7.csv"), &dtlz7)?;
    println!("dtlz7: {} points", dtlz7.len());
    for (kind, file) in [
        (ProblemKind::Ctp1, "ctp1.csv"),
        (ProblemKind::Ctp2, "ctp2.csv"),
        (ProblemKind::Ctp3, "ctp3.csv"),
        (ProblemKind::Ctp4, "ctp4.csv"),
    ] {
        let front = ctp_front(kind)?;
        write_front(&dir.join(file), &front)?;
        println!("{}: {} points", kind.name(), front.len());
    }
    Ok(())
}
