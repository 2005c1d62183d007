//! CSV and JSON files written and read by experiments.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::indicators::MetricReport;
use crate::pareto::Solution;
use crate::trainer::LogRow;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Evaluation log: `step,worker,x1..,f1..,g1..,cv,reward`.
pub fn write_log(path: &Path, rows: &[LogRow], n_x: usize, n_obj: usize, n_g: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["step".to_string(), "worker".to_string()];
    header.extend(numbered("x", n_x));
    header.extend(numbered("f", n_obj));
    header.extend(numbered("g", n_g));
    header.push("cv".into());
    header.push("reward".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.step.to_string(), r.worker.to_string()];
        rec.extend(r.x.iter().map(f64::to_string));
        rec.extend(r.f.iter().map(f64::to_string));
        rec.extend(r.g.iter().map(f64::to_string));
        rec.push(r.cv.to_string());
        rec.push(r.reward.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Front file: `x1..,f1..,g1..,cv` with objectives in minimization sense.
pub fn write_solutions(path: &Path, front: &[Solution], n_x: usize, n_obj: usize, n_g: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = numbered("x", n_x).collect();
    header.extend(numbered("f", n_obj));
    header.extend(numbered("g", n_g));
    header.push("cv".into());
    w.write_record(&header)?;
    for s in front {
        let mut rec: Vec<String> = s.x.iter().map(f64::to_string).collect();
        rec.extend(s.minimization_objectives().iter().map(f64::to_string));
        rec.extend(s.g.iter().map(f64::to_string));
        rec.push(s.cv.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A front file read back: minimization objectives and violation per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontRows {
    pub n_obj: usize,
    pub objectives: Vec<Vec<f64>>,
    pub cv: Vec<f64>,
}

impl FrontRows {
    pub fn feasible(&self) -> Vec<Vec<f64>> {
        self.objectives
            .iter()
            .zip(&self.cv)
            .filter(|(_, &cv)| cv == 0.0)
            .map(|(f, _)| f.clone())
            .collect()
    }
}

/// Reads the `f*` and `cv` columns of a front file. A file without a `cv`
/// column is treated as all feasible.
pub fn read_front(path: &Path) -> Result<FrontRows> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    let f_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('f') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    let cv_col = header.iter().position(|h| h == "cv");
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::config("front", format!("{}: {e}", path.display())))
    };
    let mut out = FrontRows {
        n_obj: f_cols.len(),
        objectives: Vec::new(),
        cv: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec?;
        out.objectives
            .push(f_cols.iter().map(|&i| parse(&rec[i])).collect::<Result<_>>()?);
        out.cv.push(match cv_col {
            Some(i) => parse(&rec[i])?,
            None => 0.0,
        });
    }
    Ok(out)
}

pub fn write_metrics(path: &Path, rows: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["run_id", "algorithm", "problem", "hv", "gd", "igd", "eps", "i_c", "c_metric"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricReport>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a plain CSV table with a header row.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
