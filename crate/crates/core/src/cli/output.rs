//! Trace CSVs and the run manifest.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dimix::{Metric, MetricStats, RunTrace};
use crate::error::{invalid, Result};

use super::config::ExperimentConfig;

pub const RUN_HEADER: [&str; 5] = [
    "t",
    "loss_pooled",
    "loss_weighted",
    "deviation_sq",
    "dist_opt_sq",
];

pub fn run_file_name(k: usize) -> String {
    format!("run_{k}.csv")
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_run_csv<W: Write>(w: W, trace: &RunTrace) -> Result<()> {
    let mut out = writer(w);
    out.write_record(RUN_HEADER)?;
    for rec in &trace.records {
        let mut row = vec![rec.t.to_string()];
        row.extend(Metric::CSV.iter().map(|m| num(m.of(rec))));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mean_csv<W: Write>(w: W, stats: &[MetricStats]) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    for s in stats {
        header.push(format!("{}_mean", s.metric.name()));
        header.push(format!("{}_stderr", s.metric.name()));
    }
    out.write_record(&header)?;
    let len = stats.first().map_or(0, |s| s.mean.len());
    for idx in 0..len {
        let mut row = vec![(idx + 1).to_string()];
        for s in stats {
            row.push(num(s.mean[idx]));
            row.push(num(s.stderr[idx]));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// One parsed line of a `run_<k>.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub loss_pooled: f64,
    pub loss_weighted: f64,
    pub deviation_sq: f64,
    pub dist_opt_sq: f64,
}

impl TraceRow {
    /// `‖x̄ − x*‖²`.
    pub fn avg_dist_sq(&self) -> f64 {
        self.dist_opt_sq - self.deviation_sq
    }
}

pub fn read_run_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RUN_HEADER {
        return Err(invalid(format!("unexpected trace header {header:?}")));
    }
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    for (idx, row) in rows.iter().enumerate() {
        if row.t != idx as u64 + 1 {
            return Err(invalid(format!("trace row {} has t = {}", idx + 1, row.t)));
        }
    }
    Ok(rows)
}

/// All `run_<k>.csv` files in `dir`, ordered by `k`.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<Vec<TraceRow>>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name
            .strip_prefix("run_")
            .and_then(|s| s.strip_suffix(".csv"))
        {
            if let Ok(k) = k.parse::<usize>() {
                found.push(k);
            }
        }
    }
    found.sort_unstable();
    found
        .into_iter()
        .map(|k| read_run_csv(std::fs::File::open(dir.join(run_file_name(k)))?))
        .collect()
}

/// Network, problem and theory constants recorded with a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub lambda: f64,
    pub kappa: f64,
    pub eta: f64,
    pub window: usize,
    pub r_min: f64,
    pub mu_f: f64,
    pub l_f: f64,
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    pub k_grad: f64,
    pub state_norm_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsSection {
    pub seeds: Vec<u64>,
    pub completed: usize,
    pub aborted: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abort_reasons: Vec<String>,
    /// Agents whose apportioned shard was empty and took a sample.
    pub adjusted_agents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub derived: Derived,
    pub runs: RunsSection,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimix::Record;

    fn trace() -> RunTrace {
        let records = (1..=3)
            .map(|t| Record {
                t,
                loss_pooled: 1.0 / t as f64,
                loss_weighted: 0.1,
                deviation_sq: 0.0,
                dist_opt_sq: std::f64::consts::PI * t as f64,
                avg_dist_sq: 0.0,
                grad_sq_max: 0.0,
                state_norm_max: 0.0,
            })
            .collect();
        RunTrace {
            seed: 0,
            horizon: 3,
            records,
            checkpoints: Vec::new(),
            aborted: None,
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_run_csv(&mut buf, &trace()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(
            lines[0],
            "t,loss_pooled,loss_weighted,deviation_sq,dist_opt_sq"
        );
        assert_eq!(lines[1], "1,1.0000000000000000e0,1.0000000000000001e-1,0.0000000000000000e0,3.1415926535897931e0");
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = trace();
        let mut buf = Vec::new();
        write_run_csv(&mut buf, &tr).unwrap();
        let rows = read_run_csv(buf.as_slice()).unwrap();
        for (row, rec) in rows.iter().zip(&tr.records) {
            assert_eq!(row.loss_pooled, rec.loss_pooled);
            assert_eq!(row.dist_opt_sq, rec.dist_opt_sq);
        }
    }

    #[test]
    fn rejects_gapped_trace() {
        let text = "t,loss_pooled,loss_weighted,deviation_sq,dist_opt_sq\n1,0,0,0,0\n3,0,0,0,0\n";
        assert!(read_run_csv(text.as_bytes()).is_err());
        assert!(read_run_csv("t,x\n1,0\n".as_bytes()).is_err());
    }
}
