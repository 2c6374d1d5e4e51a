use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_io::write_atomic;

use super::GraphStats;

/// One evaluated (method, dataset, architecture) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub method: String,
    pub dataset: String,
    pub arch: String,
    pub r_n: f64,
    pub r_d: f64,
    pub seeds: Vec<u64>,
    pub accs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub stats: GraphStats,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<ReportRun>,
}

const CSV_HEADER: &str = "method,dataset,arch,r_n,r_d,seeds,accs,mean,std,nodes,edges,features,classes,sparsity,storage_bytes,fingerprint";

fn joined<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(";")
}

fn csv(runs: &[ReportRun]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in runs {
        writeln!(
            s,
            "{},{},{},{:?},{:?},{},{},{:?},{:?},{},{},{},{},{:?},{},{}",
            r.method,
            r.dataset,
            r.arch,
            r.r_n,
            r.r_d,
            joined(&r.seeds, |x| x.to_string()),
            joined(&r.accs, |x| format!("{x:?}")),
            r.mean,
            r.std,
            r.stats.nodes,
            r.stats.edges,
            r.stats.features,
            r.stats.classes,
            r.stats.sparsity,
            r.stats.storage_bytes,
            r.fingerprint
        )
        .expect("string write");
    }
    s
}

/// Writes `json_path` and a CSV twin next to it (same stem, `.csv`). Runs
/// are sorted by method, dataset and architecture first.
pub fn emit_report(runs: &[ReportRun], json_path: &Path) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::Config("a report needs at least one run".into()));
    }
    let mut runs = runs.to_vec();
    runs.sort_by(|a, b| {
        (&a.method, &a.dataset, &a.arch, &a.fingerprint).cmp(&(
            &b.method,
            &b.dataset,
            &b.arch,
            &b.fingerprint,
        ))
    });
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let report = Report { runs };
    write_atomic(json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(
        &json_path.with_extension("csv"),
        csv(&report.runs).as_bytes(),
    )
}

pub fn load_report(json_path: &Path) -> Result<Report> {
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    Ok(serde_json::from_str(&text)?)
}
