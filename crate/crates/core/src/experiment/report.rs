//! CSV export of per-run results and grouped summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::stats::{summarize, welch_t, SummaryStats, WelchT};
use super::RunResult;
use crate::benchmarks::fmt_real;

pub const RUN_COLUMNS: [&str; 9] = [
    "model",
    "problem",
    "nodes",
    "run",
    "best_fitness",
    "evaluations",
    "sim_time_s",
    "migrant_latency_ms_mean",
    "migrant_latency_ms_sd",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown group-by column `{0}` (expected model, problem or nodes)")]
    UnknownColumn(String),
}

/// One CSV row; what a run looks like after a round trip through a file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub model: String,
    pub problem: String,
    pub nodes: usize,
    pub run: usize,
    pub best_fitness: f64,
    pub evaluations: u64,
    pub sim_time_s: f64,
    pub latency_ms_mean: Option<f64>,
    pub latency_ms_sd: Option<f64>,
}

impl From<&RunResult> for RunRow {
    fn from(r: &RunResult) -> Self {
        RunRow {
            model: r.model.name().to_string(),
            problem: r.problem.name().to_string(),
            nodes: r.nodes,
            run: r.run,
            best_fitness: r.best_fitness,
            evaluations: r.evaluations_used,
            sim_time_s: r.simulated_duration,
            latency_ms_mean: r.migrant_latency.map(|l| l.mean * 1e3),
            latency_ms_sd: r.migrant_latency.map(|l| l.sd * 1e3),
        }
    }
}

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Header plus one row per run. Empty latency cells mean no migrants.
pub fn write_runs_csv<W: Write>(w: W, results: &[RunResult]) -> io::Result<()> {
    let rows: Vec<RunRow> = results.iter().map(RunRow::from).collect();
    write_rows_csv(w, &rows)
}

pub fn write_rows_csv<W: Write>(w: W, rows: &[RunRow]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUN_COLUMNS).map_err(to_io)?;
    for r in rows {
        out.write_record([
            r.model.clone(),
            r.problem.clone(),
            r.nodes.to_string(),
            r.run.to_string(),
            fmt_real(r.best_fitness),
            r.evaluations.to_string(),
            fmt_real(r.sim_time_s),
            opt_real(r.latency_ms_mean),
            opt_real(r.latency_ms_sd),
        ])
        .map_err(to_io)?;
    }
    out.flush()
}

pub fn save_runs_csv(path: &Path, results: &[RunResult]) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_runs_csv(BufWriter::new(file), results).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_runs_csv<R: Read>(r: R) -> Result<Vec<RunRow>, ReportError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ReportError::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != RUN_COLUMNS.len() {
            return Err(ReportError::Parse {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    RUN_COLUMNS.len(),
                    rec.len()
                ),
            });
        }
        let field = |k: usize| rec.get(k).unwrap_or_default();
        fn num<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<T, ReportError> {
            s.parse().map_err(|_| ReportError::Parse {
                line,
                message: format!("bad {col} value `{s}`"),
            })
        }
        let opt = |k: usize| -> Result<Option<f64>, ReportError> {
            let s = field(k);
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, line, RUN_COLUMNS[k]).map(Some)
            }
        };
        rows.push(RunRow {
            model: field(0).to_string(),
            problem: field(1).to_string(),
            nodes: num(field(2), line, "nodes")?,
            run: num(field(3), line, "run")?,
            best_fitness: num(field(4), line, "best_fitness")?,
            evaluations: num(field(5), line, "evaluations")?,
            sim_time_s: num(field(6), line, "sim_time_s")?,
            latency_ms_mean: opt(7)?,
            latency_ms_sd: opt(8)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupColumn {
    Model,
    Problem,
    Nodes,
}

impl GroupColumn {
    pub fn parse_list(spec: &str) -> Result<Vec<GroupColumn>, ReportError> {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "model" => Ok(GroupColumn::Model),
                "problem" => Ok(GroupColumn::Problem),
                "nodes" => Ok(GroupColumn::Nodes),
                other => Err(ReportError::UnknownColumn(other.to_string())),
            })
            .collect()
    }

    fn name(self) -> &'static str {
        match self {
            GroupColumn::Model => "model",
            GroupColumn::Problem => "problem",
            GroupColumn::Nodes => "nodes",
        }
    }

    fn key(self, row: &RunRow) -> GroupKey {
        match self {
            GroupColumn::Model => GroupKey::Text(row.model.clone()),
            GroupColumn::Problem => GroupKey::Text(row.problem.clone()),
            GroupColumn::Nodes => GroupKey::Number(row.nodes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    Number(usize),
    Text(String),
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupKey::Number(n) => write!(f, "{n}"),
            GroupKey::Text(s) => f.write_str(s),
        }
    }
}

/// Statistics for one group of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: Vec<GroupKey>,
    pub fitness: SummaryStats,
    pub latency_ms: Option<SummaryStats>,
    pub t_vs_reference: Option<WelchT>,
}

/// Groups rows by `columns` (ordered by key) and summarizes each group. With
/// `reference_model`, each group also gets Welch's t against the group that
/// differs only in its model.
pub fn summarize_rows(
    rows: &[RunRow],
    columns: &[GroupColumn],
    reference_model: Option<&str>,
) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<Vec<GroupKey>, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        let key = columns.iter().map(|c| c.key(r)).collect();
        groups.entry(key).or_default().push(r);
    }
    let model_pos = columns.iter().position(|c| *c == GroupColumn::Model);
    groups
        .iter()
        .map(|(key, members)| {
            let fits: Vec<f64> = members.iter().map(|r| r.best_fitness).collect();
            let lats: Vec<f64> = members.iter().filter_map(|r| r.latency_ms_mean).collect();
            let t_vs_reference = match (reference_model, model_pos) {
                (Some(reference), Some(pos)) => {
                    let mut other = key.clone();
                    other[pos] = GroupKey::Text(reference.to_string());
                    groups
                        .get(&other)
                        .filter(|_| other != *key)
                        .and_then(|refs| {
                            let ref_fits: Vec<f64> = refs.iter().map(|r| r.best_fitness).collect();
                            welch_t(&fits, &ref_fits)
                        })
                }
                _ => None,
            };
            SummaryRow {
                key: key.clone(),
                fitness: summarize(&fits).expect("groups are nonempty"),
                latency_ms: summarize(&lats),
                t_vs_reference,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(
    w: W,
    columns: &[GroupColumn],
    rows: &[SummaryRow],
) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = columns.iter().map(|c| c.name()).collect();
    header.extend([
        "count",
        "fitness_mean",
        "fitness_sd",
        "fitness_min",
        "fitness_q1",
        "fitness_median",
        "fitness_q3",
        "fitness_max",
        "latency_ms_mean",
        "latency_ms_sd",
        "latency_ms_median",
        "t_vs_reference",
        "t_df",
    ]);
    out.write_record(&header).map_err(to_io)?;
    for r in rows {
        let f = &r.fitness;
        let mut rec: Vec<String> = r.key.iter().map(|k| k.to_string()).collect();
        rec.push(f.count.to_string());
        for v in [f.mean, f.sd, f.min, f.q1, f.median, f.q3, f.max] {
            rec.push(fmt_real(v));
        }
        rec.push(opt_real(r.latency_ms.map(|l| l.mean)));
        rec.push(opt_real(r.latency_ms.map(|l| l.sd)));
        rec.push(opt_real(r.latency_ms.map(|l| l.median)));
        rec.push(opt_real(r.t_vs_reference.map(|t| t.t)));
        rec.push(opt_real(r.t_vs_reference.map(|t| t.df)));
        out.write_record(&rec).map_err(to_io)?;
    }
    out.flush()
}
