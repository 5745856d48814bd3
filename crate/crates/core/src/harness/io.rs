//! Run directories: `curve.csv`, `queries.csv`, `diag.csv`, `config.echo`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentConfig, RunRecord};
use crate::error::{Error, Result};
use crate::eval::{LearningCurve, PairedStats, Winner};

fn write_rows<R: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::invalid(e.to_string()))?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the four run files into `dir`, creating it if needed.
pub fn write_run(record: &RunRecord, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(
        &dir.join("curve.csv"),
        &["cycle", "labeled_fraction", "test_accuracy"],
        record
            .cycles
            .iter()
            .map(|c| (c.cycle, c.labeled_fraction, c.test_accuracy)),
    )?;
    write_rows(
        &dir.join("queries.csv"),
        &[
            "cycle",
            "client",
            "sample_index",
            "true_class",
            "pseudo_class",
            "selector_model",
        ],
        record.queries.iter().map(|q| {
            (
                q.cycle,
                q.client,
                q.sample_index,
                q.true_class,
                q.pseudo_class,
                q.selector_model.to_string(),
            )
        }),
    )?;
    write_rows(
        &dir.join("diag.csv"),
        &[
            "cycle",
            "client",
            "gamma_k",
            "gamma_bar",
            "d_k",
            "s_k",
            "model",
        ],
        record.diagnostics.iter().map(|d| {
            (
                d.cycle,
                d.client,
                d.gamma_k,
                d.gamma_bar,
                d.d_k,
                d.s_k,
                d.model.to_string(),
            )
        }),
    )?;
    let mut echo = cfg.clone();
    echo.strategy = record.strategy.clone();
    echo.seeds = vec![record.seed];
    let path = dir.join("config.echo");
    fs::write(&path, echo.to_toml()).map_err(|e| Error::io(&path, e))
}

#[derive(Serialize)]
struct StatsLine<'a> {
    first: &'a str,
    second: &'a str,
    winner: &'a str,
    pi_plus: f64,
    p_value: f64,
    hl_pp: f64,
    seeds: &'a [u64],
    deltas_pp: &'a [f64],
}

/// One JSON object per line: `{first, second, winner, pi_plus, p_value, hl_pp, seeds, deltas_pp}`.
pub fn write_stats(
    out: &mut impl Write,
    first: &str,
    second: &str,
    stats: &PairedStats<f64>,
) -> Result<()> {
    let line = StatsLine {
        first,
        second,
        winner: match stats.winner() {
            Winner::First => first,
            Winner::Second => second,
        },
        pi_plus: stats.pi_plus,
        p_value: stats.p_value,
        hl_pp: stats.hl_estimate,
        seeds: &stats.seeds,
        deltas_pp: &stats.deltas,
    };
    let text = serde_json::to_string(&line).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Error::io("<stats output>", e))
}

/// Reads a learning curve from a CSV with a `labeled_fraction` column and an
/// `accuracy` (or `test_accuracy`) column. Other columns are ignored.
pub fn read_curve_csv(path: &Path) -> Result<LearningCurve<f64>> {
    let parse = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let headers = r.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let frac = col(&["labeled_fraction"])
        .ok_or_else(|| parse(1, "missing `labeled_fraction` column".into()))?;
    let acc = col(&["accuracy", "test_accuracy"])
        .ok_or_else(|| parse(1, "missing `accuracy` column".into()))?;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse(line, format!("non-numeric value in column {}", &headers[j])))
        };
        points.push((num(frac)?, num(acc)?));
    }
    LearningCurve::new(points).map_err(|e| e.context(path.display().to_string()))
}

/// Expands a curve-set argument: a CSV file, or a directory holding `*.csv`
/// files and/or subdirectories with a `curve.csv`. Each entry is keyed by the
/// trailing integer of its file stem (or directory name).
pub fn collect_curve_files(arg: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut files = Vec::new();
    if arg.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(arg)
            .map_err(|e| Error::io(arg, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() && p.join("curve.csv").is_file() {
                files.push(p.join("curve.csv"));
            } else if p.extension().is_some_and(|e| e == "csv") {
                files.push(p);
            }
        }
    } else {
        files.push(arg.to_path_buf());
    }
    files
        .into_iter()
        .map(|f| {
            let key_source = if f.file_name().is_some_and(|n| n == "curve.csv") {
                f.parent().and_then(|p| p.file_name())
            } else {
                f.file_stem()
            };
            let name = key_source
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let digits: String = name
                .chars()
                .rev()
                .take_while(char::is_ascii_digit)
                .collect();
            let seed = digits
                .chars()
                .rev()
                .collect::<String>()
                .parse()
                .map_err(|_| {
                    Error::invalid(format!("cannot read a seed number from `{}`", f.display()))
                })?;
            Ok((seed, f))
        })
        .collect()
}

pub(crate) fn partition_csv(path: Option<&Path>, rows: &[(usize, usize, usize)]) -> Result<()> {
    let header = ["index", "client", "class"];
    match path {
        Some(p) => write_rows(p, &header, rows.iter().copied()),
        None => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)
                .map_err(|e| Error::invalid(e.to_string()))?;
            for r in rows {
                w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)
                .and_then(|()| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}
