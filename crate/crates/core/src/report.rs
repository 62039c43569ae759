//! Report files: JSON lines or long-format CSV.
//!
//! JSON lines start with a metadata record (the only place a timestamp
//! appears), then one `point` record per sweep scale, then a `summary`.
//!
//! CSV has the fixed header [`CSV_HEADER`]. Provenance and the timestamp sit
//! in leading `#` comment lines. Each row is one number:
//!
//! | section | scale | name | row | col | value |
//! |---|---|---|---|---|---|
//! | `point` | sweep scale | `eps`, `probs`, `fisher`, `q:bias`, `r:tpcp`, ... | matrix row or vector index | matrix column | number |
//! | `fit` | empty | `<quantity>.slope` / `.intercept` / `.residual` | 0 | 0 | number |
//! | `check` | empty | check name | 0 | 0 | 1 pass, 0 fail |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::NondegeneracyGate;
use crate::scenarios::Quantity;
use crate::sweep::{Check, FitRecord, MatrixRows, Report, SweepPoint};

pub const CSV_HEADER: &str = "section,scale,name,row,col,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Jsonl,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Jsonl => "jsonl",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" => Ok(ReportFormat::Jsonl),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::ConfigInvalid(format!("unknown report format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub timestamp_unix: u64,
    pub generator: String,
}

impl Metadata {
    pub fn now() -> Self {
        Metadata {
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            generator: format!("lownoise {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Summary {
    scenario: String,
    seed: u64,
    config_hash: String,
    version: String,
    shots: Option<u64>,
    fits: std::collections::BTreeMap<Quantity, FitRecord>,
    gate: NondegeneracyGate,
    checks: Vec<Check>,
    passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Line {
    Metadata(Metadata),
    Point(Box<SweepPoint>),
    Summary(Box<Summary>),
}

fn json_line(line: &Line) -> Result<String> {
    serde_json::to_string(line).map_err(|e| Error::Io(e.to_string()))
}

pub fn to_jsonl(r: &Report, meta: &Metadata) -> Result<String> {
    let mut out = json_line(&Line::Metadata(meta.clone()))?;
    out.push('\n');
    for p in &r.points {
        out += &json_line(&Line::Point(Box::new(p.clone())))?;
        out.push('\n');
    }
    out += &json_line(&Line::Summary(Box::new(Summary {
        scenario: r.scenario.clone(),
        seed: r.seed,
        config_hash: r.config_hash.clone(),
        version: r.version.clone(),
        shots: r.shots,
        fits: r.fits.clone(),
        gate: r.gate.clone(),
        checks: r.checks.clone(),
        passed: r.passed,
    })))?;
    out.push('\n');
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<(Report, Metadata)> {
    let mut meta = None;
    let mut points = Vec::new();
    let mut summary = None;
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: Line = serde_json::from_str(raw).map_err(|e| Error::Io(format!("line {}: {e}", i + 1)))?;
        match line {
            Line::Metadata(m) => meta = Some(m),
            Line::Point(p) => points.push(*p),
            Line::Summary(s) => summary = Some(*s),
        }
    }
    let meta = meta.ok_or_else(|| Error::Io("missing metadata record".into()))?;
    let s = summary.ok_or_else(|| Error::Io("missing summary record".into()))?;
    Ok((
        Report {
            scenario: s.scenario,
            seed: s.seed,
            config_hash: s.config_hash,
            version: s.version,
            shots: s.shots,
            points,
            fits: s.fits,
            gate: s.gate,
            checks: s.checks,
            passed: s.passed,
        },
        meta,
    ))
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub section: String,
    pub scale: Option<f64>,
    pub name: String,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

fn push_vector(rows: &mut Vec<CsvRow>, scale: f64, name: &str, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        rows.push(CsvRow {
            section: "point".into(),
            scale: Some(scale),
            name: name.into(),
            row: i,
            col: 0,
            value: *x,
        });
    }
}

fn push_matrix(rows: &mut Vec<CsvRow>, scale: f64, name: &str, m: &MatrixRows) {
    for (i, r) in m.iter().enumerate() {
        for (j, x) in r.iter().enumerate() {
            rows.push(CsvRow {
                section: "point".into(),
                scale: Some(scale),
                name: name.into(),
                row: i,
                col: j,
                value: *x,
            });
        }
    }
}

fn scalar(section: &str, name: String, value: f64) -> CsvRow {
    CsvRow {
        section: section.into(),
        scale: None,
        name,
        row: 0,
        col: 0,
        value,
    }
}

/// The numbers of `r` in CSV row order.
pub fn csv_rows(r: &Report) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for p in &r.points {
        let s = p.scale;
        push_vector(&mut rows, s, "eps", &p.eps);
        push_vector(&mut rows, s, "probs", &p.probs);
        push_vector(&mut rows, s, "delta-eigenvalues", &p.delta_eigenvalues);
        if let Some(v) = &p.lambda_eigenvalues {
            push_vector(&mut rows, s, "lambda-eigenvalues", v);
        }
        for (name, m) in [
            ("fisher", &p.fisher),
            ("fisher-inverse", &p.fisher_inverse),
            ("divergent-fisher", &p.divergent_fisher),
            ("classical-fisher", &p.classical_fisher),
            ("mse", &p.mse),
        ] {
            if let Some(m) = m {
                push_matrix(&mut rows, s, name, m);
            }
        }
        for (name, v) in [
            ("nondegeneracy-det", p.nondegeneracy_det),
            ("gap-min-eigenvalue", p.gap_min_eigenvalue),
            ("cr-direction-min", p.cr_direction_min),
        ] {
            if let Some(v) = v {
                push_vector(&mut rows, s, name, &[v]);
            }
        }
        for (q, v) in &p.quantities {
            push_vector(&mut rows, s, &format!("q:{}", q.name()), &[*v]);
        }
        for (k, v) in &p.residuals {
            push_vector(&mut rows, s, &format!("r:{k}"), &[*v]);
        }
        if let Some(mc) = &p.monte_carlo {
            push_matrix(&mut rows, s, "mc-mse", &mc.mse);
            push_matrix(&mut rows, s, "mc-standard-error", &mc.standard_error);
            push_vector(&mut rows, s, "mc-max-z", &[mc.max_z]);
        }
    }
    for (q, rec) in &r.fits {
        if let Some(f) = rec.fit {
            rows.push(scalar("fit", format!("{}.slope", q.name()), f.slope));
            rows.push(scalar("fit", format!("{}.intercept", q.name()), f.intercept));
            rows.push(scalar("fit", format!("{}.residual", q.name()), f.residual));
        }
    }
    for c in &r.checks {
        rows.push(scalar("check", c.name.clone(), if c.pass { 1.0 } else { 0.0 }));
    }
    rows
}

fn csv_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_csv(r: &Report, meta: &Metadata) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# timestamp_unix={}", meta.timestamp_unix);
    let _ = writeln!(out, "# generator={}", meta.generator);
    let _ = writeln!(out, "# scenario={}", r.scenario);
    let _ = writeln!(out, "# seed={}", r.seed);
    let _ = writeln!(out, "# config_hash={}", r.config_hash);
    let _ = writeln!(out, "# version={}", r.version);
    let _ = writeln!(out, "# passed={}", r.passed);
    out += CSV_HEADER;
    out.push('\n');
    for row in csv_rows(r) {
        let scale = row.scale.map(csv_number).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.section,
            scale,
            row.name,
            row.row,
            row.col,
            csv_number(row.value)
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |i: usize, what: &str| Error::Io(format!("csv line {}: {what}", i + 1));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((i, _)) => return Err(bad(i, "unexpected header")),
        None => return Err(Error::Io("empty csv".into())),
    }
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i, "bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(i, "bad index"));
            Ok(CsvRow {
                section: f[0].into(),
                scale: if f[1].is_empty() { None } else { Some(num(f[1])?) },
                name: f[2].into(),
                row: idx(f[3])?,
                col: idx(f[4])?,
                value: num(f[5])?,
            })
        })
        .collect()
}

pub fn render(r: &Report, format: ReportFormat, meta: &Metadata) -> Result<String> {
    match format {
        ReportFormat::Jsonl => to_jsonl(r, meta),
        ReportFormat::Csv => Ok(to_csv(r, meta)),
    }
}

pub fn emit_report(r: &Report, format: ReportFormat, path: &Path) -> Result<()> {
    let text = render(r, format, &Metadata::now())?;
    std::fs::write(path, text).map_err(Error::from)
}

/// Report text with the timestamp removed, for reproducibility comparisons.
pub fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("{\"record\":\"metadata\"") && !l.starts_with("# timestamp_unix="))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{scenario_ancilla_bell, scenario_pauli2};
    use crate::sweep::{run_sweep, run_sweep_with, SweepOptions};

    fn meta() -> Metadata {
        Metadata {
            timestamp_unix: 1,
            generator: "test".into(),
        }
    }

    #[test]
    fn jsonl_round_trip_exact() {
        for sc in [scenario_ancilla_bell(), scenario_pauli2()] {
            let r = run_sweep(&sc).unwrap();
            let text = to_jsonl(&r, &meta()).unwrap();
            assert_eq!(text.lines().count(), r.points.len() + 2);
            let (back, m) = parse_jsonl(&text).unwrap();
            assert_eq!(back, r);
            assert_eq!(m, meta());
        }
    }

    #[test]
    fn csv_round_trip_exact() {
        let r = run_sweep_with(&scenario_ancilla_bell(), &SweepOptions { shots: Some(1000), workers: 2 }).unwrap();
        let text = to_csv(&r, &meta());
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, csv_rows(&r));
        assert!(text.lines().any(|l| l == CSV_HEADER));
        assert!(parsed.iter().any(|row| row.name == "mc-mse"));
    }

    #[test]
    fn summary_slopes_full_precision() {
        let r = run_sweep(&scenario_pauli2()).unwrap();
        let text = to_jsonl(&r, &meta()).unwrap();
        let (back, _) = parse_jsonl(&text).unwrap();
        for (q, rec) in &r.fits {
            assert_eq!(back.fits[q].fit.map(|f| f.slope.to_bits()), rec.fit.map(|f| f.slope.to_bits()));
        }
        let rows = parse_csv(&to_csv(&r, &meta())).unwrap();
        let slope = rows.iter().find(|x| x.name == "inverse-eig-min.slope").unwrap().value;
        assert_eq!(slope.to_bits(), r.fits[&Quantity::InverseEigMin].fit.unwrap().slope.to_bits());
    }

    #[test]
    fn deterministic_modulo_timestamp() {
        let a = to_jsonl(&run_sweep(&scenario_ancilla_bell()).unwrap(), &Metadata::now()).unwrap();
        let b = to_jsonl(
            &run_sweep(&scenario_ancilla_bell()).unwrap(),
            &Metadata {
                timestamp_unix: 0,
                ..Metadata::now()
            },
        )
        .unwrap();
        assert_ne!(a, b);
        assert_eq!(without_timestamp(&a), without_timestamp(&b));
    }

    #[test]
    fn malformed_input_rejected() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\npoint,1,x,0,0\n")).is_err());
        assert!(parse_jsonl("{\"record\":\"point\"}").is_err());
        assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn write_failure_is_io_error() {
        let r = run_sweep(&scenario_pauli2()).unwrap();
        let err = emit_report(&r, ReportFormat::Jsonl, Path::new("/nonexistent-dir/x.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
