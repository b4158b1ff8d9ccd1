//! Report files.
//!
//! `write_report` emits, under `<out>/report/`:
//!
//! * `results.json`: the full [`MetricsReport`], floats with 17 significant digits;
//! * `summary.txt`: a human-readable table of per-split accuracies and audits;
//! * `metrics.txt`: the same numbers as flat `key value` lines;
//! * `lambda/seed<S>_<model>.csv`: columns `group_id,n,lambda`;
//! * `te_d_loss_seed<S>.csv`: columns `epoch,L_con,L_ce,L_ce_conf,R,total`;
//! * `modal_by_group_seed<S>.csv`: columns `group_id,train_mode,conf_head_mode,main_mode`.
//!
//! Text and CSV files start with a format-version line; JSON files carry a
//! `format_version` field.

use crate::layout::OutputLayout;
use crate::pipeline::{
    GroupLambda, LossRow, MetricsReport, ModelMetrics, SeedOutcome, SeedReport, StageTiming, TE_D,
    TE_D_CONF_HEAD, REPORT_FORMAT_VERSION,
};
use crate::{read_file, write_file, HarnessError, Result};
use netcore::fmt_f64;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub const CSV_FORMAT_VERSION: u32 = 1;
pub const TEXT_FORMAT_VERSION: u32 = 1;

/// Header of the TE-D loss CSV.
pub const LOSS_COLUMNS: &str = "epoch,L_con,L_ce,L_ce_conf,R,total";
pub const LAMBDA_COLUMNS: &str = "group_id,n,lambda";
pub const MODAL_COLUMNS: &str = "group_id,train_mode,conf_head_mode,main_mode";

/// Marker written in place of λ for a degenerate group.
const DEGENERATE: &str = "degenerate";
/// Marker for a group with no samples.
const NONE: &str = "none";

/// Pretty JSON whose floats carry 17 significant digits.
struct PreciseFormatter(PrettyFormatter<'static>);

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| HarnessError::Parse(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| HarnessError::Parse(e.to_string()))
}

fn from_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| HarnessError::Corrupt { path: path.display().to_string(), reason: e.to_string() })
}

fn check_version(found: u32, expected: u32, what: &str) -> Result<()> {
    if found != expected {
        return Err(HarnessError::UnsupportedVersion { what: what.into(), found, expected });
    }
    Ok(())
}

pub fn write_results_json(report: &MetricsReport, path: &Path) -> Result<()> {
    write_file(path, &to_json(report)?)
}

pub fn read_results_json(path: &Path) -> Result<MetricsReport> {
    let report: MetricsReport = from_json(&read_file(path)?, path)?;
    check_version(report.format_version, REPORT_FORMAT_VERSION, "results")?;
    Ok(report)
}

/// Per-seed audit file: `{"format_version": 1, "outcome": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
struct AuditFile {
    format_version: u32,
    outcome: SeedOutcome,
}

pub fn write_seed_audit(outcome: &SeedOutcome, path: &Path) -> Result<()> {
    write_file(path, &to_json(&AuditFile { format_version: REPORT_FORMAT_VERSION, outcome: outcome.clone() })?)
}

pub fn read_seed_audit(path: &Path) -> Result<SeedOutcome> {
    let f: AuditFile = from_json(&read_file(path)?, path)?;
    check_version(f.format_version, REPORT_FORMAT_VERSION, "audit")?;
    Ok(f.outcome)
}

fn csv_header(columns: &str) -> String {
    format!("format_version,{CSV_FORMAT_VERSION}\n{columns}\n")
}

pub fn lambda_csv(rows: &[GroupLambda]) -> String {
    let mut s = csv_header(LAMBDA_COLUMNS);
    for r in rows {
        let v = r.lambda.map_or_else(|| DEGENERATE.to_string(), fmt_f64);
        let _ = writeln!(s, "{},{},{}", r.group_id, r.n, v);
    }
    s
}

pub fn loss_csv(rows: &[LossRow]) -> String {
    let mut s = csv_header(LOSS_COLUMNS);
    for r in rows {
        let vals: Vec<String> = r.values().iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(s, "{},{}", r.epoch, vals.join(","));
    }
    s
}

fn mode_str(m: Option<usize>) -> String {
    m.map_or_else(|| NONE.to_string(), |c| c.to_string())
}

/// Modal class per group: train labels, confounder head and TE-D main head on ood.
pub fn modal_csv(seed: &SeedReport) -> Option<String> {
    let conf = seed.model(TE_D_CONF_HEAD)?;
    let main = seed.model(TE_D)?;
    let mut s = csv_header(MODAL_COLUMNS);
    for (g, train) in seed.train_modal_labels.iter().enumerate() {
        let c = conf.ood_modal_by_group.get(g).copied().flatten();
        let m = main.ood_modal_by_group.get(g).copied().flatten();
        let _ = writeln!(s, "{g},{},{},{}", mode_str(*train), mode_str(c), mode_str(m));
    }
    Some(s)
}

/// Splits CSV text into data rows after checking the version line and header.
fn csv_rows<'a>(text: &'a str, columns: &str, path: &Path) -> Result<Vec<Vec<&'a str>>> {
    let corrupt = |reason: String| HarnessError::Corrupt { path: path.display().to_string(), reason };
    let mut lines = text.lines();
    let version = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
    let found: u32 = version
        .strip_prefix("format_version,")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(format!("bad version line '{version}'")))?;
    check_version(found, CSV_FORMAT_VERSION, "csv")?;
    let header = lines.next().ok_or_else(|| corrupt("missing header".into()))?;
    if header != columns {
        return Err(corrupt(format!("expected header '{columns}', found '{header}'")));
    }
    let width = columns.split(',').count();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() == width {
                Ok(f)
            } else {
                Err(corrupt(format!("row '{l}' has {} fields, expected {width}", f.len())))
            }
        })
        .collect()
}

fn parse<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T> {
    s.parse().map_err(|_| HarnessError::Corrupt { path: path.display().to_string(), reason: format!("bad value '{s}'") })
}

pub fn read_lambda_csv(path: &Path) -> Result<Vec<GroupLambda>> {
    let text = read_file(path)?;
    csv_rows(&text, LAMBDA_COLUMNS, path)?
        .into_iter()
        .map(|f| {
            let lambda = if f[2] == DEGENERATE { None } else { Some(parse(f[2], path)?) };
            Ok(GroupLambda { group_id: parse(f[0], path)?, n: parse(f[1], path)?, lambda })
        })
        .collect()
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRow>> {
    let text = read_file(path)?;
    csv_rows(&text, LOSS_COLUMNS, path)?
        .into_iter()
        .map(|f| {
            Ok(LossRow {
                epoch: parse(f[0], path)?,
                l_con: parse(f[1], path)?,
                l_ce: parse(f[2], path)?,
                l_ce_conf: parse(f[3], path)?,
                r: parse(f[4], path)?,
                total: parse(f[5], path)?,
            })
        })
        .collect()
}

/// Splits reported in the summary table, with the accessor for each.
const SPLITS: [(&str, &str); 4] =
    [("train", "train_accuracy"), ("id", "id_accuracy"), ("ood", "ood_accuracy"), ("cf", "cf_accuracy")];

/// Audit columns of the summary's second table.
const AUDITS: [&str; 5] = ["necessity_delta", "lambda_mean", "ood_prediction_entropy", "modal_matches", "added_param_count"];

pub fn summary_text(report: &MetricsReport) -> String {
    let mut s = String::new();
    let ok = report.successful().count();
    let _ = writeln!(s, "format_version {TEXT_FORMAT_VERSION}");
    let _ = writeln!(s, "seeds: {ok} of {} succeeded", report.seeds.len());
    for o in report.seeds.iter().filter(|o| o.report.is_none()) {
        let _ = writeln!(s, "  seed {} failed: {}", o.seed, o.error.as_deref().unwrap_or("unknown error"));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "accuracy (mean ± std over seeds)");
    let _ = writeln!(s, "{:<6} {:<16} {:>8} {:>8}", "split", "model", "mean", "std");
    for (split, stat) in SPLITS {
        for a in &report.aggregate {
            if let Some(v) = a.stats.get(stat) {
                let _ = writeln!(s, "{split:<6} {:<16} {:>8.4} {:>8.4}", a.model, v.mean, v.std);
            }
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "audits (mean over seeds)");
    let _ = write!(s, "{:<16}", "model");
    for a in AUDITS {
        let _ = write!(s, " {a:>22}");
    }
    let _ = writeln!(s);
    for a in &report.aggregate {
        let _ = write!(s, "{:<16}", a.model);
        for stat in AUDITS {
            match a.stats.get(stat) {
                Some(v) => {
                    let _ = write!(s, " {:>22.4}", v.mean);
                }
                None => {
                    let _ = write!(s, " {:>22}", "-");
                }
            }
        }
        let _ = writeln!(s);
    }
    if !report.pooled_bootstrap.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "paired bootstrap on pooled ood correctness");
        for b in &report.pooled_bootstrap {
            let _ = writeln!(
                s,
                "{} vs {}: gain {:+.4}, p = {:.5} ({} resamples)",
                b.method, b.reference, b.ood_gain, b.p_value, b.resamples
            );
        }
    }
    s
}

fn flat_model(s: &mut String, prefix: &str, m: &ModelMetrics) {
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{prefix}.{}.{k} {v}", m.model);
    };
    kv("train_accuracy", fmt_f64(m.train_accuracy));
    kv("id_accuracy", fmt_f64(m.id_accuracy));
    kv("ood_accuracy", fmt_f64(m.ood_accuracy));
    kv("cf_accuracy", fmt_f64(m.cf_accuracy));
    kv("necessity_delta", fmt_f64(m.necessity_delta));
    for l in &m.lambda {
        kv(&format!("lambda.group{}", l.group_id), l.lambda.map_or_else(|| DEGENERATE.into(), fmt_f64));
    }
    kv("ood_prediction_entropy", fmt_f64(m.ood_prediction_entropy));
    kv("modal_matches", m.modal_matches.to_string());
    kv("param_count", m.param_count.to_string());
    kv("trainable_param_count", m.trainable_param_count.to_string());
    kv("added_param_count", m.added_param_count.to_string());
}

/// Every reported number as one `key value` line.
pub fn flat_metrics_text(report: &MetricsReport) -> String {
    let mut s = format!("format_version {TEXT_FORMAT_VERSION}\n");
    for a in &report.aggregate {
        for (stat, v) in &a.stats {
            let _ = writeln!(s, "aggregate.{}.{stat}.mean {}", a.model, fmt_f64(v.mean));
            let _ = writeln!(s, "aggregate.{}.{stat}.std {}", a.model, fmt_f64(v.std));
            let _ = writeln!(s, "aggregate.{}.{stat}.n {}", a.model, v.n);
        }
    }
    for b in &report.pooled_bootstrap {
        let _ = writeln!(s, "pooled_bootstrap.{}.ood_gain {}", b.method, fmt_f64(b.ood_gain));
        let _ = writeln!(s, "pooled_bootstrap.{}.p_value {}", b.method, fmt_f64(b.p_value));
    }
    for o in &report.seeds {
        let prefix = format!("seed{}", o.seed);
        match &o.report {
            None => {
                let _ = writeln!(s, "{prefix}.status failed");
            }
            Some(r) => {
                let _ = writeln!(s, "{prefix}.status ok");
                for m in &r.models {
                    flat_model(&mut s, &prefix, m);
                }
                for p in &r.probes {
                    let _ = writeln!(s, "{prefix}.probe.{}.accuracy {}", p.source, fmt_f64(p.accuracy));
                    let _ = writeln!(s, "{prefix}.probe.{}.prediction_entropy {}", p.source, fmt_f64(p.prediction_entropy));
                }
                for b in &r.bootstrap {
                    let _ = writeln!(s, "{prefix}.bootstrap.{}.p_value {}", b.method, fmt_f64(b.p_value));
                }
            }
        }
    }
    s
}

/// Writes every report file for `report` under `layout`.
pub fn write_report(report: &MetricsReport, layout: &OutputLayout) -> Result<()> {
    write_results_json(report, &layout.results_json())?;
    write_file(&layout.summary(), &summary_text(report))?;
    write_file(&layout.flat_metrics(), &flat_metrics_text(report))?;
    for r in report.successful() {
        for m in &r.models {
            write_file(&layout.lambda_csv(r.seed, &m.model), &lambda_csv(&m.lambda))?;
        }
        if !r.te_d_loss.is_empty() {
            write_file(&layout.loss_csv(r.seed), &loss_csv(&r.te_d_loss))?;
        }
        if let Some(t) = modal_csv(r) {
            write_file(&layout.modal_csv(r.seed), &t)?;
        }
    }
    Ok(())
}

/// Wall-clock timings, kept apart from the deterministic report files.
pub fn write_timings(timings: &[StageTiming], path: &Path) -> Result<()> {
    let mut s = csv_header("seed,stage,seconds");
    for t in timings {
        let _ = writeln!(s, "{},{},{:.3}", t.seed, t.stage, t.seconds);
    }
    write_file(path, &s)
}
