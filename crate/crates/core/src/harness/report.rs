//! Report files: per-epoch CSV, summary table, learning-curve SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::grid::GridReport;
use crate::optim::StepDiagnostics;

pub const RUNS_CSV: &str = "runs.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const CURVES_SVG: &str = "curves.svg";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const STEPS_CSV: &str = "steps.csv";

pub const RUNS_CSV_HEADER: &str = "run_id,arm,epoch,train_loss,train_acc,test_acc";

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub runs_csv: PathBuf,
    pub summary: PathBuf,
    pub curves: PathBuf,
    pub results: PathBuf,
    pub steps_csv: Option<PathBuf>,
}

pub fn runs_csv(report: &GridReport) -> String {
    let mut out = String::from(RUNS_CSV_HEADER);
    out.push('\n');
    for r in &report.runs {
        for e in &r.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.run_id, r.arm, e.epoch, e.train_loss, e.train_acc, e.test_acc
            );
        }
    }
    out
}

/// Best and average test accuracy per arm, plus success counts when the runs
/// carry a success flag.
pub fn summary_table(report: &GridReport) -> String {
    let has_success = report.runs.iter().any(|r| r.success.is_some());
    let mut out = String::new();
    let _ = writeln!(out, "{}", report.title);
    let width = report.arms.iter().map(|a| a.len()).max().unwrap_or(0).max(8);
    if has_success {
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>8}  {:>8}  {:>9}", "arm", "runs", "best", "average", "successes");
    } else {
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>8}  {:>8}", "arm", "runs", "best", "average");
    }
    for s in report.summaries() {
        let _ = write!(
            out,
            "{:<width$}  {:>6}  {:>7.2}%  {:>7.2}%",
            s.arm,
            s.runs,
            100.0 * s.best,
            100.0 * s.mean
        );
        if has_success {
            let _ = write!(out, "  {:>4}/{:<4}", s.successes, s.runs);
        }
        out.push('\n');
    }
    if let Some(r) = report.runs.first() {
        let _ = writeln!(out, "\nconfig of {}:", r.run_id);
        out.push_str(&r.config.to_kv());
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Test accuracy against epoch, one polyline per run coloured by arm.
pub fn curves_svg(report: &GridReport) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let max_epoch = report
        .runs
        .iter()
        .map(|r| r.epochs.len())
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let x = |epoch: f64| m + (epoch - 1.0) / (max_epoch - 1.0) * (w - 2.0 * m);
    let y = |acc: f64| h - m - acc.clamp(0.0, 1.0) * (h - 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<title>{}</title>
<rect width="{w}" height="{h}" fill="white"/>
<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>
<text x="{cx}" y="{ty}" text-anchor="middle" font-size="12">epoch</text>
<text x="12" y="{cy}" font-size="12" transform="rotate(-90 12 {cy})" text-anchor="middle">test accuracy</text>"#,
        escape(&report.title),
        b = h - m,
        r = w - m,
        cx = w / 2.0,
        ty = h - 15.0,
        cy = h / 2.0,
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{tick}</text>"#,
            m - 4.0,
            y(tick) + 3.0
        );
    }
    for (i, arm) in report.arms.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            w - m - 90.0,
            m + 14.0 * i as f64,
            escape(arm)
        );
    }
    for r in &report.runs {
        let color = report
            .arms
            .iter()
            .position(|a| *a == r.arm)
            .map_or("gray", |i| PALETTE[i % PALETTE.len()]);
        let points: Vec<String> = r
            .epochs
            .iter()
            .map(|e| format!("{:.2},{:.2}", x(e.epoch as f64), y(e.test_acc)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-opacity="0.6" points="{}"><title>{}</title></polyline>"#,
            points.join(" "),
            escape(&r.run_id)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn results_jsonl(report: &GridReport) -> Result<String> {
    let mut out = String::new();
    for r in &report.runs {
        let line = serde_json::to_string(r).map_err(|e| Error::Consistency(format!("serialize {}: {e}", r.run_id)))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn steps_csv(report: &GridReport) -> Option<String> {
    if report.runs.iter().all(|r| r.step_log.is_empty()) {
        return None;
    }
    let mut out = format!("run_id,{}\n", StepDiagnostics::CSV_HEADER);
    for r in &report.runs {
        for d in &r.step_log {
            let _ = writeln!(out, "{},{}", r.run_id, d.csv_row());
        }
    }
    Some(out)
}

/// Writes the report files into `dir`, creating it if needed.
pub fn emit_report(report: &GridReport, dir: &Path) -> Result<ReportFiles> {
    if report.runs.is_empty() {
        return Err(Error::Argument("cannot emit an empty report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(format!("write {}", path.display()), e))?;
        Ok(path)
    };
    Ok(ReportFiles {
        runs_csv: write(RUNS_CSV, &runs_csv(report))?,
        summary: write(SUMMARY_TXT, &summary_table(report))?,
        curves: write(CURVES_SVG, &curves_svg(report))?,
        results: write(RESULTS_JSONL, &results_jsonl(report)?)?,
        steps_csv: steps_csv(report).map(|s| write(STEPS_CSV, &s)).transpose()?,
    })
}
