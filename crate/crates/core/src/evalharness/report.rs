//! CSV and Markdown renderings. Numbers in CSV use the shortest exact
//! decimal form, so files are reproducible byte for byte.

use std::fmt::Write as _;

use super::folds::subset_list;
use super::{ConditionReport, CrossValReport, GainReport, ParityRow, SweepPoint};
use crate::readout::Metrics;
use crate::Result;

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per fold.
pub fn cv_csv(r: &CrossValReport) -> Result<String> {
    csv_string(
        &["fold", "n_train", "train_subsets", "test_subsets", "train_wsr", "train_mse", "test_wsr", "test_mse"],
        r.folds.iter().enumerate().map(|(i, f)| {
            vec![
                i.to_string(),
                r.n.to_string(),
                subset_list(&f.fold.train),
                subset_list(&f.fold.test),
                f.train.wsr.to_string(),
                f.train.mse.to_string(),
                f.test.wsr.to_string(),
                f.test.mse.to_string(),
            ]
        }),
    )
}

fn pct(m: &Metrics) -> String {
    format!("{:.1} % ({:.1} %)", m.wsr, m.wsr_std)
}

fn mse(m: &Metrics) -> String {
    format!("{:.4} ({:.1e})", m.mse, m.mse_std)
}

/// Training/testing summary, one line per labelled report.
pub fn cv_markdown(title: &str, rows: &[(&str, &CrossValReport)]) -> String {
    let mut s = format!("## {title}\n\n");
    s.push_str("| Filter | Train WSR (std) | Train MSE (std) | Test WSR (std) | Test MSE (std) | MSE test/train |\n");
    s.push_str("|---|---|---|---|---|---|\n");
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "| {label} | {} | {} | {} | {} | {:.3} |",
            pct(&r.train),
            mse(&r.train),
            pct(&r.test),
            mse(&r.test),
            r.test.overfit_ratio
        );
    }
    s
}

pub fn gain_markdown(rows: &[(&str, &GainReport)]) -> String {
    let mut s = String::from(
        "## Reservoir gain\n\n| Filter | Baseline test WSR | Total test WSR | Gain (points) |\n|---|---|---|---|\n",
    );
    for (label, g) in rows {
        let _ = writeln!(s, "| {label} | {:.1} % | {:.1} % | {:+.1} |", g.baseline.wsr, g.total.wsr, g.gain_points);
    }
    s
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "clean".into()
    } else {
        format!("{snr}")
    }
}

fn cell_text(c: &super::Cell) -> String {
    match c.gain {
        Some(g) => format!("{:.2} ({:+.2})", c.wsr, g),
        None => format!("{:.2}", c.wsr),
    }
}

pub fn condition_markdown(title: &str, r: &ConditionReport) -> String {
    let mut s = format!("## {title}\n\n| SNR (dB) |");
    for n in &r.noises {
        let _ = write!(s, " {n} |");
    }
    s.push_str(" AVG |\n|---|");
    for _ in 0..=r.noises.len() {
        s.push_str("---|");
    }
    s.push('\n');
    for (i, row) in r.cells.iter().enumerate() {
        let _ = write!(s, "| {} |", snr_label(r.snrs[i]));
        for c in row {
            let _ = write!(s, " {} |", cell_text(c));
        }
        let _ = writeln!(s, " {} |", cell_text(&r.row_avg[i]));
    }
    s.push_str("| AVG |");
    for c in &r.col_avg {
        let _ = write!(s, " {} |", cell_text(c));
    }
    let _ = writeln!(s, " {} |", cell_text(&r.overall));
    s
}

pub fn condition_csv(r: &ConditionReport) -> Result<String> {
    let mut rows = Vec::new();
    for (i, row) in r.cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            rows.push(vec![
                snr_label(r.snrs[i]),
                r.noises[j].to_string(),
                c.wsr.to_string(),
                c.gain.map(|g| g.to_string()).unwrap_or_default(),
            ]);
        }
    }
    csv_string(&["snr_db", "noise", "wsr", "gain"], rows)
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    csv_string(
        &["alpha", "wsr", "wsr_std"],
        points.iter().map(|p| vec![p.alpha.to_string(), p.wsr.to_string(), p.wsr_std.to_string()]),
    )
}

pub fn parity_csv(rows: &[ParityRow]) -> Result<String> {
    csv_string(
        &["alpha", "clip_id", "n_plus", "n_minus", "n_partial", "max_suppressed", "bound"],
        rows.iter().map(|r| {
            vec![
                r.alpha.to_string(),
                r.clip_id.clone(),
                r.n_plus.to_string(),
                r.n_minus.to_string(),
                r.n_partial.to_string(),
                r.max_suppressed.to_string(),
                r.bound.to_string(),
            ]
        }),
    )
}
