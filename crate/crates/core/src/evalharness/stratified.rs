use std::collections::HashSet;

use nalgebra::DVector;

use super::{accumulate, score_indices, EvalSet};
use crate::dataset::{Condition, DigitLabel, NoiseType};
use crate::readout::{ReadoutModel, SolverOptions};
use crate::{Error, Result};

/// One grid cell: WSR and, when a baseline was run, the gain over it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub wsr: f64,
    pub gain: Option<f64>,
}

/// WSR grid indexed by (SNR row, noise column) with AVG margins.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub snrs: Vec<f64>,
    pub noises: Vec<NoiseType>,
    pub cells: Vec<Vec<Cell>>,
    pub row_avg: Vec<Cell>,
    pub col_avg: Vec<Cell>,
    pub overall: Cell,
}

fn mean_cell(cells: &[Cell]) -> Cell {
    let n = cells.len() as f64;
    let wsr = cells.iter().map(|c| c.wsr).sum::<f64>() / n;
    let gain = cells.iter().map(|c| c.gain).sum::<Option<f64>>().map(|g| g / n);
    Cell { wsr, gain }
}

impl ConditionReport {
    pub fn new(
        snrs: Vec<f64>,
        noises: Vec<NoiseType>,
        total: &[Vec<f64>],
        baseline: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        if total.len() != snrs.len() || total.iter().any(|r| r.len() != noises.len()) {
            return Err(Error::DimensionMismatch("grid shape does not match its axes".into()));
        }
        if let Some(b) = baseline {
            if b.len() != total.len() || b.iter().zip(total).any(|(x, y)| x.len() != y.len()) {
                return Err(Error::DimensionMismatch("baseline grid shape differs".into()));
            }
        }
        let cells: Vec<Vec<Cell>> = total
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter().enumerate().map(|(c, &wsr)| Cell { wsr, gain: baseline.map(|b| wsr - b[r][c]) }).collect()
            })
            .collect();
        let row_avg = cells.iter().map(|r| mean_cell(r)).collect();
        let col_avg = (0..noises.len()).map(|c| mean_cell(&cells.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
        let overall = mean_cell(&cells.iter().flatten().copied().collect::<Vec<_>>());
        Ok(Self { snrs, noises, cells, row_avg, col_avg, overall })
    }

    /// Recomputes every margin from the cells and compares exactly.
    pub fn margins_consistent(&self) -> bool {
        let base: Option<Vec<Vec<f64>>> =
            self.cells.iter().map(|r| r.iter().map(|c| c.gain.map(|g| c.wsr - g)).collect()).collect();
        let total: Vec<Vec<f64>> = self.cells.iter().map(|r| r.iter().map(|c| c.wsr).collect()).collect();
        let again = Self::new(self.snrs.clone(), self.noises.clone(), &total, base.as_deref());
        match again {
            Ok(r) => r.row_avg == self.row_avg && r.col_avg == self.col_avg && r.overall == self.overall,
            Err(_) => false,
        }
    }
}

fn in_cell(cond: &Condition, snr: f64, noise: NoiseType) -> bool {
    if snr.is_infinite() {
        cond.is_clean()
    } else {
        !cond.is_clean() && cond.noise_type == noise && cond.snr_db == snr
    }
}

/// Trains once on `train` and scores `test` clips per grid cell. Clean clips
/// fill the infinite-SNR row of every column.
pub fn evaluate_grid(
    set: &EvalSet,
    labels: &[DigitLabel],
    train: &[usize],
    test: &[usize],
    snrs: &[f64],
    noises: &[NoiseType],
    options: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    if labels.len() != set.len() {
        return Err(Error::DimensionMismatch("one label per clip required".into()));
    }
    let train_ids: HashSet<&str> = train.iter().map(|&i| set.clip_ids[i].as_str()).collect();
    if let Some(&i) = test.iter().find(|&&i| train_ids.contains(set.clip_ids[i].as_str())) {
        return Err(Error::ClipOverlap(set.clip_ids[i].clone()));
    }
    options.validate()?;
    let acc = accumulate(set, train, options.bias)?;
    let model = ReadoutModel {
        w: acc.solve(options)?,
        options: *options,
        train_mask: 0,
        node_code: 0,
        filter: crate::filterbank::FilterKind::SpectroReal,
    };
    let sums: Vec<DVector<f64>> = set.blocks.iter().map(|b| b.column_sum()).collect();
    snrs.iter()
        .map(|&snr| {
            noises
                .iter()
                .map(|&noise| {
                    let members: Vec<usize> =
                        test.iter().copied().filter(|&i| in_cell(&labels[i].condition, snr, noise)).collect();
                    if members.is_empty() {
                        return Err(Error::EmptyCell(format!("snr {snr} dB, noise {noise}")));
                    }
                    Ok(score_indices(&model, set, &sums, &members)?.wsr)
                })
                .collect()
        })
        .collect()
}

/// Full report; with a baseline set every cell also carries its gain.
#[allow(clippy::too_many_arguments)]
pub fn stratified_report(
    total: &EvalSet,
    baseline: Option<&EvalSet>,
    labels: &[DigitLabel],
    train: &[usize],
    test: &[usize],
    snrs: &[f64],
    noises: &[NoiseType],
    options: &SolverOptions,
) -> Result<ConditionReport> {
    let grid = evaluate_grid(total, labels, train, test, snrs, noises, options)?;
    let base = baseline.map(|b| evaluate_grid(b, labels, train, test, snrs, noises, options)).transpose()?;
    ConditionReport::new(snrs.to_vec(), noises.to_vec(), &grid, base.as_deref())
}

/// Takes, for each `(condition, count)` quota, the first `count` candidates
/// in manifest order carrying that condition.
pub fn select_by_counts(
    labels: &[DigitLabel],
    candidates: &[usize],
    quotas: &[(Condition, usize)],
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (cond, count) in quotas {
        let picked: Vec<usize> =
            candidates.iter().copied().filter(|&i| labels[i].condition == *cond).take(*count).collect();
        if picked.len() < *count {
            return Err(Error::InvalidArgument(format!(
                "only {} clips with condition {}/{} available, {count} requested",
                picked.len(),
                cond.noise_type,
                cond.snr_db
            )));
        }
        out.extend(picked);
    }
    out.sort_unstable();
    Ok(out)
}
