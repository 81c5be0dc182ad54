//! Rank-correlation report: how well the bound (and a training-accuracy
//! baseline) orders the observed generalization errors, per task and in
//! aggregate.

use std::path::Path;

use super::{mean_in_order, TrialRecord};
use crate::error::{Error, Result};
use crate::eval::{kendall_tau, satisfaction_rate};

/// Groups smaller than this have too little data for the normal
/// approximation behind the τ p-value; their cells are left empty.
pub const MIN_RANK_GROUP: usize = 10;

/// Significance threshold: τ entries with p above this are discarded.
const P_CUTOFF: f64 = 0.05;

/// One row of the ranking report.  `None` cells were discarded: the group
/// was too small, the ranking was degenerate, or p exceeded 0.05.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    /// "avb" task label, or "row_average" / "overall" for the aggregates.
    pub task: String,
    pub n_valid: usize,
    /// Bound-satisfaction percentage over this row's records.
    pub satisfaction_pct: Option<f64>,
    pub tau_base_clean: Option<f64>,
    pub tau_base_awgn: Option<f64>,
    pub tau_base_fgsm: Option<f64>,
    pub tau_icb_clean: Option<f64>,
    pub tau_icb_awgn: Option<f64>,
    pub tau_icb_fgsm: Option<f64>,
}

fn usable(r: &TrialRecord) -> bool {
    r.error.is_none()
        && r.valid
        && r.train_acc.is_finite()
        && r.icb_ub.is_finite()
        && r.ge_clean.is_finite()
        && r.ge_awgn.is_finite()
        && r.ge_fgsm.is_finite()
}

/// τ(predictor, response) gated on significance; degenerate rankings and
/// insignificant correlations collapse to `None`.
fn gated_tau(predictor: &[f64], response: &[f64]) -> Option<f64> {
    match kendall_tau(predictor, response) {
        Ok(r) if r.p_value <= P_CUTOFF => Some(r.tau),
        Ok(_) => None,
        Err(_) => None,
    }
}

fn row_from_group(task: String, records: &[&TrialRecord]) -> RankRow {
    let n_valid = records.len();
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.ge_clean, r.icb_ub)).collect();
    let satisfaction_pct = satisfaction_rate(&pairs).ok();
    let mut row = RankRow {
        task,
        n_valid,
        satisfaction_pct,
        tau_base_clean: None,
        tau_base_awgn: None,
        tau_base_fgsm: None,
        tau_icb_clean: None,
        tau_icb_awgn: None,
        tau_icb_fgsm: None,
    };
    if n_valid < MIN_RANK_GROUP {
        return row;
    }
    let col = |f: fn(&TrialRecord) -> f64| -> Vec<f64> {
        records.iter().map(|r| f(r)).collect()
    };
    let base = col(|r| r.train_acc);
    let icb = col(|r| r.icb_ub);
    let clean = col(|r| r.ge_clean);
    let awgn = col(|r| r.ge_awgn);
    let fgsm = col(|r| r.ge_fgsm);
    row.tau_base_clean = gated_tau(&base, &clean);
    row.tau_base_awgn = gated_tau(&base, &awgn);
    row.tau_base_fgsm = gated_tau(&base, &fgsm);
    row.tau_icb_clean = gated_tau(&icb, &clean);
    row.tau_icb_awgn = gated_tau(&icb, &awgn);
    row.tau_icb_fgsm = gated_tau(&icb, &fgsm);
    row
}

fn average_cell(rows: &[RankRow], get: fn(&RankRow) -> Option<f64>) -> Option<f64> {
    let values: Vec<f64> = rows.iter().filter_map(get).collect();
    if values.is_empty() {
        None
    } else {
        Some(mean_in_order(&values))
    }
}

/// Builds the ranking report: one row per task (in class order), then a
/// "row_average" row (mean of surviving per-task cells) and an "overall"
/// row (τ over all usable records pooled).
pub fn rank_records(records: &[TrialRecord]) -> Result<Vec<RankRow>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("rank needs at least one record".into()));
    }
    let usable_records: Vec<&TrialRecord> = records.iter().filter(|r| usable(r)).collect();

    let mut groups: std::collections::BTreeMap<(u8, u8), Vec<&TrialRecord>> =
        std::collections::BTreeMap::new();
    for r in &usable_records {
        groups.entry((r.class_a, r.class_b)).or_default().push(r);
    }

    let mut rows: Vec<RankRow> = groups
        .iter()
        .map(|((a, b), recs)| row_from_group(format!("{a}v{b}"), recs))
        .collect();

    let task_rows = rows.clone();
    rows.push(RankRow {
        task: "row_average".into(),
        n_valid: usable_records.len(),
        satisfaction_pct: average_cell(&task_rows, |r| r.satisfaction_pct),
        tau_base_clean: average_cell(&task_rows, |r| r.tau_base_clean),
        tau_base_awgn: average_cell(&task_rows, |r| r.tau_base_awgn),
        tau_base_fgsm: average_cell(&task_rows, |r| r.tau_base_fgsm),
        tau_icb_clean: average_cell(&task_rows, |r| r.tau_icb_clean),
        tau_icb_awgn: average_cell(&task_rows, |r| r.tau_icb_awgn),
        tau_icb_fgsm: average_cell(&task_rows, |r| r.tau_icb_fgsm),
    });

    rows.push(row_from_group("overall".into(), &usable_records));

    Ok(rows)
}

/// Column order of the ranking-report CSV.
pub const RANK_CSV_HEADER: [&str; 9] = [
    "task",
    "n_valid",
    "satisfaction_pct",
    "tau_base_clean",
    "tau_base_awgn",
    "tau_base_fgsm",
    "tau_icb_clean",
    "tau_icb_awgn",
    "tau_icb_fgsm",
];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_rank_csv(rows: &[RankRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RANK_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.n_valid.to_string(),
            opt_field(r.satisfaction_pct),
            opt_field(r.tau_base_clean),
            opt_field(r.tau_base_awgn),
            opt_field(r.tau_base_fgsm),
            opt_field(r.tau_icb_clean),
            opt_field(r.tau_icb_awgn),
            opt_field(r.tau_icb_fgsm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sweep CSV, ranks it, and writes the report.
pub fn rank_from_csv(records_path: &Path, out_path: &Path) -> Result<Vec<RankRow>> {
    let records = super::read_records_csv(records_path)?;
    let rows = rank_records(&records)?;
    write_rank_csv(&rows, out_path)?;
    Ok(rows)
}
