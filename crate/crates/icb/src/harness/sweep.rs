//! Parallel sweep execution with deterministic, incrementally flushed CSV
//! output, plus the two experiment procedures and the label-randomization
//! test.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    csv_row, run_trial, sample_trial_a, sample_trial_b, satisfaction_from_records, trial_seed,
    SweepConfig, TrialOptions, TrialRecord, TrialSpec, CSV_HEADER,
};
use crate::bound::{icb, BoundConfig};
use crate::datasets::{make_binary_task, randomize_labels, RawDataset};
use crate::dynamics::{fit, predict, predict_train};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::infometrics::{estimate_mi, MiOptions};
use crate::kernels::{gram_cross, gram_train, Activation, NetConfig, TrainTime};
use crate::rng::mix_in;

/// Aggregate written alongside a sweep CSV as `<out>.summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub n_rows: usize,
    pub n_errors: usize,
    pub n_valid: usize,
    /// Satisfaction rate over valid rows, absent when nothing qualified.
    pub satisfaction_pct: Option<f64>,
    /// Total wall time of the sweep; lives here, never in the CSV body.
    pub wall_time_s: f64,
}

/// Executes trials on a bounded worker pool and writes rows in trial order,
/// flushing incrementally as the next-in-order results arrive.  Output
/// bytes depend only on the specs and options, not on the worker count.
pub fn run_sweep(
    raw: &RawDataset,
    specs: &[TrialSpec],
    opts: &TrialOptions,
    workers: usize,
    out_path: &Path,
) -> Result<SweepSummary> {
    let started = Instant::now();
    if specs.is_empty() {
        return Err(Error::EmptyInput("sweep has no trials".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let mut writer = csv::Writer::from_path(out_path)?;
    writer.write_record(CSV_HEADER)?;

    let (tx, rx) = mpsc::channel::<(usize, Vec<TrialRecord>)>();
    let mut all_records: Vec<TrialRecord> = Vec::new();
    let mut io_result: Result<()> = Ok(());
    pool.in_place_scope(|scope| {
        scope.spawn(move |_| {
            specs
                .par_iter()
                .enumerate()
                .for_each_with(tx, |tx, (i, spec)| {
                    let recs = run_trial(raw, spec, opts);
                    // the receiver hanging up is handled by the drain loop
                    let _ = tx.send((i, recs));
                });
        });

        let mut pending: BTreeMap<usize, Vec<TrialRecord>> = BTreeMap::new();
        let mut next = 0usize;
        let mut write_ready = |pending: &mut BTreeMap<usize, Vec<TrialRecord>>,
                               next: &mut usize|
         -> Result<()> {
            while let Some(recs) = pending.remove(next) {
                for rec in &recs {
                    writer.write_record(csv_row(rec))?;
                }
                writer.flush()?;
                all_records.extend(recs);
                *next += 1;
            }
            Ok(())
        };
        for (i, recs) in rx.iter().take(specs.len()) {
            pending.insert(i, recs);
            if io_result.is_ok() {
                io_result = write_ready(&mut pending, &mut next);
            }
        }
    });
    io_result?;

    let n_rows = all_records.len();
    let n_errors = all_records.iter().filter(|r| r.error.is_some()).count();
    let n_valid = all_records
        .iter()
        .filter(|r| r.error.is_none() && r.valid)
        .count();
    let summary = SweepSummary {
        n_rows,
        n_errors,
        n_valid,
        satisfaction_pct: satisfaction_from_records(&all_records),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let footer_path = format!("{}.summary.json", out_path.display());
    std::fs::write(&footer_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn dataset_label(raw: &RawDataset) -> String {
    raw.meta.source.clone()
}

/// Sweep A: the nine consecutive-digit tasks, each trial drawing depth,
/// activation, ridge, and training-set size, evaluated along the finite
/// time grid.
pub fn exp_a(raw: &RawDataset, cfg: &SweepConfig, out_path: &Path) -> Result<SweepSummary> {
    cfg.validate()?;
    if raw.meta.n_classes < 10 {
        return Err(Error::InvalidConfig(format!(
            "the nine consecutive-class tasks need 10 classes, dataset has {}",
            raw.meta.n_classes
        )));
    }
    let times: Vec<TrainTime> = cfg.time_grid.iter().map(|t| TrainTime::Finite(*t)).collect();
    let label = dataset_label(raw);
    let mut specs = Vec::with_capacity(9 * cfg.n_seeds as usize);
    for task_idx in 0..9u64 {
        for seed_idx in 0..cfg.n_seeds {
            let trial_index = task_idx * cfg.n_seeds + seed_idx;
            let sampled = sample_trial_a(cfg, trial_index);
            specs.push(TrialSpec {
                trial_index,
                seed_index: seed_idx,
                dataset: label.clone(),
                class_a: task_idx as u8,
                class_b: task_idx as u8 + 1,
                net: sampled.net,
                n_trn: sampled.n_trn,
                n_tst: cfg.n_tst,
                times: times.clone(),
                master_seed: cfg.master_seed,
            });
        }
    }
    run_sweep(raw, &specs, &cfg.trial_options(), cfg.workers, out_path)
}

/// Sweep B: all 45 class pairs at t = ∞ with fixed training-set size and
/// λ drawn uniformly from (0, 2).
pub fn exp_b(raw: &RawDataset, cfg: &SweepConfig, out_path: &Path) -> Result<SweepSummary> {
    cfg.validate()?;
    if raw.meta.n_classes < 10 {
        return Err(Error::InvalidConfig(format!(
            "the 45 pair tasks need 10 classes, dataset has {}",
            raw.meta.n_classes
        )));
    }
    let label = dataset_label(raw);
    let mut tasks = Vec::new();
    for a in 0..10u8 {
        for b in (a + 1)..10u8 {
            tasks.push((a, b));
        }
    }
    debug_assert_eq!(tasks.len(), 45);
    let mut specs = Vec::with_capacity(tasks.len() * cfg.n_seeds as usize);
    for (task_idx, (a, b)) in tasks.iter().enumerate() {
        for seed_idx in 0..cfg.n_seeds {
            let trial_index = task_idx as u64 * cfg.n_seeds + seed_idx;
            let sampled = sample_trial_b(cfg, trial_index);
            specs.push(TrialSpec {
                trial_index,
                seed_index: seed_idx,
                dataset: label.clone(),
                class_a: *a,
                class_b: *b,
                net: sampled.net,
                n_trn: sampled.n_trn,
                n_tst: cfg.n_tst,
                times: vec![TrainTime::Infinite],
                master_seed: cfg.master_seed,
            });
        }
    }
    run_sweep(raw, &specs, &cfg.trial_options(), cfg.workers, out_path)
}

/// One row of the label-randomization table.
#[derive(Debug, Clone, PartialEq)]
pub struct RandRow {
    pub lambda: f64,
    /// "natural" or "random".
    pub labels: &'static str,
    pub train_acc: f64,
    pub test_acc: f64,
    pub ge_clean: f64,
    pub i_lb_nats: f64,
    pub i_ub_nats: f64,
    pub valid: bool,
    pub icb_lb: f64,
    pub icb_ub: f64,
}

/// Trains a depth-2 ReLU ensemble to convergence on natural and randomized
/// labels for each ridge value, reporting mutual-information bounds and the
/// resulting ICB for both.  The split, the randomized labels, and the Gram
/// matrices are shared across ridge values.
#[allow(clippy::too_many_arguments)]
pub fn randomization_test(
    raw: &RawDataset,
    task: (u8, u8),
    lambdas: &[f64],
    n_trn: usize,
    n_tst: usize,
    master_seed: u64,
    opts: &TrialOptions,
    out_path: Option<&Path>,
) -> Result<Vec<RandRow>> {
    if lambdas.is_empty() {
        return Err(Error::EmptyInput("randomization test needs at least one lambda".into()));
    }
    if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidConfig(
            "lambda grid entries must be finite and non-negative".into(),
        ));
    }
    let base_cfg = NetConfig {
        depth_l: 2,
        time_t: TrainTime::Infinite,
        ..NetConfig::for_activation(Activation::Relu)
    };
    let ds = make_binary_task(raw, task.0, task.1, n_trn, n_tst, master_seed)?;
    let ds_rand = randomize_labels(&ds, master_seed);

    // kernels do not depend on the ridge, so one Gram pair serves all rows
    let gram = gram_train(&ds.x_trn, &base_cfg)?;
    let cross = gram_cross(&ds.x_tst, &ds.x_trn, &base_cfg)?;

    let bound_cfg = BoundConfig { delta: opts.delta };
    let mut rows = Vec::with_capacity(2 * lambdas.len());
    for (li, lambda) in lambdas.iter().enumerate() {
        for (labels, y_trn, y_tst) in [
            ("natural", &ds.y_trn, &ds.y_tst),
            ("random", &ds_rand.y_trn, &ds_rand.y_tst),
        ] {
            let cfg = NetConfig {
                lambda: *lambda,
                ..base_cfg
            };
            let ens = fit(&gram, y_trn, &cfg)?;
            let pred_train = predict_train(&ens, &gram)?;
            let pred_test = predict(&ens, &cross)?;
            let mi_seed = mix_in(
                trial_seed(master_seed, li as u64),
                if labels == "natural" { 0 } else { 1 },
            );
            let mi = estimate_mi(
                &pred_train,
                mi_seed,
                MiOptions {
                    mc_rounds: opts.mc_rounds,
                    mean_plug_in: false,
                },
            )?;
            let train_acc = accuracy(&pred_train.mean, y_trn)?;
            let test_acc = accuracy(&pred_test.mean, y_tst)?;
            rows.push(RandRow {
                lambda: *lambda,
                labels,
                train_acc,
                test_acc,
                ge_clean: train_acc - test_acc,
                i_lb_nats: mi.i_lb_nats,
                i_ub_nats: mi.i_ub_nats,
                valid: mi.valid,
                icb_lb: icb(mi.i_lb_nats, n_trn, bound_cfg)?,
                icb_ub: icb(mi.i_ub_nats, n_trn, bound_cfg)?,
            });
        }
    }
    if let Some(path) = out_path {
        write_rand_csv(&rows, path)?;
    }
    Ok(rows)
}

/// Column order of the randomization-test CSV.
pub const RAND_CSV_HEADER: [&str; 10] = [
    "lambda",
    "labels",
    "train_acc",
    "test_acc",
    "ge_clean",
    "i_lb_nats",
    "i_ub_nats",
    "valid",
    "icb_lb",
    "icb_ub",
];

pub fn write_rand_csv(rows: &[RandRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RAND_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{}", r.lambda),
            r.labels.to_string(),
            format!("{}", r.train_acc),
            format!("{}", r.test_acc),
            format!("{}", r.ge_clean),
            format!("{}", r.i_lb_nats),
            format!("{}", r.i_ub_nats),
            r.valid.to_string(),
            format!("{}", r.icb_lb),
            format!("{}", r.icb_ub),
        ])?;
    }
    w.flush()?;
    Ok(())
}
