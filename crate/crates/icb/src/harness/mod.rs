//! Experiment driver: metaparameter sampling, single-trial execution, sweep
//! orchestration with deterministic CSV output, and rank reports.
//!
//! A *trial* is one (task, seed) draw of metaparameters evaluated at one or
//! more training times; each time point yields one [`TrialRecord`] and one
//! CSV row.  All randomness is derived from the master seed through the
//! crate's seed-derivation scheme, so a sweep is reproducible byte-for-byte
//! regardless of worker count or completion order.  Wall-clock timings are
//! kept out of the CSV body for exactly that reason; they go to the footer
//! sidecar instead.

mod rank;
mod sweep;

pub use rank::{rank_from_csv, rank_records, write_rank_csv, RankRow, MIN_RANK_GROUP};
pub use sweep::{
    exp_a, exp_b, randomization_test, run_sweep, write_rand_csv, RandRow, SweepSummary,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bound::{icb, BoundConfig};
use crate::datasets::{awgn_perturb, make_binary_task, Dataset, RawDataset};
use crate::dynamics::{fit, predict, predict_train, retime};
use crate::error::{Error, Result};
use crate::eval::{eval_summary, fgsm_attack_precomputed};
use crate::infometrics::{estimate_mi, MiOptions};
use crate::kernels::{
    gram_cross, gram_train, kernel_grad_coeffs, Activation, NetConfig, TrainTime,
};
use crate::rng::{derive_seed, mix_in, rng_from, Purpose};
use rand::Rng;

/// Fully describes one trial: the task, the sampled network, the split
/// sizes, and the training times to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSpec {
    /// Global trial number; orders CSV rows and separates random streams.
    pub trial_index: u64,
    /// Which seed repetition this trial belongs to.
    pub seed_index: u64,
    /// Dataset label, echoed into the CSV.
    pub dataset: String,
    pub class_a: u8,
    pub class_b: u8,
    /// Sampled network; its `time_t` is superseded by `times`.
    pub net: NetConfig,
    pub n_trn: usize,
    pub n_tst: usize,
    /// Training times to evaluate; one record per entry.
    pub times: Vec<TrainTime>,
    pub master_seed: u64,
}

/// Evaluation knobs shared by every trial of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialOptions {
    /// Bound failure probability δ.
    pub delta: f64,
    /// Monte-Carlo rounds for the mutual-information estimator.
    pub mc_rounds: usize,
    /// AWGN test-perturbation variance.
    pub awgn_var: f64,
    /// FGSM ℓ∞ perturbation size for inputs in [-1, 1].
    pub fgsm_eps: f64,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            delta: 0.05,
            mc_rounds: 32,
            awgn_var: 0.25,
            fgsm_eps: 4.0 / 255.0,
        }
    }
}

/// One evaluated (trial, time) point; maps 1:1 onto a CSV row.
///
/// When `error` is set the metric fields hold NaN and serialize to empty
/// CSV cells.  `wall_time_s` is carried for programmatic use but is never
/// written into the CSV body, keeping re-runs byte-identical.
///
/// Equality compares the deterministic payload only: floats are compared
/// bitwise (so identical NaN error rows are equal) and `wall_time_s` is
/// ignored, mirroring what the CSV serialization preserves.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub row_index: u64,
    pub trial_index: u64,
    pub seed_index: u64,
    pub dataset: String,
    pub class_a: u8,
    pub class_b: u8,
    pub depth_l: u32,
    pub activation: Activation,
    pub w_var: f64,
    pub b_var: f64,
    pub lambda: f64,
    pub eta: f64,
    pub time_t: TrainTime,
    pub readout_bias: bool,
    pub n_trn: usize,
    pub n_tst: usize,
    pub master_seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub ge_clean: f64,
    pub ge_awgn: f64,
    pub ge_fgsm: f64,
    pub ge_mse: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub i_lb_nats: f64,
    pub i_ub_nats: f64,
    pub valid: bool,
    pub icb_lb: f64,
    pub icb_ub: f64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl PartialEq for TrialRecord {
    fn eq(&self, other: &Self) -> bool {
        let fb = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.row_index == other.row_index
            && self.trial_index == other.trial_index
            && self.seed_index == other.seed_index
            && self.dataset == other.dataset
            && self.class_a == other.class_a
            && self.class_b == other.class_b
            && self.depth_l == other.depth_l
            && self.activation == other.activation
            && fb(self.w_var, other.w_var)
            && fb(self.b_var, other.b_var)
            && fb(self.lambda, other.lambda)
            && fb(self.eta, other.eta)
            && self.time_t == other.time_t
            && self.readout_bias == other.readout_bias
            && self.n_trn == other.n_trn
            && self.n_tst == other.n_tst
            && self.master_seed == other.master_seed
            && fb(self.train_acc, other.train_acc)
            && fb(self.test_acc, other.test_acc)
            && fb(self.ge_clean, other.ge_clean)
            && fb(self.ge_awgn, other.ge_awgn)
            && fb(self.ge_fgsm, other.ge_fgsm)
            && fb(self.ge_mse, other.ge_mse)
            && fb(self.train_mse, other.train_mse)
            && fb(self.test_mse, other.test_mse)
            && fb(self.i_lb_nats, other.i_lb_nats)
            && fb(self.i_ub_nats, other.i_ub_nats)
            && self.valid == other.valid
            && fb(self.icb_lb, other.icb_lb)
            && fb(self.icb_ub, other.icb_ub)
            && self.error == other.error
    }
}

/// Sweep-level configuration.  Defaults reproduce the full experimental
/// procedure at desk scale: the standard metaparameter ranges with
/// `n_seeds = 10` rather than the full-scale 100/50.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_seeds: u64,
    pub master_seed: u64,
    pub n_tst: usize,
    /// Inclusive training-set-size range sampled per trial (sweep A).
    pub n_trn_range: (usize, usize),
    /// Fixed training-set size (sweep B).
    pub n_trn_fixed: usize,
    /// Inclusive depth range sampled per trial.
    pub depth_range: (u32, u32),
    /// Ridge grid sampled per trial (sweep A); sweep B draws λ ~ U(0, 2).
    pub lambda_grid: Vec<f64>,
    /// Finite training times evaluated per trial (sweep A); sweep B uses
    /// t = ∞ only.
    pub time_grid: Vec<f64>,
    pub delta: f64,
    pub mc_rounds: usize,
    pub awgn_var: f64,
    pub fgsm_eps: f64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_seeds: 10,
            master_seed: 1,
            n_tst: 2000,
            n_trn_range: (250, 2000),
            n_trn_fixed: 1000,
            depth_range: (1, 5),
            lambda_grid: vec![1.0, 0.1, 0.01, 1e-3, 1e-4],
            time_grid: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            delta: 0.05,
            mc_rounds: 32,
            awgn_var: 0.25,
            fgsm_eps: 4.0 / 255.0,
            workers: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::InvalidConfig("n_seeds must be at least 1".into()));
        }
        if self.n_tst == 0 {
            return Err(Error::InvalidConfig("n_tst must be at least 1".into()));
        }
        let (lo, hi) = self.n_trn_range;
        if lo < 2 || hi < lo {
            return Err(Error::InvalidConfig(format!(
                "n_trn_range ({lo}, {hi}) must satisfy 2 <= lo <= hi"
            )));
        }
        if self.n_trn_fixed < 2 {
            return Err(Error::InvalidConfig("n_trn_fixed must be at least 2".into()));
        }
        let (dlo, dhi) = self.depth_range;
        if dlo < 1 || dhi < dlo || dhi > 64 {
            return Err(Error::InvalidConfig(format!(
                "depth_range ({dlo}, {dhi}) must satisfy 1 <= lo <= hi <= 64"
            )));
        }
        if self.lambda_grid.is_empty()
            || self.lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0)
        {
            return Err(Error::InvalidConfig(
                "lambda_grid must be non-empty with finite non-negative entries".into(),
            ));
        }
        if self.time_grid.is_empty() || self.time_grid.iter().any(|t| !(t.is_finite() && *t > 0.0))
        {
            return Err(Error::InvalidConfig(
                "time_grid must be non-empty with finite positive entries".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig("delta must lie in (0, 1)".into()));
        }
        if self.mc_rounds == 0 {
            return Err(Error::InvalidConfig("mc_rounds must be at least 1".into()));
        }
        if !(self.awgn_var >= 0.0) || !(self.fgsm_eps >= 0.0) {
            return Err(Error::InvalidConfig(
                "awgn_var and fgsm_eps must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn trial_options(&self) -> TrialOptions {
        TrialOptions {
            delta: self.delta,
            mc_rounds: self.mc_rounds,
            awgn_var: self.awgn_var,
            fgsm_eps: self.fgsm_eps,
        }
    }
}

/// Per-trial seed; every derived stream (split, net sample, noise, MI)
/// hangs off this value so trials are independent and re-runnable.
pub(crate) fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    mix_in(master_seed, trial_index)
}

/// Metaparameters drawn for one trial.  The draw order (depth, activation,
/// ridge, train size) is fixed; reordering would silently change every
/// sampled sweep.
pub(crate) struct SampledNet {
    pub net: NetConfig,
    pub n_trn: usize,
}

pub(crate) fn sample_trial_a(cfg: &SweepConfig, trial_index: u64) -> SampledNet {
    let mut rng = rng_from(derive_seed(
        trial_seed(cfg.master_seed, trial_index),
        0,
        Purpose::NetSample,
    ));
    let depth_l = rng.random_range(cfg.depth_range.0..=cfg.depth_range.1);
    let activation = if rng.random::<bool>() {
        Activation::Relu
    } else {
        Activation::Erf
    };
    let lambda = cfg.lambda_grid[rng.random_range(0..cfg.lambda_grid.len())];
    let n_trn = rng.random_range(cfg.n_trn_range.0..=cfg.n_trn_range.1);
    let net = NetConfig {
        depth_l,
        lambda,
        time_t: TrainTime::Finite(cfg.time_grid[0]),
        ..NetConfig::for_activation(activation)
    };
    SampledNet { net, n_trn }
}

pub(crate) fn sample_trial_b(cfg: &SweepConfig, trial_index: u64) -> SampledNet {
    let mut rng = rng_from(derive_seed(
        trial_seed(cfg.master_seed, trial_index),
        0,
        Purpose::NetSample,
    ));
    let depth_l = rng.random_range(cfg.depth_range.0..=cfg.depth_range.1);
    let activation = if rng.random::<bool>() {
        Activation::Relu
    } else {
        Activation::Erf
    };
    let lambda = rng.random_range(0.0..2.0);
    let net = NetConfig {
        depth_l,
        lambda,
        time_t: TrainTime::Infinite,
        ..NetConfig::for_activation(activation)
    };
    SampledNet {
        net,
        n_trn: cfg.n_trn_fixed,
    }
}

fn blank_record(spec: &TrialSpec, time_idx: usize, wall_time_s: f64) -> TrialRecord {
    TrialRecord {
        row_index: spec.trial_index * spec.times.len() as u64 + time_idx as u64,
        trial_index: spec.trial_index,
        seed_index: spec.seed_index,
        dataset: spec.dataset.clone(),
        class_a: spec.class_a,
        class_b: spec.class_b,
        depth_l: spec.net.depth_l,
        activation: spec.net.activation,
        w_var: spec.net.w_var,
        b_var: spec.net.b_var,
        lambda: spec.net.lambda,
        eta: spec.net.eta,
        time_t: spec.times[time_idx],
        readout_bias: spec.net.readout_bias,
        n_trn: spec.n_trn,
        n_tst: spec.n_tst,
        master_seed: spec.master_seed,
        train_acc: f64::NAN,
        test_acc: f64::NAN,
        ge_clean: f64::NAN,
        ge_awgn: f64::NAN,
        ge_fgsm: f64::NAN,
        ge_mse: f64::NAN,
        train_mse: f64::NAN,
        test_mse: f64::NAN,
        i_lb_nats: f64::NAN,
        i_ub_nats: f64::NAN,
        valid: false,
        icb_lb: f64::NAN,
        icb_ub: f64::NAN,
        wall_time_s,
        error: None,
    }
}

fn error_record(spec: &TrialSpec, time_idx: usize, err: &Error, wall_time_s: f64) -> TrialRecord {
    let mut rec = blank_record(spec, time_idx, wall_time_s);
    rec.error = Some(err.code().to_string());
    rec
}

struct TrialPrep {
    ds: Dataset,
    gram: crate::kernels::GramPair,
    cross: crate::kernels::CrossGram,
    cross_awgn: crate::kernels::CrossGram,
    grad_coeffs: Option<crate::kernels::GradCoeffs>,
    base: crate::dynamics::TrainedEnsemble,
    seed: u64,
}

fn prepare_trial(raw: &RawDataset, spec: &TrialSpec, opts: &TrialOptions) -> Result<TrialPrep> {
    if spec.times.is_empty() {
        return Err(Error::InvalidConfig("trial has no time points".into()));
    }
    spec.net.validate()?;
    let seed = trial_seed(spec.master_seed, spec.trial_index);
    let ds = make_binary_task(
        raw,
        spec.class_a,
        spec.class_b,
        spec.n_trn,
        spec.n_tst,
        seed,
    )?;
    let gram = gram_train(&ds.x_trn, &spec.net)?;
    let cross = gram_cross(&ds.x_tst, &ds.x_trn, &spec.net)?;
    let awgn_x = awgn_perturb(&ds.x_tst, opts.awgn_var, seed)?;
    let cross_awgn = gram_cross(&awgn_x, &ds.x_trn, &spec.net)?;
    let grad_coeffs = if opts.fgsm_eps > 0.0 {
        Some(kernel_grad_coeffs(&ds.x_tst, &ds.x_trn, &spec.net)?)
    } else {
        None
    };
    // the spectrum is time-independent; fit once at a harmless finite time
    // and re-time per evaluation point
    let base_cfg = NetConfig {
        time_t: TrainTime::Finite(1.0),
        ..spec.net
    };
    let base = fit(&gram, &ds.y_trn, &base_cfg)?;
    Ok(TrialPrep {
        ds,
        gram,
        cross,
        cross_awgn,
        grad_coeffs,
        base,
        seed,
    })
}

fn evaluate_time_point(
    prep: &TrialPrep,
    spec: &TrialSpec,
    opts: &TrialOptions,
    time_idx: usize,
) -> Result<TrialRecord> {
    let started = Instant::now();
    let time = spec.times[time_idx];
    let ens = retime(&prep.base, time)?;

    let pred_train = predict_train(&ens, &prep.gram)?;
    let mi_seed = mix_in(prep.seed, time_idx as u64);
    let mi = estimate_mi(
        &pred_train,
        mi_seed,
        MiOptions {
            mc_rounds: opts.mc_rounds,
            mean_plug_in: false,
        },
    )?;
    let bound_cfg = BoundConfig { delta: opts.delta };
    let icb_ub = icb(mi.i_ub_nats, spec.n_trn, bound_cfg)?;
    let icb_lb = icb(mi.i_lb_nats, spec.n_trn, bound_cfg)?;

    let clean = predict(&ens, &prep.cross)?;
    let awgn = predict(&ens, &prep.cross_awgn)?;
    let fgsm = match &prep.grad_coeffs {
        Some(coeffs) => {
            let attacked = fgsm_attack_precomputed(
                &ens,
                coeffs,
                &clean.mean,
                &prep.ds.x_trn,
                &prep.ds.x_tst,
                &prep.ds.y_tst,
                opts.fgsm_eps,
            )?;
            let cross_fgsm = gram_cross(&attacked, &prep.ds.x_trn, &spec.net)?;
            predict(&ens, &cross_fgsm)?
        }
        None => clean.clone(),
    };
    let ev = eval_summary(
        &pred_train,
        &clean,
        &awgn,
        &fgsm,
        &prep.ds.y_trn,
        &prep.ds.y_tst,
    )?;

    let mut rec = blank_record(spec, time_idx, started.elapsed().as_secs_f64());
    rec.train_acc = ev.train_acc;
    rec.test_acc = ev.test_acc;
    rec.ge_clean = ev.ge_clean;
    rec.ge_awgn = ev.ge_awgn;
    rec.ge_fgsm = ev.ge_fgsm;
    rec.ge_mse = ev.ge_mse;
    rec.train_mse = ev.train_mse;
    rec.test_mse = ev.test_mse;
    rec.i_lb_nats = mi.i_lb_nats;
    rec.i_ub_nats = mi.i_ub_nats;
    rec.valid = mi.valid;
    rec.icb_lb = icb_lb;
    rec.icb_ub = icb_ub;
    Ok(rec)
}

/// Runs one trial, producing one record per time point.  Failures never
/// panic or abort: they turn into records carrying an error code.
pub fn run_trial(raw: &RawDataset, spec: &TrialSpec, opts: &TrialOptions) -> Vec<TrialRecord> {
    let started = Instant::now();
    let prep = match prepare_trial(raw, spec, opts) {
        Ok(p) => p,
        Err(e) => {
            let elapsed = started.elapsed().as_secs_f64();
            return (0..spec.times.len())
                .map(|ti| error_record(spec, ti, &e, elapsed))
                .collect();
        }
    };
    (0..spec.times.len())
        .map(|ti| match evaluate_time_point(&prep, spec, opts, ti) {
            Ok(rec) => rec,
            Err(e) => error_record(spec, ti, &e, started.elapsed().as_secs_f64()),
        })
        .collect()
}

/// Satisfaction rate over rows that completed and passed the validity
/// filter, or `None` when no row qualifies.
pub fn satisfaction_from_records(records: &[TrialRecord]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.error.is_none() && r.valid)
        .map(|r| (r.ge_clean, r.icb_ub))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    crate::eval::satisfaction_rate(&pairs).ok()
}

pub(crate) fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Erf => "erf",
        Activation::Linear => "linear",
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "erf" => Ok(Activation::Erf),
        "linear" => Ok(Activation::Linear),
        other => Err(Error::ParseError {
            row: 0,
            col: "activation".to_string(),
            msg: format!("unknown activation '{other}'"),
        }),
    }
}

pub(crate) fn time_name(t: TrainTime) -> String {
    match t {
        TrainTime::Infinite => "inf".to_string(),
        TrainTime::Finite(v) => format!("{v}"),
    }
}

fn parse_time(s: &str) -> Result<TrainTime> {
    if s == "inf" || s == "infinity" {
        return Ok(TrainTime::Infinite);
    }
    s.parse::<f64>()
        .map(TrainTime::Finite)
        .map_err(|e| Error::ParseError {
            row: 0,
            col: "time_t".to_string(),
            msg: format!("bad time '{s}': {e}"),
        })
}

/// Column order of the sweep CSV; the single source of truth for both
/// writing and reading.
pub const CSV_HEADER: [&str; 31] = [
    "row_index",
    "trial_index",
    "seed_index",
    "dataset",
    "class_a",
    "class_b",
    "depth_l",
    "activation",
    "w_var",
    "b_var",
    "lambda",
    "eta",
    "time_t",
    "readout_bias",
    "n_trn",
    "n_tst",
    "master_seed",
    "train_acc",
    "test_acc",
    "ge_clean",
    "ge_awgn",
    "ge_fgsm",
    "ge_mse",
    "train_mse",
    "test_mse",
    "i_lb_nats",
    "i_ub_nats",
    "valid",
    "icb_lb",
    "icb_ub",
    "error",
];

fn fmt_metric(v: f64, errored: bool) -> String {
    if errored {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Renders a record as CSV fields in [`CSV_HEADER`] order.  Floats use the
/// shortest round-trip representation; error rows leave metric cells empty.
pub fn csv_row(rec: &TrialRecord) -> Vec<String> {
    let errored = rec.error.is_some();
    vec![
        rec.row_index.to_string(),
        rec.trial_index.to_string(),
        rec.seed_index.to_string(),
        rec.dataset.clone(),
        rec.class_a.to_string(),
        rec.class_b.to_string(),
        rec.depth_l.to_string(),
        activation_name(rec.activation).to_string(),
        format!("{}", rec.w_var),
        format!("{}", rec.b_var),
        format!("{}", rec.lambda),
        format!("{}", rec.eta),
        time_name(rec.time_t),
        rec.readout_bias.to_string(),
        rec.n_trn.to_string(),
        rec.n_tst.to_string(),
        rec.master_seed.to_string(),
        fmt_metric(rec.train_acc, errored),
        fmt_metric(rec.test_acc, errored),
        fmt_metric(rec.ge_clean, errored),
        fmt_metric(rec.ge_awgn, errored),
        fmt_metric(rec.ge_fgsm, errored),
        fmt_metric(rec.ge_mse, errored),
        fmt_metric(rec.train_mse, errored),
        fmt_metric(rec.test_mse, errored),
        fmt_metric(rec.i_lb_nats, errored),
        fmt_metric(rec.i_ub_nats, errored),
        rec.valid.to_string(),
        fmt_metric(rec.icb_lb, errored),
        fmt_metric(rec.icb_ub, errored),
        rec.error.clone().unwrap_or_default(),
    ]
}

/// Reads a sweep CSV back into records.  Empty metric cells become NaN;
/// `wall_time_s` is not stored in the CSV and reads back as zero.
pub fn read_records_csv(path: &std::path::Path) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    {
        let headers = reader.headers()?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::BadCache {
                path: path.display().to_string(),
                msg: format!("unexpected CSV header {got:?}"),
            });
        }
    }
    let parse_f64 = |s: &str, row: usize, col: usize| -> Result<f64> {
        if s.is_empty() {
            return Ok(f64::NAN);
        }
        s.parse::<f64>().map_err(|e| Error::ParseError {
            row,
            col: CSV_HEADER[col].to_string(),
            msg: e.to_string(),
        })
    };
    let mut out = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != CSV_HEADER.len() {
            return Err(Error::ParseError {
                row: idx + 1,
                col: "*".to_string(),
                msg: format!("expected {} fields, got {}", CSV_HEADER.len(), row.len()),
            });
        }
        let f = |col: usize| -> &str { row.get(col).unwrap_or("") };
        let int = |col: usize| -> Result<u64> {
            f(col).parse::<u64>().map_err(|e| Error::ParseError {
                row: idx + 1,
                col: CSV_HEADER[col].to_string(),
                msg: e.to_string(),
            })
        };
        let error_field = f(30);
        out.push(TrialRecord {
            row_index: int(0)?,
            trial_index: int(1)?,
            seed_index: int(2)?,
            dataset: f(3).to_string(),
            class_a: int(4)? as u8,
            class_b: int(5)? as u8,
            depth_l: int(6)? as u32,
            activation: parse_activation(f(7))?,
            w_var: parse_f64(f(8), idx + 1, 8)?,
            b_var: parse_f64(f(9), idx + 1, 9)?,
            lambda: parse_f64(f(10), idx + 1, 10)?,
            eta: parse_f64(f(11), idx + 1, 11)?,
            time_t: parse_time(f(12))?,
            readout_bias: f(13) == "true",
            n_trn: int(14)? as usize,
            n_tst: int(15)? as usize,
            master_seed: int(16)?,
            train_acc: parse_f64(f(17), idx + 1, 17)?,
            test_acc: parse_f64(f(18), idx + 1, 18)?,
            ge_clean: parse_f64(f(19), idx + 1, 19)?,
            ge_awgn: parse_f64(f(20), idx + 1, 20)?,
            ge_fgsm: parse_f64(f(21), idx + 1, 21)?,
            ge_mse: parse_f64(f(22), idx + 1, 22)?,
            train_mse: parse_f64(f(23), idx + 1, 23)?,
            test_mse: parse_f64(f(24), idx + 1, 24)?,
            i_lb_nats: parse_f64(f(25), idx + 1, 25)?,
            i_ub_nats: parse_f64(f(26), idx + 1, 26)?,
            valid: f(27) == "true",
            icb_lb: parse_f64(f(28), idx + 1, 28)?,
            icb_ub: parse_f64(f(29), idx + 1, 29)?,
            wall_time_s: 0.0,
            error: if error_field.is_empty() {
                None
            } else {
                Some(error_field.to_string())
            },
        });
    }
    Ok(out)
}

/// Mean of a slice, in index order.
pub(crate) fn mean_in_order(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// A record with placeholder identity fields and NaN metrics, for tests
/// that assemble synthetic record sets.
#[cfg(test)]
pub(crate) fn blank_record_for_tests() -> TrialRecord {
    let spec = TrialSpec {
        trial_index: 0,
        seed_index: 0,
        dataset: "test".into(),
        class_a: 0,
        class_b: 1,
        net: NetConfig::for_activation(Activation::Relu),
        n_trn: 100,
        n_tst: 100,
        times: vec![TrainTime::Infinite],
        master_seed: 0,
    };
    blank_record(&spec, 0, 0.0)
}
