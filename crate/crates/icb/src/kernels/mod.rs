//! NNGP and NTK Gram matrices for infinite-width fully-connected networks.
//!
//! The network has `depth_l` hidden layers with a pointwise activation and a
//! final affine readout. Kernels are built by a base affine map on raw inner
//! products followed by `depth_l` applications of the activation's layer
//! map; the last application carries the readout's affine parameters (its
//! bias can be switched off). Cross blocks and self-variance diagonals come
//! from the same recursion, with square-gram diagonals taken from the exact
//! self path rather than the clamped cross formula.

mod cache;
mod grad;

pub use cache::{dataset_hash, kernel_cfg_hash, load_gram_pair, save_gram_pair};
pub use grad::{kernel_grad_coeffs, kernel_input_grad, GradCoeffs};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pointwise nonlinearity of the hidden layers. `Linear` (identity) makes
/// every layer affine, collapsing the whole stack to a linear kernel with a
/// closed form; it exists to validate the recursion plumbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Erf,
    Linear,
}

/// Training time: a positive number of continuous-time units, or the fully
/// converged limit. Serialized as a JSON number or the string "inf".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeRepr", into = "TimeRepr")]
pub enum TrainTime {
    Finite(f64),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TimeRepr {
    Num(f64),
    Word(String),
}

impl TryFrom<TimeRepr> for TrainTime {
    type Error = String;
    fn try_from(r: TimeRepr) -> std::result::Result<Self, String> {
        match r {
            TimeRepr::Num(t) if t.is_finite() => Ok(TrainTime::Finite(t)),
            TimeRepr::Num(t) => Err(format!("non-finite numeric time {t}; use \"inf\"")),
            TimeRepr::Word(w) if w.eq_ignore_ascii_case("inf") || w.eq_ignore_ascii_case("infinity") => {
                Ok(TrainTime::Infinite)
            }
            TimeRepr::Word(w) => Err(format!("unrecognized training time {w:?}")),
        }
    }
}

impl From<TrainTime> for TimeRepr {
    fn from(t: TrainTime) -> Self {
        match t {
            TrainTime::Finite(v) => TimeRepr::Num(v),
            TrainTime::Infinite => TimeRepr::Word("inf".into()),
        }
    }
}

/// Architecture and training metaparameters of one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Hidden-layer count; an affine readout always follows.
    pub depth_l: u32,
    pub activation: Activation,
    /// Weight variance per layer (scaled by fan-in).
    pub w_var: f64,
    /// Bias variance per layer.
    pub b_var: f64,
    /// Scale-free diagonal regularization coefficient.
    pub lambda: f64,
    /// Learning rate of the continuous-time dynamics.
    pub eta: f64,
    pub time_t: TrainTime,
    /// Whether the readout layer carries a bias term.
    pub readout_bias: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::for_activation(Activation::Relu)
    }
}

impl NetConfig {
    /// Variance-preserving defaults: `w_var` 2.0 for ReLU, 1.0 otherwise,
    /// `b_var` 0.1, no regularization, unit learning rate, converged.
    pub fn for_activation(activation: Activation) -> Self {
        NetConfig {
            depth_l: 1,
            activation,
            w_var: if activation == Activation::Relu { 2.0 } else { 1.0 },
            b_var: 0.1,
            lambda: 0.0,
            eta: 1.0,
            time_t: TrainTime::Infinite,
            readout_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.depth_l) {
            return Err(Error::InvalidConfig(format!(
                "depth_l must be in 1..=64, got {}",
                self.depth_l
            )));
        }
        if !(self.w_var > 0.0 && self.w_var.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "w_var must be positive, got {}",
                self.w_var
            )));
        }
        if !(self.b_var >= 0.0 && self.b_var.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "b_var must be >= 0, got {}",
                self.b_var
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if let TrainTime::Finite(t) = self.time_t {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "finite training time must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Train-set Gram matrices: `k` is the NNGP covariance, `theta` the NTK.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub k: DMatrix<f64>,
    pub theta: DMatrix<f64>,
}

/// Test-against-train blocks plus the test self-variances; the full
/// test-test covariance is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGram {
    pub k_cross: DMatrix<f64>,
    pub theta_cross: DMatrix<f64>,
    pub k_test_diag: DVector<f64>,
}

/// Rectangular NNGP/NTK blocks between two point sets, with the final-layer
/// self-variances of each side.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlocks {
    pub k: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub k_diag_rows: DVector<f64>,
    pub k_diag_cols: DVector<f64>,
}

/// Layer-0 kernel: entry (i,j) = w_var·⟨xᵢ, x₂ⱼ⟩/d + b_var.
pub fn base_gram(
    x: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    w_var: f64,
    b_var: f64,
) -> Result<DMatrix<f64>> {
    if x.ncols() != x2.ncols() {
        return Err(Error::DimMismatch(format!(
            "input dims differ: {} vs {}",
            x.ncols(),
            x2.ncols()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::EmptyInput("inputs have zero features".into()));
    }
    let d = x.ncols() as f64;
    let mut g = x * x2.transpose();
    g.apply(|v| *v = w_var * *v / d + b_var);
    Ok(g)
}

// How far past ±1 a normalized-correlation argument may fall before it is
// treated as a bug instead of roundoff.
const CLAMP_VIOLATION: f64 = 1e-6;
// Arguments are pulled strictly inside (-1, 1) so acos/asin derivatives in
// later consumers stay finite.
const CLAMP_MARGIN: f64 = 1e-12;

fn clamp_correlation(c: f64, what: &str) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::NumericalDomain(format!(
            "{what} produced a non-finite correlation"
        )));
    }
    if c.abs() > 1.0 + CLAMP_VIOLATION {
        return Err(Error::NumericalDomain(format!(
            "{what} correlation {c} exceeds [-1, 1] beyond tolerance {CLAMP_VIOLATION}"
        )));
    }
    Ok(c.clamp(-1.0 + CLAMP_MARGIN, 1.0 - CLAMP_MARGIN))
}

/// One activation-plus-affine crossing for an off-diagonal entry.
/// Maps (self-variances q_i, q_j, cross value s) to the next-layer cross
/// value and the derivative kernel value (K⁺, K̇⁺).
pub(crate) fn layer_step(
    act: Activation,
    q_i: f64,
    q_j: f64,
    s: f64,
    w: f64,
    b: f64,
) -> Result<(f64, f64)> {
    match act {
        Activation::Relu => {
            let qq = q_i * q_j;
            if !(qq > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "relu layer needs positive self-variances, got q={q_i}, q'={q_j}"
                )));
            }
            let norm = qq.sqrt();
            let c = clamp_correlation(s / norm, "relu layer")?;
            let theta = c.acos();
            let s_eff = c * norm;
            let cross_area = (qq - s_eff * s_eff).max(0.0).sqrt();
            let k = b + w / (2.0 * std::f64::consts::PI)
                * (cross_area + (std::f64::consts::PI - theta) * s_eff);
            let kdot = w * (std::f64::consts::PI - theta) / (2.0 * std::f64::consts::PI);
            Ok((k, kdot))
        }
        Activation::Erf => {
            let d2 = (1.0 + 2.0 * q_i) * (1.0 + 2.0 * q_j);
            let u = clamp_correlation(2.0 * s / d2.sqrt(), "erf layer")?;
            let k = b + w * (2.0 / std::f64::consts::PI) * u.asin();
            let kdot =
                w * (4.0 / std::f64::consts::PI) / (d2.sqrt() * (1.0 - u * u).sqrt());
            Ok((k, kdot))
        }
        Activation::Linear => Ok((b + w * s, w)),
    }
}

/// The diagonal (x = x') specialization of [`layer_step`], exact in closed
/// form with no correlation clamp. Returns (q⁺, K̇⁺).
pub(crate) fn self_step(act: Activation, q: f64, w: f64, b: f64) -> Result<(f64, f64)> {
    match act {
        Activation::Relu => {
            if !(q > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "relu layer needs a positive self-variance, got {q}"
                )));
            }
            Ok((b + w * q / 2.0, w / 2.0))
        }
        Activation::Erf => {
            let q_next =
                b + w * (2.0 / std::f64::consts::PI) * (2.0 * q / (1.0 + 2.0 * q)).asin();
            let kdot = w * (4.0 / std::f64::consts::PI) / (1.0 + 4.0 * q).sqrt();
            Ok((q_next, kdot))
        }
        Activation::Linear => Ok((b + w * q, w)),
    }
}

fn self_variance_track(x: &DMatrix<f64>, cfg: &NetConfig) -> Result<Vec<DVector<f64>>> {
    let d = x.ncols() as f64;
    let mut q = DVector::from_fn(x.nrows(), |i, _| {
        cfg.w_var * x.row(i).dot(&x.row(i)) / d + cfg.b_var
    });
    let mut track = Vec::with_capacity(cfg.depth_l as usize + 1);
    track.push(q.clone());
    for layer in 1..=cfg.depth_l {
        let b = layer_bias(cfg, layer);
        for v in q.iter_mut() {
            let (qn, _) = self_step(cfg.activation, *v, cfg.w_var, b)?;
            *v = qn;
        }
        track.push(q.clone());
    }
    Ok(track)
}

/// Bias variance used by the `layer`-th application (1-based); the last one
/// is the readout, whose bias can be switched off.
fn layer_bias(cfg: &NetConfig, layer: u32) -> f64 {
    if layer == cfg.depth_l && !cfg.readout_bias {
        0.0
    } else {
        cfg.b_var
    }
}

/// Full NNGP/NTK recursion between the rows of `x` and `x2`.
pub fn nngp_ntk(x: &DMatrix<f64>, x2: &DMatrix<f64>, cfg: &NetConfig) -> Result<KernelBlocks> {
    cfg.validate()?;
    let q_rows = self_variance_track(x, cfg)?;
    let q_cols = self_variance_track(x2, cfg)?;
    let mut k = base_gram(x, x2, cfg.w_var, cfg.b_var)?;
    let mut theta = k.clone();
    for layer in 1..=cfg.depth_l {
        let b = layer_bias(cfg, layer);
        let qr = &q_rows[(layer - 1) as usize];
        let qc = &q_cols[(layer - 1) as usize];
        for j in 0..k.ncols() {
            for i in 0..k.nrows() {
                let (kn, kdot) = layer_step(cfg.activation, qr[i], qc[j], k[(i, j)], cfg.w_var, b)?;
                theta[(i, j)] = kn + kdot * theta[(i, j)];
                k[(i, j)] = kn;
            }
        }
    }
    Ok(KernelBlocks {
        k,
        theta,
        k_diag_rows: q_rows.last().unwrap().clone(),
        k_diag_cols: q_cols.last().unwrap().clone(),
    })
}

/// NTK self-variances (Θ(x,x) per row) through the same recursion.
fn theta_diag_track(x: &DMatrix<f64>, cfg: &NetConfig) -> Result<DVector<f64>> {
    let d = x.ncols() as f64;
    let mut q = DVector::from_fn(x.nrows(), |i, _| {
        cfg.w_var * x.row(i).dot(&x.row(i)) / d + cfg.b_var
    });
    let mut th = q.clone();
    for layer in 1..=cfg.depth_l {
        let b = layer_bias(cfg, layer);
        for i in 0..q.len() {
            let (qn, kdot) = self_step(cfg.activation, q[i], cfg.w_var, b)?;
            th[i] = qn + kdot * th[i];
            q[i] = qn;
        }
    }
    Ok(th)
}

/// Symmetric train-set Gram pair. Diagonals come from the exact self path;
/// off-diagonal entries are computed once and mirrored.
pub fn gram_train(x: &DMatrix<f64>, cfg: &NetConfig) -> Result<GramPair> {
    let blocks = nngp_ntk(x, x, cfg)?;
    let mut k = blocks.k;
    let mut theta = blocks.theta;
    let n = k.nrows();
    // mirror the upper triangle onto the lower for exact symmetry
    for j in 0..n {
        for i in (j + 1)..n {
            let kv = k[(j, i)];
            let tv = theta[(j, i)];
            k[(i, j)] = kv;
            theta[(i, j)] = tv;
        }
    }
    let k_diag = blocks.k_diag_rows;
    let theta_diag = theta_diag_track(x, cfg)?;
    for i in 0..n {
        k[(i, i)] = k_diag[i];
        theta[(i, i)] = theta_diag[i];
    }
    Ok(GramPair { k, theta })
}

/// Test-against-train blocks plus test self-variances.
pub fn gram_cross(x_test: &DMatrix<f64>, x_train: &DMatrix<f64>, cfg: &NetConfig) -> Result<CrossGram> {
    let blocks = nngp_ntk(x_test, x_train, cfg)?;
    Ok(CrossGram {
        k_cross: blocks.k,
        theta_cross: blocks.theta,
        k_test_diag: blocks.k_diag_rows,
    })
}
