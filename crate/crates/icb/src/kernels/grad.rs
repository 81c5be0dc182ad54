//! Analytic gradients of kernel rows with respect to one input point.
//!
//! Every intermediate quantity in the layer recursion depends on x only
//! through s = K^ℓ(x, x_j) and q = K^ℓ(x, x), whose gradients stay in
//! span{x, x_j}: ∇s = α·x + β·x_j and ∇q = γ·x. The chain rule therefore
//! reduces to scalar coefficient updates per layer, and a whole M×N block of
//! gradients is two coefficient matrices per kernel — which is what the
//! batched attack in `eval` consumes directly.

use nalgebra::{DMatrix, DVector};

use super::{clamp_correlation, layer_bias, Activation, NetConfig};
use crate::error::{Error, Result};

/// Coefficients of kernel-row gradients in the span of the inputs:
/// ∇ₓ K(xᵢ, xⱼ) = k_self[(i,j)]·xᵢ + k_other[(i,j)]·xⱼ, and likewise
/// theta_* for the NTK.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCoeffs {
    pub k_self: DMatrix<f64>,
    pub k_other: DMatrix<f64>,
    pub theta_self: DMatrix<f64>,
    pub theta_other: DMatrix<f64>,
}

// Inside this margin of |correlation| = 1 the exact ReLU partials are a 0/0
// ratio; the correlation is floored here so the removable singularity
// evaluates to its finite limit direction.
const GRAD_MARGIN: f64 = 1e-8;

struct StepPartials {
    k_next: f64,
    kdot: f64,
    df_ds: f64,
    df_dq: f64,
    dg_ds: f64,
    dg_dq: f64,
}

fn step_partials(
    act: Activation,
    q: f64,
    q_j: f64,
    s: f64,
    w: f64,
    b: f64,
) -> Result<StepPartials> {
    let pi = std::f64::consts::PI;
    match act {
        Activation::Relu => {
            let qq = q * q_j;
            if !(qq > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "relu gradient needs positive self-variances, got q={q}, q'={q_j}"
                )));
            }
            let norm = qq.sqrt();
            let mut c = clamp_correlation(s / norm, "relu gradient")?;
            c = c.clamp(-1.0 + GRAD_MARGIN, 1.0 - GRAD_MARGIN);
            let theta = c.acos();
            let s_eff = c * norm;
            let a = (qq * (1.0 - c * c)).sqrt();
            let k_next = b + w / (2.0 * pi) * (a + (pi - theta) * s_eff);
            let kdot = w * (pi - theta) / (2.0 * pi);
            Ok(StepPartials {
                k_next,
                kdot,
                df_ds: kdot,
                df_dq: w / (4.0 * pi) * a / q,
                dg_ds: w / (2.0 * pi * a),
                dg_dq: -w * s_eff / (4.0 * pi * q * a),
            })
        }
        Activation::Erf => {
            let d2 = (1.0 + 2.0 * q) * (1.0 + 2.0 * q_j);
            let mut u = clamp_correlation(2.0 * s / d2.sqrt(), "erf gradient")?;
            u = u.clamp(-1.0 + GRAD_MARGIN, 1.0 - GRAD_MARGIN);
            let s_eff = u * d2.sqrt() / 2.0;
            let big_b = (d2 * (1.0 - u * u)).sqrt();
            let k_next = b + w * (2.0 / pi) * u.asin();
            let kdot = w * (4.0 / pi) / big_b;
            Ok(StepPartials {
                k_next,
                kdot,
                df_ds: kdot,
                df_dq: -w * (4.0 / pi) * s_eff * (1.0 + 2.0 * q_j) / (d2 * big_b),
                dg_ds: 16.0 * w * s_eff / (pi * big_b.powi(3)),
                dg_dq: -4.0 * w * (1.0 + 2.0 * q_j) / (pi * big_b.powi(3)),
            })
        }
        Activation::Linear => Ok(StepPartials {
            k_next: b + w * s,
            kdot: w,
            df_ds: w,
            df_dq: 0.0,
            dg_ds: 0.0,
            dg_dq: 0.0,
        }),
    }
}

/// Self path with its q-derivative: returns (q⁺, dq⁺/dq).
fn self_partials(act: Activation, q: f64, w: f64, b: f64) -> Result<(f64, f64)> {
    let pi = std::f64::consts::PI;
    match act {
        Activation::Relu => {
            if !(q > 0.0) {
                return Err(Error::NumericalDomain(format!(
                    "relu gradient needs a positive self-variance, got {q}"
                )));
            }
            Ok((b + w * q / 2.0, w / 2.0))
        }
        Activation::Erf => {
            let q_next = b + w * (2.0 / pi) * (2.0 * q / (1.0 + 2.0 * q)).asin();
            let dq = w * (4.0 / pi) / ((1.0 + 2.0 * q) * (1.0 + 4.0 * q).sqrt());
            Ok((q_next, dq))
        }
        Activation::Linear => Ok((b + w * q, w)),
    }
}

/// Gradient coefficients of Θ(xᵢ, ·) and K(xᵢ, ·) rows for every row xᵢ of
/// `x_test` against every row of `x_train`.
pub fn kernel_grad_coeffs(
    x_test: &DMatrix<f64>,
    x_train: &DMatrix<f64>,
    cfg: &NetConfig,
) -> Result<GradCoeffs> {
    cfg.validate()?;
    if x_test.ncols() != x_train.ncols() {
        return Err(Error::DimMismatch(format!(
            "input dims differ: {} vs {}",
            x_test.ncols(),
            x_train.ncols()
        )));
    }
    if x_test.ncols() == 0 {
        return Err(Error::EmptyInput("inputs have zero features".into()));
    }
    let m = x_test.nrows();
    let n = x_train.nrows();
    let d = x_test.ncols() as f64;
    let w = cfg.w_var;

    // per-layer self-variances of the fixed train points
    let mut q_cols_track = Vec::with_capacity(cfg.depth_l as usize);
    let mut q_cols = DVector::from_fn(n, |j, _| {
        w * x_train.row(j).dot(&x_train.row(j)) / d + cfg.b_var
    });
    for layer in 1..=cfg.depth_l {
        q_cols_track.push(q_cols.clone());
        let b = layer_bias(cfg, layer);
        for v in q_cols.iter_mut() {
            let (qn, _) = self_partials(cfg.activation, *v, w, b)?;
            *v = qn;
        }
    }

    let mut k_self = DMatrix::zeros(m, n);
    let mut k_other = DMatrix::zeros(m, n);
    let mut theta_self = DMatrix::zeros(m, n);
    let mut theta_other = DMatrix::zeros(m, n);

    for i in 0..m {
        let xi = x_test.row(i);
        let mut q = w * xi.dot(&xi) / d + cfg.b_var;
        let mut gamma = 2.0 * w / d;
        // per-train-point state through the layers
        let mut s: Vec<f64> = (0..n)
            .map(|j| w * xi.dot(&x_train.row(j)) / d + cfg.b_var)
            .collect();
        let mut th = s.clone();
        let mut a_s = vec![0.0; n];
        let mut b_s = vec![w / d; n];
        let mut a_t = vec![0.0; n];
        let mut b_t = vec![w / d; n];

        for layer in 1..=cfg.depth_l {
            let b = layer_bias(cfg, layer);
            let qc = &q_cols_track[(layer - 1) as usize];
            for j in 0..n {
                let p = step_partials(cfg.activation, q, qc[j], s[j], w, b)?;
                let a_s_new = p.df_ds * a_s[j] + p.df_dq * gamma;
                let b_s_new = p.df_ds * b_s[j];
                let a_g = p.dg_ds * a_s[j] + p.dg_dq * gamma;
                let b_g = p.dg_ds * b_s[j];
                a_t[j] = a_s_new + p.kdot * a_t[j] + th[j] * a_g;
                b_t[j] = b_s_new + p.kdot * b_t[j] + th[j] * b_g;
                th[j] = p.k_next + p.kdot * th[j];
                s[j] = p.k_next;
                a_s[j] = a_s_new;
                b_s[j] = b_s_new;
            }
            let (q_next, dq) = self_partials(cfg.activation, q, w, b)?;
            q = q_next;
            gamma *= dq;
        }
        for j in 0..n {
            k_self[(i, j)] = a_s[j];
            k_other[(i, j)] = b_s[j];
            theta_self[(i, j)] = a_t[j];
            theta_other[(i, j)] = b_t[j];
        }
    }
    Ok(GradCoeffs {
        k_self,
        k_other,
        theta_self,
        theta_other,
    })
}

/// Dense d×N gradients of Θ(x,·) and K(x,·) for a single point, assembled
/// from the span coefficients.
pub fn kernel_input_grad(
    x: &DVector<f64>,
    x_train: &DMatrix<f64>,
    cfg: &NetConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let xm = DMatrix::from_rows(&[x.transpose()]);
    let coeffs = kernel_grad_coeffs(&xm, x_train, cfg)?;
    let d = x.len();
    let n = x_train.nrows();
    let mut theta_grad = DMatrix::zeros(d, n);
    let mut k_grad = DMatrix::zeros(d, n);
    for j in 0..n {
        for r in 0..d {
            theta_grad[(r, j)] =
                coeffs.theta_self[(0, j)] * x[r] + coeffs.theta_other[(0, j)] * x_train[(j, r)];
            k_grad[(r, j)] =
                coeffs.k_self[(0, j)] * x[r] + coeffs.k_other[(0, j)] * x_train[(j, r)];
        }
    }
    Ok((theta_grad, k_grad))
}
