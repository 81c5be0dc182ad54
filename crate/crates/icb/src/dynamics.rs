//! Analytic full-batch gradient-descent dynamics of the infinite ensemble.
//!
//! Training an infinite-width network on MSE for time t leaves the ensemble
//! output at any point Gaussian. With Θ* the regularized train NTK, the
//! trained state is captured by Tt = Θ*⁻¹(I − exp(−η Θ* t)) built through
//! the eigendecomposition of Θ*; predictive means are Θ(x,X)·Tt·y and
//! marginal variances follow from the train NNGP. Time is continuous: a
//! "step count" t from a discrete schedule is treated as the continuous time
//! value, which matches discrete GD for any stable learning rate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::{CrossGram, GramPair, NetConfig, TrainTime};

/// Result of [`fit`]: everything needed to evaluate the ensemble's
/// predictive Gaussians at any point set.
#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    /// Spectrum of the regularized train NTK, ascending is not guaranteed.
    pub eigvals: DVector<f64>,
    /// Orthonormal eigenbasis, columns match `eigvals`.
    pub eigvecs: DMatrix<f64>,
    /// Training labels the ensemble was fit on.
    pub y: DVector<f64>,
    /// Tt = Θ*⁻¹(I − exp(−η Θ* t)); at t=∞ this is Θ*⁻¹.
    pub tt: DMatrix<f64>,
    /// Tt·y.
    pub alpha: DVector<f64>,
    pub cfg: NetConfig,
    /// The scalar actually added to the NTK diagonal: λ·tr(Θ)/N plus any
    /// jitter spent on a difficult eigendecomposition.
    pub reg_add: f64,
    /// Train NNGP, retained for predictive variances.
    pub k_train: DMatrix<f64>,
    /// Lower clamp applied to predictive variances.
    pub var_floor: f64,
    /// tr(Θ)/N of the unregularized train NTK; sets the singularity floor
    /// when re-timing the ensemble.
    pub theta_scale: f64,
}

/// Per-point predictive mean and marginal variance of the trained ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

/// Spectral response h(e) with h·e = 1 − exp(−η e t); the e → 0 limit is
/// η·t for finite t.
fn response(e: f64, eta: f64, time: TrainTime, singular_floor: f64) -> Result<f64> {
    match time {
        TrainTime::Infinite => {
            if e < singular_floor {
                Err(Error::SingularKernel(format!(
                    "eigenvalue {e} below {singular_floor} at t=inf; \
                     the kernel is singular without regularization"
                )))
            } else {
                Ok(1.0 / e)
            }
        }
        TrainTime::Finite(t) => {
            if e == 0.0 {
                Ok(eta * t)
            } else {
                Ok(-(-eta * e * t).exp_m1() / e)
            }
        }
    }
}

const JITTER_UNIT: f64 = 1e-10;
const SINGULAR_UNIT: f64 = 1e-10;
const MAX_JITTER_TRIES: usize = 3;
const EIG_MAX_ITER: usize = 10_000;

/// Eigendecomposes Θ + reg·I, escalating diagonal jitter on failure.
fn eigen_with_jitter(
    theta: &DMatrix<f64>,
    reg_add: f64,
    scale: f64,
) -> Result<(SymmetricEigen<f64, nalgebra::Dyn>, f64)> {
    let n = theta.nrows();
    let mut extra = 0.0;
    for attempt in 0..=MAX_JITTER_TRIES {
        let mut m = theta.clone();
        for i in 0..n {
            m[(i, i)] += reg_add + extra;
        }
        if let Some(eig) = SymmetricEigen::try_new(m, f64::EPSILON, EIG_MAX_ITER) {
            if eig.eigenvalues.iter().all(|v| v.is_finite()) {
                return Ok((eig, extra));
            }
        }
        extra += JITTER_UNIT * scale * (attempt + 1) as f64;
    }
    Err(Error::EigFailure(format!(
        "eigendecomposition of the {n}x{n} regularized kernel failed after \
         {MAX_JITTER_TRIES} jitter escalations"
    )))
}

/// Trains the ensemble: regularizes the NTK, eigendecomposes, and builds the
/// spectral response matrix and dual coefficients.
pub fn fit(gram: &GramPair, y: &DVector<f64>, cfg: &NetConfig) -> Result<TrainedEnsemble> {
    cfg.validate()?;
    let n = gram.theta.nrows();
    if gram.theta.ncols() != n || gram.k.nrows() != n || gram.k.ncols() != n {
        return Err(Error::DimMismatch("train gram blocks must be square and equal-sized".into()));
    }
    if y.len() != n {
        return Err(Error::DimMismatch(format!(
            "{n} training rows vs {} labels",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput("cannot fit on an empty training set".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("training labels must be finite".into()));
    }

    let scale = gram.theta.trace() / n as f64;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::SingularKernel(format!(
            "train NTK has non-positive mean diagonal {scale}"
        )));
    }
    let reg_add = cfg.lambda * scale;
    let (eig, extra_jitter) = eigen_with_jitter(&gram.theta, reg_add, scale)?;
    let mut eigvals = eig.eigenvalues;
    let psd_floor = -1e-8 * scale;
    for v in eigvals.iter_mut() {
        if *v < psd_floor {
            return Err(Error::EigFailure(format!(
                "regularized NTK eigenvalue {v} below the PSD tolerance {psd_floor}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let eigvecs = eig.eigenvectors;

    let mut diag: Vec<f64> = (0..n).map(|i| gram.k[(i, i)]).collect();
    diag.sort_by(|a, b| a.total_cmp(b));
    let median = if n % 2 == 1 {
        diag[n / 2]
    } else {
        0.5 * (diag[n / 2 - 1] + diag[n / 2])
    };
    let var_floor = 1e-12 * median;

    spectral_assemble(
        eigvals,
        eigvecs,
        y.clone(),
        *cfg,
        reg_add + extra_jitter,
        gram.k.clone(),
        var_floor,
        scale,
    )
}

/// Builds Tt and alpha from an existing spectrum and wraps everything into a
/// [`TrainedEnsemble`].
#[allow(clippy::too_many_arguments)]
fn spectral_assemble(
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
    y: DVector<f64>,
    cfg: NetConfig,
    reg_add: f64,
    k_train: DMatrix<f64>,
    var_floor: f64,
    theta_scale: f64,
) -> Result<TrainedEnsemble> {
    let n = eigvals.len();
    let singular_floor = SINGULAR_UNIT * theta_scale;
    let mut h = DVector::zeros(n);
    for i in 0..n {
        h[i] = response(eigvals[i], cfg.eta, cfg.time_t, singular_floor)?;
    }
    // Tt = V diag(h) V^T
    let mut scaled = eigvecs.clone();
    for j in 0..n {
        let hv = h[j];
        for i in 0..n {
            scaled[(i, j)] *= hv;
        }
    }
    let tt = &scaled * eigvecs.transpose();
    let alpha = &tt * &y;
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigFailure("non-finite dual coefficients".into()));
    }

    Ok(TrainedEnsemble {
        eigvals,
        eigvecs,
        y,
        tt,
        alpha,
        cfg,
        reg_add,
        k_train,
        var_floor,
        theta_scale,
    })
}

/// Re-evaluates an already-fit ensemble at a different training time,
/// reusing the stored eigendecomposition.  Produces bit-identical results
/// to a fresh [`fit`] with the new time in the configuration.
pub fn retime(ens: &TrainedEnsemble, time_t: TrainTime) -> Result<TrainedEnsemble> {
    let cfg = NetConfig { time_t, ..ens.cfg };
    cfg.validate()?;
    spectral_assemble(
        ens.eigvals.clone(),
        ens.eigvecs.clone(),
        ens.y.clone(),
        cfg,
        ens.reg_add,
        ens.k_train.clone(),
        ens.var_floor,
        ens.theta_scale,
    )
}

fn predict_blocks(
    ens: &TrainedEnsemble,
    theta_cross: &DMatrix<f64>,
    k_cross: &DMatrix<f64>,
    k_diag: &DVector<f64>,
) -> Result<PredictiveGaussian> {
    let n = ens.alpha.len();
    let m = theta_cross.nrows();
    if theta_cross.ncols() != n || k_cross.nrows() != m || k_cross.ncols() != n || k_diag.len() != m
    {
        return Err(Error::DimMismatch(format!(
            "cross blocks {}x{} / {}x{} / diag {} do not match N={n}, M={m}",
            theta_cross.nrows(),
            theta_cross.ncols(),
            k_cross.nrows(),
            k_cross.ncols(),
            k_diag.len()
        )));
    }
    let mean = theta_cross * &ens.alpha;
    // var_i = K(x_i,x_i) + p_i K p_i^T - 2 p_i k_i, with p = Θ_cross·Tt
    let p = theta_cross * &ens.tt;
    let pk = &p * &ens.k_train;
    let max_diag = k_diag
        .iter()
        .chain(ens.k_train.diagonal().iter())
        .fold(0.0f64, |a, &b| a.max(b));
    let neg_tol = -1e-8 * max_diag;
    let mut var = DVector::zeros(m);
    for i in 0..m {
        let mut quad = 0.0;
        let mut cross = 0.0;
        for j in 0..n {
            quad += pk[(i, j)] * p[(i, j)];
            cross += p[(i, j)] * k_cross[(i, j)];
        }
        let v = k_diag[i] + quad - 2.0 * cross;
        if v < neg_tol {
            return Err(Error::NonPositiveVariance(v));
        }
        var[i] = v.max(ens.var_floor);
    }
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigFailure("non-finite predictive mean".into()));
    }
    Ok(PredictiveGaussian { mean, var })
}

/// Predictive Gaussians at test points given their cross blocks against the
/// training set used in [`fit`].
pub fn predict(ens: &TrainedEnsemble, cross: &CrossGram) -> Result<PredictiveGaussian> {
    predict_blocks(ens, &cross.theta_cross, &cross.k_cross, &cross.k_test_diag)
}

/// Predictive Gaussians at the training points themselves; pass the same
/// gram pair that produced the ensemble.
pub fn predict_train(ens: &TrainedEnsemble, gram: &GramPair) -> Result<PredictiveGaussian> {
    let k_diag = gram.k.diagonal();
    predict_blocks(ens, &gram.theta, &gram.k, &k_diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram_cross, gram_train, Activation};
    use approx::assert_relative_eq;

    fn scalar_gram(theta: f64, k: f64) -> GramPair {
        GramPair {
            k: DMatrix::from_element(1, 1, k),
            theta: DMatrix::from_element(1, 1, theta),
        }
    }

    fn cfg_at(time: TrainTime, lambda: f64) -> NetConfig {
        NetConfig {
            lambda,
            time_t: time,
            ..NetConfig::for_activation(Activation::Relu)
        }
    }

    fn wavy(n: usize, d: usize, phase: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |i, j| ((i * d + j) as f64 * 0.7391 + phase).sin() * 0.9)
    }

    fn pm_labels(n: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn retime_is_bitwise_identical_to_a_fresh_fit() {
        let x = wavy(12, 6, 0.3);
        let y = pm_labels(12);
        let gram = gram_train(&x, &cfg_at(TrainTime::Infinite, 0.1)).unwrap();
        let base = fit(&gram, &y, &cfg_at(TrainTime::Infinite, 0.1)).unwrap();
        for time in [
            TrainTime::Finite(100.0),
            TrainTime::Finite(1e6),
            TrainTime::Infinite,
        ] {
            let fast = retime(&base, time).unwrap();
            let slow = fit(&gram, &y, &cfg_at(time, 0.1)).unwrap();
            assert_eq!(fast.tt, slow.tt);
            assert_eq!(fast.alpha, slow.alpha);
            assert_eq!(fast.eigvals, slow.eigvals);
            assert_eq!(fast.cfg.time_t, time);
        }
    }

    #[test]
    fn scalar_converged_solution() {
        let gram = scalar_gram(2.0, 1.0);
        let y = DVector::from_element(1, 1.0);
        let ens = fit(&gram, &y, &cfg_at(TrainTime::Infinite, 0.0)).unwrap();
        assert_relative_eq!(ens.alpha[0], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn scalar_finite_time_closed_form() {
        let gram = scalar_gram(2.0, 1.0);
        let y = DVector::from_element(1, 1.0);
        let ens = fit(&gram, &y, &cfg_at(TrainTime::Finite(1.0), 0.0)).unwrap();
        // (1 - e^{-2})/2
        assert_relative_eq!(ens.alpha[0], 0.43233235838169365, max_relative = 1e-14);
    }

    #[test]
    fn short_time_limit_returns_the_prior() {
        let x = wavy(10, 4, 0.2);
        let cfg = cfg_at(TrainTime::Finite(1e-12), 0.0);
        let gram = gram_train(&x, &cfg).unwrap();
        let y = pm_labels(10);
        let ens = fit(&gram, &y, &cfg).unwrap();
        assert!(ens.tt.amax() < 1e-10);
        assert!(ens.alpha.amax() < 1e-10);
        let xt = wavy(5, 4, 1.9);
        let cross = gram_cross(&xt, &x, &cfg).unwrap();
        let pred = predict(&ens, &cross).unwrap();
        for i in 0..5 {
            assert!(pred.mean[i].abs() < 1e-10, "mean {}", pred.mean[i]);
            assert!(
                (pred.var[i] - cross.k_test_diag[i]).abs() < 1e-10,
                "var {} vs prior {}",
                pred.var[i],
                cross.k_test_diag[i]
            );
        }
        let on_train = predict_train(&ens, &gram).unwrap();
        for i in 0..10 {
            assert!(on_train.mean[i].abs() < 1e-10);
            assert!((on_train.var[i] - gram.k[(i, i)]).abs() < 1e-10);
        }
    }

    #[test]
    fn converged_unregularized_ensemble_interpolates() {
        let x = wavy(12, 6, 0.8);
        let cfg = cfg_at(TrainTime::Infinite, 0.0);
        let gram = gram_train(&x, &cfg).unwrap();
        let y = pm_labels(12);
        let ens = fit(&gram, &y, &cfg).unwrap();
        let pred = predict_train(&ens, &gram).unwrap();
        for i in 0..12 {
            assert!(
                (pred.mean[i] - y[i]).abs() <= 1e-8,
                "no interpolation at {i}: {} vs {}",
                pred.mean[i],
                y[i]
            );
            assert!(pred.var[i] >= ens.var_floor);
            assert!(pred.var[i] <= 1e-9, "posterior variance {} not collapsed", pred.var[i]);
        }
    }

    // Independent oracle: all quantities via explicit 2x2 adjugate inverses,
    // no eigendecomposition anywhere.
    #[test]
    fn two_point_variance_matches_hand_expansion() {
        let theta = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]);
        let gram = GramPair {
            k: k.clone(),
            theta: theta.clone(),
        };
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let lambda = 0.1;
        let cfg = cfg_at(TrainTime::Infinite, lambda);
        let ens = fit(&gram, &y, &cfg).unwrap();

        let reg = lambda * (2.0 + 1.5) / 2.0;
        assert_relative_eq!(ens.reg_add, reg, max_relative = 1e-14);
        let a = 2.0 + reg;
        let b = 0.3;
        let c = 0.3;
        let d = 1.5 + reg;
        let det = a * d - b * c;
        let inv = [d / det, -b / det, -c / det, a / det]; // row-major 2x2

        let theta_star = [0.9, 0.4];
        let k_star = [0.5, 0.1];
        let k_self = 1.1;
        // p = theta_star · inv
        let p = [
            theta_star[0] * inv[0] + theta_star[1] * inv[2],
            theta_star[0] * inv[1] + theta_star[1] * inv[3],
        ];
        let expected_mean = p[0] * y[0] + p[1] * y[1];
        // p K p^T
        let kp = [
            k[(0, 0)] * p[0] + k[(0, 1)] * p[1],
            k[(1, 0)] * p[0] + k[(1, 1)] * p[1],
        ];
        let quad = p[0] * kp[0] + p[1] * kp[1];
        let cross_term = p[0] * k_star[0] + p[1] * k_star[1];
        let expected_var = k_self + quad - 2.0 * cross_term;

        let cross = CrossGram {
            k_cross: DMatrix::from_row_slice(1, 2, &k_star),
            theta_cross: DMatrix::from_row_slice(1, 2, &theta_star),
            k_test_diag: DVector::from_element(1, k_self),
        };
        let pred = predict(&ens, &cross).unwrap();
        assert_relative_eq!(pred.mean[0], expected_mean, max_relative = 1e-10);
        assert_relative_eq!(pred.var[0], expected_var, max_relative = 1e-10);
    }

    #[test]
    fn saturated_time_equals_converged_limit() {
        let x = wavy(10, 5, 0.1);
        let cfg_fin = cfg_at(TrainTime::Finite(1e12), 0.5);
        let cfg_inf = cfg_at(TrainTime::Infinite, 0.5);
        let gram = gram_train(&x, &cfg_fin).unwrap();
        let y = pm_labels(10);
        let ens_fin = fit(&gram, &y, &cfg_fin).unwrap();
        let ens_inf = fit(&gram, &y, &cfg_inf).unwrap();
        assert!(ens_fin.eigvals.iter().all(|&e| e >= 1e-6));
        let xt = wavy(6, 5, 2.4);
        let cross = gram_cross(&xt, &x, &cfg_fin).unwrap();
        let p_fin = predict(&ens_fin, &cross).unwrap();
        let p_inf = predict(&ens_inf, &cross).unwrap();
        for i in 0..6 {
            assert_relative_eq!(p_fin.mean[i], p_inf.mean[i], max_relative = 1e-6);
            assert_relative_eq!(p_fin.var[i], p_inf.var[i], max_relative = 1e-6);
        }
    }

    // Direct-solve oracle: training residuals via LU solves of the
    // regularized system, plus the regularization-monotonicity check.
    #[test]
    fn training_residual_grows_with_regularization() {
        let x = wavy(14, 5, 0.6);
        let y = pm_labels(14);
        let mut mses = Vec::new();
        for lambda in [0.001, 1.0] {
            let cfg = cfg_at(TrainTime::Infinite, lambda);
            let gram = gram_train(&x, &cfg).unwrap();
            let ens = fit(&gram, &y, &cfg).unwrap();
            let pred = predict_train(&ens, &gram).unwrap();

            let reg = lambda * gram.theta.trace() / 14.0;
            let mut reg_theta = gram.theta.clone();
            for i in 0..14 {
                reg_theta[(i, i)] += reg;
            }
            let alpha_direct = reg_theta.lu().solve(&y).unwrap();
            let mean_direct = &gram.theta * alpha_direct;
            for i in 0..14 {
                assert_relative_eq!(pred.mean[i], mean_direct[i], max_relative = 1e-8);
            }
            let mse = (0..14)
                .map(|i| (pred.mean[i] - y[i]).powi(2))
                .sum::<f64>()
                / 14.0;
            mses.push(mse);
        }
        assert!(
            mses[1] > mses[0],
            "residual must grow with lambda: {mses:?}"
        );
    }

    #[test]
    fn mean_is_exactly_linear_in_labels() {
        let x = wavy(9, 4, 1.4);
        let cfg = cfg_at(TrainTime::Finite(50.0), 0.2);
        let gram = gram_train(&x, &cfg).unwrap();
        let y = pm_labels(9);
        let y2 = &y * 2.0;
        let ens = fit(&gram, &y, &cfg).unwrap();
        let ens2 = fit(&gram, &y2, &cfg).unwrap();
        let xt = wavy(4, 4, 0.9);
        let cross = gram_cross(&xt, &x, &cfg).unwrap();
        let m1 = predict(&ens, &cross).unwrap().mean;
        let m2 = predict(&ens2, &cross).unwrap().mean;
        for i in 0..4 {
            assert_eq!(m2[i], 2.0 * m1[i], "doubling labels must double means exactly");
        }
    }

    #[test]
    fn eigendecomposition_reconstructs_and_is_orthonormal() {
        let x = wavy(30, 6, 0.25);
        let cfg = cfg_at(TrainTime::Infinite, 0.3);
        let gram = gram_train(&x, &cfg).unwrap();
        let ens = fit(&gram, &pm_labels(30), &cfg).unwrap();

        let mut theta_star = gram.theta.clone();
        for i in 0..30 {
            theta_star[(i, i)] += ens.reg_add;
        }
        let mut recon = ens.eigvecs.clone();
        for j in 0..30 {
            for i in 0..30 {
                recon[(i, j)] *= ens.eigvals[j];
            }
        }
        let recon = recon * ens.eigvecs.transpose();
        let err = (&recon - &theta_star).amax();
        assert!(err <= 1e-8 * theta_star.amax(), "reconstruction error {err}");

        let gram_v = ens.eigvecs.transpose() * &ens.eigvecs;
        for i in 0..30 {
            for j in 0..30 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram_v[(i, j)] - expect).abs() <= 1e-8,
                    "eigvec inner product ({i},{j}) = {}",
                    gram_v[(i, j)]
                );
            }
        }
    }

    #[test]
    fn exactly_singular_kernel_is_rejected_only_when_converged_and_unregularized() {
        // rank-one 2x2: eigenvalues {0, 2}
        let gram = GramPair {
            k: DMatrix::from_element(2, 2, 1.0),
            theta: DMatrix::from_element(2, 2, 1.0),
        };
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let err = fit(&gram, &y, &cfg_at(TrainTime::Infinite, 0.0)).unwrap_err();
        assert!(matches!(err, Error::SingularKernel(_)), "{err:?}");
        // regularization rescues the same task
        assert!(fit(&gram, &y, &cfg_at(TrainTime::Infinite, 0.01)).is_ok());
        // and so does finite time (the response stays finite at e = 0)
        let ens = fit(&gram, &y, &cfg_at(TrainTime::Finite(100.0), 0.0)).unwrap();
        assert!(ens.alpha.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let gram = scalar_gram(2.0, 1.0);
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        assert!(fit(&gram, &y, &cfg_at(TrainTime::Infinite, 0.1)).is_err());

        let ens = fit(
            &gram,
            &DVector::from_element(1, 1.0),
            &cfg_at(TrainTime::Infinite, 0.1),
        )
        .unwrap();
        let cross = CrossGram {
            k_cross: DMatrix::zeros(2, 3),
            theta_cross: DMatrix::zeros(2, 3),
            k_test_diag: DVector::from_element(2, 1.0),
        };
        assert!(predict(&ens, &cross).is_err());
    }
}
