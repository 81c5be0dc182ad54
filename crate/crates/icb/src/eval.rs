//! Classification metrics, adversarial robustness evaluation, and rank
//! statistics.
//!
//! Accuracies are percentages in `[0, 100]`; generalization-error ("ge")
//! fields are percentage-point gaps relative to training accuracy.  The
//! FGSM attack perturbs inputs along the sign of the squared-error loss
//! gradient, which for an ensemble-mean predictor `μ(x)` is
//! `(μ(x) − y)·∇ₓμ(x)`, and re-clamps to the `[-1, 1]` input box.
//! Kendall rank correlation uses the tie-corrected tau-b statistic with
//! the normal-approximation two-sided p-value.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{PredictiveGaussian, TrainedEnsemble};
use crate::error::{Error, Result};
use crate::kernels::{gram_cross, kernel_grad_coeffs, GradCoeffs};

/// Accuracy and generalization-gap summary for one trained ensemble.
///
/// `ge_clean`, `ge_awgn`, and `ge_fgsm` are `train_acc` minus the test
/// accuracy on clean, noise-perturbed, and adversarially perturbed test
/// inputs respectively, in percentage points.  `ge_mse` is
/// `test_mse − train_mse`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub train_acc: f64,
    pub test_acc: f64,
    pub ge_clean: f64,
    pub ge_awgn: f64,
    pub ge_fgsm: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub ge_mse: f64,
}

/// Kendall rank-correlation summary over `n_pairs` paired observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub tau: f64,
    pub p_value: f64,
    pub n_pairs: usize,
}

/// Sign-agreement accuracy of ensemble means against ±1 labels, as a
/// percentage.  A mean of exactly zero counts as the positive class.
pub fn accuracy(mean: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if mean.is_empty() {
        return Err(Error::EmptyInput(
            "accuracy needs at least one prediction".into(),
        ));
    }
    if mean.len() != y.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} labels",
            mean.len(),
            y.len()
        )));
    }
    let mut hits = 0usize;
    for i in 0..mean.len() {
        let m = mean[i];
        if !m.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "non-finite prediction mean at index {i}"
            )));
        }
        let yi = y[i];
        if yi != 1.0 && yi != -1.0 {
            return Err(Error::InvalidConfig(format!(
                "labels must be exactly ±1, got {yi} at index {i}"
            )));
        }
        if (m >= 0.0) == (yi > 0.0) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / mean.len() as f64)
}

/// Mean squared error of ensemble means against regression targets.
pub fn mse(mean: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if mean.is_empty() {
        return Err(Error::EmptyInput(
            "mse needs at least one prediction".into(),
        ));
    }
    if mean.len() != y.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} targets",
            mean.len(),
            y.len()
        )));
    }
    let mut acc = 0.0;
    for i in 0..mean.len() {
        let m = mean[i];
        if !m.is_finite() || !y[i].is_finite() {
            return Err(Error::NumericalDomain(format!(
                "non-finite value at index {i}"
            )));
        }
        let d = m - y[i];
        acc += d * d;
    }
    Ok(acc / mean.len() as f64)
}

/// Assembles the evaluation summary from the four predictive distributions
/// of one trained ensemble: on its training inputs and on clean, AWGN, and
/// FGSM variants of the test inputs.
pub fn eval_summary(
    train: &PredictiveGaussian,
    test_clean: &PredictiveGaussian,
    test_awgn: &PredictiveGaussian,
    test_fgsm: &PredictiveGaussian,
    y_trn: &DVector<f64>,
    y_tst: &DVector<f64>,
) -> Result<EvalResult> {
    let train_acc = accuracy(&train.mean, y_trn)?;
    let test_acc = accuracy(&test_clean.mean, y_tst)?;
    let awgn_acc = accuracy(&test_awgn.mean, y_tst)?;
    let fgsm_acc = accuracy(&test_fgsm.mean, y_tst)?;
    let train_mse = mse(&train.mean, y_trn)?;
    let test_mse = mse(&test_clean.mean, y_tst)?;
    Ok(EvalResult {
        train_acc,
        test_acc,
        ge_clean: train_acc - test_acc,
        ge_awgn: train_acc - awgn_acc,
        ge_fgsm: train_acc - fgsm_acc,
        train_mse,
        test_mse,
        ge_mse: test_mse - train_mse,
    })
}

/// Fast-gradient-sign attack on the test inputs under squared-error loss
/// of the ensemble-mean predictor.
///
/// Each test row moves by `eps` along `sign((μ(x) − y)·∇ₓμ(x))`
/// coordinate-wise, where a zero gradient component contributes zero
/// displacement, and the result is clamped back into `[-1, 1]`.  With
/// `eps == 0` the inputs are returned bit-identically.
pub fn fgsm_attack(
    ens: &TrainedEnsemble,
    x_trn: &DMatrix<f64>,
    x_tst: &DMatrix<f64>,
    y_tst: &DVector<f64>,
    eps: f64,
) -> Result<DMatrix<f64>> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "fgsm eps must be finite and non-negative, got {eps}"
        )));
    }
    if y_tst.len() != x_tst.nrows() {
        return Err(Error::DimMismatch(format!(
            "{} test rows vs {} test labels",
            x_tst.nrows(),
            y_tst.len()
        )));
    }
    if x_trn.nrows() != ens.alpha.len() {
        return Err(Error::DimMismatch(format!(
            "{} train rows vs ensemble fitted on {}",
            x_trn.nrows(),
            ens.alpha.len()
        )));
    }
    if eps == 0.0 {
        return Ok(x_tst.clone());
    }

    let cross = gram_cross(x_tst, x_trn, &ens.cfg)?;
    let mean = &cross.theta_cross * &ens.alpha;
    let coeffs = kernel_grad_coeffs(x_tst, x_trn, &ens.cfg)?;
    fgsm_attack_precomputed(ens, &coeffs, &mean, x_trn, x_tst, y_tst, eps)
}

/// [`fgsm_attack`] with the gradient coefficients and clean ensemble means
/// supplied by the caller.  The coefficients depend only on the inputs and
/// kernel configuration, so they can be shared across re-timings of the
/// same ensemble.
pub fn fgsm_attack_precomputed(
    ens: &TrainedEnsemble,
    coeffs: &GradCoeffs,
    clean_mean: &DVector<f64>,
    x_trn: &DMatrix<f64>,
    x_tst: &DMatrix<f64>,
    y_tst: &DVector<f64>,
    eps: f64,
) -> Result<DMatrix<f64>> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "fgsm eps must be finite and non-negative, got {eps}"
        )));
    }
    let (m, d) = (x_tst.nrows(), x_tst.ncols());
    if y_tst.len() != m || clean_mean.len() != m {
        return Err(Error::DimMismatch(format!(
            "{m} test rows vs {} labels / {} means",
            y_tst.len(),
            clean_mean.len()
        )));
    }
    if coeffs.theta_self.nrows() != m || coeffs.theta_self.ncols() != ens.alpha.len() {
        return Err(Error::DimMismatch(format!(
            "gradient coefficients are {}x{}, expected {}x{}",
            coeffs.theta_self.nrows(),
            coeffs.theta_self.ncols(),
            m,
            ens.alpha.len()
        )));
    }
    if eps == 0.0 {
        return Ok(x_tst.clone());
    }
    let mean = clean_mean;

    // ∇ₓμ(xᵢ) = Σⱼ αⱼ·(theta_self[(i,j)]·xᵢ + theta_other[(i,j)]·xⱼ)
    //         = (theta_self·α)ᵢ·xᵢ + row i of (theta_other·diag(α))·X_trn
    let row_scale = &coeffs.theta_self * &ens.alpha;
    let mut weights = coeffs.theta_other.clone();
    for (j, aj) in ens.alpha.iter().enumerate() {
        weights.column_mut(j).scale_mut(*aj);
    }
    let mut grad = weights * x_trn;
    for i in 0..m {
        let s = row_scale[i];
        for k in 0..d {
            grad[(i, k)] += s * x_tst[(i, k)];
        }
    }

    let mut out = x_tst.clone();
    for i in 0..m {
        let f = mean[i] - y_tst[i];
        if !f.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "non-finite attack residual at test row {i}"
            )));
        }
        for k in 0..d {
            let g = f * grad[(i, k)];
            let step = if g > 0.0 {
                eps
            } else if g < 0.0 {
                -eps
            } else {
                0.0
            };
            out[(i, k)] = (out[(i, k)] + step).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

/// Fraction (as a percentage) of `(ge_percent, bound_fraction)` records
/// where the observed generalization error, converted to a fraction,
/// falls strictly below the bound.
pub fn satisfaction_rate(records: &[(f64, f64)]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput(
            "satisfaction_rate needs at least one record".into(),
        ));
    }
    let mut satisfied = 0usize;
    for (i, &(ge_percent, bound)) in records.iter().enumerate() {
        if !ge_percent.is_finite() || !bound.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "non-finite record at index {i}"
            )));
        }
        if ge_percent / 100.0 < bound {
            satisfied += 1;
        }
    }
    Ok(100.0 * satisfied as f64 / records.len() as f64)
}

/// Tie statistics over maximal runs of equal values in a sorted slice:
/// Σ t(t−1)/2, Σ t(t−1)(2t+5), and Σ t(t−1)(t−2) over run lengths t.
fn tie_group_stats(sorted: &[f64]) -> (u128, u128, u128) {
    let (mut pairs, mut weighted, mut triples) = (0u128, 0u128, 0u128);
    let mut start = 0usize;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] != sorted[start] {
            let t = (i - start) as u128;
            if t >= 2 {
                pairs += t * (t - 1) / 2;
                weighted += t * (t - 1) * (2 * t + 5);
                triples += t * (t - 1) * (t - 2);
            }
            start = i;
        }
    }
    (pairs, weighted, triples)
}

/// Counts strict inversions while merge-sorting `v` ascending.  Equal
/// elements are taken from the left half first, so ties contribute no
/// inversions.
fn merge_count_inversions(v: &mut [f64]) -> u128 {
    let n = v.len();
    let mut buf = v.to_vec();
    let mut inversions = 0u128;
    let mut width = 1usize;
    while width < n {
        let mut lo = 0usize;
        while lo + width < n {
            let mid = lo + width;
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    j += 1;
                    inversions += (mid - i) as u128;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            while i < mid {
                buf[k] = v[i];
                i += 1;
                k += 1;
            }
            while j < hi {
                buf[k] = v[j];
                j += 1;
                k += 1;
            }
            v[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo += 2 * width;
        }
        width *= 2;
    }
    inversions
}

/// Kendall tau-b rank correlation with tie correction, plus the two-sided
/// p-value from the normal approximation to the concordance statistic.
///
/// Runs in O(n log n) via inversion counting.  Errors with
/// `DegenerateInput` when either input is entirely tied, since tau is
/// undefined there.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<RankResult> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::DimMismatch(format!(
            "rankings have lengths {} vs {}",
            n,
            b.len()
        )));
    }
    if n < 2 {
        return Err(Error::EmptyInput(
            "kendall_tau needs at least two paired observations".into(),
        ));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericalDomain(
            "kendall_tau inputs must be finite".into(),
        ));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let a_sorted: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
    let mut b_by_a: Vec<f64> = perm.iter().map(|&i| b[i]).collect();

    let (xtie, x1, x0) = tie_group_stats(&a_sorted);
    let mut joint_ties = 0u128;
    {
        let mut start = 0usize;
        for i in 1..=n {
            if i == n || a_sorted[i] != a_sorted[start] || b_by_a[i] != b_by_a[start] {
                let t = (i - start) as u128;
                joint_ties += t * (t - 1) / 2;
                start = i;
            }
        }
    }
    let discordant = merge_count_inversions(&mut b_by_a);
    let (ytie, y1, y0) = tie_group_stats(&b_by_a);

    let total = (n as u128) * (n as u128 - 1) / 2;
    if xtie == total {
        return Err(Error::DegenerateInput(
            "all entries of the first ranking are tied".into(),
        ));
    }
    if ytie == total {
        return Err(Error::DegenerateInput(
            "all entries of the second ranking are tied".into(),
        ));
    }

    // S = concordant − discordant; pairs untied in both rankings number
    // total − xtie − ytie + joint_ties.
    let s = total as i128 - xtie as i128 - ytie as i128 + joint_ties as i128
        - 2 * discordant as i128;
    let denom = (((total - xtie) * (total - ytie)) as f64).sqrt();
    let tau = ((s as f64) / denom).clamp(-1.0, 1.0);

    let nf = n as f64;
    let m = nf * (nf - 1.0);
    let mut var_s = (m * (2.0 * nf + 5.0) - x1 as f64 - y1 as f64) / 18.0
        + 2.0 * (xtie as f64) * (ytie as f64) / m;
    if n > 2 {
        var_s += (x0 as f64) * (y0 as f64) / (9.0 * m * (nf - 2.0));
    }
    if !(var_s > 0.0) {
        return Err(Error::DegenerateInput(
            "ties leave no variance in the concordance statistic".into(),
        ));
    }
    let z = (s as f64) / var_s.sqrt();
    let p_value = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok(RankResult {
        tau,
        p_value,
        n_pairs: n,
    })
}
