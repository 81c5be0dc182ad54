//! Mutual-information bounds between inputs and the ensemble output.
//!
//! Both bounds consume only the per-point predictive Gaussians p(z|xᵢ) =
//! N(μᵢ, σᵢ²) on the training set. Per Monte-Carlo round, one draw zᵢ is
//! taken from each conditional and the average log-ratio between the own
//! density and the mean density under the other conditionals is formed; the
//! upper bound excludes the own term from the denominator (leave-one-out),
//! the lower bound includes it, which caps every round at ln N.
//!
//! Determinism is by construction order-independent: each draw's seed is
//! derived from the round index and the bit patterns of (μᵢ, σᵢ²), never
//! from the point's position, and every reduction sums in sorted order, so
//! permuting the points permutes nothing in the result.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::PredictiveGaussian;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, mix_in, rng_from, Purpose};

/// Upper and lower MI bounds in nats, with the validity verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub i_ub_nats: f64,
    pub i_lb_nats: f64,
    /// Number of training points the bounds were computed over.
    pub n: usize,
    /// Monte-Carlo rounds actually used (1 in mean-plug-in mode).
    pub mc_rounds: usize,
    pub seed: u64,
    /// Whether i_ub_nats ≤ ln n, the filter for usable estimates.
    pub valid: bool,
}

/// Estimator options; the default draws 32 rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiOptions {
    pub mc_rounds: usize,
    /// Replace sampling by the deterministic plug-in z = μ (one round).
    pub mean_plug_in: bool,
}

impl Default for MiOptions {
    fn default() -> Self {
        MiOptions {
            mc_rounds: 32,
            mean_plug_in: false,
        }
    }
}

const LN_2PI: f64 = 1.8378770664093455;

/// Log-density of N(mean, var) at z.
pub fn gaussian_logpdf(z: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    let d = z - mean;
    Ok(-0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var))
}

/// True iff the upper bound passes the usability filter i_ub ≤ ln n.
pub fn mi_validity(i_ub_nats: f64, n: usize) -> bool {
    i_ub_nats <= (n as f64).ln()
}

fn check_inputs(pred: &PredictiveGaussian, rounds: usize) -> Result<usize> {
    let n = pred.mean.len();
    if n != pred.var.len() {
        return Err(Error::DimMismatch(format!(
            "{n} means vs {} variances",
            pred.var.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "MI bounds need at least 2 points, got {n}"
        )));
    }
    if rounds < 1 {
        return Err(Error::InvalidConfig("mc_rounds must be at least 1".into()));
    }
    for i in 0..n {
        if !(pred.var[i] > 0.0) {
            return Err(Error::NonPositiveVariance(pred.var[i]));
        }
        if !pred.mean[i].is_finite() || !pred.var[i].is_finite() {
            return Err(Error::InvalidConfig(
                "predictive parameters must be finite".into(),
            ));
        }
    }
    Ok(n)
}

/// One draw per point, seeded by round index and the point's own (μ, σ²)
/// bit patterns — independent of point order.
fn draw_z(base: u64, round: usize, mean: f64, var: f64) -> f64 {
    let s = mix_in(
        mix_in(mix_in(base, round as u64), mean.to_bits()),
        var.to_bits(),
    );
    let g: f64 = rng_from(s).sample(StandardNormal);
    mean + var.sqrt() * g
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v.iter().sum()
}

/// log of the mean density over the given candidates, as (anchor, offset):
/// returns m + ln(mean of exp(l - m)) with m the max candidate.
fn log_mean_density(logs: &[f64]) -> f64 {
    let m = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let terms: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let count = terms.len() as f64;
    m + (sorted_sum(terms) / count).ln()
}

/// Per-round values of both bounds, sharing the same z draws.
fn mi_rounds(
    pred: &PredictiveGaussian,
    seed: u64,
    rounds: usize,
    plug_in: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = check_inputs(pred, rounds)?;
    let base = derive_seed(seed, 0, Purpose::MiDraws);
    let ln_n = (n as f64).ln();

    // per-point density constants
    let log_norm: Vec<f64> = (0..n)
        .map(|j| -0.5 * (LN_2PI + pred.var[j].ln()))
        .collect();
    let inv2: Vec<f64> = (0..n).map(|j| 1.0 / (2.0 * pred.var[j])).collect();

    let effective_rounds = if plug_in { 1 } else { rounds };
    let mut ub_rounds = Vec::with_capacity(effective_rounds);
    let mut lb_rounds = Vec::with_capacity(effective_rounds);
    let mut logs = vec![0.0; n];
    for r in 0..effective_rounds {
        let mut ub_terms = Vec::with_capacity(n);
        let mut lb_terms = Vec::with_capacity(n);
        for i in 0..n {
            let z = if plug_in {
                pred.mean[i]
            } else {
                draw_z(base, r, pred.mean[i], pred.var[i])
            };
            for j in 0..n {
                let d = z - pred.mean[j];
                logs[j] = log_norm[j] - d * d * inv2[j];
            }
            let own = logs[i];
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| logs[j]).collect();
            ub_terms.push(own - log_mean_density(&others));
            lb_terms.push(own - log_mean_density(&logs));
        }
        ub_rounds.push(sorted_sum(ub_terms) / n as f64);
        // the inclusive denominator caps each round at ln N; shave only the
        // final-rounding dust above it
        lb_rounds.push((sorted_sum(lb_terms) / n as f64).min(ln_n));
    }
    Ok((ub_rounds, lb_rounds))
}

fn mean_in_order(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Leave-one-out upper bound on I(X;Z) in nats, averaged over `s` rounds.
pub fn mi_upper(pred: &PredictiveGaussian, seed: u64, s: usize) -> Result<f64> {
    Ok(mean_in_order(&mi_rounds(pred, seed, s, false)?.0))
}

/// Per-round values behind [`mi_upper`].
pub fn mi_upper_rounds(pred: &PredictiveGaussian, seed: u64, s: usize) -> Result<Vec<f64>> {
    Ok(mi_rounds(pred, seed, s, false)?.0)
}

/// Inclusive-denominator lower bound on I(X;Z) in nats; every round is
/// structurally ≤ ln N.
pub fn mi_lower(pred: &PredictiveGaussian, seed: u64, s: usize) -> Result<f64> {
    Ok(mean_in_order(&mi_rounds(pred, seed, s, false)?.1))
}

/// Per-round values behind [`mi_lower`].
pub fn mi_lower_rounds(pred: &PredictiveGaussian, seed: u64, s: usize) -> Result<Vec<f64>> {
    Ok(mi_rounds(pred, seed, s, false)?.1)
}

/// Both bounds over shared draws, with the validity verdict attached.
pub fn estimate_mi(pred: &PredictiveGaussian, seed: u64, opts: MiOptions) -> Result<MiEstimate> {
    let (ub, lb) = mi_rounds(pred, seed, opts.mc_rounds, opts.mean_plug_in)?;
    let i_ub_nats = mean_in_order(&ub);
    let i_lb_nats = mean_in_order(&lb);
    let n = pred.mean.len();
    Ok(MiEstimate {
        i_ub_nats,
        i_lb_nats,
        n,
        mc_rounds: ub.len(),
        seed,
        valid: mi_validity(i_ub_nats, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_distr::StandardNormal;

    fn pred_from(means: &[f64], vars: &[f64]) -> PredictiveGaussian {
        PredictiveGaussian {
            mean: DVector::from_column_slice(means),
            var: DVector::from_column_slice(vars),
        }
    }

    #[test]
    fn logpdf_frozen_values() {
        assert_eq!(gaussian_logpdf(0.0, 0.0, 1.0).unwrap(), -0.91893853320467274);
        assert_eq!(gaussian_logpdf(1.0, 0.0, 1.0).unwrap(), -1.4189385332046727);
        let v = gaussian_logpdf(3.0, 1.0, 4.0).unwrap();
        assert!((v - -2.1120857137646181).abs() < 1e-15, "{v}");
        assert!(matches!(
            gaussian_logpdf(0.0, 0.0, 0.0),
            Err(Error::NonPositiveVariance(_))
        ));
        assert!(gaussian_logpdf(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn identical_conditionals_give_exactly_zero() {
        let pred = pred_from(&[0.3; 10], &[0.7; 10]);
        assert_eq!(mi_upper(&pred, 5, 4).unwrap(), 0.0);
        assert_eq!(mi_lower(&pred, 5, 4).unwrap(), 0.0);
    }

    #[test]
    fn two_separated_points_blow_up_the_upper_bound() {
        let pred = pred_from(&[0.0, 100.0], &[1.0, 1.0]);
        let ub = mi_upper(&pred, 1, 8).unwrap();
        assert!(ub > 100.0, "ub = {ub}");
    }

    #[test]
    fn two_separated_points_saturate_the_lower_bound_at_ln2() {
        let pred = pred_from(&[0.0, 100.0], &[1.0, 1.0]);
        let lb = mi_lower(&pred, 1, 8).unwrap();
        assert!((lb - std::f64::consts::LN_2).abs() < 1e-12, "lb = {lb}");
    }

    #[test]
    fn lower_bound_cap_holds_every_round() {
        let n = 20;
        let means: Vec<f64> = (0..n).map(|i| (i as f64) * 7.0).collect();
        let vars: Vec<f64> = (0..n).map(|i| 0.5 + 0.05 * i as f64).collect();
        let pred = pred_from(&means, &vars);
        let ln_n = (n as f64).ln();
        for (s, round) in mi_lower_rounds(&pred, 3, 16).unwrap().iter().enumerate() {
            assert!(*round <= ln_n, "round {s}: {round} > ln n = {ln_n}");
        }
        let est = estimate_mi(&pred, 3, MiOptions::default()).unwrap();
        assert!(est.i_lb_nats <= ln_n + 1e-9);
    }

    #[test]
    fn shared_draws_order_upper_above_lower_when_separated() {
        let n = 8;
        let means: Vec<f64> = (0..n).map(|i| (i as f64) * 50.0).collect();
        let pred = pred_from(&means, &[1.0; 8]);
        let (ub, lb) = mi_rounds(&pred, 11, 12, false).unwrap();
        for r in 0..12 {
            assert!(
                ub[r] >= lb[r],
                "round {r}: ub {} < lb {}",
                ub[r],
                lb[r]
            );
        }
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let n = 50;
        let means: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.731 + 0.2).sin() * 3.0).collect();
        let vars: Vec<f64> = (0..n).map(|i| 0.4 + ((i as f64) * 0.417).cos().abs()).collect();
        let pred = pred_from(&means, &vars);

        // deterministic permutation: reverse then swap halves
        let perm: Vec<usize> = (0..n).map(|i| (i * 17 + 3) % n).collect();
        {
            // the map i -> (17i+3) mod 50 is a bijection since gcd(17,50)=1
            let mut seen = vec![false; n];
            for &p in &perm {
                assert!(!seen[p]);
                seen[p] = true;
            }
        }
        let means_p: Vec<f64> = perm.iter().map(|&p| means[p]).collect();
        let vars_p: Vec<f64> = perm.iter().map(|&p| vars[p]).collect();
        let pred_p = pred_from(&means_p, &vars_p);

        let seed = 99;
        assert_eq!(
            mi_upper(&pred, seed, 6).unwrap(),
            mi_upper(&pred_p, seed, 6).unwrap()
        );
        assert_eq!(
            mi_lower(&pred, seed, 6).unwrap(),
            mi_lower(&pred_p, seed, 6).unwrap()
        );
    }

    #[test]
    fn sandwich_across_random_instances() {
        let mut diffs = Vec::new();
        for inst in 0..100 {
            let n = 12;
            let means: Vec<f64> = (0..n)
                .map(|i| ((i * 7 + inst * 13) as f64 * 0.611).sin() * 2.0)
                .collect();
            let vars: Vec<f64> = (0..n)
                .map(|i| 0.6 + ((i * 3 + inst) as f64 * 0.377).cos().powi(2))
                .collect();
            let pred = pred_from(&means, &vars);
            let (ub, lb) = mi_rounds(&pred, inst as u64, 10, false).unwrap();
            diffs.push(mean_in_order(&ub) - mean_in_order(&lb));
        }
        let m = mean_in_order(&diffs);
        let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (diffs.len() - 1) as f64;
        let se = (var / diffs.len() as f64).sqrt();
        assert!(
            m >= -3.0 * se,
            "mean(ub - lb) = {m} below -3 pooled SE = {}",
            -3.0 * se
        );
    }

    // Independent oracle: the same expectation evaluated by naive-density
    // brute-force Monte Carlo with fresh randomness (no log-sum-exp, no
    // content-addressed seeding).
    #[test]
    fn upper_bound_matches_bruteforce_monte_carlo() {
        let n = 100;
        let mut setup = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let means: Vec<f64> = (0..n)
            .map(|_| {
                let g: f64 = setup.sample(StandardNormal);
                2.0 * g
            })
            .collect();
        let vars: Vec<f64> = (0..n)
            .map(|_| 0.8 + 0.4 * setup.random::<f64>())
            .collect();
        let pred = pred_from(&means, &vars);

        let s = 64;
        let rounds = mi_upper_rounds(&pred, 7, s).unwrap();
        let est = mean_in_order(&rounds);
        let rv = rounds.iter().map(|r| (r - est) * (r - est)).sum::<f64>() / (s - 1) as f64;
        let se_est = (rv / s as f64).sqrt();

        // 10^4 draws per point = 10^6 total
        let t = 10_000;
        let mut bf_mean_acc = 0.0;
        let mut bf_var_acc = 0.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(555);
        for i in 0..n {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..t {
                let g: f64 = rng.sample(StandardNormal);
                let z = means[i] + vars[i].sqrt() * g;
                let own = (-(z - means[i]).powi(2) / (2.0 * vars[i])).exp()
                    / (2.0 * std::f64::consts::PI * vars[i]).sqrt();
                let mut denom = 0.0;
                for j in 0..n {
                    if j != i {
                        denom += (-(z - means[j]).powi(2) / (2.0 * vars[j])).exp()
                            / (2.0 * std::f64::consts::PI * vars[j]).sqrt();
                    }
                }
                let term = (own / (denom / (n - 1) as f64)).ln();
                sum += term;
                sumsq += term * term;
            }
            let m_i = sum / t as f64;
            let v_i = (sumsq / t as f64 - m_i * m_i).max(0.0);
            bf_mean_acc += m_i;
            bf_var_acc += v_i / t as f64;
        }
        let bf = bf_mean_acc / n as f64;
        let se_bf = (bf_var_acc / (n * n) as f64).sqrt();

        let tol = 2.0 * (se_est * se_est + se_bf * se_bf).sqrt();
        assert!(
            (est - bf).abs() <= tol,
            "estimator {est} vs brute force {bf}, tolerance {tol}"
        );
    }

    #[test]
    fn validity_filter() {
        assert!(mi_validity(1000f64.ln() - 0.01, 1000));
        assert!(!mi_validity(8.96, 1000)); // 8.96 > ln 1000 = 6.9078
        assert!(mi_validity(0.0, 2));
    }

    #[test]
    fn plug_in_mode_is_deterministic_and_recorded() {
        let pred = pred_from(&[0.0, 1.0, -0.5, 2.0], &[0.5, 0.7, 0.9, 1.1]);
        let opts = MiOptions {
            mc_rounds: 32,
            mean_plug_in: true,
        };
        let a = estimate_mi(&pred, 1, opts).unwrap();
        let b = estimate_mi(&pred, 2, opts).unwrap();
        assert_eq!(a.i_ub_nats, b.i_ub_nats, "plug-in must ignore the seed");
        assert_eq!(a.mc_rounds, 1);
        let sampled = estimate_mi(&pred, 1, MiOptions::default()).unwrap();
        assert_eq!(sampled.mc_rounds, 32);
        assert_ne!(sampled.i_ub_nats, a.i_ub_nats);
        assert_eq!(sampled.valid, mi_validity(sampled.i_ub_nats, 4));
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = pred_from(&[0.0], &[1.0]);
        assert!(mi_upper(&one, 0, 4).is_err());
        let pred = pred_from(&[0.0, 1.0], &[1.0, 1.0]);
        assert!(mi_upper(&pred, 0, 0).is_err());
        let bad_var = pred_from(&[0.0, 1.0], &[1.0, 0.0]);
        assert!(matches!(
            mi_upper(&bad_var, 0, 4),
            Err(Error::NonPositiveVariance(_))
        ));
    }
}
