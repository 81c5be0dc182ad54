//! Data ingestion and binary task construction.
//!
//! Raw sources (IDX image files, CSV tables, synthetic clusters) load into a
//! [`RawDataset`] holding feature values in their native range. A binary
//! task is cut from a raw source by [`make_binary_task`], which draws
//! disjoint train/test samples, rescales inputs onto [-1, 1], and maps the
//! two chosen classes to labels -1/+1. Perturbation helpers produce the
//! label-randomized and noise-corrupted variants used by the evaluation
//! battery.

mod csvload;
mod idx;
mod synth;

pub use csvload::load_csv;
pub use idx::load_idx;
pub use synth::{synth_clusters, synth_ten_class, synth_two_gaussians};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, Purpose};

/// Provenance and shape information carried alongside raw feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    /// Human-readable origin, e.g. `idx:train-images` or a synth descriptor.
    pub source: String,
    /// `(rows, cols)` when the source was an image tensor.
    pub image_shape: Option<(usize, usize)>,
    /// Smallest and largest value the source can produce; task construction
    /// rescales this interval onto [-1, 1] globally (not per column).
    pub native_range: (f64, f64),
    /// Class ids run `0..n_classes`.
    pub n_classes: usize,
}

/// A loaded multi-class source, before any task construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    /// One sample per row (images already flattened), native-range values.
    pub inputs: DMatrix<f64>,
    /// Class id per row.
    pub labels: Vec<u8>,
    pub meta: DatasetMeta,
}

impl RawDataset {
    /// Validates that rows and labels agree and class ids are in range.
    pub fn new(inputs: DMatrix<f64>, labels: Vec<u8>, meta: DatasetMeta) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} input rows vs {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| (l as usize) >= meta.n_classes) {
            return Err(Error::InvalidConfig(format!(
                "class id {bad} out of range for {} classes",
                meta.n_classes
            )));
        }
        Ok(Self {
            inputs,
            labels,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn d(&self) -> usize {
        self.inputs.ncols()
    }
}

/// A binary task ready for kernel construction: inputs in [-1, 1], labels
/// exactly ±1, train and test drawn without index reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x_trn: DMatrix<f64>,
    pub y_trn: DVector<f64>,
    pub x_tst: DMatrix<f64>,
    pub y_tst: DVector<f64>,
    /// `(class_a, class_b)`; class_a maps to -1, class_b to +1.
    pub task: (u8, u8),
    pub seed: u64,
    /// Description of the input rescaling that was applied.
    pub normalization: String,
}

impl Dataset {
    pub fn n_trn(&self) -> usize {
        self.x_trn.nrows()
    }

    pub fn n_tst(&self) -> usize {
        self.x_tst.nrows()
    }

    pub fn d(&self) -> usize {
        self.x_trn.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.x_trn.nrows() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a task needs at least 2 training samples, got {}",
                self.x_trn.nrows()
            )));
        }
        if self.x_trn.nrows() != self.y_trn.len() || self.x_tst.nrows() != self.y_tst.len() {
            return Err(Error::DimMismatch(
                "input rows and label counts disagree".into(),
            ));
        }
        if self.x_trn.ncols() != self.x_tst.ncols() {
            return Err(Error::DimMismatch(format!(
                "train dim {} vs test dim {}",
                self.x_trn.ncols(),
                self.x_tst.ncols()
            )));
        }
        let in_box = |m: &DMatrix<f64>| m.iter().all(|&v| (-1.0..=1.0).contains(&v));
        if !in_box(&self.x_trn) || !in_box(&self.x_tst) {
            return Err(Error::InvalidConfig(
                "inputs escaped [-1, 1] after rescaling".into(),
            ));
        }
        let pm = |y: &DVector<f64>| y.iter().all(|&v| v == -1.0 || v == 1.0);
        if !pm(&self.y_trn) || !pm(&self.y_tst) {
            return Err(Error::InvalidConfig("labels must be exactly ±1".into()));
        }
        Ok(())
    }
}

/// Which input perturbation to apply when scoring robust generalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbKind {
    Awgn,
    Fgsm,
}

/// Parameters for test-time input perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    /// Per-entry Gaussian noise variance (input units squared).
    pub awgn_var: f64,
    /// Max-norm attack radius (input units).
    pub fgsm_eps: f64,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.awgn_var >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "awgn_var must be >= 0, got {}",
                self.awgn_var
            )));
        }
        if !(self.fgsm_eps >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "fgsm_eps must be >= 0, got {}",
                self.fgsm_eps
            )));
        }
        Ok(())
    }
}

/// Affine map from `(lo, hi)` onto [-1, 1]; tolerates float excess up to
/// 1e-9 past the box and clamps it, anything larger is an error.
fn rescale_into_unit_box(v: f64, lo: f64, hi: f64) -> Result<f64> {
    let mapped = if hi > lo {
        (v - lo) * (2.0 / (hi - lo)) - 1.0
    } else {
        0.0
    };
    if mapped > 1.0 {
        if mapped - 1.0 > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "value {v} lies outside the declared native range [{lo}, {hi}]"
            )));
        }
        return Ok(1.0);
    }
    if mapped < -1.0 {
        if -1.0 - mapped > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "value {v} lies outside the declared native range [{lo}, {hi}]"
            )));
        }
        return Ok(-1.0);
    }
    Ok(mapped)
}

/// Draws a balanced binary task from two classes of a raw source.
///
/// Sampling is without replacement and train/test index sets are disjoint.
/// When `n_trn` (or `n_tst`) is odd, `class_a` receives the extra sample.
/// Inputs are rescaled from the source's native range onto [-1, 1];
/// `class_a` maps to label -1 and `class_b` to +1.
pub fn make_binary_task(
    raw: &RawDataset,
    class_a: u8,
    class_b: u8,
    n_trn: usize,
    n_tst: usize,
    seed: u64,
) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::InvalidConfig(format!(
            "task classes must differ, got ({class_a}, {class_b})"
        )));
    }
    for c in [class_a, class_b] {
        if (c as usize) >= raw.meta.n_classes {
            return Err(Error::InvalidConfig(format!(
                "class {c} out of range for {} classes",
                raw.meta.n_classes
            )));
        }
    }
    if n_trn < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_trn must be at least 2, got {n_trn}"
        )));
    }
    if n_tst < 1 {
        return Err(Error::InvalidConfig("n_tst must be at least 1".into()));
    }

    // class_a takes the ceil half of odd counts.
    let a_trn = n_trn - n_trn / 2;
    let b_trn = n_trn / 2;
    let a_tst = n_tst - n_tst / 2;
    let b_tst = n_tst / 2;

    let mut pool_a: Vec<usize> = Vec::new();
    let mut pool_b: Vec<usize> = Vec::new();
    for (i, &l) in raw.labels.iter().enumerate() {
        if l == class_a {
            pool_a.push(i);
        } else if l == class_b {
            pool_b.push(i);
        }
    }
    for (class, pool, needed) in [
        (class_a, &pool_a, a_trn + a_tst),
        (class_b, &pool_b, b_trn + b_tst),
    ] {
        if pool.len() < needed {
            return Err(Error::InsufficientSamples {
                class,
                needed,
                available: pool.len(),
            });
        }
    }

    let mut rng = rng_from(derive_seed(seed, 0, Purpose::TaskSplit));
    pool_a.shuffle(&mut rng);
    pool_b.shuffle(&mut rng);

    // Disjoint prefixes of each class pool, then a shuffled row order so
    // neither split is blocked by class.
    let mut trn: Vec<(usize, f64)> = pool_a[..a_trn].iter().map(|&i| (i, -1.0)).collect();
    trn.extend(pool_b[..b_trn].iter().map(|&i| (i, 1.0)));
    let mut tst: Vec<(usize, f64)> = pool_a[a_trn..a_trn + a_tst]
        .iter()
        .map(|&i| (i, -1.0))
        .collect();
    tst.extend(pool_b[b_trn..b_trn + b_tst].iter().map(|&i| (i, 1.0)));
    trn.shuffle(&mut rng);
    tst.shuffle(&mut rng);

    let (lo, hi) = raw.meta.native_range;
    let identity = lo == -1.0 && hi == 1.0;
    let d = raw.d();
    let gather = |rows: &[(usize, f64)]| -> Result<(DMatrix<f64>, DVector<f64>)> {
        let mut x = DMatrix::zeros(rows.len(), d);
        let mut y = DVector::zeros(rows.len());
        for (r, &(src, lab)) in rows.iter().enumerate() {
            for c in 0..d {
                let v = raw.inputs[(src, c)];
                x[(r, c)] = if identity {
                    v
                } else {
                    rescale_into_unit_box(v, lo, hi)?
                };
            }
            y[r] = lab;
        }
        Ok((x, y))
    };
    let (x_trn, y_trn) = gather(&trn)?;
    let (x_tst, y_tst) = gather(&tst)?;

    let ds = Dataset {
        x_trn,
        y_trn,
        x_tst,
        y_tst,
        task: (class_a, class_b),
        seed,
        normalization: if identity {
            "identity".to_string()
        } else {
            format!("affine[{lo},{hi}]->[-1,1]")
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Replaces training labels with i.i.d. uniform ±1 draws; inputs and the
/// test split are carried over bit-exactly.
pub fn randomize_labels(ds: &Dataset, seed: u64) -> Dataset {
    let mut rng = rng_from(derive_seed(seed, 0, Purpose::LabelRandomize));
    let y_trn = DVector::from_fn(ds.y_trn.len(), |_, _| {
        if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    });
    Dataset {
        y_trn,
        ..ds.clone()
    }
}

/// Adds i.i.d. Gaussian noise of the given variance to every entry, in
/// row-major order. Output is deliberately not clamped, so entries may leave
/// [-1, 1].
pub fn awgn_perturb(x: &DMatrix<f64>, var: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(var >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise variance must be >= 0, got {var}"
        )));
    }
    if var == 0.0 {
        return Ok(x.clone());
    }
    let dist = Normal::new(0.0, var.sqrt())
        .map_err(|e| Error::InvalidConfig(format!("bad noise scale: {e}")))?;
    let mut rng = rng_from(derive_seed(seed, 0, Purpose::Awgn));
    let mut out = x.clone();
    for r in 0..out.nrows() {
        for c in 0..out.ncols() {
            out[(r, c)] += rng.sample::<f64, _>(dist);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-class source with a unique marker value per row so draws can be
    /// traced: row i of class c has feature vector [marker(i), class-offset].
    fn traceable_raw(n_a: usize, n_b: usize) -> RawDataset {
        let n = n_a + n_b;
        let inputs = DMatrix::from_fn(n, 2, |r, c| match c {
            0 => r as f64, // unique per row
            _ => {
                if r < n_a {
                    10.0
                } else {
                    200.0
                }
            }
        });
        let mut labels = vec![0u8; n_a];
        labels.extend(vec![1u8; n_b]);
        let hi = 255.0f64.max((n - 1) as f64);
        RawDataset::new(
            inputs,
            labels,
            DatasetMeta {
                source: "test".into(),
                image_shape: None,
                native_range: (0.0, hi),
                n_classes: 2,
            },
        )
        .unwrap()
    }

    fn row_markers(x: &DMatrix<f64>) -> Vec<i64> {
        // invert the affine map back to the integer marker
        (0..x.nrows())
            .map(|r| ((x[(r, 0)] + 1.0) * 127.5).round() as i64)
            .collect()
    }

    #[test]
    fn split_sizes_balance_and_disjointness() {
        let raw = traceable_raw(60, 60);
        let ds = make_binary_task(&raw, 0, 1, 21, 30, 5).unwrap();
        assert_eq!(ds.n_trn(), 21);
        assert_eq!(ds.n_tst(), 30);
        // odd train count: class_a (label -1) takes the extra sample
        let neg = ds.y_trn.iter().filter(|&&v| v == -1.0).count();
        assert_eq!(neg, 11);
        let pos = ds.y_tst.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(pos, 15);
        // no row index reused between train and test
        let trn = row_markers(&ds.x_trn);
        let tst = row_markers(&ds.x_tst);
        for m in &trn {
            assert!(!tst.contains(m), "marker {m} drawn twice");
        }
        // and no duplicates within either split
        let mut all = trn.clone();
        all.extend(&tst);
        let unique: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(unique.len(), all.len());
    }

    #[test]
    fn labels_map_class_a_to_minus_one() {
        let raw = traceable_raw(40, 40);
        let ds = make_binary_task(&raw, 0, 1, 20, 20, 1).unwrap();
        // class 0 rows carry second feature 10 -> rescaled 10/127.5 - 1
        let expect_a = 10.0 * (2.0 / 255.0) - 1.0;
        for r in 0..ds.n_trn() {
            let is_a = (ds.x_trn[(r, 1)] - expect_a).abs() < 1e-12;
            assert_eq!(ds.y_trn[r] == -1.0, is_a, "row {r}");
        }
        // swapping the task order flips the mapping
        let ds2 = make_binary_task(&raw, 1, 0, 20, 20, 1).unwrap();
        for r in 0..ds2.n_trn() {
            let is_class0 = (ds2.x_trn[(r, 1)] - expect_a).abs() < 1e-12;
            assert_eq!(ds2.y_trn[r] == 1.0, is_class0, "row {r}");
        }
    }

    #[test]
    fn rescale_endpoints_and_midpoint() {
        assert_eq!(rescale_into_unit_box(0.0, 0.0, 255.0).unwrap(), -1.0);
        assert_eq!(rescale_into_unit_box(255.0, 0.0, 255.0).unwrap(), 1.0);
        assert!(rescale_into_unit_box(127.5, 0.0, 255.0).unwrap().abs() < 1e-15);
        // degenerate range maps to 0
        assert_eq!(rescale_into_unit_box(4.2, 4.2, 4.2).unwrap(), 0.0);
        // values far outside the declared range are rejected
        assert!(rescale_into_unit_box(300.0, 0.0, 255.0).is_err());
    }

    #[test]
    fn identity_range_is_a_fixed_point() {
        let n = 30;
        let inputs = DMatrix::from_fn(n, 3, |r, c| {
            // deterministic values already inside [-1, 1]
            (((r * 3 + c) as f64) * 0.061).sin()
        });
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let raw = RawDataset::new(
            inputs.clone(),
            labels,
            DatasetMeta {
                source: "unit".into(),
                image_shape: None,
                native_range: (-1.0, 1.0),
                n_classes: 2,
            },
        )
        .unwrap();
        let ds = make_binary_task(&raw, 0, 1, 10, 10, 9).unwrap();
        assert_eq!(ds.normalization, "identity");
        // every train row must equal some source row bit-exactly
        for r in 0..ds.n_trn() {
            let found = (0..n).any(|s| (0..3).all(|c| ds.x_trn[(r, c)] == inputs[(s, c)]));
            assert!(found, "train row {r} not found verbatim in the source");
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let raw = traceable_raw(100, 100);
        let a = make_binary_task(&raw, 0, 1, 50, 50, 7).unwrap();
        let b = make_binary_task(&raw, 0, 1, 50, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = make_binary_task(&raw, 0, 1, 50, 50, 8).unwrap();
        assert_ne!(
            row_markers(&a.x_trn),
            row_markers(&c.x_trn),
            "different seeds drew identical train sets"
        );
    }

    #[test]
    fn insufficient_samples_names_the_class() {
        let raw = traceable_raw(30, 100);
        let err = make_binary_task(&raw, 0, 1, 40, 40, 0).unwrap_err();
        match err {
            Error::InsufficientSamples {
                class,
                needed,
                available,
            } => {
                assert_eq!(class, 0);
                assert_eq!(needed, 40); // 20 train + 20 test
                assert_eq!(available, 30);
            }
            other => panic!("expected InsufficientSamples, got {other:?}"),
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        let raw = traceable_raw(20, 20);
        assert!(make_binary_task(&raw, 0, 0, 10, 10, 0).is_err());
        assert!(make_binary_task(&raw, 0, 3, 10, 10, 0).is_err());
        assert!(make_binary_task(&raw, 0, 1, 1, 10, 0).is_err());
        assert!(make_binary_task(&raw, 0, 1, 10, 0, 0).is_err());
    }

    #[test]
    fn randomize_labels_touches_only_training_labels() {
        let raw = traceable_raw(600, 600);
        let ds = make_binary_task(&raw, 0, 1, 1000, 100, 3).unwrap();
        let rnd = randomize_labels(&ds, 42);
        assert_eq!(rnd.x_trn, ds.x_trn);
        assert_eq!(rnd.x_tst, ds.x_tst);
        assert_eq!(rnd.y_tst, ds.y_tst);
        assert!(rnd.y_trn.iter().all(|&v| v == -1.0 || v == 1.0));
        // flip fraction 1/2 within 3 binomial sigmas for N=1000
        let flipped = ds
            .y_trn
            .iter()
            .zip(rnd.y_trn.iter())
            .filter(|(a, b)| a != b)
            .count() as f64
            / 1000.0;
        let sigma = (0.25f64 / 1000.0).sqrt();
        assert!((flipped - 0.5).abs() < 3.0 * sigma, "flip fraction {flipped}");
        // determinism
        let rnd2 = randomize_labels(&ds, 42);
        assert_eq!(rnd.y_trn, rnd2.y_trn);
        assert_ne!(randomize_labels(&ds, 43).y_trn, rnd.y_trn);
    }

    #[test]
    fn awgn_zero_variance_is_identity() {
        let x = DMatrix::from_fn(5, 4, |r, c| (r * 4 + c) as f64 * 0.1 - 1.0);
        let y = awgn_perturb(&x, 0.0, 77).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn awgn_moments_match_at_scale() {
        let n = 2000;
        let d = 784;
        let x = DMatrix::zeros(n, d);
        let var = 0.25;
        let y = awgn_perturb(&x, var, 123).unwrap();
        let count = (n * d) as f64;
        let mean = y.iter().sum::<f64>() / count;
        let tol = 4.0 * var.sqrt() / count.sqrt();
        assert!(mean.abs() < tol, "noise mean {mean} vs tol {tol}");
        let sample_var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
        assert!(
            (sample_var - var).abs() < 0.05 * var,
            "sample variance {sample_var}"
        );
    }

    #[test]
    fn awgn_does_not_clamp() {
        let x = DMatrix::from_element(100, 100, 1.0);
        let y = awgn_perturb(&x, 1.0 / 16.0, 5).unwrap();
        assert!(
            y.iter().any(|&v| v > 1.0),
            "with 10k draws at the box edge some entry must exceed 1"
        );
        // deterministic in seed
        let y2 = awgn_perturb(&x, 1.0 / 16.0, 5).unwrap();
        assert_eq!(y, y2);
    }

    #[test]
    fn raw_dataset_validation() {
        let meta = DatasetMeta {
            source: "m".into(),
            image_shape: None,
            native_range: (0.0, 1.0),
            n_classes: 2,
        };
        assert!(RawDataset::new(DMatrix::zeros(3, 2), vec![0, 1], meta.clone()).is_err());
        assert!(RawDataset::new(DMatrix::zeros(2, 2), vec![0, 2], meta.clone()).is_err());
        assert!(RawDataset::new(DMatrix::zeros(2, 2), vec![0, 1], meta).is_ok());
    }

    #[test]
    fn perturb_spec_validation() {
        let ok = PerturbSpec {
            kind: PerturbKind::Awgn,
            awgn_var: 0.25,
            fgsm_eps: 4.0 / 255.0,
            seed: 0,
        };
        assert!(ok.validate().is_ok());
        assert!(PerturbSpec { awgn_var: -1.0, ..ok }.validate().is_err());
        assert!(PerturbSpec { fgsm_eps: -0.1, ..ok }.validate().is_err());
    }
}
