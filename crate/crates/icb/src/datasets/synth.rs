//! Self-contained synthetic sources, so the whole pipeline can run without
//! any external data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, Purpose};
use super::{DatasetMeta, RawDataset};

/// Isotropic Gaussian clusters squashed entrywise through tanh, one cluster
/// per class, `n_per_class` points each. Entries land in (-1, 1), so the
/// declared native range is [-1, 1] and task construction rescales by the
/// identity.
pub fn synth_clusters(
    d: usize,
    n_per_class: usize,
    centers: &[DVector<f64>],
    seed: u64,
) -> Result<RawDataset> {
    if d < 1 || n_per_class < 1 || centers.is_empty() {
        return Err(Error::InvalidConfig(
            "synthetic source needs d >= 1, n_per_class >= 1 and at least one center".into(),
        ));
    }
    for c in centers {
        if c.len() != d {
            return Err(Error::DimMismatch(format!(
                "cluster center has dim {}, expected {d}",
                c.len()
            )));
        }
    }
    let k = centers.len();
    let mut rng = rng_from(derive_seed(seed, 0, Purpose::Synth));
    let n = k * n_per_class;
    let mut inputs = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for p in 0..n_per_class {
            let row = class * n_per_class + p;
            for j in 0..d {
                let g: f64 = rng.sample(StandardNormal);
                inputs[(row, j)] = (center[j] + g).tanh();
            }
            labels.push(class as u8);
        }
    }
    RawDataset::new(
        inputs,
        labels,
        DatasetMeta {
            source: format!("synth_clusters(d={d}, k={k}, n={n_per_class}, seed={seed})"),
            image_shape: None,
            native_range: (-1.0, 1.0),
            n_classes: k,
        },
    )
}

/// Two clusters at -(separation/2)·e1 (class 0) and +(separation/2)·e1
/// (class 1), where e1 is the first coordinate axis.
pub fn synth_two_gaussians(
    d: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<RawDataset> {
    if separation < 0.0 {
        return Err(Error::InvalidConfig("separation must be >= 0".into()));
    }
    let mut neg = DVector::zeros(d);
    let mut pos = DVector::zeros(d);
    if d > 0 {
        neg[0] = -separation / 2.0;
        pos[0] = separation / 2.0;
    }
    synth_clusters(d, n_per_class, &[neg, pos], seed)
}

/// A ten-class variant for data-free sweeps: classes 2c and 2c+1 sit at
/// -(separation/2)·e_{c+1} and +(separation/2)·e_{c+1} respectively, so every
/// "i vs i+1" task is linearly separable and classes (0,1) match
/// [`synth_two_gaussians`]'s layout.
pub fn synth_ten_class(
    d: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<RawDataset> {
    let k = 10;
    if d < k / 2 {
        return Err(Error::InvalidConfig(format!(
            "ten-class source needs d >= {}, got {d}",
            k / 2
        )));
    }
    let centers: Vec<DVector<f64>> = (0..k)
        .map(|c| {
            let mut v = DVector::zeros(d);
            let axis = c / 2;
            let sign = if c % 2 == 0 { -1.0 } else { 1.0 };
            v[axis] = sign * separation / 2.0;
            v
        })
        .collect();
    synth_clusters(d, n_per_class, &centers, seed)
}
