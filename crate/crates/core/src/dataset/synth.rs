//! Isotropic Gaussian-mixture datasets.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Within-class standard deviation per coordinate.
    pub std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 8,
            dim: 32,
            per_class: 625,
            separation: 4.0,
            std: 1.0,
            seed: 16,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.per_class == 0 {
            return Err(Error::arg(
                "class count, dimension and per-class count must be positive",
            ));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::arg("separation must be positive"));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::arg("std must be positive"));
        }
        Ok(())
    }
}

/// Class means: `separation * e_c` for `c < dim`; classes beyond `dim` reuse
/// the axes under a fresh random rotation per cycle.
fn class_means(spec: &SynthSpec, rng: &mut impl rand::Rng) -> Vec<Array1<f64>> {
    let d = spec.dim;
    let cycles = spec.num_classes.div_ceil(d);
    let mut rotations = vec![None];
    for _ in 1..cycles {
        rotations.push(Some(random_orthogonal(d, rng)));
    }
    (0..spec.num_classes)
        .map(|c| {
            let axis = c % d;
            match &rotations[c / d] {
                None => {
                    let mut m = Array1::zeros(d);
                    m[axis] = spec.separation;
                    m
                }
                Some(q) => q.column(axis).to_owned() * spec.separation,
            }
        })
        .collect()
}

/// Orthonormalize a Gaussian matrix by modified Gram-Schmidt.
fn random_orthogonal(d: usize, rng: &mut impl rand::Rng) -> Array2<f64> {
    loop {
        let mut q = Array2::<f64>::from_shape_fn((d, d), |_| StandardNormal.sample(rng));
        let mut ok = true;
        for j in 0..d {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm < 1e-10 {
                ok = false;
                break;
            }
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
        if ok {
            return q;
        }
    }
}

/// Draw `per_class` points per class around the class means, in shuffled
/// order with ids `0..n`. Ground truth equals the observed labels.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Synth, 0);
    let means = class_means(spec, &mut rng);
    let noise = Normal::new(0.0, spec.std).expect("std validated");

    let n = spec.num_classes * spec.per_class;
    let mut order: Vec<usize> = (0..n).map(|i| i / spec.per_class).collect();
    order.shuffle(&mut rng);

    let mut features = Array2::zeros((n, spec.dim));
    for (i, &c) in order.iter().enumerate() {
        for (j, v) in features.row_mut(i).iter_mut().enumerate() {
            *v = means[c][j] + noise.sample(&mut rng);
        }
    }
    Dataset::with_sequential_ids(features, order.clone(), Some(order), spec.num_classes)
}
