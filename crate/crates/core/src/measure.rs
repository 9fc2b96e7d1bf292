//! Finite atomic measures in `R^d`.

use crate::error::{invalid, Result};
use crate::numeric::pairwise_sum;

/// Atoms stored as a flat coordinate array (`dim` values per atom) with one
/// nonnegative weight each.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedMeasure {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if coords.len() != dim * weights.len() {
            return Err(invalid(
                "coords",
                format!(
                    "{} coordinates for {} atoms in dimension {dim}",
                    coords.len(),
                    weights.len()
                ),
            ));
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights", format!("weight {i} is negative or not finite")));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(invalid("coords", "coordinates must be finite"));
        }
        Ok(Self { dim, coords, weights })
    }

    /// Atoms of equal weight `mass / n`.
    pub fn uniform(dim: usize, coords: Vec<f64>, mass: f64) -> Result<Self> {
        let n = coords.len() / dim.max(1);
        let w = if n == 0 { 0.0 } else { mass / n as f64 };
        Self::new(dim, coords, vec![w; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// The same atoms rescaled to total mass one.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.total_mass();
        if !(mass > 0.0) {
            return Err(invalid("measure", "cannot normalize a measure of zero mass"));
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w /= mass);
        Ok(out)
    }

    /// Image under `x ↦ (x - origin) / scale`.
    pub fn rescaled(&self, origin: &[f64], scale: f64) -> Self {
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dim) {
            for (x, o) in p.iter_mut().zip(origin) {
                *x = (*x - o) / scale;
            }
        }
        out
    }

    /// Componentwise bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.coords.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
