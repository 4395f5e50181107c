//! Flat parameter vectors.
//!
//! Every model is flattened into one `f64` vector in a fixed canonical order
//! (see [`crate::models`]); averaging works coordinate-wise on that vector.
//! Sums are accumulated in input order so results are reproducible.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of averaging weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps `values`, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite parameter {} at index {pos}",
                values[pos]
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Returns `self + w * v`.
    pub fn scale_add(&self, v: &ParamVector, w: f64) -> Result<ParamVector> {
        let mut out = self.clone();
        out.scale_add_in_place(v, w)?;
        Ok(out)
    }

    /// In-place form of [`ParamVector::scale_add`]. On error `self` may be
    /// partially updated.
    pub fn scale_add_in_place(&mut self, v: &ParamVector, w: f64) -> Result<()> {
        check_dim(self.dim(), v.dim())?;
        if !w.is_finite() {
            return Err(Error::Numeric(format!("non-finite scale {w}")));
        }
        for (a, b) in self.0.iter_mut().zip(&v.0) {
            *a += w * b;
            if !a.is_finite() {
                return Err(Error::Numeric(
                    "scale_add produced a non-finite entry".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, idx: usize) -> &f64 {
        &self.0[idx]
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Checks that `weights` is a probability vector within [`WEIGHT_SUM_TOLERANCE`].
pub fn check_weights(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    let bad = weights.iter().any(|w| !w.is_finite() || *w < 0.0);
    if bad || !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightNorm { sum });
    }
    Ok(())
}

/// Weighted sum `sum_j weights[j] * vectors[j]` for a probability weight vector.
pub fn convex_combine(vectors: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if vectors.is_empty() {
        return Err(Error::EmptyRound);
    }
    check_dim(vectors.len(), weights.len())?;
    check_weights(weights)?;
    let dim = vectors[0].dim();
    for v in &vectors[1..] {
        check_dim(dim, v.dim())?;
    }
    let mut acc = ParamVector::zeros(dim);
    for (v, &w) in vectors.iter().zip(weights) {
        acc.scale_add_in_place(v, w)?;
    }
    Ok(acc)
}
