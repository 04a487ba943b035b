//! Gaussian realizations of a certified bundle.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::scalar::Real;
use crate::spatial::{LocationSet, MultivariateDataset, VariableSeries};

use super::CovMatrixBundle;

/// Largest diagonal jitter, relative to the trace, added before giving up.
pub const MAX_JITTER: f64 = 1e-10;

/// Lower Cholesky factor with the bounded jitter policy. A zero matrix
/// factors to zero.
pub(crate) fn factor_with_jitter<T: Real>(joint: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = joint.nrows();
    let trace = joint.trace();
    if trace == T::zero() && joint.iter().all(|v| *v == T::zero()) {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(c) = joint.clone().cholesky() {
        return Ok(c.unpack());
    }
    let jitter = T::lit(MAX_JITTER) * trace.abs();
    let mut m = joint.clone();
    for i in 0..n {
        m[(i, i)] += jitter;
    }
    m.cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Factorization(format!("covariance not factorizable with jitter {:e}", jitter.as_f64())))
}

/// Factorizes a bundle once and draws any number of realizations.
#[derive(Debug, Clone)]
pub struct FieldSampler<T> {
    locations: Vec<LocationSet<T>>,
    factor: DMatrix<T>,
}

impl<T: Real> FieldSampler<T> {
    pub fn new(bundle: &CovMatrixBundle<T>) -> Result<Self> {
        bundle.certificate().require("bundle")?;
        Ok(Self {
            locations: bundle.locations().to_vec(),
            factor: factor_with_jitter(bundle.joint())?,
        })
    }

    /// One zero-mean draw of the stacked field.
    pub fn draw_vector(&self, rng: &mut Rng) -> DVector<T> {
        let n = self.factor.nrows();
        let z = DVector::from_iterator(
            n,
            (0..n).map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                T::lit(v)
            }),
        );
        &self.factor * z
    }

    /// A realization with per-variable constant means; same seed, same output.
    pub fn draw(&self, mean: &[T], seed: u64) -> Result<MultivariateDataset<T>> {
        let mut rng = substream(seed, 0);
        self.draw_with(mean, &mut rng)
    }

    pub fn draw_with(&self, mean: &[T], rng: &mut Rng) -> Result<MultivariateDataset<T>> {
        if mean.len() != self.locations.len() {
            return Err(Error::invalid(format!(
                "need {} means, got {}",
                self.locations.len(),
                mean.len()
            )));
        }
        let x = self.draw_vector(rng);
        let mut start = 0;
        let mut series = Vec::with_capacity(mean.len());
        for (q, locs) in self.locations.iter().enumerate() {
            let vals = (0..locs.len()).map(|i| mean[q] + x[start + i]).collect();
            series.push(VariableSeries::new(q + 1, locs.as_slice().to_vec(), vals)?);
            start += locs.len();
        }
        MultivariateDataset::new(series)
    }
}

/// One seeded realization of `bundle` plus constant means.
pub fn simulate_field<T: Real>(bundle: &CovMatrixBundle<T>, mean: &[T], seed: u64) -> Result<MultivariateDataset<T>> {
    FieldSampler::new(bundle)?.draw(mean, seed)
}
