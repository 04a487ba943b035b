//! Weighted least squares against empirical summaries.

use crate::cross::CrossModel;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::Location;

use super::empirical::{EmpiricalSummary, SummaryKind};
use super::family::Family;
use super::optimize::{minimize, OptimOptions};
use super::FitResult;

/// Denominator floor in the `count / model^2` weights.
pub const WEIGHT_FLOOR: f64 = 1e-12;

fn lag_vector<T: Real>(s: &EmpiricalSummary<T>, center: T) -> [T; 2] {
    match s.bins.direction() {
        None => [center, T::zero()],
        Some(d) => {
            let (sn, cs) = d.angle.sin_cos();
            [center * cs, center * sn]
        }
    }
}

/// Value of summary `kind` for pair `(q, r)` implied by a stationary smooth
/// model plus total nuggets, at lag vector `h`.
pub fn model_summary_value<T: Real>(smooth: &CrossModel<T>, nugget: &[f64], kind: SummaryKind, q: usize, r: usize, h: [T; 2]) -> Result<f64> {
    let o = Location::new(T::zero(), T::zero())?;
    let at = Location::new(h[0], h[1])?;
    let c = |a: usize, b: usize, s: &Location<T>| -> Result<f64> {
        Ok(smooth.cov_block(a, std::slice::from_ref(s), b, std::slice::from_ref(&o), false)?[(0, 0)].as_f64())
    };
    let origin = h[0] == T::zero() && h[1] == T::zero();
    let same_point_nugget = if q == r && origin { nugget[q] } else { 0.0 };
    Ok(match kind {
        SummaryKind::EmpiricalCrossCov => c(q, r, &at)? + same_point_nugget,
        SummaryKind::PseudoCrossVariogram => {
            0.5 * (c(q, q, &o)? + nugget[q] + c(r, r, &o)? + nugget[r]) - c(q, r, &at)? - same_point_nugget
        }
    })
}

/// `sum_bins count * (empirical - model)^2 / max(model^2, floor)`.
pub fn wls_objective<T: Real>(summaries: &[EmpiricalSummary<T>], family: &Family<T>, theta: &[f64]) -> Result<f64> {
    if !family.is_stationary() {
        return Err(Error::invalid(format!("WLS needs a stationary family; {} is not", family.name())));
    }
    let smooth = family.smooth(theta)?;
    let nug = family.nuggets(theta);
    let mut total = 0.0;
    for s in summaries {
        let (q, r) = s.pair;
        for k in 0..s.counts.len() {
            let Some(v) = s.values[k] else { continue };
            let m = model_summary_value(&smooth, &nug, s.kind, q, r, lag_vector(s, s.bin_centers[k]))?;
            let e = v.as_f64() - m;
            total += s.counts[k] as f64 * e * e / (m * m).max(WEIGHT_FLOOR);
        }
    }
    Ok(total)
}

/// Bounded simplex minimization of [`wls_objective`] over the free parameters.
pub fn fit_wls<T: Real>(
    summaries: &[EmpiricalSummary<T>],
    family: &Family<T>,
    init: &[f64],
    free: &[bool],
    opt: &OptimOptions,
) -> Result<FitResult> {
    if summaries.iter().all(|s| s.nonempty() == 0) {
        return Err(Error::invalid("WLS needs at least one nonempty bin"));
    }
    family.check(init)?;
    if free.len() != init.len() {
        return Err(Error::invalid("free mask length differs from parameter count"));
    }
    if let Some(s) = summaries.iter().find(|s| s.pair.0 >= family.p() || s.pair.1 >= family.p()) {
        return Err(Error::invalid(format!("summary pair ({}, {}) outside the family", s.pair.0 + 1, s.pair.1 + 1)));
    }
    wls_objective(summaries, family, init)?;
    let defs = family.defs();
    let f = |theta: &[f64]| wls_objective(summaries, family, theta).unwrap_or(f64::INFINITY);
    let r = minimize(&f, &defs, init, free, opt);
    let k = free.iter().filter(|&&x| x).count();
    let n = summaries.iter().map(|s| s.nonempty()).sum();
    let mut fit = FitResult::new(family.name(), family.names(), r.x, free.to_vec(), r.f, None, k, n)?;
    fit.converged = r.converged;
    fit.iterations = r.iterations;
    fit.at_boundary = r.at_boundary;
    fit.history = r.history;
    Ok(fit)
}
