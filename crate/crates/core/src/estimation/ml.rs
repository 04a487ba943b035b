//! Gaussian maximum likelihood with per-variable constant means profiled out.
//!
//! Dense families factor the full data covariance. SRE families with positive
//! nuggets use the low-rank identity
//! `(S K S' + D)^-1 = D^-1 - D^-1 S (K^-1 + S' D^-1 S)^-1 S' D^-1`, so each
//! evaluation costs `O(n b^2)`. The full-`K` SRE family is fitted by EM.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hierarchical::data_cov_matrix;
use crate::prediction::{FitProcedure, FittedModel};
use crate::scalar::Real;
use crate::spatial::MultivariateDataset;

use super::family::{Family, KStructure};
use super::optimize::{minimize, OptimOptions};
use super::FitResult;

#[derive(Debug, Clone, PartialEq)]
pub struct MlOptions {
    pub optim: OptimOptions,
    /// Largest number of observations accepted.
    pub dense_cap: usize,
    pub em_max_iter: usize,
    /// EM stops when the log-likelihood gain per iteration drops below this.
    pub em_tol: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            optim: OptimOptions::default(),
            dense_cap: 2000,
            em_max_iter: 500,
            em_tol: 1e-6,
        }
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observation vector and mean design in f64.
struct Prepared {
    z: DVector<f64>,
    /// `[X z]`: indicator columns per variable, then the data.
    w: DMatrix<f64>,
    var_of: Vec<usize>,
    counts: Vec<usize>,
    p: usize,
}

impl Prepared {
    fn new<T: Real>(d: &MultivariateDataset<T>) -> Self {
        let p = d.p();
        let z = DVector::from_iterator(d.n_total(), d.stacked_values().into_iter().map(|v| v.as_f64()));
        let var_of: Vec<usize> = d.series().iter().enumerate().flat_map(|(q, s)| std::iter::repeat_n(q, s.len())).collect();
        let n = z.len();
        let mut w = DMatrix::zeros(n, p + 1);
        for i in 0..n {
            w[(i, var_of[i])] = 1.0;
            w[(i, p)] = z[i];
        }
        Self {
            z,
            w,
            var_of,
            counts: d.counts(),
            p,
        }
    }

    fn n(&self) -> usize {
        self.z.len()
    }

    /// Log-likelihood and GLS means from `G = W' C^-1 W` and `log|C|`.
    fn finish(&self, g: &DMatrix<f64>, logdet: f64) -> Option<(f64, Vec<f64>)> {
        let p = self.p;
        let xtx = g.view((0, 0), (p, p)).into_owned();
        let xtz = g.view((0, p), (p, 1)).into_owned();
        let beta = xtx.cholesky()?.solve(&xtz);
        let quad = g[(p, p)] - xtz.dot(&beta);
        let ll = -0.5 * (self.n() as f64 * LN_2PI + logdet + quad);
        ll.is_finite().then(|| (ll, beta.iter().copied().collect()))
    }
}

fn to_f64<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.as_f64())
}

fn dense_loglik<T: Real>(pr: &Prepared, d: &MultivariateDataset<T>, family: &Family<T>, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = family.model(theta, &vec![0.0; family.p()])?;
    let c = to_f64(&data_cov_matrix(&m, &d.location_sets())?);
    let chol = c
        .cholesky()
        .ok_or_else(|| Error::Factorization("data covariance not positive definite".into()))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let a = chol
        .l()
        .solve_lower_triangular(&pr.w)
        .ok_or_else(|| Error::Factorization("triangular solve failed".into()))?;
    pr.finish(&(a.transpose() * &a), logdet)
        .ok_or_else(|| Error::Factorization("mean design not estimable".into()))
}

/// Pieces of the low-rank SRE likelihood that do not depend on parameters.
struct LowRank {
    s: DMatrix<f64>,
}

impl LowRank {
    fn new<T: Real>(d: &MultivariateDataset<T>, family: &Family<T>) -> Option<Self> {
        let Family::Sre { bases, .. } = family else { return None };
        let locs = d.location_sets();
        let n = d.n_total();
        let b: usize = bases.iter().map(|b| b.len()).sum();
        let mut s = DMatrix::zeros(n, b);
        let (mut row, mut col) = (0, 0);
        for (q, basis) in bases.iter().enumerate() {
            let dq = to_f64(&basis.design(locs[q]));
            s.view_mut((row, col), dq.shape()).copy_from(&dq);
            row += dq.nrows();
            col += dq.ncols();
        }
        Some(Self { s })
    }

    /// `(S' D^-1 S, S' D^-1 W, W' D^-1 W, log|D|)` for per-variable noise `nug`.
    fn weighted(&self, pr: &Prepared, nug: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64) {
        let dinv: Vec<f64> = pr.var_of.iter().map(|&q| 1.0 / nug[q]).collect();
        let mut sd = self.s.clone();
        let mut wd = pr.w.clone();
        for i in 0..pr.n() {
            sd.row_mut(i).scale_mut(dinv[i]);
            wd.row_mut(i).scale_mut(dinv[i]);
        }
        let logdet_d = pr.counts.iter().zip(nug).map(|(c, v)| *c as f64 * v.ln()).sum();
        (sd.transpose() * &self.s, sd.transpose() * &pr.w, pr.w.transpose() * wd, logdet_d)
    }

    fn loglik(&self, pr: &Prepared, k: &DMatrix<f64>, nug: &[f64]) -> Result<(f64, Vec<f64>)> {
        let kchol = k
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("K not positive definite".into()))?;
        let logdet_k = 2.0 * kchol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let (sds, sdw, wdw, logdet_d) = self.weighted(pr, nug);
        let mchol = (kchol.inverse() + sds)
            .cholesky()
            .ok_or_else(|| Error::Factorization("K^-1 + S'D^-1 S not positive definite".into()))?;
        let logdet_m = 2.0 * mchol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let g = &wdw - sdw.transpose() * mchol.solve(&sdw);
        pr.finish(&g, logdet_d + logdet_k + logdet_m)
            .ok_or_else(|| Error::Factorization("mean design not estimable".into()))
    }
}

struct Evaluator<'a, T> {
    d: &'a MultivariateDataset<T>,
    family: &'a Family<T>,
    pr: Prepared,
    low_rank: Option<LowRank>,
}

impl<'a, T: Real> Evaluator<'a, T> {
    fn new(d: &'a MultivariateDataset<T>, family: &'a Family<T>) -> Result<Self> {
        if d.p() != family.p() {
            return Err(Error::invalid(format!("family has {} variables, dataset {}", family.p(), d.p())));
        }
        Ok(Self {
            d,
            family,
            pr: Prepared::new(d),
            low_rank: LowRank::new(d, family),
        })
    }

    fn loglik(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.family.check(theta)?;
        let nug = self.family.nuggets(theta);
        match &self.low_rank {
            Some(lr) if nug.iter().all(|v| *v > 0.0) => lr.loglik(&self.pr, &to_f64(&self.family.sre_k(theta)?), &nug),
            _ => dense_loglik(&self.pr, self.d, self.family, theta),
        }
    }
}

/// Profile log-likelihood at `theta` and the GLS means; an error when the
/// covariance is not positive definite there.
pub fn profile_loglik<T: Real>(d: &MultivariateDataset<T>, family: &Family<T>, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    Evaluator::new(d, family)?.loglik(theta)
}

fn check_common<T: Real>(d: &MultivariateDataset<T>, family: &Family<T>, init: &[f64], free: &[bool], opts: &MlOptions) -> Result<()> {
    if d.n_total() > opts.dense_cap {
        return Err(Error::invalid(format!("{} observations exceed the solver cap of {}", d.n_total(), opts.dense_cap)));
    }
    family.check(init)?;
    if free.len() != init.len() {
        return Err(Error::invalid("free mask length differs from parameter count"));
    }
    Ok(())
}

/// Maximizes the profile log-likelihood over the free parameters. Parameter
/// values where the covariance is not positive definite are rejected steps.
pub fn fit_ml<T: Real>(d: &MultivariateDataset<T>, family: &Family<T>, init: &[f64], free: &[bool], opts: &MlOptions) -> Result<FitResult> {
    check_common(d, family, init, free, opts)?;
    if matches!(family, Family::Sre { structure: KStructure::Full, .. }) {
        return fit_sre_em(d, family, init, opts);
    }
    let ev = Evaluator::new(d, family)?;
    let f = |theta: &[f64]| ev.loglik(theta).map_or(f64::INFINITY, |(ll, _)| -ll);
    let r = minimize(&f, &family.defs(), init, free, &opts.optim);
    let (ll, means) = ev.loglik(&r.x)?;
    let k = free.iter().filter(|&&x| x).count() + d.p();
    let mut fit = FitResult::new(family.name(), family.names(), r.x, free.to_vec(), -ll, Some(ll), k, d.n_total())?;
    fit.converged = r.converged;
    fit.iterations = r.iterations;
    fit.means = means;
    fit.at_boundary = r.at_boundary;
    fit.history = r.history;
    Ok(fit)
}

/// EM for the full-`K` SRE family (all of `K` and the nuggets free), started
/// from `init`. Means are re-profiled before every step, so the profile
/// log-likelihood never decreases.
pub fn fit_sre_em<T: Real>(d: &MultivariateDataset<T>, family: &Family<T>, init: &[f64], opts: &MlOptions) -> Result<FitResult> {
    if !matches!(family, Family::Sre { structure: KStructure::Full, .. }) {
        return Err(Error::invalid("EM applies to the full-K SRE family"));
    }
    family.check(init)?;
    let ev = Evaluator::new(d, family)?;
    let lr = ev.low_rank.as_ref().expect("SRE family");
    let pr = &ev.pr;
    let mut k = to_f64(&family.sre_k(init)?);
    let mut nug = family.nuggets(init);
    if nug.iter().any(|v| *v <= 0.0) {
        return Err(Error::invalid("EM needs positive starting nuggets"));
    }
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut ll, mut means) = lr.loglik(pr, &k, &nug)?;
    history.push(-ll);
    for _ in 0..opts.em_max_iter {
        iterations += 1;
        let resid = DVector::from_iterator(pr.n(), (0..pr.n()).map(|i| pr.z[i] - means[pr.var_of[i]]));
        let (sds, _, _, _) = lr.weighted(pr, &nug);
        let kinv = k.clone().cholesky().ok_or_else(|| Error::Factorization("K lost definiteness".into()))?.inverse();
        let post_cov = (kinv + sds)
            .cholesky()
            .ok_or_else(|| Error::Factorization("posterior precision not positive definite".into()))?
            .inverse();
        let sdr = DVector::from_iterator(lr.s.ncols(), (0..lr.s.ncols()).map(|j| {
            (0..pr.n()).map(|i| lr.s[(i, j)] * resid[i] / nug[pr.var_of[i]]).sum::<f64>()
        }));
        let post_mean = &post_cov * sdr;
        let mut k_new = &post_cov + &post_mean * post_mean.transpose();
        k_new = (&k_new + k_new.transpose()) * 0.5;
        let fitted = &lr.s * &post_mean;
        let spread = (&lr.s * &post_cov).component_mul(&lr.s);
        let mut acc = vec![0.0; pr.p];
        for i in 0..pr.n() {
            let e = resid[i] - fitted[i];
            acc[pr.var_of[i]] += e * e + spread.row(i).sum();
        }
        let nug_new: Vec<f64> = acc.iter().zip(&pr.counts).map(|(a, c)| (a / *c as f64).max(1e-12)).collect();
        let Ok((ll_new, means_new)) = lr.loglik(pr, &k_new, &nug_new) else { break };
        let gain = ll_new - ll;
        k = k_new;
        nug = nug_new;
        ll = ll_new;
        means = means_new;
        history.push(-ll);
        if gain.abs() < opts.em_tol {
            converged = true;
            break;
        }
    }
    let kt = k.map(T::lit);
    let params = Family::<T>::full_theta(&kt, &nug);
    let n_free = params.len();
    let mut fit = FitResult::new(family.name(), family.names(), params, vec![true; n_free], -ll, Some(ll), n_free + d.p(), d.n_total())?;
    fit.converged = converged;
    fit.iterations = iterations;
    fit.means = means;
    fit.history = history;
    Ok(fit)
}

/// ML fitting as a [`FitProcedure`] for cross-validation.
#[derive(Debug, Clone)]
pub struct MlFit<T> {
    pub family: Family<T>,
    pub free: Vec<bool>,
    /// Starting values; data-driven defaults when `None`.
    pub init: Option<Vec<f64>>,
    pub options: MlOptions,
    pub eps_fraction: Vec<f64>,
}

impl<T: Real> FitProcedure<T> for MlFit<T> {
    fn fit(&self, train: &MultivariateDataset<T>) -> Result<FittedModel<T>> {
        let init = self.init.clone().unwrap_or_else(|| self.family.default_init(train));
        let f = fit_ml(train, &self.family, &init, &self.free, &self.options)?;
        f.fitted_model(&self.family, &self.eps_fraction)
    }
}
