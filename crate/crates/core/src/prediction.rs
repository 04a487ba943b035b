//! Simple co-kriging of the latent field, a brute-force conditioning oracle,
//! Gaussian CRPS and held-out validation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::cross::simulate::factor_with_jitter;
use crate::error::{Error, Result};
use crate::hierarchical::{assemble_data_cov, HierarchicalModel, Predictand};
use crate::rng::substream;
use crate::scalar::Real;
use crate::spatial::{LocationSet, MultivariateDataset};

/// Variances in `[-VARIANCE_CLAMP, 0)` are rounded to zero; lower ones are errors.
pub const VARIANCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTarget<T> {
    pub predictand: Predictand,
    /// 0-based variable index.
    pub variable: usize,
    pub locations: LocationSet<T>,
}

impl<T: Real> PredictionTarget<T> {
    pub fn new(variable: usize, locations: LocationSet<T>, predictand: Predictand) -> Self {
        Self {
            predictand,
            variable,
            locations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<T> {
    pub means: Vec<T>,
    pub variances: Vec<T>,
    pub target: PredictionTarget<T>,
}

/// Cross-covariances between the target process and every observation
/// (`n_obs x n_targets`) and the prior target variances.
fn target_covariances<T: Real>(
    m: &HierarchicalModel<T>,
    d: &MultivariateDataset<T>,
    t: &PredictionTarget<T>,
) -> Result<(DMatrix<T>, Vec<T>)> {
    let q = t.variable;
    let tl = t.locations.as_slice();
    let n = d.n_total();
    let mut c = DMatrix::zeros(n, tl.len());
    let mut row = 0;
    for (r, s) in d.series().iter().enumerate() {
        let blk = m.target_block(r, s.locations(), q, tl, t.predictand)?;
        c.view_mut((row, 0), blk.shape()).copy_from(&blk);
        row += s.len();
    }
    let c0 = tl
        .iter()
        .map(|s| Ok(m.target_block(q, std::slice::from_ref(s), q, std::slice::from_ref(s), t.predictand)?[(0, 0)]))
        .collect::<Result<Vec<T>>>()?;
    Ok((c, c0))
}

fn check_inputs<T: Real>(m: &HierarchicalModel<T>, d: &MultivariateDataset<T>, t: &PredictionTarget<T>, means: &[T]) -> Result<()> {
    let p = m.p();
    if d.p() != p {
        return Err(Error::invalid(format!("model has {p} variables, dataset has {}", d.p())));
    }
    if t.variable >= p {
        return Err(Error::invalid(format!("unknown variable {} (have {p})", t.variable + 1)));
    }
    if means.len() != p {
        return Err(Error::invalid(format!("need {p} means, got {}", means.len())));
    }
    Ok(())
}

pub(crate) fn clamp_variance<T: Real>(v: T) -> Result<T> {
    if v >= T::zero() {
        Ok(v)
    } else if v >= -T::lit(VARIANCE_CLAMP) {
        log::warn!("predictive variance {v} clamped to 0");
        Ok(T::zero())
    } else {
        Err(Error::NegativeVariance(v.as_f64()))
    }
}

/// Simple co-kriging with known constant means.
///
/// Mean `mu_q + c' C_Z^-1 (z - mu)`, variance `c0 - c' C_Z^-1 c`, where `c`
/// covaries the target process (never `eps`; `xi` only for [`Predictand::Y`])
/// with the observations.
pub fn cokrige<T: Real>(
    m: &HierarchicalModel<T>,
    d: &MultivariateDataset<T>,
    t: &PredictionTarget<T>,
    means: &[T],
) -> Result<PredictionSet<T>> {
    check_inputs(m, d, t, means)?;
    let bundle = assemble_data_cov(m, d)?;
    let l = factor_with_jitter(bundle.joint())?;
    let resid = DVector::from_iterator(
        d.n_total(),
        d.series().iter().enumerate().flat_map(|(q, s)| s.values().iter().map(move |v| *v - means[q])),
    );
    let (c, c0) = target_covariances(m, d, t)?;
    let solve = |b: &DMatrix<T>| {
        l.solve_lower_triangular(b)
            .ok_or_else(|| Error::Factorization("singular data covariance".into()))
    };
    let alpha = solve(&DMatrix::from_column_slice(resid.len(), 1, resid.as_slice()))?;
    let v = solve(&c)?;
    let mu = means[t.variable];
    let mut pm = Vec::with_capacity(c0.len());
    let mut pv = Vec::with_capacity(c0.len());
    for (j, c0j) in c0.iter().enumerate() {
        let col = v.column(j);
        pm.push(mu + col.dot(&alpha.column(0)));
        pv.push(clamp_variance(*c0j - col.norm_squared())?);
    }
    Ok(PredictionSet {
        means: pm,
        variances: pv,
        target: t.clone(),
    })
}

/// Joint covariance of (targets, observations) for [`gaussian_conditioning_oracle`].
pub fn oracle_joint<T: Real>(m: &HierarchicalModel<T>, d: &MultivariateDataset<T>, t: &PredictionTarget<T>) -> Result<DMatrix<T>> {
    let nt = t.locations.len();
    let n = d.n_total();
    let q = t.variable;
    let tl = t.locations.as_slice();
    let mut j = DMatrix::zeros(nt + n, nt + n);
    j.view_mut((0, 0), (nt, nt)).copy_from(&m.target_block(q, tl, q, tl, t.predictand)?);
    let (c, _) = target_covariances(m, d, t)?;
    j.view_mut((nt, 0), (n, nt)).copy_from(&c);
    j.view_mut((0, nt), (nt, n)).copy_from(&c.transpose());
    let (mut ro, sets) = (nt, d.series());
    for (a, sa) in sets.iter().enumerate() {
        let mut co = nt;
        for (b, sb) in sets.iter().enumerate() {
            let blk = m.data_block(a, sa.locations(), b, sb.locations())?;
            j.view_mut((ro, co), blk.shape()).copy_from(&blk);
            co += sb.len();
        }
        ro += sa.len();
    }
    Ok(j)
}

/// Exact conditional moments of the first `n_targets` coordinates of a
/// Gaussian vector given the rest, via the precision matrix of the full
/// joint (LU inversion; no Cholesky involved).
pub fn gaussian_conditioning_oracle<T: Real>(
    joint: &DMatrix<T>,
    n_targets: usize,
    observed: &[T],
    means: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let n = joint.nrows();
    if !joint.is_square() || means.len() != n || n_targets + observed.len() != n {
        return Err(Error::invalid("oracle dimensions disagree"));
    }
    let prec = joint
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("joint covariance is singular".into()))?;
    let nt = n_targets;
    let p_tt = prec.view((0, 0), (nt, nt)).into_owned();
    let p_to = prec.view((0, nt), (nt, n - nt)).into_owned();
    let cond_cov = p_tt
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("target precision block is singular".into()))?;
    let dev = DVector::from_iterator(n - nt, observed.iter().zip(&means[nt..]).map(|(z, m)| *z - *m));
    let shift = &cond_cov * (p_to * dev);
    let mean = (0..nt).map(|i| means[i] - shift[i]).collect();
    let var = (0..nt).map(|i| cond_cov[(i, i)]).collect();
    Ok((mean, var))
}

/// Closed-form CRPS of `N(mu, sigma^2)` at `z`; `sigma = 0` gives `|z - mu|`.
pub fn crps_gaussian<T: Real>(mu: T, sigma: T, z: T) -> Result<T> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::invalid("CRPS needs sigma >= 0"));
    }
    let (mu, sigma, z) = (mu.as_f64(), sigma.as_f64(), z.as_f64());
    if sigma == 0.0 {
        return Ok(T::lit((z - mu).abs()));
    }
    let u = (z - mu) / sigma;
    let std = Normal::standard();
    let v = sigma * (u * (2.0 * std.cdf(u) - 1.0) + 2.0 * std.pdf(u) - 1.0 / std::f64::consts::PI.sqrt());
    Ok(T::lit(v.max(0.0)))
}

/// A fitted model plus the constant means used for plug-in prediction.
#[derive(Debug, Clone)]
pub struct FittedModel<T> {
    pub model: HierarchicalModel<T>,
    pub means: Vec<T>,
}

/// Anything that turns a training dataset into a fitted model.
pub trait FitProcedure<T>: Sync {
    fn fit(&self, train: &MultivariateDataset<T>) -> Result<FittedModel<T>>;
}

impl<T, F> FitProcedure<T> for F
where
    F: Fn(&MultivariateDataset<T>) -> Result<FittedModel<T>> + Sync,
{
    fn fit(&self, train: &MultivariateDataset<T>) -> Result<FittedModel<T>> {
        self(train)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rmse: Vec<f64>,
    pub crps: Vec<f64>,
    pub n_heldout_per_variable: Vec<usize>,
    /// Fold of every observation, per variable, in dataset order.
    pub folds: Vec<Vec<usize>>,
    pub n_folds: usize,
    pub n_heldout: usize,
    pub seed: u64,
}

impl ValidationReport {
    /// `key = value` text, one line per item.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::invalid(format!("write: {e}"));
        writeln!(out, "folds = {}", self.n_folds).map_err(io)?;
        writeln!(out, "fold_seed = {}", self.seed).map_err(io)?;
        writeln!(out, "n_heldout = {}", self.n_heldout).map_err(io)?;
        for q in 0..self.rmse.len() {
            writeln!(out, "rmse_{} = {}", q + 1, self.rmse[q]).map_err(io)?;
            writeln!(out, "crps_{} = {}", q + 1, self.crps[q]).map_err(io)?;
            writeln!(out, "n_heldout_{} = {}", q + 1, self.n_heldout_per_variable[q]).map_err(io)?;
        }
        Ok(())
    }
}

const MAX_REDRAWS: u64 = 100;

/// Stratified fold labels: within each variable a seeded shuffle is dealt
/// round-robin, continuing from where the previous variable stopped.
fn draw_folds(counts: &[usize], k: usize, seed: u64, attempt: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut rng = substream(seed, 1000 + attempt);
    let mut offset = 0;
    counts
        .iter()
        .map(|&n| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut f = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                f[i] = (offset + pos) % k;
            }
            offset += n;
            f
        })
        .collect()
}

fn folds_usable(folds: &[Vec<usize>], counts: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let held: Vec<usize> = folds.iter().map(|v| v.iter().filter(|&&x| x == f).count()).collect();
        held.iter().sum::<usize>() > 0 && held.iter().zip(counts).all(|(h, n)| h < n)
    })
}

/// k-fold cross-validation; `folds == n` is leave-one-out. Each fold is fitted
/// on its training portion only and scored on the held-out observations
/// against the predictand-`Y` predictive distribution.
pub fn cross_validate<T: Real, F: FitProcedure<T>>(
    d: &MultivariateDataset<T>,
    fit: &F,
    folds: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let counts = d.counts();
    let n = d.n_total();
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if folds > n || counts.iter().any(|&c| c < 2) {
        return Err(Error::invalid(format!(
            "too few observations ({n}, per variable {counts:?}) for {folds} folds"
        )));
    }
    let assignment = (0..MAX_REDRAWS)
        .map(|a| draw_folds(&counts, folds, seed, a))
        .find(|f| folds_usable(f, &counts, folds))
        .ok_or_else(|| Error::invalid(format!("no usable {folds}-fold assignment after {MAX_REDRAWS} draws")))?;

    let p = d.p();
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<Vec<usize>> = assignment
                .iter()
                .map(|v| (0..v.len()).filter(|&i| v[i] != f).collect())
                .collect();
            let train = d.select(&train_idx)?;
            let fitted = fit.fit(&train)?;
            let mut scores = vec![Vec::new(); p];
            for q in 0..p {
                let held: Vec<usize> = (0..assignment[q].len()).filter(|&i| assignment[q][i] == f).collect();
                if held.is_empty() {
                    continue;
                }
                let s = d.variable(q);
                let locs = LocationSet::new(held.iter().map(|&i| s.locations()[i]).collect())?;
                let t = PredictionTarget::new(q, locs, Predictand::Y);
                let pred = cokrige(&fitted.model, &train, &t, &fitted.means)?;
                for (j, &i) in held.iter().enumerate() {
                    let z = s.values()[i];
                    let err = (z - pred.means[j]).as_f64();
                    let crps = crps_gaussian(pred.means[j], pred.variances[j].sqrt(), z)?.as_f64();
                    scores[q].push((err * err, crps));
                }
            }
            Ok(scores)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rmse = vec![0.0; p];
    let mut crps = vec![0.0; p];
    let mut nh = vec![0usize; p];
    for fold in &per_fold {
        for q in 0..p {
            for (se, c) in &fold[q] {
                rmse[q] += se;
                crps[q] += c;
                nh[q] += 1;
            }
        }
    }
    for q in 0..p {
        rmse[q] = (rmse[q] / nh[q] as f64).sqrt();
        crps[q] /= nh[q] as f64;
    }
    Ok(ValidationReport {
        rmse,
        crps,
        n_heldout: nh.iter().sum(),
        n_heldout_per_variable: nh,
        folds: assignment,
        n_folds: folds,
        seed,
    })
}

/// Writes prediction sets as `variable,x,y,mean,variance` rows (1-based variable).
pub fn write_predictions<T: Real, W: Write>(sets: &[PredictionSet<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::invalid(format!("write: {e}"));
    w.write_record(["variable", "x", "y", "mean", "variance"]).map_err(err)?;
    for s in sets {
        for (i, l) in s.target.locations.iter().enumerate() {
            w.write_record([
                (s.target.variable + 1).to_string(),
                l.x().to_string(),
                l.y().to_string(),
                s.means[i].to_string(),
                s.variances[i].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::invalid(format!("write: {e}")))?;
    Ok(())
}
