//! Univariate stationary covariances, bisquare basis functions and
//! nonnegative-definiteness certification.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::{Location, LocationSet};

/// Matérn covariance parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams<T> {
    pub sigma2: T,
    pub range: T,
    pub nu: T,
}

impl<T: Real> MaternParams<T> {
    pub fn new(sigma2: T, range: T, nu: T) -> Result<Self> {
        for (name, v) in [("sigma2", sigma2), ("range", range), ("nu", nu)] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::invalid(format!("Matérn {name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { sigma2, range, nu })
    }
}

/// Matérn covariance at distance `h`:
/// `sigma2 * 2^(1-nu)/Gamma(nu) * a^nu * K_nu(a)` with `a = sqrt(2 nu) h / range`.
pub fn matern_cov<T: Real>(p: &MaternParams<T>, h: T) -> Result<T> {
    if !h.is_finite() || h < T::zero() {
        return Err(Error::invalid(format!("lag must be finite and >= 0, got {h}")));
    }
    if !(p.sigma2.is_finite() && p.range.is_finite() && p.nu.is_finite()) {
        return Err(Error::invalid("non-finite Matérn parameters"));
    }
    Ok(p.sigma2 * matern_corr(p.range, p.nu, h))
}

fn matern_corr<T: Real>(range: T, nu: T, h: T) -> T {
    if h == T::zero() {
        return T::one();
    }
    let nu64 = nu.as_f64();
    if nu64 == 0.5 {
        (-h / range).exp()
    } else if nu64 == 1.5 {
        let a = T::lit(3f64.sqrt()) * h / range;
        (T::one() + a) * (-a).exp()
    } else if nu64 == 2.5 {
        let a = T::lit(5f64.sqrt()) * h / range;
        (T::one() + a + a * a / T::lit(3.0)) * (-a).exp()
    } else {
        T::lit(matern_corr_bessel(range.as_f64(), nu64, h.as_f64()))
    }
}

/// General-`nu` Matérn correlation through the modified Bessel function.
pub(crate) fn matern_corr_bessel(range: f64, nu: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 1.0;
    }
    let a = (2.0 * nu).sqrt() * h / range;
    let log_pref = (1.0 - nu) * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(nu);
    let log_val = log_pref + nu * a.ln() - a + bessel_k_scaled(nu, a).ln();
    log_val.exp().min(1.0)
}

/// `exp(x) * K_nu(x)` for `x > 0`, from `K_nu(x) = ∫_0^∞ exp(-x cosh t) cosh(nu t) dt`.
///
/// The integrand is entire and even, so the trapezoid rule converges
/// geometrically; a step of 1/16 is far below f64 resolution.
pub(crate) fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let nu = nu.abs();
    let step = 1.0 / 16.0;
    let log_term = |t: f64| -x * (t.cosh() - 1.0) + nu * t;
    let mut sum = 0.5 * 1.0; // t = 0 contributes half of cosh(0) = 1
    let mut peak = 0.0f64;
    let mut k = 1usize;
    loop {
        let t = k as f64 * step;
        let lt = log_term(t);
        peak = peak.max(lt);
        // cosh(nu t) e^{-x(cosh t - 1)} = (e^{lt} + e^{lt - 2 nu t}) / 2
        let term = 0.5 * (lt.exp() + (lt - 2.0 * nu * t).exp());
        sum += term;
        if lt < peak - 40.0 || k > 200_000 {
            break;
        }
        k += 1;
    }
    sum * step
}

/// Correlation families with unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationFunction<T> {
    Exponential { range: T },
    Matern { range: T, nu: T },
    Gaussian { range: T },
}

impl<T: Real> CorrelationFunction<T> {
    pub fn exponential(range: T) -> Result<Self> {
        check_positive("range", range)?;
        Ok(Self::Exponential { range })
    }

    pub fn matern(range: T, nu: T) -> Result<Self> {
        check_positive("range", range)?;
        check_positive("nu", nu)?;
        Ok(Self::Matern { range, nu })
    }

    pub fn gaussian(range: T) -> Result<Self> {
        check_positive("range", range)?;
        Ok(Self::Gaussian { range })
    }

    pub fn range(&self) -> T {
        match *self {
            Self::Exponential { range } | Self::Matern { range, .. } | Self::Gaussian { range } => range,
        }
    }

    /// Same family and smoothness with a different range.
    pub fn with_range(&self, range: T) -> Result<Self> {
        match *self {
            Self::Exponential { .. } => Self::exponential(range),
            Self::Matern { nu, .. } => Self::matern(range, nu),
            Self::Gaussian { .. } => Self::gaussian(range),
        }
    }

    /// Correlation at distance `h >= 0`.
    pub fn at(&self, h: T) -> T {
        match *self {
            Self::Exponential { range } => (-h / range).exp(),
            Self::Matern { range, nu } => matern_corr(range, nu, h),
            Self::Gaussian { range } => {
                let a = h / range;
                (-a * a).exp()
            }
        }
    }

    pub fn at_lag(&self, lag: [T; 2]) -> T {
        self.at((lag[0] * lag[0] + lag[1] * lag[1]).sqrt())
    }
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Covariance between the process values at two locations.
pub trait SpatialCovariance<T>: Sync {
    fn cov(&self, s: &Location<T>, u: &Location<T>) -> T;
}

/// Isotropic stationary covariance `sigma2 * rho(|s - u|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryCov<T> {
    pub sigma2: T,
    pub corr: CorrelationFunction<T>,
}

impl<T: Real> StationaryCov<T> {
    pub fn new(sigma2: T, corr: CorrelationFunction<T>) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= T::zero()) {
            return Err(Error::invalid(format!("variance must be >= 0, got {sigma2}")));
        }
        Ok(Self { sigma2, corr })
    }

    pub fn at(&self, h: T) -> T {
        self.sigma2 * self.corr.at(h)
    }
}

impl<T: Real> SpatialCovariance<T> for StationaryCov<T> {
    fn cov(&self, s: &Location<T>, u: &Location<T>) -> T {
        self.at(s.dist(u))
    }
}

impl<T: Real> SpatialCovariance<T> for MaternParams<T> {
    fn cov(&self, s: &Location<T>, u: &Location<T>) -> T {
        self.sigma2 * matern_corr(self.range, self.nu, s.dist(u))
    }
}

/// `|a| x |b|` matrix of `k(a_i, b_j)`. Exactly symmetric when `a == b`.
pub fn eval_cov_matrix<T: Real, K: SpatialCovariance<T> + ?Sized>(
    k: &K,
    a: &[Location<T>],
    b: &[Location<T>],
) -> DMatrix<T> {
    if a == b {
        return eval_cov_matrix_sym(k, a);
    }
    let cols: Vec<Vec<T>> = b
        .par_iter()
        .map(|u| a.iter().map(|s| k.cov(s, u)).collect())
        .collect();
    DMatrix::from_iterator(a.len(), b.len(), cols.into_iter().flatten())
}

fn eval_cov_matrix_sym<T: Real, K: SpatialCovariance<T> + ?Sized>(k: &K, a: &[Location<T>]) -> DMatrix<T> {
    let n = a.len();
    let cols: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|j| (0..=j).map(|i| k.cov(&a[i], &a[j])).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of an eigenvalue-based nonnegative-definiteness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NndCertificate<T> {
    pub min_eigenvalue: T,
    pub trace: T,
    pub verdict: Verdict,
    pub tol_used: T,
}

impl<T: Real> NndCertificate<T> {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// `tol * max(trace, 1)`, the allowed negative excursion.
    pub fn threshold(&self) -> T {
        self.tol_used * self.trace.max(T::one())
    }

    /// Converts a failed certificate into an error.
    pub fn require(self, what: &str) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::NotNnd {
                what: what.to_string(),
                min_eigenvalue: self.min_eigenvalue.as_f64(),
                threshold: self.threshold().as_f64(),
            })
        }
    }
}

/// Symmetrizes `m` and certifies `min eig >= -tol * max(trace, 1)`.
///
/// Inputs whose asymmetry exceeds the same threshold are rejected.
pub fn check_nnd<T: Real>(m: &DMatrix<T>, tol: T) -> Result<NndCertificate<T>> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if tol < T::zero() || !tol.is_finite() {
        return Err(Error::invalid("tolerance must be finite and >= 0"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let trace = m.trace();
    let threshold = tol * trace.max(T::one());
    let n = m.nrows();
    let mut asym = T::zero();
    for j in 0..n {
        for i in 0..j {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > threshold {
        return Err(Error::NotSymmetric {
            asymmetry: asym.as_f64(),
            tolerance: threshold.as_f64(),
        });
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let min_eigenvalue = if n == 0 {
        T::zero()
    } else {
        sym.symmetric_eigenvalues().iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
    };
    let verdict = if min_eigenvalue >= -threshold { Verdict::Pass } else { Verdict::Fail };
    Ok(NndCertificate {
        min_eigenvalue,
        trace,
        verdict,
        tol_used: tol,
    })
}

/// Bisquare basis functions sharing one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet<T> {
    centers: LocationSet<T>,
    scale: T,
}

impl<T: Real> BasisSet<T> {
    pub fn new(centers: LocationSet<T>, scale: T) -> Result<Self> {
        check_positive("basis scale", scale)?;
        Ok(Self { centers, scale })
    }

    pub fn centers(&self) -> &LocationSet<T> {
        &self.centers
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Component `a` is `(1 - (d_a/scale)^2)^2` inside the support, else 0.
    pub fn eval(&self, s: &Location<T>) -> DVector<T> {
        DVector::from_iterator(self.len(), self.centers.iter().map(|c| self.bump(c.dist(s))))
    }

    /// `n x b` design matrix with one row per location.
    pub fn design(&self, locs: &[Location<T>]) -> DMatrix<T> {
        DMatrix::from_fn(locs.len(), self.len(), |i, a| {
            self.bump(self.centers.as_slice()[a].dist(&locs[i]))
        })
    }

    fn bump(&self, d: T) -> T {
        if d < self.scale {
            let r = d / self.scale;
            let w = T::one() - r * r;
            w * w
        } else {
            T::zero()
        }
    }
}

/// Evaluates the basis at `s`; see [`BasisSet::eval`].
pub fn bisquare_basis<T: Real>(b: &BasisSet<T>, s: &Location<T>) -> DVector<T> {
    b.eval(s)
}
