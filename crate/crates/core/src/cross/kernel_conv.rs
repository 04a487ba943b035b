//! Kernel-convolution ("factor process") construction.
//!
//! `Z_q(s) = sum_k ∫ g_qk(u - s) U_k(u) du` with independent unit-variance
//! factors `U_k` of correlation `rho_k`. The implied cross-covariance
//!
//! ```text
//! C_qr(h) = cov(Z_q(s + h), Z_r(s))
//!         = sum_k ∬ g_qk(v1) g_rk(v2) rho_k(v1 - v2 + h) dv1 dv2
//! ```
//!
//! is generally asymmetric in `h`. Kernels here are Dirac masses or
//! isotropic Gaussian bumps, each with an amplitude and a shift. For a pair
//! of such kernels `v1 - v2` is itself Gaussian (or a point mass), so the
//! double integral reduces to one 2-D expectation, evaluated with a
//! tensor-product midpoint rule; Dirac pairs are exact.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::CorrelationFunction;
use crate::scalar::Real;
use crate::spatial::Location;

/// Kernel `g(v)`: `amplitude * delta(v - shift)` or
/// `amplitude * N(v; shift, width^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel<T> {
    Dirac { amplitude: T, shift: [T; 2] },
    Gaussian { amplitude: T, width: T, shift: [T; 2] },
}

impl<T: Real> Kernel<T> {
    pub fn zero() -> Self {
        Kernel::Dirac {
            amplitude: T::zero(),
            shift: [T::zero(); 2],
        }
    }

    pub fn dirac(amplitude: T) -> Self {
        Kernel::Dirac {
            amplitude,
            shift: [T::zero(); 2],
        }
    }

    pub fn amplitude(&self) -> T {
        match *self {
            Kernel::Dirac { amplitude, .. } | Kernel::Gaussian { amplitude, .. } => amplitude,
        }
    }

    pub fn shift(&self) -> [T; 2] {
        match *self {
            Kernel::Dirac { shift, .. } | Kernel::Gaussian { shift, .. } => shift,
        }
    }

    /// Zero for Dirac kernels.
    pub fn width(&self) -> T {
        match *self {
            Kernel::Dirac { .. } => T::zero(),
            Kernel::Gaussian { width, .. } => width,
        }
    }

    fn validate(&self) -> Result<()> {
        let s = self.shift();
        let finite = self.amplitude().is_finite() && s[0].is_finite() && s[1].is_finite();
        let w = self.width();
        if !finite || !w.is_finite() || w < T::zero() {
            return Err(Error::invalid("kernel amplitude, shift and width must be finite, width >= 0"));
        }
        Ok(())
    }
}

/// Midpoint rule over `[-half_width, half_width]` standard deviations per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    pub half_width: f64,
    /// Largest accepted error in the rule's total mass (tails plus discretization).
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: 64,
            half_width: 5.0,
            tolerance: 1e-4,
        }
    }
}

impl QuadratureSpec {
    /// Standard-normal nodes and weights along one axis, plus the 2-D mass error.
    fn rule<T: Real>(&self) -> Result<(Vec<(T, T)>, f64)> {
        if self.nodes_per_axis == 0 || !(self.half_width > 0.0) {
            return Err(Error::invalid("quadrature needs nodes and a positive half-width"));
        }
        let n = self.nodes_per_axis;
        let step = 2.0 * self.half_width / n as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let nodes: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let z = -self.half_width + (i as f64 + 0.5) * step;
                (z, norm * (-0.5 * z * z).exp() * step)
            })
            .collect();
        let mass: f64 = nodes.iter().map(|(_, w)| w).sum();
        let err = (mass * mass - 1.0).abs();
        Ok((nodes.into_iter().map(|(z, w)| (T::lit(z), T::lit(w))).collect(), err))
    }
}

#[derive(Debug, Clone)]
pub struct KernelConvModel<T> {
    factors: Vec<CorrelationFunction<T>>,
    kernels: Vec<Vec<Kernel<T>>>,
    quadrature: QuadratureSpec,
    nodes: Vec<(T, T)>,
}

impl<T: Real> KernelConvModel<T> {
    /// `kernels[q][k]` is `g_qk`, the loading of variable `q` on factor `k`.
    pub fn new(factors: Vec<CorrelationFunction<T>>, kernels: Vec<Vec<Kernel<T>>>, quadrature: QuadratureSpec) -> Result<Self> {
        let p = factors.len();
        if p == 0 || kernels.len() != p || kernels.iter().any(|row| row.len() != p) {
            return Err(Error::invalid(format!("need a {p}x{p} array of kernels for {p} factors")));
        }
        for k in kernels.iter().flatten() {
            k.validate()?;
        }
        let (nodes, mass_err) = quadrature.rule()?;
        let smooth = kernels.iter().flatten().any(|k| k.width() > T::zero());
        if smooth && mass_err > quadrature.tolerance {
            return Err(Error::Quadrature {
                estimated: mass_err,
                tolerance: quadrature.tolerance,
            });
        }
        Ok(Self {
            factors,
            kernels,
            quadrature,
            nodes,
        })
    }

    /// Linear model of coregionalization: `g_qk = A_qk delta`, so
    /// `C_qr(h) = sum_k A_qk A_rk rho_k(h)`.
    pub fn lmc(a: &DMatrix<T>, factors: Vec<CorrelationFunction<T>>) -> Result<Self> {
        let p = factors.len();
        if a.shape() != (p, p) {
            return Err(Error::invalid(format!("LMC loading matrix must be {p}x{p}")));
        }
        let kernels = (0..p).map(|q| (0..p).map(|k| Kernel::dirac(a[(q, k)])).collect()).collect();
        Self::new(factors, kernels, QuadratureSpec::default())
    }

    pub fn p(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[CorrelationFunction<T>] {
        &self.factors
    }

    pub fn kernels(&self) -> &[Vec<Kernel<T>>] {
        &self.kernels
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    pub fn is_dirac(&self) -> bool {
        self.kernels.iter().flatten().all(|k| k.width() == T::zero())
    }

    fn cross_cov_unchecked(&self, q: usize, r: usize, h: [T; 2]) -> T {
        let mut total = T::zero();
        for (k, rho) in self.factors.iter().enumerate() {
            let (gq, gr) = (self.kernels[q][k], self.kernels[r][k]);
            let amp = gq.amplitude() * gr.amplitude();
            if amp == T::zero() {
                continue;
            }
            let (sq, sr) = (gq.shift(), gr.shift());
            let base = [h[0] + sq[0] - sr[0], h[1] + sq[1] - sr[1]];
            let (wq, wr) = (gq.width(), gr.width());
            let sigma = (wq * wq + wr * wr).sqrt();
            let integral = if sigma == T::zero() {
                rho.at_lag(base)
            } else {
                let mut acc = T::zero();
                for &(zx, wx) in &self.nodes {
                    let mut row = T::zero();
                    for &(zy, wy) in &self.nodes {
                        row += wy * rho.at_lag([base[0] + sigma * zx, base[1] + sigma * zy]);
                    }
                    acc += wx * row;
                }
                acc
            };
            total += amp * integral;
        }
        total
    }

    /// `cov(Z_q(a_i), Z_r(b_j)) = C_qr(a_i - b_j)`.
    pub fn cov_block(&self, q: usize, a: &[Location<T>], r: usize, b: &[Location<T>]) -> Result<DMatrix<T>> {
        self.check_pair(q, r)?;
        if self.is_dirac() {
            return Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
                self.cross_cov_unchecked(q, r, a[i].lag(&b[j]))
            }));
        }
        // Quadrature is costly; regular layouts repeat lags heavily.
        let mut cache: HashMap<(u64, u64), T> = HashMap::new();
        let mut m = DMatrix::zeros(a.len(), b.len());
        for j in 0..b.len() {
            for i in 0..a.len() {
                let lag = a[i].lag(&b[j]);
                let key = (lag[0].as_f64().to_bits(), lag[1].as_f64().to_bits());
                m[(i, j)] = *cache.entry(key).or_insert_with(|| self.cross_cov_unchecked(q, r, lag));
            }
        }
        Ok(m)
    }

    fn check_pair(&self, q: usize, r: usize) -> Result<()> {
        if q >= self.p() || r >= self.p() {
            return Err(Error::invalid(format!("variable index out of range for {} variables", self.p())));
        }
        Ok(())
    }

    pub fn characteristic_range(&self) -> T {
        self.factors.iter().map(|f| f.range()).fold(T::zero(), |a, b| a.max(b))
    }
}

/// `C_qr(h)`, the covariance of `Z_q(s + h)` with `Z_r(s)`.
pub fn kernel_conv_cross_cov<T: Real>(m: &KernelConvModel<T>, q: usize, r: usize, h: [T; 2]) -> Result<T> {
    m.check_pair(q, r)?;
    if !(h[0].is_finite() && h[1].is_finite()) {
        return Err(Error::invalid("lag must be finite"));
    }
    Ok(m.cross_cov_unchecked(q, r, h))
}
