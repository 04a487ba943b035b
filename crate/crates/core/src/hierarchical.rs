//! Latent decomposition `Z = W + xi + eps` on top of any cross-construction.
//!
//! `W` is the smooth process (a [`CrossModel`]), `xi` a micro-scale process
//! independent across distinct locations, `eps` white measurement error whose
//! cross-variable covariance acts only between observations sharing a
//! location. `Y = W + xi` is the usual prediction target.
//!
//! For SRE models the fine-scale term carried by the model itself is treated
//! as part of `xi`.

use nalgebra::DMatrix;

use crate::cross::{CovMatrixBundle, CrossModel, NND_TOL};
use crate::error::{Error, Result};
use crate::kernels::{check_nnd, NndCertificate};
use crate::scalar::Real;
use crate::spatial::{Location, LocationSet, MultivariateDataset};

/// Stationary measurement-error covariance `Sigma_eps(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementErrorSpec<T> {
    sigma_eps: DMatrix<T>,
}

impl<T: Real> MeasurementErrorSpec<T> {
    pub fn new(sigma_eps: DMatrix<T>) -> Result<Self> {
        check_nnd(&sigma_eps, T::lit(NND_TOL))?.require("measurement-error covariance")?;
        Ok(Self { sigma_eps })
    }

    pub fn diagonal(v: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v)))
    }

    pub fn zero(p: usize) -> Self {
        Self {
            sigma_eps: DMatrix::zeros(p, p),
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.sigma_eps
    }

    pub fn p(&self) -> usize {
        self.sigma_eps.nrows()
    }
}

/// Diagonal micro-scale variances `Sigma_xi(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroScaleSpec<T> {
    sigma_xi: Vec<T>,
}

impl<T: Real> MicroScaleSpec<T> {
    pub fn new(diag: Vec<T>) -> Result<Self> {
        if diag.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid("micro-scale variances must be finite and >= 0"));
        }
        Ok(Self { sigma_xi: diag })
    }

    /// Accepts a full matrix only if it is diagonal.
    pub fn from_matrix(m: &DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j && m[(i, j)] != T::zero() {
                    return Err(Error::invalid("micro-scale covariance must be diagonal"));
                }
            }
        }
        Self::new(m.diagonal().iter().copied().collect())
    }

    pub fn zero(p: usize) -> Self {
        Self {
            sigma_xi: vec![T::zero(); p],
        }
    }

    pub fn variances(&self) -> &[T] {
        &self.sigma_xi
    }

    pub fn matrix(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.sigma_xi))
    }

    pub fn p(&self) -> usize {
        self.sigma_xi.len()
    }
}

/// Which latent process a prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Predictand {
    /// `W + xi`: measurement error filtered, micro-scale kept.
    #[default]
    Y,
    /// The smooth process alone.
    W,
}

#[derive(Debug, Clone)]
pub struct HierarchicalModel<T> {
    smooth: CrossModel<T>,
    micro: MicroScaleSpec<T>,
    noise: MeasurementErrorSpec<T>,
}

impl<T: Real> HierarchicalModel<T> {
    pub fn new(smooth: CrossModel<T>, micro: MicroScaleSpec<T>, noise: MeasurementErrorSpec<T>) -> Result<Self> {
        let p = smooth.p();
        if micro.p() != p || noise.p() != p {
            return Err(Error::invalid(format!(
                "model has {p} variables but micro-scale spec has {} and noise spec {}",
                micro.p(),
                noise.p()
            )));
        }
        Ok(Self { smooth, micro, noise })
    }

    /// No micro-scale variation and no measurement error.
    pub fn smooth_only(smooth: CrossModel<T>) -> Self {
        let p = smooth.p();
        Self {
            smooth,
            micro: MicroScaleSpec::zero(p),
            noise: MeasurementErrorSpec::zero(p),
        }
    }

    /// Splits a per-variable total nugget: `eps = f * nugget`, `xi = (1 - f) * nugget`.
    pub fn from_nugget_split(smooth: CrossModel<T>, nugget: &[T], eps_fraction: &[T]) -> Result<Self> {
        let p = smooth.p();
        if nugget.len() != p || eps_fraction.len() != p {
            return Err(Error::invalid(format!("need {p} nuggets and {p} split fractions")));
        }
        if eps_fraction.iter().any(|f| !(*f >= T::zero() && *f <= T::one())) {
            return Err(Error::invalid("split fractions must lie in [0, 1]"));
        }
        let eps: Vec<T> = nugget.iter().zip(eps_fraction).map(|(n, f)| *n * *f).collect();
        let xi: Vec<T> = nugget.iter().zip(&eps).map(|(n, e)| *n - *e).collect();
        Self::new(smooth, MicroScaleSpec::new(xi)?, MeasurementErrorSpec::diagonal(&eps)?)
    }

    pub fn p(&self) -> usize {
        self.smooth.p()
    }

    pub fn smooth(&self) -> &CrossModel<T> {
        &self.smooth
    }

    pub fn micro(&self) -> &MicroScaleSpec<T> {
        &self.micro
    }

    pub fn noise(&self) -> &MeasurementErrorSpec<T> {
        &self.noise
    }

    /// `cov(Y_q(a_i), Y_r(b_j))` or `cov(W_q(a_i), W_r(b_j))`; never includes `eps`.
    pub fn target_block(
        &self,
        q: usize,
        a: &[Location<T>],
        r: usize,
        b: &[Location<T>],
        predictand: Predictand,
    ) -> Result<DMatrix<T>> {
        self.block(q, a, r, b, predictand == Predictand::Y, false)
    }

    /// `cov(Z_q(a_i), Z_r(b_j))` between observations.
    pub fn data_block(&self, q: usize, a: &[Location<T>], r: usize, b: &[Location<T>]) -> Result<DMatrix<T>> {
        self.block(q, a, r, b, true, true)
    }

    fn block(&self, q: usize, a: &[Location<T>], r: usize, b: &[Location<T>], with_xi: bool, with_eps: bool) -> Result<DMatrix<T>> {
        let mut m = self.smooth.cov_block(q, a, r, b, with_xi)?;
        // xi and eps are added as one sum so that swapping them is bitwise neutral
        let mut extra = T::zero();
        if with_xi && q == r {
            extra += self.micro.sigma_xi[q];
        }
        if with_eps {
            extra += self.noise.sigma_eps[(q, r)];
        }
        if extra != T::zero() {
            add_where_coincident(&mut m, a, b, extra);
        }
        Ok(m)
    }

    fn data_cell(&self, q: usize, s: &Location<T>, r: usize, u: &Location<T>) -> Result<T> {
        Ok(self.data_block(q, std::slice::from_ref(s), r, std::slice::from_ref(u))?[(0, 0)])
    }
}

fn add_where_coincident<T: Real>(m: &mut DMatrix<T>, a: &[Location<T>], b: &[Location<T>], v: T) {
    for (i, s) in a.iter().enumerate() {
        for (j, u) in b.iter().enumerate() {
            if s.same_as(u) {
                m[(i, j)] += v;
            }
        }
    }
}

/// Data covariance over per-variable location sets.
pub fn assemble_data_cov_at<T: Real>(m: &HierarchicalModel<T>, locations: &[LocationSet<T>]) -> Result<CovMatrixBundle<T>> {
    let p = m.p();
    if locations.len() != p {
        return Err(Error::invalid(format!("model has {p} variables but {} location sets were given", locations.len())));
    }
    let mut blocks = vec![vec![DMatrix::zeros(0, 0); p]; p];
    for q in 0..p {
        for r in q..p {
            let b = m.data_block(q, locations[q].as_slice(), r, locations[r].as_slice())?;
            if r != q {
                blocks[r][q] = b.transpose();
            }
            blocks[q][r] = b;
        }
    }
    CovMatrixBundle::from_blocks(locations.to_vec(), blocks)
}

/// Uncertified stacked data covariance; the likelihood code relies on the
/// Cholesky factorization to reject invalid parameter values instead.
pub fn data_cov_matrix<T: Real>(m: &HierarchicalModel<T>, locations: &[&[Location<T>]]) -> Result<DMatrix<T>> {
    let p = m.p();
    if locations.len() != p {
        return Err(Error::invalid(format!("model has {p} variables but {} location sets were given", locations.len())));
    }
    let sizes: Vec<usize> = locations.iter().map(|l| l.len()).collect();
    let off = crate::cross::offsets(&sizes);
    let mut c = DMatrix::zeros(off[p], off[p]);
    for q in 0..p {
        for r in q..p {
            let b = m.data_block(q, locations[q], r, locations[r])?;
            c.view_mut((off[q], off[r]), b.shape()).copy_from(&b);
            if r != q {
                c.view_mut((off[r], off[q]), (b.ncols(), b.nrows())).copy_from(&b.transpose());
            }
        }
    }
    Ok(c)
}

/// Data covariance at the observation locations of `d`.
pub fn assemble_data_cov<T: Real>(m: &HierarchicalModel<T>, d: &MultivariateDataset<T>) -> Result<CovMatrixBundle<T>> {
    let locs = d
        .location_sets()
        .into_iter()
        .map(|l| LocationSet::new(l.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    assemble_data_cov_at(m, &locs)
}

/// Origin discontinuity of the data covariance at one probe location.
#[derive(Debug, Clone)]
pub struct OriginGap<T> {
    pub gap: DMatrix<T>,
    pub eps_h: T,
    pub certificate: NndCertificate<T>,
}

/// Default probing distance: the smooth model's characteristic range over 1e6.
pub fn default_eps_h<T: Real>(m: &HierarchicalModel<T>) -> T {
    m.smooth.characteristic_range() / T::lit(1e6)
}

/// `C_Z(s, s) - lim C_Z(s, s + h)` approximated at `|h| = eps_h` along the
/// x axis. The limit is taken as the average of the two one-sided offsets so
/// that the linear term of an asymmetric cross-covariance cancels.
pub fn origin_gap<T: Real>(m: &HierarchicalModel<T>, probe: &Location<T>, eps_h: Option<T>) -> Result<OriginGap<T>> {
    let eps_h = eps_h.unwrap_or_else(|| default_eps_h(m));
    if !(eps_h.is_finite() && eps_h > T::zero()) {
        return Err(Error::invalid("eps_h must be positive"));
    }
    let near = probe.offset(eps_h, T::zero())?;
    let p = m.p();
    let half = T::lit(0.5);
    let mut gap = DMatrix::zeros(p, p);
    for q in 0..p {
        for r in 0..p {
            let at = m.data_cell(q, probe, r, probe)?;
            let off = (m.data_cell(q, probe, r, &near)? + m.data_cell(q, &near, r, probe)?) * half;
            gap[(q, r)] = at - off;
        }
    }
    // exact symmetry: each entry is already symmetric up to rounding
    let gap = (&gap + gap.transpose()) * half;
    let certificate = check_nnd(&gap, T::lit(NND_TOL))?;
    Ok(OriginGap { gap, eps_h, certificate })
}
