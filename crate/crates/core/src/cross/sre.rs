//! Spatial Random Effects (reduced-rank) multivariate model.
//!
//! `Z_q(s) = S_q(s)' eta_q + xi_q(s)` with `cov((eta_1', ..., eta_p')') = K`,
//! so `C_qr(s, u) = S_q(s)' K_qr S_r(u) + v_q(s) I(q = r, s = u)`.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::kernels::BasisSet;
use crate::scalar::Real;
use crate::spatial::Location;

/// Fine-scale variance `v(s)` of one variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Nugget<T> {
    Constant(T),
    /// Values at specific locations (exact match), `default` elsewhere.
    Tabulated { default: T, values: Vec<(Location<T>, T)> },
}

impl<T: Real> Nugget<T> {
    pub fn at(&self, s: &Location<T>) -> T {
        match self {
            Nugget::Constant(v) => *v,
            Nugget::Tabulated { default, values } => values
                .iter()
                .find(|(l, _)| l.same_as(s))
                .map(|(_, v)| *v)
                .unwrap_or(*default),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: &T| v.is_finite() && *v >= T::zero();
        let fine = match self {
            Nugget::Constant(v) => ok(v),
            Nugget::Tabulated { default, values } => ok(default) && values.iter().all(|(_, v)| ok(v)),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::invalid("nugget variances must be finite and >= 0"))
        }
    }
}

impl<T: Real> Default for Nugget<T> {
    fn default() -> Self {
        Nugget::Constant(T::zero())
    }
}

#[derive(Debug, Clone)]
pub struct SreModel<T> {
    bases: Vec<BasisSet<T>>,
    k: DMatrix<T>,
    nuggets: Vec<Nugget<T>>,
    offsets: Vec<usize>,
}

impl<T: Real> SreModel<T> {
    /// One basis and one nugget per variable; `k` is partitioned by basis size.
    pub fn new(bases: Vec<BasisSet<T>>, k: DMatrix<T>, nuggets: Vec<Nugget<T>>) -> Result<Self> {
        if bases.is_empty() || bases.len() != nuggets.len() {
            return Err(Error::invalid("need one basis and one nugget per variable"));
        }
        let mut offsets = vec![0];
        for b in &bases {
            offsets.push(offsets.last().unwrap() + b.len());
        }
        let dim = *offsets.last().unwrap();
        if k.shape() != (dim, dim) {
            return Err(Error::invalid(format!("K must be {dim}x{dim}, got {}x{}", k.nrows(), k.ncols())));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("K has non-finite entries"));
        }
        let scale = k.diagonal().amax().max(T::one());
        let asym = (&k - k.transpose()).amax();
        if asym > T::lit(1e-12) * scale {
            return Err(Error::invalid("K must be symmetric"));
        }
        if k.clone().cholesky().is_none() {
            return Err(Error::invalid("K must be positive definite"));
        }
        for n in &nuggets {
            n.validate()?;
        }
        Ok(Self {
            bases,
            k,
            nuggets,
            offsets,
        })
    }

    pub fn p(&self) -> usize {
        self.bases.len()
    }

    pub fn bases(&self) -> &[BasisSet<T>] {
        &self.bases
    }

    pub fn k(&self) -> &DMatrix<T> {
        &self.k
    }

    pub fn nuggets(&self) -> &[Nugget<T>] {
        &self.nuggets
    }

    /// Block `K_qr` of the random-effects covariance.
    pub fn k_block(&self, q: usize, r: usize) -> DMatrixView<'_, T> {
        let (oq, or) = (self.offsets[q], self.offsets[r]);
        self.k.view((oq, or), (self.bases[q].len(), self.bases[r].len()))
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Stacked design `diag(S_1(a_1), ..., S_p(a_p))` over per-variable locations.
    pub fn design(&self, locs: &[&[Location<T>]]) -> DMatrix<T> {
        let n: usize = locs.iter().map(|l| l.len()).sum();
        let mut s = DMatrix::zeros(n, self.k.nrows());
        let mut row = 0;
        for (q, l) in locs.iter().enumerate() {
            let d = self.bases[q].design(l);
            s.view_mut((row, self.offsets[q]), d.shape()).copy_from(&d);
            row += l.len();
        }
        s
    }

    /// `S_q(a) K_qr S_r(b)'`, plus the nugget at coincident same-variable pairs.
    pub fn cov_block(
        &self,
        q: usize,
        a: &[Location<T>],
        r: usize,
        b: &[Location<T>],
        with_nugget: bool,
    ) -> Result<DMatrix<T>> {
        if q >= self.p() || r >= self.p() {
            return Err(Error::invalid(format!("variable index out of range for {} variables", self.p())));
        }
        let sa = self.bases[q].design(a);
        let sb = self.bases[r].design(b);
        let mut m = &sa * self.k_block(q, r) * sb.transpose();
        if with_nugget && q == r {
            for (i, s) in a.iter().enumerate() {
                for (j, u) in b.iter().enumerate() {
                    if s.same_as(u) {
                        m[(i, j)] += self.nuggets[q].at(s);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn characteristic_range(&self) -> T {
        self.bases.iter().map(|b| b.scale()).fold(T::zero(), |a, b| a.max(b))
    }
}

/// `C_qr(s, u)` including the nugget when `q == r` and `s == u`.
pub fn sre_cross_cov<T: Real>(m: &SreModel<T>, q: usize, r: usize, s: &Location<T>, u: &Location<T>) -> Result<T> {
    Ok(m.cov_block(q, std::slice::from_ref(s), r, std::slice::from_ref(u), true)?[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::LocationSet;
    use approx::assert_relative_eq;

    fn loc(x: f64, y: f64) -> Location<f64> {
        Location::new(x, y).unwrap()
    }

    /// A single basis function equal to one over the whole test region.
    fn constant_basis() -> BasisSet<f64> {
        BasisSet::new(LocationSet::new(vec![loc(0.0, 0.0)]).unwrap(), 1e9).unwrap()
    }

    #[test]
    fn constant_basis_gives_k12() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.5]);
        let m = SreModel::new(vec![constant_basis(), constant_basis()], k, vec![Nugget::default(), Nugget::default()]).unwrap();
        let v = sre_cross_cov(&m, 0, 1, &loc(1.0, 2.0), &loc(-3.0, 0.5)).unwrap();
        assert_relative_eq!(v, 0.7, epsilon = 1e-9);
    }

    #[test]
    fn nugget_only_where_basis_vanishes() {
        let basis = BasisSet::new(LocationSet::new(vec![loc(0.0, 0.0)]).unwrap(), 1.0).unwrap();
        let m = SreModel::new(
            vec![basis.clone(), basis],
            DMatrix::identity(2, 2),
            vec![Nugget::Constant(0.3), Nugget::Constant(0.0)],
        )
        .unwrap();
        let s = loc(5.0, 5.0);
        assert_eq!(sre_cross_cov(&m, 0, 0, &s, &s).unwrap(), 0.3);
        assert_eq!(sre_cross_cov(&m, 0, 1, &s, &s).unwrap(), 0.0);
        assert_eq!(sre_cross_cov(&m, 0, 0, &s, &loc(5.0, 5.1)).unwrap(), 0.0);
    }

    #[test]
    fn heteroscedastic_nugget() {
        let special = loc(1.0, 1.0);
        let n = Nugget::Tabulated {
            default: 0.1,
            values: vec![(special, 0.9)],
        };
        assert_eq!(n.at(&special), 0.9);
        assert_eq!(n.at(&loc(0.0, 0.0)), 0.1);
    }

    #[test]
    fn construction_rejects_bad_k() {
        let b = || constant_basis();
        let nug = || vec![Nugget::default(), Nugget::default()];
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SreModel::new(vec![b(), b()], not_pd, nug()).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(SreModel::new(vec![b(), b()], asym, nug()).is_err());
        assert!(SreModel::new(vec![b(), b()], DMatrix::identity(3, 3), nug()).is_err());
        assert!(SreModel::new(vec![b(), b()], DMatrix::identity(2, 2), vec![Nugget::Constant(-1.0), Nugget::default()]).is_err());
    }
}
