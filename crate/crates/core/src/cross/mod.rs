//! Valid multivariate covariance models and their matrices.
//!
//! Three constructive routes are provided, each nonnegative definite by
//! construction: [`conditional`], [`sre`] and [`kernel_conv`] (which
//! contains the linear model of coregionalization as its Dirac case).

pub mod conditional;
pub mod kernel_conv;
pub mod simulate;
pub mod sre;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{check_nnd, NndCertificate};
use crate::scalar::Real;
use crate::spatial::{Location, LocationSet};

pub use conditional::{conditional_joint_cov, BOperator, ConditionOrder, ConditionalModel};
pub use kernel_conv::{kernel_conv_cross_cov, Kernel, KernelConvModel, QuadratureSpec};
pub use simulate::{simulate_field, FieldSampler};
pub use sre::{sre_cross_cov, Nugget, SreModel};

/// Relative tolerance for certifying assembled joint matrices.
pub const NND_TOL: f64 = 1e-8;

/// One of the constructive cross-covariance models.
#[derive(Debug, Clone)]
pub enum CrossModel<T> {
    Conditional(ConditionalModel<T>),
    Sre(SreModel<T>),
    KernelConv(KernelConvModel<T>),
}

impl<T: Real> CrossModel<T> {
    pub fn p(&self) -> usize {
        match self {
            CrossModel::Conditional(_) => 2,
            CrossModel::Sre(m) => m.p(),
            CrossModel::KernelConv(m) => m.p(),
        }
    }

    /// `cov(Z_q(a_i), Z_r(b_j))`. With `with_nugget == false` the SRE
    /// fine-scale term is left out; the other routes have none.
    pub fn cov_block(
        &self,
        q: usize,
        a: &[Location<T>],
        r: usize,
        b: &[Location<T>],
        with_nugget: bool,
    ) -> Result<DMatrix<T>> {
        match self {
            CrossModel::Conditional(m) => m.cov_block(q, a, r, b),
            CrossModel::Sre(m) => m.cov_block(q, a, r, b, with_nugget),
            CrossModel::KernelConv(m) => m.cov_block(q, a, r, b),
        }
    }

    /// Fine-scale variance the model itself carries at `s` (SRE nugget).
    pub fn own_nugget(&self, q: usize, s: &Location<T>) -> T {
        match self {
            CrossModel::Sre(m) => m.nuggets()[q].at(s),
            _ => T::zero(),
        }
    }

    /// Length scale used for default probing distances.
    pub fn characteristic_range(&self) -> T {
        match self {
            CrossModel::Conditional(m) => m.characteristic_range(),
            CrossModel::Sre(m) => m.characteristic_range(),
            CrossModel::KernelConv(m) => m.characteristic_range(),
        }
    }
}

impl<T: Real> From<ConditionalModel<T>> for CrossModel<T> {
    fn from(m: ConditionalModel<T>) -> Self {
        CrossModel::Conditional(m)
    }
}

impl<T: Real> From<SreModel<T>> for CrossModel<T> {
    fn from(m: SreModel<T>) -> Self {
        CrossModel::Sre(m)
    }
}

impl<T: Real> From<KernelConvModel<T>> for CrossModel<T> {
    fn from(m: KernelConvModel<T>) -> Self {
        CrossModel::KernelConv(m)
    }
}

/// Joint covariance over concrete per-variable location sets.
#[derive(Debug, Clone)]
pub struct CovMatrixBundle<T> {
    locations: Vec<LocationSet<T>>,
    blocks: Vec<Vec<DMatrix<T>>>,
    joint: DMatrix<T>,
    certificate: NndCertificate<T>,
}

impl<T: Real> CovMatrixBundle<T> {
    /// Assembles, symmetrizes and certifies `blocks[q][r]`; refuses the
    /// bundle when the certificate fails.
    pub fn from_blocks(locations: Vec<LocationSet<T>>, blocks: Vec<Vec<DMatrix<T>>>) -> Result<Self> {
        let p = locations.len();
        if blocks.len() != p || blocks.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("block array must be p x p"));
        }
        let sizes: Vec<usize> = locations.iter().map(|l| l.len()).collect();
        let offsets = offsets(&sizes);
        let n = offsets[p];
        let mut joint = DMatrix::zeros(n, n);
        for q in 0..p {
            for r in 0..p {
                let b = &blocks[q][r];
                if b.shape() != (sizes[q], sizes[r]) {
                    return Err(Error::invalid(format!(
                        "block ({q}, {r}) is {}x{}, expected {}x{}",
                        b.nrows(),
                        b.ncols(),
                        sizes[q],
                        sizes[r]
                    )));
                }
                joint.view_mut((offsets[q], offsets[r]), b.shape()).copy_from(b);
            }
        }
        let certificate = check_nnd(&joint, T::lit(NND_TOL))?.require("joint covariance")?;
        let half = T::lit(0.5);
        for j in 0..n {
            for i in 0..j {
                let v = (joint[(i, j)] + joint[(j, i)]) * half;
                joint[(i, j)] = v;
                joint[(j, i)] = v;
            }
        }
        let blocks = (0..p)
            .map(|q| {
                (0..p)
                    .map(|r| joint.view((offsets[q], offsets[r]), (sizes[q], sizes[r])).into_owned())
                    .collect()
            })
            .collect();
        Ok(Self {
            locations,
            blocks,
            joint,
            certificate,
        })
    }

    pub fn p(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[LocationSet<T>] {
        &self.locations
    }

    pub fn block(&self, q: usize, r: usize) -> &DMatrix<T> {
        &self.blocks[q][r]
    }

    pub fn joint(&self) -> &DMatrix<T> {
        &self.joint
    }

    pub fn certificate(&self) -> &NndCertificate<T> {
        &self.certificate
    }

    /// Start index of each variable's block, with the total appended.
    pub fn offsets(&self) -> Vec<usize> {
        offsets(&self.locations.iter().map(|l| l.len()).collect::<Vec<_>>())
    }

    /// Writes the joint matrix as headerless CSV rows.
    pub fn write_joint_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for row in self.joint.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(",")).map_err(|e| Error::invalid(format!("write: {e}")))?;
        }
        Ok(())
    }
}

pub(crate) fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut o = Vec::with_capacity(sizes.len() + 1);
    o.push(0);
    for s in sizes {
        o.push(o.last().unwrap() + s);
    }
    o
}

/// Evaluates every block of `model` over `locations` and certifies the result.
pub fn assemble_bundle<T: Real>(model: &CrossModel<T>, locations: &[LocationSet<T>]) -> Result<CovMatrixBundle<T>> {
    let p = model.p();
    if locations.len() != p {
        return Err(Error::invalid(format!("model has {p} variables but {} location sets were given", locations.len())));
    }
    let mut blocks = vec![vec![DMatrix::zeros(0, 0); p]; p];
    for q in 0..p {
        for r in q..p {
            let b = model.cov_block(q, locations[q].as_slice(), r, locations[r].as_slice(), true)?;
            if r != q {
                blocks[r][q] = b.transpose();
            }
            blocks[q][r] = b;
        }
    }
    CovMatrixBundle::from_blocks(locations.to_vec(), blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BasisSet, CorrelationFunction, StationaryCov};
    use crate::spatial::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * 0.05
    }

    #[test]
    fn conditional_on_grid_passes() {
        let grid = make_grid(0.0, 4.0, 0.0, 4.0, 5, 5).unwrap();
        let m = ConditionalModel::new(
            StationaryCov::new(1.0, CorrelationFunction::matern(2.0, 1.5).unwrap()).unwrap(),
            StationaryCov::new(0.4, CorrelationFunction::exponential(1.0).unwrap()).unwrap(),
            BOperator::DistanceDecay { b0: -1.3, range: 0.7 },
            Some(grid.clone()),
        )
        .unwrap();
        let b = assemble_bundle(&m.into(), &[grid.clone(), grid]).unwrap();
        assert!(b.certificate().passed());
        assert_eq!(b.joint().shape(), (50, 50));
    }

    #[test]
    fn sre_on_grid_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = make_grid(0.0, 5.0, 0.0, 5.0, 6, 6).unwrap();
        for _ in 0..20 {
            let c1 = make_grid(0.0, 5.0, 0.0, 5.0, 3, 3).unwrap();
            let c2 = make_grid(rng.random_range(-1.0..1.0), 6.0, 0.5, 4.5, 2, 3).unwrap();
            let b1 = BasisSet::new(c1, rng.random_range(1.5..4.0)).unwrap();
            let b2 = BasisSet::new(c2, rng.random_range(1.5..4.0)).unwrap();
            let k = random_spd(&mut rng, 15);
            let m = SreModel::new(vec![b1, b2], k, vec![Nugget::Constant(0.1), Nugget::Constant(0.0)]).unwrap();
            let b = assemble_bundle(&m.into(), &[grid.clone(), grid.clone()]).unwrap();
            assert!(b.certificate().passed());
        }
    }

    #[test]
    fn invalid_blocks_are_refused() {
        let l = make_grid(0.0, 1.0, 0.0, 0.0, 2, 1).unwrap();
        let one = LocationSet::new(vec![l.as_slice()[0]]).unwrap();
        let blocks = vec![
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)],
            vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0)],
        ];
        let err = CovMatrixBundle::from_blocks(vec![one.clone(), one], blocks).unwrap_err();
        assert!(matches!(err, Error::NotNnd { .. }));
    }

    #[test]
    fn lmc_bundle_is_symmetric_and_valid() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
        let f = vec![
            CorrelationFunction::exponential(1.0).unwrap(),
            CorrelationFunction::matern(2.0, 2.5).unwrap(),
        ];
        let m = KernelConvModel::lmc(&a, f).unwrap();
        let g = make_grid(0.0, 3.0, 0.0, 3.0, 4, 4).unwrap();
        let h = make_grid(0.25, 2.75, 0.5, 2.5, 3, 2).unwrap();
        let b = assemble_bundle(&m.into(), &[g, h]).unwrap();
        assert_eq!(b.joint(), &b.joint().transpose());
        assert_eq!(b.block(1, 0), &b.block(0, 1).transpose());
    }

    #[test]
    fn joint_csv_has_one_row_per_observation() {
        let m = KernelConvModel::lmc(&DMatrix::identity(1, 1), vec![CorrelationFunction::exponential(1.0).unwrap()]).unwrap();
        let g = make_grid(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let b = assemble_bundle(&m.into(), &[g]).unwrap();
        let mut out = Vec::new();
        b.write_joint_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }
}
