//! Bivariate covariance through `[Z2 | Z1][Z1]` on a discretization grid.
//!
//! With `E(Z2 | Z1) = B Z1`, `cov(Z2 | Z1) = S21` and `cov(Z1) = S11`:
//!
//! ```text
//! cov(Z1)     = S11
//! cov(Z1, Z2) = S11 B'
//! cov(Z2)     = S21 + B S11 B'
//! ```
//!
//! which is nonnegative definite for any real `B`.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{check_nnd, eval_cov_matrix, StationaryCov};
use crate::scalar::Real;
use crate::spatial::{Location, LocationSet};

use super::{CovMatrixBundle, NND_TOL};

/// Rule producing the `n x n` matrix `B` on a concrete grid.
#[derive(Debug, Clone, PartialEq)]
pub enum BOperator<T> {
    /// `b0 * I`.
    ScalarIdentity { b0: T },
    /// `b0 * exp(-|s - u| / range)`, each row normalized to sum to one.
    DistanceDecay { b0: T, range: T },
    /// Any real matrix; its size must match the grid.
    Explicit(DMatrix<T>),
}

impl<T: Real> BOperator<T> {
    /// Realizes `B` on `grid`.
    pub fn realize(&self, grid: &[Location<T>]) -> Result<DMatrix<T>> {
        let n = grid.len();
        let b = match self {
            BOperator::ScalarIdentity { b0 } => DMatrix::from_diagonal_element(n, n, *b0),
            BOperator::DistanceDecay { b0, range } => {
                if !(range.is_finite() && *range > T::zero()) {
                    return Err(Error::invalid("B decay range must be positive"));
                }
                let mut m = DMatrix::from_fn(n, n, |i, j| (-grid[i].dist(&grid[j]) / *range).exp());
                for mut row in m.row_iter_mut() {
                    let s = row.sum();
                    row *= *b0 / s;
                }
                m
            }
            BOperator::Explicit(m) => {
                if m.shape() != (n, n) {
                    return Err(Error::invalid(format!(
                        "explicit B is {}x{} but the grid has {n} nodes",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m.clone()
            }
        };
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("B has non-finite entries"));
        }
        Ok(b)
    }
}

/// Which dataset variable plays the conditioning role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditionOrder {
    /// Variable 0 is marginal, variable 1 is conditioned on it.
    #[default]
    FirstThenSecond,
    SecondThenFirst,
}

#[derive(Debug, Clone)]
struct GridBlocks<T> {
    s11: DMatrix<T>,
    s12: DMatrix<T>,
    s22: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct ConditionalModel<T> {
    cov1: StationaryCov<T>,
    cond_cov: StationaryCov<T>,
    b: BOperator<T>,
    grid: Option<LocationSet<T>>,
    order: ConditionOrder,
    blocks: OnceLock<GridBlocks<T>>,
}

impl<T: Real> ConditionalModel<T> {
    /// `grid` is required unless `b` is a scalar multiple of the identity.
    pub fn new(
        cov1: StationaryCov<T>,
        cond_cov: StationaryCov<T>,
        b: BOperator<T>,
        grid: Option<LocationSet<T>>,
    ) -> Result<Self> {
        match (&b, &grid) {
            (BOperator::ScalarIdentity { b0 }, _) if !b0.is_finite() => {
                return Err(Error::invalid("b0 must be finite"))
            }
            (BOperator::ScalarIdentity { .. }, _) => {}
            (_, None) => return Err(Error::invalid("this B rule needs a discretization grid")),
            (_, Some(g)) => {
                b.realize(g.as_slice())?;
            }
        }
        Ok(Self {
            cov1,
            cond_cov,
            b,
            grid,
            order: ConditionOrder::default(),
            blocks: OnceLock::new(),
        })
    }

    pub fn with_order(mut self, order: ConditionOrder) -> Self {
        self.order = order;
        self
    }

    pub fn order(&self) -> ConditionOrder {
        self.order
    }

    pub fn cov1(&self) -> &StationaryCov<T> {
        &self.cov1
    }

    pub fn cond_cov(&self) -> &StationaryCov<T> {
        &self.cond_cov
    }

    pub fn b_operator(&self) -> &BOperator<T> {
        &self.b
    }

    pub fn grid(&self) -> Option<&LocationSet<T>> {
        self.grid.as_ref()
    }

    /// Maps a dataset variable to its role (0 = conditioning, 1 = conditioned).
    fn role(&self, q: usize) -> usize {
        match self.order {
            ConditionOrder::FirstThenSecond => q,
            ConditionOrder::SecondThenFirst => 1 - q,
        }
    }

    fn grid_blocks(&self) -> &GridBlocks<T> {
        self.blocks.get_or_init(|| {
            let grid = self.grid.as_ref().expect("grid checked at construction");
            let g = grid.as_slice();
            let b = self.b.realize(g).expect("B realized at construction");
            let s11 = eval_cov_matrix(&self.cov1, g, g);
            let s21 = eval_cov_matrix(&self.cond_cov, g, g);
            let s12 = &s11 * b.transpose();
            let s22 = s21 + &b * &s12;
            GridBlocks { s11, s12, s22 }
        })
    }

    /// `cov(Z_q(a_i), Z_r(b_j))` for dataset variables `q`, `r`.
    pub fn cov_block(&self, q: usize, a: &[Location<T>], r: usize, b: &[Location<T>]) -> Result<DMatrix<T>> {
        if q > 1 || r > 1 {
            return Err(Error::invalid("conditional model has two variables"));
        }
        let (qa, rb) = (self.role(q), self.role(r));
        if let BOperator::ScalarIdentity { b0 } = self.b {
            // Pointwise form of the grid formulas, exact on any grid containing a and b.
            let m = match (qa, rb) {
                (0, 0) => eval_cov_matrix(&self.cov1, a, b),
                (0, 1) | (1, 0) => eval_cov_matrix(&self.cov1, a, b) * b0,
                _ => eval_cov_matrix(&self.cond_cov, a, b) + eval_cov_matrix(&self.cov1, a, b) * (b0 * b0),
            };
            return Ok(m);
        }
        let grid = self.grid.as_ref().expect("grid checked at construction");
        let blocks = self.grid_blocks();
        let ia: Vec<usize> = a.iter().map(|s| grid.nearest(s)).collect();
        let ib: Vec<usize> = b.iter().map(|s| grid.nearest(s)).collect();
        let pick = |m: &DMatrix<T>, transpose: bool| {
            DMatrix::from_fn(ia.len(), ib.len(), |i, j| {
                if transpose {
                    m[(ib[j], ia[i])]
                } else {
                    m[(ia[i], ib[j])]
                }
            })
        };
        Ok(match (qa, rb) {
            (0, 0) => pick(&blocks.s11, false),
            (0, 1) => pick(&blocks.s12, false),
            (1, 0) => pick(&blocks.s12, true),
            _ => pick(&blocks.s22, false),
        })
    }

    pub fn characteristic_range(&self) -> T {
        self.cov1.corr.range().max(self.cond_cov.corr.range())
    }
}

/// Joint covariance of `(Z1', Z2')'` on a common grid.
///
/// For the scalar-identity rule `l1` and `l2` may differ; other rules need
/// `l1 == l2`, which becomes the grid when the model carries none.
pub fn conditional_joint_cov<T: Real>(
    m: &ConditionalModel<T>,
    l1: &LocationSet<T>,
    l2: &LocationSet<T>,
) -> Result<CovMatrixBundle<T>> {
    let scalar = matches!(m.b, BOperator::ScalarIdentity { .. });
    if !scalar && l1 != l2 {
        return Err(Error::invalid("general B rules need both variables on the same grid"));
    }
    let s11 = eval_cov_matrix(&m.cov1, l1.as_slice(), l1.as_slice());
    check_nnd(&s11, T::lit(NND_TOL))?.require("marginal covariance S11")?;
    let s21 = eval_cov_matrix(&m.cond_cov, l2.as_slice(), l2.as_slice());
    check_nnd(&s21, T::lit(NND_TOL))?.require("conditional covariance S2|1")?;

    let locs = [l1.clone(), l2.clone()];
    let blocks = if scalar || m.grid.as_ref().is_some_and(|g| g == l1) {
        let mut blocks = vec![vec![DMatrix::zeros(0, 0); 2]; 2];
        for (q, row) in blocks.iter_mut().enumerate() {
            for (r, blk) in row.iter_mut().enumerate() {
                *blk = m.cov_block(q, locs[q].as_slice(), r, locs[r].as_slice())?;
            }
        }
        blocks
    } else {
        let g = l1.as_slice();
        let b = m.b.realize(g)?;
        let s12 = &s11 * b.transpose();
        let s22 = &s21 + &b * &s12;
        let (c11, c12, c22) = (s11, s12, s22);
        match m.order {
            ConditionOrder::FirstThenSecond => vec![vec![c11, c12.clone()], vec![c12.transpose(), c22]],
            ConditionOrder::SecondThenFirst => vec![vec![c22, c12.transpose()], vec![c12, c11]],
        }
    };
    CovMatrixBundle::from_blocks(locs.to_vec(), blocks)
}
