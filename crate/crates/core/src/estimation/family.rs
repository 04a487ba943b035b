//! Parametric model families: named parameters mapped to hierarchical models.
//!
//! Every family carries one total nugget per variable (`nugget_q`), the sum of
//! micro-scale and measurement-error variance; data alone cannot split it.

use nalgebra::DMatrix;

use crate::cross::{BOperator, ConditionOrder, ConditionalModel, CrossModel, Kernel, KernelConvModel, Nugget, QuadratureSpec, SreModel};
use crate::error::{Error, Result};
use crate::hierarchical::HierarchicalModel;
use crate::kernels::{BasisSet, CorrelationFunction, StationaryCov};
use crate::scalar::Real;
use crate::spatial::{LocationSet, MultivariateDataset};

/// One named parameter with its admissible interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ParamDef {
    fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }

    fn positive(name: impl Into<String>) -> Self {
        Self::new(name, 0.0, f64::INFINITY)
    }

    fn real(name: impl Into<String>) -> Self {
        Self::new(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.lower && v <= self.upper
    }
}

/// How the conditional family builds its `B` operator.
#[derive(Debug, Clone)]
pub enum BRule<T> {
    ScalarIdentity,
    /// Row-normalized exponential decay on `grid`; adds parameter `b_range`.
    DistanceDecay { grid: LocationSet<T> },
}

/// Structure of the SRE random-effects covariance `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KStructure {
    /// `K = C (x) R`: `C` from per-variable variances and one shared
    /// correlation, `R_ij = exp(-|c_i - c_j| / k_range)` over basis centers
    /// (all variables use the same centers).
    Structured,
    /// Every entry of `K` free (fitted by EM, not by the simplex search).
    Full,
}

#[derive(Debug, Clone)]
pub enum Family<T> {
    /// Bivariate conditional model: `sigma2_1, range_1, sigma2_2, range_2, b0,
    /// [b_range], nugget_1, nugget_2`; `sigma2_2`/`range_2` describe `Z2 | Z1`.
    Conditional {
        corr: [CorrelationFunction<T>; 2],
        b: BRule<T>,
        order: ConditionOrder,
    },
    /// Bivariate LMC: `a11, a21, a22, range_1, range_2, nugget_1, nugget_2`.
    Lmc { corr: [CorrelationFunction<T>; 2] },
    /// Bivariate kernel convolution: the LMC loadings plus `shift_x, shift_y`
    /// (applied to both kernels of variable 2) and `width` (0 = Dirac).
    KernelConv { corr: [CorrelationFunction<T>; 2] },
    /// SRE with one basis set per variable.
    Sre { bases: Vec<BasisSet<T>>, structure: KStructure },
    /// No spatial dependence: `nugget_1..p`.
    PureNugget { p: usize },
}

fn nugget_defs(p: usize) -> Vec<ParamDef> {
    (1..=p).map(|q| ParamDef::positive(format!("nugget_{q}"))).collect()
}

impl<T: Real> Family<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Conditional { .. } => "conditional",
            Family::Lmc { .. } => "lmc",
            Family::KernelConv { .. } => "kernel_conv",
            Family::Sre {
                structure: KStructure::Structured,
                ..
            } => "sre",
            Family::Sre { .. } => "sre_full",
            Family::PureNugget { .. } => "nugget",
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Family::Sre { bases, .. } => bases.len(),
            Family::PureNugget { p } => *p,
            _ => 2,
        }
    }

    pub fn defs(&self) -> Vec<ParamDef> {
        let mut d = match self {
            Family::Conditional { b, .. } => {
                let mut v = vec![
                    ParamDef::positive("sigma2_1"),
                    ParamDef::positive("range_1"),
                    ParamDef::positive("sigma2_2"),
                    ParamDef::positive("range_2"),
                    ParamDef::real("b0"),
                ];
                if matches!(b, BRule::DistanceDecay { .. }) {
                    v.push(ParamDef::positive("b_range"));
                }
                v
            }
            Family::Lmc { .. } | Family::KernelConv { .. } => {
                let mut v = vec![
                    ParamDef::positive("a11"),
                    ParamDef::real("a21"),
                    ParamDef::positive("a22"),
                    ParamDef::positive("range_1"),
                    ParamDef::positive("range_2"),
                ];
                if matches!(self, Family::KernelConv { .. }) {
                    v.push(ParamDef::real("shift_x"));
                    v.push(ParamDef::real("shift_y"));
                    v.push(ParamDef::positive("width"));
                }
                v
            }
            Family::Sre {
                bases,
                structure: KStructure::Structured,
            } => {
                let p = bases.len();
                let mut v: Vec<ParamDef> = (1..=p).map(|q| ParamDef::positive(format!("k_var_{q}"))).collect();
                if p > 1 {
                    v.push(ParamDef::new("k_corr", -1.0 / (p as f64 - 1.0), 1.0));
                }
                v.push(ParamDef::positive("k_range"));
                v
            }
            Family::Sre { bases, .. } => {
                let b: usize = bases.iter().map(|b| b.len()).sum();
                let mut v = Vec::new();
                for i in 0..b {
                    for j in i..b {
                        if i == j {
                            v.push(ParamDef::positive(format!("k_{}_{}", i + 1, j + 1)));
                        } else {
                            v.push(ParamDef::real(format!("k_{}_{}", i + 1, j + 1)));
                        }
                    }
                }
                v
            }
            Family::PureNugget { .. } => Vec::new(),
        };
        d.extend(nugget_defs(self.p()));
        d
    }

    pub fn names(&self) -> Vec<String> {
        self.defs().into_iter().map(|d| d.name).collect()
    }

    /// Checks length and bounds of `theta`.
    pub fn check(&self, theta: &[f64]) -> Result<()> {
        let defs = self.defs();
        if theta.len() != defs.len() {
            return Err(Error::invalid(format!(
                "{} family takes {} parameters, got {}",
                self.name(),
                defs.len(),
                theta.len()
            )));
        }
        for (d, v) in defs.iter().zip(theta) {
            if !d.contains(*v) {
                return Err(Error::invalid(format!("parameter {} = {v} outside [{}, {}]", d.name, d.lower, d.upper)));
            }
        }
        Ok(())
    }

    pub fn nuggets(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.p();
        theta[theta.len() - p..].to_vec()
    }

    /// The SRE random-effects covariance implied by `theta`.
    pub fn sre_k(&self, theta: &[f64]) -> Result<DMatrix<T>> {
        let Family::Sre { bases, structure } = self else {
            return Err(Error::invalid("not an SRE family"));
        };
        let p = bases.len();
        let sizes: Vec<usize> = bases.iter().map(|b| b.len()).collect();
        let b: usize = sizes.iter().sum();
        match structure {
            KStructure::Structured => {
                let c0 = bases[0].centers();
                if bases.iter().any(|bs| bs.centers() != c0) {
                    return Err(Error::invalid("structured K needs identical basis centers for every variable"));
                }
                let (var, rest) = theta.split_at(p);
                let (rho, k_range) = if p > 1 { (rest[0], rest[1]) } else { (0.0, rest[0]) };
                let n = c0.len();
                let r = DMatrix::from_fn(n, n, |i, j| (-c0.as_slice()[i].dist(&c0.as_slice()[j]).as_f64() / k_range).exp());
                Ok(DMatrix::from_fn(b, b, |i, j| {
                    let (qi, qj) = (i / n, j / n);
                    let c = if qi == qj { var[qi] } else { rho * (var[qi] * var[qj]).sqrt() };
                    T::lit(c * r[(i % n, j % n)])
                }))
            }
            KStructure::Full => {
                let mut k = DMatrix::zeros(b, b);
                let mut idx = 0;
                for i in 0..b {
                    for j in i..b {
                        k[(i, j)] = T::lit(theta[idx]);
                        k[(j, i)] = T::lit(theta[idx]);
                        idx += 1;
                    }
                }
                Ok(k)
            }
        }
    }

    /// Full-K parameter vector (upper triangle row by row, then nuggets).
    pub fn full_theta(k: &DMatrix<T>, nuggets: &[f64]) -> Vec<f64> {
        let b = k.nrows();
        let mut v = Vec::with_capacity(b * (b + 1) / 2 + nuggets.len());
        for i in 0..b {
            for j in i..b {
                v.push(k[(i, j)].as_f64());
            }
        }
        v.extend_from_slice(nuggets);
        v
    }

    /// Smooth (W) model at `theta`; SRE models get zero fine-scale variance
    /// since the nugget is carried by the hierarchical layer.
    pub fn smooth(&self, theta: &[f64]) -> Result<CrossModel<T>> {
        self.check(theta)?;
        let l = T::lit;
        Ok(match self {
            Family::Conditional { corr, b, order } => {
                let c1 = StationaryCov::new(l(theta[0]), corr[0].with_range(l(theta[1]))?)?;
                let c2 = StationaryCov::new(l(theta[2]), corr[1].with_range(l(theta[3]))?)?;
                let (op, grid) = match b {
                    BRule::ScalarIdentity => (BOperator::ScalarIdentity { b0: l(theta[4]) }, None),
                    BRule::DistanceDecay { grid } => (
                        BOperator::DistanceDecay {
                            b0: l(theta[4]),
                            range: l(theta[5]),
                        },
                        Some(grid.clone()),
                    ),
                };
                ConditionalModel::new(c1, c2, op, grid)?.with_order(*order).into()
            }
            Family::Lmc { corr } => {
                let a = DMatrix::from_row_slice(2, 2, &[l(theta[0]), T::zero(), l(theta[1]), l(theta[2])]);
                let f = vec![corr[0].with_range(l(theta[3]))?, corr[1].with_range(l(theta[4]))?];
                KernelConvModel::lmc(&a, f)?.into()
            }
            Family::KernelConv { corr } => {
                let f = vec![corr[0].with_range(l(theta[3]))?, corr[1].with_range(l(theta[4]))?];
                let shift = [l(theta[5]), l(theta[6])];
                let width = l(theta[7]);
                let kern = |amp: T, shift: [T; 2]| {
                    if width == T::zero() {
                        Kernel::Dirac { amplitude: amp, shift }
                    } else {
                        Kernel::Gaussian {
                            amplitude: amp,
                            width,
                            shift,
                        }
                    }
                };
                let zero = [T::zero(); 2];
                let kernels = vec![
                    vec![kern(l(theta[0]), zero), kern(T::zero(), zero)],
                    vec![kern(l(theta[1]), shift), kern(l(theta[2]), shift)],
                ];
                KernelConvModel::new(f, kernels, QuadratureSpec::default())?.into()
            }
            Family::Sre { bases, .. } => {
                let k = self.sre_k(theta)?;
                SreModel::new(bases.clone(), k, vec![Nugget::default(); bases.len()])?.into()
            }
            Family::PureNugget { p } => {
                let f = vec![CorrelationFunction::exponential(T::one())?; *p];
                KernelConvModel::lmc(&DMatrix::zeros(*p, *p), f)?.into()
            }
        })
    }

    /// Hierarchical model with the nugget split by `eps_fraction` (0 = all micro-scale).
    pub fn model(&self, theta: &[f64], eps_fraction: &[f64]) -> Result<HierarchicalModel<T>> {
        let smooth = self.smooth(theta)?;
        let nug: Vec<T> = self.nuggets(theta).into_iter().map(T::lit).collect();
        let f: Vec<T> = eps_fraction.iter().map(|v| T::lit(*v)).collect();
        HierarchicalModel::from_nugget_split(smooth, &nug, &f)
    }

    /// Data-driven starting values.
    pub fn default_init(&self, d: &MultivariateDataset<T>) -> Vec<f64> {
        let var: Vec<f64> = d
            .series()
            .iter()
            .map(|s| {
                let m = s.mean().as_f64();
                let v = s.values().iter().map(|x| (x.as_f64() - m).powi(2)).sum::<f64>() / s.len() as f64;
                v.max(1e-6)
            })
            .collect();
        let (xmin, xmax, ymin, ymax) = d
            .series()
            .iter()
            .map(|s| LocationSet::new(s.locations().to_vec()).expect("nonempty").bounds())
            .fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |acc, b| {
                (
                    acc.0.min(b.0.as_f64()),
                    acc.1.max(b.1.as_f64()),
                    acc.2.min(b.2.as_f64()),
                    acc.3.max(b.3.as_f64()),
                )
            });
        let extent = ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).sqrt().max(1e-6);
        let range = extent / 6.0;
        let v = |q: usize| var.get(q).copied().unwrap_or(1.0);
        let mut theta = match self {
            Family::Conditional { b, .. } => {
                let mut t = vec![0.8 * v(0), range, 0.8 * v(1), range, 0.0];
                if matches!(b, BRule::DistanceDecay { .. }) {
                    t.push(range / 4.0);
                }
                t
            }
            Family::Lmc { .. } => vec![(0.8 * v(0)).sqrt(), 0.0, (0.8 * v(1)).sqrt(), range, range],
            Family::KernelConv { .. } => vec![(0.8 * v(0)).sqrt(), 0.0, (0.8 * v(1)).sqrt(), range, range, 0.0, 0.0, 0.0],
            Family::Sre {
                bases,
                structure: KStructure::Structured,
            } => {
                let p = bases.len();
                let mut t: Vec<f64> = (0..p).map(|q| 0.8 * v(q)).collect();
                if p > 1 {
                    t.push(0.0);
                }
                t.push(bases[0].scale().as_f64());
                t
            }
            Family::Sre { bases, .. } => {
                let b: usize = bases.iter().map(|b| b.len()).sum();
                let k = DMatrix::<T>::identity(b, b) * T::lit(0.8 * v(0));
                let mut t = Self::full_theta(&k, &[]);
                t.truncate(b * (b + 1) / 2);
                t
            }
            Family::PureNugget { .. } => Vec::new(),
        };
        theta.extend((0..self.p()).map(|q| 0.2 * v(q)));
        theta
    }

    /// True when the smooth model depends on lag only (WLS-capable).
    pub fn is_stationary(&self) -> bool {
        match self {
            Family::Conditional { b, .. } => matches!(b, BRule::ScalarIdentity),
            Family::Sre { .. } => false,
            _ => true,
        }
    }
}
