//! Empirical summaries, least-squares and likelihood fitting, and
//! information criteria.

pub mod empirical;
pub mod family;
pub mod ml;
pub mod optimize;
pub mod wls;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::prediction::FittedModel;
use crate::scalar::Real;

pub use empirical::{all_pairs, empirical_cross_cov, pseudo_cross_variogram, write_summaries, Direction, EmpiricalSummary, LagBins, SummaryKind};
pub use family::{BRule, Family, KStructure, ParamDef};
pub use ml::{fit_ml, fit_sre_em, profile_loglik, MlFit, MlOptions};
pub use optimize::{minimize, OptimOptions, OptimResult};
pub use wls::{fit_wls, model_summary_value, wls_objective};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: String,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub free: Vec<bool>,
    /// Final WLS value or negative log-likelihood.
    pub objective: f64,
    pub loglik: Option<f64>,
    /// Free parameters plus estimated means (ML).
    pub k: usize,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Per-variable constant means used for plug-in prediction.
    pub means: Vec<f64>,
    pub at_boundary: Vec<String>,
    /// Best objective after each accepted iteration.
    pub history: Vec<f64>,
}

impl FitResult {
    /// Rejects fits without free parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: impl Into<String>,
        names: Vec<String>,
        params: Vec<f64>,
        free: Vec<bool>,
        objective: f64,
        loglik: Option<f64>,
        k: usize,
        n: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("a fit needs at least one free parameter"));
        }
        if names.len() != params.len() || free.len() != params.len() {
            return Err(Error::invalid("parameter names, values and mask differ in length"));
        }
        Ok(Self {
            family: family.into(),
            names,
            params,
            free,
            objective,
            loglik,
            k,
            n,
            converged: false,
            iterations: 0,
            means: Vec::new(),
            at_boundary: Vec::new(),
            history: Vec::new(),
        })
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    /// Plug-in model for prediction, nugget split by `eps_fraction`.
    pub fn fitted_model<T: Real>(&self, family: &Family<T>, eps_fraction: &[f64]) -> Result<FittedModel<T>> {
        if family.name() != self.family {
            return Err(Error::invalid(format!("fit is for family {}, not {}", self.family, family.name())));
        }
        Ok(FittedModel {
            model: family.model(&self.params, eps_fraction)?,
            means: self.means.iter().map(|m| T::lit(*m)).collect(),
        })
    }

    /// `key = value` lines; [`FitResult::from_text`] reads them back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family = {}", self.family);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "objective = {:e}", self.objective);
        match self.loglik {
            Some(ll) => {
                let _ = writeln!(s, "loglik = {ll:e}");
            }
            None => s.push_str("loglik = NA\n"),
        }
        match information_criteria(self) {
            Ok(ic) => {
                let _ = writeln!(s, "aic = {:e}", ic.aic);
                match ic.aicc {
                    Some(v) => {
                        let _ = writeln!(s, "aicc = {v:e}");
                    }
                    None => s.push_str("aicc = NA\n"),
                }
            }
            Err(_) => s.push_str("aic = NA\naicc = NA\n"),
        }
        let _ = writeln!(s, "boundary = {}", self.at_boundary.join(","));
        for (q, m) in self.means.iter().enumerate() {
            let _ = writeln!(s, "mean_{} = {m:e}", q + 1);
        }
        for i in 0..self.params.len() {
            let _ = writeln!(s, "param.{} = {:e}", self.names[i], self.params[i]);
            let _ = writeln!(s, "free.{} = {}", self.names[i], self.free[i]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            kv.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
        let need = |key: &str| get(key).ok_or_else(|| Error::invalid(format!("fit file lacks `{key}`")));
        let num = |key: &str| -> Result<f64> {
            let (l, v) = need(key)?;
            v.parse().map_err(|_| Error::Parse {
                line: l,
                message: format!("`{key}` is not a number"),
            })
        };
        let family = need("family")?.1.to_string();
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut free = Vec::new();
        let mut means = Vec::new();
        for (l, k, v) in &kv {
            if let Some(name) = k.strip_prefix("param.") {
                names.push(name.to_string());
                params.push(v.parse().map_err(|_| Error::Parse {
                    line: *l,
                    message: format!("parameter {name} is not a number"),
                })?);
                free.push(get(&format!("free.{name}")).is_none_or(|(_, f)| f == "true"));
            } else if let Some(q) = k.strip_prefix("mean_") {
                let q: usize = q.parse().map_err(|_| Error::Parse {
                    line: *l,
                    message: format!("bad mean key {k}"),
                })?;
                if q != means.len() + 1 {
                    return Err(Error::Parse {
                        line: *l,
                        message: "means must be listed in order".into(),
                    });
                }
                means.push(v.parse().map_err(|_| Error::Parse {
                    line: *l,
                    message: format!("{k} is not a number"),
                })?);
            }
        }
        let loglik = match need("loglik")?.1 {
            "NA" => None,
            _ => Some(num("loglik")?),
        };
        let mut f = Self::new(family, names, params, free, num("objective")?, loglik, num("k")? as usize, num("n")? as usize)?;
        f.converged = need("converged")?.1 == "true";
        f.iterations = num("iterations")? as usize;
        f.means = means;
        f.at_boundary = get("boundary")
            .map(|(_, v)| v.split(',').filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default();
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationCriteria {
    pub aic: f64,
    /// `None` when `n <= k + 1`.
    pub aicc: Option<f64>,
}

/// `AIC = -2 loglik + 2k`, `AICc = AIC + 2k(k + 1)/(n - k - 1)`.
pub fn information_criteria(f: &FitResult) -> Result<InformationCriteria> {
    let ll = f.loglik.ok_or_else(|| Error::invalid("information criteria need a log-likelihood"))?;
    if f.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let k = f.k as f64;
    let aic = -2.0 * ll + 2.0 * k;
    let aicc = (f.n > f.k + 1).then(|| aic + 2.0 * k * (k + 1.0) / (f.n as f64 - k - 1.0));
    Ok(InformationCriteria { aic, aicc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fit(ll: f64, k: usize, n: usize) -> FitResult {
        FitResult::new("x", vec!["a".into()], vec![1.0], vec![true], -ll, Some(ll), k, n).unwrap()
    }

    #[test]
    fn criteria_arithmetic() {
        let ic = information_criteria(&fit(-100.0, 6, 100)).unwrap();
        assert_eq!(ic.aic, 212.0);
        assert_abs_diff_eq!(ic.aicc.unwrap(), 212.0 + 84.0 / 93.0, epsilon = 1e-12);
        assert!(information_criteria(&fit(-100.0, 6, 7)).unwrap().aicc.is_none());
    }

    #[test]
    fn zero_k_rejected() {
        assert!(FitResult::new("x", vec![], vec![], vec![], 0.0, Some(0.0), 0, 10).is_err());
    }

    #[test]
    fn penalty_ranks_small_model_first() {
        let a = information_criteria(&fit(-50.0, 6, 500)).unwrap();
        let b = information_criteria(&fit(-50.0, 300, 500)).unwrap();
        assert!(a.aicc.unwrap() < b.aicc.unwrap());
    }

    #[test]
    fn criteria_increase_in_k() {
        let mut prev = information_criteria(&fit(-10.0, 1, 50)).unwrap();
        for k in 2..40 {
            let ic = information_criteria(&fit(-10.0, k, 50)).unwrap();
            assert!(ic.aic > prev.aic && ic.aicc.unwrap() > prev.aicc.unwrap());
            prev = ic;
        }
    }

    #[test]
    fn text_round_trip() {
        let mut f = FitResult::new(
            "lmc",
            vec!["a11".into(), "nugget_1".into()],
            vec![1.25, 0.1],
            vec![true, false],
            12.5,
            Some(-12.5),
            3,
            40,
        )
        .unwrap();
        f.means = vec![0.5, -1.0];
        f.converged = true;
        f.iterations = 17;
        f.at_boundary = vec!["a11".into()];
        let g = FitResult::from_text(&f.to_text()).unwrap();
        assert_eq!(f, g);
    }
}
