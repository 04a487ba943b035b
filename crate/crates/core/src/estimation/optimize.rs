//! Bounded Nelder-Mead search with jittered restarts.
//!
//! Bounds are removed by reparameterizing each coordinate: log for `[0, inf)`
//! style intervals, a scaled logistic for finite intervals, identity otherwise.

use rand::Rng as _;
use rayon::prelude::*;

use crate::rng::substream;

use super::family::ParamDef;

/// Transformed coordinates are kept inside this box to avoid overflow.
const U_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Identity,
    Log { lower: f64 },
    Logit { lower: f64, upper: f64 },
}

impl Transform {
    fn for_def(d: &ParamDef) -> Self {
        match (d.lower.is_finite(), d.upper.is_finite()) {
            (true, true) => Transform::Logit {
                lower: d.lower,
                upper: d.upper,
            },
            (true, false) => Transform::Log { lower: d.lower },
            _ => Transform::Identity,
        }
    }

    fn to_u(self, x: f64) -> f64 {
        let u = match self {
            Transform::Identity => x,
            Transform::Log { lower } => (x - lower).max(1e-300).ln(),
            Transform::Logit { lower, upper } => {
                let f = ((x - lower) / (upper - lower)).clamp(1e-12, 1.0 - 1e-12);
                (f / (1.0 - f)).ln()
            }
        };
        u.clamp(-U_CLAMP * 10.0, U_CLAMP * 10.0)
    }

    fn to_x(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log { lower } => lower + u.clamp(-U_CLAMP, U_CLAMP).exp(),
            Transform::Logit { lower, upper } => {
                let f = 1.0 / (1.0 + (-u.clamp(-U_CLAMP, U_CLAMP)).exp());
                lower + (upper - lower) * f
            }
        }
    }

    fn at_boundary(self, u: f64) -> bool {
        match self {
            Transform::Identity => false,
            _ => u.abs() >= U_CLAMP * 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    pub max_evals: usize,
    /// Stop when the simplex's objective spread falls below `ftol * (1 + |f|)`.
    pub ftol: f64,
    pub restarts: usize,
    /// Half-width of the uniform jitter applied to restart points (transformed scale).
    pub jitter: f64,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_evals: 3000,
            ftol: 1e-10,
            restarts: 5,
            jitter: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    /// Full parameter vector (fixed entries unchanged).
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best objective after each iteration of the winning run.
    pub history: Vec<f64>,
    /// Names of free parameters that ended on a bound.
    pub at_boundary: Vec<String>,
}

struct Problem<'a, F> {
    f: &'a F,
    base: Vec<f64>,
    free: Vec<usize>,
    tr: Vec<Transform>,
}

impl<F: Fn(&[f64]) -> f64> Problem<'_, F> {
    fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = self.tr[k].to_x(u[k]);
        }
        x
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let v = (self.f)(&self.expand(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// One Nelder-Mead run in transformed coordinates.
fn nelder_mead<F: Fn(&[f64]) -> f64>(pb: &Problem<'_, F>, u0: Vec<f64>, opt: &OptimOptions) -> (Vec<f64>, f64, bool, usize, usize, Vec<f64>) {
    let n = u0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |u: &[f64]| {
        evals.set(evals.get() + 1);
        pb.eval(u)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&u0);
    simplex.push((u0.clone(), f0));
    for i in 0..n {
        let mut u = u0.clone();
        u[i] += if u0[i].abs() > 1.0 { 0.25 * u0[i].abs() } else { 0.5 };
        let f = eval(&u);
        simplex.push((u, f));
    }
    let mut history = Vec::new();
    let mut iterations = 0;
    let converged;
    let centroid = |s: &[(Vec<f64>, f64)]| {
        let mut c = vec![0.0; n];
        for (u, _) in &s[..n] {
            for k in 0..n {
                c[k] += u[k] / n as f64;
            }
        }
        c
    };
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { (0..n).map(|k| c[k] + t * (w[k] - c[k])).collect() };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let size = simplex[1..]
            .iter()
            .flat_map(|(u, _)| u.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if best.is_finite() && (worst - best).abs() <= opt.ftol * (1.0 + best.abs()) && size < 1e-6 {
            converged = true;
            break;
        }
        if evals.get() >= opt.max_evals || n == 0 {
            converged = n == 0;
            break;
        }
        iterations += 1;
        let c = centroid(&simplex);
        let xr = along(&c, &simplex[n].0, -1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(&c, &simplex[n].0, -2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(&c, &simplex[n].0, -0.5);
                let f = eval(&x);
                (x, f)
            } else {
                let x = along(&c, &simplex[n].0, 0.5);
                let f = eval(&x);
                (x, f)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = along(&b, &item.0, 0.5);
                    let f = eval(&x);
                    *item = (x, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (u, f) = simplex.swap_remove(0);
    (u, f, converged, iterations, evals.get(), history)
}

/// Minimizes `f` over the free coordinates of `init` within `defs`' bounds.
/// The first run starts at `init`; further runs start from seeded jitters of it.
/// Ties between runs go to the earliest, so results do not depend on scheduling.
pub fn minimize<F>(f: &F, defs: &[ParamDef], init: &[f64], free: &[bool], opt: &OptimOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let free_idx: Vec<usize> = (0..init.len()).filter(|&i| free[i]).collect();
    let tr: Vec<Transform> = free_idx.iter().map(|&i| Transform::for_def(&defs[i])).collect();
    let pb = Problem {
        f,
        base: init.to_vec(),
        free: free_idx.clone(),
        tr: tr.clone(),
    };
    let u0: Vec<f64> = free_idx.iter().zip(&tr).map(|(&i, t)| t.to_u(init[i])).collect();
    let starts: Vec<Vec<f64>> = (0..opt.restarts.max(1))
        .map(|r| {
            if r == 0 {
                return u0.clone();
            }
            let mut rng = substream(opt.seed, 500 + r as u64);
            u0.iter().map(|u| u + rng.random_range(-opt.jitter..=opt.jitter)).collect()
        })
        .collect();
    let runs: Vec<_> = starts.into_par_iter().map(|s| nelder_mead(&pb, s, opt)).collect();
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.1 < runs[best].1 {
            best = k;
        }
    }
    let evaluations = runs.iter().map(|r| r.4).sum();
    let (u, fbest, converged, iterations, _, history) = runs.into_iter().nth(best).unwrap();
    let at_boundary = free_idx
        .iter()
        .zip(&tr)
        .zip(&u)
        .filter(|((_, t), u)| t.at_boundary(**u))
        .map(|((&i, _), _)| defs[i].name.clone())
        .collect();
    OptimResult {
        x: pb.expand(&u),
        f: fbest,
        converged,
        iterations,
        evaluations,
        history,
        at_boundary,
    }
}
