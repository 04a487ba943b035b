//! Acceptance criteria. Each criterion prints one `acceptance #N ...: PASS|FAIL`
//! line; the target runs without the libtest harness so the lines are never
//! captured. Arguments that do not start with `-` filter criteria by name.
//!
//! Oracles are computed here, independently of the library paths under test.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use cokrig_core::cross::{conditional_joint_cov, BOperator, ConditionalModel, FieldSampler, Kernel, KernelConvModel, QuadratureSpec};
use cokrig_core::estimation::{
    empirical_cross_cov, fit_ml, fit_sre_em, fit_wls, information_criteria, pseudo_cross_variogram, wls_objective, BRule, Direction,
    EmpiricalSummary, KStructure, LagBins, MlOptions, OptimOptions,
};
use cokrig_core::hierarchical::{assemble_data_cov, assemble_data_cov_at, default_eps_h, origin_gap, MeasurementErrorSpec, MicroScaleSpec, Predictand};
use cokrig_core::kernels::{BasisSet, CorrelationFunction, StationaryCov};
use cokrig_core::prediction::{cokrige, crps_gaussian, cross_validate, FittedModel, PredictionTarget};
use cokrig_core::rng::{substream, Rng};
use cokrig_core::spatial::{make_grid, MultivariateDataset, VariableSeries};
use cokrig_core::{CrossModel, Dataset, Family, HierarchicalModel, Location, LocationSet};
use nalgebra::DMatrix;
use rand::Rng as _;

static VERDICTS: Mutex<Vec<bool>> = Mutex::new(Vec::new());

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    println!("acceptance #{n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    VERDICTS.lock().unwrap().push(pass);
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("a01_conditional_validity", a01_conditional_validity),
        ("a02_oracle_equivalence", a02_oracle_equivalence),
        ("a03_origin_gap_identity", a03_origin_gap_identity),
        ("a04_lmc_recovery", a04_lmc_recovery),
        ("a05_asymmetry_detection", a05_asymmetry_detection),
        ("a06_parameter_recovery", a06_parameter_recovery),
        ("a07_model_comparison", a07_model_comparison),
        ("a08_confounding", a08_confounding),
        ("a09_crps_correctness", a09_crps_correctness),
        ("a10_determinism", a10_determinism),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let selected = criteria.iter().enumerate().filter(|(_, (name, _))| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())));
    if args.iter().any(|a| a == "--list") {
        selected.for_each(|(_, (name, _))| println!("{name}: test"));
        return;
    }
    let mut failed = Vec::new();
    for (i, (name, run)) in selected {
        let before = VERDICTS.lock().unwrap().len();
        let ok = std::panic::catch_unwind(run).is_ok();
        let verdicts = VERDICTS.lock().unwrap();
        if !ok && verdicts.len() == before {
            println!("acceptance #{} {name}: FAIL (panicked before reporting)", i + 1);
        }
        if !ok || verdicts[before..].iter().any(|p| !p) {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn loc(x: f64, y: f64) -> Location {
    Location::new(x, y).unwrap()
}

fn random_sites(rng: &mut Rng, n: usize, side: f64) -> LocationSet {
    LocationSet::new((0..n).map(|_| loc(rng.random_range(0.0..side), rng.random_range(0.0..side))).collect()).unwrap()
}

fn random_corr(rng: &mut Rng) -> CorrelationFunction<f64> {
    let range = rng.random_range(0.2..5.0);
    match rng.random_range(0..3) {
        0 => CorrelationFunction::exponential(range).unwrap(),
        1 => CorrelationFunction::matern(range, [0.5, 1.5, 2.5, 1.2][rng.random_range(0..4)]).unwrap(),
        _ => CorrelationFunction::gaussian(range).unwrap(),
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.min()
}

fn a01_conditional_validity() {
    let start = Instant::now();
    let trials = 1000;
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for trial in 0..trials {
        let mut rng = substream(11, trial);
        let grid = random_sites(&mut rng, 20, 10.0);
        let c1 = StationaryCov::new(rng.random_range(0.1..10.0), random_corr(&mut rng)).unwrap();
        let c2 = StationaryCov::new(rng.random_range(0.1..10.0), random_corr(&mut rng)).unwrap();
        let b = match trial % 3 {
            0 => BOperator::ScalarIdentity {
                b0: rng.random_range(-5.0..5.0),
            },
            1 => BOperator::DistanceDecay {
                b0: rng.random_range(-5.0..5.0),
                range: rng.random_range(0.1..5.0),
            },
            _ => {
                let s = [0.1, 1.0, 10.0][rng.random_range(0..3)];
                BOperator::Explicit(DMatrix::from_fn(20, 20, |_, _| rng.random_range(-s..s)))
            }
        };
        let m = ConditionalModel::new(c1, c2, b, Some(grid.clone())).unwrap();
        let joint = conditional_joint_cov(&m, &grid, &grid).unwrap().joint().clone();
        let ratio = min_eigenvalue(&joint) / joint.trace();
        worst = worst.min(ratio);
        if ratio < -1e-8 {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "conditional-construction validity",
        failures == 0 && secs < 30.0,
        &format!("{failures}/{trials} below -1e-8*trace, worst min_eig/trace {worst:.2e}, {secs:.1}s"),
    );
}

/// Random hierarchical model with nuggets and, for `Y`, a nonzero split.
fn random_model(rng: &mut Rng, kind: usize) -> HierarchicalModel {
    let nug = [rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)];
    let frac = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let corr = [random_corr(rng), random_corr(rng)];
    let (family, theta) = match kind {
        0 => (
            Family::Lmc { corr },
            vec![rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0), rng.random_range(0.3..1.5), corr[0].range(), corr[1].range()],
        ),
        1 => (
            Family::Conditional {
                corr,
                b: BRule::ScalarIdentity,
                order: Default::default(),
            },
            vec![rng.random_range(0.5..2.0), corr[0].range(), rng.random_range(0.3..1.5), corr[1].range(), rng.random_range(-1.5..1.5)],
        ),
        _ => {
            let centers = make_grid(0.0, 10.0, 0.0, 10.0, 3, 3).unwrap();
            let b = BasisSet::new(centers, rng.random_range(4.0..8.0)).unwrap();
            (
                Family::Sre {
                    bases: vec![b.clone(), b],
                    structure: KStructure::Structured,
                },
                vec![rng.random_range(0.5..2.0), rng.random_range(0.3..1.5), rng.random_range(-0.8..0.8), rng.random_range(1.0..6.0)],
            )
        }
    };
    let mut theta = theta;
    theta.extend(nug);
    family.model(&theta, &frac).unwrap()
}

fn random_dataset(rng: &mut Rng, n1: usize, n2: usize) -> Dataset {
    let mk = |rng: &mut Rng, id: usize, n: usize| {
        let l = random_sites(rng, n, 10.0);
        let v = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        VariableSeries::new(id, l.as_slice().to_vec(), v).unwrap()
    };
    let a = mk(rng, 1, n1);
    let b = mk(rng, 2, n2);
    MultivariateDataset::new(vec![a, b]).unwrap()
}

/// Joint covariance of targets and observations, built directly from the
/// smooth model and the two nugget layers.
fn oracle_joint_direct(m: &HierarchicalModel, d: &Dataset, q: usize, targets: &[Location], predictand: Predictand) -> DMatrix<f64> {
    let xi = m.micro().variances().to_vec();
    let eps = m.noise().matrix().clone();
    let mut all: Vec<(usize, Location, bool)> = targets.iter().map(|l| (q, *l, true)).collect();
    for (r, s) in d.series().iter().enumerate() {
        all.extend(s.locations().iter().map(|l| (r, *l, false)));
    }
    let n = all.len();
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (qa, la, ta) = all[a];
            let (qb, lb, tb) = all[b];
            let mut v = m.smooth().cov_block(qa, &[la], qb, &[lb], false).unwrap()[(0, 0)];
            if la == lb {
                let xi_on = qa == qb && (predictand == Predictand::Y || (!ta && !tb));
                if xi_on {
                    v += xi[qa];
                }
                if !ta && !tb {
                    v += eps[(qa, qb)];
                }
            }
            j[(a, b)] = v;
        }
    }
    j
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn a02_oracle_equivalence() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for cfg in 0..100u64 {
        let mut rng = substream(22, cfg);
        let m = random_model(&mut rng, cfg as usize % 3);
        let n1 = rng.random_range(5..100);
        let n2 = rng.random_range(5..100);
        let d = random_dataset(&mut rng, n1, n2);
        let q = rng.random_range(0..2);
        // targets off the data plus one on an observed site
        let mut tl = random_sites(&mut rng, 8, 10.0).as_slice().to_vec();
        tl.push(d.variable(q).locations()[0]);
        let targets = LocationSet::new(tl).unwrap();
        let means = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        for predictand in [Predictand::Y, Predictand::W] {
            let t = PredictionTarget::new(q, targets.clone(), predictand);
            let got = cokrige(&m, &d, &t, &means).unwrap();
            let j = oracle_joint_direct(&m, &d, q, targets.as_slice(), predictand);
            let nt = targets.len();
            // Schur complement with LU solves
            let no = j.nrows() - nt;
            let s_oo = j.view((nt, nt), (no, no)).into_owned().lu();
            let s_ot = j.view((nt, 0), (no, nt)).into_owned();
            let dev = nalgebra::DVector::from_iterator(
                d.n_total(),
                d.series().iter().enumerate().flat_map(|(r, s)| s.values().iter().map(move |v| v - means[r])),
            );
            let w = s_oo.solve(&dev).unwrap();
            let v = s_oo.solve(&s_ot).unwrap();
            let mean: Vec<f64> = (0..nt).map(|i| means[q] + s_ot.column(i).dot(&w)).collect();
            let var: Vec<f64> = (0..nt).map(|i| j[(i, i)] - s_ot.column(i).dot(&v.column(i))).collect();
            worst = worst.max(rel_err(&got.means, &mean)).max(rel_err(&got.variances, &var));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "co-kriging equals Gaussian conditioning",
        worst <= 1e-8 && secs < 120.0,
        &format!("worst relative error {worst:.2e} over 100 configurations x 2 predictands, {secs:.1}s"),
    );
}

fn a03_origin_gap_identity() {
    let mut worst: f64 = 0.0;
    let mut all_pass = true;
    let mut cases = 0;
    for case in 0..30u64 {
        let mut rng = substream(33, case);
        let nu = [1.5, 2.5, 3.0][case as usize % 3];
        let corr = [
            CorrelationFunction::matern(rng.random_range(0.5..4.0), nu).unwrap(),
            CorrelationFunction::matern(rng.random_range(0.5..4.0), nu).unwrap(),
        ];
        let smooth: CrossModel = match case % 3 {
            0 => {
                let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rng.random_range(-1.0..1.0), rng.random_range(0.3..1.2)]);
                KernelConvModel::lmc(&a, corr.to_vec()).unwrap().into()
            }
            1 => {
                let c1 = StationaryCov::new(rng.random_range(0.5..2.0), corr[0]).unwrap();
                let c2 = StationaryCov::new(rng.random_range(0.3..1.5), corr[1]).unwrap();
                ConditionalModel::new(c1, c2, BOperator::ScalarIdentity { b0: rng.random_range(-1.5..1.5) }, None)
                    .unwrap()
                    .into()
            }
            _ => {
                let w = corr[0].range() / 4.0;
                let shift = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let g = |amplitude: f64, shift: [f64; 2]| Kernel::Gaussian { amplitude, width: w, shift };
                KernelConvModel::new(
                    corr.to_vec(),
                    vec![vec![g(1.0, [0.0, 0.0]), g(0.0, [0.0, 0.0])], vec![g(0.6, shift), g(0.8, shift)]],
                    QuadratureSpec::default(),
                )
                .unwrap()
                .into()
            }
        };
        let xi = vec![rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)];
        let (e1, e2): (f64, f64) = (rng.random_range(0.01..0.5), rng.random_range(0.01..0.5));
        let c = rng.random_range(-0.9..0.9) * (e1 * e2).sqrt();
        let eps = DMatrix::from_row_slice(2, 2, &[e1, c, c, e2]);
        let m = HierarchicalModel::new(smooth, MicroScaleSpec::new(xi.clone()).unwrap(), MeasurementErrorSpec::new(eps.clone()).unwrap()).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(xi)) + eps;
        let probe = loc(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let g = origin_gap(&m, &probe, Some(default_eps_h(&m))).unwrap();
        worst = worst.max((&g.gap - &expected).abs().max());
        all_pass &= g.certificate.passed();
        cases += 1;
    }
    report(
        3,
        "origin-gap identity",
        worst <= 1e-4 && all_pass,
        &format!("max |gap - (S_xi + S_eps)| {worst:.2e} over {cases} models, certificates {}", if all_pass { "all pass" } else { "some fail" }),
    );
}

/// Matérn 3/2 correlation written out.
fn matern15(range: f64, h: f64) -> f64 {
    let a = 3f64.sqrt() * h / range;
    (1.0 + a) * (-a).exp()
}

fn a04_lmc_recovery() {
    let ranges = [1.0, 2.5];
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
    let factors: Vec<_> = ranges.iter().map(|r| CorrelationFunction::matern(*r, 1.5).unwrap()).collect();
    let range = ranges[1];
    let width = range / 50.0;
    let kernels = (0..2)
        .map(|q| {
            (0..2)
                .map(|k| Kernel::Gaussian {
                    amplitude: a[(q, k)],
                    width,
                    shift: [0.0, 0.0],
                })
                .collect()
        })
        .collect();
    let smooth = KernelConvModel::new(factors.clone(), kernels, QuadratureSpec::default()).unwrap();
    let dirac = KernelConvModel::lmc(&a, factors).unwrap();
    let closed = |q: usize, r: usize, h: f64| (0..2).map(|k| a[(q, k)] * a[(r, k)] * matern15(ranges[k], h)).sum::<f64>();
    let (mut sup_smooth, mut sup_dirac): (f64, f64) = (0.0, 0.0);
    for (q, r) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let scale = closed(q, r, 0.0).abs();
        for i in 0..=60 {
            let h = 3.0 * range * i as f64 / 60.0;
            for dir in [[1.0, 0.0], [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2]] {
                let lag = [h * dir[0], h * dir[1]];
                let want = closed(q, r, h);
                let kc = cokrig_core::cross::kernel_conv_cross_cov(&smooth, q, r, lag).unwrap();
                let kd = cokrig_core::cross::kernel_conv_cross_cov(&dirac, q, r, lag).unwrap();
                sup_smooth = sup_smooth.max((kc - want).abs() / scale);
                sup_dirac = sup_dirac.max((kd - want).abs());
            }
        }
    }
    report(
        4,
        "kernel convolution recovers the LMC",
        sup_smooth <= 0.02 && sup_dirac <= 1e-10,
        &format!("width range/50 relative sup error {sup_smooth:.2e}, all-Dirac sup error {sup_dirac:.2e}"),
    );
}

fn a05_asymmetry_detection() {
    let grid = make_grid(0.0, 29.0, 0.0, 29.0, 30, 30).unwrap();
    let corr = [CorrelationFunction::exponential(1.0).unwrap(); 2];
    let family = Family::KernelConv { corr };
    let theta = [1.0, 0.9, 0.5, 3.0, 3.0, 2.0, 0.0, 0.0, 0.05, 0.05];
    let m = family.model(&theta, &[0.0, 0.0]).unwrap();
    let sampler = FieldSampler::new(&assemble_data_cov_at(&m, &[grid.clone(), grid]).unwrap()).unwrap();
    let edges: Vec<f64> = std::iter::once(0.0).chain((0..7).map(|k| 0.5 + k as f64)).collect();
    let bins = LagBins::directional(edges, Direction::x_axis()).unwrap();
    let reps = 50;
    let mut hits = 0;
    let mut found = Vec::new();
    for seed in 0..reps {
        let d = sampler.draw(&[0.0, 0.0], 5000 + seed).unwrap();
        let s = empirical_cross_cov(&d, (0, 1), &bins).unwrap();
        let (best, _) = s
            .values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        let center = s.bin_centers[best];
        found.push(center);
        if (center - 2.0).abs() <= 1.0 + 1e-9 {
            hits += 1;
        }
    }
    report(
        5,
        "asymmetry detection",
        hits * 10 >= reps as usize * 9,
        &format!("argmax bin within one bin of the shift in {hits}/{reps} replicates"),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quick_ml(restarts: usize, max_evals: usize, seed: u64) -> MlOptions {
    MlOptions {
        optim: OptimOptions {
            restarts,
            max_evals,
            seed,
            ..OptimOptions::default()
        },
        ..MlOptions::default()
    }
}

/// Grid sites inside `[0, side)^2`, kept for both variables.
fn corner_block(d: &Dataset, side: f64) -> Dataset {
    let keep: Vec<usize> = (0..d.variable(0).len())
        .filter(|&i| {
            let l = &d.variable(0).locations()[i];
            l.x() < side && l.y() < side
        })
        .collect();
    d.select(&[keep.clone(), keep]).unwrap()
}

fn a06_parameter_recovery() {
    let grid = make_grid(0.0, 29.0, 0.0, 29.0, 30, 30).unwrap();
    let reps = 20u64;

    // conditional model, ML on a collocated 20x20 corner of the grid
    let cond = Family::Conditional {
        corr: [CorrelationFunction::exponential(1.0).unwrap(); 2],
        b: BRule::ScalarIdentity,
        order: Default::default(),
    };
    let ct = [1.0, 2.0, 0.6, 1.5, 0.7, 0.1, 0.1];
    let cm = cond.model(&ct, &[0.0, 0.0]).unwrap();
    let cs = FieldSampler::new(&assemble_data_cov_at(&cm, &[grid.clone(), grid.clone()]).unwrap()).unwrap();
    let bins = LagBins::uniform(10.0, 10).unwrap();
    let mut cond_err = vec![Vec::new(); 4];
    let mut wls_gap = Vec::new();
    for rep in 0..reps {
        let full = cs.draw(&[0.0, 0.0], 6000 + rep).unwrap();
        let d = corner_block(&full, 19.5);
        let init = cond.default_init(&d);
        let fit = fit_ml(&d, &cond, &init, &[true; 7], &quick_ml(1, 1500, rep)).unwrap();
        for (k, idx) in [0, 1, 2, 3].into_iter().enumerate() {
            cond_err[k].push((fit.params[idx] - ct[idx]).abs() / ct[idx]);
        }
        let summaries: Vec<EmpiricalSummary<f64>> = [(0, 0), (0, 1), (1, 1)]
            .into_iter()
            .map(|p| pseudo_cross_variogram(&full, p, &bins).unwrap())
            .collect();
        let at_truth = wls_objective(&summaries, &cond, &ct).unwrap();
        let w = fit_wls(&summaries, &cond, &ct, &[true; 7], &OptimOptions { restarts: 2, seed: rep, ..OptimOptions::default() }).unwrap();
        wls_gap.push((at_truth - w.objective) / w.objective);
    }

    // structured SRE on the full grid (low-rank likelihood)
    let centers = make_grid(0.0, 29.0, 0.0, 29.0, 8, 8).unwrap();
    let basis = BasisSet::new(centers, 6.5).unwrap();
    let sre = Family::Sre {
        bases: vec![basis.clone(), basis],
        structure: KStructure::Structured,
    };
    let st = [1.0, 0.7, 0.5, 4.0, 0.2, 0.2];
    let sm = sre.model(&st, &[0.0, 0.0]).unwrap();
    let ss = FieldSampler::new(&assemble_data_cov_at(&sm, &[grid.clone(), grid]).unwrap()).unwrap();
    let mut sre_err = vec![Vec::new(); 3];
    for rep in 0..reps {
        let d = ss.draw(&[0.0, 0.0], 7000 + rep).unwrap();
        let init = sre.default_init(&d);
        let fit = fit_ml(&d, &sre, &init, &[true; 6], &quick_ml(2, 2000, rep)).unwrap();
        for (k, idx) in [0, 1, 3].into_iter().enumerate() {
            sre_err[k].push((fit.params[idx] - st[idx]).abs() / st[idx]);
        }
    }

    let cond_med: Vec<f64> = cond_err.into_iter().map(median).collect();
    let sre_med: Vec<f64> = sre_err.into_iter().map(median).collect();
    let wls_med = median(wls_gap.clone());
    let worst = cond_med.iter().chain(&sre_med).fold(0.0f64, |a, b| a.max(*b));
    let ml_ok = worst <= 0.25;
    let wls_ok = wls_med <= 0.10;
    report(
        6,
        "parameter recovery",
        ml_ok && wls_ok,
        &format!(
            "ML {}: median rel. error conditional [sigma2_1, range_1, sigma2_2, range_2] = {:.3?}, SRE [k_var_1, k_var_2, k_range] = {:.3?}; \
             WLS {}: (objective at truth - minimum)/minimum median {wls_med:.3}, limit 0.10",
            if ml_ok { "ok" } else { "fails" },
            cond_med,
            sre_med,
            if wls_ok { "ok" } else { "fails" },
        ),
    );
}

fn a07_model_comparison() {
    let centers = make_grid(0.0, 10.0, 0.0, 10.0, 3, 3).unwrap();
    let basis = BasisSet::new(centers, 6.0).unwrap();
    let bases = vec![basis.clone(), basis];
    let structured = Family::Sre {
        bases: bases.clone(),
        structure: KStructure::Structured,
    };
    let full = Family::Sre {
        bases,
        structure: KStructure::Full,
    };
    let truth = [1.0, 0.6, 0.5, 4.0, 0.3, 0.3];
    let m = structured.model(&truth, &[0.0, 0.0]).unwrap();
    let reps = 50u64;
    let opts = |seed| quick_ml(2, 2000, seed);
    let fit_structured = |d: &Dataset, seed: u64| fit_ml(d, &structured, &structured.default_init(d), &[true; 6], &opts(seed));
    let fit_full = |d: &Dataset, seed: u64| {
        let s = fit_structured(d, seed)?;
        let k = structured.sre_k(&s.params)?;
        let init = Family::full_theta(&k, &structured.nuggets(&s.params));
        fit_sre_em(d, &full, &init, &opts(seed))
    };
    let (mut aicc_ok, mut crps_ok, mut ll_over) = (0, 0, 0);
    for rep in 0..reps {
        let mut rng = substream(77, rep);
        let locs = [random_sites(&mut rng, 130, 10.0), random_sites(&mut rng, 130, 10.0)];
        let sampler = FieldSampler::new(&assemble_data_cov_at(&m, &locs).unwrap()).unwrap();
        let d = sampler.draw(&[0.0, 0.0], 8000 + rep).unwrap();

        let fs = fit_structured(&d, rep).unwrap();
        let ff = fit_full(&d, rep).unwrap();
        let (is, iff) = (information_criteria(&fs).unwrap(), information_criteria(&ff).unwrap());
        if matches!((is.aicc, iff.aicc), (Some(a), Some(b)) if a < b) || (is.aicc.is_some() && iff.aicc.is_none()) {
            aicc_ok += 1;
        }
        if ff.loglik.unwrap() > fs.loglik.unwrap() {
            ll_over += 1;
        }

        let cv_s = cross_validate(
            &d,
            &|t: &Dataset| -> cokrig_core::Result<FittedModel<f64>> { fit_structured(t, rep)?.fitted_model(&structured, &[0.0, 0.0]) },
            5,
            rep,
        )
        .unwrap();
        let cv_f = cross_validate(
            &d,
            &|t: &Dataset| -> cokrig_core::Result<FittedModel<f64>> { fit_full(t, rep)?.fitted_model(&full, &[0.0, 0.0]) },
            5,
            rep,
        )
        .unwrap();
        let pooled = |r: &cokrig_core::prediction::ValidationReport| {
            r.crps.iter().zip(&r.n_heldout_per_variable).map(|(c, n)| c * *n as f64).sum::<f64>() / r.n_heldout as f64
        };
        if pooled(&cv_s) < pooled(&cv_f) {
            crps_ok += 1;
        }
    }
    let n = reps as usize;
    report(
        7,
        "model-comparison contract",
        aicc_ok * 10 >= n * 8 && crps_ok * 10 >= n * 8 && ll_over * 2 >= n,
        &format!("AICc prefers parsimonious {aicc_ok}/{n}, CV CRPS prefers parsimonious {crps_ok}/{n}, log-likelihood prefers overparameterized {ll_over}/{n}"),
    );
}

fn a08_confounding() {
    let mut rng = substream(88, 0);
    let corr = [CorrelationFunction::matern(2.0, 1.5).unwrap(), CorrelationFunction::exponential(1.0).unwrap()];
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.7]);
    let smooth: CrossModel = KernelConvModel::lmc(&a, corr.to_vec()).unwrap().into();
    let (p1, p2) = ([0.3, 0.1], [0.1, 0.25]);
    let build = |xi: [f64; 2], eps: [f64; 2]| {
        HierarchicalModel::new(smooth.clone(), MicroScaleSpec::new(xi.to_vec()).unwrap(), MeasurementErrorSpec::diagonal(&eps).unwrap()).unwrap()
    };
    let m1 = build(p1, p2);
    let m2 = build(p2, p1);
    let d = random_dataset(&mut rng, 60, 50);
    let c1 = assemble_data_cov(&m1, &d).unwrap().joint().clone();
    let c2 = assemble_data_cov(&m2, &d).unwrap().joint().clone();
    let identical = c1.iter().zip(c2.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
    let targets = random_sites(&mut rng, 10, 10.0);
    let mut min_diff = f64::INFINITY;
    for q in 0..2 {
        let t = PredictionTarget::new(q, targets.clone(), Predictand::Y);
        let v1 = cokrige(&m1, &d, &t, &[0.0, 0.0]).unwrap().variances;
        let v2 = cokrige(&m2, &d, &t, &[0.0, 0.0]).unwrap().variances;
        for (x, y) in v1.iter().zip(&v2) {
            min_diff = min_diff.min((x - y).abs());
        }
    }
    report(
        8,
        "confounding negative test",
        identical && min_diff > 1e-6,
        &format!(
            "data covariances bitwise {}, smallest predictand-Y variance difference {min_diff:.3e}",
            if identical { "identical" } else { "different" }
        ),
    );
}

/// `int (F(x) - 1{x >= z})^2 dx` by composite Simpson on each side of `z`.
fn crps_numeric(mu: f64, sigma: f64, z: f64) -> f64 {
    let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2));
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let lo = (mu - 40.0 * sigma).min(z);
    let hi = (mu + 40.0 * sigma).max(z);
    simpson(&|x| cdf(x).powi(2), lo, z, 200_000) + simpson(&|x| (1.0 - cdf(x)).powi(2), z, hi, 200_000)
}

fn a09_crps_correctness() {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for mu in [-2.0, 0.0, 1.5, 3.0, 10.0] {
        for sigma in [0.1, 1.0] {
            for z in [-3.0, -0.5, 0.0, 1.0, 4.0] {
                let closed = crps_gaussian(mu, sigma, z).unwrap();
                worst = worst.max((closed - crps_numeric(mu, sigma, z)).abs());
                count += 1;
            }
        }
    }
    report(9, "CRPS closed form vs integration", worst <= 1e-6 && count == 50, &format!("max abs difference {worst:.2e} over {count} lattice points"));
}

fn cokrig(cmd: &str, config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cokrig"))
        .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap()
        .status
        .success()
}

/// Output files other than the manifest, plus the manifest with its
/// wall-clock entry removed.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().into_string().unwrap();
            let bytes = std::fs::read(e.path()).unwrap();
            if name == "manifest.json" {
                let mut j: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                j.as_object_mut().unwrap().remove("wall_clock_seconds");
                (name, j.to_string().into_bytes())
            } else {
                (name, bytes)
            }
        })
        .collect();
    v.sort();
    v
}

fn a10_determinism() {
    let t = tempfile::tempdir().unwrap();
    let sim = t.path().join("sim.toml");
    std::fs::write(
        &sim,
        "seed = 42\n[model]\nfamily = \"conditional\"\ncondition_order = \"1,2\"\nsigma2_1 = 1.0\nrange_1 = 2.0\nsigma2_2 = 0.5\nrange_2 = 1.5\nb0 = 0.7\n\
         [noise]\nnugget = [0.1, 0.1]\n[grid]\nxmin = 0\nxmax = 9\nymin = 0\nymax = 9\nnx = 10\nny = 10\n",
    )
    .unwrap();
    let val = t.path().join("val.toml");
    std::fs::write(
        &val,
        "seed = 7\ndata = \"sim1/dataset.csv\"\n[model]\nfamily = \"lmc\"\n[fit]\nrestarts = 2\nmax_evals = 600\n[validate]\nfolds = 4\n",
    )
    .unwrap();
    let mut ok = true;
    for dir in ["sim1", "sim2"] {
        ok &= cokrig("simulate", &sim, &t.path().join(dir));
    }
    for dir in ["val1", "val2"] {
        ok &= cokrig("validate", &val, &t.path().join(dir));
    }
    let sim_same = ok && snapshot(&t.path().join("sim1")) == snapshot(&t.path().join("sim2"));
    let val_same = ok && snapshot(&t.path().join("val1")) == snapshot(&t.path().join("val2"));
    report(
        10,
        "determinism",
        sim_same && val_same,
        &format!(
            "simulate outputs {}, validate outputs {}",
            if sim_same { "bit-identical" } else { "differ" },
            if val_same { "bit-identical" } else { "differ" }
        ),
    );
}
