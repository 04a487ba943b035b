//! Command dispatch. Outputs are buffered and only written once the whole
//! command has succeeded; the manifest goes last.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cokrig_core::cross::{simulate_field, ConditionOrder};
use cokrig_core::estimation::{
    all_pairs, fit_ml, fit_wls, write_summaries, BRule, Direction, FitResult, KStructure, LagBins, MlFit, MlOptions,
    OptimOptions, SummaryKind,
};
use cokrig_core::hierarchical::{assemble_data_cov, assemble_data_cov_at, origin_gap, Predictand};
use cokrig_core::kernels::{BasisSet, CorrelationFunction};
use cokrig_core::prediction::{cokrige, cross_validate, write_predictions, PredictionTarget};
use cokrig_core::spatial::{collocation_report, load_dataset, make_grid, write_dataset, CsvSchema};
use cokrig_core::{Dataset, Error, Family, LocationSet};
use sha2::{Digest, Sha256};

use crate::config::{BinsConfig, Command, CorrKind, FamilyKind, FitMethod, ModelConfig, RunConfig};

/// Failure of a run: configuration/data problems exit with 1, numerical ones with 2.
#[derive(Debug)]
pub enum RunError {
    Config(Vec<String>),
    Core(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Core(e) if e.is_numerical() => "numerical",
            RunError::Core(_) => "data",
        }
    }

    pub fn messages(&self) -> Vec<String> {
        match self {
            RunError::Config(v) => v.clone(),
            RunError::Core(e) => vec![e.to_string()],
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

fn cfg_err(msg: impl Into<String>) -> RunError {
    RunError::Config(vec![msg.into()])
}

type Outputs = Vec<(String, Vec<u8>)>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    noise_split: Option<Vec<f64>>,
    data: Option<Dataset>,
}

/// Runs the command; on success writes outputs plus `manifest.json`, on
/// failure only `error.log`. Returns the written file names.
pub fn run(cfg: &RunConfig, noise_split: Option<Vec<f64>>) -> Result<Vec<String>, RunError> {
    let start = Instant::now();
    let split_echo = noise_split.clone().or_else(|| cfg.noise.split.clone());
    let result = execute(cfg, noise_split);
    let out = &cfg.out;
    let io = |p: &Path, e: std::io::Error| {
        RunError::Core(Error::Io {
            path: p.to_path_buf(),
            source: e,
        })
    };
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    match result {
        Ok((files, input_hash)) => {
            let _ = std::fs::remove_file(out.join("error.log"));
            let mut names = Vec::new();
            for (name, bytes) in &files {
                let p = out.join(name);
                std::fs::write(&p, bytes).map_err(|e| io(&p, e))?;
                names.push(name.clone());
            }
            let manifest = serde_json::json!({
                "command": cfg.command.as_str(),
                "version": env!("CARGO_PKG_VERSION"),
                "config": cfg.text,
                "noise_split": split_echo,
                "input": cfg.data.as_ref().map(|p| p.display().to_string()),
                "input_sha256": input_hash,
                "outputs": names,
                "wall_clock_seconds": start.elapsed().as_secs_f64(),
            });
            let p = out.join("manifest.json");
            let text = serde_json::to_string_pretty(&manifest).expect("json");
            std::fs::write(&p, text + "\n").map_err(|e| io(&p, e))?;
            names.push("manifest.json".into());
            Ok(names)
        }
        Err(e) => {
            let p = out.join("error.log");
            let mut text = format!("{} error (exit {})\n", e.kind(), e.exit_code());
            for m in e.messages() {
                text.push_str(&m);
                text.push('\n');
            }
            std::fs::write(&p, text).map_err(|e| io(&p, e))?;
            Err(e)
        }
    }
}

fn execute(cfg: &RunConfig, noise_split: Option<Vec<f64>>) -> Result<(Outputs, Option<String>), RunError> {
    let mut input_hash = None;
    let data = match &cfg.data {
        Some(p) if cfg.command != Command::Simulate => {
            let bytes = std::fs::read(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            input_hash = Some(hex::encode(Sha256::digest(&bytes)));
            let loaded = load_dataset::<f64>(p, &CsvSchema::default())?;
            for (orig, new) in &loaded.id_map {
                eprintln!("{orig} -> {new}");
            }
            Some(loaded.dataset)
        }
        _ => None,
    };
    let ctx = Ctx { cfg, noise_split, data };
    let outputs = match cfg.command {
        Command::Simulate => simulate(&ctx)?,
        Command::Fit => fit(&ctx)?,
        Command::Predict => predict(&ctx)?,
        Command::Validate => validate(&ctx)?,
        Command::Diagnose => diagnose(&ctx)?,
    };
    Ok((outputs, input_hash))
}

impl Ctx<'_> {
    fn model(&self) -> &ModelConfig {
        self.cfg.model.as_ref().expect("validated")
    }

    fn data(&self) -> &Dataset {
        self.data.as_ref().expect("validated")
    }

    fn p(&self) -> usize {
        self.model().variables
    }

    fn grid(&self) -> Result<LocationSet, RunError> {
        let g = self.cfg.grid.ok_or_else(|| cfg_err("missing section [grid]"))?;
        Ok(make_grid(g.xmin, g.xmax, g.ymin, g.ymax, g.nx, g.ny)?)
    }

    /// Fraction of each nugget treated as measurement error.
    fn eps_fraction(&self) -> Vec<f64> {
        self.noise_split
            .clone()
            .or_else(|| self.cfg.noise.split.clone())
            .unwrap_or_else(|| vec![0.0; self.p()])
    }

    /// Extent for SRE basis centers: explicit bounds, else the grid, else the data.
    fn extent(&self) -> Result<(f64, f64, f64, f64), RunError> {
        if let Some(b) = self.model().basis.as_ref().and_then(|b| b.bounds) {
            return Ok(b);
        }
        if let Some(g) = self.cfg.grid {
            return Ok((g.xmin, g.xmax, g.ymin, g.ymax));
        }
        if let Some(d) = &self.data {
            let all: Vec<_> = d.series().iter().flat_map(|s| s.locations().iter().copied()).collect();
            return Ok(LocationSet::new(all)?.bounds());
        }
        Err(cfg_err("SRE basis needs bounds in [model.basis], a [grid] or data"))
    }

    fn family(&self, kind: FamilyKind) -> Result<Family, RunError> {
        let m = self.model();
        let corr = match m.correlation {
            CorrKind::Exponential => CorrelationFunction::exponential(1.0)?,
            CorrKind::Matern => CorrelationFunction::matern(1.0, m.nu)?,
            CorrKind::Gaussian => CorrelationFunction::gaussian(1.0)?,
        };
        Ok(match kind {
            FamilyKind::Conditional => Family::Conditional {
                corr: [corr; 2],
                b: if m.decay_b {
                    BRule::DistanceDecay {
                        grid: self.grid().map_err(|_| cfg_err("b_rule = \"decay\" needs a [grid] to discretize B"))?,
                    }
                } else {
                    BRule::ScalarIdentity
                },
                order: if m.second_first {
                    ConditionOrder::SecondThenFirst
                } else {
                    ConditionOrder::FirstThenSecond
                },
            },
            FamilyKind::Lmc => Family::Lmc { corr: [corr; 2] },
            FamilyKind::KernelConv => Family::KernelConv { corr: [corr; 2] },
            FamilyKind::Nugget => Family::PureNugget { p: m.variables },
            FamilyKind::Sre | FamilyKind::SreFull => {
                let b = m.basis.as_ref().ok_or_else(|| cfg_err("missing section [model.basis]"))?;
                let (x0, x1, y0, y1) = self.extent()?;
                let set = BasisSet::new(make_grid(x0, x1, y0, y1, b.nx, b.ny)?, b.scale)?;
                Family::Sre {
                    bases: vec![set; m.variables],
                    structure: if kind == FamilyKind::SreFull {
                        KStructure::Full
                    } else {
                        KStructure::Structured
                    },
                }
            }
        })
    }

    /// Parameter vector from the config, gaps filled from `fallback` when given.
    fn theta(&self, family: &Family, fallback: Option<&[f64]>) -> Result<Vec<f64>, RunError> {
        let m = self.model();
        if m.family == FamilyKind::SreFull {
            // configured through the structured parameterization
            let st = self.family(FamilyKind::Sre)?;
            let fb = fallback.map(|_| st.default_init(self.data()));
            let t = self.theta(&st, fb.as_deref())?;
            let nug = st.nuggets(&t);
            return Ok(Family::full_theta(&st.sre_k(&t)?, &nug));
        }
        let names = family.names();
        let nug = self.cfg.noise.nugget.as_ref();
        names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let v = match n.strip_prefix("nugget_") {
                    Some(q) => nug.map(|v| v[q.parse::<usize>().expect("index") - 1]),
                    None => m.params.get(n).copied(),
                };
                v.or_else(|| fallback.map(|f| f[i]))
                    .ok_or_else(|| cfg_err(format!("missing value for parameter `{n}`")))
            })
            .collect()
    }

    fn free_mask(&self, family: &Family) -> Vec<bool> {
        let fixed = &self.model().fixed;
        if matches!(family, Family::Sre { structure: KStructure::Full, .. }) {
            return vec![true; family.names().len()];
        }
        family.names().iter().map(|n| !fixed.contains(n)).collect()
    }

    fn optim(&self) -> OptimOptions {
        OptimOptions {
            max_evals: self.cfg.fit.max_evals,
            restarts: self.cfg.fit.restarts,
            seed: self.cfg.seed.unwrap_or(0),
            ..OptimOptions::default()
        }
    }

    fn bins(&self, b: &BinsConfig) -> Result<LagBins<f64>, RunError> {
        Ok(match b.direction {
            None => LagBins::new(b.edges.clone())?,
            Some(deg) => LagBins::directional(
                b.edges.clone(),
                Direction {
                    angle: deg.to_radians(),
                    tolerance: b.tolerance.to_radians(),
                },
            )?,
        })
    }
}

fn check_p(ctx: &Ctx<'_>, d: &Dataset) -> Result<(), RunError> {
    if d.p() != ctx.p() {
        return Err(cfg_err(format!("model has {} variables but the data has {}", ctx.p(), d.p())));
    }
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> cokrig_core::Result<()>) -> Result<Vec<u8>, RunError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn simulate(ctx: &Ctx<'_>) -> Result<Outputs, RunError> {
    let kind = ctx.model().family;
    let family = ctx.family(kind)?;
    let theta = ctx.theta(&family, None)?;
    let model = family.model(&theta, &ctx.eps_fraction())?;
    let grid = ctx.grid()?;
    let bundle = assemble_data_cov_at(&model, &vec![grid; ctx.p()])?;
    let mean = if ctx.model().mean.is_empty() {
        vec![0.0; ctx.p()]
    } else {
        ctx.model().mean.clone()
    };
    let d = simulate_field(&bundle, &mean, ctx.cfg.seed.expect("validated"))?;
    Ok(vec![("dataset.csv".into(), csv_bytes(|b| write_dataset(&d, b))?)])
}

fn fit(ctx: &Ctx<'_>) -> Result<Outputs, RunError> {
    let d = ctx.data();
    check_p(ctx, d)?;
    let family = ctx.family(ctx.model().family)?;
    let init = ctx.theta(&family, Some(&family.default_init(d)))?;
    let free = ctx.free_mask(&family);
    let mut out = Vec::new();
    let result = match ctx.cfg.fit.method {
        FitMethod::Ml => fit_ml(
            d,
            &family,
            &init,
            &free,
            &MlOptions {
                optim: ctx.optim(),
                ..MlOptions::default()
            },
        )?,
        FitMethod::Wls => {
            let bins = ctx.bins(ctx.cfg.bins.as_ref().expect("validated"))?;
            let s = all_pairs(d, &bins, SummaryKind::PseudoCrossVariogram)?;
            out.push(("summaries.csv".into(), csv_bytes(|b| write_summaries(&s, b))?));
            let mut r = fit_wls(&s, &family, &init, &free, &ctx.optim())?;
            r.means = d.series().iter().map(|s| s.mean()).collect();
            r
        }
    };
    out.insert(0, ("fit.txt".into(), result.to_text().into_bytes()));
    Ok(out)
}

fn read_fit(path: &PathBuf) -> Result<FitResult, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(FitResult::from_text(&text)?)
}

fn predict(ctx: &Ctx<'_>) -> Result<Outputs, RunError> {
    let d = ctx.data();
    check_p(ctx, d)?;
    let family = ctx.family(ctx.model().family)?;
    let (theta, fit_means) = match &ctx.cfg.predict.fit {
        Some(p) => {
            let f = read_fit(p)?;
            if f.family != family.name() {
                return Err(cfg_err(format!("fit file is for family {}, config says {}", f.family, family.name())));
            }
            (f.params, f.means)
        }
        None => (ctx.theta(&family, None)?, Vec::new()),
    };
    let means = if fit_means.len() == ctx.p() {
        fit_means
    } else if !ctx.model().mean.is_empty() {
        ctx.model().mean.clone()
    } else {
        log::info!("no fitted or configured means; using sample means");
        d.series().iter().map(|s| s.mean()).collect()
    };
    let model = family.model(&theta, &ctx.eps_fraction())?;
    let predictand = if ctx.cfg.predict.predict_w { Predictand::W } else { Predictand::Y };
    let target = PredictionTarget::new(ctx.cfg.predict.variable, ctx.grid()?, predictand);
    let set = cokrige(&model, d, &target, &means)?;
    Ok(vec![("predictions.csv".into(), csv_bytes(|b| write_predictions(&[set], b))?)])
}

fn validate(ctx: &Ctx<'_>) -> Result<Outputs, RunError> {
    let d = ctx.data();
    check_p(ctx, d)?;
    let family = ctx.family(ctx.model().family)?;
    let has_all = family.names().iter().all(|n| match n.strip_prefix("nugget_") {
        Some(_) => ctx.cfg.noise.nugget.is_some(),
        None => ctx.model().params.contains_key(n),
    });
    let init = if has_all { Some(ctx.theta(&family, Some(&family.default_init(d)))?) } else { None };
    let proc = MlFit {
        free: ctx.free_mask(&family),
        family,
        init,
        options: MlOptions {
            optim: ctx.optim(),
            ..MlOptions::default()
        },
        eps_fraction: ctx.eps_fraction(),
    };
    let report = cross_validate(d, &proc, ctx.cfg.folds.expect("validated"), ctx.cfg.seed.expect("validated"))?;
    Ok(vec![("validation.txt".into(), csv_bytes(|b| report.write_text(b))?)])
}

fn diagnose(ctx: &Ctx<'_>) -> Result<Outputs, RunError> {
    let d = ctx.data();
    let bins = ctx.bins(ctx.cfg.bins.as_ref().expect("validated"))?;
    let mut s = all_pairs(d, &bins, SummaryKind::EmpiricalCrossCov)?;
    s.extend(all_pairs(d, &bins, SummaryKind::PseudoCrossVariogram)?);
    let mut text = String::new();
    let col = collocation_report(d, 0.0)?;
    let _ = writeln!(text, "variables = {}", d.p());
    for q in 0..d.p() {
        let _ = writeln!(text, "n_{} = {}", q + 1, d.variable(q).len());
    }
    for q in 0..d.p() {
        for r in q + 1..d.p() {
            let _ = writeln!(text, "collocated_{}_{} = {}", q + 1, r + 1, col.counts[(q, r)]);
        }
    }
    let complete = ctx.cfg.model.as_ref().and_then(|m| {
        let fam = ctx.family(m.family).ok()?;
        ctx.theta(&fam, None).ok().map(|t| (fam, t))
    });
    match complete {
        None => text.push_str("model = none (origin gap and certificate need a fully specified [model] and [noise])\n"),
        Some((fam, theta)) => {
            check_p(ctx, d)?;
            let model = fam.model(&theta, &ctx.eps_fraction())?;
            let probe = d.variable(0).locations()[0];
            let g = origin_gap(&model, &probe, None)?;
            let _ = writeln!(text, "model = {}", fam.name());
            let _ = writeln!(text, "origin_gap.eps_h = {:e}", g.eps_h);
            for q in 0..d.p() {
                for r in 0..d.p() {
                    let _ = writeln!(text, "origin_gap.{}_{} = {:e}", q + 1, r + 1, g.gap[(q, r)]);
                }
            }
            let _ = writeln!(text, "origin_gap.min_eigenvalue = {:e}", g.certificate.min_eigenvalue);
            let _ = writeln!(text, "origin_gap.certificate = {:?}", g.certificate.verdict);
            let bundle = assemble_data_cov(&model, d)?;
            let c = bundle.certificate();
            let _ = writeln!(text, "data_cov.min_eigenvalue = {:e}", c.min_eigenvalue);
            let _ = writeln!(text, "data_cov.trace = {:e}", c.trace);
            let _ = writeln!(text, "data_cov.certificate = {:?}", c.verdict);
        }
    }
    Ok(vec![
        ("summaries.csv".into(), csv_bytes(|b| write_summaries(&s, b))?),
        ("diagnostics.txt".into(), text.into_bytes()),
    ])
}
