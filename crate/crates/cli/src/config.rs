//! Run configuration: `key = value` pairs under `[section]` headers (TOML).
//!
//! Validation collects every problem before reporting, and unknown keys are
//! errors with a nearest-name suggestion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Predict,
    Validate,
    Diagnose,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simulate" => Command::Simulate,
            "fit" => Command::Fit,
            "predict" => Command::Predict,
            "validate" => Command::Validate,
            "diagnose" => Command::Diagnose,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Validate => "validate",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Conditional,
    Sre,
    SreFull,
    KernelConv,
    Lmc,
    Nugget,
}

impl FamilyKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "conditional" => FamilyKind::Conditional,
            "sre" => FamilyKind::Sre,
            "sre_full" => FamilyKind::SreFull,
            "kernel_conv" => FamilyKind::KernelConv,
            "lmc" => FamilyKind::Lmc,
            "nugget" => FamilyKind::Nugget,
            _ => return None,
        })
    }

    pub fn bivariate(&self) -> bool {
        matches!(self, FamilyKind::Conditional | FamilyKind::KernelConv | FamilyKind::Lmc)
    }

    /// Parameters set in `[model]`; nuggets live in `[noise]`. The full-K SRE
    /// family is specified (and initialized) through the structured ones.
    pub fn param_names(&self, p: usize, decay_b: bool) -> Vec<String> {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match self {
            FamilyKind::Conditional => {
                let mut v = s(&["sigma2_1", "range_1", "sigma2_2", "range_2", "b0"]);
                if decay_b {
                    v.push("b_range".into());
                }
                v
            }
            FamilyKind::Lmc => s(&["a11", "a21", "a22", "range_1", "range_2"]),
            FamilyKind::KernelConv => s(&["a11", "a21", "a22", "range_1", "range_2", "shift_x", "shift_y", "width"]),
            FamilyKind::Sre | FamilyKind::SreFull => {
                let mut v: Vec<String> = (1..=p).map(|q| format!("k_var_{q}")).collect();
                if p > 1 {
                    v.push("k_corr".into());
                }
                v.push("k_range".into());
                v
            }
            FamilyKind::Nugget => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    Exponential,
    Matern,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    pub nx: usize,
    pub ny: usize,
    pub scale: f64,
    /// `(xmin, xmax, ymin, ymax)`; the data or grid extent when absent.
    pub bounds: Option<(f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub family: FamilyKind,
    pub variables: usize,
    pub correlation: CorrKind,
    pub nu: f64,
    /// Conditioning variable first (0-based).
    pub second_first: bool,
    pub decay_b: bool,
    pub params: BTreeMap<String, f64>,
    pub fixed: Vec<String>,
    pub mean: Vec<f64>,
    pub basis: Option<BasisConfig>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseConfig {
    /// Total nugget per variable (micro-scale plus measurement error).
    pub nugget: Option<Vec<f64>>,
    /// Measurement-error fraction of each nugget.
    pub split: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinsConfig {
    pub edges: Vec<f64>,
    /// Axis angle in degrees for directional summaries.
    pub direction: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Ml,
    Wls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub method: FitMethod,
    pub restarts: usize,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictConfig {
    pub fit: Option<PathBuf>,
    /// 0-based.
    pub variable: usize,
    pub predict_w: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub model: Option<ModelConfig>,
    pub noise: NoiseConfig,
    pub grid: Option<GridConfig>,
    pub bins: Option<BinsConfig>,
    pub fit: FitConfig,
    pub predict: PredictConfig,
    pub folds: Option<usize>,
    pub text: String,
}

const TOP: &[&str] = &["command", "seed", "data", "out", "model", "noise", "grid", "bins", "fit", "predict", "validate"];
const MODEL: &[&str] = &["family", "variables", "correlation", "nu", "condition_order", "b_rule", "fixed", "mean", "basis"];
const BASIS: &[&str] = &["nx", "ny", "scale", "xmin", "xmax", "ymin", "ymax"];
const NOISE: &[&str] = &["nugget", "split"];
const GRID: &[&str] = &["xmin", "xmax", "ymin", "ymax", "nx", "ny"];
const BINS: &[&str] = &["max_lag", "n", "edges", "direction", "tolerance"];
const FIT: &[&str] = &["method", "restarts", "max_evals"];
const PREDICT: &[&str] = &["fit", "variable", "predictand"];
const VALIDATE: &[&str] = &["folds"];

struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn unknown(&mut self, section: &str, key: &str, known: &[String]) {
        let best = known
            .iter()
            .map(|k| (strsim::levenshtein(key, k), k))
            .filter(|(d, k)| *d <= 2.max(k.len() / 3))
            .min_by_key(|(d, _)| *d);
        let at = if section.is_empty() { String::new() } else { format!(" in [{section}]") };
        match best {
            Some((_, k)) => self.push(format!("unknown key `{key}`{at} (did you mean `{k}`?)")),
            None => self.push(format!("unknown key `{key}`{at}")),
        }
    }

    fn check_keys(&mut self, section: &str, t: &Table, known: &[String]) {
        for k in t.keys() {
            if !known.iter().any(|x| x == k) {
                self.unknown(section, k, known);
            }
        }
    }
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn table<'a>(e: &mut Errors, t: &'a Table, key: &str) -> Option<&'a Table> {
    match t.get(key) {
        None => None,
        Some(Value::Table(x)) => Some(x),
        Some(_) => {
            e.push(format!("`{key}` must be a [section]"));
            None
        }
    }
}

fn num(e: &mut Errors, t: &Table, sec: &str, key: &str) -> Option<f64> {
    match t.get(key)? {
        Value::Float(f) if f.is_finite() => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => {
            e.push(format!("[{sec}] `{key}` must be a finite number"));
            None
        }
    }
}

fn count(e: &mut Errors, t: &Table, sec: &str, key: &str) -> Option<usize> {
    match t.get(key)? {
        Value::Integer(i) if *i >= 0 => Some(*i as usize),
        _ => {
            e.push(format!("[{sec}] `{key}` must be a nonnegative integer"));
            None
        }
    }
}

fn string<'a>(e: &mut Errors, t: &'a Table, sec: &str, key: &str) -> Option<&'a str> {
    match t.get(key)? {
        Value::String(s) => Some(s),
        _ => {
            e.push(format!("[{sec}] `{key}` must be a string"));
            None
        }
    }
}

fn numbers(e: &mut Errors, t: &Table, sec: &str, key: &str) -> Option<Vec<f64>> {
    let v = t.get(key)?;
    let out: Option<Vec<f64>> = match v {
        Value::Array(a) => a
            .iter()
            .map(|x| match x {
                Value::Float(f) if f.is_finite() => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            })
            .collect(),
        Value::Float(f) => Some(vec![*f]),
        Value::Integer(i) => Some(vec![*i as f64]),
        _ => None,
    };
    if out.is_none() {
        e.push(format!("[{sec}] `{key}` must be a number or a list of numbers"));
    }
    out
}

fn section_name(sec: &str) -> String {
    if sec.is_empty() {
        "top level".into()
    } else {
        format!("[{sec}]")
    }
}

/// Parses `--noise-split 1=0.5,2=0` into per-variable fractions.
pub fn parse_noise_split(s: &str, p: usize) -> Result<Vec<f64>, String> {
    let mut out = vec![None; p];
    for part in s.split(',').filter(|x| !x.trim().is_empty()) {
        let (q, f) = part.split_once('=').ok_or_else(|| format!("--noise-split entry `{part}` is not q=fraction"))?;
        let q: usize = q.trim().parse().map_err(|_| format!("--noise-split variable `{q}` is not an integer"))?;
        let f: f64 = f.trim().parse().map_err(|_| format!("--noise-split fraction `{f}` is not a number"))?;
        if q == 0 || q > p {
            return Err(format!("--noise-split variable {q} outside 1..={p}"));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(format!("--noise-split fraction {f} outside [0, 1]"));
        }
        out[q - 1] = Some(f);
    }
    out.into_iter()
        .enumerate()
        .map(|(q, f)| f.ok_or_else(|| format!("--noise-split gives no fraction for variable {}", q + 1)))
        .collect()
}

/// Parses and validates a configuration. `command` and `out` from the
/// command line override the file. Paths are resolved against `base`.
pub fn validate_config(text: &str, command: Option<Command>, out: Option<&Path>, base: &Path) -> Result<RunConfig, Vec<String>> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| vec![format!("syntax: {}", e.to_string().replace('\n', " ").trim())])?;
    let mut e = Errors(Vec::new());
    e.check_keys("", &root, &owned(TOP));

    let cmd = match (command, root.get("command")) {
        (Some(c), _) => Some(c),
        (None, Some(Value::String(s))) => {
            let c = Command::parse(s);
            if c.is_none() {
                e.push(format!("unknown command `{s}`"));
            }
            c
        }
        (None, Some(_)) => {
            e.push("`command` must be a string");
            None
        }
        (None, None) => {
            e.push("missing key `command`");
            None
        }
    };
    let seed = match root.get("seed") {
        None => None,
        Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(_) => {
            e.push("`seed` must be a nonnegative integer");
            None
        }
    };
    let data = string(&mut e, &root, "", "data").map(|s| base.join(s));
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => string(&mut e, &root, "", "out").map_or_else(|| PathBuf::from("out"), |s| base.join(s)),
    };

    let model = table(&mut e, &root, "model").and_then(|t| parse_model(&mut e, t));
    let noise = table(&mut e, &root, "noise").map(|t| parse_noise(&mut e, t)).unwrap_or_default();
    let grid = table(&mut e, &root, "grid").and_then(|t| parse_grid(&mut e, t));
    let bins = table(&mut e, &root, "bins").and_then(|t| parse_bins(&mut e, t));
    let t = table(&mut e, &root, "fit");
    let fit = parse_fit(&mut e, t);
    let t = table(&mut e, &root, "predict");
    let predict = parse_predict(&mut e, t, base);
    let folds = table(&mut e, &root, "validate").and_then(|t| {
        e.check_keys("validate", t, &owned(VALIDATE));
        let f = count(&mut e, t, "validate", "folds");
        if let Some(k) = f {
            if k < 2 {
                e.push(format!("[validate] `folds` must be at least 2, got {k}"));
            }
        }
        f
    });

    if let Some(m) = &model {
        let p = m.variables;
        for (key, v) in [("nugget", &noise.nugget), ("split", &noise.split)] {
            if let Some(v) = v {
                if v.len() != p {
                    e.push(format!("[noise] `{key}` needs {p} entries, got {}", v.len()));
                }
            }
        }
        if !m.mean.is_empty() && m.mean.len() != p {
            e.push(format!("[model] `mean` needs {p} entries, got {}", m.mean.len()));
        }
        if predict.variable >= p {
            e.push(format!("[predict] `variable` {} outside 1..={p}", predict.variable + 1));
        }
    }

    if let Some(cmd) = cmd {
        let need = |e: &mut Errors, ok: bool, what: &str| {
            if !ok {
                e.push(format!("missing {what} (required by {})", cmd.as_str()));
            }
        };
        match cmd {
            Command::Simulate => {
                need(&mut e, seed.is_some(), "key `seed`");
                need(&mut e, model.is_some(), "section [model]");
                need(&mut e, grid.is_some(), "section [grid]");
                if let Some(m) = &model {
                    require_all_params(&mut e, m, &noise);
                }
            }
            Command::Fit => {
                need(&mut e, data.is_some(), "key `data`");
                need(&mut e, model.is_some(), "section [model]");
                if fit.method == FitMethod::Wls {
                    need(&mut e, bins.is_some(), "section [bins] for WLS");
                }
            }
            Command::Predict => {
                need(&mut e, data.is_some(), "key `data`");
                need(&mut e, model.is_some(), "section [model]");
                need(&mut e, grid.is_some(), "section [grid]");
                if predict.fit.is_none() {
                    if let Some(m) = &model {
                        require_all_params(&mut e, m, &noise);
                    }
                }
            }
            Command::Validate => {
                need(&mut e, data.is_some(), "key `data`");
                need(&mut e, seed.is_some(), "key `seed`");
                need(&mut e, model.is_some(), "section [model]");
                need(&mut e, folds.is_some(), "key `folds` in [validate]");
            }
            Command::Diagnose => {
                need(&mut e, data.is_some(), "key `data`");
                need(&mut e, bins.is_some(), "section [bins]");
            }
        }
    }

    if e.0.is_empty() {
        Ok(RunConfig {
            command: cmd.expect("checked"),
            seed,
            data,
            out,
            model,
            noise,
            grid,
            bins,
            fit,
            predict,
            folds,
            text: text.to_string(),
        })
    } else {
        Err(e.0)
    }
}

fn require_all_params(e: &mut Errors, m: &ModelConfig, noise: &NoiseConfig) {
    for name in m.family.param_names(m.variables, m.decay_b) {
        if !m.params.contains_key(&name) {
            e.push(format!("missing key `{name}` in [model]"));
        }
    }
    if noise.nugget.is_none() {
        e.push("missing key `nugget` in [noise]");
    }
}

fn parse_model(e: &mut Errors, t: &Table) -> Option<ModelConfig> {
    let sec = "model";
    let family = match string(e, t, sec, "family") {
        None => {
            if !t.contains_key("family") {
                e.push("missing key `family` in [model]");
            }
            None
        }
        Some(s) => {
            let f = FamilyKind::parse(s);
            if f.is_none() {
                e.push(format!("[model] unknown family `{s}` (conditional, sre, sre_full, kernel_conv, lmc, nugget)"));
            }
            f
        }
    };
    let variables = count(e, t, sec, "variables").unwrap_or(2);
    if variables == 0 {
        e.push("[model] `variables` must be at least 1");
    }
    let correlation = match string(e, t, sec, "correlation").unwrap_or("exponential") {
        "exponential" => CorrKind::Exponential,
        "matern" => CorrKind::Matern,
        "gaussian" => CorrKind::Gaussian,
        other => {
            e.push(format!("[model] unknown correlation `{other}` (exponential, matern, gaussian)"));
            CorrKind::Exponential
        }
    };
    let nu = num(e, t, sec, "nu").unwrap_or(1.5);
    if nu <= 0.0 {
        e.push("[model] `nu` must be positive");
    }
    let second_first = match t.get("condition_order") {
        None => {
            if family == Some(FamilyKind::Conditional) {
                log::info!("condition_order not set; conditioning variable 2 on variable 1");
            }
            false
        }
        Some(Value::String(s)) if s.replace(' ', "") == "1,2" => false,
        Some(Value::String(s)) if s.replace(' ', "") == "2,1" => true,
        Some(_) => {
            e.push("[model] `condition_order` must be \"1,2\" or \"2,1\"");
            false
        }
    };
    let decay_b = match string(e, t, sec, "b_rule").unwrap_or("scalar") {
        "scalar" => false,
        "decay" => true,
        other => {
            e.push(format!("[model] unknown b_rule `{other}` (scalar, decay)"));
            false
        }
    };
    let family = family?;
    if family.bivariate() && variables != 2 {
        e.push(format!("[model] family needs exactly 2 variables, got {variables}"));
    }
    let names = family.param_names(variables, decay_b);
    let mut known = owned(MODEL);
    known.extend(names.iter().cloned());
    e.check_keys(sec, t, &known);
    let mut params = BTreeMap::new();
    for n in &names {
        if let Some(v) = num(e, t, sec, n) {
            params.insert(n.clone(), v);
        }
    }
    let fixed = match t.get("fixed") {
        None => Vec::new(),
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => {
                    let ok = names.contains(s) || s.starts_with("nugget_");
                    if !ok {
                        e.push(format!("[model] `fixed` names unknown parameter `{s}`"));
                    }
                    Some(s.clone())
                }
                _ => {
                    e.push("[model] `fixed` must list parameter names");
                    None
                }
            })
            .collect(),
        Some(_) => {
            e.push("[model] `fixed` must be a list of parameter names");
            Vec::new()
        }
    };
    let mean = numbers(e, t, sec, "mean").unwrap_or_default();
    let basis = table(e, t, "basis").and_then(|b| {
        e.check_keys("model.basis", b, &owned(BASIS));
        let s = "model.basis";
        let nx = count(e, b, s, "nx").unwrap_or(3);
        let ny = count(e, b, s, "ny").unwrap_or(3);
        let scale = num(e, b, s, "scale");
        let bounds = match (num(e, b, s, "xmin"), num(e, b, s, "xmax"), num(e, b, s, "ymin"), num(e, b, s, "ymax")) {
            (Some(a), Some(bb), Some(c), Some(d)) => Some((a, bb, c, d)),
            (None, None, None, None) => None,
            _ => {
                e.push("[model.basis] give all of xmin, xmax, ymin, ymax or none");
                None
            }
        };
        if nx == 0 || ny == 0 {
            e.push("[model.basis] nx and ny must be positive");
        }
        match scale {
            Some(sc) if sc > 0.0 => Some(BasisConfig { nx, ny, scale: sc, bounds }),
            Some(_) => {
                e.push("[model.basis] `scale` must be positive");
                None
            }
            None => {
                e.push("missing key `scale` in [model.basis]");
                None
            }
        }
    });
    if matches!(family, FamilyKind::Sre | FamilyKind::SreFull) && basis.is_none() && !t.contains_key("basis") {
        e.push("missing section [model.basis] (required by SRE families)");
    }
    Some(ModelConfig {
        family,
        variables,
        correlation,
        nu,
        second_first,
        decay_b,
        params,
        fixed,
        mean,
        basis,
    })
}

fn parse_noise(e: &mut Errors, t: &Table) -> NoiseConfig {
    e.check_keys("noise", t, &owned(NOISE));
    let nugget = numbers(e, t, "noise", "nugget");
    if nugget.as_ref().is_some_and(|v| v.iter().any(|x| *x < 0.0)) {
        e.push("[noise] `nugget` entries must be >= 0");
    }
    let split = numbers(e, t, "noise", "split");
    if split.as_ref().is_some_and(|v| v.iter().any(|x| !(0.0..=1.0).contains(x))) {
        e.push("[noise] `split` entries must lie in [0, 1]");
    }
    NoiseConfig { nugget, split }
}

fn parse_grid(e: &mut Errors, t: &Table) -> Option<GridConfig> {
    e.check_keys("grid", t, &owned(GRID));
    let mut get = |k: &str| {
        let v = num(e, t, "grid", k);
        if v.is_none() && !t.contains_key(k) {
            e.push(format!("missing key `{k}` in [grid]"));
        }
        v
    };
    let (xmin, xmax, ymin, ymax) = (get("xmin"), get("xmax"), get("ymin"), get("ymax"));
    let nx = count(e, t, "grid", "nx");
    let ny = count(e, t, "grid", "ny");
    for (k, v) in [("nx", nx), ("ny", ny)] {
        match v {
            None if !t.contains_key(k) => e.push(format!("missing key `{k}` in [grid]")),
            Some(0) => e.push(format!("[grid] `{k}` must be positive")),
            _ => {}
        }
    }
    Some(GridConfig {
        xmin: xmin?,
        xmax: xmax?,
        ymin: ymin?,
        ymax: ymax?,
        nx: nx?,
        ny: ny?,
    })
}

fn parse_bins(e: &mut Errors, t: &Table) -> Option<BinsConfig> {
    e.check_keys("bins", t, &owned(BINS));
    let edges = match (numbers(e, t, "bins", "edges"), num(e, t, "bins", "max_lag"), count(e, t, "bins", "n")) {
        (Some(ed), None, None) => ed,
        (None, Some(m), n) => {
            let n = n.unwrap_or(10);
            if m <= 0.0 || n == 0 {
                e.push("[bins] `max_lag` and `n` must be positive");
                return None;
            }
            (0..=n).map(|i| m * i as f64 / n as f64).collect()
        }
        (None, None, _) => {
            e.push(format!("{} needs `edges` or `max_lag`", section_name("bins")));
            return None;
        }
        _ => {
            e.push("[bins] give either `edges` or `max_lag`/`n`, not both");
            return None;
        }
    };
    if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
        e.push("[bins] edges must start at 0 and increase strictly");
    }
    let tolerance = num(e, t, "bins", "tolerance").unwrap_or(22.5);
    if !(tolerance > 0.0 && tolerance <= 90.0) {
        e.push("[bins] `tolerance` must be in (0, 90] degrees");
    }
    Some(BinsConfig {
        edges,
        direction: num(e, t, "bins", "direction"),
        tolerance,
    })
}

fn parse_fit(e: &mut Errors, t: Option<&Table>) -> FitConfig {
    let mut f = FitConfig {
        method: FitMethod::Ml,
        restarts: 5,
        max_evals: 3000,
    };
    let Some(t) = t else { return f };
    e.check_keys("fit", t, &owned(FIT));
    match string(e, t, "fit", "method") {
        None | Some("ml") => {}
        Some("wls") => f.method = FitMethod::Wls,
        Some(o) => e.push(format!("[fit] unknown method `{o}` (ml, wls)")),
    }
    if let Some(r) = count(e, t, "fit", "restarts") {
        f.restarts = r.max(1);
    }
    if let Some(m) = count(e, t, "fit", "max_evals") {
        f.max_evals = m;
    }
    f
}

fn parse_predict(e: &mut Errors, t: Option<&Table>, base: &Path) -> PredictConfig {
    let mut p = PredictConfig {
        fit: None,
        variable: 0,
        predict_w: false,
    };
    let Some(t) = t else { return p };
    e.check_keys("predict", t, &owned(PREDICT));
    p.fit = string(e, t, "predict", "fit").map(|s| base.join(s));
    match count(e, t, "predict", "variable") {
        Some(0) => e.push("[predict] `variable` is 1-based"),
        Some(v) => p.variable = v - 1,
        None => {}
    }
    match string(e, t, "predict", "predictand") {
        None | Some("Y") | Some("y") => {}
        Some("W") | Some("w") => p.predict_w = true,
        Some(o) => e.push(format!("[predict] unknown predictand `{o}` (Y, W)")),
    }
    p
}
