//! Non-collocated multivariate observations and target location sets.
//!
//! Variables are indexed from 0 inside the library. The 1-based ids used in
//! CSV files are kept on each [`VariableSeries`] for reporting.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point in the plane. Coordinates are always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location<T> {
    x: T,
    y: T,
}

impl<T: Real> Location<T> {
    pub fn new(x: T, y: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate ({x}, {y})")));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn y(&self) -> T {
        self.y
    }

    pub fn dist(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Lag vector `self - other`.
    pub fn lag(&self, other: &Self) -> [T; 2] {
        [self.x - other.x, self.y - other.y]
    }

    pub fn offset(&self, dx: T, dy: T) -> Result<Self> {
        Self::new(self.x + dx, self.y + dy)
    }

    /// Exact coordinate equality, used for duplicate and collocation keys.
    pub fn same_as(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y
    }

    fn key(&self) -> (u64, u64) {
        (self.x.as_f64().to_bits(), self.y.as_f64().to_bits())
    }
}

/// Ordered, nonempty list of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet<T> {
    locations: Vec<Location<T>>,
}

impl<T: Real> LocationSet<T> {
    pub fn new(locations: Vec<Location<T>>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("location set is empty"));
        }
        Ok(Self { locations })
    }

    pub fn as_slice(&self) -> &[Location<T>] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Location<T>> {
        self.locations.iter()
    }

    /// Index of the nearest location (lowest index wins ties).
    pub fn nearest(&self, s: &Location<T>) -> usize {
        let mut best = 0;
        let mut best_d = self.locations[0].dist(s);
        for (i, l) in self.locations.iter().enumerate().skip(1) {
            let d = l.dist(s);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)`.
    pub fn bounds(&self) -> (T, T, T, T) {
        let first = self.locations[0];
        self.locations.iter().fold(
            (first.x, first.x, first.y, first.y),
            |(a, b, c, d), l| (a.min(l.x), b.max(l.x), c.min(l.y), d.max(l.y)),
        )
    }
}

/// Observations of one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSeries<T> {
    variable_id: usize,
    locations: Vec<Location<T>>,
    values: Vec<T>,
}

impl<T: Real> VariableSeries<T> {
    /// `variable_id` is the 1-based id reported in files.
    pub fn new(variable_id: usize, locations: Vec<Location<T>>, values: Vec<T>) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::invalid(format!(
                "variable {variable_id}: {} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if locations.is_empty() {
            return Err(Error::invalid(format!("variable {variable_id} has no observations")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("variable {variable_id}: non-finite value {v}")));
        }
        let mut seen = HashSet::with_capacity(locations.len());
        for l in &locations {
            if !seen.insert(l.key()) {
                return Err(Error::invalid(format!(
                    "variable {variable_id}: duplicate location ({}, {})",
                    l.x, l.y
                )));
            }
        }
        Ok(Self {
            variable_id,
            locations,
            values,
        })
    }

    pub fn variable_id(&self) -> usize {
        self.variable_id
    }

    pub fn locations(&self) -> &[Location<T>] {
        &self.locations
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v) / T::from_usize_lossy(self.len())
    }

    /// Subseries at the given positions, preserving their order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.variable_id,
            idx.iter().map(|&i| self.locations[i]).collect(),
            idx.iter().map(|&i| self.values[i]).collect(),
        )
    }
}

/// Observations of `p` variables, possibly at different locations.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateDataset<T> {
    series: Vec<VariableSeries<T>>,
}

impl<T: Real> MultivariateDataset<T> {
    /// Series are taken in order as variables `0..p`; their ids must be `1..=p`.
    pub fn new(series: Vec<VariableSeries<T>>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::invalid("dataset has no variables"));
        }
        for (q, s) in series.iter().enumerate() {
            if s.variable_id != q + 1 {
                return Err(Error::invalid(format!(
                    "variable ids must be contiguous 1..p; position {} has id {}",
                    q + 1,
                    s.variable_id
                )));
            }
        }
        Ok(Self { series })
    }

    pub fn p(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self) -> &[VariableSeries<T>] {
        &self.series
    }

    pub fn variable(&self, q: usize) -> &VariableSeries<T> {
        &self.series[q]
    }

    pub fn n_total(&self) -> usize {
        self.series.iter().map(|s| s.len()).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.series.iter().map(|s| s.len()).collect()
    }

    pub fn location_sets(&self) -> Vec<&[Location<T>]> {
        self.series.iter().map(|s| s.locations()).collect()
    }

    /// All values stacked variable by variable.
    pub fn stacked_values(&self) -> Vec<T> {
        self.series.iter().flat_map(|s| s.values.iter().copied()).collect()
    }

    /// Per-variable selection of observation positions.
    pub fn select(&self, idx: &[Vec<usize>]) -> Result<Self> {
        if idx.len() != self.p() {
            return Err(Error::invalid("selection must name every variable"));
        }
        Self::new(
            self.series
                .iter()
                .zip(idx)
                .map(|(s, i)| s.select(i))
                .collect::<Result<_>>()?,
        )
    }

    pub fn to_f64(&self) -> MultivariateDataset<f64> {
        MultivariateDataset {
            series: self
                .series
                .iter()
                .map(|s| VariableSeries {
                    variable_id: s.variable_id,
                    locations: s
                        .locations
                        .iter()
                        .map(|l| Location { x: l.x.as_f64(), y: l.y.as_f64() })
                        .collect(),
                    values: s.values.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }
}

/// Column names used when reading observation CSVs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub variable: String,
    pub x: String,
    pub y: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            variable: "variable".into(),
            x: "x".into(),
            y: "y".into(),
            value: "value".into(),
        }
    }
}

/// A dataset read from disk together with its id re-indexing.
#[derive(Debug, Clone)]
pub struct LoadedDataset<T> {
    pub dataset: MultivariateDataset<T>,
    /// `(original_id, new_id)` pairs in increasing original order.
    pub id_map: Vec<(i64, usize)>,
}

pub fn load_dataset<T: Real>(path: &Path, schema: &CsvSchema) -> Result<LoadedDataset<T>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, schema)
}

/// Parses `variable,x,y,value` rows. Line numbers in errors count data rows
/// from 1, excluding the header.
pub fn read_dataset<T: Real, R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 0, message: format!("header: {e}") })?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing column `{name}`"),
        })
    };
    let (ci, cx, cy, cv) = (col(&schema.variable)?, col(&schema.x)?, col(&schema.y)?, col(&schema.value)?);

    // original id -> (locations, values, first line seen)
    let mut groups: std::collections::BTreeMap<i64, (Vec<Location<T>>, Vec<T>)> = Default::default();
    let mut seen: HashSet<(i64, (u64, u64))> = HashSet::new();
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 1;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| Error::Parse {
                line,
                message: "missing field".into(),
            })
        };
        let id: i64 = field(ci)?.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad variable id `{}`", field(ci).unwrap_or("")),
        })?;
        let num = |c: usize, what: &str| -> Result<f64> {
            let s = field(c)?;
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad {what} `{s}`"),
            })
        };
        let (x, y, v) = (num(cx, "x")?, num(cy, "y")?, num(cv, "value")?);
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite coordinate".into(),
            });
        }
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        let loc = Location::new(T::lit(x), T::lit(y))?;
        if !seen.insert((id, loc.key())) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate location ({x}, {y}) for variable {id}"),
            });
        }
        let g = groups.entry(id).or_default();
        g.0.push(loc);
        g.1.push(T::lit(v));
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "no observations".into(),
        });
    }
    let mut id_map = Vec::with_capacity(groups.len());
    let mut series = Vec::with_capacity(groups.len());
    for (k, (orig, (locs, vals))) in groups.into_iter().enumerate() {
        id_map.push((orig, k + 1));
        series.push(VariableSeries::new(k + 1, locs, vals)?);
    }
    Ok(LoadedDataset {
        dataset: MultivariateDataset::new(series)?,
        id_map,
    })
}

/// Writes the dataset as `variable,x,y,value` with 1-based ids.
pub fn write_dataset<T: Real, W: Write>(d: &MultivariateDataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
    w.write_record(["variable", "x", "y", "value"]).map_err(io)?;
    for s in d.series() {
        for (l, v) in s.locations().iter().zip(s.values()) {
            w.write_record([
                s.variable_id().to_string(),
                l.x().to_string(),
                l.y().to_string(),
                v.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    Ok(())
}

/// Per-pair counts of cross-variable location pairs within `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationReport {
    pub tol: f64,
    /// `counts[(q, r)]`: number of `(i, j)` with `|s_qi - s_rj| <= tol`.
    pub counts: DMatrix<usize>,
}

pub fn collocation_report<T: Real>(d: &MultivariateDataset<T>, tol: T) -> Result<CollocationReport> {
    if tol.is_sign_negative() || !tol.is_finite() {
        return Err(Error::invalid("collocation tolerance must be finite and >= 0"));
    }
    let p = d.p();
    let mut counts = DMatrix::zeros(p, p);
    for q in 0..p {
        for r in q..p {
            let a = d.variable(q).locations();
            let b = d.variable(r).locations();
            let c = a
                .iter()
                .map(|s| b.iter().filter(|u| s.dist(u) <= tol).count())
                .sum::<usize>();
            counts[(q, r)] = c;
            counts[(r, q)] = c;
        }
    }
    Ok(CollocationReport {
        tol: tol.as_f64(),
        counts,
    })
}

/// Regular `nx * ny` grid, x varying fastest, endpoints inclusive.
///
/// A degenerate axis (`min == max`) is allowed only with a single node on it.
pub fn make_grid<T: Real>(xmin: T, xmax: T, ymin: T, ymax: T, nx: usize, ny: usize) -> Result<LocationSet<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("grid counts must be positive"));
    }
    let axis = |lo: T, hi: T, n: usize, name: &str| -> Result<Vec<T>> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid(format!("{name} bounds must be finite")));
        }
        if hi < lo {
            return Err(Error::invalid(format!("{name} bounds inverted")));
        }
        if hi == lo && n > 1 {
            return Err(Error::invalid(format!("{name} axis is degenerate but has {n} nodes")));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        let step = (hi - lo) / T::from_usize_lossy(n - 1);
        Ok((0..n)
            .map(|i| if i + 1 == n { hi } else { lo + step * T::from_usize_lossy(i) })
            .collect())
    };
    let xs = axis(xmin, xmax, nx, "x")?;
    let ys = axis(ymin, ymax, ny, "y")?;
    let mut locs = Vec::with_capacity(nx * ny);
    for &y in &ys {
        for &x in &xs {
            locs.push(Location::new(x, y)?);
        }
    }
    LocationSet::new(locs)
}
