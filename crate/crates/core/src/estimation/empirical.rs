//! Binned moment estimators of cross-dependence.
//!
//! Lags point from the variable-`r` location to the variable-`q` location,
//! `h = s_q - s_r`, matching `C_qr(h) = cov(Z_q(s + h), Z_r(s))`. In
//! directional mode the signed projection of `h` on the chosen axis is kept,
//! so a cross-covariance peaking at `+d` means `Z_q` leads `Z_r` by `d`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::{Location, MultivariateDataset};

/// Directional binning: keep pairs whose lag lies within `tolerance`
/// (radians) of the axis at `angle` (radians from the x axis), in either
/// direction, and bin the signed projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T> {
    pub angle: T,
    pub tolerance: T,
}

impl<T: Real> Direction<T> {
    /// Along the x axis with the default 22.5 degree tolerance.
    pub fn x_axis() -> Self {
        Self {
            angle: T::zero(),
            tolerance: T::lit(22.5f64.to_radians()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagBins<T> {
    edges: Vec<T>,
    direction: Option<Direction<T>>,
}

impl<T: Real> LagBins<T> {
    /// Omnidirectional bins `[e_k, e_{k+1})`; edges start at 0 and increase strictly.
    pub fn new(edges: Vec<T>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != T::zero() {
            return Err(Error::invalid("lag bins need at least two edges, the first being 0"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid("lag bin edges must be finite and strictly increasing"));
        }
        Ok(Self { edges, direction: None })
    }

    /// Equal-width bins up to `max_lag`.
    pub fn uniform(max_lag: T, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("need at least one bin"));
        }
        let w = max_lag / T::from_usize_lossy(n);
        Self::new((0..=n).map(|i| w * T::from_usize_lossy(i)).collect())
    }

    /// Signed bins: a center bin `(-e_1, e_1)` flanked by mirrored copies of
    /// the remaining bins.
    pub fn directional(edges: Vec<T>, direction: Direction<T>) -> Result<Self> {
        let mut b = Self::new(edges)?;
        if !(direction.tolerance > T::zero()) || direction.tolerance > T::frac_pi_2() {
            return Err(Error::invalid("direction tolerance must be in (0, 90] degrees"));
        }
        b.direction = Some(direction);
        Ok(b)
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn max_lag(&self) -> T {
        *self.edges.last().unwrap()
    }

    pub fn direction(&self) -> Option<&Direction<T>> {
        self.direction.as_ref()
    }

    pub fn n_bins(&self) -> usize {
        let m = self.edges.len() - 1;
        if self.direction.is_some() {
            2 * m - 1
        } else {
            m
        }
    }

    /// `(low, high)` of every bin, in output order.
    pub fn bounds(&self) -> Vec<(T, T)> {
        let e = &self.edges;
        let m = e.len() - 1;
        if self.direction.is_none() {
            return (0..m).map(|k| (e[k], e[k + 1])).collect();
        }
        let mut out: Vec<(T, T)> = (1..m).rev().map(|k| (-e[k + 1], -e[k])).collect();
        out.push((-e[1], e[1]));
        out.extend((1..m).map(|k| (e[k], e[k + 1])));
        out
    }

    fn index_of(&self, d: T) -> Option<usize> {
        if d < T::zero() || d >= self.max_lag() {
            return None;
        }
        // last edge <= d
        let k = self.edges.partition_point(|e| *e <= d);
        Some(k - 1)
    }

    /// Bin and binned coordinate of lag `h`, or `None` if it falls outside.
    fn locate(&self, h: [T; 2]) -> Option<(usize, T)> {
        match &self.direction {
            None => {
                let d = (h[0] * h[0] + h[1] * h[1]).sqrt();
                self.index_of(d).map(|k| (k, d))
            }
            Some(dir) => {
                let (s, c) = dir.angle.sin_cos();
                let t = h[0] * c + h[1] * s;
                let perp = -h[0] * s + h[1] * c;
                if perp.abs() > t.abs() * dir.tolerance.tan() {
                    return None;
                }
                let k = self.index_of(t.abs())?;
                let center = self.edges.len() - 2;
                let idx = if k == 0 {
                    center
                } else if t > T::zero() {
                    center + k
                } else {
                    center - k
                };
                Some((idx, t))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryKind {
    PseudoCrossVariogram,
    EmpiricalCrossCov,
}

impl SummaryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SummaryKind::PseudoCrossVariogram => "pseudo_cross_variogram",
            SummaryKind::EmpiricalCrossCov => "empirical_cross_cov",
        }
    }
}

/// One binned summary for a variable pair. Empty bins hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSummary<T> {
    pub kind: SummaryKind,
    /// 0-based variable indices.
    pub pair: (usize, usize),
    pub bins: LagBins<T>,
    /// Mean binned lag of the pairs in each bin (bin midpoint when empty).
    pub bin_centers: Vec<T>,
    pub values: Vec<Option<T>>,
    pub counts: Vec<usize>,
}

impl<T: Real> EmpiricalSummary<T> {
    pub fn nonempty(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

struct Acc<T> {
    sum: Vec<T>,
    lag: Vec<T>,
    count: Vec<usize>,
}

impl<T: Real> Acc<T> {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![T::zero(); n],
            lag: vec![T::zero(); n],
            count: vec![0; n],
        }
    }

    fn add(&mut self, bins: &LagBins<T>, h: [T; 2], v: T) {
        if let Some((k, t)) = bins.locate(h) {
            self.sum[k] += v;
            self.lag[k] += t;
            self.count[k] += 1;
        }
    }
}

fn centered<T: Real>(d: &MultivariateDataset<T>, q: usize) -> Result<(Vec<T>, &[Location<T>])> {
    if q >= d.p() {
        return Err(Error::invalid(format!("unknown variable {} (have {})", q + 1, d.p())));
    }
    let s = d.variable(q);
    if s.len() < 2 {
        return Err(Error::invalid(format!("variable {} needs at least 2 observations", q + 1)));
    }
    let m = s.mean();
    Ok((s.values().iter().map(|v| *v - m).collect(), s.locations()))
}

/// Accumulates `f(dev_q, dev_r)` over pairs. Pairs are always visited with the
/// lower variable index outer so that `(q, r)` and `(r, q)` see identical
/// sums; for `q == r` each unordered pair feeds both `h` and `-h`.
fn accumulate<T: Real>(
    d: &MultivariateDataset<T>,
    pair: (usize, usize),
    bins: &LagBins<T>,
    kind: SummaryKind,
) -> Result<EmpiricalSummary<T>> {
    let (q, r) = pair;
    let (lo, hi) = (q.min(r), q.max(r));
    let (zl, ll) = centered(d, lo)?;
    let (zh, lh) = centered(d, hi)?;
    let mut acc = Acc::new(bins.n_bins());
    let half = T::lit(0.5);
    let value = |a: T, b: T| match kind {
        SummaryKind::EmpiricalCrossCov => a * b,
        SummaryKind::PseudoCrossVariogram => {
            let e = a - b;
            half * e * e
        }
    };
    let flip = q > r;
    for i in 0..zl.len() {
        let start = if lo == hi { i } else { 0 };
        for j in start..zh.len() {
            let lag = ll[i].lag(&lh[j]);
            let v = value(zl[i], zh[j]);
            if lo == hi {
                if i == j {
                    // self pairs: variance at lag 0, meaningless for the variogram
                    if kind == SummaryKind::EmpiricalCrossCov {
                        acc.add(bins, lag, v);
                    }
                    continue;
                }
                acc.add(bins, lag, v);
                if kind == SummaryKind::EmpiricalCrossCov || bins.direction.is_some() {
                    acc.add(bins, [-lag[0], -lag[1]], v);
                }
            } else if flip {
                acc.add(bins, [-lag[0], -lag[1]], v);
            } else {
                acc.add(bins, lag, v);
            }
        }
    }
    if acc.count.iter().all(|&c| c == 0) {
        return Err(Error::invalid(format!("no pairs fall in any lag bin for pair ({}, {})", q + 1, r + 1)));
    }
    let bounds = bins.bounds();
    let mut centers = Vec::with_capacity(acc.count.len());
    let mut values = Vec::with_capacity(acc.count.len());
    for k in 0..acc.count.len() {
        if acc.count[k] == 0 {
            centers.push((bounds[k].0 + bounds[k].1) * half);
            values.push(None);
        } else {
            let n = T::from_usize_lossy(acc.count[k]);
            centers.push(acc.lag[k] / n);
            values.push(Some(acc.sum[k] / n));
        }
    }
    Ok(EmpiricalSummary {
        kind,
        pair,
        bins: bins.clone(),
        bin_centers: centers,
        values,
        counts: acc.count,
    })
}

/// Binned mean of `(Z_q(s_i) - mean_q)(Z_r(u_j) - mean_r)` over pairs with
/// `s_i - u_j` in the bin. For `q == r` all ordered pairs count, self pairs
/// included, so a bin holding only self pairs gives the biased variance.
pub fn empirical_cross_cov<T: Real>(d: &MultivariateDataset<T>, pair: (usize, usize), bins: &LagBins<T>) -> Result<EmpiricalSummary<T>> {
    accumulate(d, pair, bins, SummaryKind::EmpiricalCrossCov)
}

/// Binned `1/2 mean((Z_q(s_i) - mean_q) - (Z_r(u_j) - mean_r))^2`. Needs no
/// collocation; for `q == r` it is the classical semivariogram over unordered
/// distinct pairs.
pub fn pseudo_cross_variogram<T: Real>(d: &MultivariateDataset<T>, pair: (usize, usize), bins: &LagBins<T>) -> Result<EmpiricalSummary<T>> {
    accumulate(d, pair, bins, SummaryKind::PseudoCrossVariogram)
}

/// Summaries of one kind for every pair `q <= r`.
pub fn all_pairs<T: Real>(d: &MultivariateDataset<T>, bins: &LagBins<T>, kind: SummaryKind) -> Result<Vec<EmpiricalSummary<T>>> {
    let p = d.p();
    let mut out = Vec::new();
    for q in 0..p {
        for r in q..p {
            out.push(accumulate(d, (q, r), bins, kind)?);
        }
    }
    Ok(out)
}

/// CSV `pair_q,pair_r,bin_center,value,count` with 1-based pairs and `NA` for empty bins.
pub fn write_summaries<T: Real, W: Write>(s: &[EmpiricalSummary<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::invalid(format!("write: {e}"));
    w.write_record(["pair_q", "pair_r", "bin_center", "value", "count"]).map_err(err)?;
    for sm in s {
        for k in 0..sm.counts.len() {
            w.write_record([
                (sm.pair.0 + 1).to_string(),
                (sm.pair.1 + 1).to_string(),
                sm.bin_centers[k].to_string(),
                sm.values[k].map_or_else(|| "NA".to_string(), |v| v.to_string()),
                sm.counts[k].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::invalid(format!("write: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::VariableSeries;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn loc(x: f64, y: f64) -> Location<f64> {
        Location::new(x, y).unwrap()
    }

    fn line(vals: &[f64], dx: f64, id: usize) -> VariableSeries<f64> {
        VariableSeries::new(id, (0..vals.len()).map(|i| loc(i as f64 + dx, 0.0)).collect(), vals.to_vec()).unwrap()
    }

    #[test]
    fn self_pair_bin_is_biased_variance() {
        let v = [1.0, 3.0, -2.0, 0.5];
        let d = MultivariateDataset::new(vec![line(&v, 0.0, 1)]).unwrap();
        let bins = LagBins::new(vec![0.0, 0.5, 10.0]).unwrap();
        let s = empirical_cross_cov(&d, (0, 0), &bins).unwrap();
        let m = v.iter().sum::<f64>() / 4.0;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert_eq!(s.counts[0], 4);
        assert_abs_diff_eq!(s.values[0].unwrap(), var, epsilon = 1e-14);
    }

    #[test]
    fn empty_bins_are_missing() {
        let d = MultivariateDataset::new(vec![line(&[1.0, 2.0, 4.0], 0.0, 1)]).unwrap();
        let bins = LagBins::new(vec![0.0, 0.5, 0.9, 1.5, 2.5]).unwrap();
        let s = pseudo_cross_variogram(&d, (0, 0), &bins).unwrap();
        assert_eq!(s.counts, vec![0, 0, 2, 1]);
        assert_eq!(s.values[0], None);
        assert_eq!(s.values[1], None);
        assert_abs_diff_eq!(s.values[2].unwrap(), 0.5 * (1.0 + 4.0) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn identical_collocated_variables_give_zero_at_origin() {
        let v = [0.3, -1.0, 2.0];
        let d = MultivariateDataset::new(vec![line(&v, 0.0, 1), line(&v, 0.0, 2)]).unwrap();
        let bins = LagBins::new(vec![0.0, 0.5, 1.5]).unwrap();
        let s = pseudo_cross_variogram(&d, (0, 1), &bins).unwrap();
        assert_eq!(s.values[0], Some(0.0));
    }

    #[test]
    fn all_empty_is_error() {
        let d = MultivariateDataset::new(vec![line(&[1.0, 2.0], 0.0, 1)]).unwrap();
        let bins = LagBins::new(vec![0.0, 0.1]).unwrap();
        assert!(pseudo_cross_variogram(&d, (0, 0), &bins).is_err());
    }

    #[test]
    fn directional_sign_convention() {
        // Z_1 at x = 2 and Z_2 at x = 0: lag s_1 - s_2 = +2
        let d = MultivariateDataset::new(vec![
            VariableSeries::new(1, vec![loc(2.0, 0.0), loc(10.0, 0.0)], vec![1.0, -1.0]).unwrap(),
            VariableSeries::new(2, vec![loc(0.0, 0.0), loc(30.0, 0.0)], vec![1.0, -1.0]).unwrap(),
        ])
        .unwrap();
        let bins = LagBins::directional(vec![0.0, 0.5, 1.5, 2.5, 3.5], Direction::x_axis()).unwrap();
        let s = empirical_cross_cov(&d, (0, 1), &bins).unwrap();
        let b = bins.bounds();
        let k = (0..s.counts.len()).find(|&k| s.counts[k] > 0).unwrap();
        assert!(b[k].0 <= 2.0 && 2.0 < b[k].1);
        assert_eq!(b.len(), 7);
    }

    fn arb_dataset() -> impl Strategy<Value = MultivariateDataset<f64>> {
        let series = |id: usize| {
            prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, -3.0..3.0f64), 2..25).prop_map(move |pts| {
                let mut seen = std::collections::HashSet::new();
                let pts: Vec<_> = pts
                    .into_iter()
                    .filter(|(x, y, _)| seen.insert(((x * 1e6) as i64, (y * 1e6) as i64)))
                    .collect();
                (id, pts)
            })
        };
        (series(1), series(2)).prop_filter_map("need two points each", |(a, b)| {
            let mk = |(id, pts): (usize, Vec<(f64, f64, f64)>)| {
                VariableSeries::new(
                    id,
                    pts.iter().map(|p| Location::new(p.0, p.1).unwrap()).collect(),
                    pts.iter().map(|p| p.2).collect(),
                )
                .ok()
            };
            let (a, b) = (mk(a)?, mk(b)?);
            if a.len() < 2 || b.len() < 2 {
                return None;
            }
            MultivariateDataset::new(vec![a, b]).ok()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pseudo_variogram_nonnegative(d in arb_dataset()) {
            let bins = LagBins::uniform(15.0, 8).unwrap();
            for (q, r) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let s = pseudo_cross_variogram(&d, (q, r), &bins).unwrap();
                prop_assert!(s.values.iter().flatten().all(|v| *v >= 0.0));
            }
        }

        #[test]
        fn diagonal_pseudo_equals_classical(d in arb_dataset()) {
            let bins = LagBins::uniform(15.0, 6).unwrap();
            let s = pseudo_cross_variogram(&d, (0, 0), &bins).unwrap();
            let v = d.variable(0);
            let mut sum = vec![0.0; 6];
            let mut n = vec![0usize; 6];
            for i in 0..v.len() {
                for j in (i + 1)..v.len() {
                    let h = v.locations()[i].dist(&v.locations()[j]);
                    if h < 15.0 {
                        let k = ((h / 2.5).floor() as usize).min(5);
                        let e = v.values()[i] - v.values()[j];
                        sum[k] += 0.5 * e * e;
                        n[k] += 1;
                    }
                }
            }
            for k in 0..6 {
                match s.values[k] {
                    None => prop_assert_eq!(n[k], 0),
                    Some(x) => prop_assert!((x - sum[k] / n[k] as f64).abs() <= 1e-12 * (1.0 + x.abs())),
                }
            }
        }

        #[test]
        fn pair_swap_identity(d in arb_dataset(), angle in 0.0..std::f64::consts::PI) {
            let dir = Direction { angle, tolerance: 0.4 };
            let bins = LagBins::directional(vec![0.0, 0.5, 1.5, 3.0, 6.0, 12.0], dir).unwrap();
            for pair in [(0usize, 1usize), (0, 0)] {
                let (Ok(a), Ok(b)) = (empirical_cross_cov(&d, pair, &bins), empirical_cross_cov(&d, (pair.1, pair.0), &bins)) else {
                    continue;
                };
                let m = a.counts.len();
                for k in 0..m {
                    prop_assert_eq!(a.counts[k], b.counts[m - 1 - k]);
                    prop_assert_eq!(a.values[k], b.values[m - 1 - k]);
                }
            }
        }
    }
}
