//! Point-estimator functionals `theta(.)` mapping a series to a `d`-vector.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::batch::BatchLayout;
use crate::error::{Error, Result};
use crate::exec;
use crate::series::{SampleSeries, SeriesView};

/// User-supplied estimator.
///
/// Implementations must be deterministic given the observations. If
/// [`CustomFunctional::concurrent`] returns `false`, batch evaluation runs
/// serially.
pub trait CustomFunctional: Send + Sync {
    fn name(&self) -> &str;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, data: SeriesView<'_>) -> std::result::Result<Vec<f64>, String>;
    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Clone)]
pub enum Functional {
    Mean,
    /// Per-coordinate left-continuous empirical quantile, one level per column.
    MarginalQuantiles(Vec<f64>),
    Custom(Arc<dyn CustomFunctional>),
}

/// `ceil(x)` that forgives representation error just above an integer,
/// so that e.g. `0.9 * 100` selects the 90th value.
pub(crate) fn ceil_index(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// `floor(x)` with the same tolerance as [`ceil_index`].
pub(crate) fn floor_index(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

fn check_level(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("quantile level {gamma} outside (0, 1)")))
    }
}

/// Rank (1-based) of the empirical `gamma`-quantile among `k` values.
pub fn quantile_rank(k: usize, gamma: f64) -> usize {
    ceil_index(gamma * k as f64).clamp(1, k)
}

/// Smallest `x` with empirical CDF at least `gamma`: the `ceil(gamma k)`-th
/// order statistic. Reorders `values` in place.
pub fn quantile_in_place(values: &mut [f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("quantile of an empty sample"));
    }
    check_level(gamma)?;
    let r = quantile_rank(values.len(), gamma);
    let (_, q, _) = values.select_nth_unstable_by(r - 1, f64::total_cmp);
    Ok(*q)
}

pub fn quantile(values: &[f64], gamma: f64) -> Result<f64> {
    quantile_in_place(&mut values.to_vec(), gamma)
}

impl Functional {
    pub fn quantiles(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::param("at least one quantile level is required"));
        }
        for &g in &levels {
            check_level(g)?;
        }
        Ok(Functional::MarginalQuantiles(levels))
    }

    /// Dimension of the estimate for input with `d` columns.
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            Functional::Mean => d,
            Functional::MarginalQuantiles(_) => d,
            Functional::Custom(c) => c.output_dim(),
        }
    }

    fn levels_for(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            Functional::MarginalQuantiles(g) if g.len() == d => Ok(g.clone()),
            // A single level applies to every column.
            Functional::MarginalQuantiles(g) if g.len() == 1 => Ok(vec![g[0]; d]),
            Functional::MarginalQuantiles(g) => Err(Error::Dimension { expected: g.len(), found: d }),
            _ => unreachable!("levels_for on a non-quantile functional"),
        }
    }

    /// Check that this functional applies to data with `d` columns.
    pub fn check_columns(&self, d: usize) -> Result<()> {
        match self {
            Functional::MarginalQuantiles(_) => self.levels_for(d).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, data: SeriesView<'_>) -> Result<Vec<f64>> {
        let d = data.d();
        match self {
            Functional::Mean => {
                let mut acc = vec![0.0; d];
                for row in data.rows() {
                    for (a, y) in acc.iter_mut().zip(row) {
                        *a += y;
                    }
                }
                let n = data.n() as f64;
                Ok(acc.into_iter().map(|a| a / n).collect())
            }
            Functional::MarginalQuantiles(_) => {
                let levels = self.levels_for(d)?;
                let mut col = Vec::with_capacity(data.n());
                levels
                    .iter()
                    .enumerate()
                    .map(|(j, &g)| {
                        col.clear();
                        col.extend(data.rows().map(|r| r[j]));
                        quantile_in_place(&mut col, g)
                    })
                    .collect()
            }
            Functional::Custom(c) => {
                let out = c
                    .evaluate(data)
                    .map_err(|e| Error::Functional(format!("{}: {e}", c.name())))?;
                if out.len() != c.output_dim() {
                    return Err(Error::Functional(format!(
                        "{} returned {} values, declared {}",
                        c.name(),
                        out.len(),
                        c.output_dim()
                    )));
                }
                if out.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Functional(format!("{} returned a non-finite value", c.name())));
                }
                Ok(out)
            }
        }
    }

    pub fn evaluate_series(&self, series: &SampleSeries) -> Result<Vec<f64>> {
        self.evaluate(series.view())
    }

    /// Estimates on every batch of `layout`, batch-major (`b x output_dim`).
    pub fn evaluate_batches(&self, series: &SampleSeries, layout: &BatchLayout) -> Result<Vec<f64>> {
        layout.check_series(series)?;
        self.check_columns(series.d())?;
        match self {
            Functional::MarginalQuantiles(_) if layout.offset() < layout.m() && layout.b() > 1 => {
                let levels = self.levels_for(series.d())?;
                Ok(sliding_quantiles(series, layout, &levels))
            }
            Functional::Custom(c) if !c.concurrent() => {
                let rows = exec::map_indexed_serial(layout.b(), |i| {
                    let r = layout.range(i + 1).expect("batch index in range");
                    self.evaluate(series.range(r.start, r.end))
                });
                Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.concat())
            }
            _ => {
                let rows = exec::try_map_indexed(layout.b(), |i| {
                    let r = layout.range(i + 1).expect("batch index in range");
                    self.evaluate(series.range(r.start, r.end))
                })?;
                Ok(rows.concat())
            }
        }
    }
}

/// Order-statistic tree over value ranks, for windows that slide by less than
/// their width.
struct RankTree {
    tree: Vec<u32>,
    top: usize,
}

impl RankTree {
    fn new(len: usize) -> Self {
        let top = len.next_power_of_two();
        RankTree { tree: vec![0; len + 1], top }
    }

    fn update(&mut self, rank: usize, delta: i32) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] = (self.tree[i] as i32 + delta) as u32;
            i += i & i.wrapping_neg();
        }
    }

    /// Zero-based rank of the `k`-th (1-based) smallest element present.
    fn kth(&self, mut k: u32) -> usize {
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < k {
                pos = next;
                k -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

fn sliding_quantiles(series: &SampleSeries, layout: &BatchLayout, levels: &[f64]) -> Vec<f64> {
    let d = series.d();
    let (b, m) = (layout.b(), layout.m());
    let view = series.view();
    let columns: Vec<Vec<f64>> = exec::map_indexed(d, |j| {
        let col = view.column(j);
        let mut order: Vec<usize> = (0..col.len()).collect();
        order.sort_by(|&a, &c| col[a].total_cmp(&col[c]).then(a.cmp(&c)));
        let mut rank = vec![0usize; col.len()];
        for (r, &t) in order.iter().enumerate() {
            rank[t] = r;
        }
        let k = quantile_rank(m, levels[j]) as u32;
        let mut tree = RankTree::new(col.len());
        let mut out = Vec::with_capacity(b);
        let (mut lo, mut hi) = (0usize, 0usize);
        for i in 0..b {
            let start = layout.start(i);
            while lo < start {
                tree.update(rank[lo], -1);
                lo += 1;
            }
            hi = hi.max(lo);
            while hi < start + m {
                tree.update(rank[hi], 1);
                hi += 1;
            }
            out.push(col[order[tree.kth(k)]]);
        }
        out
    });
    let mut flat = vec![0.0; b * d];
    for (j, c) in columns.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            flat[i * d + j] = *v;
        }
    }
    flat
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Functional({self})")
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::Mean => write!(f, "mean"),
            Functional::MarginalQuantiles(g) => {
                let parts: Vec<String> = g.iter().map(|x| x.to_string()).collect();
                write!(f, "quantile:{}", parts.join(","))
            }
            Functional::Custom(c) => write!(f, "custom:{}", c.name()),
        }
    }
}

impl FromStr for Functional {
    type Err = Error;

    /// `mean`, `quantile:0.99`, or `quantile:0.9,0.95` (one level per column).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "mean" {
            return Ok(Functional::Mean);
        }
        if let Some(list) = s.strip_prefix("quantile:") {
            let levels = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::param(format!("bad quantile level '{v}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Functional::quantiles(levels);
        }
        Err(Error::param(format!("unknown functional '{s}'")))
    }
}
