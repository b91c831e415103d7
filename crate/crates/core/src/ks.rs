//! Two-sample Kolmogorov-Smirnov distance and histogram binning.

use crate::error::{Error, Result};

/// `sup_t |F_a(t) - F_b(t)|` for one-dimensional samples, exact over the
/// pooled jump points.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("KS distance needs two non-empty samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    // once one sample is exhausted its CDF is 1; the other only approaches 1
    sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    Ok(sup)
}

/// Multivariate analogue using south-west rectangles anchored at the pooled
/// sample points (row-major samples with `d` columns). Exact for `d = 1`;
/// a lower bound on the supremum otherwise.
pub fn ks_distance_rect(a: &[f64], b: &[f64], d: usize) -> Result<f64> {
    if d == 1 {
        return ks_distance(a, b);
    }
    if d == 0 || !a.len().is_multiple_of(d) || !b.len().is_multiple_of(d) || a.is_empty() || b.is_empty() {
        return Err(Error::param("samples must be non-empty with d columns"));
    }
    let cdf = |s: &[f64], t: &[f64]| {
        let hits = s.chunks_exact(d).filter(|r| r.iter().zip(t).all(|(x, ti)| x <= ti)).count();
        hits as f64 / (s.len() / d) as f64
    };
    Ok(a.chunks_exact(d)
        .chain(b.chunks_exact(d))
        .map(|t| (cdf(a, t) - cdf(b, t)).abs())
        .fold(0.0, f64::max))
}

/// Fixed-width histogram over `[lo, hi]`; the top edge is inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("histogram of an empty sample set"));
        }
        if bins == 0 {
            return Err(Error::param("histogram needs at least one bin"));
        }
        let (lo, hi) = match range {
            Some(r) => r,
            None => samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x))),
        };
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::param(format!("invalid histogram range [{lo}, {hi}]")));
        }
        let (lo, hi) = if hi == lo { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { hi } else { lo + width * k as f64 }).collect();
        let mut counts = vec![0u64; bins];
        for &x in samples {
            if x < lo || x > hi {
                continue;
            }
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    /// `bin_lo,bin_hi,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", self.edges[k], self.edges[k + 1], c));
        }
        s
    }
}
