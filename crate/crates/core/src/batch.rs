//! Batch layouts over a time-ordered series.
//!
//! A layout with batch size `m` and offset `d_off` over `n` observations has
//! `b = floor((n - m) / d_off) + 1` batches; batch `i` (1-based) covers
//! observations `(i-1)*d_off + 1 ..= (i-1)*d_off + m`. Up to `d_off - 1`
//! trailing observations may fall outside every batch; they still count
//! towards the grand estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{SampleSeries, SeriesView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BatchLayout {
    n: usize,
    m: usize,
    offset: usize,
    b: usize,
}

/// How the batch size is chosen from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizePolicy {
    /// `m = round(beta * n)`.
    Fraction(f64),
    /// `m = round(sqrt(n))`.
    Sqrt,
    Explicit(usize),
}

/// How far apart consecutive batch starts are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    /// `d_off = 1`.
    Full,
    /// `d_off = m`.
    None,
    Explicit(usize),
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

impl BatchLayout {
    pub fn plan(n: usize, m: usize, offset: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::param("batch size m must be at least 1"));
        }
        if m > n {
            return Err(Error::param(format!("batch size m = {m} exceeds n = {n}")));
        }
        if offset < 1 {
            return Err(Error::param("batch offset must be at least 1"));
        }
        let b = (n - m) / offset + 1;
        Ok(BatchLayout { n, m, offset, b })
    }

    pub fn from_policy(n: usize, size: SizePolicy, overlap: Overlap) -> Result<Self> {
        let m = size.batch_size(n)?;
        let offset = match overlap {
            Overlap::Full => 1,
            Overlap::None => m,
            Overlap::Explicit(d) => d,
        };
        Self::plan(n, m, offset)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// `m / n`, the batch fraction.
    pub fn beta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Scale factor `sqrt(m / n)` carrying batch errors to the full-sample scale.
    pub fn rescale(&self) -> f64 {
        self.beta().sqrt()
    }

    pub fn is_fully_overlapping(&self) -> bool {
        self.offset == 1
    }

    pub fn is_non_overlapping(&self) -> bool {
        self.offset >= self.m
    }

    /// Zero-based half-open index range of batch `i` (1-based).
    pub fn range(&self, i: usize) -> Result<std::ops::Range<usize>> {
        if i < 1 || i > self.b {
            return Err(Error::Index { index: i, len: self.b });
        }
        let start = (i - 1) * self.offset;
        Ok(start..start + self.m)
    }

    /// Number of observations covered by at least one batch.
    pub fn covered(&self) -> usize {
        (self.b - 1) * self.offset + self.m
    }

    pub(crate) fn start(&self, i0: usize) -> usize {
        i0 * self.offset
    }

    /// Observations of batch `i` (1-based).
    pub fn slice<'a>(&self, series: &'a SampleSeries, i: usize) -> Result<SeriesView<'a>> {
        self.check_series(series)?;
        let r = self.range(i)?;
        Ok(series.range(r.start, r.end))
    }

    pub(crate) fn check_series(&self, series: &SampleSeries) -> Result<()> {
        if series.n() != self.n {
            return Err(Error::param(format!(
                "layout planned for n = {} but series has {} observations",
                self.n,
                series.n()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for BatchLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} m={} d_off={} b={}", self.n, self.m, self.offset, self.b)
    }
}

impl SizePolicy {
    pub fn batch_size(&self, n: usize) -> Result<usize> {
        let m = match *self {
            SizePolicy::Fraction(beta) => {
                if !(beta > 0.0 && beta <= 1.0) {
                    return Err(Error::param(format!("batch fraction {beta} outside (0, 1]")));
                }
                round_half_up(beta * n as f64)
            }
            SizePolicy::Sqrt => round_half_up((n as f64).sqrt()),
            SizePolicy::Explicit(m) => m,
        };
        if m < 1 || m > n {
            return Err(Error::param(format!("batch size {m} invalid for n = {n}")));
        }
        Ok(m)
    }
}

impl fmt::Display for SizePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizePolicy::Fraction(b) => write!(f, "frac:{b}"),
            SizePolicy::Sqrt => write!(f, "sqrt"),
            SizePolicy::Explicit(m) => write!(f, "m:{m}"),
        }
    }
}

impl FromStr for SizePolicy {
    type Err = Error;

    /// `sqrt`, `frac:0.2` (or `0.2n`), `m:50`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("sqrt") {
            return Ok(SizePolicy::Sqrt);
        }
        let bad = || Error::param(format!("unrecognised batch size policy '{s}'"));
        if let Some(v) = s.strip_prefix("frac:").or_else(|| s.strip_suffix('n')) {
            let beta: f64 = v.parse().map_err(|_| bad())?;
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::param(format!("batch fraction {beta} outside (0, 1]")));
            }
            return Ok(SizePolicy::Fraction(beta));
        }
        if let Some(v) = s.strip_prefix("m:") {
            return v.parse().map(SizePolicy::Explicit).map_err(|_| bad());
        }
        Err(bad())
    }
}

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Overlap::Full => write!(f, "full"),
            Overlap::None => write!(f, "none"),
            Overlap::Explicit(d) => write!(f, "d:{d}"),
        }
    }
}

impl FromStr for Overlap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Overlap::Full),
            "none" => Ok(Overlap::None),
            other => other
                .strip_prefix("d:")
                .and_then(|v| v.parse().ok())
                .map(Overlap::Explicit)
                .ok_or_else(|| Error::param(format!("unrecognised overlap '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_to(n: usize) -> SampleSeries {
        SampleSeries::univariate((1..=n).map(|x| x as f64).collect()).unwrap()
    }

    #[test]
    fn plan_counts() {
        assert_eq!(BatchLayout::plan(100, 10, 1).unwrap().b(), 91);
        assert_eq!(BatchLayout::plan(100, 20, 20).unwrap().b(), 5);
        assert_eq!(BatchLayout::plan(2000, 400, 1).unwrap().b(), 1601);
        assert!(matches!(BatchLayout::plan(10, 20, 1), Err(Error::Parameter(_))));
        assert!(BatchLayout::plan(10, 0, 1).is_err());
        assert!(BatchLayout::plan(10, 2, 0).is_err());
    }

    #[test]
    fn policies() {
        let l = BatchLayout::from_policy(2000, SizePolicy::Fraction(0.2), Overlap::Full).unwrap();
        assert_eq!((l.m(), l.offset(), l.b()), (400, 1, 1601));
        let l = BatchLayout::from_policy(2500, SizePolicy::Sqrt, Overlap::Full).unwrap();
        assert_eq!((l.m(), l.offset(), l.b()), (50, 1, 2451));
        let l = BatchLayout::from_policy(100, SizePolicy::Fraction(0.2), Overlap::None).unwrap();
        assert_eq!((l.m(), l.offset(), l.b()), (20, 20, 5));
        // round half up: sqrt(5000) = 70.71 -> 71, 0.25 * 10 = 2.5 -> 3
        assert_eq!(SizePolicy::Sqrt.batch_size(5000).unwrap(), 71);
        assert_eq!(SizePolicy::Fraction(0.25).batch_size(10).unwrap(), 3);
    }

    #[test]
    fn policy_strings() {
        for s in ["sqrt", "frac:0.2", "m:50"] {
            let p: SizePolicy = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!("0.2n".parse::<SizePolicy>().unwrap(), SizePolicy::Fraction(0.2));
        assert!("frac:1.5".parse::<SizePolicy>().is_err());
        assert!("cube".parse::<SizePolicy>().is_err());
        for s in ["full", "none", "d:3"] {
            assert_eq!(s.parse::<Overlap>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn slices() {
        let s = one_to(10);
        let l = BatchLayout::plan(10, 4, 3).unwrap();
        assert_eq!(l.b(), 3);
        assert_eq!(l.slice(&s, 2).unwrap().as_flat(), &[4.0, 5.0, 6.0, 7.0]);
        assert!(matches!(l.slice(&s, 4), Err(Error::Index { index: 4, len: 3 })));
        assert!(l.slice(&s, 0).is_err());
        let full = BatchLayout::plan(10, 10, 1).unwrap();
        assert_eq!(full.slice(&s, 1).unwrap().to_series(), s);
        assert!(full.slice(&one_to(9), 1).is_err());
    }

    proptest! {
        #[test]
        fn batch_count_is_maximal(n in 1usize..500, m_frac in 0.0f64..1.0, off in 1usize..60) {
            let m = 1 + ((n - 1) as f64 * m_frac) as usize;
            let l = BatchLayout::plan(n, m, off).unwrap();
            prop_assert!(l.covered() <= n);
            prop_assert!(l.b() * off + m > n);
            prop_assert!(n - l.covered() < off);
            prop_assert_eq!(l.range(l.b()).unwrap().end, l.covered());
        }

        #[test]
        fn disjoint_partition(k in 1usize..20, m in 1usize..20) {
            let n = k * m;
            let s = one_to(n);
            let l = BatchLayout::plan(n, m, m).unwrap();
            prop_assert_eq!(l.b(), k);
            let joined: Vec<f64> = (1..=l.b())
                .flat_map(|i| l.slice(&s, i).unwrap().as_flat().to_vec())
                .collect();
            prop_assert_eq!(joined, s.as_flat().to_vec());
        }
    }
}
