//! OB-I / OB-II error ensembles and the assessment estimators built on them.
//!
//! With `theta_n` the full-sample estimate, `theta_i` the estimate on batch `i`
//! and `theta_bar` their average, OB-I uses the batch errors
//! `eps_i = theta_i - theta_n` and OB-II uses `eps~_i = theta_i - theta_bar`.
//! Errors are stored unscaled; `sqrt(m)` puts them on the scale of
//! `sqrt(n) (theta_n - theta)` and `sqrt(m / n)` on the scale of the error itself.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::BatchLayout;
use crate::error::{Error, Result};
use crate::functional::{floor_index, Functional};
use crate::series::SampleSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Batch errors centred at the full-sample estimate.
    #[serde(rename = "ob1")]
    Ob1,
    /// Batch errors centred at the average batch estimate.
    #[serde(rename = "ob2")]
    Ob2,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ob1 => "ob1",
            Method::Ob2 => "ob2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ob1 => "OB-I",
            Method::Ob2 => "OB-II",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ob1" | "ob-i" | "obi" => Ok(Method::Ob1),
            "ob2" | "ob-ii" | "obii" => Ok(Method::Ob2),
            other => Err(Error::param(format!("unknown method '{other}' (expected ob1 or ob2)"))),
        }
    }
}

/// Full-sample and per-batch estimates for one (series, layout, functional).
///
/// Computing these once and deriving both ensembles avoids re-evaluating the
/// functional when comparing OB-I and OB-II on the same data.
#[derive(Debug, Clone)]
pub struct BatchEstimates {
    layout: BatchLayout,
    d: usize,
    grand: Vec<f64>,
    batches: Vec<f64>,
    batch_mean: Vec<f64>,
}

impl BatchEstimates {
    pub fn compute(series: &SampleSeries, layout: &BatchLayout, f: &Functional) -> Result<Self> {
        layout.check_series(series)?;
        let grand = f.evaluate_series(series)?;
        let batches = f.evaluate_batches(series, layout)?;
        Self::from_parts(*layout, grand, batches)
    }

    /// Assemble from precomputed estimates (`batches` is batch-major).
    pub fn from_parts(layout: BatchLayout, grand: Vec<f64>, batches: Vec<f64>) -> Result<Self> {
        let d = grand.len();
        if d == 0 || batches.len() != layout.b() * d {
            return Err(Error::Dimension { expected: layout.b() * d.max(1), found: batches.len() });
        }
        let mut batch_mean = vec![0.0; d];
        for row in batches.chunks_exact(d) {
            for (a, x) in batch_mean.iter_mut().zip(row) {
                *a += x;
            }
        }
        let b = layout.b() as f64;
        batch_mean.iter_mut().for_each(|a| *a /= b);
        Ok(BatchEstimates { layout, d, grand, batches, batch_mean })
    }

    pub fn layout(&self) -> &BatchLayout {
        &self.layout
    }

    pub fn grand(&self) -> &[f64] {
        &self.grand
    }

    pub fn batch_mean(&self) -> &[f64] {
        &self.batch_mean
    }

    /// Estimate on batch `i` (0-based).
    pub fn batch(&self, i: usize) -> &[f64] {
        &self.batches[i * self.d..(i + 1) * self.d]
    }

    pub fn ensemble(&self, method: Method) -> ErrorEnsemble {
        let center = match method {
            Method::Ob1 => &self.grand,
            Method::Ob2 => &self.batch_mean,
        };
        let d = self.d;
        let errors: Vec<f64> = self
            .batches
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(center).map(|(x, c)| x - c))
            .collect();
        let error_mean = match method {
            Method::Ob1 => self.batch_mean.iter().zip(&self.grand).map(|(a, g)| a - g).collect(),
            Method::Ob2 => vec![0.0; d],
        };
        ErrorEnsemble {
            method,
            errors,
            d,
            grand: self.grand.clone(),
            batch_mean: self.batch_mean.clone(),
            error_mean,
            layout: self.layout,
        }
    }
}

/// Batch errors for one method plus the quantities needed to rescale them.
#[derive(Debug, Clone)]
pub struct ErrorEnsemble {
    method: Method,
    errors: Vec<f64>,
    d: usize,
    grand: Vec<f64>,
    batch_mean: Vec<f64>,
    error_mean: Vec<f64>,
    layout: BatchLayout,
}

impl ErrorEnsemble {
    pub fn build(series: &SampleSeries, layout: &BatchLayout, f: &Functional, method: Method) -> Result<Self> {
        Ok(BatchEstimates::compute(series, layout, f)?.ensemble(method))
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn b(&self) -> usize {
        self.layout.b()
    }

    pub fn layout(&self) -> &BatchLayout {
        &self.layout
    }

    /// `theta_n`.
    pub fn grand_estimate(&self) -> &[f64] {
        &self.grand
    }

    /// `theta_bar`, the average batch estimate.
    pub fn batch_mean_estimate(&self) -> &[f64] {
        &self.batch_mean
    }

    /// Average error. Exactly zero for OB-II.
    pub fn error_mean(&self) -> &[f64] {
        &self.error_mean
    }

    /// Unscaled errors, batch-major.
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn error(&self, i: usize) -> &[f64] {
        &self.errors[i * self.d..(i + 1) * self.d]
    }

    /// `sqrt(m / n)`.
    pub fn rescale(&self) -> f64 {
        self.layout.rescale()
    }

    /// Errors multiplied by `scale`, batch-major.
    pub fn scaled_errors(&self, scale: f64) -> Vec<f64> {
        self.errors.iter().map(|e| scale * e).collect()
    }

    /// Coordinate `j` of `sqrt(m) * eps_i` over all batches.
    pub fn root_m_errors(&self, j: usize) -> Vec<f64> {
        let s = (self.layout.m() as f64).sqrt();
        self.errors.chunks_exact(self.d).map(|r| s * r[j]).collect()
    }

    /// Bias estimate `sqrt(m/n) * mean(eps_i)`; the zero vector for OB-II.
    pub fn estimate_bias(&self) -> Vec<f64> {
        match self.method {
            Method::Ob1 => self.error_mean.iter().map(|e| self.rescale() * e).collect(),
            Method::Ob2 => vec![0.0; self.d],
        }
    }

    /// Covariance estimate of the estimator error.
    ///
    /// OB-I: `(m/n) * ((1/b) sum eps eps^T - eps_bar eps_bar^T)`;
    /// OB-II: `(m/n) * (1/b) sum eps~ eps~^T`.
    pub fn estimate_variance(&self) -> Result<DMatrix<f64>> {
        let b = self.b();
        if b < 2 {
            return Err(Error::DegenerateLayout(format!(
                "variance estimation needs at least 2 batches, layout has {b}"
            )));
        }
        let d = self.d;
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for e in self.errors.chunks_exact(d) {
            for r in 0..d {
                for c in 0..d {
                    acc[(r, c)] += e[r] * e[c];
                }
            }
        }
        acc /= b as f64;
        if self.method == Method::Ob1 {
            for r in 0..d {
                for c in 0..d {
                    acc[(r, c)] -= self.error_mean[r] * self.error_mean[c];
                }
            }
        }
        Ok(acc * self.layout.beta())
    }

    /// Per-coordinate standard deviation implied by [`Self::estimate_variance`].
    pub fn estimate_stddev(&self) -> Result<Vec<f64>> {
        let v = self.estimate_variance()?;
        Ok((0..self.d).map(|j| v[(j, j)].max(0.0).sqrt()).collect())
    }

    /// Error quantiles: per coordinate, `sqrt(m/n)` times the
    /// `max(1, floor(gamma_j b))`-th smallest error.
    pub fn estimate_error_quantiles(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        let levels: Vec<f64> = match gamma.len() {
            1 => vec![gamma[0]; self.d],
            l if l == self.d => gamma.to_vec(),
            l => return Err(Error::Dimension { expected: self.d, found: l }),
        };
        let b = self.b();
        let mut col = Vec::with_capacity(b);
        levels
            .iter()
            .enumerate()
            .map(|(j, &g)| {
                if !(g > 0.0 && g < 1.0) {
                    return Err(Error::param(format!("quantile level {g} outside (0, 1)")));
                }
                let k = floor_index(g * b as f64).clamp(1, b);
                col.clear();
                col.extend(self.errors.chunks_exact(self.d).map(|r| r[j]));
                let (_, q, _) = col.select_nth_unstable_by(k - 1, f64::total_cmp);
                Ok(self.rescale() * *q)
            })
            .collect()
    }

    /// Fraction of batches with `sqrt(m) * eps_i <= t` in every coordinate.
    pub fn error_cdf(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.d {
            return Err(Error::Dimension { expected: self.d, found: t.len() });
        }
        let s = (self.layout.m() as f64).sqrt();
        let hits = self
            .errors
            .chunks_exact(self.d)
            .filter(|e| e.iter().zip(t).all(|(x, ti)| s * x <= *ti))
            .count();
        Ok(hits as f64 / self.b() as f64)
    }
}
