//! Brownian-functional weak limits of the Studentized batch statistics.
//!
//! Paths are standard Wiener processes discretized on a uniform grid of `K`
//! steps over `[0, 1]`. Evaluation points `c_j` and `c_j + beta` snap to the
//! nearest grid node. For a finite number of batches only the path values at
//! those nodes are needed; they are drawn directly from independent Gaussian
//! increments, which has exactly the law of the full grid path restricted to
//! the nodes. The `b = inf` forms and `B~(beta)` integrate over the full grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assess::Method;
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_GRID: usize = 4096;

/// Number of batches in the limit: finite `b >= 2` or the `b = inf` integral form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BatchCount {
    Finite(usize),
    Infinite,
}

impl fmt::Display for BatchCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchCount::Finite(b) => write!(f, "{b}"),
            BatchCount::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for BatchCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(BatchCount::Infinite);
        }
        s.parse()
            .map(BatchCount::Finite)
            .map_err(|_| Error::param(format!("batch count '{s}' is neither an integer nor 'inf'")))
    }
}

/// Norm used to measure the Studentized statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormOrder {
    L1,
    L2,
    LInf,
}

impl NormOrder {
    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            NormOrder::L1 => x.iter().map(|v| v.abs()).sum(),
            NormOrder::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormOrder::LInf => x.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormOrder::L1 => "1",
            NormOrder::L2 => "2",
            NormOrder::LInf => "inf",
        })
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(NormOrder::L1),
            "2" => Ok(NormOrder::L2),
            "inf" => Ok(NormOrder::LInf),
            other => Err(Error::param(format!("norm order '{other}' must be 1, 2 or inf"))),
        }
    }
}

/// Standard `d`-dimensional Wiener path on `K + 1` grid nodes, `W(0) = 0`.
#[derive(Debug, Clone)]
pub struct WienerPath {
    grid: usize,
    d: usize,
    /// Node-major: node `k` occupies `values[k*d..(k+1)*d]`.
    values: Vec<f64>,
}

impl WienerPath {
    pub fn sample<R: Rng + ?Sized>(grid: usize, d: usize, rng: &mut R) -> Result<Self> {
        if grid < 2 {
            return Err(Error::param(format!("grid size {grid} must be at least 2")));
        }
        if d == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        let sd = (1.0 / grid as f64).sqrt();
        let mut values = vec![0.0; (grid + 1) * d];
        for k in 1..=grid {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                values[k * d + j] = values[(k - 1) * d + j] + sd * z;
            }
        }
        Ok(WienerPath { grid, d, values })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `W(k / K)`.
    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.d..(node + 1) * self.d]
    }

    /// The same path seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.is_multiple_of(factor) || self.grid / factor < 2 {
            return Err(Error::param(format!("cannot coarsen grid {} by {factor}", self.grid)));
        }
        let grid = self.grid / factor;
        let values = (0..=grid).flat_map(|k| self.at(k * factor).to_vec()).collect();
        Ok(WienerPath { grid, d: self.d, values })
    }

    /// Trapezoidal approximation of `int_{a/K}^{b/K} W(u) du` for nodes `a <= b`.
    fn integral(&self, a: usize, b: usize, j: usize) -> f64 {
        if a >= b {
            return 0.0;
        }
        let h = 1.0 / self.grid as f64;
        let inner: f64 = (a + 1..b).map(|k| self.at(k)[j]).sum();
        h * (0.5 * (self.at(a)[j] + self.at(b)[j]) + inner)
    }
}

fn snap(x: f64, grid: usize) -> usize {
    ((x * grid as f64).round() as usize).min(grid)
}

#[derive(Debug, Clone)]
enum Plan {
    /// Sorted distinct nodes, window `(start slot, end slot)` pairs, slot of node `K`.
    Finite { nodes: Vec<usize>, windows: Vec<(usize, usize)>, last: usize },
    /// Window shift `round(beta K)` and number of left endpoints in `[0, 1 - beta)`.
    Infinite { shift: usize, len: usize },
}

/// One weak-limit distribution: method, batch fraction, batch count, dimension, grid.
#[derive(Debug, Clone)]
pub struct LimitSpec {
    method: Method,
    beta: f64,
    b: BatchCount,
    d: usize,
    grid: usize,
    plan: Plan,
}

/// `chi^2` matrix and the unnormalized numerator drawn from one path.
#[derive(Debug, Clone)]
pub struct LimitDraw {
    pub chi2: DMatrix<f64>,
    pub numerator: DVector<f64>,
}

impl LimitDraw {
    /// `chi^{-1} * numerator`, `chi` the symmetric square root of `chi^2`.
    pub fn studentized(&self) -> Result<Vec<f64>> {
        let inv = linalg::inv_sqrt_pd(&self.chi2)?;
        Ok((inv * &self.numerator).iter().copied().collect())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("batch fraction beta = {beta} outside (0, 1)")))
    }
}

impl LimitSpec {
    pub fn new(method: Method, beta: f64, b: BatchCount, d: usize, grid: usize) -> Result<Self> {
        check_beta(beta)?;
        if grid < 2 {
            return Err(Error::param(format!("grid size {grid} must be at least 2")));
        }
        if d == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        let plan = match b {
            BatchCount::Finite(count) if count < 2 => {
                return Err(Error::param(format!("limit needs b >= 2 batches, got {count}")))
            }
            BatchCount::Finite(count) => {
                let raw: Vec<(usize, usize)> = (0..count)
                    .map(|j| {
                        let c = j as f64 * (1.0 - beta) / (count - 1) as f64;
                        (snap(c, grid), snap(c + beta, grid))
                    })
                    .collect();
                let mut nodes: Vec<usize> = raw.iter().flat_map(|&(s, e)| [s, e]).collect();
                nodes.push(grid);
                nodes.sort_unstable();
                nodes.dedup();
                let slot = |x: usize| nodes.binary_search(&x).expect("node registered");
                let windows = raw.iter().map(|&(s, e)| (slot(s), slot(e))).collect();
                let last = slot(grid);
                Plan::Finite { nodes, windows, last }
            }
            BatchCount::Infinite => {
                let shift = snap(beta, grid).max(1);
                if shift >= grid {
                    return Err(Error::param(format!("beta = {beta} does not resolve on grid {grid}")));
                }
                Plan::Infinite { shift, len: grid - shift }
            }
        };
        Ok(LimitSpec { method, beta, b, d, grid, plan })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn batches(&self) -> BatchCount {
        self.b
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Draw `chi^2` and the numerator of `T` from one fresh path.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LimitDraw {
        match &self.plan {
            Plan::Finite { nodes, windows, last } => {
                let d = self.d;
                let mut w = vec![0.0; nodes.len() * d];
                let mut prev = 0usize;
                let mut prev_slot: Option<usize> = None;
                for (s, &node) in nodes.iter().enumerate() {
                    let sd = ((node - prev) as f64 / self.grid as f64).sqrt();
                    for j in 0..d {
                        let base = prev_slot.map_or(0.0, |p| w[p * d + j]);
                        let z: f64 = if node > prev { rng.sample(StandardNormal) } else { 0.0 };
                        w[s * d + j] = base + sd * z;
                    }
                    prev = node;
                    prev_slot = Some(s);
                }
                self.finite_functionals(|slot, j| w[slot * d + j], windows, *last)
            }
            Plan::Infinite { .. } => {
                let path = WienerPath::sample(self.grid, self.d, rng).expect("validated grid");
                self.draw_on(&path).expect("path matches spec")
            }
        }
    }

    /// Evaluate the functionals on a given full path (grid may differ from the spec's).
    pub fn draw_on(&self, path: &WienerPath) -> Result<LimitDraw> {
        if path.d() != self.d {
            return Err(Error::Dimension { expected: self.d, found: path.d() });
        }
        let spec = if path.grid() == self.grid {
            std::borrow::Cow::Borrowed(self)
        } else {
            std::borrow::Cow::Owned(LimitSpec::new(self.method, self.beta, self.b, self.d, path.grid())?)
        };
        match &spec.plan {
            Plan::Finite { nodes, windows, last } => {
                Ok(spec.finite_functionals(|slot, j| path.at(nodes[slot])[j], windows, *last))
            }
            Plan::Infinite { shift, len } => Ok(spec.infinite_functionals(path, *shift, *len)),
        }
    }

    fn finite_functionals(
        &self,
        w: impl Fn(usize, usize) -> f64,
        windows: &[(usize, usize)],
        last: usize,
    ) -> LimitDraw {
        let d = self.d;
        let b = windows.len() as f64;
        let w1: Vec<f64> = (0..d).map(|j| w(last, j)).collect();
        let incr: Vec<Vec<f64>> = windows
            .iter()
            .map(|&(s, e)| (0..d).map(|j| w(e, j) - w(s, j)).collect())
            .collect();
        let mut chi2 = DMatrix::zeros(d, d);
        let numerator = match self.method {
            Method::Ob1 => {
                for inc in &incr {
                    let v: Vec<f64> = inc.iter().zip(&w1).map(|(x, one)| x - self.beta * one).collect();
                    add_outer(&mut chi2, &v);
                }
                DVector::from_vec(w1)
            }
            Method::Ob2 => {
                let mut mean = vec![0.0; d];
                for inc in &incr {
                    mean.iter_mut().zip(inc).for_each(|(a, x)| *a += x);
                }
                mean.iter_mut().for_each(|a| *a /= b);
                for inc in &incr {
                    let v: Vec<f64> = inc.iter().zip(&mean).map(|(x, c)| x - c).collect();
                    add_outer(&mut chi2, &v);
                }
                DVector::from_iterator(d, mean.iter().map(|m| m / self.beta))
            }
        };
        chi2 /= self.beta * b;
        LimitDraw { chi2, numerator }
    }

    fn infinite_functionals(&self, path: &WienerPath, shift: usize, len: usize) -> LimitDraw {
        let d = self.d;
        let h = 1.0 / path.grid() as f64;
        let beta = self.beta;
        let w1 = path.at(path.grid()).to_vec();
        let incr = |k: usize, j: usize| path.at(k + shift)[j] - path.at(k)[j];
        let mut chi2 = DMatrix::zeros(d, d);
        let mut v = vec![0.0; d];
        let numerator = match self.method {
            Method::Ob1 => {
                for k in 0..len {
                    for j in 0..d {
                        v[j] = incr(k, j) - beta * w1[j];
                    }
                    add_outer(&mut chi2, &v);
                }
                chi2 *= h / (beta * (1.0 - beta));
                DVector::from_vec(w1)
            }
            Method::Ob2 => {
                let mut sum = vec![0.0; d];
                for k in 0..len {
                    for (j, s) in sum.iter_mut().enumerate() {
                        *s += incr(k, j);
                    }
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / len as f64).collect();
                for k in 0..len {
                    for j in 0..d {
                        v[j] = incr(k, j) - mean[j];
                    }
                    add_outer(&mut chi2, &v);
                }
                let scale = 1.0 / (beta * (1.0 - beta));
                chi2 *= h * scale;
                DVector::from_iterator(d, sum.iter().map(|s| s * h * scale))
            }
        };
        LimitDraw { chi2, numerator }
    }

    pub fn sample_chi2<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        self.draw(rng).chi2
    }

    /// One draw of `T`; fails on a numerically singular `chi`.
    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.draw(rng).studentized()
    }
}

fn add_outer(acc: &mut DMatrix<f64>, v: &[f64]) {
    let d = v.len();
    for r in 0..d {
        for c in 0..d {
            acc[(r, c)] += v[r] * v[c];
        }
    }
}

pub fn sample_wiener<R: Rng + ?Sized>(grid: usize, d: usize, rng: &mut R) -> Result<WienerPath> {
    WienerPath::sample(grid, d, rng)
}

pub fn sample_chi2_ob1<R: Rng + ?Sized>(
    beta: f64,
    b: BatchCount,
    d: usize,
    rng: &mut R,
    grid: usize,
) -> Result<DMatrix<f64>> {
    Ok(LimitSpec::new(Method::Ob1, beta, b, d, grid)?.sample_chi2(rng))
}

pub fn sample_chi2_ob2<R: Rng + ?Sized>(
    beta: f64,
    b: BatchCount,
    d: usize,
    rng: &mut R,
    grid: usize,
) -> Result<DMatrix<f64>> {
    Ok(LimitSpec::new(Method::Ob2, beta, b, d, grid)?.sample_chi2(rng))
}

pub fn sample_t<R: Rng + ?Sized>(
    method: Method,
    beta: f64,
    b: BatchCount,
    d: usize,
    rng: &mut R,
    grid: usize,
) -> Result<Vec<f64>> {
    LimitSpec::new(method, beta, b, d, grid)?.sample_t(rng)
}

/// Limit of the `sqrt(m)`-scaled OB-I batch errors when `m / n -> beta > 0`:
/// `beta^{-1/2} (1-beta)^{-1} (int_{1-beta}^1 W - int_0^beta W - beta(1-beta) W(1))`.
pub fn b_tilde_on(path: &WienerPath, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let k = path.grid();
    let lo = snap(beta, k);
    let hi = snap(1.0 - beta, k);
    let scale = 1.0 / (beta.sqrt() * (1.0 - beta));
    Ok((0..path.d())
        .map(|j| {
            let tail = path.integral(hi, k, j);
            let head = path.integral(0, lo, j);
            scale * (tail - head - beta * (1.0 - beta) * path.at(k)[j])
        })
        .collect())
}

pub fn sample_b_tilde<R: Rng + ?Sized>(beta: f64, d: usize, rng: &mut R, grid: usize) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let path = WienerPath::sample(grid, d, rng)?;
    b_tilde_on(&path, beta)
}
