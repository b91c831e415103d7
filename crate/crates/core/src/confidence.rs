//! Studentized statistics and OB-I / OB-II confidence regions.
//!
//! The region for method `M` is
//! `{ x : || sqrt(n) Sigma_M^{-1/2} (x - center) ||_p <= t }` with
//! `Sigma_M = (m / b) sum_i e_i e_i^T` over the (uncentred) method errors and
//! `center` the full-sample estimate for OB-I, the average batch estimate for OB-II.

use nalgebra::{DMatrix, DVector};

use crate::assess::{BatchEstimates, ErrorEnsemble, Method};
use crate::batch::BatchLayout;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::limit::NormOrder;
use crate::linalg;
use crate::series::SampleSeries;
use crate::table::{TableKey, TableSource};

/// `(m / b) sum_i e_i e_i^T` for the ensemble's errors.
pub fn studentizing_matrix(e: &ErrorEnsemble) -> DMatrix<f64> {
    let d = e.d();
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..e.b() {
        let v = e.error(i);
        for r in 0..d {
            for c in 0..d {
                acc[(r, c)] += v[r] * v[c];
            }
        }
    }
    acc * (e.layout().m() as f64 / e.b() as f64)
}

/// `T_n = sqrt(n) Sigma_n^{-1/2} (theta_n - theta)` for a hypothesised `theta`.
pub fn studentized_statistic(e: &ErrorEnsemble, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != e.d() {
        return Err(Error::Dimension { expected: e.d(), found: theta.len() });
    }
    let root = inv_root(e)?;
    let err = DVector::from_iterator(e.d(), e.grand_estimate().iter().zip(theta).map(|(a, b)| a - b));
    let n = e.layout().n() as f64;
    Ok((root * err * n.sqrt()).iter().copied().collect())
}

fn inv_root(e: &ErrorEnsemble) -> Result<DMatrix<f64>> {
    let sigma = studentizing_matrix(e);
    linalg::inv_sqrt_pd(&sigma).map_err(|err| Error::DegenerateDesign {
        b: e.b(),
        d: e.d(),
        reason: format!("studentizing matrix is not invertible: {err}"),
    })
}

#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    method: Method,
    center: Vec<f64>,
    sigma: DMatrix<f64>,
    scale_root: DMatrix<f64>,
    n: usize,
    p: NormOrder,
    radius: f64,
    alpha: f64,
    table_key: TableKey,
}

impl ConfidenceRegion {
    /// Region from an ensemble and an explicit radius.
    pub fn from_ensemble(e: &ErrorEnsemble, p: NormOrder, alpha: f64, radius: f64, table_key: TableKey) -> Result<Self> {
        if e.b() < e.d() + 1 {
            return Err(Error::DegenerateDesign {
                b: e.b(),
                d: e.d(),
                reason: "need at least d + 1 batches".into(),
            });
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param(format!("radius {radius} must be positive")));
        }
        let scale_root = inv_root(e)?;
        let center = match e.method() {
            Method::Ob1 => e.grand_estimate().to_vec(),
            Method::Ob2 => e.batch_mean_estimate().to_vec(),
        };
        Ok(ConfidenceRegion {
            method: e.method(),
            center,
            sigma: studentizing_matrix(e),
            scale_root,
            n: e.layout().n(),
            p,
            radius,
            alpha,
            table_key,
        })
    }

    /// Region whose radius comes from `tables`.
    pub fn from_ensemble_with_tables(e: &ErrorEnsemble, p: NormOrder, alpha: f64, tables: &TableSource) -> Result<Self> {
        if e.b() < e.d() + 1 {
            return Err(Error::DegenerateDesign {
                b: e.b(),
                d: e.d(),
                reason: "need at least d + 1 batches".into(),
            });
        }
        let l = e.layout();
        let key = TableKey::for_layout(e.method(), l.n(), l.m(), l.b(), e.d(), p)?;
        // check invertibility before paying for table generation
        inv_root(e)?;
        let t = tables.critical_value(&key, alpha)?.t;
        Self::from_ensemble(e, p, alpha, t, key)
    }

    pub fn build(
        series: &SampleSeries,
        layout: &BatchLayout,
        f: &Functional,
        method: Method,
        p: NormOrder,
        alpha: f64,
        tables: &TableSource,
    ) -> Result<Self> {
        let e = BatchEstimates::compute(series, layout, f)?.ensemble(method);
        Self::from_ensemble_with_tables(&e, p, alpha, tables)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `Sigma_n`, the studentizing matrix.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `Sigma_n^{-1/2}`.
    pub fn scale_root(&self) -> &DMatrix<f64> {
        &self.scale_root
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn norm(&self) -> NormOrder {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn table_key(&self) -> &TableKey {
        &self.table_key
    }

    /// `|| sqrt(n) Sigma^{-1/2} (x - center) ||_p`.
    pub fn statistic(&self, x: &[f64]) -> Result<f64> {
        let d = self.center.len();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, found: x.len() });
        }
        let diff = DVector::from_iterator(d, x.iter().zip(&self.center).map(|(a, c)| a - c));
        let z = &self.scale_root * diff * (self.n as f64).sqrt();
        Ok(self.p.norm(z.as_slice()))
    }

    /// Closed-region membership test.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.statistic(x)? <= self.radius)
    }

    /// Half-width `t sqrt(Sigma_n) / sqrt(n)` of a one-dimensional region.
    pub fn half_width(&self) -> Result<f64> {
        if self.center.len() != 1 {
            return Err(Error::Unsupported(format!(
                "interval form needs d = 1, region has d = {}",
                self.center.len()
            )));
        }
        Ok(self.radius * self.sigma[(0, 0)].sqrt() / (self.n as f64).sqrt())
    }

    pub fn interval(&self) -> Result<(f64, f64)> {
        let h = self.half_width()?;
        Ok((self.center[0] - h, self.center[0] + h))
    }
}
