//! One-shot analysis of a data file: per-variant confidence region and
//! bias / standard deviation / error-quantile estimates.

use std::fmt::Write as _;
use std::path::PathBuf;

use batchuq::harness::Variant;
use batchuq::{BatchEstimates, BatchLayout, ConfidenceRegion, Error, Functional, Method, NormOrder, Result, SampleSeries, SizePolicy, TableSource};
use serde::{Deserialize, Serialize};

use crate::ingest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub input: PathBuf,
    /// 1-based indices or header names; empty selects every column.
    pub columns: Vec<String>,
    pub functional: String,
    pub ci_size: String,
    pub psi_size: String,
    pub variants: Vec<String>,
    pub alpha: f64,
    pub p: String,
    pub error_quantile: f64,
    pub seed: u64,
}

impl AnalysisRequest {
    /// Canonical spelling of every field. Normalizing twice changes nothing.
    pub fn normalize(&self) -> Result<Self> {
        let functional: Functional = self.functional.parse()?;
        let ci: SizePolicy = self.ci_size.parse()?;
        let psi: SizePolicy = self.psi_size.parse()?;
        let p: NormOrder = self.p.parse()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.error_quantile > 0.0 && self.error_quantile < 1.0) {
            return Err(Error::Parameter(format!("error quantile {} outside (0, 1)", self.error_quantile)));
        }
        let parsed = self.variants.iter().map(|v| Variant::parse(v)).collect::<Result<Vec<_>>>()?;
        if parsed.is_empty() {
            return Err(Error::Parameter("no variants requested".into()));
        }
        let variants = Variant::all().into_iter().filter(|v| parsed.contains(v)).map(|v| v.name()).collect();
        Ok(AnalysisRequest {
            input: self.input.clone(),
            columns: self.columns.iter().map(|c| c.trim().to_string()).collect(),
            functional: functional.to_string(),
            ci_size: ci.to_string(),
            psi_size: psi.to_string(),
            variants,
            alpha: self.alpha,
            p: p.to_string(),
            error_quantile: self.error_quantile,
            seed: self.seed,
        })
    }

    pub fn canonical(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.normalize()?).expect("request serializes"))
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        let r: AnalysisRequest = serde_json::from_str(text).map_err(|e| Error::Parameter(format!("bad request: {e}")))?;
        r.normalize()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    pub ci_m: usize,
    pub ci_b: usize,
    pub psi_m: usize,
    pub psi_b: usize,
    /// Centre of the region: the grand estimate (OB-I) or the batch mean (OB-II).
    pub center: Vec<f64>,
    pub radius: f64,
    pub table_beta: f64,
    pub table_b: String,
    /// `[lo, hi]` when the estimand is one-dimensional.
    pub interval: Option<(f64, f64)>,
    /// `None` for OB-II.
    pub bias: Option<Vec<f64>>,
    pub stddev: Vec<f64>,
    pub quantile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub request: AnalysisRequest,
    pub n: usize,
    pub d: usize,
    pub estimate: Vec<f64>,
    pub table_paths: usize,
    pub table_grid: usize,
    pub rows: Vec<VariantResult>,
}

fn layout(n: usize, size: SizePolicy, v: &Variant) -> Result<BatchLayout> {
    BatchLayout::from_policy(n, size, v.overlap)
        .map_err(|e| Error::Data(format!("n = {n} observations too few for the {} layout ({size}): {e}", v.name())))
}

pub fn analyze(req: &AnalysisRequest, tables: &TableSource) -> Result<AnalysisReport> {
    let req = req.normalize()?;
    let table = ingest::read_delimited(&req.input)?;
    let series = table.select(&req.columns)?;
    analyze_series(&req, &series, tables)
}

pub fn analyze_series(req: &AnalysisRequest, series: &SampleSeries, tables: &TableSource) -> Result<AnalysisReport> {
    let f: Functional = req.functional.parse()?;
    let p: NormOrder = req.p.parse()?;
    let n = series.n();
    let estimate = f.evaluate_series(series)?;
    let mut rows = Vec::new();
    for name in &req.variants {
        let v = Variant::parse(name)?;
        let ci = layout(n, req.ci_size.parse()?, &v)?;
        let psi = layout(n, req.psi_size.parse()?, &v)?;
        let ci_est = BatchEstimates::compute(series, &ci, &f)?;
        let region = ConfidenceRegion::from_ensemble_with_tables(&ci_est.ensemble(v.method), p, req.alpha, tables)?;
        let e = BatchEstimates::compute(series, &psi, &f)?.ensemble(v.method);
        rows.push(VariantResult {
            variant: v.name(),
            ci_m: ci.m(),
            ci_b: ci.b(),
            psi_m: psi.m(),
            psi_b: psi.b(),
            center: region.center().to_vec(),
            radius: region.radius(),
            table_beta: region.table_key().beta,
            table_b: region.table_key().b.to_string(),
            interval: region.interval().ok(),
            bias: (v.method == Method::Ob1).then(|| e.estimate_bias()),
            stddev: e.estimate_stddev()?,
            quantile: e.estimate_error_quantiles(&[req.error_quantile])?,
        });
    }
    Ok(AnalysisReport {
        request: req.clone(),
        n,
        d: estimate.len(),
        estimate,
        table_paths: tables.n_paths(),
        table_grid: tables.grid(),
        rows,
    })
}

fn vec_text(v: &[f64]) -> String {
    if v.len() == 1 {
        format!("{:.1}", v[0])
    } else {
        format!("({})", v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", "))
    }
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: n = {}, functional {}, estimate {}",
            self.request.input.display(),
            self.n,
            self.request.functional,
            vec_text(&self.estimate)
        );
        let _ = writeln!(
            s,
            "{:.0}% regions (p = {}) with batches {}; estimators with batches {}",
            100.0 * (1.0 - self.request.alpha),
            self.request.p,
            self.request.ci_size,
            self.request.psi_size
        );
        let q = format!("q{:.2}", self.request.error_quantile);
        let _ = writeln!(s, "{:<8} {:>26} {:>12} {:>12} {:>12}", "variant", "CI", "bias", "stddev", q);
        for r in &self.rows {
            let ci = match r.interval {
                Some((lo, hi)) => format!("[{lo:.1}, {hi:.1}]"),
                None => format!("radius {:.3}", r.radius),
            };
            let bias = r.bias.as_deref().map_or("-".to_string(), vec_text);
            let _ = writeln!(
                s,
                "{:<8} {:>26} {:>12} {:>12} {:>12}",
                r.variant,
                ci,
                bias,
                vec_text(&r.stddev),
                vec_text(&r.quantile)
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,coordinate,center,radius,ci_lo,ci_hi,bias,stddev,quantile,ci_m,ci_b,psi_m,psi_b\n");
        for r in &self.rows {
            for j in 0..self.d {
                let (lo, hi) = r.interval.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
                let bias = r.bias.as_ref().map_or(String::new(), |b| b[j].to_string());
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.variant,
                    j + 1,
                    r.center[j],
                    r.radius,
                    lo,
                    hi,
                    bias,
                    r.stddev[j],
                    r.quantile[j],
                    r.ci_m,
                    r.ci_b,
                    r.psi_m,
                    r.psi_b
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> AnalysisRequest {
        AnalysisRequest {
            input: "data.csv".into(),
            columns: vec![" cost ".into()],
            functional: " quantile:0.90".into(),
            ci_size: "0.2n".into(),
            psi_size: "SQRT".into(),
            variants: vec!["nob-ii".into(), "FOB-I".into(), "fob1".into()],
            alpha: 0.05,
            p: "2".into(),
            error_quantile: 0.8,
            seed: 7,
        }
    }

    #[test]
    fn canonical_round_trip() {
        let r = request();
        let canon = r.canonical().unwrap();
        let back = AnalysisRequest::from_canonical(&canon).unwrap();
        assert_eq!(back, r.normalize().unwrap());
        assert_eq!(back.canonical().unwrap(), canon);
        assert_eq!(back.variants, vec!["FOB-I", "NOB-II"]);
        assert_eq!(back.ci_size, "frac:0.2");
        assert_eq!(back.functional, "quantile:0.9");
    }

    #[test]
    fn invalid_requests() {
        let mut r = request();
        r.alpha = 1.5;
        assert!(r.normalize().is_err());
        let mut r = request();
        r.variants = vec!["XOB".into()];
        assert!(r.normalize().is_err());
        assert!(AnalysisRequest::from_canonical("{").is_err());
    }

    #[test]
    fn too_short_and_constant() {
        let tables = TableSource::new(None, 1000, 64, 1).unwrap();
        let mut r = request().normalize().unwrap();
        r.columns.clear();
        let one = SampleSeries::univariate(vec![1.0]).unwrap();
        assert!(matches!(analyze_series(&r, &one, &tables), Err(Error::Data(_))));
        let flat = SampleSeries::univariate(vec![2.0; 100]).unwrap();
        assert!(matches!(analyze_series(&r, &flat, &tables), Err(Error::DegenerateDesign { .. })));
    }

    #[test]
    fn four_rows_with_ob2_bias_blank() {
        let tables = TableSource::new(None, 2000, 256, 1).unwrap();
        let mut r = request().normalize().unwrap();
        r.variants = Variant::all().iter().map(|v| v.name()).collect();
        let data: Vec<f64> = (0..500).map(|i| ((i * 7919) % 1000) as f64).collect();
        let s = SampleSeries::univariate(data).unwrap();
        let rep = analyze_series(&r, &s, &tables).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert!(rep.rows[0].bias.is_some() && rep.rows[2].bias.is_none());
        // OB-I and OB-II share the standard-deviation estimate
        assert!((rep.rows[0].stddev[0] - rep.rows[2].stddev[0]).abs() < 1e-9 * rep.rows[0].stddev[0]);
        let (lo, hi) = rep.rows[0].interval.unwrap();
        assert!(lo < rep.estimate[0] && rep.estimate[0] < hi);
        assert_eq!(rep.to_text().lines().count(), 3 + 4);
    }
}
