//! Macro-replication experiments.
//!
//! The protocol:
//! 1. approximate the true `theta(P)` from one very long run;
//! 2. for each `n`, run `K'` independent side replications to get the sampling
//!    distribution of the estimator error and reference values for its bias,
//!    standard deviation and error quantile;
//! 3. over `K` macro-replications, compute the batch assessment estimates with
//!    small batches and report their RMSE against the references;
//! 4. over the same macro-replications, build confidence regions with large
//!    batches and report coverage of the step-1 truth and mean half-width.
//!
//! Every replication draws from its own stream `(seed, label, n, k)` and
//! aggregates are reduced in replication order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assess::{BatchEstimates, Method};
use crate::batch::{BatchLayout, Overlap, SizePolicy};
use crate::confidence::ConfidenceRegion;
use crate::error::{Error, Result};
use crate::exec;
use crate::functional::{quantile, Functional};
use crate::ks::{ks_distance, Histogram};
use crate::limit::NormOrder;
use crate::series::SampleSeries;
use crate::stream;
use crate::table::{TableKey, TableSource};
use crate::testbeds::Testbed;

/// A batching scheme: centring method plus overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub method: Method,
    pub overlap: Overlap,
}

impl Variant {
    pub const FOB1: Variant = Variant { method: Method::Ob1, overlap: Overlap::Full };
    pub const NOB1: Variant = Variant { method: Method::Ob1, overlap: Overlap::None };
    pub const FOB2: Variant = Variant { method: Method::Ob2, overlap: Overlap::Full };
    pub const NOB2: Variant = Variant { method: Method::Ob2, overlap: Overlap::None };

    pub fn all() -> Vec<Variant> {
        vec![Self::FOB1, Self::NOB1, Self::FOB2, Self::NOB2]
    }

    pub fn name(&self) -> String {
        let prefix = match self.overlap {
            Overlap::Full => "FOB".to_string(),
            Overlap::None => "NOB".to_string(),
            Overlap::Explicit(d) => format!("OB[d={d}]"),
        };
        let suffix = match self.method {
            Method::Ob1 => "I",
            Method::Ob2 => "II",
        };
        format!("{prefix}-{suffix}")
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FOB-I" | "FOB1" => Ok(Self::FOB1),
            "NOB-I" | "NOB1" => Ok(Self::NOB1),
            "FOB-II" | "FOB2" => Ok(Self::FOB2),
            "NOB-II" | "NOB2" => Ok(Self::NOB2),
            other => Err(Error::param(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub testbed: Testbed,
    pub functional: Functional,
    pub n_grid: Vec<usize>,
    pub variants: Vec<Variant>,
    /// Batch size for confidence regions.
    pub ci_size: SizePolicy,
    /// Batch size for the bias / stddev / quantile estimators.
    pub psi_size: SizePolicy,
    pub alpha: f64,
    pub p: NormOrder,
    /// Level of the error quantile being assessed.
    pub error_quantile: f64,
    pub macro_reps: usize,
    pub side_reps: usize,
    pub truth_n: usize,
    pub seed: u64,
    /// Share one data series across variants within a macro-replication.
    pub crn: bool,
}

impl ExperimentPlan {
    /// The gamma study: 0.99-quantile of Gamma(1, 100) observations.
    pub fn gamma() -> Self {
        ExperimentPlan {
            testbed: Testbed::Gamma { shape: 1.0, scale: 100.0 },
            functional: Functional::MarginalQuantiles(vec![0.99]),
            n_grid: vec![500, 1000, 2000, 5000],
            variants: Variant::all(),
            ci_size: SizePolicy::Fraction(0.2),
            psi_size: SizePolicy::Sqrt,
            alpha: 0.05,
            p: NormOrder::L2,
            error_quantile: 0.8,
            macro_reps: 1000,
            side_reps: 100_000,
            truth_n: 1_000_000,
            seed: 1,
            crn: true,
        }
    }

    /// The inventory study: steady-state 0.9-quantile of daily cost.
    pub fn inventory() -> Self {
        ExperimentPlan {
            testbed: Testbed::Inventory(Default::default()),
            functional: Functional::MarginalQuantiles(vec![0.9]),
            ..Self::gamma()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.macro_reps < 1 || self.side_reps < 1 {
            return Err(Error::param("macro and side replication counts must be at least 1"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::param("n-grid is empty"));
        }
        let max_n = *self.n_grid.iter().max().expect("non-empty");
        if self.truth_n <= max_n {
            return Err(Error::param(format!(
                "ground-truth run length {} must exceed the largest n = {max_n}",
                self.truth_n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.error_quantile > 0.0 && self.error_quantile < 1.0) {
            return Err(Error::param("error quantile level must lie in (0, 1)"));
        }
        if self.variants.is_empty() {
            return Err(Error::param("no variants requested"));
        }
        Ok(())
    }

    fn series(&self, label: &str, n: usize, k: usize, seed: u64) -> Result<SampleSeries> {
        let mut rng = stream::rng(seed, label, n as u64, k as u64);
        self.testbed.generate(n, &mut rng)
    }

    /// Data for macro-replication `k` at size `n` as seen by `variant`.
    pub fn macro_series(&self, n: usize, k: usize, variant: &Variant) -> Result<SampleSeries> {
        if self.crn {
            self.series("macro", n, k, self.seed)
        } else {
            self.series(&format!("macro|{}", variant.name()), n, k, self.seed)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Truth {
    pub value: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

/// Step 1: evaluate the functional on one run of length `truth_n`.
pub fn approximate_truth(plan: &ExperimentPlan) -> Result<Truth> {
    let series = plan.series("truth", plan.truth_n, 0, plan.seed)?;
    Ok(Truth { value: plan.functional.evaluate_series(&series)?, n: plan.truth_n, seed: plan.seed })
}

/// Reference assessment values derived from the side experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Reference {
    pub bias: Vec<f64>,
    pub stddev: Vec<f64>,
    pub quantile: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    pub n: usize,
    pub d: usize,
    /// `K' x d` errors `theta_n - theta`.
    pub errors: Vec<f64>,
    pub reference: Reference,
}

impl SamplingDistribution {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.errors.chunks_exact(self.d).map(|r| r[j]).collect()
    }
}

/// Step 2: `K'` independent runs of size `n`, errors against `truth`.
pub fn sampling_distribution(plan: &ExperimentPlan, n: usize, truth: &Truth) -> Result<SamplingDistribution> {
    let d = truth.value.len();
    let rows = exec::try_map_indexed(plan.side_reps, |k| {
        let s = plan.series("side", n, k, plan.seed)?;
        let est = plan.functional.evaluate_series(&s)?;
        Ok::<_, Error>(est.iter().zip(&truth.value).map(|(e, t)| e - t).collect::<Vec<f64>>())
    })?;
    let errors = rows.concat();
    let count = plan.side_reps as f64;
    let mut bias = vec![0.0; d];
    let mut stddev = vec![0.0; d];
    let mut q = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = errors.chunks_exact(d).map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / count;
        bias[j] = mean;
        stddev[j] = if col.len() > 1 {
            (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
        } else {
            0.0
        };
        q[j] = quantile(&col, plan.error_quantile)?;
    }
    Ok(SamplingDistribution { n, d, errors, reference: Reference { bias, stddev, quantile: q } })
}

/// Mean of a replicated quantity with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn mean_se(x: &[f64]) -> Estimate {
    let k = x.len() as f64;
    let mean = x.iter().sum::<f64>() / k;
    let var = if x.len() > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    Estimate { value: mean, stderr: (var / k).sqrt() }
}

/// RMSE from squared errors, with a delta-method standard error.
fn rmse(squares: &[f64]) -> Estimate {
    let ms = mean_se(squares);
    let value = ms.value.sqrt();
    let stderr = if value > 0.0 { ms.stderr / (2.0 * value) } else { 0.0 };
    Estimate { value, stderr }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RmseTriple {
    /// `None` for OB-II, whose bias estimator is identically zero.
    pub bias: Option<Estimate>,
    pub stddev: Estimate,
    pub quantile: Estimate,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Coverage {
    pub coverage: Estimate,
    /// Mean half-width (one-dimensional estimands only).
    pub half_width: Option<Estimate>,
    pub radius: f64,
    pub radius_stderr: f64,
    pub table_beta: f64,
    pub table_b: String,
    /// Replications whose region could not be built (singular studentizing matrix).
    pub failures: usize,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

struct PsiSquares {
    bias: f64,
    stddev: f64,
    quantile: f64,
}

fn psi_squares(est: &BatchEstimates, method: Method, level: f64, reference: &Reference) -> Result<PsiSquares> {
    let e = est.ensemble(method);
    Ok(PsiSquares {
        bias: squared_distance(&e.estimate_bias(), &reference.bias),
        stddev: squared_distance(&e.estimate_stddev()?, &reference.stddev),
        quantile: squared_distance(&e.estimate_error_quantiles(&[level])?, &reference.quantile),
    })
}

/// Step 3 for one variant.
pub fn run_assessment_rmse(
    plan: &ExperimentPlan,
    n: usize,
    variant: &Variant,
    reference: &Reference,
) -> Result<RmseTriple> {
    let layout = BatchLayout::from_policy(n, plan.psi_size, variant.overlap)?;
    let per_rep = exec::try_map_indexed(plan.macro_reps, |k| {
        let s = plan.macro_series(n, k, variant)?;
        let est = BatchEstimates::compute(&s, &layout, &plan.functional)?;
        psi_squares(&est, variant.method, plan.error_quantile, reference)
    })?;
    Ok(collect_rmse(variant.method, &per_rep))
}

fn collect_rmse(method: Method, reps: &[PsiSquares]) -> RmseTriple {
    let pick = |f: fn(&PsiSquares) -> f64| reps.iter().map(f).collect::<Vec<_>>();
    RmseTriple {
        bias: (method == Method::Ob1).then(|| rmse(&pick(|r| r.bias))),
        stddev: rmse(&pick(|r| r.stddev)),
        quantile: rmse(&pick(|r| r.quantile)),
    }
}

fn region_key(plan: &ExperimentPlan, layout: &BatchLayout, method: Method, d: usize) -> Result<TableKey> {
    TableKey::for_layout(method, layout.n(), layout.m(), layout.b(), d, plan.p)
}

/// Per-replication outcome of building one region.
#[derive(Debug, Clone, Copy)]
struct RegionOutcome {
    covered: bool,
    half_width: Option<f64>,
}

fn region_outcome(
    est: &BatchEstimates,
    method: Method,
    plan: &ExperimentPlan,
    radius: f64,
    key: TableKey,
    truth: &Truth,
) -> Option<RegionOutcome> {
    let e = est.ensemble(method);
    let r = ConfidenceRegion::from_ensemble(&e, plan.p, plan.alpha, radius, key).ok()?;
    Some(RegionOutcome {
        covered: r.contains(&truth.value).ok()?,
        half_width: r.half_width().ok(),
    })
}

fn collect_coverage(outcomes: &[Option<RegionOutcome>], radius: (f64, f64), key: &TableKey) -> Coverage {
    let ok: Vec<RegionOutcome> = outcomes.iter().flatten().copied().collect();
    let failures = outcomes.len() - ok.len();
    let hits: Vec<f64> = ok.iter().map(|o| if o.covered { 1.0 } else { 0.0 }).collect();
    let widths: Option<Vec<f64>> = ok.iter().map(|o| o.half_width).collect();
    Coverage {
        coverage: if hits.is_empty() { Estimate { value: f64::NAN, stderr: f64::NAN } } else { mean_se(&hits) },
        half_width: widths.filter(|w| !w.is_empty()).map(|w| mean_se(&w)),
        radius: radius.0,
        radius_stderr: radius.1,
        table_beta: key.beta,
        table_b: key.b.to_string(),
        failures,
    }
}

/// Step 4 for one variant.
pub fn run_coverage(
    plan: &ExperimentPlan,
    n: usize,
    variant: &Variant,
    truth: &Truth,
    tables: &TableSource,
) -> Result<Coverage> {
    let layout = BatchLayout::from_policy(n, plan.ci_size, variant.overlap)?;
    let key = region_key(plan, &layout, variant.method, truth.value.len())?;
    let cv = tables.critical_value(&key, plan.alpha)?;
    let outcomes = exec::try_map_indexed(plan.macro_reps, |k| {
        let s = plan.macro_series(n, k, variant)?;
        let est = BatchEstimates::compute(&s, &layout, &plan.functional)?;
        Ok::<_, Error>(region_outcome(&est, variant.method, plan, cv.t, key, truth))
    })?;
    Ok(collect_coverage(&outcomes, (cv.t, cv.stderr), &key))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Cell {
    pub variant: String,
    pub ci_m: usize,
    pub ci_b: usize,
    pub psi_m: usize,
    pub psi_b: usize,
    pub coverage: Coverage,
    pub rmse: RmseTriple,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Row {
    pub n: usize,
    pub reference: Reference,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub testbed: String,
    pub functional: String,
    pub alpha: f64,
    pub p: String,
    pub error_quantile: f64,
    pub ci_size: String,
    pub psi_size: String,
    pub macro_reps: usize,
    pub side_reps: usize,
    pub crn: bool,
    pub seed: u64,
    pub truth: Truth,
    pub table_paths: usize,
    pub table_grid: usize,
    pub table_seed: u64,
    pub rows: Vec<Row>,
}

/// Full experiment over the plan's n-grid and variants.
///
/// Under CRN each macro-replication's series is generated once and shared by all
/// variants, both for the assessment estimators and the confidence regions.
pub fn run_experiment(plan: &ExperimentPlan, tables: &TableSource) -> Result<ExperimentReport> {
    plan.validate()?;
    let truth = approximate_truth(plan)?;
    let d = truth.value.len();
    let mut rows = Vec::with_capacity(plan.n_grid.len());
    for &n in &plan.n_grid {
        let side = sampling_distribution(plan, n, &truth)?;
        let reference = side.reference.clone();

        struct Setup {
            variant: Variant,
            psi: BatchLayout,
            ci: BatchLayout,
            key: TableKey,
            radius: (f64, f64),
        }
        let setups = plan
            .variants
            .iter()
            .map(|v| {
                let psi = BatchLayout::from_policy(n, plan.psi_size, v.overlap)?;
                let ci = BatchLayout::from_policy(n, plan.ci_size, v.overlap)?;
                let key = region_key(plan, &ci, v.method, d)?;
                let cv = tables.critical_value(&key, plan.alpha)?;
                Ok(Setup { variant: *v, psi, ci, key, radius: (cv.t, cv.stderr) })
            })
            .collect::<Result<Vec<_>>>()?;

        let per_rep = exec::try_map_indexed(plan.macro_reps, |k| {
            let mut shared: Vec<(BatchLayout, BatchEstimates)> = Vec::new();
            let mut out = Vec::with_capacity(setups.len());
            let shared_series = if plan.crn { Some(plan.macro_series(n, k, &setups[0].variant)?) } else { None };
            for s in &setups {
                let own;
                let series = match &shared_series {
                    Some(x) => x,
                    None => {
                        own = plan.macro_series(n, k, &s.variant)?;
                        &own
                    }
                };
                let mut estimates = |layout: &BatchLayout| -> Result<BatchEstimates> {
                    if plan.crn {
                        if let Some((_, e)) = shared.iter().find(|(l, _)| l == layout) {
                            return Ok(e.clone());
                        }
                    }
                    let e = BatchEstimates::compute(series, layout, &plan.functional)?;
                    if plan.crn {
                        shared.push((*layout, e.clone()));
                    }
                    Ok(e)
                };
                let psi_est = estimates(&s.psi)?;
                let squares = psi_squares(&psi_est, s.variant.method, plan.error_quantile, &reference)?;
                let ci_est = estimates(&s.ci)?;
                let region = region_outcome(&ci_est, s.variant.method, plan, s.radius.0, s.key, &truth);
                out.push((squares, region));
            }
            Ok::<_, Error>(out)
        })?;

        let cells = setups
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let squares: Vec<PsiSquares> = per_rep
                    .iter()
                    .map(|r| PsiSquares { bias: r[i].0.bias, stddev: r[i].0.stddev, quantile: r[i].0.quantile })
                    .collect();
                let regions: Vec<Option<RegionOutcome>> = per_rep.iter().map(|r| r[i].1).collect();
                Cell {
                    variant: s.variant.name(),
                    ci_m: s.ci.m(),
                    ci_b: s.ci.b(),
                    psi_m: s.psi.m(),
                    psi_b: s.psi.b(),
                    coverage: collect_coverage(&regions, s.radius, &s.key),
                    rmse: collect_rmse(s.variant.method, &squares),
                }
            })
            .collect();
        rows.push(Row { n, reference, cells });
    }
    Ok(ExperimentReport {
        testbed: plan.testbed.name().to_string(),
        functional: plan.functional.to_string(),
        alpha: plan.alpha,
        p: plan.p.to_string(),
        error_quantile: plan.error_quantile,
        ci_size: plan.ci_size.to_string(),
        psi_size: plan.psi_size.to_string(),
        macro_reps: plan.macro_reps,
        side_reps: plan.side_reps,
        crn: plan.crn,
        seed: plan.seed,
        truth,
        table_paths: tables.n_paths(),
        table_grid: tables.grid(),
        table_seed: tables.seed(),
        rows,
    })
}

/// Scaled OB-I batch errors `sqrt(m) eps_i` for one replication drawn with
/// `figure_seed`, and the KS distance to `sqrt(n)` times the side-experiment errors.
pub fn ks_against_sampling(
    plan: &ExperimentPlan,
    n: usize,
    size: SizePolicy,
    figure_seed: u64,
    side: &SamplingDistribution,
) -> Result<f64> {
    let layout = BatchLayout::from_policy(n, size, Overlap::Full)?;
    let series = plan.series("figure", n, 0, figure_seed)?;
    let e = BatchEstimates::compute(&series, &layout, &plan.functional)?.ensemble(Method::Ob1);
    let root_n = (n as f64).sqrt();
    let reference: Vec<f64> = side.column(0).iter().map(|x| root_n * x).collect();
    ks_distance(&e.root_m_errors(0), &reference)
}

/// Histogram data for one figure panel: `sqrt(m/n)`-scaled OB-I and OB-II batch
/// errors for a fixed-seed replication, and the side-experiment errors, on a
/// shared bin range.
pub struct FigurePanel {
    pub ob1: Histogram,
    pub ob2: Histogram,
    pub sampling: Histogram,
}

pub fn figure_panel(
    plan: &ExperimentPlan,
    n: usize,
    size: SizePolicy,
    figure_seed: u64,
    side: &SamplingDistribution,
    bins: usize,
) -> Result<FigurePanel> {
    let layout = BatchLayout::from_policy(n, size, Overlap::Full)?;
    let series = plan.series("figure", n, 0, figure_seed)?;
    let est = BatchEstimates::compute(&series, &layout, &plan.functional)?;
    let scale = layout.rescale();
    let ob1: Vec<f64> = est.ensemble(Method::Ob1).errors().iter().step_by(side.d).map(|e| scale * e).collect();
    let ob2: Vec<f64> = est.ensemble(Method::Ob2).errors().iter().step_by(side.d).map(|e| scale * e).collect();
    let sampling = side.column(0);
    let (lo, hi) = ob1
        .iter()
        .chain(&ob2)
        .chain(&sampling)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let range = Some((lo, hi));
    Ok(FigurePanel {
        ob1: Histogram::build(&ob1, bins, range)?,
        ob2: Histogram::build(&ob2, bins, range)?,
        sampling: Histogram::build(&sampling, bins, range)?,
    })
}

/// Write a histogram of `samples` as `bin_lo,bin_hi,count` rows.
pub fn histogram_export(samples: &[f64], bins: usize, path: &Path) -> Result<Histogram> {
    let h = Histogram::build(samples, bins, None)?;
    fs::write(path, h.to_csv())?;
    Ok(h)
}

fn pct(e: &Estimate) -> String {
    format!("{:.1}% ({:.1})", 100.0 * e.value, 100.0 * e.stderr)
}

fn val(e: &Estimate) -> String {
    format!("{:.1} ({:.1})", e.value, e.stderr)
}

impl ExperimentReport {
    /// Aligned-column text, one line per (n, variant).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = self.truth.value.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "testbed: {}   functional: {}   truth: [{}] (n = {})", self.testbed, self.functional, t, self.truth.n);
        let _ = writeln!(
            s,
            "alpha = {}  p = {}  CI batches {}  estimator batches {}  K = {}  K' = {}  CRN = {}  seed = {}",
            self.alpha, self.p, self.ci_size, self.psi_size, self.macro_reps, self.side_reps, self.crn, self.seed
        );
        let _ = writeln!(s, "critical values: {} paths, grid {}, seed {}", self.table_paths, self.table_grid, self.table_seed);
        let _ = writeln!(s);
        let q = format!("q{:.2}-RMSE", self.error_quantile);
        let _ = writeln!(
            s,
            "{:>6}  {:<7} {:>16} {:>16} {:>14} {:>14} {:>14}",
            "n", "variant", "coverage", "half-width", "bias-RMSE", "sd-RMSE", q
        );
        for row in &self.rows {
            for c in &row.cells {
                let hw = c.coverage.half_width.as_ref().map_or("-".to_string(), val);
                let bias = c.rmse.bias.as_ref().map_or("-".to_string(), val);
                let _ = writeln!(
                    s,
                    "{:>6}  {:<7} {:>16} {:>16} {:>14} {:>14} {:>14}",
                    row.n,
                    c.variant,
                    pct(&c.coverage.coverage),
                    hw,
                    bias,
                    val(&c.rmse.stddev),
                    val(&c.rmse.quantile)
                );
            }
            let r = &row.reference;
            let _ = writeln!(
                s,
                "{:>6}  {:<7} bias {:.3}  stddev {:.3}  q{:.2} {:.3}",
                row.n, "psi~", r.bias[0], r.stddev[0], self.error_quantile, r.quantile[0]
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n,variant,coverage,coverage_se,half_width,half_width_se,bias_rmse,bias_rmse_se,sd_rmse,sd_rmse_se,q_rmse,q_rmse_se,radius,failures,ref_bias,ref_stddev,ref_quantile\n",
        );
        let opt = |e: &Option<Estimate>| e.map_or((String::new(), String::new()), |e| (e.value.to_string(), e.stderr.to_string()));
        for row in &self.rows {
            for c in &row.cells {
                let (hw, hwse) = opt(&c.coverage.half_width);
                let (b, bse) = opt(&c.rmse.bias);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    row.n,
                    c.variant,
                    c.coverage.coverage.value,
                    c.coverage.coverage.stderr,
                    hw,
                    hwse,
                    b,
                    bse,
                    c.rmse.stddev.value,
                    c.rmse.stddev.stderr,
                    c.rmse.quantile.value,
                    c.rmse.quantile.stderr,
                    c.coverage.radius,
                    c.coverage.failures,
                    row.reference.bias[0],
                    row.reference.stddev[0],
                    row.reference.quantile[0]
                );
            }
        }
        s
    }

    pub fn cell(&self, n: usize, variant: &str) -> Option<&Cell> {
        self.rows.iter().find(|r| r.n == n)?.cells.iter().find(|c| c.variant == variant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(testbed: Testbed) -> ExperimentPlan {
        ExperimentPlan {
            testbed,
            n_grid: vec![100, 200],
            macro_reps: 20,
            side_reps: 50,
            truth_n: 5000,
            ..ExperimentPlan::gamma()
        }
    }

    #[test]
    fn plan_validation() {
        let mut p = small(Testbed::Gamma { shape: 1.0, scale: 1.0 });
        p.truth_n = 100;
        assert!(p.validate().is_err());
        let mut p = small(Testbed::Gamma { shape: 1.0, scale: 1.0 });
        p.macro_reps = 0;
        assert!(p.validate().is_err());
        assert!(small(Testbed::Constant { value: 1.0 }).validate().is_ok());
    }

    #[test]
    fn constant_testbed_is_degenerate() {
        let plan = small(Testbed::Constant { value: 3.0 });
        let truth = approximate_truth(&plan).unwrap();
        assert_eq!(truth.value, vec![3.0]);
        let side = sampling_distribution(&plan, 100, &truth).unwrap();
        assert!(side.errors.iter().all(|&e| e == 0.0));
        for v in Variant::all() {
            let r = run_assessment_rmse(&plan, 100, &v, &side.reference).unwrap();
            assert_eq!(r.stddev.value, 0.0);
            assert_eq!(r.quantile.value, 0.0);
            assert_eq!(r.bias.map(|b| b.value), (v.method == Method::Ob1).then_some(0.0));
        }
        let tables = TableSource::new(None, 1000, 64, 1).unwrap();
        let c = run_coverage(&plan, 100, &Variant::FOB1, &truth, &tables).unwrap();
        assert_eq!(c.failures, plan.macro_reps);
    }

    #[test]
    fn single_side_rep() {
        let mut plan = small(Testbed::Gamma { shape: 2.0, scale: 1.0 });
        plan.side_reps = 1;
        let truth = approximate_truth(&plan).unwrap();
        let side = sampling_distribution(&plan, 100, &truth).unwrap();
        assert_eq!(side.errors.len(), 1);
        assert_eq!(side.reference.quantile, side.errors);
        assert_eq!(side.reference.stddev, vec![0.0]);
    }

    #[test]
    fn coin_mean_truth() {
        let plan = ExperimentPlan {
            testbed: Testbed::Gamma { shape: 1.0, scale: 1.0 },
            functional: Functional::Mean,
            truth_n: 200_000,
            ..small(Testbed::Constant { value: 0.0 })
        };
        let t = approximate_truth(&plan).unwrap();
        // Exponential(1) mean with standard error 1/sqrt(2e5)
        assert!((t.value[0] - 1.0).abs() < 4.0 / (2e5f64).sqrt());
    }

    #[test]
    fn experiment_is_deterministic_and_uses_crn() {
        let plan = small(Testbed::Gamma { shape: 1.0, scale: 100.0 });
        let tables = TableSource::new(None, 2000, 256, 5).unwrap();
        let a = run_experiment(&plan, &tables).unwrap();
        let b = run_experiment(&plan, &TableSource::new(None, 2000, 256, 5).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        let fob1 = a.cell(100, "FOB-I").unwrap();
        assert!((0.0..=1.0).contains(&fob1.coverage.coverage.value));
        assert!(a.cell(100, "FOB-II").unwrap().rmse.bias.is_none());
        // the combined run matches the single-variant entry points under CRN
        let truth = approximate_truth(&plan).unwrap();
        let side = sampling_distribution(&plan, 100, &truth).unwrap();
        let r = run_assessment_rmse(&plan, 100, &Variant::FOB1, &side.reference).unwrap();
        assert_eq!(r, fob1.rmse);
        let c = run_coverage(&plan, 100, &Variant::FOB1, &truth, &tables).unwrap();
        assert_eq!(c, fob1.coverage);
        assert!(a.to_text().contains("FOB-I"));
        assert_eq!(a.to_csv().lines().count(), 1 + 2 * 4);
    }

    #[test]
    fn extreme_alpha_gives_no_coverage() {
        let mut plan = small(Testbed::Gamma { shape: 1.0, scale: 100.0 });
        plan.alpha = 0.999;
        let truth = approximate_truth(&plan).unwrap();
        let tables = TableSource::new(None, 2000, 256, 5).unwrap();
        let c = run_coverage(&plan, 200, &Variant::FOB1, &truth, &tables).unwrap();
        assert!(c.coverage.value <= 0.1, "coverage {}", c.coverage.value);
    }

    #[test]
    fn variant_names() {
        for v in Variant::all() {
            assert_eq!(Variant::parse(&v.name()).unwrap(), v);
        }
        assert!(Variant::parse("XOB-I").is_err());
    }

    #[test]
    fn histogram_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        histogram_export(&[0.0, 0.0, 1.0, 1.0], 2, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "bin_lo,bin_hi,count\n0,0.5,2\n0.5,1,2\n");
        assert!(histogram_export(&[], 2, &p).is_err());
    }
}
