//! Command-line front end for `batchuq`.

pub mod analysis;
pub mod ingest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use batchuq::harness::{self, ExperimentPlan, Variant};
use batchuq::table::{DEFAULT_PATHS, MIN_PATHS};
use batchuq::limit::DEFAULT_GRID;
use batchuq::testbeds::InventoryConfig;
use batchuq::{BatchCount, Error, Functional, Method, NormOrder, SizePolicy, TableKey, TableSource};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use analysis::AnalysisRequest;

#[derive(Debug, Parser)]
#[command(name = "batchuq", version, about = "Batching-based uncertainty quantification for simulation output")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or look up critical values of the limiting Studentized statistic.
    Table(TableArgs),
    /// Analyse a delimited data file.
    Analyze(AnalyzeArgs),
    /// Run the macro-replication study on a built-in testbed.
    Experiment(ExperimentArgs),
    /// Histogram of one column of a delimited data file.
    Hist(HistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct TableOpts {
    /// Cache directory for critical-value files.
    #[arg(long, env = "BATCHUQ_TABLE_DIR", default_value = "tables")]
    pub table_dir: PathBuf,
    /// Keep tables in memory only.
    #[arg(long)]
    pub no_cache: bool,
    /// Monte Carlo paths per table.
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    pub paths: usize,
    /// Time-grid resolution of the Wiener paths.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
}

impl TableOpts {
    pub fn source(&self, seed: u64) -> Result<TableSource> {
        if self.paths < MIN_PATHS {
            return Err(Error::Parameter(format!("--paths must be at least {MIN_PATHS}")).into());
        }
        let dir = (!self.no_cache).then(|| self.table_dir.clone());
        Ok(TableSource::new(dir, self.paths, self.grid, seed)?)
    }
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// ob1 and/or ob2, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub method: Vec<String>,
    /// Limiting batch fractions in (0, 1).
    #[arg(long, value_delimiter = ',', required = true)]
    pub beta: Vec<f64>,
    /// Batch counts: integers or `inf`.
    #[arg(long, value_delimiter = ',', default_value = "inf")]
    pub b: Vec<String>,
    /// Dimensions.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub d: Vec<usize>,
    /// Norm orders: 1, 2 or inf.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub p: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(flatten)]
    pub tables: TableOpts,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Data file: one observation per row, comma- or whitespace-delimited.
    pub input: PathBuf,
    /// Columns to use, by 1-based index or header name (default: all).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// `mean` or `quantile:<levels>`.
    #[arg(long, default_value = "quantile:0.9")]
    pub functional: String,
    /// Batch size for confidence regions: `sqrt`, `frac:<beta>` or `m:<size>`.
    #[arg(long, default_value = "frac:0.2")]
    pub ci_size: String,
    /// Batch size for bias, standard deviation and error-quantile estimates.
    #[arg(long, default_value = "sqrt")]
    pub psi_size: String,
    #[arg(long, value_delimiter = ',', default_value = "FOB-I,NOB-I,FOB-II,NOB-II")]
    pub variants: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "2")]
    pub p: String,
    /// Level of the estimated error quantile.
    #[arg(long, default_value_t = 0.8)]
    pub error_quantile: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Print the canonical form of the request and exit.
    #[arg(long)]
    pub print_request: bool,
    #[command(flatten)]
    pub tables: TableOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestbedName {
    Gamma,
    Inventory,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub testbed: TestbedName,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,5000")]
    pub n: Vec<usize>,
    /// Macro-replications K.
    #[arg(long, default_value_t = 1000)]
    pub macroreps: usize,
    /// Side-experiment replications K'.
    #[arg(long, default_value_t = 100_000)]
    pub side_reps: usize,
    /// Run length for the ground-truth estimate.
    #[arg(long, default_value_t = 1_000_000)]
    pub truth_n: usize,
    #[arg(long, value_delimiter = ',', default_value = "FOB-I,NOB-I,FOB-II,NOB-II")]
    pub variants: Vec<String>,
    /// Override the testbed's default functional.
    #[arg(long)]
    pub functional: Option<String>,
    #[arg(long, default_value = "frac:0.2")]
    pub ci_size: String,
    #[arg(long, default_value = "sqrt")]
    pub psi_size: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "2")]
    pub p: String,
    #[arg(long, default_value_t = 0.8)]
    pub error_quantile: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Draw independent data for each variant instead of sharing it.
    #[arg(long)]
    pub no_crn: bool,
    /// Inventory configuration as JSON (fields of the default configuration).
    #[arg(long)]
    pub inventory_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Directory for histogram files of fixed-seed replications.
    #[arg(long)]
    pub hist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Seeds of the replications written to --hist-dir.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub figure_seeds: Vec<u64>,
    #[command(flatten)]
    pub tables: TableOpts,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    pub input: PathBuf,
    /// Column by 1-based index or header name.
    #[arg(long, default_value = "1")]
    pub column: String,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Bin range as `lo,hi` (default: sample range).
    #[arg(long, value_delimiter = ',')]
    pub range: Option<Vec<f64>>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Process exit status for an error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parameter(_)) | Some(Error::Unsupported(_)) => 2,
        Some(Error::Data(_)) | Some(Error::Io(_)) | Some(Error::Dimension { .. }) | Some(Error::Index { .. }) => 3,
        Some(Error::DegenerateDesign { .. })
        | Some(Error::DegenerateLayout(_))
        | Some(Error::Numerical(_))
        | Some(Error::Functional(_)) => 4,
        None => 3,
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn report_warnings(tables: &TableSource) {
    for w in tables.warnings() {
        eprintln!("warning: {w}");
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Parameter("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring thread pool")?;
    }
    match cli.command {
        Command::Table(a) => cmd_table(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Hist(a) => cmd_hist(&a),
    }
}

#[derive(Serialize)]
struct TableRow {
    method: Method,
    beta: f64,
    b: String,
    d: usize,
    p: String,
    alpha: f64,
    t: f64,
    stderr: f64,
    n_paths: usize,
    grid: usize,
    seed: u64,
}

pub fn cmd_table(a: &TableArgs) -> Result<()> {
    let methods = a.method.iter().map(|m| m.parse()).collect::<batchuq::Result<Vec<Method>>>()?;
    let counts = a.b.iter().map(|b| b.parse()).collect::<batchuq::Result<Vec<BatchCount>>>()?;
    let norms = a.p.iter().map(|p| p.parse()).collect::<batchuq::Result<Vec<NormOrder>>>()?;
    for &alpha in &a.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")).into());
        }
    }
    if a.d.contains(&0) {
        return Err(Error::Parameter("dimension must be at least 1".into()).into());
    }
    let tables = a.tables.source(a.seed)?;
    let mut rows = Vec::new();
    for &method in &methods {
        for &beta in &a.beta {
            for &b in &counts {
                for &d in &a.d {
                    for &p in &norms {
                        let key = TableKey { method, beta, b, d, p };
                        let before = tables.generated();
                        let cvs = tables.critical_values(&key, &a.alpha)?;
                        let status = if tables.generated() > before { "generated" } else { "cache hit" };
                        eprintln!("{}: {status}", key.file_name());
                        for cv in cvs {
                            rows.push(TableRow {
                                method,
                                beta,
                                b: b.to_string(),
                                d,
                                p: p.to_string(),
                                alpha: cv.alpha,
                                t: cv.t,
                                stderr: cv.stderr,
                                n_paths: cv.n_paths,
                                grid: cv.grid,
                                seed: cv.seed,
                            });
                        }
                    }
                }
            }
        }
    }
    report_warnings(&tables);
    let out = match a.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from("method,beta,b,d,p,alpha,t,stderr,n_paths,grid,seed\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.method.tag(),
                    r.beta,
                    r.b,
                    r.d,
                    r.p,
                    r.alpha,
                    r.t,
                    r.stderr,
                    r.n_paths,
                    r.grid,
                    r.seed
                );
            }
            s
        }
        Format::Text => {
            let mut s = format!(
                "{:<6} {:>6} {:>5} {:>3} {:>4} {:>7} {:>10} {:>9}\n",
                "method", "beta", "b", "d", "p", "alpha", "t", "stderr"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:<6} {:>6} {:>5} {:>3} {:>4} {:>7} {:>10.4} {:>9.4}",
                    r.method.tag(),
                    r.beta,
                    r.b,
                    r.d,
                    r.p,
                    r.alpha,
                    r.t,
                    r.stderr
                );
            }
            s
        }
    };
    emit(None, &out)
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let req = AnalysisRequest {
        input: a.input.clone(),
        columns: a.columns.clone(),
        functional: a.functional.clone(),
        ci_size: a.ci_size.clone(),
        psi_size: a.psi_size.clone(),
        variants: a.variants.clone(),
        alpha: a.alpha,
        p: a.p.clone(),
        error_quantile: a.error_quantile,
        seed: a.seed,
    }
    .normalize()?;
    if a.print_request {
        return emit(a.output.as_deref(), &format!("{}\n", req.canonical()?));
    }
    let tables = a.tables.source(a.seed)?;
    let report = analysis::analyze(&req, &tables);
    report_warnings(&tables);
    let report = report?;
    let out = match a.format {
        Format::Json => json(&report),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(a.output.as_deref(), &out)
}

fn experiment_plan(a: &ExperimentArgs) -> Result<ExperimentPlan> {
    let mut plan = match a.testbed {
        TestbedName::Gamma => ExperimentPlan::gamma(),
        TestbedName::Inventory => ExperimentPlan::inventory(),
    };
    if let Some(path) = &a.inventory_config {
        if a.testbed != TestbedName::Inventory {
            return Err(Error::Parameter("--inventory-config applies to the inventory testbed only".into()).into());
        }
        let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let cfg: InventoryConfig =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad inventory config: {e}")))?;
        cfg.validate()?;
        plan.testbed = batchuq::testbeds::Testbed::Inventory(cfg);
    }
    if let Some(f) = &a.functional {
        plan.functional = f.parse::<Functional>()?;
    }
    plan.n_grid = a.n.clone();
    plan.macro_reps = a.macroreps;
    plan.side_reps = a.side_reps;
    plan.truth_n = a.truth_n;
    plan.variants = a.variants.iter().map(|v| Variant::parse(v)).collect::<batchuq::Result<_>>()?;
    plan.ci_size = a.ci_size.parse::<SizePolicy>()?;
    plan.psi_size = a.psi_size.parse::<SizePolicy>()?;
    plan.alpha = a.alpha;
    plan.p = a.p.parse()?;
    plan.error_quantile = a.error_quantile;
    plan.seed = a.seed;
    plan.crn = !a.no_crn;
    plan.validate()?;
    Ok(plan)
}

pub fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let plan = experiment_plan(a)?;
    let tables = a.tables.source(a.seed)?;
    let report = harness::run_experiment(&plan, &tables);
    report_warnings(&tables);
    let report = report?;
    if let Some(dir) = &a.hist_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for &n in &plan.n_grid {
            let side = harness::sampling_distribution(&plan, n, &report.truth)?;
            for &s in &a.figure_seeds {
                let panel = harness::figure_panel(&plan, n, plan.psi_size, s, &side, a.bins)?;
                for (tag, h) in [("ob1", &panel.ob1), ("ob2", &panel.ob2), ("sampling", &panel.sampling)] {
                    let path = dir.join(format!("{}_n{n}_seed{s}_{tag}.csv", plan.testbed.name()));
                    fs::write(&path, h.to_csv()).with_context(|| format!("writing {}", path.display()))?;
                }
            }
        }
    }
    let out = match a.format {
        Format::Json => json(&report),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(a.output.as_deref(), &out)
}

pub fn cmd_hist(a: &HistArgs) -> Result<()> {
    let table = ingest::read_delimited(&a.input)?;
    let series = table.select(std::slice::from_ref(&a.column))?;
    let range = match a.range.as_deref() {
        None => None,
        Some(&[lo, hi]) => Some((lo, hi)),
        Some(_) => return Err(Error::Parameter("--range takes exactly two values lo,hi".into()).into()),
    };
    let h = batchuq::ks::Histogram::build(series.as_flat(), a.bins, range)?;
    emit(a.output.as_deref(), &h.to_csv())
}
