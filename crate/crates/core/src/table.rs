//! Monte Carlo critical values `t_{method,p,1-alpha}` with an on-disk cache.
//!
//! Each key prefix `(method, beta, b, d, p)` is stored as one JSON document
//! `<method>_<beta>_<b>_<d>_<p>.json` holding every computed `alpha`. Numbers are
//! written with 17 significant digits. Writes go to a temporary file that is
//! renamed into place.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;

use crate::assess::Method;
use crate::error::{Error, Result};
use crate::exec;
use crate::functional::quantile_in_place;
use crate::limit::{BatchCount, LimitSpec, NormOrder, DEFAULT_GRID};
use crate::stream;

pub const DEFAULT_PATHS: usize = 100_000;
pub const MIN_PATHS: usize = 1000;
/// Sections used for the Monte Carlo standard error of a quantile.
pub const SECTIONS: usize = 20;
/// Paths per independent random stream.
const CHUNK: usize = 2048;
/// Above this many batches the `b = inf` limit is used.
pub const INF_THRESHOLD: usize = 1000;
/// Grain for rounding `m / n` to a table `beta`.
pub const BETA_GRAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableKey {
    pub method: Method,
    pub beta: f64,
    pub b: BatchCount,
    pub d: usize,
    pub p: NormOrder,
}

impl TableKey {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}_{}_{}.json", self.method.tag(), self.beta, self.b, self.d, self.p)
    }

    fn id(&self) -> String {
        format!("{}|{}|{}|{}|{}", self.method.tag(), self.beta.to_bits(), self.b, self.d, self.p)
    }

    /// Key used to look up the radius for a layout with `b` batches of size `m` out of `n`.
    ///
    /// `beta = m/n` is rounded to [`BETA_GRAIN`]; if that moves it by more than half a
    /// grain or lands on zero, the exact fraction is used. More than
    /// [`INF_THRESHOLD`] batches selects the `b = inf` limit.
    pub fn for_layout(method: Method, n: usize, m: usize, b: usize, d: usize, p: NormOrder) -> Result<Self> {
        let exact = m as f64 / n as f64;
        if !(exact > 0.0 && exact < 1.0) {
            return Err(Error::param(format!("batch fraction m/n = {exact} outside (0, 1)")));
        }
        let rounded = (exact / BETA_GRAIN).round() / (1.0 / BETA_GRAIN).round();
        let beta = if rounded <= 0.0 || rounded >= 1.0 || (rounded - exact).abs() > 0.5 * BETA_GRAIN + 1e-12 {
            exact
        } else {
            rounded
        };
        let b = if b > INF_THRESHOLD { BatchCount::Infinite } else { BatchCount::Finite(b) };
        Ok(TableKey { method, beta, b, d, p })
    }
}

/// One critical value with its generation metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValue {
    pub alpha: f64,
    pub t: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub grid: usize,
    pub seed: u64,
}

/// Norms of `n_paths` Studentized limit draws, plus how many draws had to be
/// repeated because `chi` was numerically singular.
pub struct NormSamples {
    pub norms: Vec<f64>,
    pub singular: usize,
}

/// Draw `||T||_p` for `n_paths` independent paths. Deterministic in
/// `(key without p, n_paths, grid, seed)`; independent of thread count.
pub fn sample_norms(key: &TableKey, n_paths: usize, grid: usize, seed: u64) -> Result<NormSamples> {
    let spec = LimitSpec::new(key.method, key.beta, key.b, key.d, grid)?;
    let label = format!("table|{}|{}|{}|{}", key.method.tag(), key.beta.to_bits(), key.b, key.d);
    let chunks = n_paths.div_ceil(CHUNK);
    let parts = exec::map_indexed(chunks, |c| {
        let mut rng = stream::rng(seed, &label, grid as u64, c as u64);
        let count = CHUNK.min(n_paths - c * CHUNK);
        let mut out = Vec::with_capacity(count);
        let mut singular = 0usize;
        while out.len() < count {
            match spec.sample_t(&mut rng) {
                Ok(t) => out.push(key.p.norm(&t)),
                Err(_) => singular += 1,
            }
        }
        (out, singular)
    });
    let mut norms = Vec::with_capacity(n_paths);
    let mut singular = 0;
    for (v, s) in parts {
        norms.extend(v);
        singular += s;
    }
    Ok(NormSamples { norms, singular })
}

/// Empirical `(1 - alpha)` quantile and its sectioning standard error.
pub fn quantile_with_stderr(samples: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let level = 1.0 - alpha;
    let t = quantile_in_place(&mut samples.to_vec(), level)?;
    let len = samples.len() / SECTIONS;
    if len == 0 {
        return Ok((t, f64::NAN));
    }
    let qs: Vec<f64> = samples
        .chunks_exact(len)
        .take(SECTIONS)
        .map(|s| quantile_in_place(&mut s.to_vec(), level))
        .collect::<Result<_>>()?;
    let k = qs.len() as f64;
    let mean = qs.iter().sum::<f64>() / k;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((t, (var / k).sqrt()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha = {alpha} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Deserialize)]
struct TableFile {
    method: Method,
    beta: f64,
    b: String,
    d: usize,
    p: String,
    alphas: Vec<f64>,
    t_values: Vec<f64>,
    n_paths: usize,
    grid: usize,
    seed: u64,
    mc_stderr: Vec<f64>,
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn num_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}

impl TableFile {
    fn matches(&self, key: &TableKey, n_paths: usize, grid: usize, seed: u64) -> bool {
        self.method == key.method
            && self.beta == key.beta
            && self.b == key.b.to_string()
            && self.d == key.d
            && self.p == key.p.to_string()
            && self.n_paths == n_paths
            && self.grid == grid
            && self.seed == seed
    }

    fn lookup(&self, alpha: f64) -> Option<CriticalValue> {
        let i = self.alphas.iter().position(|&a| a == alpha)?;
        Some(CriticalValue {
            alpha,
            t: self.t_values[i],
            stderr: self.mc_stderr.get(i).copied().unwrap_or(f64::NAN),
            n_paths: self.n_paths,
            grid: self.grid,
            seed: self.seed,
        })
    }

    fn to_json(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{{");
        let _ = writeln!(s, "  \"method\": \"{}\",", self.method.tag());
        let _ = writeln!(s, "  \"beta\": {},", num(self.beta));
        let _ = writeln!(s, "  \"b\": \"{}\",", self.b);
        let _ = writeln!(s, "  \"d\": {},", self.d);
        let _ = writeln!(s, "  \"p\": \"{}\",", self.p);
        let _ = writeln!(s, "  \"alphas\": [{}],", num_list(&self.alphas));
        let _ = writeln!(s, "  \"t_values\": [{}],", num_list(&self.t_values));
        let _ = writeln!(s, "  \"n_paths\": {},", self.n_paths);
        let _ = writeln!(s, "  \"grid\": {},", self.grid);
        let _ = writeln!(s, "  \"seed\": {},", self.seed);
        let _ = writeln!(s, "  \"mc_stderr\": [{}]", num_list(&self.mc_stderr));
        let _ = writeln!(s, "}}");
        s
    }
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Where critical values come from: Monte Carlo settings plus an optional cache
/// directory. Also memoizes within the process.
#[derive(Debug)]
pub struct TableSource {
    dir: Option<PathBuf>,
    n_paths: usize,
    grid: usize,
    seed: u64,
    memo: Mutex<HashMap<String, TableFile>>,
    warnings: Mutex<Vec<String>>,
    generated: Mutex<usize>,
}

impl TableSource {
    pub fn new(dir: Option<PathBuf>, n_paths: usize, grid: usize, seed: u64) -> Result<Self> {
        if n_paths < MIN_PATHS {
            return Err(Error::param(format!("n_paths = {n_paths} below the minimum {MIN_PATHS}")));
        }
        if grid < 2 {
            return Err(Error::param(format!("grid size {grid} must be at least 2")));
        }
        Ok(TableSource {
            dir,
            n_paths,
            grid,
            seed,
            memo: Mutex::new(HashMap::new()),
            warnings: Mutex::new(Vec::new()),
            generated: Mutex::new(0),
        })
    }

    /// In-memory source with default path count and grid.
    pub fn in_memory(seed: u64) -> Self {
        Self::new(None, DEFAULT_PATHS, DEFAULT_GRID, seed).expect("defaults are valid")
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Non-fatal cache I/O problems seen so far.
    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("poisoned").clone()
    }

    /// Number of Monte Carlo generations performed (cache misses).
    pub fn generated(&self) -> usize {
        *self.generated.lock().expect("poisoned")
    }

    fn warn(&self, msg: String) {
        self.warnings.lock().expect("poisoned").push(msg);
    }

    fn read_cache(&self, key: &TableKey) -> Option<TableFile> {
        let path = self.dir.as_ref()?.join(key.file_name());
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                self.warn(format!("cannot read {}: {e}", path.display()));
                return None;
            }
        };
        match serde_json::from_str::<TableFile>(&text) {
            Ok(f) => Some(f),
            Err(e) => {
                self.warn(format!("ignoring malformed cache file {}: {e}", path.display()));
                None
            }
        }
    }

    pub fn critical_value(&self, key: &TableKey, alpha: f64) -> Result<CriticalValue> {
        Ok(self.critical_values(key, &[alpha])?[0])
    }

    /// Critical values for every `alpha`, all from one shared set of draws.
    pub fn critical_values(&self, key: &TableKey, alphas: &[f64]) -> Result<Vec<CriticalValue>> {
        for &a in alphas {
            check_alpha(a)?;
        }
        if !(key.beta > 0.0 && key.beta < 1.0) {
            return Err(Error::param(format!("beta = {} outside (0, 1)", key.beta)));
        }
        let id = key.id();
        let mut memo = self.memo.lock().expect("poisoned");
        let existing = memo
            .get(&id)
            .cloned()
            .or_else(|| self.read_cache(key))
            .filter(|f| f.matches(key, self.n_paths, self.grid, self.seed));
        if let Some(f) = &existing {
            if let Some(found) = alphas.iter().map(|&a| f.lookup(a)).collect::<Option<Vec<_>>>() {
                memo.insert(id, f.clone());
                return Ok(found);
            }
        }
        let mut all: Vec<f64> = existing.map(|f| f.alphas).unwrap_or_default();
        for &a in alphas {
            if !all.contains(&a) {
                all.push(a);
            }
        }
        all.sort_by(|a, b| b.total_cmp(a));
        let samples = sample_norms(key, self.n_paths, self.grid, self.seed)?;
        *self.generated.lock().expect("poisoned") += 1;
        let (t_values, mc_stderr): (Vec<f64>, Vec<f64>) = all
            .iter()
            .map(|&a| quantile_with_stderr(&samples.norms, a))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let file = TableFile {
            method: key.method,
            beta: key.beta,
            b: key.b.to_string(),
            d: key.d,
            p: key.p.to_string(),
            alphas: all,
            t_values,
            n_paths: self.n_paths,
            grid: self.grid,
            seed: self.seed,
            mc_stderr,
        };
        if let Some(dir) = &self.dir {
            let path = dir.join(key.file_name());
            if let Err(e) = write_atomic(&path, &file.to_json()) {
                self.warn(format!("cannot write {}: {e}", path.display()));
            }
        }
        let found = alphas
            .iter()
            .map(|&a| file.lookup(a).expect("alpha just computed"))
            .collect();
        memo.insert(id, file);
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(method: Method, beta: f64, b: BatchCount) -> TableKey {
        TableKey { method, beta, b, d: 1, p: NormOrder::L2 }
    }

    #[test]
    fn layout_keys() {
        let k = TableKey::for_layout(Method::Ob1, 5000, 1000, 4001, 1, NormOrder::L2).unwrap();
        assert_eq!(k.beta, 0.2);
        assert_eq!(k.b, BatchCount::Infinite);
        let k = TableKey::for_layout(Method::Ob2, 500, 100, 5, 1, NormOrder::L2).unwrap();
        assert_eq!((k.beta, k.b), (0.2, BatchCount::Finite(5)));
        let k = TableKey::for_layout(Method::Ob2, 1000, 1000, 1, 1, NormOrder::L2);
        assert!(k.is_err());
        // 71/5000 rounds to 0.01
        let k = TableKey::for_layout(Method::Ob1, 5000, 71, 4930, 1, NormOrder::L2).unwrap();
        assert_eq!(k.beta, 0.01);
        // 3/1000 would round to zero: keep the exact fraction
        let k = TableKey::for_layout(Method::Ob1, 1000, 3, 998, 1, NormOrder::L2).unwrap();
        assert_eq!(k.beta, 0.003);
        assert_eq!(key(Method::Ob2, 0.2, BatchCount::Infinite).file_name(), "ob2_0.2_inf_1_2.json");
    }

    #[test]
    fn monotone_in_alpha_and_deterministic() {
        let src = TableSource::new(None, 4000, 256, 11).unwrap();
        let k = key(Method::Ob1, 0.25, BatchCount::Finite(4));
        let v = src.critical_values(&k, &[0.10, 0.05, 0.01]).unwrap();
        assert!(v[0].t <= v[1].t && v[1].t <= v[2].t);
        assert!(v.iter().all(|c| c.t > 0.0 && c.stderr > 0.0));
        let again = TableSource::new(None, 4000, 256, 11).unwrap().critical_values(&k, &[0.05]).unwrap();
        assert_eq!(again[0].t.to_bits(), v[1].t.to_bits());
        assert!(src.critical_value(&k, 1.5).is_err());
        assert!(TableSource::new(None, 10, 256, 1).is_err());
    }

    #[test]
    fn cache_round_trip_and_hit() {
        let dir = tempfile::tempdir().unwrap();
        let k = key(Method::Ob2, 0.2, BatchCount::Finite(5));
        let first = TableSource::new(Some(dir.path().into()), 2000, 256, 3).unwrap();
        let a = first.critical_value(&k, 0.05).unwrap();
        assert_eq!(first.generated(), 1);
        let path = dir.path().join("ob2_0.2_5_1_2.json");
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"beta\": 2.0000000000000001e-1"));

        let second = TableSource::new(Some(dir.path().into()), 2000, 256, 3).unwrap();
        let b = second.critical_value(&k, 0.05).unwrap();
        assert_eq!(second.generated(), 0);
        assert_eq!(a, b);

        // a new alpha regenerates from the same draws and keeps the old entry
        let c = second.critical_value(&k, 0.10).unwrap();
        assert_eq!(second.generated(), 1);
        let third = TableSource::new(Some(dir.path().into()), 2000, 256, 3).unwrap();
        assert_eq!(third.critical_value(&k, 0.05).unwrap(), a);
        assert_eq!(third.critical_value(&k, 0.10).unwrap(), c);
        assert_eq!(third.generated(), 0);

        // different seed: mismatch triggers fresh generation
        let other = TableSource::new(Some(dir.path().into()), 2000, 256, 4).unwrap();
        other.critical_value(&k, 0.05).unwrap();
        assert_eq!(other.generated(), 1);
    }

    #[test]
    fn unwritable_cache_is_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let src = TableSource::new(Some(blocker.join("sub")), 1000, 64, 1).unwrap();
        let v = src.critical_value(&key(Method::Ob1, 0.5, BatchCount::Finite(2)), 0.05).unwrap();
        assert!(v.t > 0.0);
        assert!(src.warnings().iter().any(|w| w.starts_with("cannot write")));
    }
}
