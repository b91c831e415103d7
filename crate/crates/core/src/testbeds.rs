//! Output generators: iid gamma observations and an (s, S) inventory system
//! producing serially dependent daily costs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SampleSeries;

pub fn gen_gamma_iid<R: Rng + ?Sized>(n: usize, shape: f64, scale: f64, rng: &mut R) -> Result<SampleSeries> {
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    let dist = Gamma::new(shape, scale)
        .map_err(|e| Error::param(format!("gamma(shape = {shape}, scale = {scale}): {e}")))?;
    SampleSeries::univariate((0..n).map(|_| dist.sample(rng)).collect())
}

/// Asymptotic variance `gamma (1 - gamma) / f(q)^2` of `sqrt(n)` times the
/// error of an empirical `gamma`-quantile, `f(q)` the density at the quantile.
pub fn quantile_clt_variance(gamma: f64, pdf_at_quantile: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param(format!("quantile level {gamma} outside (0, 1)")));
    }
    if !(pdf_at_quantile > 0.0) || !pdf_at_quantile.is_finite() {
        return Err(Error::param(format!("density {pdf_at_quantile} at the quantile must be positive")));
    }
    Ok(gamma * (1.0 - gamma) / (pdf_at_quantile * pdf_at_quantile))
}

/// Daily demand distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Demand {
    Gamma { shape: f64, scale: f64 },
    Constant { value: f64 },
}

impl Demand {
    /// Gamma demand matching a mean and variance: `shape = mean^2 / var`, `scale = var / mean`.
    pub fn gamma_moments(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0 && variance > 0.0) {
            return Err(Error::param("demand mean and variance must be positive"));
        }
        Ok(Demand::Gamma { shape: mean * mean / variance, scale: variance / mean })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryCosts {
    pub backorder_per_unit: f64,
    pub holding_per_unit_day: f64,
    pub fixed_per_order: f64,
    pub variable_per_unit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryConfig {
    /// Reorder level.
    pub s: f64,
    /// Order-up-to level.
    pub big_s: f64,
    pub demand: Demand,
    /// Mean of the Poisson lead time in days.
    pub leadtime_mean: f64,
    pub costs: InventoryCosts,
    pub warmup: usize,
    pub horizon: usize,
    pub initial_inventory: f64,
}

impl Default for InventoryConfig {
    /// Demand mean 100 and variance 10000, Poisson(6) lead times, unit costs
    /// b = 4, h = 1, f = 36, v = 2 and a 1000-day warm-up. The (s, S) pair
    /// (1000, 2000) is a placeholder.
    fn default() -> Self {
        InventoryConfig {
            s: 1000.0,
            big_s: 2000.0,
            demand: Demand::Gamma { shape: 1.0, scale: 100.0 },
            leadtime_mean: 6.0,
            costs: InventoryCosts {
                backorder_per_unit: 4.0,
                holding_per_unit_day: 1.0,
                fixed_per_order: 36.0,
                variable_per_unit: 2.0,
            },
            warmup: 1000,
            horizon: 1000,
            initial_inventory: 2000.0,
        }
    }
}

impl InventoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s < self.big_s) {
            return Err(Error::param(format!("need s < S, got s = {} and S = {}", self.s, self.big_s)));
        }
        let c = &self.costs;
        let costs = [c.backorder_per_unit, c.holding_per_unit_day, c.fixed_per_order, c.variable_per_unit];
        if costs.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::param("inventory costs must be finite and non-negative"));
        }
        if self.horizon < 1 {
            return Err(Error::param("horizon must be at least 1 day"));
        }
        if !(self.leadtime_mean >= 0.0) || !self.leadtime_mean.is_finite() {
            return Err(Error::param("lead-time mean must be non-negative"));
        }
        match self.demand {
            Demand::Gamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                Err(Error::param("gamma demand needs positive shape and scale"))
            }
            Demand::Constant { value } if !(value >= 0.0) => Err(Error::param("constant demand must be non-negative")),
            _ => Ok(()),
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Simulate the (s, S) system and return `horizon` daily costs after warm-up.
///
/// Each day: outstanding orders due that day arrive; demand is drawn and
/// subtracted (backlog allowed); the end-of-day level `W` is recorded and
/// charged `f 1(W<=s) + v (S-W) 1(W<=s) + h W 1(W>0) - b W 1(W<0)`; if `W <= s`
/// an order of `S - W` is placed, arriving at the start of day `j + L + 1`
/// with `L` Poisson. Several orders may be outstanding at once.
pub fn simulate_inventory<R: Rng + ?Sized>(cfg: &InventoryConfig, rng: &mut R) -> Result<SampleSeries> {
    cfg.validate()?;
    let gamma = match cfg.demand {
        Demand::Gamma { shape, scale } => {
            Some(Gamma::new(shape, scale).map_err(|e| Error::param(format!("demand: {e}")))?)
        }
        Demand::Constant { .. } => None,
    };
    let poisson = if cfg.leadtime_mean > 0.0 {
        Some(Poisson::new(cfg.leadtime_mean).map_err(|e| Error::param(format!("lead time: {e}")))?)
    } else {
        None
    };
    let c = &cfg.costs;
    let mut pipeline: BTreeMap<usize, f64> = BTreeMap::new();
    let mut level = cfg.initial_inventory;
    let total = cfg.warmup + cfg.horizon;
    let mut out = Vec::with_capacity(cfg.horizon);
    for day in 1..=total {
        if let Some(q) = pipeline.remove(&day) {
            level += q;
        }
        let demand = match (&gamma, cfg.demand) {
            (Some(g), _) => g.sample(rng),
            (None, Demand::Constant { value }) => value,
            (None, _) => unreachable!("gamma demand always has a sampler"),
        };
        level -= demand;
        let w = level;
        let mut cost = 0.0;
        if w <= cfg.s {
            cost += c.fixed_per_order + c.variable_per_unit * (cfg.big_s - w);
            let lead = poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
            *pipeline.entry(day + lead + 1).or_insert(0.0) += cfg.big_s - w;
        }
        if w > 0.0 {
            cost += c.holding_per_unit_day * w;
        } else if w < 0.0 {
            cost -= c.backorder_per_unit * w;
        }
        if day > cfg.warmup {
            out.push(cost);
        }
    }
    SampleSeries::univariate(out)
}

/// Data source for experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Testbed {
    Gamma { shape: f64, scale: f64 },
    Inventory(InventoryConfig),
    /// Every observation equals `value`.
    Constant { value: f64 },
}

impl Testbed {
    pub fn name(&self) -> &'static str {
        match self {
            Testbed::Gamma { .. } => "gamma",
            Testbed::Inventory(_) => "inventory",
            Testbed::Constant { .. } => "constant",
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleSeries> {
        match self {
            Testbed::Gamma { shape, scale } => gen_gamma_iid(n, *shape, *scale, rng),
            Testbed::Inventory(cfg) => simulate_inventory(&cfg.with_horizon(n), rng),
            Testbed::Constant { value } => SampleSeries::univariate(vec![*value; n.max(1)]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream;

    fn deterministic() -> InventoryConfig {
        InventoryConfig {
            s: 0.0,
            big_s: 20.0,
            demand: Demand::Constant { value: 10.0 },
            leadtime_mean: 0.0,
            costs: InventoryCosts {
                backorder_per_unit: 4.0,
                holding_per_unit_day: 1.0,
                fixed_per_order: 36.0,
                variable_per_unit: 2.0,
            },
            warmup: 0,
            horizon: 5,
            initial_inventory: 20.0,
        }
    }

    #[test]
    fn hand_traced_costs() {
        // day 1: 20 -> 10, hold 10
        // day 2: 10 -> 0 <= s: 36 + 2 * 20, order 20 due day 3
        // day 3: 0 + 20 -> 10 ... period two
        let s = simulate_inventory(&deterministic(), &mut stream::rng(0, "t", 0, 0)).unwrap();
        assert_eq!(s.as_flat(), &[10.0, 76.0, 10.0, 76.0, 10.0]);
        let mut late = deterministic();
        late.warmup = 2;
        late.horizon = 2;
        let s = simulate_inventory(&late, &mut stream::rng(0, "t", 0, 0)).unwrap();
        assert_eq!(s.as_flat(), &[10.0, 76.0]);
    }

    #[test]
    fn static_system() {
        let mut cfg = deterministic();
        cfg.demand = Demand::Constant { value: 0.0 };
        cfg.s = 5.0;
        let s = simulate_inventory(&cfg, &mut stream::rng(0, "t", 0, 0)).unwrap();
        assert!(s.as_flat().iter().all(|&c| c == 20.0));
    }

    #[test]
    fn backorders_are_charged() {
        let mut cfg = deterministic();
        cfg.demand = Demand::Constant { value: 30.0 };
        cfg.horizon = 1;
        // W = -10: order cost 36 + 2 * 30 plus backorder 4 * 10
        let s = simulate_inventory(&cfg, &mut stream::rng(0, "t", 0, 0)).unwrap();
        assert_eq!(s.as_flat(), &[136.0]);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = deterministic();
        cfg.s = 30.0;
        assert!(simulate_inventory(&cfg, &mut stream::rng(0, "t", 0, 0)).is_err());
        let mut cfg = deterministic();
        cfg.costs.holding_per_unit_day = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = deterministic();
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
        assert!(gen_gamma_iid(10, 0.0, 1.0, &mut stream::rng(0, "t", 0, 0)).is_err());
        assert!(gen_gamma_iid(0, 1.0, 1.0, &mut stream::rng(0, "t", 0, 0)).is_err());
    }

    #[test]
    fn clt_variance() {
        assert_eq!(quantile_clt_variance(0.5, 1.0).unwrap(), 0.25);
        // Exponential(scale 100) at its 0.99-quantile: f = 0.01 / 100 = 1e-4
        let v = quantile_clt_variance(0.99, 1e-4).unwrap();
        assert!((v - 9.9e5).abs() < 1e-6);
        assert!(quantile_clt_variance(0.5, 0.0).is_err());
        assert!(quantile_clt_variance(1.0, 1.0).is_err());
    }

    #[test]
    fn moment_matching() {
        assert_eq!(
            Demand::gamma_moments(100.0, 10_000.0).unwrap(),
            Demand::Gamma { shape: 1.0, scale: 100.0 }
        );
        assert_eq!(InventoryConfig::default().demand, Demand::gamma_moments(100.0, 1e4).unwrap());
    }

    #[test]
    fn seeded_runs_are_reproducible_and_nonnegative() {
        let cfg = InventoryConfig::default().with_horizon(3000);
        let a = simulate_inventory(&cfg, &mut stream::rng(9, "inv", 0, 0)).unwrap();
        let b = simulate_inventory(&cfg, &mut stream::rng(9, "inv", 0, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.as_flat().iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn scenario_json_round_trip() {
        let t = Testbed::Inventory(InventoryConfig::default());
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<Testbed>(&json).unwrap(), t);
        let g: Testbed = serde_json::from_str(r#"{"kind":"gamma","shape":1.0,"scale":100.0}"#).unwrap();
        assert_eq!(g, Testbed::Gamma { shape: 1.0, scale: 100.0 });
    }
}
