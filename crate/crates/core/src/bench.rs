//! Repeated random-split comparison of the rule list against a single tree.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{distill, summarize, PipelineConfig};
use crate::trees::{build_forest, ForestParams};

/// Minimum leaf size of the single-tree baseline.
pub const CART_MIN_LEAF: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub seed: u64,
    pub stel_error: f64,
    pub cart_error: f64,
    /// Rules in the learned list, default included.
    pub stel_rules: usize,
    pub conditions: usize,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub runs: Vec<BenchRun>,
    pub mean_stel: f64,
    pub mean_cart: f64,
    /// `(larger - lower) / larger` of the two means; 0 when both are 0.
    pub relative_difference: f64,
    /// Paired t statistic of `stel - cart` over runs.
    pub t_statistic: f64,
    /// Two-sided p-value of the paired test (`None` with fewer than two runs
    /// or zero variance).
    pub p_value: Option<f64>,
    pub elapsed: Duration,
}

/// Single unpruned tree on all rows and all features.
pub fn cart_params(p: usize, seed: u64) -> ForestParams {
    ForestParams {
        n_trees: 1,
        mtry: Some(p),
        min_leaf: Some(CART_MIN_LEAF),
        bootstrap: false,
        seed,
        ..ForestParams::default()
    }
}

pub fn run_once(d: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<BenchRun> {
    let (train, test) = d.split(cfg.train_fraction, seed)?;
    let run_cfg = PipelineConfig {
        seed,
        ..cfg.clone()
    };
    let forest = build_forest(&train, &run_cfg.forest_params(train.n_predictors()))?;
    let distilled = distill(&forest, &train, &run_cfg)?;
    let list = summarize(&distilled.pruned, &train, &run_cfg)?;
    let cart = build_forest(&train, &cart_params(train.n_predictors(), seed))?;
    Ok(BenchRun {
        seed,
        stel_error: list.evaluate(&test),
        cart_error: cart.error(&test)?,
        stel_rules: list.len(),
        conditions: distilled.conditions.len(),
    })
}

pub fn relative_difference(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == 0.0 {
        0.0
    } else {
        (hi - lo) / hi
    }
}

/// Paired t statistic and two-sided p-value of `a - b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, Option<f64>) {
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (0.0, None);
    }
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let t = if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        return (t, None);
    }
    let t = mean / (var / n as f64).sqrt();
    let p = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .ok()
        .map(|dist| 2.0 * (1.0 - dist.cdf(t.abs())));
    (t, p)
}

/// `cfg.bench_runs` splits with seeds `cfg.seed, cfg.seed + 1, ...`, run in
/// parallel.
pub fn bench(d: &Dataset, cfg: &PipelineConfig) -> Result<BenchReport> {
    if cfg.bench_runs == 0 {
        return Err(Error::param("bench_runs must be at least 1"));
    }
    let start = Instant::now();
    let runs: Vec<BenchRun> = (0..cfg.bench_runs as u64)
        .into_par_iter()
        .map(|r| run_once(d, cfg, cfg.seed.wrapping_add(r)))
        .collect::<Result<_>>()?;
    let stel: Vec<f64> = runs.iter().map(|r| r.stel_error).collect();
    let cart: Vec<f64> = runs.iter().map(|r| r.cart_error).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_stel, mean_cart) = (mean(&stel), mean(&cart));
    let (t_statistic, p_value) = paired_t(&stel, &cart);
    Ok(BenchReport {
        relative_difference: relative_difference(mean_stel, mean_cart),
        mean_stel,
        mean_cart,
        t_statistic,
        p_value,
        runs,
        elapsed: start.elapsed(),
    })
}
