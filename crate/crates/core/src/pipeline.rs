//! End-to-end configuration and the standard distillation pipeline:
//! train, extract, dedup, assign, prune, then select or summarize.

use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interactions::MineParams;
use crate::prune::{prune_rules, DecayMode, PruneParams};
use crate::rules::{
    assign_outcomes, dedup_conditions, dedup_rules, extract_conditions, Condition, Rule,
};
use crate::select::{select_conditions, SelectionParams};
use crate::stel::{build_stel, RuleList};
use crate::trees::{build_forest, Ensemble, ForestParams};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub forest: ForestParams,
    /// Uniform penalty coefficient for a regularized forest; `None` trains
    /// an ordinary forest.
    pub coef_reg: Option<f64>,
    /// Longest extracted condition; `None` extracts full paths.
    pub max_depth: Option<usize>,
    /// Sample this many conditions (uniformly, seeded) when more are extracted.
    pub cap: Option<usize>,
    pub prune: PruneParams,
    pub select: SelectionParams,
    pub mine: MineParams,
    pub numeric_as_variable: bool,
    pub stel_threshold: f64,
    pub seed: u64,
    pub bench_runs: usize,
    pub train_fraction: f64,
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            forest: ForestParams::default(),
            coef_reg: None,
            max_depth: Some(6),
            cap: Some(2000),
            prune: PruneParams::default(),
            select: SelectionParams::default(),
            mine: MineParams::default(),
            numeric_as_variable: false,
            stel_threshold: 0.01,
            seed: 1,
            bench_runs: 10,
            train_fraction: 2.0 / 3.0,
            data: None,
            output: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::param(format!("invalid value `{value}` for `{key}`")))
}

/// `-1` or `none` mean "no limit".
fn parse_limit(key: &str, value: &str) -> Result<Option<usize>> {
    match value {
        "-1" | "none" => Ok(None),
        _ => parse(key, value).map(Some),
    }
}

impl PipelineConfig {
    /// Keys accepted by [`PipelineConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "n_trees",
        "mtry",
        "min_leaf",
        "max_nodes",
        "bootstrap",
        "coef_reg",
        "max_depth",
        "cap",
        "prune_mode",
        "prune_threshold",
        "prune_s",
        "lambda0",
        "gamma",
        "beta",
        "select_trees",
        "rescore",
        "min_sup",
        "min_conf",
        "max_len",
        "numeric_as_variable",
        "stel_threshold",
        "seed",
        "bench_runs",
        "train_fraction",
        "data",
        "output",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_trees" => self.forest.n_trees = parse(key, value)?,
            "mtry" => self.forest.mtry = parse_limit(key, value)?,
            "min_leaf" => self.forest.min_leaf = parse_limit(key, value)?,
            "max_nodes" => self.forest.max_nodes = parse_limit(key, value)?,
            "bootstrap" => self.forest.bootstrap = parse(key, value)?,
            "coef_reg" => {
                self.coef_reg = match value {
                    "none" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "max_depth" => self.max_depth = parse_limit(key, value)?,
            "cap" => self.cap = parse_limit(key, value)?,
            "prune_mode" => {
                self.prune.mode = match value {
                    "relative" => DecayMode::Relative,
                    "absolute" => DecayMode::Absolute,
                    _ => return Err(Error::param(format!("unknown prune_mode `{value}`"))),
                }
            }
            "prune_threshold" => self.prune.threshold = parse(key, value)?,
            "prune_s" => self.prune.s = parse(key, value)?,
            "lambda0" => self.select.lambda0 = parse(key, value)?,
            "gamma" => self.select.gamma = parse(key, value)?,
            "beta" => self.select.beta = parse(key, value)?,
            "select_trees" => self.select.forest.n_trees = parse(key, value)?,
            "rescore" => self.select.rescore = parse(key, value)?,
            "min_sup" => self.mine.min_sup = parse(key, value)?,
            "min_conf" => self.mine.min_conf = parse(key, value)?,
            "max_len" => self.mine.max_len = parse(key, value)?,
            "numeric_as_variable" => self.numeric_as_variable = parse(key, value)?,
            "stel_threshold" => self.stel_threshold = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "bench_runs" => self.bench_runs = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::param(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key=value` lines. Blank lines and lines starting with `#` are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::param(format!("config line {}: expected key=value", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::param(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Forest parameters with the config seed and penalty applied.
    pub fn forest_params(&self, p: usize) -> ForestParams {
        let mut f = self.forest.clone();
        f.seed = self.seed;
        if let Some(coef) = self.coef_reg {
            f = f.with_uniform_penalty(coef, p);
        }
        f
    }

    /// Selection parameters seeded from the config seed.
    pub fn select_params(&self) -> SelectionParams {
        let mut s = self.select.clone();
        s.forest.seed = self.seed;
        s
    }
}

pub fn train(d: &Dataset, cfg: &PipelineConfig) -> Result<Ensemble> {
    build_forest(d, &cfg.forest_params(d.n_predictors()))
}

/// Uniform sample of at most `cap` conditions, in their original order.
pub fn cap_conditions(conditions: Vec<Condition>, cap: Option<usize>, seed: u64) -> Vec<Condition> {
    match cap {
        Some(cap) if conditions.len() > cap => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, conditions.len(), cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| conditions[i].clone()).collect()
        }
        _ => conditions,
    }
}

/// Intermediate products of [`distill`].
#[derive(Clone, Debug)]
pub struct Distilled {
    /// Conditions as extracted (before capping and dedup).
    pub extracted: usize,
    /// Unique conditions after capping.
    pub conditions: Vec<Condition>,
    /// Conditions with outcomes assigned on the training data.
    pub rules: Vec<Rule>,
    /// Pruned rules, deduplicated.
    pub pruned: Vec<Rule>,
}

pub fn distill(ensemble: &Ensemble, d: &Dataset, cfg: &PipelineConfig) -> Result<Distilled> {
    let set = extract_conditions(ensemble, cfg.max_depth)?;
    let extracted = set.conditions.len();
    let capped = cap_conditions(set.conditions, cfg.cap, cfg.seed);
    let conditions = dedup_conditions(&capped);
    let (rules, _) = assign_outcomes(&conditions, d);
    let pruned = dedup_rules(&prune_rules(&rules, d, &cfg.prune)?);
    Ok(Distilled {
        extracted,
        conditions,
        rules,
        pruned,
    })
}

/// Selected rules (measured on `d`) paired with their scores.
pub fn select(rules: &[Rule], d: &Dataset, cfg: &PipelineConfig) -> Result<Vec<(Rule, f64)>> {
    let conditions: Vec<Condition> = rules.iter().map(|r| r.condition.clone()).collect();
    let sel = select_conditions(&conditions, d, &cfg.select_params())?;
    sel.indices
        .iter()
        .zip(sel.scores)
        .map(|(&i, score)| Ok((rules[i].clone().measured(d)?, score)))
        .collect()
}

pub fn summarize(rules: &[Rule], d: &Dataset, cfg: &PipelineConfig) -> Result<RuleList> {
    build_stel(rules, d, cfg.stel_threshold)
}
