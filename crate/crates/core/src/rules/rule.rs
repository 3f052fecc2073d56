use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;

use super::Condition;
use crate::dataset::{Column, Dataset, Outcome, Task};
use crate::error::{Error, Result};
use crate::trees::argmax_first;

/// Quality of a rule on a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Number of terms in the condition.
    pub len: usize,
    /// Fraction of instances covered.
    pub freq: f64,
    /// Misclassification rate among covered instances, or for regression the
    /// variance of the covered targets about their mean.
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub condition: Condition,
    pub outcome: Outcome,
    pub metrics: Option<Metrics>,
}

impl Rule {
    pub fn new(condition: Condition, outcome: Outcome) -> Self {
        Rule {
            condition,
            outcome,
            metrics: None,
        }
    }

    /// Measure this rule on `d`, replacing any stored metrics.
    pub fn measured(mut self, d: &Dataset) -> Result<Self> {
        self.metrics = Some(measure(&self.condition, &self.outcome, d)?);
        Ok(self)
    }

    /// Stored metrics; an error if the rule was never measured.
    pub fn require_metrics(&self) -> Result<Metrics> {
        self.metrics
            .ok_or_else(|| Error::data("rule has no metrics; measure it first"))
    }
}

/// Tree and node (both 1-based) a rule or condition came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Source {
    pub tree: usize,
    pub node: usize,
}

/// A path that was dropped during extraction because no value satisfies it.
#[derive(Clone, Debug, PartialEq)]
pub struct Warning {
    pub source: Source,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    /// One entry per rule.
    pub provenance: Vec<Source>,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConditionSet {
    pub conditions: Vec<Condition>,
    /// One entry per condition.
    pub provenance: Vec<Source>,
    pub warnings: Vec<Warning>,
}

/// Target statistics over the rows of `d` covered by `condition`.
pub(crate) struct Coverage {
    pub covered: usize,
    /// Class counts (classification) or empty.
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

pub(crate) fn cover(condition: &Condition, d: &Dataset) -> Coverage {
    let n_levels = d.schema().target.levels.len();
    let mut cov = Coverage {
        covered: 0,
        counts: vec![0; n_levels],
        values: Vec::new(),
    };
    for row in 0..d.n_rows() {
        if !condition.matches_row(d, row) {
            continue;
        }
        cov.covered += 1;
        match d.target() {
            Column::Categorical(y) => {
                if let Some(c) = cov.counts.get_mut(y[row] as usize) {
                    *c += 1;
                }
            }
            Column::Numeric(y) => cov.values.push(y[row]),
        }
    }
    cov
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

impl Coverage {
    pub fn err(&self, outcome: &Outcome) -> f64 {
        match *outcome {
            Outcome::Class(c) => {
                let hit = self.counts.get(c as usize).copied().unwrap_or(0);
                (self.covered - hit) as f64 / self.covered as f64
            }
            Outcome::Value(_) => variance(&self.values),
        }
    }

    pub fn majority(&self, task: Task) -> Outcome {
        match task {
            Task::Classification => Outcome::Class(argmax_first(&self.counts) as u32),
            Task::Regression => Outcome::Value(mean(&self.values)),
        }
    }
}

fn uncovered(condition: &Condition, d: &Dataset) -> Error {
    Error::Uncovered(condition.to_text(d.schema()))
}

/// Length, frequency and error of `condition => outcome` on `d`.
pub fn measure(condition: &Condition, outcome: &Outcome, d: &Dataset) -> Result<Metrics> {
    let cov = cover(condition, d);
    if cov.covered == 0 {
        return Err(uncovered(condition, d));
    }
    Ok(Metrics {
        len: condition.len(),
        freq: cov.covered as f64 / d.n_rows() as f64,
        err: cov.err(outcome),
    })
}

/// Measure every rule, keeping their order.
pub fn measure_rules(rules: &[Rule], d: &Dataset) -> Result<Vec<Rule>> {
    rules.par_iter().map(|r| r.clone().measured(d)).collect()
}

/// Give `condition` the majority class (lowest level on ties) or the mean
/// target of the rows it covers, with metrics.
pub fn assign_outcome(condition: &Condition, d: &Dataset) -> Result<Rule> {
    let cov = cover(condition, d);
    if cov.covered == 0 {
        return Err(uncovered(condition, d));
    }
    let outcome = cov.majority(d.task());
    Ok(Rule {
        condition: condition.clone(),
        metrics: Some(Metrics {
            len: condition.len(),
            freq: cov.covered as f64 / d.n_rows() as f64,
            err: cov.err(&outcome),
        }),
        outcome,
    })
}

/// [`assign_outcome`] over many conditions. Conditions covering nothing are
/// returned separately instead of failing the batch.
pub fn assign_outcomes(conditions: &[Condition], d: &Dataset) -> (Vec<Rule>, Vec<Condition>) {
    let results: Vec<Result<Rule>> = conditions
        .par_iter()
        .map(|c| assign_outcome(c, d))
        .collect();
    let mut rules = Vec::with_capacity(results.len());
    let mut dropped = Vec::new();
    for (c, r) in conditions.iter().zip(results) {
        match r {
            Ok(r) => rules.push(r),
            Err(_) => dropped.push(c.clone()),
        }
    }
    (rules, dropped)
}

/// First occurrence of every distinct condition.
pub fn dedup_conditions(conditions: &[Condition]) -> Vec<Condition> {
    let mut seen = HashSet::new();
    conditions
        .iter()
        .filter(|c| seen.insert(*c))
        .cloned()
        .collect()
}

/// First rule for every distinct condition.
pub fn dedup_rules(rules: &[Rule]) -> Vec<Rule> {
    let mut seen = HashSet::new();
    rules
        .iter()
        .filter(|r| seen.insert(&r.condition))
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankKey {
    ErrAsc,
    FreqDesc,
    LenAsc,
}

impl RankKey {
    /// The default ordering: lowest error, then highest frequency, then shortest.
    pub const DEFAULT: [RankKey; 3] = [RankKey::ErrAsc, RankKey::FreqDesc, RankKey::LenAsc];

    pub(crate) fn compare(self, a: &Metrics, b: &Metrics) -> Ordering {
        match self {
            RankKey::ErrAsc => a.err.total_cmp(&b.err),
            RankKey::FreqDesc => b.freq.total_cmp(&a.freq),
            RankKey::LenAsc => a.len.cmp(&b.len),
        }
    }
}

pub(crate) fn compare_metrics(keys: &[RankKey], a: &Metrics, b: &Metrics) -> Ordering {
    keys.iter()
        .map(|k| k.compare(a, b))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Stable sort of measured rules by `keys`; ties keep input order.
pub fn rank_rules(rules: &[Rule], keys: &[RankKey]) -> Result<Vec<Rule>> {
    let mut keyed = rules
        .iter()
        .map(|r| Ok((r.require_metrics()?, r)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|(a, _), (b, _)| compare_metrics(keys, a, b));
    Ok(keyed.into_iter().map(|(_, r)| r.clone()).collect())
}
