//! Ordered rule lists built greedily from a rule set.

use rayon::prelude::*;

use crate::dataset::{Cell, Dataset, Outcome};
use crate::error::{Error, Result};
use crate::rules::{compare_metrics, cover, Condition, Metrics, RankKey, Rule};
use crate::trees::prediction_error;

/// Rules applied top to bottom; the last one has the empty condition.
///
/// Each rule carries the metrics measured on the data still uncovered when
/// it was chosen, with frequency relative to the full training set.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleList {
    rules: Vec<Rule>,
}

impl RuleList {
    /// Wrap an ordered rule list. The last rule must be the only one with an
    /// empty condition.
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        match rules.last() {
            Some(last) if last.condition.is_empty() => {}
            _ => return Err(Error::data("rule list must end with a default rule")),
        }
        if rules[..rules.len() - 1]
            .iter()
            .any(|r| r.condition.is_empty())
        {
            return Err(Error::data(
                "only the last rule of a list may be a default rule",
            ));
        }
        Ok(RuleList { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn default_rule(&self) -> &Rule {
        self.rules
            .last()
            .expect("a rule list always has a default rule")
    }

    /// Outcome of the first rule whose condition holds. Unknown levels make
    /// their terms false, so the default rule still applies.
    pub fn predict(&self, x: &[Cell]) -> Outcome {
        self.rules
            .iter()
            .find(|r| r.condition.matches(x))
            .unwrap_or_else(|| self.default_rule())
            .outcome
    }

    pub fn predict_row(&self, d: &Dataset, row: usize) -> Outcome {
        self.rules
            .iter()
            .find(|r| r.condition.matches_row(d, row))
            .unwrap_or_else(|| self.default_rule())
            .outcome
    }

    /// Misclassification rate or mean squared error on `d`.
    pub fn evaluate(&self, d: &Dataset) -> f64 {
        let preds: Vec<Outcome> = (0..d.n_rows()).map(|r| self.predict_row(d, r)).collect();
        prediction_error(d, &preds)
    }
}

/// Greedy rule list construction.
///
/// Candidates are the non-empty rules of `rules` with frequency at least
/// `freq_threshold`, plus a default rule predicting the majority (or mean)
/// of the instances not yet covered. Each round re-measures every candidate
/// on the uncovered instances, appends the best one by error, then
/// frequency, then length, then input order, and removes what it covers.
/// Construction stops once the default rule wins or nothing is left.
pub fn build_stel(rules: &[Rule], d: &Dataset, freq_threshold: f64) -> Result<RuleList> {
    let n = d.n_rows();
    if n == 0 {
        return Err(Error::data("cannot build a rule list on an empty dataset"));
    }
    if !(0.0..=1.0).contains(&freq_threshold) {
        return Err(Error::param(format!(
            "frequency threshold {freq_threshold} outside [0, 1]"
        )));
    }
    let mut candidates: Vec<&Rule> = Vec::new();
    for r in rules {
        if !r.condition.is_empty() && r.require_metrics()?.freq >= freq_threshold {
            candidates.push(r);
        }
    }
    let keys = RankKey::DEFAULT;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        if remaining.is_empty() {
            let overall = cover(&Condition::empty(), d).majority(d.task());
            out.push(Rule {
                condition: Condition::empty(),
                outcome: overall,
                metrics: Some(Metrics {
                    len: 0,
                    freq: 0.0,
                    err: 0.0,
                }),
            });
            break;
        }
        let rest = d.subset(&remaining);
        let scale = rest.n_rows() as f64 / n as f64;
        let default = {
            let cov = cover(&Condition::empty(), &rest);
            let outcome = cov.majority(d.task());
            Rule {
                condition: Condition::empty(),
                metrics: Some(Metrics {
                    len: 0,
                    freq: scale,
                    err: cov.err(&outcome),
                }),
                outcome,
            }
        };
        let measured: Vec<Option<Metrics>> = candidates
            .par_iter()
            .map(|r| {
                let cov = cover(&r.condition, &rest);
                (cov.covered > 0).then(|| Metrics {
                    len: r.condition.len(),
                    freq: cov.covered as f64 / n as f64,
                    err: cov.err(&r.outcome),
                })
            })
            .collect();
        let mut best: Option<(usize, Metrics)> = None;
        for (i, m) in measured.iter().enumerate() {
            if let Some(m) = m {
                if best.is_none_or(|(_, b)| compare_metrics(&keys, m, &b).is_lt()) {
                    best = Some((i, *m));
                }
            }
        }
        let default_metrics = default.metrics.expect("set above");
        match best {
            Some((i, m)) if compare_metrics(&keys, &m, &default_metrics).is_le() => {
                let rule = candidates[i];
                remaining.retain(|&row| !rule.condition.matches_row(d, row));
                out.push(Rule {
                    condition: rule.condition.clone(),
                    outcome: rule.outcome,
                    metrics: Some(m),
                });
            }
            _ => {
                out.push(default);
                break;
            }
        }
    }
    RuleList::new(out)
}
