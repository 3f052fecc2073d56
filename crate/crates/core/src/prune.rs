//! Leave-one-out pruning of rule conditions.

use rayon::prelude::*;

use crate::dataset::{Dataset, Outcome};
use crate::error::{Error, Result};
use crate::rules::{cover, Condition, Rule, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DecayMode {
    /// `(E_-i - E_0) / max(E_0, s)`
    #[default]
    Relative,
    /// `E_-i - E_0`
    Absolute,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneParams {
    pub mode: DecayMode,
    /// A term is removed when its decay is strictly below this.
    pub threshold: f64,
    /// Lower bound on the relative-mode denominator.
    pub s: f64,
}

impl Default for PruneParams {
    fn default() -> Self {
        PruneParams {
            mode: DecayMode::Relative,
            threshold: 0.05,
            s: 1e-6,
        }
    }
}

impl PruneParams {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::param("prune threshold must be finite"));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::param("prune s must be positive"));
        }
        Ok(())
    }

    pub fn decay(&self, e0: f64, e_minus: f64) -> f64 {
        match self.mode {
            DecayMode::Relative => (e_minus - e0) / e0.max(self.s),
            DecayMode::Absolute => e_minus - e0,
        }
    }
}

/// Error of a rule with a fixed outcome, as seen by the pruner.
pub trait ErrorOracle {
    fn error(&self, condition: &Condition, outcome: &Outcome) -> Result<f64>;
}

/// Rule error measured on a dataset.
pub struct DataOracle<'a>(pub &'a Dataset);

impl ErrorOracle for DataOracle<'_> {
    fn error(&self, condition: &Condition, outcome: &Outcome) -> Result<f64> {
        let cov = cover(condition, self.0);
        if cov.covered == 0 {
            return Err(Error::Uncovered(condition.to_text(self.0.schema())));
        }
        Ok(cov.err(outcome))
    }
}

/// Decay of removing term `i` (0-based) from `condition`.
pub fn decay(
    condition: &Condition,
    outcome: &Outcome,
    i: usize,
    oracle: &impl ErrorOracle,
    params: &PruneParams,
) -> Result<f64> {
    if i >= condition.len() {
        return Err(Error::param(format!(
            "term index {i} out of range for a condition of length {}",
            condition.len()
        )));
    }
    let e0 = oracle.error(condition, outcome)?;
    let e_minus = oracle.error(&condition.without(i), outcome)?;
    Ok(params.decay(e0, e_minus))
}

/// One leave-one-out test made while pruning.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    /// Condition before the test.
    pub condition: Condition,
    /// Index of the tested term within `condition`.
    pub index: usize,
    pub term: Term,
    pub e0: f64,
    pub e_minus: f64,
    pub decay: f64,
    pub removed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pruned {
    pub condition: Condition,
    pub steps: Vec<Step>,
}

/// Test terms from last to first, removing each whose decay against the
/// current condition is below the threshold. The last remaining term is
/// never removed.
pub fn prune_condition(
    condition: &Condition,
    outcome: &Outcome,
    oracle: &impl ErrorOracle,
    params: &PruneParams,
) -> Result<Pruned> {
    params.validate()?;
    let mut current = condition.clone();
    let mut steps = Vec::new();
    if current.len() <= 1 {
        return Ok(Pruned {
            condition: current,
            steps,
        });
    }
    let mut e0 = oracle.error(&current, outcome)?;
    for i in (0..condition.len()).rev() {
        if current.len() == 1 {
            break;
        }
        let shorter = current.without(i);
        let e_minus = oracle.error(&shorter, outcome)?;
        let d = params.decay(e0, e_minus);
        let removed = d < params.threshold;
        steps.push(Step {
            condition: current.clone(),
            index: i,
            term: current.terms()[i],
            e0,
            e_minus,
            decay: d,
            removed,
        });
        if removed {
            current = shorter;
            e0 = e_minus;
        }
    }
    Ok(Pruned {
        condition: current,
        steps,
    })
}

/// Prune `rule` on `d`, keeping its outcome, and re-measure it.
pub fn prune_rule(rule: &Rule, d: &Dataset, params: &PruneParams) -> Result<Rule> {
    let pruned = prune_condition(&rule.condition, &rule.outcome, &DataOracle(d), params)?;
    Rule::new(pruned.condition, rule.outcome).measured(d)
}

/// [`prune_rule`] over a rule set, in parallel.
pub fn prune_rules(rules: &[Rule], d: &Dataset, params: &PruneParams) -> Result<Vec<Rule>> {
    rules.par_iter().map(|r| prune_rule(r, d, params)).collect()
}
