//! Conditions, rules and their extraction from trees.

mod condition;
mod extract;
mod rule;

pub use condition::{Condition, Op, Term};
pub use extract::{extract_conditions, extract_rules, first_match, leaf_conditions};
pub use rule::{
    assign_outcome, assign_outcomes, dedup_conditions, dedup_rules, measure, measure_rules,
    rank_rules, ConditionSet, Metrics, RankKey, Rule, RuleSet, Source, Warning,
};
pub(crate) use rule::{compare_metrics, cover};
