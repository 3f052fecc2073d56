use rayon::prelude::*;

use super::rule::{ConditionSet, Rule, RuleSet, Source, Warning};
use super::{Condition, Op, Term};
use crate::dataset::{Outcome, Schema};
use crate::error::{Error, Result};
use crate::trees::{Ensemble, Node, NodeTable, Split};

fn branch_terms(var: usize, split: Split, schema: &Schema) -> (Term, Term) {
    match split {
        Split::Numeric(t) => (Term::new(var, Op::Le(t)), Term::new(var, Op::Gt(t))),
        Split::Categorical(mask) => {
            let full = schema.predictors[var].full_mask();
            (
                Term::new(var, Op::In(mask)),
                Term::new(var, Op::In(full & !mask)),
            )
        }
    }
}

/// What a depth-first walk stops at: a node id (1-based) with its path
/// condition, or the error from canonicalizing an impossible path.
type Stop = (usize, Result<Condition>);

/// Walk `tree` depth first, left before right, stopping at leaves and at
/// nodes of depth `max_depth` (the root has depth 1).
fn walk(tree: &NodeTable, schema: &Schema, max_depth: Option<usize>) -> Vec<Stop> {
    let nodes = tree.nodes();
    let mut out = Vec::new();
    let mut stack: Vec<(usize, Vec<Term>, usize)> = vec![(0, Vec::new(), 1)];
    while let Some((i, terms, depth)) = stack.pop() {
        match &nodes[i] {
            Node::Internal {
                var,
                split,
                left,
                right,
                ..
            } if max_depth.is_none_or(|m| depth < m) => {
                let (l, r) = branch_terms(*var, *split, schema);
                let mut right_terms = terms.clone();
                right_terms.push(r);
                let mut left_terms = terms;
                left_terms.push(l);
                stack.push((*right, right_terms, depth + 1));
                stack.push((*left, left_terms, depth + 1));
            }
            _ => out.push((i + 1, Condition::new(terms, schema))),
        }
    }
    out
}

/// Conditions of every leaf of `tree`, in depth-first order, paired with the
/// leaf id (1-based). Impossible paths yield [`Error::EmptyCondition`].
pub fn leaf_conditions(tree: &NodeTable, schema: &Schema) -> Vec<(usize, Result<Condition>)> {
    walk(tree, schema, None)
}

fn warning(tree: usize, node: usize, e: Error) -> Warning {
    Warning {
        source: Source { tree, node },
        message: e.to_string(),
    }
}

/// One rule per leaf of every tree; the outcome is the leaf prediction.
pub fn extract_rules(ensemble: &Ensemble) -> RuleSet {
    let schema = ensemble.schema();
    let per_tree: Vec<Vec<Stop>> = ensemble
        .trees()
        .par_iter()
        .map(|t| leaf_conditions(t, schema))
        .collect();
    let mut set = RuleSet::default();
    for (t, (tree, stops)) in ensemble.trees().iter().zip(per_tree).enumerate() {
        for (node, cond) in stops {
            let Node::Leaf { pred } = tree.nodes()[node - 1] else {
                unreachable!("unbounded walk stops only at leaves");
            };
            match cond {
                Ok(c) => {
                    set.rules.push(Rule::new(c, pred));
                    set.provenance.push(Source { tree: t + 1, node });
                }
                Err(e) => set.warnings.push(warning(t + 1, node, e)),
            }
        }
    }
    set
}

/// Conditions of all root paths, truncated at `max_depth` when given.
/// `Some(1)` yields the empty condition once per tree.
pub fn extract_conditions(ensemble: &Ensemble, max_depth: Option<usize>) -> Result<ConditionSet> {
    if max_depth == Some(0) {
        return Err(Error::param("max_depth must be -1 or at least 1"));
    }
    let schema = ensemble.schema();
    let per_tree: Vec<Vec<Stop>> = ensemble
        .trees()
        .par_iter()
        .map(|t| walk(t, schema, max_depth))
        .collect();
    let mut set = ConditionSet::default();
    for (t, stops) in per_tree.into_iter().enumerate() {
        for (node, cond) in stops {
            match cond {
                Ok(c) => {
                    set.conditions.push(c);
                    set.provenance.push(Source { tree: t + 1, node });
                }
                Err(e) => set.warnings.push(warning(t + 1, node, e)),
            }
        }
    }
    Ok(set)
}

/// Outcome of the first leaf in `rules` (restricted to one tree) matching
/// `x`; used to check extraction against routing.
pub fn first_match<'a>(rules: &'a [Rule], x: &[crate::dataset::Cell]) -> Option<&'a Outcome> {
    rules
        .iter()
        .find(|r| r.condition.matches(x))
        .map(|r| &r.outcome)
}
