//! Frequent variable interactions mined from extracted rules with Apriori,
//! keeping the target on the right-hand side.

use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use crate::dataset::{format_number, Outcome, Schema};
use crate::error::{Error, Result};
use crate::rules::{Op, Rule, Term};

/// A left-hand-side item: a condition term, or a bare variable when numeric
/// terms are collapsed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Item {
    Term(Term),
    Variable(usize),
}

impl Item {
    pub fn var(&self) -> usize {
        match self {
            Item::Term(t) => t.var,
            Item::Variable(v) => *v,
        }
    }

    fn sort_key(&self) -> (usize, u8, u64) {
        match *self {
            Item::Variable(v) => (v, 0, 0),
            Item::Term(Term { var, op: Op::In(m) }) => (var, 1, u64::from(m)),
            Item::Term(Term { var, op: Op::Le(t) }) => (var, 2, ordered_bits(t)),
            Item::Term(Term { var, op: Op::Gt(t) }) => (var, 3, ordered_bits(t)),
        }
    }

    pub fn render(&self, schema: &Schema) -> String {
        match self {
            Item::Term(t) => t.render(schema, false),
            Item::Variable(v) => format!("X{}", v + 1),
        }
    }
}

/// Bits of `v` that order the same way as the float.
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Target value used as the right-hand side.
#[derive(Clone, Copy, Debug)]
pub struct TargetItem(pub Outcome);

impl TargetItem {
    fn key(&self) -> (u8, u64) {
        match self.0 {
            Outcome::Class(c) => (0, u64::from(c)),
            Outcome::Value(v) => (1, if v == 0.0 { 0 } else { v.to_bits() }),
        }
    }
}

impl PartialEq for TargetItem {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for TargetItem {}

impl Hash for TargetItem {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transaction {
    /// Distinct non-target items.
    pub items: Vec<Item>,
    pub target: TargetItem,
}

/// One transaction per rule: its terms (numeric terms become bare variables
/// when `numeric_as_variable` is set) plus its outcome.
pub fn itemize(rules: &[Rule], numeric_as_variable: bool) -> Vec<Transaction> {
    rules
        .iter()
        .map(|r| {
            let mut items: Vec<Item> = Vec::new();
            for t in r.condition.terms() {
                let item = match t.op {
                    Op::Le(_) | Op::Gt(_) if numeric_as_variable => Item::Variable(t.var),
                    _ => Item::Term(*t),
                };
                if !items.contains(&item) {
                    items.push(item);
                }
            }
            Transaction {
                items,
                target: TargetItem(r.outcome),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MineParams {
    pub min_sup: f64,
    pub min_conf: f64,
    /// Largest rule length, counting the target item.
    pub max_len: usize,
}

impl Default for MineParams {
    fn default() -> Self {
        MineParams {
            min_sup: 0.01,
            min_conf: 0.5,
            max_len: 3,
        }
    }
}

impl MineParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("min_sup", self.min_sup), ("min_conf", self.min_conf)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(format!("{name} {v} outside (0, 1]")));
            }
        }
        if self.max_len < 2 {
            return Err(Error::param("max_len must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationRule {
    /// Sorted by variable, then operator.
    pub lhs: Vec<Item>,
    pub rhs: TargetItem,
    /// Fraction of transactions containing `lhs`.
    pub support: f64,
    pub confidence: f64,
    /// Transactions containing `lhs`.
    pub lhs_count: usize,
    /// Transactions containing `lhs` and `rhs`.
    pub count: usize,
}

impl AssociationRule {
    /// Items in the rule, the target included.
    pub fn length(&self) -> usize {
        self.lhs.len() + 1
    }

    pub fn lhs_text(&self, schema: &Schema) -> String {
        self.lhs
            .iter()
            .map(|i| i.render(schema))
            .collect::<Vec<_>>()
            .join(" & ")
    }

    pub fn rhs_text(&self, schema: &Schema) -> String {
        match self.rhs.0 {
            Outcome::Class(_) => schema.format_outcome(&self.rhs.0),
            Outcome::Value(v) => format_number(v),
        }
    }
}

fn meets(count: usize, n: usize, threshold: f64) -> bool {
    count as f64 >= threshold * n as f64 - 1e-9
}

/// Apriori over `transactions`: all lhs itemsets of 1 to `max_len - 1`
/// items with support at least `min_sup`, paired with every target value
/// reaching `min_conf`. Output is ordered by lhs size, then by the
/// first-seen order of the lhs items, then by target.
pub fn mine(transactions: &[Transaction], params: &MineParams) -> Result<Vec<AssociationRule>> {
    params.validate()?;
    let n = transactions.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut vocab: Vec<Item> = Vec::new();
    let mut ids: HashMap<Item, u32> = HashMap::new();
    let mut targets: Vec<TargetItem> = Vec::new();
    let mut target_ids: HashMap<TargetItem, usize> = HashMap::new();
    let encoded: Vec<(Vec<u32>, usize)> = transactions
        .iter()
        .map(|t| {
            let mut items: Vec<u32> = t
                .items
                .iter()
                .map(|item| {
                    *ids.entry(*item).or_insert_with(|| {
                        vocab.push(*item);
                        (vocab.len() - 1) as u32
                    })
                })
                .collect();
            items.sort_unstable();
            items.dedup();
            let target = *target_ids.entry(t.target).or_insert_with(|| {
                targets.push(t.target);
                targets.len() - 1
            });
            (items, target)
        })
        .collect();

    let count_targets = |set: &[u32]| -> Vec<usize> {
        let mut counts = vec![0usize; targets.len()];
        for (items, target) in &encoded {
            if is_subset(set, items) {
                counts[*target] += 1;
            }
        }
        counts
    };

    let mut out = Vec::new();
    let mut level: Vec<Vec<u32>> = (0..vocab.len() as u32).map(|i| vec![i]).collect();
    let mut k = 1;
    while !level.is_empty() && k < params.max_len {
        let counted: Vec<(Vec<u32>, Vec<usize>)> = level
            .into_par_iter()
            .map(|set| {
                let c = count_targets(&set);
                (set, c)
            })
            .collect();
        let frequent: Vec<(Vec<u32>, Vec<usize>)> = counted
            .into_iter()
            .filter(|(_, c)| meets(c.iter().sum(), n, params.min_sup))
            .collect();
        for (set, counts) in &frequent {
            let lhs_count: usize = counts.iter().sum();
            let mut lhs: Vec<Item> = set.iter().map(|&i| vocab[i as usize]).collect();
            lhs.sort_by_key(Item::sort_key);
            for (t, &count) in counts.iter().enumerate() {
                if count > 0 && meets(count, lhs_count, params.min_conf) {
                    out.push(AssociationRule {
                        lhs: lhs.clone(),
                        rhs: targets[t],
                        support: lhs_count as f64 / n as f64,
                        confidence: count as f64 / lhs_count as f64,
                        lhs_count,
                        count,
                    });
                }
            }
        }
        let sets: Vec<Vec<u32>> = frequent.into_iter().map(|(s, _)| s).collect();
        level = next_candidates(&sets);
        k += 1;
    }
    Ok(out)
}

/// Both slices sorted ascending.
fn is_subset(small: &[u32], big: &[u32]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}

/// Join frequent k-sets sharing a (k-1)-prefix, keeping candidates whose
/// every k-subset is frequent.
fn next_candidates(frequent: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let known: HashSet<&[u32]> = frequent.iter().map(Vec::as_slice).collect();
    let mut sorted: Vec<&Vec<u32>> = frequent.iter().collect();
    sorted.sort();
    let mut out = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        let k = a.len();
        for b in &sorted[i + 1..] {
            if a[..k - 1] != b[..k - 1] {
                break;
            }
            let mut cand = (*a).clone();
            cand.push(b[k - 1]);
            let all_frequent = (0..cand.len()).all(|drop| {
                let sub: Vec<u32> = cand
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != drop)
                    .map(|(_, &x)| x)
                    .collect();
                known.contains(sub.as_slice())
            });
            if all_frequent {
                out.push(cand);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionKey {
    SupportDesc,
    ConfidenceDesc,
    LengthDesc,
}

/// Stable lexicographic sort by `keys`.
pub fn rank_interactions(
    rules: &[AssociationRule],
    keys: &[InteractionKey],
) -> Vec<AssociationRule> {
    let mut out = rules.to_vec();
    out.sort_by(|a, b| {
        keys.iter()
            .map(|k| match k {
                InteractionKey::SupportDesc => b.support.total_cmp(&a.support),
                InteractionKey::ConfidenceDesc => b.confidence.total_cmp(&a.confidence),
                InteractionKey::LengthDesc => b.lhs.len().cmp(&a.lhs.len()),
            })
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}
