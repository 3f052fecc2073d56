//! Property checks shared by the proptest suite and the acceptance harness.

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::Rng;

use super::{random_dataset, random_schema, random_tree, rng};
use treerules::interactions::TargetItem;
use treerules::prune::{prune_condition, DataOracle, ErrorOracle};
use treerules::rules::leaf_conditions;
use treerules::{
    build_forest, build_stel, extract_rules, measure, mine, Cell, Column, Condition, Dataset,
    Ensemble, ForestParams, Item, MineParams, Op, Outcome, PruneParams, Rule, Task, Term,
    Transaction,
};

pub type TestResult = Result<(), TestCaseError>;

pub fn task(rng: &mut impl Rng) -> Task {
    if rng.random_bool(0.7) {
        Task::Classification
    } else {
        Task::Regression
    }
}

/// Hand-written coverage test, independent of `Term::matches`.
fn naive_covers(d: &Dataset, row: usize, terms: &[Term]) -> bool {
    terms.iter().all(|t| match (&d.columns()[t.var], t.op) {
        (Column::Numeric(v), Op::Le(x)) => v[row] <= x,
        (Column::Numeric(v), Op::Gt(x)) => v[row] > x,
        (Column::Categorical(v), Op::In(mask)) => mask & (1 << v[row]) != 0,
        _ => panic!("term does not fit its column"),
    })
}

fn random_term(rng: &mut impl Rng, d: &Dataset) -> Term {
    let var = rng.random_range(0..d.n_predictors());
    let cs = &d.schema().predictors[var];
    let op = if cs.is_categorical() {
        Op::In(rng.random_range(1..=cs.full_mask()))
    } else {
        let x = f64::from(rng.random_range(0..=20u32)) / 2.0;
        if rng.random_bool(0.5) {
            Op::Le(x)
        } else {
            Op::Gt(x)
        }
    };
    Term::new(var, op)
}

/// Every row satisfies the condition of exactly the leaf it routes to,
/// and the extracted rules agree with routing on the prediction.
pub fn extraction_agrees_with_routing(seed: u64) -> TestResult {
    let mut r = rng(seed);
    let t = task(&mut r);
    let schema = random_schema(&mut r, t);
    let d = random_dataset(&mut r, &schema, 60);
    let tree = random_tree(&mut r, &schema, 6);
    let leaves = leaf_conditions(&tree, &schema);
    prop_assert_eq!(leaves.len(), tree.n_leaves());
    let e = Ensemble::new(vec![tree.clone()], schema.clone()).unwrap();
    let rules = extract_rules(&e);
    prop_assert_eq!(rules.rules.len() + rules.warnings.len(), tree.n_leaves());
    for row in 0..d.n_rows() {
        let x = d.row(row);
        let (leaf, pred) = tree.route(&x).unwrap();
        for (id, cond) in &leaves {
            match cond {
                Ok(c) => prop_assert_eq!(c.matches(&x), *id == leaf, "row {} leaf {}", row, id),
                Err(_) => prop_assert_ne!(*id, leaf),
            }
        }
        prop_assert_eq!(treerules::rules::first_match(&rules.rules, &x), Some(&pred));
    }
    Ok(())
}

/// The leaves of one tree partition the data.
pub fn per_tree_frequencies_sum_to_one(seed: u64) -> TestResult {
    let mut r = rng(seed);
    let t = task(&mut r);
    let schema = random_schema(&mut r, t);
    let d = random_dataset(&mut r, &schema, 50);
    let params = ForestParams {
        n_trees: 3,
        seed,
        ..ForestParams::default()
    };
    let e = build_forest(&d, &params).unwrap();
    for t in e.trees() {
        let single = Ensemble::new(vec![t.clone()], schema.clone()).unwrap();
        let set = extract_rules(&single);
        prop_assert!(set.warnings.is_empty());
        let total: f64 = set
            .rules
            .iter()
            .map(|rule| measure(&rule.condition, &rule.outcome, &d).map_or(0.0, |m| m.freq))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
    }
    Ok(())
}

/// Training export is byte-stable through a round trip.
pub fn node_table_round_trip(seed: u64) -> TestResult {
    let mut r = rng(seed);
    let t = task(&mut r);
    let schema = random_schema(&mut r, t);
    let d = random_dataset(&mut r, &schema, 40);
    let params = ForestParams {
        n_trees: 4,
        seed,
        ..ForestParams::default()
    };
    let e = build_forest(&d, &params).unwrap();
    let mut first = Vec::new();
    e.export_node_tables(&mut first).unwrap();
    let back = Ensemble::import_node_tables(first.as_slice(), &schema).unwrap();
    prop_assert!(back.same_structure(&e));
    let mut second = Vec::new();
    back.export_node_tables(&mut second).unwrap();
    prop_assert_eq!(first, second);

    let trees: Vec<_> = (0..3).map(|_| random_tree(&mut r, &schema, 5)).collect();
    let e = Ensemble::new(trees, schema.clone()).unwrap();
    let mut first = Vec::new();
    e.export_node_tables(&mut first).unwrap();
    let back = Ensemble::import_node_tables(first.as_slice(), &schema).unwrap();
    prop_assert_eq!(&back, &e);
    Ok(())
}

pub fn measure_matches_naive_scan(seed: u64) -> TestResult {
    let mut r = rng(seed);
    let t = task(&mut r);
    let schema = random_schema(&mut r, t);
    let d = random_dataset(&mut r, &schema, 40);
    let k = r.random_range(0..=4);
    let terms: Vec<Term> = (0..k).map(|_| random_term(&mut r, &d)).collect();
    let Ok(c) = Condition::new(terms.clone(), &schema) else {
        return Ok(());
    };
    let rows: Vec<usize> = (0..d.n_rows())
        .filter(|&i| naive_covers(&d, i, &terms))
        .collect();
    let outcome = match d.task() {
        Task::Classification => {
            Outcome::Class(r.random_range(0..schema.target.levels.len() as u32))
        }
        Task::Regression => Outcome::Value(1.5),
    };
    match measure(&c, &outcome, &d) {
        Err(_) => prop_assert!(rows.is_empty()),
        Ok(m) => {
            prop_assert_eq!(m.len, c.len());
            prop_assert_eq!(m.freq, rows.len() as f64 / d.n_rows() as f64);
            let expected = match (d.target(), outcome) {
                (Column::Categorical(y), Outcome::Class(k)) => {
                    rows.iter().filter(|&&i| y[i] != k).count() as f64 / rows.len() as f64
                }
                (Column::Numeric(y), _) => {
                    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
                    rows.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>() / rows.len() as f64
                }
                _ => unreachable!(),
            };
            prop_assert!((m.err - expected).abs() < 1e-12);
        }
    }
    Ok(())
}

pub fn canonical_form_is_stable(seed: u64) -> TestResult {
    let mut r = rng(seed);
    let schema = random_schema(&mut r, Task::Classification);
    let d = random_dataset(&mut r, &schema, 30);
    let k = r.random_range(0..=5);
    let terms: Vec<Term> = (0..k).map(|_| random_term(&mut r, &d)).collect();
    let Ok(c) = Condition::new(terms.clone(), &schema) else {
        return Ok(());
    };
    prop_assert_eq!(&Condition::new(c.terms().to_vec(), &schema).unwrap(), &c);
    let mut shuffled = terms.clone();
    shuffled.reverse();
    prop_assert_eq!(&Condition::new(shuffled, &schema).unwrap(), &c);
    prop_assert_eq!(&Condition::parse(&c.to_text(&schema), &schema).unwrap(), &c);
    for row in 0..d.n_rows() {
        prop_assert_eq!(c.matches_row(&d, row), naive_covers(&d, row, &terms));
    }
    Ok(())
}

/// Pruning only widens coverage, never empties a rule, and its log
/// replays against the data.
pub fn pruning_log_replays(seed: u64) -> TestResult {
    let mut r = rng(seed);
    let t = task(&mut r);
    let schema = random_schema(&mut r, t);
    let d = random_dataset(&mut r, &schema, 60);
    let tree = random_tree(&mut r, &schema, 6);
    let conds: Vec<Condition> = leaf_conditions(&tree, &schema)
        .into_iter()
        .filter_map(|(_, c)| c.ok())
        .filter(|c| !c.is_empty() && c.coverage(&d).count_ones(..) > 0)
        .collect();
    if conds.is_empty() {
        return Ok(());
    }
    let c = &conds[r.random_range(0..conds.len())];
    let outcome = d.outcome(r.random_range(0..d.n_rows()));
    let params = PruneParams {
        threshold: r.random_range(-0.1..0.3),
        ..PruneParams::default()
    };
    let oracle = DataOracle(&d);
    let p = prune_condition(c, &outcome, &oracle, &params).unwrap();

    prop_assert!(!p.condition.is_empty());
    let before = c.coverage(&d);
    let after = p.condition.coverage(&d);
    prop_assert!(before.is_subset(&after));

    let mut current = c.clone();
    for step in &p.steps {
        prop_assert_eq!(&step.condition, &current);
        prop_assert_eq!(step.term, current.terms()[step.index]);
        let e0 = oracle.error(&current, &outcome).unwrap();
        let shorter = current.without(step.index);
        let e_minus = oracle.error(&shorter, &outcome).unwrap();
        prop_assert_eq!(step.e0, e0);
        prop_assert_eq!(step.e_minus, e_minus);
        prop_assert_eq!(step.decay, params.decay(e0, e_minus));
        prop_assert_eq!(step.removed, step.decay < params.threshold);
        if step.removed {
            current = shorter;
        }
    }
    prop_assert_eq!(&current, &p.condition);
    let tested: Vec<usize> = p.steps.iter().map(|s| s.index).collect();
    let mut sorted = tested.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    prop_assert_eq!(tested, sorted);
    Ok(())
}

/// Every (lhs, target) pair found by brute force over the item powerset.
fn exhaustive(
    transactions: &[Transaction],
    params: &MineParams,
) -> HashSet<(Vec<usize>, TargetItem, usize, usize)> {
    let mut vocab: Vec<Item> = Vec::new();
    for t in transactions {
        for i in &t.items {
            if !vocab.contains(i) {
                vocab.push(*i);
            }
        }
    }
    let n = transactions.len() as f64;
    let mut out = HashSet::new();
    for mask in 1u32..(1 << vocab.len()) {
        let size = mask.count_ones() as usize;
        if size >= params.max_len {
            continue;
        }
        let lhs: Vec<Item> = (0..vocab.len())
            .filter(|&k| mask & (1 << k) != 0)
            .map(|k| vocab[k])
            .collect();
        let covered: Vec<&Transaction> = transactions
            .iter()
            .filter(|t| lhs.iter().all(|i| t.items.contains(i)))
            .collect();
        if covered.is_empty() || (covered.len() as f64) < params.min_sup * n - 1e-9 {
            continue;
        }
        let mut by_target: HashMap<TargetItem, usize> = HashMap::new();
        for t in &covered {
            *by_target.entry(t.target).or_default() += 1;
        }
        for (target, count) in by_target {
            if count as f64 >= params.min_conf * covered.len() as f64 - 1e-9 {
                let key: Vec<usize> = (0..vocab.len()).filter(|&k| mask & (1 << k) != 0).collect();
                out.insert((key, target, covered.len(), count));
            }
        }
    }
    out
}

pub fn apriori_matches_exhaustive(
    seed: u64,
    min_sup: f64,
    min_conf: f64,
    max_len: usize,
) -> TestResult {
    let mut r = rng(seed);
    let n_items = r.random_range(1..=10usize);
    let pool: Vec<Item> = (0..n_items)
        .map(|k| {
            if k % 3 == 0 {
                Item::Variable(k)
            } else {
                Item::Term(Term::new(k, Op::In(1 + (k as u32 % 2))))
            }
        })
        .collect();
    let transactions: Vec<Transaction> = (0..r.random_range(1..30))
        .map(|_| {
            let items: Vec<Item> = pool
                .iter()
                .copied()
                .filter(|_| r.random_bool(0.4))
                .collect();
            Transaction {
                items,
                target: TargetItem(Outcome::Class(r.random_range(0..2))),
            }
        })
        .collect();
    let params = MineParams {
        min_sup,
        min_conf,
        max_len,
    };
    let mined = mine(&transactions, &params).unwrap();

    let mut vocab: Vec<Item> = Vec::new();
    for t in &transactions {
        for i in &t.items {
            if !vocab.contains(i) {
                vocab.push(*i);
            }
        }
    }
    let got: HashSet<_> = mined
        .iter()
        .map(|a| {
            let mut key: Vec<usize> = a
                .lhs
                .iter()
                .map(|i| vocab.iter().position(|v| v == i).unwrap())
                .collect();
            key.sort_unstable();
            (key, a.rhs, a.lhs_count, a.count)
        })
        .collect();
    prop_assert_eq!(got.len(), mined.len());
    prop_assert_eq!(got, exhaustive(&transactions, &params));
    for a in &mined {
        prop_assert_eq!(a.support, a.lhs_count as f64 / transactions.len() as f64);
        prop_assert_eq!(a.confidence, a.count as f64 / a.lhs_count as f64);
    }
    Ok(())
}

/// The rule list ends in exactly one default rule, so every instance
/// gets a prediction, and rebuilding gives the same list.
pub fn stel_is_total_and_deterministic(seed: u64, threshold: f64) -> TestResult {
    let mut r = rng(seed);
    let t = task(&mut r);
    let schema = random_schema(&mut r, t);
    let d = random_dataset(&mut r, &schema, 60);
    let params = ForestParams {
        n_trees: 5,
        seed,
        ..ForestParams::default()
    };
    let e = build_forest(&d, &params).unwrap();
    let rules: Vec<Rule> = extract_rules(&e)
        .rules
        .into_iter()
        .filter_map(|rule| rule.measured(&d).ok())
        .collect();
    let a = build_stel(&rules, &d, threshold).unwrap();
    let b = build_stel(&rules, &d, threshold).unwrap();
    prop_assert_eq!(&a, &b);
    let last = a.rules().last().unwrap();
    prop_assert!(last.condition.is_empty());
    prop_assert_eq!(
        a.rules().iter().filter(|r| r.condition.is_empty()).count(),
        1
    );
    let other = random_dataset(&mut r, &schema, 30);
    for row in 0..other.n_rows() {
        let x: Vec<Cell> = other.row(row);
        let first = a.rules().iter().find(|r| r.condition.matches(&x)).unwrap();
        prop_assert_eq!(a.predict(&x), first.outcome);
    }
    prop_assert!((0.0..=1.0).contains(&a.evaluate(&d)) || d.task() == Task::Regression);
    Ok(())
}
