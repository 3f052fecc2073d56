use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{argmax_first, Ensemble, Node, NodeTable, Split};
use crate::dataset::{full_mask, Column, Dataset, Outcome, Task, UNKNOWN_LEVEL};
use crate::error::{Error, Result};

/// Gains closer than this (relative) are treated as ties.
const TIE_EPS: f64 = 1e-12;

/// Largest number of present levels for which multiclass categorical splits
/// are searched exhaustively.
const EXHAUSTIVE_LEVELS: usize = 10;

/// Random forest training parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features sampled per node; `floor(sqrt(p))` for classification and
    /// `max(1, floor(p / 3))` for regression when `None`.
    pub mtry: Option<usize>,
    /// Minimum rows per child; 1 for classification and 5 for regression when `None`.
    pub min_leaf: Option<usize>,
    /// Upper bound on the total number of nodes in a tree.
    pub max_nodes: Option<usize>,
    pub seed: u64,
    /// Grow each tree on a bootstrap sample (otherwise on all rows).
    pub bootstrap: bool,
    /// Per-feature penalty coefficients in (0, 1]. When present, the gain of
    /// a feature that no earlier node has split on is multiplied by its
    /// coefficient. The used-feature set is shared by all trees in build order.
    pub regularization: Option<Vec<f64>>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            mtry: None,
            min_leaf: None,
            max_nodes: None,
            seed: 0,
            bootstrap: true,
            regularization: None,
        }
    }
}

impl ForestParams {
    /// Same penalty coefficient for every one of `p` features.
    pub fn with_uniform_penalty(mut self, coef: f64, p: usize) -> Self {
        self.regularization = Some(vec![coef; p]);
        self
    }

    pub fn resolved_mtry(&self, task: Task, p: usize) -> usize {
        self.mtry.unwrap_or(match task {
            Task::Classification => ((p as f64).sqrt().floor() as usize).max(1),
            Task::Regression => (p / 3).max(1),
        })
    }

    pub fn resolved_min_leaf(&self, task: Task) -> usize {
        self.min_leaf.unwrap_or(match task {
            Task::Classification => 1,
            Task::Regression => 5,
        })
    }

    fn validate(&self, p: usize, task: Task) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::param("n_trees must be at least 1"));
        }
        let mtry = self.resolved_mtry(task, p);
        if mtry == 0 || mtry > p {
            return Err(Error::param(format!(
                "mtry must lie in [1, {p}], got {mtry}"
            )));
        }
        if self.resolved_min_leaf(task) == 0 {
            return Err(Error::param("min_leaf must be at least 1"));
        }
        if let Some(lambdas) = &self.regularization {
            if lambdas.len() != p {
                return Err(Error::param(format!(
                    "{} penalty coefficients given for {p} features",
                    lambdas.len()
                )));
            }
            if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
                return Err(Error::param(format!(
                    "penalty coefficient {l} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Train a (possibly regularized) random forest.
///
/// Deterministic for a given seed: tree `t` draws from its own ChaCha stream,
/// so the result does not depend on thread scheduling.
pub fn build_forest(d: &Dataset, params: &ForestParams) -> Result<Ensemble> {
    let p = d.n_predictors();
    let task = d.task();
    if d.n_rows() == 0 {
        return Err(Error::data("cannot train on an empty dataset"));
    }
    if p == 0 {
        return Err(Error::data("cannot train without predictors"));
    }
    params.validate(p, task)?;
    let unknown = |c: &Column| matches!(c, Column::Categorical(v) if v.contains(&UNKNOWN_LEVEL));
    if d.columns().iter().any(unknown) || unknown(d.target()) {
        return Err(Error::data(
            "training data contains levels unknown to its schema",
        ));
    }

    let grower = Grower {
        data: d,
        n_classes: d.schema().target.levels.len(),
        mtry: params.resolved_mtry(task, p),
        min_leaf: params.resolved_min_leaf(task),
        max_nodes: params.max_nodes.unwrap_or(usize::MAX).max(1),
        lambdas: params.regularization.as_deref(),
    };
    let rng_for = |t: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(t as u64);
        rng
    };
    let bag_for = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        let n = d.n_rows();
        let mut counts = vec![0u32; n];
        if params.bootstrap {
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
        } else {
            counts.iter_mut().for_each(|c| *c = 1);
        }
        counts
    };

    let grown: Vec<(NodeTable, Vec<u32>)> = if grower.lambdas.is_some() {
        // the used-feature set couples the trees, so they are grown in order
        let mut used = vec![false; p];
        (0..params.n_trees)
            .map(|t| {
                let mut rng = rng_for(t);
                let bag = bag_for(&mut rng);
                let tree = grower.grow(&bag, &mut rng, &mut used);
                (tree, bag)
            })
            .collect()
    } else {
        (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(t);
                let bag = bag_for(&mut rng);
                let mut used = vec![true; p];
                let tree = grower.grow(&bag, &mut rng, &mut used);
                (tree, bag)
            })
            .collect()
    };
    let (trees, bags): (Vec<_>, Vec<_>) = grown.into_iter().unzip();
    Ok(Ensemble::new(trees, d.schema().clone())?.with_in_bag(bags))
}

struct Grower<'a> {
    data: &'a Dataset,
    n_classes: usize,
    mtry: usize,
    min_leaf: usize,
    max_nodes: usize,
    lambdas: Option<&'a [f64]>,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    var: usize,
    split: Split,
    gain: f64,
    penalized: f64,
}

/// Target summary of a set of rows.
enum Stats {
    Class {
        counts: Vec<usize>,
        n: usize,
    },
    Value {
        sum: f64,
        n: usize,
        min: f64,
        max: f64,
    },
}

impl Stats {
    fn is_pure(&self) -> bool {
        match self {
            Stats::Class { counts, n } => counts.contains(n),
            Stats::Value { min, max, .. } => min == max,
        }
    }

    fn prediction(&self) -> Outcome {
        match self {
            Stats::Class { counts, .. } => Outcome::Class(argmax_first(counts) as u32),
            Stats::Value { sum, n, .. } => Outcome::Value(sum / *n as f64),
        }
    }
}

impl Grower<'_> {
    fn grow(&self, bag: &[u32], rng: &mut ChaCha8Rng, used: &mut [bool]) -> NodeTable {
        let mut rows: Vec<u32> = bag
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i as u32, c as usize))
            .collect();
        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut queue = VecDeque::from([(0usize, 0usize, rows.len())]);
        while let Some((id, lo, hi)) = queue.pop_front() {
            let slice = &mut rows[lo..hi];
            let stats = self.stats(slice);
            let splittable = slice.len() >= 2 * self.min_leaf
                && !stats.is_pure()
                && nodes.len() + 2 <= self.max_nodes;
            let best = if splittable {
                self.best_split(slice, &stats, rng, used)
            } else {
                None
            };
            match best {
                Some(c) => {
                    let mid = self.partition(slice, c.var, c.split);
                    let left = nodes.len();
                    nodes.push(None);
                    nodes.push(None);
                    nodes[id] = Some(Node::Internal {
                        var: c.var,
                        split: c.split,
                        left,
                        right: left + 1,
                        gain: c.gain,
                    });
                    used[c.var] = true;
                    queue.push_back((left, lo, lo + mid));
                    queue.push_back((left + 1, lo + mid, hi));
                }
                None => {
                    nodes[id] = Some(Node::Leaf {
                        pred: stats.prediction(),
                    })
                }
            }
        }
        NodeTable::from_nodes_unchecked(
            nodes
                .into_iter()
                .map(|n| n.expect("every node resolved"))
                .collect(),
        )
    }

    fn stats(&self, rows: &[u32]) -> Stats {
        match self.data.target() {
            Column::Categorical(t) => {
                let mut counts = vec![0usize; self.n_classes];
                for &r in rows {
                    counts[t[r as usize] as usize] += 1;
                }
                Stats::Class {
                    counts,
                    n: rows.len(),
                }
            }
            Column::Numeric(t) => {
                let mut sum = 0.0;
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &r in rows {
                    let y = t[r as usize];
                    sum += y;
                    min = min.min(y);
                    max = max.max(y);
                }
                Stats::Value {
                    sum,
                    n: rows.len(),
                    min,
                    max,
                }
            }
        }
    }

    fn best_split(
        &self,
        rows: &[u32],
        parent: &Stats,
        rng: &mut ChaCha8Rng,
        used: &[bool],
    ) -> Option<Candidate> {
        let p = self.data.n_predictors();
        let mut features = index::sample(rng, p, self.mtry).into_vec();
        features.sort_unstable();
        let mut best: Option<Candidate> = None;
        for var in features {
            let Some((gain, split)) = self.best_split_on(var, rows, parent) else {
                continue;
            };
            let penalized = match self.lambdas {
                Some(l) if !used[var] => l[var] * gain,
                _ => gain,
            };
            if penalized.is_nan() || penalized <= 0.0 {
                continue;
            }
            // features are visited in ascending order, so ties keep the lower index
            if best.is_none_or(|b| beats(penalized, b.penalized)) {
                best = Some(Candidate {
                    var,
                    split,
                    gain,
                    penalized,
                });
            }
        }
        best
    }

    /// Best split of `rows` on one feature: (gain, split).
    fn best_split_on(&self, var: usize, rows: &[u32], parent: &Stats) -> Option<(f64, Split)> {
        match (self.data.column(var), self.data.target(), parent) {
            (Column::Numeric(x), Column::Categorical(t), Stats::Class { counts, n }) => {
                numeric_class_split(x, t, rows, counts, *n, self.min_leaf)
            }
            (Column::Numeric(x), Column::Numeric(t), Stats::Value { sum, n, .. }) => {
                numeric_value_split(x, t, rows, *sum, *n, self.min_leaf)
            }
            (Column::Categorical(x), _, _) => {
                let levels = self.data.schema().predictors[var].levels.len();
                self.categorical_split(x, levels, rows, parent)
            }
            _ => None,
        }
    }

    fn categorical_split(
        &self,
        x: &[u32],
        n_levels: usize,
        rows: &[u32],
        parent: &Stats,
    ) -> Option<(f64, Split)> {
        let full = full_mask(n_levels);
        let min_leaf = self.min_leaf;
        let mut best: Option<(f64, u32)> = None;
        let mut consider = |gain: f64, mask: u32| {
            let mask = mask.min(full ^ mask);
            let better = match best {
                None => true,
                Some((g, m)) => beats(gain, g) || (!beats(g, gain) && mask < m),
            };
            if gain > 0.0 && better {
                best = Some((gain, mask));
            }
        };
        match (self.data.target(), parent) {
            (Column::Categorical(t), Stats::Class { counts: pc, n: pn }) => {
                let k = pc.len();
                let mut per_level = vec![vec![0usize; k]; n_levels];
                for &r in rows {
                    per_level[x[r as usize] as usize][t[r as usize] as usize] += 1;
                }
                let present: Vec<usize> = (0..n_levels)
                    .filter(|&l| per_level[l].iter().any(|&c| c > 0))
                    .collect();
                if present.len() < 2 {
                    return None;
                }
                let parent_score = gini_score(pc, *pn);
                let eval = |subset: &mut dyn Iterator<Item = usize>| -> Option<(f64, u32)> {
                    let mut left = vec![0usize; k];
                    let mut mask = 0u32;
                    for l in subset {
                        mask |= 1 << l;
                        left.iter_mut()
                            .zip(&per_level[l])
                            .for_each(|(a, b)| *a += b);
                    }
                    let nl: usize = left.iter().sum();
                    let nr = pn - nl;
                    if nl < min_leaf || nr < min_leaf {
                        return None;
                    }
                    let right: Vec<usize> = pc.iter().zip(&left).map(|(a, b)| a - b).collect();
                    Some((
                        gini_score(&left, nl) + gini_score(&right, nr) - parent_score,
                        mask,
                    ))
                };
                if k <= 2 || present.len() > EXHAUSTIVE_LEVELS {
                    // order levels by the share of the parent's majority class; for
                    // two classes the best split is a prefix of this order
                    let major = argmax_first(pc);
                    let mut order = present.clone();
                    let share = |l: usize| {
                        per_level[l][major] as f64 / per_level[l].iter().sum::<usize>() as f64
                    };
                    order.sort_by(|&a, &b| share(a).total_cmp(&share(b)).then(a.cmp(&b)));
                    for cut in 1..order.len() {
                        if let Some((g, m)) = eval(&mut order[..cut].iter().copied()) {
                            consider(g, m);
                        }
                    }
                } else {
                    let first = present[0];
                    let rest = &present[1..];
                    for bits in 0..(1u32 << rest.len()) - 1 {
                        let mut subset = std::iter::once(first).chain(
                            rest.iter()
                                .enumerate()
                                .filter(|(i, _)| bits & (1 << i) != 0)
                                .map(|(_, &l)| l),
                        );
                        if let Some((g, m)) = eval(&mut subset) {
                            consider(g, m);
                        }
                    }
                }
            }
            (Column::Numeric(t), Stats::Value { sum: ps, n: pn, .. }) => {
                let mut sums = vec![0.0; n_levels];
                let mut cnts = vec![0usize; n_levels];
                for &r in rows {
                    let l = x[r as usize] as usize;
                    sums[l] += t[r as usize];
                    cnts[l] += 1;
                }
                let mut order: Vec<usize> = (0..n_levels).filter(|&l| cnts[l] > 0).collect();
                if order.len() < 2 {
                    return None;
                }
                let mean = |l: usize| sums[l] / cnts[l] as f64;
                order.sort_by(|&a, &b| mean(a).total_cmp(&mean(b)).then(a.cmp(&b)));
                let parent_score = ps * ps / *pn as f64;
                let (mut sl, mut nl, mut mask) = (0.0, 0usize, 0u32);
                for &l in &order[..order.len() - 1] {
                    sl += sums[l];
                    nl += cnts[l];
                    mask |= 1 << l;
                    let nr = pn - nl;
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let sr = ps - sl;
                    consider(
                        sl * sl / nl as f64 + sr * sr / nr as f64 - parent_score,
                        mask,
                    );
                }
            }
            _ => return None,
        }
        best.map(|(g, m)| (g, Split::Categorical(m)))
    }

    /// Reorder `rows` so the left child comes first; returns its size.
    fn partition(&self, rows: &mut [u32], var: usize, split: Split) -> usize {
        let goes_left = |r: u32| match (self.data.column(var), split) {
            (Column::Numeric(x), Split::Numeric(t)) => x[r as usize] <= t,
            (Column::Categorical(x), Split::Categorical(m)) => m & (1 << x[r as usize]) != 0,
            _ => unreachable!("split type matches column type"),
        };
        let mut mid = 0;
        for i in 0..rows.len() {
            if goes_left(rows[i]) {
                rows.swap(i, mid);
                mid += 1;
            }
        }
        mid
    }
}

fn beats(a: f64, b: f64) -> bool {
    a > b + TIE_EPS * b.abs().max(1.0)
}

/// `sum(c^2) / n`; gini decrease weighted by node size is
/// `score(left) + score(right) - score(parent)`.
fn gini_score(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= a && m < b {
        m
    } else {
        a
    }
}

fn numeric_class_split(
    x: &[f64],
    t: &[u32],
    rows: &[u32],
    parent: &[usize],
    n: usize,
    min_leaf: usize,
) -> Option<(f64, Split)> {
    let mut pairs: Vec<(f64, u32)> = rows
        .iter()
        .map(|&r| (x[r as usize], t[r as usize]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs[0].0 == pairs[n - 1].0 {
        return None;
    }
    let parent_score = gini_score(parent, n);
    let mut left = vec![0usize; parent.len()];
    let mut right = parent.to_vec();
    // running sums of squared counts, kept exact in integers
    let mut sq_left: u64 = 0;
    let mut sq_right: u64 = parent.iter().map(|&c| (c * c) as u64).sum();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let c = pairs[i].1 as usize;
        sq_left += 2 * left[c] as u64 + 1;
        sq_right -= 2 * right[c] as u64 - 1;
        left[c] += 1;
        right[c] -= 1;
        let (a, b) = (pairs[i].0, pairs[i + 1].0);
        let nl = i + 1;
        let nr = n - nl;
        if a == b || nl < min_leaf || nr < min_leaf {
            continue;
        }
        let gain = sq_left as f64 / nl as f64 + sq_right as f64 / nr as f64 - parent_score;
        if gain > 0.0 && best.is_none_or(|(g, _)| beats(gain, g)) {
            best = Some((gain, midpoint(a, b)));
        }
    }
    best.map(|(g, s)| (g, Split::Numeric(s)))
}

fn numeric_value_split(
    x: &[f64],
    t: &[f64],
    rows: &[u32],
    sum: f64,
    n: usize,
    min_leaf: usize,
) -> Option<(f64, Split)> {
    let mut pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|&r| (x[r as usize], t[r as usize]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs[0].0 == pairs[n - 1].0 {
        return None;
    }
    let parent_score = sum * sum / n as f64;
    let mut sl = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        sl += pairs[i].1;
        let (a, b) = (pairs[i].0, pairs[i + 1].0);
        let nl = i + 1;
        let nr = n - nl;
        if a == b || nl < min_leaf || nr < min_leaf {
            continue;
        }
        let sr = sum - sl;
        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent_score;
        if gain > 0.0 && best.is_none_or(|(g, _)| beats(gain, g)) {
            best = Some((gain, midpoint(a, b)));
        }
    }
    best.map(|(g, s)| (g, Split::Numeric(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_team_data, ColumnSchema, Schema};

    fn regression_data() -> Dataset {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| if *v < 20.0 { 1.0 } else { 5.0 })
            .collect();
        Dataset::new(
            Schema {
                predictors: vec![ColumnSchema::numeric("x")],
                target: ColumnSchema::numeric("y"),
            },
            vec![Column::Numeric(x)],
            Column::Numeric(y),
        )
        .unwrap()
    }

    #[test]
    fn constant_target_gives_single_leaves() {
        let mut d = generate_team_data(30, 4, 2, 1).unwrap();
        let schema = d.schema().clone();
        let cols = d.columns().to_vec();
        d = Dataset::new(schema, cols, Column::Categorical(vec![1; 30])).unwrap();
        let e = build_forest(
            &d,
            &ForestParams {
                n_trees: 5,
                ..Default::default()
            },
        )
        .unwrap();
        for t in e.trees() {
            assert_eq!(
                t.nodes(),
                &[Node::Leaf {
                    pred: Outcome::Class(1)
                }]
            );
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let d = generate_team_data(60, 6, 3, 2).unwrap();
        let params = ForestParams {
            n_trees: 10,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            build_forest(&d, &params).unwrap(),
            build_forest(&d, &params).unwrap()
        );
    }

    #[test]
    fn unit_penalty_matches_plain_forest() {
        let d = generate_team_data(80, 10, 5, 3).unwrap();
        let plain = ForestParams {
            n_trees: 8,
            seed: 4,
            ..Default::default()
        };
        let reg = plain.clone().with_uniform_penalty(1.0, 10);
        let a = build_forest(&d, &plain).unwrap();
        let b = build_forest(&d, &reg).unwrap();
        assert_eq!(a.trees(), b.trees());
    }

    #[test]
    fn regression_split_at_midpoint() {
        let d = regression_data();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            mtry: Some(1),
            ..Default::default()
        };
        let e = build_forest(&d, &params).unwrap();
        match &e.trees()[0].nodes()[0] {
            Node::Internal {
                split: Split::Numeric(t),
                ..
            } => assert_eq!(*t, 19.5),
            n => panic!("unexpected root {n:?}"),
        }
        assert_eq!(e.error(&d).unwrap(), 0.0);
    }

    #[test]
    fn leaves_hold_majority_of_their_rows() {
        let d = generate_team_data(100, 8, 4, 5).unwrap();
        let params = ForestParams {
            n_trees: 3,
            bootstrap: false,
            mtry: Some(8),
            ..Default::default()
        };
        let e = build_forest(&d, &params).unwrap();
        // grown to purity without bootstrap: every training row is fitted
        for t in e.trees() {
            for i in 0..d.n_rows() {
                assert_eq!(t.route_row(&d, i).unwrap().1, d.outcome(i));
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let d = generate_team_data(20, 4, 2, 1).unwrap();
        let bad = [
            ForestParams {
                n_trees: 0,
                ..Default::default()
            },
            ForestParams {
                mtry: Some(5),
                ..Default::default()
            },
            ForestParams::default().with_uniform_penalty(0.0, 4),
            ForestParams::default().with_uniform_penalty(0.5, 3),
        ];
        for p in bad {
            assert!(build_forest(&d, &p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn max_nodes_caps_tree_size() {
        let d = generate_team_data(100, 8, 4, 5).unwrap();
        let params = ForestParams {
            n_trees: 4,
            max_nodes: Some(5),
            ..Default::default()
        };
        let e = build_forest(&d, &params).unwrap();
        assert!(e.trees().iter().all(|t| t.len() <= 5));
    }

    #[test]
    fn multiclass_categorical_exhaustive() {
        // 3 classes determined by a 4-level feature: {a,b} -> c0, {c} -> c1, {d} -> c2
        let levels = ["a", "b", "c", "d"];
        let x: Vec<u32> = (0..40).map(|i| (i % 4) as u32).collect();
        let y: Vec<u32> = x
            .iter()
            .map(|&l| match l {
                0 | 1 => 0,
                2 => 1,
                _ => 2,
            })
            .collect();
        let d = Dataset::new(
            Schema {
                predictors: vec![ColumnSchema::categorical("x", levels)],
                target: ColumnSchema::categorical("y", ["c0", "c1", "c2"]),
            },
            vec![Column::Categorical(x)],
            Column::Categorical(y),
        )
        .unwrap();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let e = build_forest(&d, &params).unwrap();
        assert_eq!(e.error(&d).unwrap(), 0.0);
        assert_eq!(e.trees()[0].n_leaves(), 3);
    }
}
