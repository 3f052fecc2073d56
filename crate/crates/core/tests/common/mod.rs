//! Random fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod props;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treerules::{Column, ColumnSchema, Dataset, Node, NodeTable, Outcome, Schema, Split, Task};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two to five predictors, mixing numeric and categorical columns.
pub fn random_schema(rng: &mut impl Rng, task: Task) -> Schema {
    let p = rng.random_range(2..=5);
    let predictors = (0..p)
        .map(|j| {
            let name = format!("X{}", j + 1);
            if rng.random_bool(0.5) {
                ColumnSchema::numeric(name)
            } else {
                let k = rng.random_range(2..=4);
                ColumnSchema::categorical(name, (0..k).map(|l| format!("l{l}")))
            }
        })
        .collect();
    let target = match task {
        Task::Classification => {
            let k = rng.random_range(2..=3);
            ColumnSchema::categorical("y", (0..k).map(|l| format!("c{l}")))
        }
        Task::Regression => ColumnSchema::numeric("y"),
    };
    Schema { predictors, target }
}

/// Numeric values live on a half-integer grid in [0, 10] so that ties with
/// split thresholds are common.
fn grid(rng: &mut impl Rng) -> f64 {
    f64::from(rng.random_range(0..=20u32)) / 2.0
}

pub fn random_dataset(rng: &mut impl Rng, schema: &Schema, n: usize) -> Dataset {
    let columns = schema
        .predictors
        .iter()
        .map(|cs| {
            if cs.is_categorical() {
                let k = cs.levels.len() as u32;
                Column::Categorical((0..n).map(|_| rng.random_range(0..k)).collect())
            } else {
                Column::Numeric((0..n).map(|_| grid(rng)).collect())
            }
        })
        .collect();
    let target = if schema.target.is_categorical() {
        let k = schema.target.levels.len() as u32;
        Column::Categorical((0..n).map(|_| rng.random_range(0..k)).collect())
    } else {
        Column::Numeric((0..n).map(|_| grid(rng)).collect())
    };
    Dataset::new(schema.clone(), columns, target).expect("valid random dataset")
}

fn random_outcome(rng: &mut impl Rng, schema: &Schema) -> Outcome {
    if schema.target.is_categorical() {
        Outcome::Class(rng.random_range(0..schema.target.levels.len() as u32))
    } else {
        Outcome::Value(grid(rng))
    }
}

/// A random binary tree of at most `max_depth` levels, laid out breadth-first
/// so that children always follow their parent.
pub fn random_tree(rng: &mut impl Rng, schema: &Schema, max_depth: usize) -> NodeTable {
    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut queue = std::collections::VecDeque::from([(0usize, 1usize)]);
    while let Some((i, depth)) = queue.pop_front() {
        let split = depth < max_depth && (depth == 1 || rng.random_bool(0.7));
        if !split {
            nodes[i] = Some(Node::Leaf {
                pred: random_outcome(rng, schema),
            });
            continue;
        }
        let var = rng.random_range(0..schema.predictors.len());
        let cs = &schema.predictors[var];
        let split = if cs.is_categorical() {
            Split::Categorical(rng.random_range(1..cs.full_mask()))
        } else {
            Split::Numeric(grid(rng))
        };
        let left = nodes.len();
        nodes.push(None);
        nodes.push(None);
        nodes[i] = Some(Node::Internal {
            var,
            split,
            left,
            right: left + 1,
            gain: 0.0,
        });
        queue.push_back((left, depth + 1));
        queue.push_back((left + 1, depth + 1));
    }
    let nodes = nodes
        .into_iter()
        .map(|n| n.expect("every node filled"))
        .collect();
    NodeTable::new(nodes, schema).expect("random tree is valid")
}
