//! Binary decision trees stored as flat node tables, and ensembles of them.
//!
//! A node table lists nodes in id order with the root first. Internal nodes
//! reference two children with larger ids. Numeric splits send an instance
//! left when its value is `<=` the split point; categorical splits send it
//! left when its level's bit is set in the split mask.

mod builder;

use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{format_number, Cell, Column, ColumnKind, Dataset, Outcome, Schema, Task};
use crate::error::{Error, Result};

pub use builder::{build_forest, ForestParams};

/// Split predicate of an internal node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Split {
    /// Go left iff `value <= threshold`.
    Numeric(f64),
    /// Go left iff bit `level` of the mask is set.
    Categorical(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        pred: Outcome,
    },
    Internal {
        /// 0-based predictor index.
        var: usize,
        split: Split,
        /// 0-based node indices.
        left: usize,
        right: usize,
        /// Weighted impurity decrease recorded at training time (0 when imported).
        gain: f64,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// One tree. Node `i` of the vector has id `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    nodes: Vec<Node>,
}

impl NodeTable {
    /// Build a node table, checking the structural invariants against `schema`.
    pub fn new(nodes: Vec<Node>, schema: &Schema) -> Result<Self> {
        let t = NodeTable { nodes };
        t.validate(0, schema)?;
        Ok(t)
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node>) -> Self {
        NodeTable { nodes }
    }

    /// A single-leaf tree.
    pub fn leaf(pred: Outcome) -> Self {
        NodeTable {
            nodes: vec![Node::Leaf { pred }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Equality of everything except recorded gains.
    pub fn same_structure(&self, other: &NodeTable) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| match (a, b) {
                    (Node::Leaf { pred: p }, Node::Leaf { pred: q }) => p == q,
                    (
                        Node::Internal {
                            var: v1,
                            split: s1,
                            left: l1,
                            right: r1,
                            ..
                        },
                        Node::Internal {
                            var: v2,
                            split: s2,
                            left: l2,
                            right: r2,
                            ..
                        },
                    ) => v1 == v2 && s1 == s2 && l1 == l2 && r1 == r2,
                    _ => false,
                })
    }

    fn validate(&self, tree: usize, schema: &Schema) -> Result<()> {
        let err = |node: usize, message: String| Error::NodeTable {
            tree,
            node,
            message,
        };
        let m = self.nodes.len();
        if m == 0 {
            return Err(err(0, "tree has no nodes".into()));
        }
        let mut parents = vec![0usize; m];
        for (i, node) in self.nodes.iter().enumerate() {
            let id = i + 1;
            match node {
                Node::Leaf { pred } => check_pred(pred, schema).map_err(|e| err(id, e))?,
                Node::Internal {
                    var,
                    split,
                    left,
                    right,
                    ..
                } => {
                    for (side, &c) in [("left", left), ("right", right)] {
                        if c <= i || c >= m {
                            return Err(err(
                                id,
                                format!("{side} child {} must be in ({id}, {m}]", c + 1),
                            ));
                        }
                        parents[c] += 1;
                    }
                    if left == right {
                        return Err(err(id, "left and right child coincide".into()));
                    }
                    let cs = schema.predictors.get(*var).ok_or_else(|| {
                        err(id, format!("split variable {} out of range", var + 1))
                    })?;
                    match (split, cs.kind) {
                        (Split::Numeric(t), ColumnKind::Numeric) if t.is_finite() => {}
                        (Split::Categorical(mask), ColumnKind::Categorical) => {
                            let full = cs.full_mask();
                            if *mask == 0 || *mask & full == full || *mask & !full != 0 {
                                return Err(err(
                                    id,
                                    format!(
                                        "invalid level mask {mask} for {} levels",
                                        cs.levels.len()
                                    ),
                                ));
                            }
                        }
                        _ => {
                            return Err(err(
                                id,
                                format!("split point does not fit variable X{}", var + 1),
                            ))
                        }
                    }
                }
            }
        }
        if parents[0] != 0 {
            return Err(err(1, "root node has a parent".into()));
        }
        if let Some(i) = (1..m).find(|&i| parents[i] != 1) {
            return Err(err(
                i + 1,
                format!("node has {} parents, expected exactly one", parents[i]),
            ));
        }
        Ok(())
    }

    /// Route an instance to its leaf. Returns the 1-based leaf id and its prediction.
    pub fn route(&self, x: &[Cell]) -> Result<(usize, Outcome)> {
        self.route_by(|var| x[var])
    }

    /// Route row `row` of `d`.
    pub fn route_row(&self, d: &Dataset, row: usize) -> Result<(usize, Outcome)> {
        self.route_by(|var| d.cell(row, var))
    }

    fn route_by(&self, cell: impl Fn(usize) -> Cell) -> Result<(usize, Outcome)> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { pred } => return Ok((i + 1, *pred)),
                Node::Internal {
                    var,
                    split,
                    left,
                    right,
                    ..
                } => {
                    let go_left = match (split, cell(*var)) {
                        (Split::Numeric(t), Cell::Num(v)) => v <= *t,
                        (Split::Categorical(mask), Cell::Level(l)) => {
                            if l >= 32 {
                                return Err(Error::UnknownLevel { var: var + 1 });
                            }
                            mask & (1u32 << l) != 0
                        }
                        _ => {
                            return Err(Error::data(format!(
                                "instance cell for X{} does not match the split type",
                                var + 1
                            )))
                        }
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }
}

fn check_pred(pred: &Outcome, schema: &Schema) -> std::result::Result<(), String> {
    match (pred, schema.task()) {
        (Outcome::Class(c), Task::Classification) if (*c as usize) < schema.target.levels.len() => {
            Ok(())
        }
        (Outcome::Value(v), Task::Regression) if v.is_finite() => Ok(()),
        _ => Err("leaf prediction does not match the target".into()),
    }
}

/// A list of trees built against one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    trees: Vec<NodeTable>,
    schema: Schema,
    /// Per tree, the bootstrap multiplicity of every training row.
    in_bag: Option<Vec<Vec<u32>>>,
}

impl Ensemble {
    pub fn new(trees: Vec<NodeTable>, schema: Schema) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::data("an ensemble needs at least one tree"));
        }
        for (t, tree) in trees.iter().enumerate() {
            tree.validate(t + 1, &schema)?;
        }
        Ok(Ensemble {
            trees,
            schema,
            in_bag: None,
        })
    }

    pub(crate) fn with_in_bag(mut self, in_bag: Vec<Vec<u32>>) -> Self {
        self.in_bag = Some(in_bag);
        self
    }

    pub fn trees(&self) -> &[NodeTable] {
        &self.trees
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn task(&self) -> Task {
        self.schema.task()
    }

    pub fn same_structure(&self, other: &Ensemble) -> bool {
        self.schema == other.schema
            && self.trees.len() == other.trees.len()
            && self
                .trees
                .iter()
                .zip(&other.trees)
                .all(|(a, b)| a.same_structure(b))
    }

    /// Predictor indices (0-based, sorted) used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used = vec![false; self.schema.n_predictors()];
        for tree in &self.trees {
            for node in tree.nodes() {
                if let Node::Internal { var, .. } = node {
                    used[*var] = true;
                }
            }
        }
        used.iter()
            .enumerate()
            .filter_map(|(i, &u)| u.then_some(i))
            .collect()
    }

    /// Aggregate prediction for row `row` of `d`: majority vote (ties to the
    /// lower class index) or mean.
    pub fn predict_row(&self, d: &Dataset, row: usize) -> Result<Outcome> {
        let preds = self
            .trees
            .iter()
            .map(|t| t.route_row(d, row).map(|(_, p)| p))
            .collect::<Result<Vec<_>>>()?;
        Ok(aggregate(&preds, self.schema.target.levels.len()))
    }

    /// Misclassification rate or MSE of the aggregate prediction on `d`.
    pub fn error(&self, d: &Dataset) -> Result<f64> {
        let preds = (0..d.n_rows())
            .map(|i| self.predict_row(d, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(prediction_error(d, &preds))
    }

    /// Out-of-bag error on the training data the forest was built from.
    ///
    /// `None` when the ensemble was not trained here or no row was ever out of bag.
    pub fn oob_error(&self, train: &Dataset) -> Option<f64> {
        let in_bag = self.in_bag.as_ref()?;
        let n_levels = self.schema.target.levels.len();
        let mut wrong = 0.0;
        let mut count = 0usize;
        for row in 0..train.n_rows() {
            let preds: Vec<Outcome> = self
                .trees
                .iter()
                .zip(in_bag)
                .filter(|(_, bag)| bag.get(row) == Some(&0))
                .filter_map(|(t, _)| t.route_row(train, row).ok().map(|(_, p)| p))
                .collect();
            if preds.is_empty() {
                continue;
            }
            count += 1;
            match (aggregate(&preds, n_levels), train.outcome(row)) {
                (Outcome::Class(a), Outcome::Class(b)) => wrong += f64::from(u8::from(a != b)),
                (Outcome::Value(a), Outcome::Value(b)) => wrong += (a - b) * (a - b),
                _ => return None,
            }
        }
        (count > 0).then(|| wrong / count as f64)
    }

    /// Mean impurity decrease per predictor, normalized so the top feature scores 1.
    pub fn importance(&self) -> Vec<f64> {
        let p = self.schema.n_predictors();
        let mut total = vec![0.0; p];
        for tree in &self.trees {
            for node in tree.nodes() {
                if let Node::Internal { var, gain, .. } = node {
                    total[*var] += gain.max(0.0);
                }
            }
        }
        let n = self.trees.len() as f64;
        total.iter_mut().for_each(|v| *v /= n);
        let max = total.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            total.iter_mut().for_each(|v| *v /= max);
        }
        total
    }

    /// Write the node-table interchange CSV.
    pub fn export_node_tables<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(NODE_TABLE_HEADER)?;
        for (t, tree) in self.trees.iter().enumerate() {
            for (i, node) in tree.nodes().iter().enumerate() {
                let rec: [String; 8] = match node {
                    Node::Leaf { pred } => [
                        (t + 1).to_string(),
                        (i + 1).to_string(),
                        "0".into(),
                        "0".into(),
                        "0".into(),
                        "0".into(),
                        "-1".into(),
                        self.schema.format_outcome(pred),
                    ],
                    Node::Internal {
                        var,
                        split,
                        left,
                        right,
                        ..
                    } => [
                        (t + 1).to_string(),
                        (i + 1).to_string(),
                        (left + 1).to_string(),
                        (right + 1).to_string(),
                        (var + 1).to_string(),
                        match split {
                            Split::Numeric(v) => format_number(*v),
                            Split::Categorical(mask) => mask.to_string(),
                        },
                        "1".into(),
                        "0".into(),
                    ],
                };
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.export_node_tables(std::io::BufWriter::new(f))
    }

    /// Read the node-table interchange CSV, interpreting it against `schema`.
    pub fn import_node_tables<R: Read>(reader: R, schema: &Schema) -> Result<Ensemble> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != NODE_TABLE_HEADER {
            return Err(Error::data(format!(
                "node table header must be `{}`",
                NODE_TABLE_HEADER.join(",")
            )));
        }
        let mut trees: Vec<Vec<Node>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let tree_id: usize = parse_int(field(0), 0, 0, "tree_id")?;
            let node_id: usize = parse_int(field(1), tree_id, 0, "node")?;
            if tree_id == trees.len() + 1 {
                trees.push(Vec::new());
            } else if tree_id != trees.len() || tree_id == 0 {
                return Err(Error::NodeTable {
                    tree: tree_id,
                    node: node_id,
                    message: "tree ids must start at 1 and appear in ascending contiguous blocks"
                        .into(),
                });
            }
            let nodes = trees.last_mut().expect("pushed above");
            if node_id != nodes.len() + 1 {
                return Err(Error::NodeTable {
                    tree: tree_id,
                    node: node_id,
                    message: format!("expected node id {}", nodes.len() + 1),
                });
            }
            let err = |message: String| Error::NodeTable {
                tree: tree_id,
                node: node_id,
                message,
            };
            let left: usize = parse_int(field(2), tree_id, node_id, "left")?;
            let right: usize = parse_int(field(3), tree_id, node_id, "right")?;
            let var: usize = parse_int(field(4), tree_id, node_id, "split_var")?;
            let status: i64 = field(6)
                .parse()
                .map_err(|_| err(format!("invalid status `{}`", field(6))))?;
            let point = field(5);
            let pred = field(7);
            let node = match status {
                -1 => {
                    if left != 0 || right != 0 || var != 0 || point.parse::<f64>() != Ok(0.0) {
                        return Err(err(
                            "leaf must have 0 for left, right, split_var and split_point".into(),
                        ));
                    }
                    Node::Leaf {
                        pred: schema.parse_outcome(pred).map_err(|e| err(e.to_string()))?,
                    }
                }
                1 => {
                    if left == 0 || right == 0 || var == 0 {
                        return Err(err(
                            "internal node must have two children and a split variable".into(),
                        ));
                    }
                    if pred != "0" {
                        return Err(err(format!("internal node pred must be 0, found `{pred}`")));
                    }
                    let cs = schema
                        .predictors
                        .get(var - 1)
                        .ok_or_else(|| err(format!("split variable {var} out of range")))?;
                    let split = match cs.kind {
                        ColumnKind::Numeric => Split::Numeric(
                            point
                                .parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| err(format!("invalid split point `{point}`")))?,
                        ),
                        ColumnKind::Categorical => Split::Categorical(
                            point
                                .parse::<u32>()
                                .map_err(|_| err(format!("invalid level mask `{point}`")))?,
                        ),
                    };
                    Node::Internal {
                        var: var - 1,
                        split,
                        left: left - 1,
                        right: right - 1,
                        gain: 0.0,
                    }
                }
                s => return Err(err(format!("status must be -1 (leaf) or 1, found {s}"))),
            };
            nodes.push(node);
        }
        let trees = trees
            .into_iter()
            .map(NodeTable::from_nodes_unchecked)
            .collect();
        Ensemble::new(trees, schema.clone())
    }

    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Ensemble> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::import_node_tables(std::io::BufReader::new(f), schema)
    }
}

pub const NODE_TABLE_HEADER: [&str; 8] = [
    "tree_id",
    "node",
    "left",
    "right",
    "split_var",
    "split_point",
    "status",
    "pred",
];

fn parse_int(s: &str, tree: usize, node: usize, what: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| Error::NodeTable {
        tree,
        node,
        message: format!("invalid {what} `{s}`"),
    })
}

pub(crate) fn aggregate(preds: &[Outcome], n_levels: usize) -> Outcome {
    match preds.first() {
        Some(Outcome::Class(_)) => {
            let mut votes = vec![0usize; n_levels.max(1)];
            for p in preds {
                if let Outcome::Class(c) = p {
                    if let Some(v) = votes.get_mut(*c as usize) {
                        *v += 1;
                    }
                }
            }
            Outcome::Class(argmax_first(&votes) as u32)
        }
        _ => {
            let sum: f64 = preds.iter().filter_map(Outcome::value).sum();
            Outcome::Value(sum / preds.len().max(1) as f64)
        }
    }
}

/// Index of the first maximum.
pub(crate) fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Misclassification rate (classification) or mean squared error (regression).
pub(crate) fn prediction_error(d: &Dataset, preds: &[Outcome]) -> f64 {
    let n = d.n_rows();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = match d.target() {
        Column::Categorical(t) => preds
            .iter()
            .zip(t)
            .filter(|(p, &y)| p.class() != Some(y))
            .count() as f64,
        Column::Numeric(t) => preds
            .iter()
            .zip(t)
            .map(|(p, y)| {
                let e = p.value().unwrap_or(f64::NAN) - y;
                e * e
            })
            .sum(),
    };
    total / n as f64
}
