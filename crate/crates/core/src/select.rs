//! Condition selection with a guided regularized forest over the
//! condition-indicator matrix.

use rayon::prelude::*;

use crate::dataset::{Column, ColumnSchema, Dataset, Schema};
use crate::error::{Error, Result};
use crate::rules::Condition;
use crate::trees::{build_forest, ForestParams};

/// Smallest penalty coefficient handed to the forest.
const MIN_LAMBDA: f64 = 1e-6;

/// Binary indicators of condition satisfaction plus the original target.
///
/// Column `j` is categorical with levels `["0", "1"]`; level 1 means row `i`
/// satisfies condition `j`.
#[derive(Clone, Debug)]
pub struct IndicatorDataset {
    data: Dataset,
}

impl IndicatorDataset {
    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn n_columns(&self) -> usize {
        self.data.n_predictors()
    }

    pub fn get(&self, row: usize, j: usize) -> bool {
        matches!(self.data.column(j), Column::Categorical(v) if v[row] == 1)
    }

    /// Number of rows satisfying condition `j`.
    pub fn column_sum(&self, j: usize) -> usize {
        match self.data.column(j) {
            Column::Categorical(v) => v.iter().filter(|&&b| b == 1).count(),
            Column::Numeric(_) => 0,
        }
    }

    fn is_constant(&self, j: usize) -> bool {
        let s = self.column_sum(j);
        s == 0 || s == self.data.n_rows()
    }
}

/// Evaluate every condition on every row of `d`.
pub fn indicator_matrix(conditions: &[Condition], d: &Dataset) -> Result<IndicatorDataset> {
    if d.n_rows() == 0 {
        return Err(Error::data("indicator matrix needs a nonempty dataset"));
    }
    let columns: Vec<Column> = conditions
        .par_iter()
        .map(|c| {
            Column::Categorical(
                (0..d.n_rows())
                    .map(|row| u32::from(c.matches_row(d, row)))
                    .collect(),
            )
        })
        .collect();
    let schema = Schema {
        predictors: (1..=conditions.len())
            .map(|j| ColumnSchema::categorical(format!("I{j}"), ["0", "1"]))
            .collect(),
        target: d.schema().target.clone(),
    };
    Ok(IndicatorDataset {
        data: Dataset::new(schema, columns, d.target().clone())?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionParams {
    /// Base coefficient in (0, 1].
    pub lambda0: f64,
    /// Length regularization weight in [0, 1].
    pub gamma: f64,
    /// Importance weight in [0, 1].
    pub beta: f64,
    /// Parameters of the regularized forest. `mtry = None` means all columns.
    pub forest: ForestParams,
    /// Score the selected conditions with an ordinary forest on them alone.
    pub rescore: bool,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            lambda0: 1.0,
            gamma: 0.1,
            beta: 0.0,
            forest: ForestParams {
                n_trees: 50,
                min_leaf: Some(1),
                ..ForestParams::default()
            },
            rescore: true,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0 <= 1.0) {
            return Err(Error::param(format!(
                "lambda0 {} outside (0, 1]",
                self.lambda0
            )));
        }
        for (name, v) in [("gamma", self.gamma), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `λ_i = λ0 (1 - γ l_i / l* + β imp_i)`, clamped into (0, 1].
pub fn complexity_lambdas(
    lengths: &[usize],
    params: &SelectionParams,
    importances: Option<&[f64]>,
) -> Result<Vec<f64>> {
    params.validate()?;
    let imp = match importances {
        Some(imp) if imp.len() != lengths.len() => {
            return Err(Error::param(format!(
                "{} importances given for {} conditions",
                imp.len(),
                lengths.len()
            )))
        }
        Some(imp) => Some(imp),
        None if params.beta > 0.0 => {
            return Err(Error::param("beta > 0 requires importance scores"));
        }
        None => None,
    };
    let l_star = lengths.iter().copied().max().unwrap_or(0).max(1) as f64;
    Ok(lengths
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let bonus = imp.map_or(0.0, |imp| params.beta * imp[i]);
            let lambda = params.lambda0 * (1.0 - params.gamma * l as f64 / l_star + bonus);
            lambda.clamp(MIN_LAMBDA, 1.0)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Indices into the input condition list, best score first.
    pub indices: Vec<usize>,
    pub conditions: Vec<Condition>,
    /// Rescored importance (or the guided forest's importance when
    /// rescoring is off), aligned with `conditions`.
    pub scores: Vec<f64>,
    /// Seed of the guided forest.
    pub seed: u64,
}

/// Pick a compact subset of `conditions` that predicts the target of `d`.
pub fn select_conditions(
    conditions: &[Condition],
    d: &Dataset,
    params: &SelectionParams,
) -> Result<Selection> {
    params.validate()?;
    if conditions.is_empty() {
        return Err(Error::param("selection needs at least one condition"));
    }
    let ind = indicator_matrix(conditions, d)?;
    let kept: Vec<usize> = (0..conditions.len())
        .filter(|&j| !ind.is_constant(j))
        .collect();
    let empty = Selection {
        indices: Vec::new(),
        conditions: Vec::new(),
        scores: Vec::new(),
        seed: params.forest.seed,
    };
    if kept.is_empty() {
        return Ok(empty);
    }
    let data = ind.data.select_columns(&kept);
    let mut forest = params.forest.clone();
    forest.mtry = Some(forest.mtry.unwrap_or(kept.len()).min(kept.len()));

    let lengths: Vec<usize> = kept.iter().map(|&j| conditions[j].len()).collect();
    let importances = if params.beta > 0.0 {
        let plain = ForestParams {
            regularization: None,
            ..forest.clone()
        };
        Some(build_forest(&data, &plain)?.importance())
    } else {
        None
    };
    let lambdas = complexity_lambdas(&lengths, params, importances.as_deref())?;
    forest.regularization = Some(lambdas);
    let guided = build_forest(&data, &forest)?;
    let used = guided.used_features();
    if used.is_empty() {
        return Ok(empty);
    }

    let scores: Vec<f64> = if params.rescore {
        let sub = data.select_columns(&used);
        let plain = ForestParams {
            regularization: None,
            mtry: Some(forest.mtry.unwrap_or(used.len()).min(used.len())),
            ..forest.clone()
        };
        build_forest(&sub, &plain)?.importance()
    } else {
        let imp = guided.importance();
        used.iter().map(|&u| imp[u]).collect()
    };
    let mut order: Vec<usize> = (0..used.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let indices: Vec<usize> = order.iter().map(|&o| kept[used[o]]).collect();
    Ok(Selection {
        conditions: indices.iter().map(|&j| conditions[j].clone()).collect(),
        scores: order.iter().map(|&o| scores[o]).collect(),
        indices,
        seed: params.forest.seed,
    })
}
