//! Column-typed tabular data: loading, splitting, target discretization and
//! the synthetic "team" generator.
//!
//! Categorical cells are stored as level indices into the column's level list.
//! Level order is the order of first appearance in the source file, and that
//! order fixes the bit positions used by categorical splits and condition sets.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Maximum number of levels a categorical predictor may have.
pub const MAX_LEVELS: usize = 32;

/// Level index used for categorical tokens that are absent from a schema.
pub const UNKNOWN_LEVEL: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Level tokens in first-appearance order; empty for numeric columns.
    pub levels: Vec<String>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    pub fn level_index(&self, token: &str) -> Option<u32> {
        self.levels
            .iter()
            .position(|l| l == token)
            .map(|i| i as u32)
    }

    /// Bitmask with one bit per level.
    pub fn full_mask(&self) -> u32 {
        full_mask(self.levels.len())
    }
}

pub(crate) fn full_mask(levels: usize) -> u32 {
    if levels >= 32 {
        u32::MAX
    } else {
        (1u32 << levels) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Classification,
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

/// A predicted or assigned outcome: a class index or a numeric value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Class(u32),
    Value(f64),
}

impl Outcome {
    pub fn class(&self) -> Option<u32> {
        match *self {
            Outcome::Class(c) => Some(c),
            Outcome::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Outcome::Value(v) => Some(v),
            Outcome::Class(_) => None,
        }
    }
}

/// Predictor and target column descriptions shared by datasets and ensembles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub predictors: Vec<ColumnSchema>,
    pub target: ColumnSchema,
}

impl Schema {
    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    pub fn task(&self) -> Task {
        match self.target.kind {
            ColumnKind::Categorical => Task::Classification,
            ColumnKind::Numeric => Task::Regression,
        }
    }

    pub fn format_outcome(&self, outcome: &Outcome) -> String {
        match *outcome {
            Outcome::Class(c) => self
                .target
                .levels
                .get(c as usize)
                .cloned()
                .unwrap_or_else(|| format!("<unknown:{c}>")),
            Outcome::Value(v) => format_number(v),
        }
    }

    pub fn parse_outcome(&self, token: &str) -> Result<Outcome> {
        match self.task() {
            Task::Classification => self
                .target
                .level_index(token)
                .map(Outcome::Class)
                .ok_or_else(|| Error::data(format!("unknown target level `{token}`"))),
            Task::Regression => token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Outcome::Value)
                .ok_or_else(|| Error::data(format!("invalid numeric outcome `{token}`"))),
        }
    }
}

/// Shortest decimal representation that round-trips.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{v}")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// One cell of an instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Level(u32),
}

/// Immutable column-major dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    target: Column,
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<Column>, target: Column) -> Result<Self> {
        if columns.len() != schema.predictors.len() {
            return Err(Error::data(format!(
                "schema has {} predictors but {} columns were given",
                schema.predictors.len(),
                columns.len()
            )));
        }
        let n = target.len();
        for (j, (col, cs)) in columns.iter().zip(&schema.predictors).enumerate() {
            if col.len() != n {
                return Err(Error::data(format!(
                    "column {} has {} rows, target has {n}",
                    cs.name,
                    col.len()
                )));
            }
            check_column(col, cs, j + 1, true)?;
        }
        check_column(&target, &schema.target, 0, false)?;
        Ok(Dataset {
            schema,
            columns,
            target,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn task(&self) -> Task {
        self.schema.task()
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Predictor column `var` (0-based).
    pub fn column(&self, var: usize) -> &Column {
        &self.columns[var]
    }

    pub fn target(&self) -> &Column {
        &self.target
    }

    pub fn cell(&self, row: usize, var: usize) -> Cell {
        match &self.columns[var] {
            Column::Numeric(v) => Cell::Num(v[row]),
            Column::Categorical(v) => Cell::Level(v[row]),
        }
    }

    pub fn row(&self, row: usize) -> Vec<Cell> {
        (0..self.columns.len()).map(|j| self.cell(row, j)).collect()
    }

    pub fn outcome(&self, row: usize) -> Outcome {
        match &self.target {
            Column::Numeric(v) => Outcome::Value(v[row]),
            Column::Categorical(v) => Outcome::Class(v[row]),
        }
    }

    /// New dataset holding `rows` (in the given order) and the same schema.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            target: self.target.select(rows),
        }
    }

    /// New dataset keeping only the predictors `vars` (0-based, in that order).
    pub fn select_columns(&self, vars: &[usize]) -> Dataset {
        Dataset {
            schema: Schema {
                predictors: vars
                    .iter()
                    .map(|&v| self.schema.predictors[v].clone())
                    .collect(),
                target: self.schema.target.clone(),
            },
            columns: vars.iter().map(|&v| self.columns[v].clone()).collect(),
            target: self.target.clone(),
        }
    }

    /// Re-express this dataset against another schema with the same columns.
    ///
    /// Categorical tokens absent from `schema` map to [`UNKNOWN_LEVEL`].
    pub fn conform(&self, schema: &Schema) -> Result<Dataset> {
        if schema.predictors.len() != self.schema.predictors.len() {
            return Err(Error::data(format!(
                "expected {} predictors, found {}",
                schema.predictors.len(),
                self.schema.predictors.len()
            )));
        }
        let remap = |col: &Column, from: &ColumnSchema, to: &ColumnSchema| -> Result<Column> {
            if from.kind != to.kind {
                return Err(Error::data(format!(
                    "column {} is {:?} here but {:?} in the reference schema",
                    from.name, from.kind, to.kind
                )));
            }
            Ok(match col {
                Column::Numeric(v) => Column::Numeric(v.clone()),
                Column::Categorical(v) => {
                    let map: Vec<u32> = from
                        .levels
                        .iter()
                        .map(|tok| to.level_index(tok).unwrap_or(UNKNOWN_LEVEL))
                        .collect();
                    Column::Categorical(
                        v.iter()
                            .map(|&l| map.get(l as usize).copied().unwrap_or(UNKNOWN_LEVEL))
                            .collect(),
                    )
                }
            })
        };
        let columns = self
            .columns
            .iter()
            .zip(self.schema.predictors.iter().zip(&schema.predictors))
            .map(|(c, (from, to))| remap(c, from, to))
            .collect::<Result<Vec<_>>>()?;
        let target = remap(&self.target, &self.schema.target, &schema.target)?;
        Ok(Dataset {
            schema: schema.clone(),
            columns,
            target,
        })
    }

    /// Replace a numeric target by an equal-frequency discretized version with
    /// levels `L1..Lbins`.
    ///
    /// Rows with equal target values always share a bin: a run of ties that
    /// straddles a quantile cut is kept in the lower bin. Every bin is non-empty.
    pub fn discretize_target(&self, bins: usize) -> Result<Dataset> {
        let values = match &self.target {
            Column::Numeric(v) => v,
            Column::Categorical(_) => {
                return Err(Error::data("discretize_target requires a numeric target"))
            }
        };
        if bins < 2 {
            return Err(Error::param("bins must be at least 2"));
        }
        let n = values.len();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        // distinct values and their multiplicities
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &v in &sorted {
            match groups.last_mut() {
                Some((g, c)) if *g == v => *c += 1,
                _ => groups.push((v, 1)),
            }
        }
        if bins > groups.len() {
            return Err(Error::param(format!(
                "{bins} bins requested but the target has only {} distinct values",
                groups.len()
            )));
        }

        // upper edge (inclusive) of each bin
        let mut edges = Vec::with_capacity(bins);
        let mut remaining_rows = n;
        let mut bins_left = bins;
        let mut in_bin = 0usize;
        for (j, &(value, count)) in groups.iter().enumerate() {
            in_bin += count;
            let groups_after = groups.len() - j - 1;
            let close = if bins_left == 1 {
                groups_after == 0
            } else {
                in_bin * bins_left >= remaining_rows || groups_after == bins_left - 1
            };
            if close {
                edges.push(value);
                remaining_rows -= in_bin;
                bins_left -= 1;
                in_bin = 0;
            }
        }
        debug_assert_eq!(edges.len(), bins);

        let labels: Vec<u32> = values
            .iter()
            .map(|&v| edges.iter().position(|&e| v <= e).unwrap_or(bins - 1) as u32)
            .collect();
        let mut schema = self.schema.clone();
        schema.target = ColumnSchema::categorical(
            self.schema.target.name.clone(),
            (1..=bins).map(|b| format!("L{b}")),
        );
        Dataset::new(schema, self.columns.clone(), Column::Categorical(labels))
    }

    /// Random disjoint train/test partition of size `round(fraction * n)` / rest.
    ///
    /// Both parts keep the original row order. The train size is clamped to
    /// `[1, n - 1]`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::param(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let (train, test) = self.split_indices(train_fraction, seed)?;
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Row indices of the partition produced by [`Dataset::split`].
    pub fn split_indices(
        &self,
        train_fraction: f64,
        seed: u64,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = self.n_rows();
        if n < 2 {
            return Err(Error::data("split needs at least 2 rows"));
        }
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut train = order[..n_train].to_vec();
        let mut test = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(writer);
        let header = self
            .schema
            .predictors
            .iter()
            .chain(std::iter::once(&self.schema.target))
            .map(|c| c.name.as_str());
        w.write_record(header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.n_predictors())
                .map(|j| match self.cell(i, j) {
                    Cell::Num(v) => format_number(v),
                    Cell::Level(l) => self.schema.predictors[j]
                        .levels
                        .get(l as usize)
                        .cloned()
                        .unwrap_or_default(),
                })
                .collect();
            rec.push(self.schema.format_outcome(&self.outcome(i)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn check_column(col: &Column, cs: &ColumnSchema, var: usize, predictor: bool) -> Result<()> {
    match (col, cs.kind) {
        (Column::Numeric(v), ColumnKind::Numeric) => {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("non-finite value in numeric column {}", cs.name),
                });
            }
        }
        (Column::Categorical(v), ColumnKind::Categorical) => {
            if cs.levels.is_empty() && !v.is_empty() {
                return Err(Error::data(format!(
                    "categorical column {} has no levels",
                    cs.name
                )));
            }
            if predictor && cs.levels.len() > MAX_LEVELS {
                return Err(Error::data(format!(
                    "categorical predictor {} has {} levels (at most {MAX_LEVELS} supported)",
                    cs.name,
                    cs.levels.len()
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for l in &cs.levels {
                validate_token(l).map_err(|m| Error::data(format!("column {}: {m}", cs.name)))?;
                if !seen.insert(l) {
                    return Err(Error::data(format!(
                        "column {}: duplicate level `{l}`",
                        cs.name
                    )));
                }
            }
            // UNKNOWN_LEVEL is allowed: it marks tokens unseen by a reference schema.
            if let Some(i) = v
                .iter()
                .position(|&l| l != UNKNOWN_LEVEL && l as usize >= cs.levels.len())
            {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("level index out of range in column {}", cs.name),
                });
            }
        }
        _ => {
            let which = if predictor {
                format!("predictor X{var}")
            } else {
                "target".to_string()
            };
            return Err(Error::data(format!(
                "{which} ({}) does not match its schema kind",
                cs.name
            )));
        }
    }
    Ok(())
}

/// Level tokens must be non-empty and free of whitespace, commas, braces and quotes.
pub fn validate_token(token: &str) -> std::result::Result<(), String> {
    if token.is_empty() {
        return Err("empty level token".into());
    }
    if let Some(c) = token
        .chars()
        .find(|c| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '"' | '\''))
    {
        return Err(format!(
            "level token `{token}` contains forbidden character {c:?}"
        ));
    }
    Ok(())
}

/// Options for [`load_csv`].
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Name of the target column; the last column when `None`.
    pub target: Option<String>,
    /// Per-column kind overrides by column name.
    pub kinds: HashMap<String, ColumnKind>,
}

pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(std::io::BufReader::new(f), options)
}

/// Parse a header-first, comma-separated table. Quoting is not supported.
pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::data("empty file")),
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < 2 {
        return Err(Error::data(
            "need at least one predictor and a target column",
        ));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::data("empty column name in header"));
            }
            if !seen.insert(name) {
                return Err(Error::data(format!("duplicate column name `{name}`")));
            }
        }
    }
    let target_idx = match &options.target {
        Some(t) => names
            .iter()
            .position(|n| n == t)
            .ok_or_else(|| Error::data(format!("target column `{t}` not found")))?,
        None => names.len() - 1,
    };
    for name in options.kinds.keys() {
        if !names.contains(name) {
            return Err(Error::data(format!(
                "kind override for unknown column `{name}`"
            )));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Row {
                row,
                message: format!("expected {} cells, found {}", names.len(), rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Row {
                    row,
                    message: format!(
                        "empty cell in column {} (missing values are unsupported)",
                        names[j]
                    ),
                });
            }
            if cell.contains('"') {
                return Err(Error::Row {
                    row,
                    message: format!(
                        "quoted cell in column {} (quoting is unsupported)",
                        names[j]
                    ),
                });
            }
            cells[j].push(cell.to_string());
        }
    }
    if cells[0].is_empty() {
        return Err(Error::data("file has a header but no data rows"));
    }

    let mut predictors = Vec::new();
    let mut columns = Vec::new();
    let mut target = None;
    for (j, (name, raw)) in names.iter().zip(cells).enumerate() {
        let (cs, col) = infer_column(name, raw, options.kinds.get(name).copied())?;
        if j == target_idx {
            target = Some((cs, col));
        } else {
            predictors.push(cs);
            columns.push(col);
        }
    }
    let (target_schema, target_col) = target.expect("target index is in range");
    Dataset::new(
        Schema {
            predictors,
            target: target_schema,
        },
        columns,
        target_col,
    )
}

fn infer_column(
    name: &str,
    raw: Vec<String>,
    hint: Option<ColumnKind>,
) -> Result<(ColumnSchema, Column)> {
    let parsed: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let kind = hint.unwrap_or(if parsed.is_some() {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    });
    match kind {
        ColumnKind::Numeric => {
            let values = match parsed {
                Some(v) => v,
                None => {
                    let row = raw
                        .iter()
                        .position(|s| s.parse::<f64>().is_err())
                        .unwrap_or(0)
                        + 1;
                    return Err(Error::Row {
                        row,
                        message: format!(
                            "column {name} declared numeric but has a non-numeric cell"
                        ),
                    });
                }
            };
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("non-finite value in numeric column {name}"),
                });
            }
            Ok((ColumnSchema::numeric(name), Column::Numeric(values)))
        }
        ColumnKind::Categorical => {
            let mut levels: Vec<String> = Vec::new();
            let mut index: HashMap<String, u32> = HashMap::new();
            let mut codes = Vec::with_capacity(raw.len());
            for (i, tok) in raw.into_iter().enumerate() {
                let code = match index.get(&tok) {
                    Some(&c) => c,
                    None => {
                        validate_token(&tok).map_err(|message| Error::Row {
                            row: i + 1,
                            message: format!("column {name}: {message}"),
                        })?;
                        let c = levels.len() as u32;
                        index.insert(tok.clone(), c);
                        levels.push(tok);
                        c
                    }
                };
                codes.push(code);
            }
            Ok((
                ColumnSchema::categorical(name, levels),
                Column::Categorical(codes),
            ))
        }
    }
}

/// Synthetic team-selection data.
///
/// Each of the `n` rows has exactly `active` of the `p` players (`X1..Xp`)
/// set to `Y`, chosen uniformly at random, and the rest set to `N`. The target
/// `T` is `win` when exactly one of `X1`, `X2` is `Y`, and `lose` otherwise.
pub fn generate_team_data(n: usize, p: usize, active: usize, seed: u64) -> Result<Dataset> {
    if p < 2 {
        return Err(Error::param("team data needs at least 2 predictors"));
    }
    if active > p {
        return Err(Error::param(format!("active ({active}) exceeds p ({p})")));
    }
    if n == 0 {
        return Err(Error::param("team data needs at least one row"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = vec![vec![0u32; n]; p];
    let mut target = Vec::with_capacity(n);
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for j in index::sample(&mut rng, p, active) {
            columns[j][i] = 1;
        }
        let win = (columns[0][i] == 1) != (columns[1][i] == 1);
        target.push(u32::from(win));
    }
    let schema = Schema {
        predictors: (1..=p)
            .map(|j| ColumnSchema::categorical(format!("X{j}"), ["N", "Y"]))
            .collect(),
        target: ColumnSchema::categorical("T", ["lose", "win"]),
    };
    Dataset::new(
        schema,
        columns.into_iter().map(Column::Categorical).collect(),
        Column::Categorical(target),
    )
}
