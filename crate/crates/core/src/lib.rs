//! Rule extraction, pruning, selection and summarization for tree ensembles.
//!
//! A typical run trains a forest ([`build_forest`]), extracts path conditions
//! ([`extract_conditions`]), assigns outcomes on training data
//! ([`assign_outcomes`]), prunes them ([`prune::prune_rules`]) and then
//! either selects a compact subset ([`select::select_conditions`]) or builds an
//! ordered rule list ([`stel::build_stel`]). [`pipeline`] wires these steps
//! together.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod interactions;
pub mod pipeline;
pub mod prune;
pub mod report;
pub mod rules;
pub mod select;
pub mod stel;
pub mod trees;

pub use dataset::{
    generate_team_data, load_csv, read_csv, Cell, Column, ColumnKind, ColumnSchema, Dataset,
    LoadOptions, Outcome, Schema, Task,
};
pub use error::{Error, Result};
pub use interactions::{itemize, mine, AssociationRule, Item, MineParams, Transaction};
pub use pipeline::PipelineConfig;
pub use prune::{prune_rule, DecayMode, PruneParams};
pub use rules::{
    assign_outcome, assign_outcomes, dedup_conditions, dedup_rules, extract_conditions,
    extract_rules, measure, rank_rules, Condition, Metrics, Op, RankKey, Rule, RuleSet, Term,
};
pub use select::{select_conditions, SelectionParams};
pub use stel::{build_stel, RuleList};
pub use trees::{build_forest, Ensemble, ForestParams, Node, NodeTable, Split};
