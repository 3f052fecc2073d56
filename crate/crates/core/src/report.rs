//! CSV and plain-text tables for rules, rule lists and interactions.
//!
//! CSV output uses standard quoting: conditions with level sets contain
//! commas and are quoted.

use std::io::{Read, Write};

use crate::dataset::{format_number, Schema};
use crate::error::{Error, Result};
use crate::interactions::AssociationRule;
use crate::rules::{Condition, Metrics, Rule};
use crate::stel::RuleList;

pub const RULE_HEADER: [&str; 5] = ["len", "freq", "err", "condition", "pred"];
pub const SELECTED_HEADER: [&str; 6] = ["len", "freq", "err", "condition", "pred", "score"];
pub const LIST_HEADER: [&str; 6] = ["position", "len", "freq", "err", "condition", "pred"];
pub const INTERACTION_HEADER: [&str; 5] = ["len", "sup", "conf", "condition", "pred"];
pub const CONDITION_HEADER: [&str; 1] = ["condition"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Pretty,
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(w)
}

fn metric_fields(m: Option<Metrics>) -> [String; 3] {
    match m {
        Some(m) => [
            m.len.to_string(),
            format_number(m.freq),
            format_number(m.err),
        ],
        None => [String::new(), String::new(), String::new()],
    }
}

fn rule_fields(r: &Rule, schema: &Schema) -> Vec<String> {
    let [len, freq, err] = metric_fields(r.metrics);
    vec![
        len,
        freq,
        err,
        r.condition.to_text(schema),
        schema.format_outcome(&r.outcome),
    ]
}

pub fn write_conditions<W: Write>(w: W, conditions: &[Condition], schema: &Schema) -> Result<()> {
    let mut out = writer(w);
    out.write_record(CONDITION_HEADER)?;
    for c in conditions {
        out.write_record([c.to_text(schema)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_rules<W: Write>(w: W, rules: &[Rule], schema: &Schema) -> Result<()> {
    let mut out = writer(w);
    out.write_record(RULE_HEADER)?;
    for r in rules {
        out.write_record(rule_fields(r, schema))?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_selected<W: Write>(w: W, selected: &[(Rule, f64)], schema: &Schema) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SELECTED_HEADER)?;
    for (r, score) in selected {
        let mut fields = rule_fields(r, schema);
        fields.push(format_number(*score));
        out.write_record(fields)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_rule_list<W: Write>(w: W, list: &RuleList, schema: &Schema) -> Result<()> {
    let mut out = writer(w);
    out.write_record(LIST_HEADER)?;
    for (i, r) in list.rules().iter().enumerate() {
        let mut fields = vec![(i + 1).to_string()];
        fields.extend(rule_fields(r, schema));
        out.write_record(fields)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `len` is the number of left-hand-side items.
pub fn write_interactions<W: Write>(
    w: W,
    rules: &[AssociationRule],
    schema: &Schema,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(INTERACTION_HEADER)?;
    for r in rules {
        out.write_record([
            r.lhs.len().to_string(),
            format_number(r.support),
            format_number(r.confidence),
            r.lhs_text(schema),
            r.rhs_text(schema),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Header positions of the named columns; missing optional columns are `None`.
struct Columns {
    len: Option<usize>,
    freq: Option<usize>,
    err: Option<usize>,
    condition: usize,
    pred: Option<usize>,
}

fn columns(headers: &csv::StringRecord, need_pred: bool) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let condition =
        find("condition").ok_or_else(|| Error::data("table has no `condition` column"))?;
    let pred = find("pred");
    if need_pred && pred.is_none() {
        return Err(Error::data("table has no `pred` column"));
    }
    Ok(Columns {
        len: find("len"),
        freq: find("freq"),
        err: find("err"),
        condition,
        pred,
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn row_error(row: usize, e: impl std::fmt::Display) -> Error {
    Error::Row {
        row,
        message: e.to_string(),
    }
}

fn parse_metrics(
    rec: &csv::StringRecord,
    cols: &Columns,
    row: usize,
    len: usize,
) -> Result<Option<Metrics>> {
    let get = |i: Option<usize>| i.and_then(|i| rec.get(i)).unwrap_or("");
    let (l, f, e) = (get(cols.len), get(cols.freq), get(cols.err));
    if f.is_empty() && e.is_empty() {
        return Ok(None);
    }
    let num = |s: &str, what: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| row_error(row, format!("invalid {what} `{s}`")))
    };
    if !l.is_empty() && l.parse::<usize>().ok() != Some(len) {
        return Err(row_error(
            row,
            format!("len `{l}` does not match the condition"),
        ));
    }
    Ok(Some(Metrics {
        len,
        freq: num(f, "freq")?,
        err: num(e, "err")?,
    }))
}

/// Read any table with `condition` and `pred` columns (rule, selected or
/// rule-list tables). Missing or empty `freq`/`err` leave a rule unmeasured.
pub fn read_rules<R: Read>(r: R, schema: &Schema) -> Result<Vec<Rule>> {
    let mut rd = reader(r);
    let cols = columns(rd.headers()?, true)?;
    let mut rules = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let cond = Condition::parse(&rec[cols.condition], schema).map_err(|e| row_error(row, e))?;
        let pred = cols.pred.map(|p| &rec[p]).unwrap_or("");
        let outcome = schema.parse_outcome(pred).map_err(|e| row_error(row, e))?;
        let metrics = parse_metrics(&rec, &cols, row, cond.len())?;
        rules.push(Rule {
            condition: cond,
            outcome,
            metrics,
        });
    }
    Ok(rules)
}

/// Read the `condition` column of any table.
pub fn read_conditions<R: Read>(r: R, schema: &Schema) -> Result<Vec<Condition>> {
    let mut rd = reader(r);
    let cols = columns(rd.headers()?, false)?;
    rd.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            Condition::parse(&rec[cols.condition], schema).map_err(|e| row_error(i + 2, e))
        })
        .collect()
}

pub fn read_rule_list<R: Read>(r: R, schema: &Schema) -> Result<RuleList> {
    RuleList::new(read_rules(r, schema)?)
}

fn pretty_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<w$}  "));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn round3(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn pretty_rule_fields(r: &Rule, schema: &Schema, else_default: bool) -> Vec<String> {
    let (len, freq, err) = match r.metrics {
        Some(m) => (m.len.to_string(), round3(m.freq), round3(m.err)),
        None => Default::default(),
    };
    let condition = if else_default && r.condition.is_empty() {
        "Else".to_string()
    } else {
        r.condition.render(schema, true)
    };
    vec![len, freq, err, condition, schema.format_outcome(&r.outcome)]
}

/// Aligned table with column names in conditions and rounded metrics.
pub fn pretty_rules(rules: &[Rule], schema: &Schema) -> String {
    let rows: Vec<Vec<String>> = rules
        .iter()
        .map(|r| pretty_rule_fields(r, schema, false))
        .collect();
    pretty_table(&RULE_HEADER, &rows)
}

pub fn pretty_selected(selected: &[(Rule, f64)], schema: &Schema) -> String {
    let rows: Vec<Vec<String>> = selected
        .iter()
        .map(|(r, s)| {
            let mut f = pretty_rule_fields(r, schema, false);
            f.push(round3(*s));
            f
        })
        .collect();
    pretty_table(&SELECTED_HEADER, &rows)
}

/// Rule list with the default rule shown as `Else`.
pub fn pretty_rule_list(list: &RuleList, schema: &Schema) -> String {
    let rows: Vec<Vec<String>> = list
        .rules()
        .iter()
        .map(|r| pretty_rule_fields(r, schema, true))
        .collect();
    pretty_table(&RULE_HEADER, &rows)
}

pub fn pretty_interactions(rules: &[AssociationRule], schema: &Schema) -> String {
    let rows: Vec<Vec<String>> = rules
        .iter()
        .map(|r| {
            let lhs = r
                .lhs
                .iter()
                .map(|i| match i {
                    crate::interactions::Item::Term(t) => t.render(schema, true),
                    crate::interactions::Item::Variable(v) => schema.predictors[*v].name.clone(),
                })
                .collect::<Vec<_>>()
                .join(" & ");
            vec![
                r.lhs.len().to_string(),
                round3(r.support),
                round3(r.confidence),
                lhs,
                r.rhs_text(schema),
            ]
        })
        .collect();
    pretty_table(&INTERACTION_HEADER, &rows)
}
