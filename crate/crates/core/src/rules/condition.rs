//! Conjunctive conditions over predictors and their text form.
//!
//! Grammar (bit-exact):
//!
//! ```text
//! condition := term (" & " term)* | "TRUE"
//! term      := var " in " "{" token ("," token)* "}" | var " <= " number | var " > " number
//! var       := "X" positive-integer
//! ```
//!
//! Canonical conditions are sorted by variable, then by operator (`in`, `<=`,
//! `>`), with at most one term per (variable, operator).

use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use fixedbitset::FixedBitSet;

use crate::dataset::{format_number, Cell, Column, ColumnKind, Dataset, Schema};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Op {
    /// Level is one of the set bits.
    In(u32),
    Le(f64),
    Gt(f64),
}

impl Op {
    fn rank(&self) -> u8 {
        match self {
            Op::In(_) => 0,
            Op::Le(_) => 1,
            Op::Gt(_) => 2,
        }
    }

    fn key(&self) -> (u8, u64) {
        // +0.0 and -0.0 compare equal, so they must hash equal
        let bits = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
        match *self {
            Op::In(m) => (0, u64::from(m)),
            Op::Le(v) => (1, bits(v)),
            Op::Gt(v) => (2, bits(v)),
        }
    }
}

impl PartialEq for Op {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Op {}

impl Hash for Op {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

/// One variable-value pair. `var` is the 0-based predictor index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub var: usize,
    pub op: Op,
}

impl Term {
    pub fn new(var: usize, op: Op) -> Self {
        Term { var, op }
    }

    pub fn matches(&self, cell: Cell) -> bool {
        match (self.op, cell) {
            (Op::In(mask), Cell::Level(l)) => l < 32 && mask & (1 << l) != 0,
            (Op::Le(t), Cell::Num(v)) => v <= t,
            (Op::Gt(t), Cell::Num(v)) => v > t,
            _ => false,
        }
    }

    fn matches_row(&self, d: &Dataset, row: usize) -> bool {
        match (self.op, d.column(self.var)) {
            (Op::In(mask), Column::Categorical(x)) => {
                let l = x[row];
                l < 32 && mask & (1 << l) != 0
            }
            (Op::Le(t), Column::Numeric(x)) => x[row] <= t,
            (Op::Gt(t), Column::Numeric(x)) => x[row] > t,
            _ => false,
        }
    }

    /// Text of this term, naming the variable `X<k>` or by column name.
    pub fn render(&self, schema: &Schema, names: bool) -> String {
        let cs = &schema.predictors[self.var];
        let var = if names {
            cs.name.clone()
        } else {
            format!("X{}", self.var + 1)
        };
        match self.op {
            Op::In(mask) => {
                let tokens: Vec<&str> = cs
                    .levels
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| mask & (1 << l) != 0)
                    .map(|(_, t)| t.as_str())
                    .collect();
                format!("{var} in {{{}}}", tokens.join(","))
            }
            Op::Le(t) => format!("{var} <= {}", format_number(t)),
            Op::Gt(t) => format!("{var} > {}", format_number(t)),
        }
    }
}

/// A canonical conjunction of terms. The empty condition is always true.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Condition {
    terms: Vec<Term>,
}

impl Condition {
    pub fn empty() -> Self {
        Condition::default()
    }

    /// Canonicalize `terms` against `schema`.
    ///
    /// Numeric bounds on one variable are intersected into at most one `<=`
    /// and one `>`, level sets are intersected, and sets naming every level
    /// are dropped. An empty intersection is an [`Error::EmptyCondition`].
    pub fn new(terms: impl IntoIterator<Item = Term>, schema: &Schema) -> Result<Self> {
        let mut terms: Vec<Term> = terms.into_iter().collect();
        for t in &terms {
            check_term(t, schema)?;
        }
        terms.sort_by(|a, b| a.var.cmp(&b.var).then(a.op.rank().cmp(&b.op.rank())));
        let mut out: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if last.var == t.var && last.op.rank() == t.op.rank() => {
                    last.op = match (last.op, t.op) {
                        (Op::In(a), Op::In(b)) => Op::In(a & b),
                        (Op::Le(a), Op::Le(b)) => Op::Le(a.min(b)),
                        (Op::Gt(a), Op::Gt(b)) => Op::Gt(a.max(b)),
                        _ => unreachable!("same rank implies same operator"),
                    };
                }
                _ => out.push(t),
            }
        }
        let full_masks: Vec<u32> = schema.predictors.iter().map(|c| c.full_mask()).collect();
        out.retain(|t| !matches!(t.op, Op::In(m) if m == full_masks[t.var]));
        for (i, t) in out.iter().enumerate() {
            let empty = match t.op {
                Op::In(m) => m == 0,
                Op::Le(upper) => matches!(
                    out.get(i + 1),
                    Some(Term { var, op: Op::Gt(lower) }) if *var == t.var && *lower >= upper
                ),
                Op::Gt(_) => false,
            };
            if empty {
                let shown = Condition { terms: out.clone() }.render(schema, false);
                return Err(Error::EmptyCondition(format!(
                    "X{} has no admissible value in `{shown}`",
                    t.var + 1
                )));
            }
        }
        Ok(Condition { terms: out })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// This condition with term `i` (0-based) removed; still canonical.
    pub fn without(&self, i: usize) -> Condition {
        let mut terms = self.terms.clone();
        terms.remove(i);
        Condition { terms }
    }

    /// Variables (0-based) mentioned by the condition, ascending and unique.
    pub fn vars(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.iter().map(|t| t.var).collect();
        v.dedup();
        v
    }

    pub fn matches(&self, x: &[Cell]) -> bool {
        self.terms.iter().all(|t| t.matches(x[t.var]))
    }

    pub fn matches_row(&self, d: &Dataset, row: usize) -> bool {
        self.terms.iter().all(|t| t.matches_row(d, row))
    }

    /// Bitset of the rows of `d` satisfying the condition.
    pub fn coverage(&self, d: &Dataset) -> FixedBitSet {
        let n = d.n_rows();
        let mut bits = FixedBitSet::with_capacity(n);
        bits.insert_range(..);
        for t in &self.terms {
            for row in 0..n {
                if bits.contains(row) && !t.matches_row(d, row) {
                    bits.set(row, false);
                }
            }
        }
        bits
    }

    /// Canonical text (`X<k>` variables, `TRUE` for the empty condition).
    pub fn render(&self, schema: &Schema, names: bool) -> String {
        if self.terms.is_empty() {
            return "TRUE".to_string();
        }
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                s.push_str(" & ");
            }
            let _ = write!(s, "{}", t.render(schema, names));
        }
        s
    }

    pub fn to_text(&self, schema: &Schema) -> String {
        self.render(schema, false)
    }

    /// Parse the canonical grammar; the result is canonicalized.
    pub fn parse(text: &str, schema: &Schema) -> Result<Condition> {
        if text == "TRUE" {
            return Ok(Condition::empty());
        }
        let mut p = Parser {
            text,
            pos: 0,
            schema,
        };
        let mut terms = Vec::new();
        loop {
            terms.push(p.term()?);
            if p.pos == text.len() {
                break;
            }
            p.expect(" & ")?;
        }
        Condition::new(terms, schema)
    }
}

fn check_term(t: &Term, schema: &Schema) -> Result<()> {
    let cs = schema
        .predictors
        .get(t.var)
        .ok_or_else(|| Error::data(format!("unknown variable X{}", t.var + 1)))?;
    let ok = match (t.op, cs.kind) {
        (Op::In(m), ColumnKind::Categorical) => m & !cs.full_mask() == 0,
        (Op::Le(v) | Op::Gt(v), ColumnKind::Numeric) => v.is_finite(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::data(format!(
            "term on X{} does not match its {:?} type",
            t.var + 1,
            cs.kind
        )))
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    schema: &'a Schema,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.text[self.pos..]
    }

    fn fail<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset,
            message: message.into(),
        })
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            self.fail(self.pos, format!("expected `{lit}`"))
        }
    }

    fn term(&mut self) -> Result<Term> {
        let start = self.pos;
        self.expect("X")?;
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return self.fail(self.pos, "expected a variable index after `X`");
        }
        let k: usize = match self.rest()[..digits].parse() {
            Ok(k) if k >= 1 => k,
            _ => return self.fail(self.pos, "variable index must be a positive integer"),
        };
        self.pos += digits;
        let var = k - 1;
        let Some(cs) = self.schema.predictors.get(var) else {
            return self.fail(start, format!("unknown variable X{k}"));
        };
        let rest = self.rest();
        if rest.starts_with(" in {") {
            self.pos += " in {".len();
            if !cs.is_categorical() {
                return self.fail(
                    start,
                    format!("type mismatch: X{k} is numeric but used with `in`"),
                );
            }
            let mut mask = 0u32;
            loop {
                let tok_start = self.pos;
                let len = self.rest().find([',', '}']).unwrap_or(self.rest().len());
                if len == 0 {
                    return self.fail(tok_start, "expected a level token");
                }
                let tok = &self.rest()[..len];
                let Some(l) = cs.level_index(tok) else {
                    return self.fail(tok_start, format!("unknown level `{tok}` for X{k}"));
                };
                mask |= 1 << l;
                self.pos += len;
                match self.rest().as_bytes().first() {
                    Some(b',') => self.pos += 1,
                    Some(b'}') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return self.fail(self.pos, "unterminated level set"),
                }
            }
            Ok(Term::new(var, Op::In(mask)))
        } else {
            let (op_len, le) = if rest.starts_with(" <= ") {
                (4, true)
            } else if rest.starts_with(" > ") {
                (3, false)
            } else {
                return self.fail(self.pos, "expected ` in {`, ` <= ` or ` > `");
            };
            self.pos += op_len;
            if cs.is_categorical() {
                return self.fail(
                    start,
                    format!("type mismatch: X{k} is categorical but compared numerically"),
                );
            }
            let num_start = self.pos;
            let len = self.rest().find(" & ").unwrap_or(self.rest().len());
            let lit = &self.rest()[..len];
            let is_decimal = !lit.is_empty()
                && lit
                    .bytes()
                    .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
            let value = match lit.parse::<f64>() {
                Ok(v) if is_decimal && v.is_finite() => v,
                _ => return self.fail(num_start, format!("invalid number `{lit}`")),
            };
            self.pos += len;
            Ok(Term::new(
                var,
                if le { Op::Le(value) } else { Op::Gt(value) },
            ))
        }
    }
}
