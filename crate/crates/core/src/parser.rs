//! Reader and writer for the `.pomdp` problem-file text format.
//!
//! The format is line-oriented UTF-8 with `#` comments. A preamble declares
//! `discount:`, `values:`, `states:`, `actions:` and `observations:` (counts
//! or name lists) before any body statement. The body assigns transition,
//! observation and reward entries:
//!
//! ```text
//! T: <a> : <s> : <s'> <p>        # scalar
//! T: <a> : <s>                   # row over next states (or `uniform`)
//! <p> ... <p>
//! T: <a>                         # matrix, or `uniform` / `identity`
//! <p> ... <p>
//! ...
//! O: ...                         # same three forms, rows over observations
//! R: <a> : <s> : <s'> : <o> <v>  # scalar (also row / matrix contractions)
//! start: <dist> | uniform | <state>
//! ```
//!
//! `*` expands to every index of its slot, and later statements override
//! earlier ones. Rewards conditioned on `(s', o)` are reduced to `r(s, a)`
//! by expectation under the final transition and observation models.
//! Probability rows whose sums deviate from 1 by at most [`RENORM_TOL`] are
//! renormalized; anything worse rejects the whole file. Every error carries
//! the offending line number; a file either parses completely or not at all.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{Labels, ModelError, PomdpModel};

/// Rows whose sums deviate from 1 by more than this are rejected instead of
/// renormalized. Benchmark files carry limited decimal precision, which this
/// absorbs; anything larger is treated as a corrupt file.
pub const RENORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: unknown keyword `{key}`")]
    UnknownKeyword { line: usize, key: String },
    #[error("missing preamble key(s) before body: {keys}")]
    MissingPreamble { keys: String },
    #[error("line {line}: `{key}` already declared")]
    DuplicatePreamble { line: usize, key: String },
    #[error("line {line}: `{key}` must appear before any body statement")]
    MisplacedPreamble { line: usize, key: String },
    #[error("line {line}: expected {expected}, found `{found}`")]
    Expected {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("unexpected end of file: expected {expected}")]
    UnexpectedEof { expected: String },
    #[error("line {line}: malformed number `{text}`")]
    MalformedNumber { line: usize, text: String },
    #[error("line {line}: undeclared {kind} identifier `{name}`")]
    UndeclaredIdentifier {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: {kind} index {index} out of range (must be < {count})")]
    IndexOutOfRange {
        line: usize,
        kind: &'static str,
        index: usize,
        count: usize,
    },
    #[error("line {line}: invalid {kind} name `{name}`")]
    BadIdentifier {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: discount {value} out of (0,1)")]
    BadDiscount { line: usize, value: f64 },
    #[error(
        "line {line}: {kind} row ({which}) sums to {sum}, beyond renormalization tolerance {RENORM_TOL}"
    )]
    BadRowSum {
        line: usize,
        kind: &'static str,
        which: String,
        sum: f64,
    },
    #[error("{kind} row ({which}) is never assigned in the file")]
    MissingRow { kind: &'static str, which: String },
    #[error("line {line}: {kind} row ({which}) has a negative entry")]
    NegativeEntry {
        line: usize,
        kind: &'static str,
        which: String,
    },
    #[error("parsed model failed validation: {report}")]
    InvalidModel { report: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    line: usize,
}

/// Splits into whitespace-delimited words, strips `#` comments, and breaks
/// `:` out as its own token so `T:0:1:0` and `T: 0 : 1 : 0` tokenize alike.
fn tokenize(src: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let body = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        for word in body.split_whitespace() {
            let mut rest = word;
            while let Some(p) = rest.find(':') {
                if p > 0 {
                    toks.push(Tok {
                        text: rest[..p].to_string(),
                        line,
                    });
                }
                toks.push(Tok {
                    text: ":".to_string(),
                    line,
                });
                rest = &rest[p + 1..];
            }
            if !rest.is_empty() {
                toks.push(Tok {
                    text: rest.to_string(),
                    line,
                });
            }
        }
    }
    toks
}

struct Cursor {
    toks: Vec<Tok>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_is(&self, text: &str) -> bool {
        self.peek().map(|t| t.text == text).unwrap_or(false)
    }

    fn advance(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn take(&mut self, expected: &str) -> Result<Tok, ParseError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(ParseError::UnexpectedEof {
                expected: expected.to_string(),
            }),
        }
    }

    fn expect_colon(&mut self, after: &str) -> Result<(), ParseError> {
        let t = self.take(&format!("`:` after {after}"))?;
        if t.text == ":" {
            Ok(())
        } else {
            Err(ParseError::Expected {
                line: t.line,
                expected: format!("`:` after {after}"),
                found: t.text,
            })
        }
    }

    /// Consumes a `:` if one is next; returns whether it did.
    fn eat_colon(&mut self) -> bool {
        if self.peek_is(":") {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn read_number(&mut self, what: &str) -> Result<(f64, usize), ParseError> {
        let t = self.take(what)?;
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, t.line)),
            _ => Err(ParseError::MalformedNumber {
                line: t.line,
                text: t.text,
            }),
        }
    }
}

/// One dimension of the model: its size plus optional names.
struct Dim {
    kind: &'static str,
    count: usize,
    names: Option<Vec<String>>,
    index: HashMap<String, usize>,
}

impl Dim {
    fn resolve(&self, tok: &Tok) -> Result<usize, ParseError> {
        if let Ok(i) = tok.text.parse::<usize>() {
            if i < self.count {
                return Ok(i);
            }
            return Err(ParseError::IndexOutOfRange {
                line: tok.line,
                kind: self.kind,
                index: i,
                count: self.count,
            });
        }
        match self.index.get(&tok.text) {
            Some(&i) => Ok(i),
            None => Err(ParseError::UndeclaredIdentifier {
                line: tok.line,
                kind: self.kind,
                name: tok.text.clone(),
            }),
        }
    }
}

/// A slot in a body statement: either one index or the `*` wildcard.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    All,
    Index(usize),
}

impl Slot {
    fn matches(&self, i: usize) -> bool {
        match self {
            Slot::All => true,
            Slot::Index(j) => *j == i,
        }
    }

    fn iter(&self, count: usize) -> std::ops::Range<usize> {
        match self {
            Slot::All => 0..count,
            Slot::Index(j) => *j..*j + 1,
        }
    }

    fn is_all(&self) -> bool {
        matches!(self, Slot::All)
    }
}

fn parse_slot(cur: &mut Cursor, dim: &Dim) -> Result<Slot, ParseError> {
    let t = cur.take(&format!("{} index, name or `*`", dim.kind))?;
    if t.text == "*" {
        return Ok(Slot::All);
    }
    dim.resolve(&t).map(Slot::Index)
}

const RESERVED: &[&str] = &[
    "discount",
    "values",
    "states",
    "actions",
    "observations",
    "start",
    "T",
    "O",
    "R",
    "uniform",
    "identity",
    "reward",
    "cost",
];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone, Copy)]
struct RewardStmt {
    a: Slot,
    s: Slot,
    sp: Slot,
    o: Slot,
    value: f64,
}

struct Builder {
    states: Dim,
    actions: Dim,
    observations: Dim,
    discount: f64,
    values_cost: bool,
    transition: Vec<f64>,
    t_lines: Vec<usize>,
    observation: Vec<f64>,
    o_lines: Vec<usize>,
    rewards: Vec<RewardStmt>,
    start: Option<(Vec<f64>, usize)>,
}

const NO_LINE: usize = usize::MAX;

impl Builder {
    fn set_t(&mut self, a: Slot, s: Slot, sp: Slot, v: f64, line: usize) {
        let ns = self.states.count;
        for a in a.iter(self.actions.count) {
            for s in s.iter(ns) {
                let row = (a * ns + s) * ns;
                self.t_lines[a * ns + s] = line;
                for sp in sp.iter(ns) {
                    self.transition[row + sp] = v;
                }
            }
        }
    }

    fn set_t_row(&mut self, a: Slot, s: Slot, values: &[f64], line: usize) {
        let ns = self.states.count;
        for a in a.iter(self.actions.count) {
            for s in s.iter(ns) {
                let row = (a * ns + s) * ns;
                self.t_lines[a * ns + s] = line;
                self.transition[row..row + ns].copy_from_slice(values);
            }
        }
    }

    fn set_o(&mut self, a: Slot, sp: Slot, o: Slot, v: f64, line: usize) {
        let (ns, no) = (self.states.count, self.observations.count);
        for a in a.iter(self.actions.count) {
            for sp in sp.iter(ns) {
                let row = (a * ns + sp) * no;
                self.o_lines[a * ns + sp] = line;
                for o in o.iter(no) {
                    self.observation[row + o] = v;
                }
            }
        }
    }

    fn set_o_row(&mut self, a: Slot, sp: Slot, values: &[f64], line: usize) {
        let (ns, no) = (self.states.count, self.observations.count);
        for a in a.iter(self.actions.count) {
            for sp in sp.iter(ns) {
                let row = (a * ns + sp) * no;
                self.o_lines[a * ns + sp] = line;
                self.observation[row..row + no].copy_from_slice(values);
            }
        }
    }

    /// Renormalizes every probability row in place, rejecting rows that are
    /// negative, unassigned, or off by more than [`RENORM_TOL`].
    fn normalize_rows(&mut self) -> Result<(), ParseError> {
        let ns = self.states.count;
        let no = self.observations.count;
        for a in 0..self.actions.count {
            for s in 0..ns {
                let base = (a * ns + s) * ns;
                let line = self.t_lines[a * ns + s];
                normalize_row(
                    &mut self.transition[base..base + ns],
                    line,
                    "transition",
                    format!("a={a}, s={s}"),
                )?;
            }
            for sp in 0..ns {
                let base = (a * ns + sp) * no;
                let line = self.o_lines[a * ns + sp];
                normalize_row(
                    &mut self.observation[base..base + no],
                    line,
                    "observation",
                    format!("a={a}, s'={sp}"),
                )?;
            }
        }
        if let Some((belief, line)) = &mut self.start {
            normalize_row(belief, *line, "start belief", String::new())?;
        }
        Ok(())
    }

    /// Reduces the collected reward statements to r(s, a) by expectation
    /// over (s', o) under the final transition and observation models.
    /// Later statements override earlier ones on the cells they cover.
    fn reduce_rewards(&self) -> Vec<f64> {
        let (ns, na, no) = (
            self.states.count,
            self.actions.count,
            self.observations.count,
        );
        let mut reward = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let matching: Vec<&RewardStmt> = self
                    .rewards
                    .iter()
                    .filter(|st| st.a.matches(a) && st.s.matches(s))
                    .collect();
                let Some(last) = matching.last() else {
                    continue;
                };
                let r = if matching.iter().all(|st| st.sp.is_all() && st.o.is_all()) {
                    // Constant over (s', o): expectation is the value itself.
                    last.value
                } else {
                    let mut acc = 0.0;
                    for sp in 0..ns {
                        let t = self.transition[(a * ns + s) * ns + sp];
                        if t == 0.0 {
                            continue;
                        }
                        let obase = (a * ns + sp) * no;
                        for o in 0..no {
                            let w = t * self.observation[obase + o];
                            if w == 0.0 {
                                continue;
                            }
                            let rv = matching
                                .iter()
                                .rev()
                                .find(|st| st.sp.matches(sp) && st.o.matches(o))
                                .map(|st| st.value)
                                .unwrap_or(0.0);
                            acc += w * rv;
                        }
                    }
                    acc
                };
                reward[s * na + a] = r;
            }
        }
        if self.values_cost {
            for r in &mut reward {
                *r = -*r;
            }
        }
        reward
    }
}

fn normalize_row(
    row: &mut [f64],
    line: usize,
    kind: &'static str,
    which: String,
) -> Result<(), ParseError> {
    if row.iter().any(|&p| p < 0.0) {
        return Err(ParseError::NegativeEntry { line, kind, which });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > RENORM_TOL {
        if line == NO_LINE {
            return Err(ParseError::MissingRow { kind, which });
        }
        return Err(ParseError::BadRowSum {
            line,
            kind,
            which,
            sum,
        });
    }
    if sum != 1.0 {
        for p in row {
            *p /= sum;
        }
    }
    Ok(())
}

/// Parses a dimension declaration: either a count or a name list on the
/// declaration's line.
fn parse_dim(cur: &mut Cursor, kind: &'static str, key_line: usize) -> Result<Dim, ParseError> {
    let mut toks = Vec::new();
    while let Some(t) = cur.peek() {
        if t.line != key_line {
            break;
        }
        toks.push(cur.advance().unwrap().clone());
    }
    if toks.is_empty() {
        return Err(ParseError::Expected {
            line: key_line,
            expected: format!("{kind} count or name list"),
            found: "end of line".to_string(),
        });
    }
    if toks.len() == 1 {
        if let Ok(n) = toks[0].text.parse::<usize>() {
            if n == 0 {
                return Err(ParseError::Expected {
                    line: key_line,
                    expected: format!("positive {kind} count"),
                    found: "0".to_string(),
                });
            }
            return Ok(Dim {
                kind,
                count: n,
                names: None,
                index: HashMap::new(),
            });
        }
    }
    let mut names = Vec::with_capacity(toks.len());
    let mut index = HashMap::new();
    for t in &toks {
        if !is_identifier(&t.text) || RESERVED.contains(&t.text.as_str()) {
            return Err(ParseError::BadIdentifier {
                line: t.line,
                kind,
                name: t.text.clone(),
            });
        }
        if index.insert(t.text.clone(), names.len()).is_some() {
            return Err(ParseError::BadIdentifier {
                line: t.line,
                kind,
                name: format!("{} (duplicate)", t.text),
            });
        }
        names.push(t.text.clone());
    }
    Ok(Dim {
        kind,
        count: names.len(),
        names: Some(names),
        index,
    })
}

/// Reads a probability row of `len` entries, or the `uniform` keyword.
fn read_row(cur: &mut Cursor, len: usize, what: &str) -> Result<Vec<f64>, ParseError> {
    if cur.peek_is("uniform") {
        cur.advance();
        return Ok(vec![1.0 / len as f64; len]);
    }
    let mut row = Vec::with_capacity(len);
    for _ in 0..len {
        row.push(cur.read_number(what)?.0);
    }
    Ok(row)
}

/// Parses a `.pomdp` document into a validated model.
pub fn parse_pomdp(text: &str) -> Result<PomdpModel, ParseError> {
    let mut cur = Cursor {
        toks: tokenize(text),
        pos: 0,
    };

    // Preamble: all five keys must precede any body statement.
    let mut discount: Option<(f64, usize)> = None;
    let mut values_cost: Option<bool> = None;
    let mut states: Option<Dim> = None;
    let mut actions: Option<Dim> = None;
    let mut observations: Option<Dim> = None;
    while let Some(tok) = cur.peek() {
        let key = tok.text.clone();
        let line = tok.line;
        match key.as_str() {
            "start" | "T" | "O" | "R" => break,
            "discount" | "values" | "states" | "actions" | "observations" => {
                cur.advance();
                cur.expect_colon(&format!("`{key}`"))?;
                match key.as_str() {
                    "discount" => {
                        if discount.is_some() {
                            return Err(ParseError::DuplicatePreamble { line, key });
                        }
                        discount = Some(cur.read_number("discount value")?);
                    }
                    "values" => {
                        if values_cost.is_some() {
                            return Err(ParseError::DuplicatePreamble { line, key });
                        }
                        let t = cur.take("`reward` or `cost`")?;
                        values_cost = Some(match t.text.as_str() {
                            "reward" => false,
                            "cost" => true,
                            other => {
                                return Err(ParseError::Expected {
                                    line: t.line,
                                    expected: "`reward` or `cost`".to_string(),
                                    found: other.to_string(),
                                })
                            }
                        });
                    }
                    "states" => {
                        if states.is_some() {
                            return Err(ParseError::DuplicatePreamble { line, key });
                        }
                        states = Some(parse_dim(&mut cur, "state", line)?);
                    }
                    "actions" => {
                        if actions.is_some() {
                            return Err(ParseError::DuplicatePreamble { line, key });
                        }
                        actions = Some(parse_dim(&mut cur, "action", line)?);
                    }
                    "observations" => {
                        if observations.is_some() {
                            return Err(ParseError::DuplicatePreamble { line, key });
                        }
                        observations = Some(parse_dim(&mut cur, "observation", line)?);
                    }
                    _ => unreachable!(),
                }
            }
            _ => {
                return Err(ParseError::UnknownKeyword { line, key });
            }
        }
    }
    let mut missing = Vec::new();
    if discount.is_none() {
        missing.push("discount");
    }
    if values_cost.is_none() {
        missing.push("values");
    }
    if states.is_none() {
        missing.push("states");
    }
    if actions.is_none() {
        missing.push("actions");
    }
    if observations.is_none() {
        missing.push("observations");
    }
    if !missing.is_empty() {
        return Err(ParseError::MissingPreamble {
            keys: missing.join(", "),
        });
    }
    let (discount, discount_line) = discount.unwrap();
    if !(discount > 0.0 && discount < 1.0) {
        return Err(ParseError::BadDiscount {
            line: discount_line,
            value: discount,
        });
    }

    let states = states.unwrap();
    let actions = actions.unwrap();
    let observations = observations.unwrap();
    let (ns, na, no) = (states.count, actions.count, observations.count);
    let mut b = Builder {
        states,
        actions,
        observations,
        discount,
        values_cost: values_cost.unwrap(),
        transition: vec![0.0; na * ns * ns],
        t_lines: vec![NO_LINE; na * ns],
        observation: vec![0.0; na * ns * no],
        o_lines: vec![NO_LINE; na * ns],
        rewards: Vec::new(),
        start: None,
    };

    // Body statements, in file order; later statements win.
    while let Some(tok) = cur.peek() {
        let key = tok.text.clone();
        let line = tok.line;
        match key.as_str() {
            "start" => {
                cur.advance();
                cur.expect_colon("`start`")?;
                b.start = Some((parse_start(&mut cur, &b.states)?, line));
            }
            "T" => {
                cur.advance();
                cur.expect_colon("`T`")?;
                let a = parse_slot(&mut cur, &b.actions)?;
                if cur.eat_colon() {
                    let s = parse_slot(&mut cur, &b.states)?;
                    if cur.eat_colon() {
                        let sp = parse_slot(&mut cur, &b.states)?;
                        let (v, _) = cur.read_number("transition probability")?;
                        b.set_t(a, s, sp, v, line);
                    } else {
                        let row = read_row(&mut cur, ns, "transition row entry")?;
                        b.set_t_row(a, s, &row, line);
                    }
                } else if cur.peek_is("uniform") {
                    cur.advance();
                    let row = vec![1.0 / ns as f64; ns];
                    b.set_t_row(a, Slot::All, &row, line);
                } else if cur.peek_is("identity") {
                    cur.advance();
                    for s in 0..ns {
                        let mut row = vec![0.0; ns];
                        row[s] = 1.0;
                        b.set_t_row(a, Slot::Index(s), &row, line);
                    }
                } else {
                    for s in 0..ns {
                        let row = read_row(&mut cur, ns, "transition matrix entry")?;
                        b.set_t_row(a, Slot::Index(s), &row, line);
                    }
                }
            }
            "O" => {
                cur.advance();
                cur.expect_colon("`O`")?;
                let a = parse_slot(&mut cur, &b.actions)?;
                if cur.eat_colon() {
                    let sp = parse_slot(&mut cur, &b.states)?;
                    if cur.eat_colon() {
                        let o = parse_slot(&mut cur, &b.observations)?;
                        let (v, _) = cur.read_number("observation probability")?;
                        b.set_o(a, sp, o, v, line);
                    } else {
                        let row = read_row(&mut cur, no, "observation row entry")?;
                        b.set_o_row(a, sp, &row, line);
                    }
                } else if cur.peek_is("uniform") {
                    cur.advance();
                    let row = vec![1.0 / no as f64; no];
                    b.set_o_row(a, Slot::All, &row, line);
                } else if cur.peek_is("identity") {
                    cur.advance();
                    if no != ns {
                        return Err(ParseError::Expected {
                            line,
                            expected: format!(
                                "identity observation matrix requires |O| = |S| (have {no} and {ns})"
                            ),
                            found: "identity".to_string(),
                        });
                    }
                    for sp in 0..ns {
                        let mut row = vec![0.0; no];
                        row[sp] = 1.0;
                        b.set_o_row(a, Slot::Index(sp), &row, line);
                    }
                } else {
                    for sp in 0..ns {
                        let row = read_row(&mut cur, no, "observation matrix entry")?;
                        b.set_o_row(a, Slot::Index(sp), &row, line);
                    }
                }
            }
            "R" => {
                cur.advance();
                cur.expect_colon("`R`")?;
                let a = parse_slot(&mut cur, &b.actions)?;
                cur.expect_colon("the action in `R`")?;
                let s = parse_slot(&mut cur, &b.states)?;
                if cur.eat_colon() {
                    let sp = parse_slot(&mut cur, &b.states)?;
                    if cur.eat_colon() {
                        let o = parse_slot(&mut cur, &b.observations)?;
                        let (value, _) = cur.read_number("reward value")?;
                        b.rewards.push(RewardStmt { a, s, sp, o, value });
                    } else {
                        for o in 0..no {
                            let (value, _) = cur.read_number("reward row entry")?;
                            b.rewards.push(RewardStmt {
                                a,
                                s,
                                sp,
                                o: Slot::Index(o),
                                value,
                            });
                        }
                    }
                } else {
                    for sp in 0..ns {
                        for o in 0..no {
                            let (value, _) = cur.read_number("reward matrix entry")?;
                            b.rewards.push(RewardStmt {
                                a,
                                s,
                                sp: Slot::Index(sp),
                                o: Slot::Index(o),
                                value,
                            });
                        }
                    }
                }
            }
            "discount" | "values" | "states" | "actions" | "observations" => {
                return Err(ParseError::MisplacedPreamble { line, key });
            }
            _ => {
                return Err(ParseError::UnknownKeyword { line, key });
            }
        }
    }

    b.normalize_rows()?;
    let reward = b.reduce_rewards();

    let labels = Labels {
        states: b.states.names.clone(),
        actions: b.actions.names.clone(),
        observations: b.observations.names.clone(),
    };
    let mut model = PomdpModel::new(ns, na, no, b.transition, b.observation, reward, b.discount)?
        .with_labels(labels);
    if let Some((belief, _)) = b.start {
        model = model.with_start_belief(belief)?;
    }
    let report = model.validate();
    if !report.is_empty() {
        return Err(ParseError::InvalidModel {
            report: report.to_string(),
        });
    }
    Ok(model)
}

/// `start:` accepts an explicit distribution over all states, the `uniform`
/// keyword, or a single state (name or index) meaning a point mass.
fn parse_start(cur: &mut Cursor, states: &Dim) -> Result<Vec<f64>, ParseError> {
    let ns = states.count;
    if cur.peek_is("uniform") {
        cur.advance();
        return Ok(vec![1.0 / ns as f64; ns]);
    }
    let mut nums: Vec<f64> = Vec::new();
    let mut first_line = 0;
    while nums.len() < ns {
        match cur.peek() {
            Some(t) => match t.text.parse::<f64>() {
                Ok(v) => {
                    if nums.is_empty() {
                        first_line = t.line;
                    }
                    nums.push(v);
                    cur.advance();
                }
                Err(_) => break,
            },
            None => break,
        }
    }
    if nums.len() == ns {
        return Ok(nums);
    }
    if nums.is_empty() {
        let t = cur.take("start distribution, state name, or `uniform`")?;
        let s = states.resolve(&t)?;
        let mut belief = vec![0.0; ns];
        belief[s] = 1.0;
        return Ok(belief);
    }
    if nums.len() == 1 && nums[0].fract() == 0.0 && nums[0] >= 0.0 && (nums[0] as usize) < ns {
        let mut belief = vec![0.0; ns];
        belief[nums[0] as usize] = 1.0;
        return Ok(belief);
    }
    Err(ParseError::Expected {
        line: first_line,
        expected: format!("start distribution with {ns} entries"),
        found: format!("{} entries", nums.len()),
    })
}

/// Writes a model back out in explicit-matrix form. The output parses back
/// to the same model entrywise (floats are printed in shortest round-trip
/// form).
pub fn serialize_pomdp(model: &PomdpModel) -> String {
    use std::fmt::Write;

    let (ns, na, no) = (
        model.num_states(),
        model.num_actions(),
        model.num_observations(),
    );
    let labels = model.labels();
    let name = |names: &Option<Vec<String>>, i: usize| -> String {
        match names {
            Some(v) => v[i].clone(),
            None => i.to_string(),
        }
    };
    let dim_decl = |names: &Option<Vec<String>>, count: usize| -> String {
        match names {
            Some(v) => v.join(" "),
            None => count.to_string(),
        }
    };

    let mut out = String::new();
    writeln!(out, "discount: {}", model.discount()).unwrap();
    writeln!(out, "values: reward").unwrap();
    writeln!(out, "states: {}", dim_decl(&labels.states, ns)).unwrap();
    writeln!(out, "actions: {}", dim_decl(&labels.actions, na)).unwrap();
    writeln!(
        out,
        "observations: {}",
        dim_decl(&labels.observations, no)
    )
    .unwrap();
    if let Some(belief) = model.start_belief() {
        writeln!(out, "start: {}", join_floats(belief)).unwrap();
    }
    out.push('\n');
    for a in 0..na {
        writeln!(out, "T: {}", name(&labels.actions, a)).unwrap();
        for s in 0..ns {
            writeln!(out, "{}", join_floats(model.transition_row(a, s))).unwrap();
        }
        out.push('\n');
    }
    for a in 0..na {
        writeln!(out, "O: {}", name(&labels.actions, a)).unwrap();
        for sp in 0..ns {
            writeln!(out, "{}", join_floats(model.observation_row(a, sp))).unwrap();
        }
        out.push('\n');
    }
    for a in 0..na {
        for s in 0..ns {
            let r = model.reward(s, a);
            if r != 0.0 {
                writeln!(
                    out,
                    "R: {} : {} : * : * {}",
                    name(&labels.actions, a),
                    name(&labels.states, s),
                    r
                )
                .unwrap();
            }
        }
    }
    out
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn max_model_diff(a: &PomdpModel, b: &PomdpModel) -> f64 {
        assert_eq!(a.num_states(), b.num_states());
        assert_eq!(a.num_actions(), b.num_actions());
        assert_eq!(a.num_observations(), b.num_observations());
        let mut d: f64 = (a.discount() - b.discount()).abs();
        for act in 0..a.num_actions() {
            for s in 0..a.num_states() {
                for sp in 0..a.num_states() {
                    d = d.max(
                        (a.transition_prob(s, act, sp) - b.transition_prob(s, act, sp)).abs(),
                    );
                }
                for o in 0..a.num_observations() {
                    d = d.max((a.observation_prob(act, s, o) - b.observation_prob(act, s, o)).abs());
                }
            }
        }
        for s in 0..a.num_states() {
            for act in 0..a.num_actions() {
                d = d.max((a.reward(s, act) - b.reward(s, act)).abs());
            }
        }
        match (a.start_belief(), b.start_belief()) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                for (p, q) in x.iter().zip(y) {
                    d = d.max((p - q).abs());
                }
            }
            _ => panic!("start belief presence differs"),
        }
        d
    }

    #[test]
    fn tiger_parses_to_expected_model() {
        let model = parse_pomdp(fixtures::TIGER_SOURCE).unwrap();
        assert_eq!(model.num_states(), 2);
        assert_eq!(model.num_actions(), 3);
        assert_eq!(model.num_observations(), 2);
        assert!((model.discount() - 0.95).abs() < 1e-15);
        // Action 0 is listen: reward -1 in both states, identity transition,
        // 0.85-accurate observations.
        assert_eq!(model.reward(0, 0), -1.0);
        assert_eq!(model.reward(1, 0), -1.0);
        assert_eq!(model.transition_prob(0, 0, 0), 1.0);
        assert_eq!(model.transition_prob(0, 0, 1), 0.0);
        assert_eq!(model.observation_prob(0, 0, 0), 0.85);
        assert_eq!(model.observation_prob(0, 1, 0), 0.15);
        // Opening resets the tiger uniformly and pays +10/-100.
        assert_eq!(model.transition_prob(0, 1, 1), 0.5);
        assert_eq!(model.reward(0, 1), -100.0);
        assert_eq!(model.reward(1, 1), 10.0);
        assert_eq!(model.reward(0, 2), 10.0);
        assert_eq!(model.reward(1, 2), -100.0);
        assert_eq!(model.start_belief(), Some(&[0.5, 0.5][..]));
        assert!(model.validate().is_empty());
    }

    #[test]
    fn uniform_matrix_keyword() {
        let src = "\
discount: 0.9
values: reward
states: 3
actions: 2
observations: 2
T: 0 uniform
T: 1 identity
O: * uniform
R: 0 : * : * : * 1.0
";
        let model = parse_pomdp(src).unwrap();
        for s in 0..3 {
            for sp in 0..3 {
                assert!((model.transition_prob(s, 0, sp) - 1.0 / 3.0).abs() < 1e-15);
                let expected = if s == sp { 1.0 } else { 0.0 };
                assert_eq!(model.transition_prob(s, 1, sp), expected);
            }
        }
        assert_eq!(model.reward(2, 0), 1.0);
        assert_eq!(model.reward(2, 1), 0.0);
    }

    #[test]
    fn missing_discount_is_named() {
        let src = "\
values: reward
states: 2
actions: 1
observations: 1
T: 0 uniform
O: 0 uniform
";
        let err = parse_pomdp(src).unwrap_err();
        match &err {
            ParseError::MissingPreamble { keys } => assert!(keys.contains("discount")),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err.to_string().contains("discount"));
    }

    #[test]
    fn cost_values_negate_rewards() {
        let body = "\
states: 2
actions: 1
observations: 1
T: 0 uniform
O: 0 uniform
R: 0 : 0 : * : * 2.5
R: 0 : 1 : * : * -4.0
";
        let as_reward = parse_pomdp(&format!("discount: 0.9\nvalues: reward\n{body}")).unwrap();
        let as_cost = parse_pomdp(&format!("discount: 0.9\nvalues: cost\n{body}")).unwrap();
        for s in 0..2 {
            assert_eq!(as_cost.reward(s, 0), -as_reward.reward(s, 0));
        }
    }

    #[test]
    fn later_statements_override_earlier_ones() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 1
T: 0 uniform
T: 0 : 0 : 0 1.0
T: 0 : 0 : 1 0.0
O: 0 uniform
";
        let model = parse_pomdp(src).unwrap();
        assert_eq!(model.transition_prob(0, 0, 0), 1.0);
        assert_eq!(model.transition_prob(0, 0, 1), 0.0);
        // Row (s=1) keeps the earlier uniform assignment.
        assert_eq!(model.transition_prob(1, 0, 0), 0.5);
    }

    #[test]
    fn rewards_conditioned_on_observation_reduce_by_expectation() {
        // O row for s'=0 is (0.75, 0.25); reward 4 on o=0 and -4 on o=1
        // gives expectation 0.75*4 - 0.25*4 = 2.
        let src = "\
discount: 0.9
values: reward
states: 1
actions: 1
observations: 2
T: 0 : 0 : 0 1.0
O: 0 : 0 0.75 0.25
R: 0 : 0 : 0 : 0 4.0
R: 0 : 0 : 0 : 1 -4.0
";
        let model = parse_pomdp(src).unwrap();
        assert!((model.reward(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn named_start_state_is_point_mass() {
        let src = "\
discount: 0.5
values: reward
states: red green blue
actions: go
observations: ping
start: green
T: go uniform
O: go uniform
";
        let model = parse_pomdp(src).unwrap();
        assert_eq!(model.start_belief(), Some(&[0.0, 1.0, 0.0][..]));
    }

    #[test]
    fn row_within_renorm_tolerance_is_renormalized() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 1
T: 0 : 0 0.5000001 0.4999996
T: 0 : 1 uniform
O: 0 uniform
";
        let model = parse_pomdp(src).unwrap();
        let sum: f64 = model.transition_row(0, 0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_beyond_tolerance_is_rejected_with_line() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 1
T: 0 : 0 0.6 0.5
T: 0 : 1 uniform
O: 0 uniform
";
        let err = parse_pomdp(src).unwrap_err();
        match err {
            ParseError::BadRowSum { line, sum, .. } => {
                assert_eq!(line, 6);
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_keyword_reports_line() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 1
T: 0 uniform
O: 0 uniform
banana: 3
";
        match parse_pomdp(src).unwrap_err() {
            ParseError::UnknownKeyword { line, key } => {
                assert_eq!(line, 8);
                assert_eq!(key, "banana");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn undeclared_identifier_reports_line() {
        let src = "\
discount: 0.9
values: reward
states: here there
actions: hop
observations: ping
T: hop uniform
O: hop uniform
R: hop : nowhere : * : * 1.0
";
        match parse_pomdp(src).unwrap_err() {
            ParseError::UndeclaredIdentifier { line, name, .. } => {
                assert_eq!(line, 8);
                assert_eq!(name, "nowhere");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_number_reports_line() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 1
T: 0 : 0 : 1 0.5x
";
        match parse_pomdp(src).unwrap_err() {
            ParseError::MalformedNumber { line, text } => {
                assert_eq!(line, 6);
                assert_eq!(text, "0.5x");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 1
T: 0 uniform
O: 0 uniform
R: 0 : 5 : * : * 1.0
";
        match parse_pomdp(src).unwrap_err() {
            ParseError::IndexOutOfRange { line, index, .. } => {
                assert_eq!(line, 8);
                assert_eq!(index, 5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn observation_identity_requires_square() {
        let src = "\
discount: 0.9
values: reward
states: 2
actions: 1
observations: 3
T: 0 uniform
O: 0 identity
";
        assert!(matches!(
            parse_pomdp(src).unwrap_err(),
            ParseError::Expected { line: 7, .. }
        ));
    }

    #[test]
    fn tiger_round_trips() {
        let model = fixtures::tiger();
        let text = serialize_pomdp(&model);
        let reparsed = parse_pomdp(&text).unwrap();
        assert!(max_model_diff(&model, &reparsed) <= 1e-9);
        assert_eq!(model.labels(), reparsed.labels());
    }

    #[test]
    fn one_state_model_round_trips() {
        let model = PomdpModel::new(1, 1, 1, vec![1.0], vec![1.0], vec![0.5], 0.9).unwrap();
        let reparsed = parse_pomdp(&serialize_pomdp(&model)).unwrap();
        assert_eq!(reparsed.num_states(), 1);
        assert!(max_model_diff(&model, &reparsed) <= 1e-9);
    }

    #[test]
    fn uniform_rows_round_trip() {
        let src = "\
discount: 0.3
values: reward
states: 3
actions: 2
observations: 4
start: uniform
T: * uniform
O: * uniform
R: 1 : 2 : * : * -7.25
";
        let model = parse_pomdp(src).unwrap();
        let reparsed = parse_pomdp(&serialize_pomdp(&model)).unwrap();
        assert!(max_model_diff(&model, &reparsed) <= 1e-9);
    }

    #[test]
    fn random_models_round_trip() {
        for seed in 0..5 {
            let model = crate::testutil::random_model(seed, 6, 4, 5);
            let reparsed = parse_pomdp(&serialize_pomdp(&model)).unwrap();
            assert!(
                max_model_diff(&model, &reparsed) <= 1e-9,
                "seed {seed} diverged"
            );
        }
    }

    #[test]
    fn trailing_garbage_rejects_whole_file() {
        let src = format!("{}\nnonsense trailing section\n", fixtures::TIGER_SOURCE);
        assert!(parse_pomdp(&src).is_err());
    }
}
