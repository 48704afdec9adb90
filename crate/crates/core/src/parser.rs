//! Text format for networks (`.crn` files).
//!
//! ```text
//! stmt     := reaction | init | blank          (one per line, `#` starts a comment)
//! reaction := side "->" side "@" RATE
//! side     := "0" | term ("+" term)*
//! term     := [COUNT] IDENT                    ("2X" and "2 X" are both accepted)
//! init     := "init" IDENT "=" COUNT
//! RATE     := positive decimal, e.g. 1, 0.5, 1e9, 2.5E-3
//! IDENT    := letter (letter | digit | "_")*
//! ```
//!
//! Species are registered in order of first appearance in reactions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::crn::{CountVector, Crn, CrnError, Reaction, SpeciesTable};
use crate::scalar::Scalar;

/// Upper bound on `species × reactions` for a parsed document.
pub const MAX_DENSE_ENTRIES: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message} (at `{token}`)")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

impl ParseError {
    fn new(line: usize, column: usize, message: impl Into<String>, token: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
            token: token.into(),
        }
    }
}

/// A parsed network with its declared initial counts.
#[derive(Debug, Clone)]
pub struct CrnDocument<T> {
    pub crn: Crn<T>,
    /// Declared initial counts keyed by species index.
    pub initial: BTreeMap<usize, u64>,
    /// Source line of each reaction; diagnostics only, ignored by `==`.
    pub reaction_lines: Vec<usize>,
}

impl<T: Scalar> CrnDocument<T> {
    pub fn new(crn: Crn<T>) -> Self {
        let reaction_lines = vec![0; crn.reactions().len()];
        Self {
            crn,
            initial: BTreeMap::new(),
            reaction_lines,
        }
    }

    /// Declared counts as a state; undeclared species are zero.
    pub fn initial_state(&self) -> CountVector {
        let mut state = self.crn.zero_state();
        for (&i, &c) in &self.initial {
            state[i] = c;
        }
        state
    }

    pub fn set_initial(&mut self, species: &str, count: u64) -> Result<(), CrnError> {
        let i = self
            .crn
            .species()
            .index_of(species)
            .ok_or_else(|| CrnError::UnknownSpecies(species.to_owned()))?;
        self.initial.insert(i, count);
        Ok(())
    }
}

impl<T: PartialEq> PartialEq for CrnDocument<T> {
    fn eq(&self, other: &Self) -> bool {
        self.crn == other.crn && self.initial == other.initial
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Count(String),
    Plus,
    Arrow,
    At,
    Eq,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Count(s) => f.write_str(s),
            Tok::Plus => f.write_str("+"),
            Tok::Arrow => f.write_str("->"),
            Tok::At => f.write_str("@"),
            Tok::Eq => f.write_str("="),
        }
    }
}

struct Lexed {
    toks: Vec<(usize, Tok)>,
    /// Raw rate text and its column, when the line has an `@`.
    rate: Option<(usize, String)>,
    end_col: usize,
}

fn lex_line(line_no: usize, line: &str) -> Result<Lexed, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push((col, Tok::Plus));
                i += 1;
            }
            '=' => {
                toks.push((col, Tok::Eq));
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                toks.push((col, Tok::Arrow));
                i += 2;
            }
            '@' => {
                toks.push((col, Tok::At));
                let rest: String = chars[i + 1..].iter().collect();
                let lead = rest.len() - rest.trim_start().len();
                let rate = rest.trim().to_owned();
                return Ok(Lexed {
                    toks,
                    rate: Some((col + 1 + lead, rate)),
                    end_col: chars.len() + 1,
                });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                toks.push((col, Tok::Count(chars[start..i].iter().collect())));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((col, Tok::Ident(chars[start..i].iter().collect())));
            }
            other => {
                return Err(ParseError::new(line_no, col, "unknown character", other.to_string()));
            }
        }
    }
    Ok(Lexed {
        toks,
        rate: None,
        end_col: chars.len() + 1,
    })
}

fn is_rate_lexeme(text: &str) -> bool {
    let b = text.as_bytes();
    let mut i = 0;
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - s
    };
    let int_digits = digits(&mut i);
    let mut frac_digits = 0;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        frac_digits = digits(&mut i);
    }
    if int_digits + frac_digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        if digits(&mut i) == 0 {
            return false;
        }
    }
    i == b.len()
}

fn parse_count(line: usize, col: usize, text: &str) -> Result<u64, ParseError> {
    text.parse::<u64>()
        .map_err(|_| ParseError::new(line, col, "count does not fit in 64 bits", text))
}

type Side = Vec<(usize, String, u64)>;

struct RawReaction<T> {
    line: usize,
    col: usize,
    reactants: Side,
    products: Side,
    rate: T,
}

struct Cursor<'a> {
    line: usize,
    toks: &'a [(usize, Tok)],
    pos: usize,
    end_col: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(c, _)| *c)
    }

    fn error(&self, message: &str) -> ParseError {
        let token = self.peek().map_or_else(|| "end of line".to_owned(), |t| t.to_string());
        ParseError::new(self.line, self.col(), message, token)
    }

    fn side(&mut self) -> Result<Side, ParseError> {
        if let Some(Tok::Count(n)) = self.peek() {
            if n.chars().all(|c| c == '0') && !matches!(self.toks.get(self.pos + 1), Some((_, Tok::Ident(_)))) {
                self.pos += 1;
                return Ok(Vec::new());
            }
        }
        let mut terms = Vec::new();
        loop {
            let col = self.col();
            let coeff = match self.peek() {
                Some(Tok::Count(n)) => {
                    let n = parse_count(self.line, col, n)?;
                    if n == 0 {
                        return Err(self.error("zero coefficient"));
                    }
                    self.pos += 1;
                    n
                }
                _ => 1,
            };
            match self.peek() {
                Some(Tok::Ident(name)) => {
                    terms.push((col, name.clone(), coeff));
                    self.pos += 1;
                }
                _ => return Err(self.error("expected species identifier")),
            }
            if self.peek() == Some(&Tok::Plus) {
                self.pos += 1;
            } else {
                return Ok(terms);
            }
        }
    }
}

fn parse_reaction<T: Scalar>(line: usize, lexed: &Lexed) -> Result<RawReaction<T>, ParseError> {
    let mut cur = Cursor {
        line,
        toks: &lexed.toks,
        pos: 0,
        end_col: lexed.end_col,
    };
    let col = cur.col();
    let reactants = cur.side()?;
    if cur.peek() != Some(&Tok::Arrow) {
        return Err(cur.error("expected `->`"));
    }
    cur.pos += 1;
    let products = cur.side()?;
    if cur.peek() != Some(&Tok::At) {
        return Err(cur.error("expected `@` followed by a rate constant"));
    }
    let (rate_col, rate_text) = lexed.rate.clone().expect("lexer records text after `@`");
    if !is_rate_lexeme(&rate_text) {
        let token = if rate_text.is_empty() { "end of line".to_owned() } else { rate_text };
        return Err(ParseError::new(line, rate_col, "expected a positive decimal rate constant", token));
    }
    let rate = T::parse_decimal(&rate_text)
        .ok_or_else(|| ParseError::new(line, rate_col, "rate constant out of range", rate_text.clone()))?;
    if rate <= T::zero() {
        return Err(ParseError::new(line, rate_col, "rate constant must be positive", rate_text));
    }
    Ok(RawReaction {
        line,
        col,
        reactants,
        products,
        rate,
    })
}

/// Parses `.crn` text. LF and CRLF line endings are accepted.
pub fn parse<T: Scalar>(text: &str) -> Result<CrnDocument<T>, ParseError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut raw = Vec::new();
    let mut inits: Vec<(usize, usize, String, u64)> = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let lexed = lex_line(line_no, line)?;
        if lexed.toks.is_empty() {
            continue;
        }
        let is_init = matches!(&lexed.toks[0].1, Tok::Ident(k) if k == "init") && !lexed.toks.iter().any(|(_, t)| *t == Tok::Arrow);
        if is_init {
            let mut cur = Cursor {
                line: line_no,
                toks: &lexed.toks,
                pos: 1,
                end_col: lexed.end_col,
            };
            let (col, name) = match cur.peek() {
                Some(Tok::Ident(n)) => (cur.col(), n.clone()),
                _ => return Err(cur.error("expected species identifier after `init`")),
            };
            cur.pos += 1;
            if cur.peek() != Some(&Tok::Eq) {
                return Err(cur.error("expected `=`"));
            }
            cur.pos += 1;
            let count = match cur.peek() {
                Some(Tok::Count(n)) => parse_count(line_no, cur.col(), n)?,
                _ => return Err(cur.error("expected a nonnegative integer count")),
            };
            cur.pos += 1;
            if cur.peek().is_some() {
                return Err(cur.error("unexpected trailing input"));
            }
            inits.push((line_no, col, name, count));
        } else {
            raw.push(parse_reaction::<T>(line_no, &lexed)?);
        }
    }

    let mut species = SpeciesTable::new();
    for r in &raw {
        for (_, name, _) in r.reactants.iter().chain(&r.products) {
            species.insert(name);
        }
    }
    let dim = species.len();
    if dim.saturating_mul(raw.len()) > MAX_DENSE_ENTRIES {
        return Err(ParseError::new(1, 1, "network too large", format!("{dim} species x {} reactions", raw.len())));
    }

    let mut reactions: Vec<Reaction<T>> = Vec::with_capacity(raw.len());
    let mut reaction_lines = Vec::with_capacity(raw.len());
    let mut seen: HashMap<(CountVector, CountVector), Vec<usize>> = HashMap::new();
    for r in raw {
        let dense = |side: &Side| {
            let mut v = CountVector::zeros(dim);
            for (_, name, c) in side {
                let i = species.index_of(name).expect("registered above");
                v[i] = v[i].saturating_add(*c);
            }
            v
        };
        let (rv, pv) = (dense(&r.reactants), dense(&r.products));
        let bucket = seen.entry((rv.clone(), pv.clone())).or_default();
        if bucket.iter().any(|&j: &usize| *reactions[j].rate() == r.rate) {
            return Err(ParseError::new(r.line, r.col, "duplicate reaction", format!("line {}", r.line)));
        }
        let reaction: Reaction<T> = Reaction::new(rv, pv, r.rate).map_err(|e| {
            let msg = match e {
                CrnError::ReactantsEqualProducts => "reactant and product vectors equal".to_owned(),
                other => other.to_string(),
            };
            ParseError::new(r.line, r.col, msg, "->")
        })?;
        bucket.push(reactions.len());
        reactions.push(reaction);
        reaction_lines.push(r.line);
    }

    let mut initial = BTreeMap::new();
    for (line, col, name, count) in inits {
        let i = species
            .index_of(&name)
            .ok_or_else(|| ParseError::new(line, col, "init for undeclared species", name.clone()))?;
        if initial.insert(i, count).is_some() {
            return Err(ParseError::new(line, col, "duplicate init", name));
        }
    }

    let crn = Crn::from_unique_reactions(species, reactions).expect("duplicates rejected above");
    Ok(CrnDocument {
        crn,
        initial,
        reaction_lines,
    })
}

/// Parses raw bytes, rejecting invalid UTF-8 with a position.
pub fn parse_bytes<T: Scalar>(bytes: &[u8]) -> Result<CrnDocument<T>, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
            let line_start = valid.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            let column = String::from_utf8_lossy(&valid[line_start..]).chars().count() + 1;
            Err(ParseError::new(line, column, "invalid UTF-8", format!("byte {}", e.valid_up_to())))
        }
    }
}

fn write_side(out: &mut String, species: &SpeciesTable, side: &CountVector) {
    let mut first = true;
    for (i, &c) in side.iter().enumerate() {
        if c == 0 {
            continue;
        }
        if !first {
            out.push_str(" + ");
        }
        first = false;
        if c != 1 {
            out.push_str(&c.to_string());
        }
        out.push_str(species.name(i));
    }
    if first {
        out.push('0');
    }
}

/// Canonical text: one reaction per line in network order, then `init` lines
/// in species order. Output uses LF line endings.
pub fn serialize<T: Scalar>(doc: &CrnDocument<T>) -> String {
    let species = doc.crn.species();
    let mut out = String::new();
    for r in doc.crn.reactions() {
        write_side(&mut out, species, r.reactants());
        out.push_str(" -> ");
        write_side(&mut out, species, r.products());
        out.push_str(" @ ");
        out.push_str(&r.rate().to_decimal());
        out.push('\n');
    }
    for (&i, &c) in &doc.initial {
        out.push_str(&format!("init {} = {}\n", species.name(i), c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use proptest::prelude::*;

    const R: &str = "2X + Y -> 3X @ 1\nX + 2Y -> 3Y @ 1\n";

    #[test]
    fn parses_majority_network() {
        let doc: CrnDocument<f64> = parse(R).unwrap();
        assert_eq!(doc.crn.species().names(), ["X", "Y"]);
        assert_eq!(doc.crn.reactions().len(), 2);
        assert_eq!(doc.crn.reaction(0).reactants(), &[2, 1].into());
        assert_eq!(doc.crn.reaction(0).products(), &[3, 0].into());
        assert_eq!(doc.reaction_lines, [1, 2]);
        assert_eq!(serialize(&doc), R);
    }

    #[test]
    fn parses_nature_network() {
        let doc: CrnDocument<f64> = parse("A -> B @ 1e9\r\nB -> A @ 1e9\r\n").unwrap();
        assert_eq!(*doc.crn.reaction(0).rate(), 1e9);
        assert_eq!(serialize(&doc), "A -> B @ 1000000000\nB -> A @ 1000000000\n");
        let exact: CrnDocument<Exact> = parse("A -> B @ 1e9").unwrap();
        assert_eq!(*exact.crn.reaction(0).rate(), Exact::from_count(1_000_000_000));
    }

    #[test]
    fn coefficient_spacing_and_comments() {
        let a: CrnDocument<f64> = parse("2X+Y->3X@1 # trailing\n\n# only a comment\n").unwrap();
        let b: CrnDocument<f64> = parse("2 X + Y -> 3 X @ 1.0").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sides_and_inits() {
        let doc: CrnDocument<f64> = parse("0 -> X @ 2\nX -> 0 @ 0.5\ninit X = 5120\n").unwrap();
        assert_eq!(doc.crn.reaction(0).arity(), 0);
        assert_eq!(doc.initial_state(), [5120].into());
        let text = serialize(&doc);
        assert!(text.contains("init X = 5120\n"));
        assert_eq!(parse::<f64>(&text).unwrap(), doc);
    }

    #[test]
    fn majority_with_catalysts_round_trips() {
        let text = "2X + Y + A -> 3X + A @ 1\nX + 2Y + B -> 3Y + B @ 1\ninit A = 100\ninit B = 100\n";
        let doc: CrnDocument<f64> = parse(text).unwrap();
        assert_eq!(doc.crn.species().names(), ["X", "Y", "A", "B"]);
        assert_eq!(serialize(&doc), text);
    }

    #[test]
    fn empty_document() {
        let doc: CrnDocument<f64> = parse("").unwrap();
        assert!(doc.crn.is_empty());
        assert_eq!(serialize(&doc), "");
    }

    fn err(text: &str) -> ParseError {
        parse::<f64>(text).unwrap_err()
    }

    #[test]
    fn error_positions() {
        let e = err("X + Y -> X + Y @ 1");
        assert_eq!((e.line, e.column), (1, 1));
        assert_eq!(e.message, "reactant and product vectors equal");

        let e = err("X -> Y @ 0");
        assert_eq!((e.line, e.column), (1, 10));
        assert!(e.message.contains("positive"));

        let e = err("X -> Y @ -1");
        assert_eq!(e.column, 10);

        let e = err("X -> Y @ 1\nX -> Y ! 1");
        assert_eq!((e.line, e.column, e.token.as_str()), (2, 8, "!"));

        let e = err("X -> Y @ 1\nX -> Y @ 1");
        assert_eq!((e.line, e.message.as_str()), (2, "duplicate reaction"));

        let e = err("X -> Y @ 1\ninit Z = 3");
        assert_eq!((e.line, e.column, e.message.as_str()), (2, 6, "init for undeclared species"));

        let e = err("X -> Y");
        assert_eq!(e.token, "end of line");

        let e = err("X -> Y @ 1 2");
        assert!(e.message.contains("rate"));

        let e = err("0X -> Y @ 1");
        assert_eq!(e.message, "zero coefficient");

        let e = err("X -> Y @ 1e999");
        assert_eq!(e.message, "rate constant out of range");
    }

    #[test]
    fn same_stoichiometry_different_rate_is_allowed() {
        let doc: CrnDocument<f64> = parse("X -> Y @ 1\nX -> Y @ 2").unwrap();
        assert_eq!(doc.crn.reactions().len(), 2);
    }

    #[test]
    fn invalid_utf8_is_positioned() {
        let e = parse_bytes::<f64>(b"X -> Y @ 1\nX\xff").unwrap_err();
        assert_eq!((e.line, e.column), (2, 2));
    }

    fn arb_doc() -> impl Strategy<Value = String> {
        let term = (0u64..4, prop::sample::select(vec!["X", "Y", "A", "B", "C_1"]));
        let side = prop::collection::vec(term, 0..4);
        let rate = prop::sample::select(vec!["1", "0.5", "1e9", "2.25e-3", "7"]);
        prop::collection::vec((side.clone(), side, rate), 0..6).prop_map(|rs| {
            rs.into_iter()
                .map(|(l, r, k)| {
                    let fmt = |s: Vec<(u64, &str)>| {
                        let terms: Vec<String> = s
                            .into_iter()
                            .filter(|(c, _)| *c > 0)
                            .map(|(c, n)| format!("{c} {n}"))
                            .collect();
                        if terms.is_empty() { "0".to_owned() } else { terms.join(" + ") }
                    };
                    format!("{} -> {} @ {}\n", fmt(l), fmt(r), k)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn round_trip(text in arb_doc()) {
            if let Ok(doc) = parse::<f64>(&text) {
                let canon = serialize(&doc);
                let again = parse::<f64>(&canon).unwrap();
                prop_assert_eq!(&again, &doc);
                prop_assert_eq!(serialize(&again), canon);
                let exact = parse::<Exact>(&text).unwrap();
                prop_assert_eq!(parse::<Exact>(&serialize(&exact)).unwrap(), exact);
            }
        }

        #[test]
        fn diagnostics_are_deterministic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let a = parse_bytes::<f64>(&bytes);
            let b = parse_bytes::<f64>(&bytes);
            prop_assert_eq!(a.err(), b.err());
        }
    }
}
