//! Row predicates: conjunctions of `column op literal` comparisons.
//!
//! The text form joins atoms with `&&`:
//!
//! ```text
//! age <= 20
//! income == '>50K' && hours < 40
//! education in {Prof-school, Doctorate}
//! ```
//!
//! Unquoted literals that parse as numbers are numeric; anything else, or
//! anything in single or double quotes, is text.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::table::{ColumnData, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::In => "in",
        }
    }

    fn holds<T: PartialOrd + ?Sized>(self, cell: &T, lit: &T) -> bool {
        match self {
            CmpOp::Eq | CmpOp::In => cell == lit,
            CmpOp::Ne => cell != lit,
            CmpOp::Lt => cell < lit,
            CmpOp::Le => cell <= lit,
            CmpOp::Gt => cell > lit,
            CmpOp::Ge => cell >= lit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Number(f64),
    Text(String),
    Set(Vec<Literal>),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(v) => write!(f, "{v:?}"),
            Literal::Text(s) => write!(f, "'{s}'"),
            Literal::Set(items) => {
                write!(f, "{{")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub column: String,
    pub op: CmpOp,
    pub literal: Literal,
}

impl Atom {
    pub fn new(column: impl Into<String>, op: CmpOp, literal: Literal) -> Self {
        Self { column: column.into(), op, literal }
    }

    fn evaluate(&self, table: &Table) -> Result<Vec<bool>> {
        let col = table
            .column(&self.column)
            .ok_or_else(|| Error::Schema(format!("unknown column {:?}", self.column)))?;
        let mismatch = || {
            Error::Schema(format!(
                "literal {} is not comparable with column {:?}",
                self.literal, self.column
            ))
        };
        let items: Vec<&Literal> = match (&self.op, &self.literal) {
            (CmpOp::In, Literal::Set(items)) => items.iter().collect(),
            (CmpOp::In, single) => vec![single],
            (_, Literal::Set(_)) => {
                return Err(Error::Schema(format!(
                    "a set literal needs the `in` operator (column {:?})",
                    self.column
                )))
            }
            (_, single) => vec![single],
        };
        match &col.data {
            ColumnData::Numeric(values) => {
                let lits = items
                    .iter()
                    .map(|l| match l {
                        Literal::Number(v) => Ok(*v),
                        _ => Err(mismatch()),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(values
                    .iter()
                    .map(|v| lits.iter().any(|l| self.op.holds(v, l)))
                    .collect())
            }
            ColumnData::Categorical(values) => {
                let lits = items
                    .iter()
                    .map(|l| match l {
                        Literal::Text(s) => Ok(s.as_str()),
                        _ => Err(mismatch()),
                    })
                    .collect::<Result<Vec<&str>>>()?;
                Ok(values
                    .iter()
                    .map(|v| lits.iter().any(|l| self.op.holds(v.as_str(), *l)))
                    .collect())
            }
        }
    }
}

/// Conjunction of atoms; no atoms means every row matches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
}

impl Predicate {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn atom(column: impl Into<String>, op: CmpOp, literal: Literal) -> Self {
        Self { atoms: vec![Atom::new(column, op, literal)] }
    }

    pub fn and(mut self, other: Predicate) -> Self {
        self.atoms.extend(other.atoms);
        self
    }

    /// Row mask for `table`; fails on unknown columns or type mismatches.
    pub fn evaluate(&self, table: &Table) -> Result<Vec<bool>> {
        let mut mask = vec![true; table.num_rows()];
        for atom in &self.atoms {
            for (m, hit) in mask.iter_mut().zip(atom.evaluate(table)?) {
                *m &= hit;
            }
        }
        Ok(mask)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "true");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{} {} {}", a.column, a.op.symbol(), a.literal)?;
        }
        Ok(())
    }
}

fn parse_scalar(token: &str) -> Result<Literal> {
    let t = token.trim();
    if t.is_empty() {
        return Err(Error::InvalidData("empty literal in predicate".into()));
    }
    for q in ['\'', '"'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return Ok(Literal::Text(t[1..t.len() - 1].to_owned()));
        }
    }
    Ok(match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Literal::Number(v),
        _ => Literal::Text(t.to_owned()),
    })
}

/// Splits on `sep` outside quotes and braces.
fn split_top_level<'a>(s: &'a str, sep: &str) -> Vec<&'a str> {
    let mut parts = Vec::new();
    let mut quote: Option<char> = None;
    let mut depth = 0usize;
    let mut start = 0;
    let mut i = 0;
    let bytes = s.as_bytes();
    while i < s.len() {
        let c = bytes[i] as char;
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == '{' => depth += 1,
            None if c == '}' => depth = depth.saturating_sub(1),
            None if depth == 0 && s[i..].starts_with(sep) => {
                parts.push(&s[start..i]);
                i += sep.len();
                start = i;
                continue;
            }
            None => {}
        }
        i += 1;
    }
    parts.push(&s[start..]);
    parts
}

fn parse_atom(text: &str) -> Result<Atom> {
    let text = text.trim();
    let bad = || Error::InvalidData(format!("cannot parse predicate atom {text:?}"));

    if let Some(pos) = text.find(" in ") {
        let column = text[..pos].trim();
        let rest = text[pos + 4..].trim();
        let inner = rest
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(bad)?;
        let items = split_top_level(inner, ",")
            .into_iter()
            .map(parse_scalar)
            .collect::<Result<Vec<_>>>()?;
        if column.is_empty() || items.is_empty() {
            return Err(bad());
        }
        return Ok(Atom::new(column, CmpOp::In, Literal::Set(items)));
    }

    const OPS: [(&str, CmpOp); 6] = [
        ("==", CmpOp::Eq),
        ("!=", CmpOp::Ne),
        ("<=", CmpOp::Le),
        (">=", CmpOp::Ge),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
    ];
    let (pos, sym, op) = OPS
        .iter()
        .filter_map(|(sym, op)| text.find(sym).map(|p| (p, *sym, *op)))
        .min_by_key(|(p, sym, _)| (*p, std::cmp::Reverse(sym.len())))
        .ok_or_else(bad)?;
    let column = text[..pos].trim();
    if column.is_empty() {
        return Err(bad());
    }
    Ok(Atom::new(column, op, parse_scalar(&text[pos + sym.len()..])?))
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "true" {
            return Ok(Predicate::always());
        }
        let atoms = split_top_level(s, "&&")
            .into_iter()
            .map(parse_atom)
            .collect::<Result<Vec<_>>>()?;
        Ok(Predicate { atoms })
    }
}

#[cfg(test)]
mod tests {
    use super::super::table::{filter_rows, read_csv};
    use super::*;

    fn adult() -> Table {
        read_csv(
            "age,education,income,hours\n\
             19,HS-grad,<=50K,20\n\
             45,Doctorate,>50K,50\n\
             62,Masters,>50K,38\n\
             33,Prof-school,>50K,45\n\
             17,11th,<=50K,10\n"
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn numeric_threshold() {
        let t = filter_rows(&adult(), &"age <= 20".parse().unwrap()).unwrap();
        assert_eq!(t.num_rows(), 2);
        assert_eq!(t.num_cols(), 4);
    }

    #[test]
    fn always_true_keeps_everything() {
        let t = adult();
        assert_eq!(filter_rows(&t, &Predicate::always()).unwrap(), t);
        assert_eq!(filter_rows(&t, &"true".parse().unwrap()).unwrap(), t);
    }

    #[test]
    fn set_membership() {
        let p: Predicate = "education in {Prof-school, Doctorate}".parse().unwrap();
        let t = filter_rows(&adult(), &p).unwrap();
        assert_eq!(t.num_rows(), 2);
    }

    #[test]
    fn conjunction_with_quoted_text() {
        let p: Predicate = "income == '>50K' && hours < 40".parse().unwrap();
        assert_eq!(p.atoms.len(), 2);
        let t = filter_rows(&adult(), &p).unwrap();
        assert_eq!(t.num_rows(), 1);
        assert_eq!(t.column("age").unwrap().data, ColumnData::Numeric(vec![62.0]));
    }

    #[test]
    fn schema_errors() {
        let t = adult();
        assert!(matches!(filter_rows(&t, &"height > 3".parse().unwrap()), Err(Error::Schema(_))));
        assert!(matches!(filter_rows(&t, &"age == old".parse().unwrap()), Err(Error::Schema(_))));
        assert!(matches!(filter_rows(&t, &"education == 3".parse().unwrap()), Err(Error::Schema(_))));
        assert!("age".parse::<Predicate>().is_err());
        assert!("age in 3".parse::<Predicate>().is_err());
    }

    #[test]
    fn display_parses_back() {
        let p: Predicate = "age >= 60 && education in {Masters, 'Doctorate'}".parse().unwrap();
        assert_eq!(p.to_string().parse::<Predicate>().unwrap(), p);
    }
}
