use std::cmp::Ordering;
use std::fmt;

use super::value::{DomainKind, Value};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Attr(String),
    Lit(Value),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Cmp { attr: String, op: CmpOp, rhs: Operand },
    /// Inclusive on both ends.
    Between { attr: String, lo: Value, hi: Value },
}

impl Term {
    pub fn attrs(&self) -> Vec<&str> {
        match self {
            Term::Cmp {
                attr,
                rhs: Operand::Attr(b),
                ..
            } => vec![attr, b],
            Term::Cmp { attr, .. } | Term::Between { attr, .. } => vec![attr],
        }
    }
}

/// A conjunction of comparisons; the empty conjunction is always true.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub terms: Vec<Term>,
}

impl Predicate {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn attr_eq(a: &str, b: &str) -> Self {
        Self {
            terms: vec![Term::Cmp {
                attr: a.to_string(),
                op: CmpOp::Eq,
                rhs: Operand::Attr(b.to_string()),
            }],
        }
    }

    pub fn cmp(attr: &str, op: CmpOp, lit: impl Into<Value>) -> Self {
        Self {
            terms: vec![Term::Cmp {
                attr: attr.to_string(),
                op,
                rhs: Operand::Lit(lit.into()),
            }],
        }
    }

    pub fn and(mut self, other: Predicate) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn is_true(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn attrs(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.terms.iter().flat_map(Term::attrs).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Resolves attribute names to column positions once, for row-at-a-time
    /// evaluation.
    pub fn bind(&self, lookup: impl Fn(&str) -> Option<usize>) -> Result<BoundPredicate> {
        let pos = |a: &str| lookup(a).ok_or_else(|| Error::UnknownAttribute(a.to_string()));
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            terms.push(match t {
                Term::Cmp { attr, op, rhs } => BoundTerm::Cmp {
                    col: pos(attr)?,
                    op: *op,
                    rhs: match rhs {
                        Operand::Attr(b) => BoundOperand::Col(pos(b)?),
                        Operand::Lit(v) => BoundOperand::Lit(v.clone()),
                    },
                },
                Term::Between { attr, lo, hi } => BoundTerm::Between {
                    col: pos(attr)?,
                    lo: lo.clone(),
                    hi: hi.clone(),
                },
            });
        }
        Ok(BoundPredicate { terms })
    }

    /// Re-types string literals that were parsed before column kinds were
    /// known (e.g. dates written as strings).
    pub fn coerce_literals(&mut self, kind_of: impl Fn(&str) -> Option<DomainKind>) {
        let fix = |v: &mut Value, kind: Option<DomainKind>| {
            if let (Some(k), Value::Str(s)) = (kind, &*v) {
                if k != DomainKind::String {
                    if let Ok(p) = Value::parse(s, k) {
                        *v = p;
                    }
                }
            }
        };
        for t in &mut self.terms {
            match t {
                Term::Cmp {
                    attr,
                    rhs: Operand::Lit(v),
                    ..
                } => fix(v, kind_of(attr)),
                Term::Between { attr, lo, hi } => {
                    let k = kind_of(attr);
                    fix(lo, k);
                    fix(hi, k);
                }
                _ => {}
            }
        }
    }

    /// Renames attribute references.
    pub fn rename(&self, f: impl Fn(&str) -> String) -> Predicate {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Cmp { attr, op, rhs } => Term::Cmp {
                    attr: f(attr),
                    op: *op,
                    rhs: match rhs {
                        Operand::Attr(b) => Operand::Attr(f(b)),
                        lit => lit.clone(),
                    },
                },
                Term::Between { attr, lo, hi } => Term::Between {
                    attr: f(attr),
                    lo: lo.clone(),
                    hi: hi.clone(),
                },
            })
            .collect();
        Predicate { terms }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("true");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            match t {
                Term::Cmp { attr, op, rhs } => {
                    write!(f, "{attr} {} ", op.symbol())?;
                    match rhs {
                        Operand::Attr(b) => f.write_str(b)?,
                        Operand::Lit(Value::Str(s)) => write!(f, "'{s}'")?,
                        Operand::Lit(v) => write!(f, "{v}")?,
                    }
                }
                Term::Between { attr, lo, hi } => write!(f, "{attr} between {lo} and {hi}")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum BoundOperand {
    Col(usize),
    Lit(Value),
}

#[derive(Clone, Debug)]
enum BoundTerm {
    Cmp { col: usize, op: CmpOp, rhs: BoundOperand },
    Between { col: usize, lo: Value, hi: Value },
}

/// A predicate with columns resolved against one schema.
#[derive(Clone, Debug)]
pub struct BoundPredicate {
    terms: Vec<BoundTerm>,
}

impl BoundPredicate {
    /// Incomparable values (e.g. string vs number) never satisfy a term.
    pub fn eval(&self, row: &[Value]) -> bool {
        self.terms.iter().all(|t| match t {
            BoundTerm::Cmp { col, op, rhs } => {
                let r = match rhs {
                    BoundOperand::Col(c) => &row[*c],
                    BoundOperand::Lit(v) => v,
                };
                row[*col].compare(r).is_some_and(|o| op.holds(o))
            }
            BoundTerm::Between { col, lo, hi } => {
                let v = &row[*col];
                v.compare(lo).is_some_and(|o| o != Ordering::Less)
                    && v.compare(hi).is_some_and(|o| o != Ordering::Greater)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_conjunctions() {
        let p = Predicate::cmp("a", CmpOp::Ge, 2i64).and(Predicate::attr_eq("a", "b"));
        let b = p.bind(|n| ["a", "b"].iter().position(|x| *x == n)).unwrap();
        assert!(b.eval(&[Value::Int(3), Value::Int(3)]));
        assert!(!b.eval(&[Value::Int(3), Value::Int(4)]));
        assert!(!b.eval(&[Value::Int(1), Value::Int(1)]));
        assert_eq!(p.to_string(), "a >= 2 and a = b");
    }

    #[test]
    fn true_predicate_accepts_everything() {
        let b = Predicate::always().bind(|_| None).unwrap();
        assert!(b.eval(&[Value::Int(1)]));
    }

    #[test]
    fn unknown_attribute_fails_to_bind() {
        assert!(Predicate::cmp("z", CmpOp::Eq, 1i64).bind(|_| None).is_err());
    }
}
