//! Lowering of plans to SQL: one temporary view per step, then a final
//! SELECT.
//!
//! Every view exposes the step's attributes under their query names plus,
//! when the annotation is not identically `one`, a column `__v`. Base tables
//! are referenced by entry name; CSV column bindings, renames and annotation
//! columns are applied in an inline subquery. Semiring mapping:
//!
//! | semiring    | ⊗ in joins | ⊕ at GROUP BY      |
//! |-------------|------------|--------------------|
//! | sum_product | `a * b`    | `SUM`              |
//! | count       | `a * b`    | `SUM` / `COUNT(*)` |
//! | max_plus    | `a + b`    | `MAX`              |
//! | bool        | row filter | `COUNT(*) > 0`     |
//!
//! Boolean annotations are applied as a filter on base reads, so no
//! intermediate view carries `__v`; the final statement reports
//! `COUNT(*) > 0`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{AnnotationSource, ConjunctiveQuery, Operand, Predicate, SemiringKind, Term};
use crate::planner::{Input, Instruction, PlanIR, Projection};

pub const ANNOTATION_COLUMN: &str = "__v";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Materialization {
    #[default]
    TempView,
    TempTable,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuoteStyle {
    #[default]
    Double,
    Backtick,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Dialect {
    pub materialization: Materialization,
    pub quote: QuoteStyle,
}

impl Dialect {
    /// Quotes identifiers that are not plain `[A-Za-z_][A-Za-z0-9_]*`.
    pub fn ident(&self, name: &str) -> String {
        let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if plain {
            return name.to_string();
        }
        match self.quote {
            QuoteStyle::Double => format!("\"{}\"", name.replace('"', "\"\"")),
            QuoteStyle::Backtick => format!("`{}`", name.replace('`', "``")),
        }
    }

    fn create(&self, name: &str, body: &str) -> String {
        let kw = match self.materialization {
            Materialization::TempView => "CREATE TEMPORARY VIEW",
            Materialization::TempTable => "CREATE TEMP TABLE",
        };
        format!("{kw} {} AS {body}", self.ident(name))
    }
}

/// Joins statements with `;\n` and a trailing `;`.
pub fn render_script(stmts: &[String]) -> String {
    let mut s = stmts.join(";\n");
    if !s.is_empty() {
        s.push_str(";\n");
    }
    s
}

fn check_semiring(k: SemiringKind) -> Result<()> {
    if k == SemiringKind::Custom {
        return Err(Error::UnsupportedSemiring(k.name().into()));
    }
    Ok(())
}

fn times(k: SemiringKind, a: &str, b: &str) -> String {
    match k {
        SemiringKind::MaxPlus => format!("{a} + {b}"),
        _ => format!("{a} * {b}"),
    }
}

/// Aggregate over a group; `None` when every group annotation is `one`.
fn aggregate(k: SemiringKind, v: Option<&str>) -> Option<String> {
    match (k, v) {
        (SemiringKind::MaxPlus, Some(v)) => Some(format!("MAX({v})")),
        (SemiringKind::MaxPlus | SemiringKind::BoolOrAnd, _) => None,
        (_, Some(v)) => Some(format!("SUM({v})")),
        (_, None) => Some("COUNT(*)".into()),
    }
}

#[derive(Clone, Debug)]
struct Rel {
    attrs: Vec<String>,
    annotated: bool,
}

struct Lowering<'a> {
    query: &'a ConjunctiveQuery,
    plan: &'a PlanIR,
    d: Dialect,
    env: HashMap<String, Rel>,
}

impl<'a> Lowering<'a> {
    fn k(&self) -> SemiringKind {
        self.query.semiring
    }

    fn rel(&self, id: &str) -> Result<Rel> {
        if let Some(r) = self.env.get(id) {
            return Ok(r.clone());
        }
        let i = self.query.index_of(id).ok_or_else(|| Error::MissingRelation(id.into()))?;
        let e = &self.query.relations[i];
        let annotated = matches!(e.annotation, AnnotationSource::Column(_))
            && !self.plan.unannotated.contains(id)
            && self.k() != SemiringKind::BoolOrAnd;
        Ok(Rel {
            attrs: e.attrs.iter().map(|a| self.renamed(id, a)).collect(),
            annotated,
        })
    }

    fn renamed(&self, id: &str, a: &str) -> String {
        self.plan
            .renamed
            .get(id)
            .and_then(|r| r.iter().find(|(f, _)| f == a))
            .map_or_else(|| a.to_string(), |(_, t)| t.clone())
    }

    /// FROM item for `id` aliased `alias`: a view or table name, or a
    /// subquery for base tables that need column mapping or filtering.
    fn source_sql(&self, id: &str, alias: &str) -> Result<String> {
        let d = self.d;
        if self.env.contains_key(id) {
            return Ok(format!("{} AS {alias}", d.ident(id)));
        }
        let i = self.query.index_of(id).ok_or_else(|| Error::MissingRelation(id.into()))?;
        let e = &self.query.relations[i];
        let rel = self.rel(id)?;
        let mut cols: Vec<String> = Vec::with_capacity(e.attrs.len() + 1);
        let mut identity = true;
        for (k, a) in e.attrs.iter().enumerate() {
            let src = e.source.as_ref().map_or(a.as_str(), |s| s.columns[k].as_str());
            let to = &rel.attrs[k];
            if src == to {
                cols.push(d.ident(src));
            } else {
                identity = false;
                cols.push(format!("{} AS {}", d.ident(src), d.ident(to)));
            }
        }
        let mut filter = String::new();
        if let AnnotationSource::Column(c) = &e.annotation {
            if rel.annotated {
                identity = false;
                cols.push(format!("{} AS {ANNOTATION_COLUMN}", d.ident(c)));
            } else if self.k() == SemiringKind::BoolOrAnd && !self.plan.unannotated.contains(id) {
                identity = false;
                filter = format!(" WHERE {}", d.ident(c));
            }
        }
        if identity {
            return Ok(format!("{} AS {alias}", d.ident(id)));
        }
        Ok(format!("(SELECT {} FROM {}{filter}) AS {alias}", cols.join(", "), d.ident(id)))
    }

    /// Operand as a FROM item, applying its projection.
    fn operand(&self, input: &Input, alias: &str) -> Result<(String, Rel)> {
        let base = self.rel(&input.rel)?;
        match &input.project {
            None => Ok((self.source_sql(&input.rel, alias)?, base)),
            Some(p) => {
                let (sql, rel) = self.project_select(&input.rel, &base, p, "t")?;
                Ok((format!("({sql}) AS {alias}"), rel))
            }
        }
    }

    fn project_select(&self, src: &str, rel: &Rel, p: &Projection, alias: &str) -> Result<(String, Rel)> {
        let d = self.d;
        let cols: Vec<String> = p.attrs.iter().map(|a| format!("{alias}.{}", d.ident(a))).collect();
        let from = self.source_sql(src, alias)?;
        if !p.aggregate {
            let mut sel = cols.clone();
            if rel.annotated {
                sel.push(format!("{alias}.{ANNOTATION_COLUMN}"));
            }
            return Ok((
                format!("SELECT {} FROM {from}", sel.join(", ")),
                Rel {
                    attrs: p.attrs.clone(),
                    annotated: rel.annotated,
                },
            ));
        }
        let v = rel.annotated.then(|| format!("{alias}.{ANNOTATION_COLUMN}"));
        let agg = aggregate(self.k(), v.as_deref());
        Ok((
            group_select(&cols, agg.as_deref(), &from, ""),
            Rel {
                attrs: p.attrs.clone(),
                annotated: agg.is_some(),
            },
        ))
    }

    fn predicate(&self, p: &Predicate, alias: &str) -> String {
        let d = self.d;
        let col = |a: &str| format!("{alias}.{}", d.ident(a));
        p.terms
            .iter()
            .map(|t| match t {
                Term::Cmp { attr, op, rhs } => {
                    let r = match rhs {
                        Operand::Attr(b) => col(b),
                        Operand::Lit(v) => v.sql_literal(),
                    };
                    let sym = if op.symbol() == "!=" { "<>" } else { op.symbol() };
                    format!("{} {sym} {r}", col(attr))
                }
                Term::Between { attr, lo, hi } => {
                    format!("{} BETWEEN {} AND {}", col(attr), lo.sql_literal(), hi.sql_literal())
                }
            })
            .collect::<Vec<_>>()
            .join(" AND ")
    }

    fn instruction(&self, instr: &Instruction) -> Result<(String, Rel)> {
        let d = self.d;
        Ok(match instr {
            Instruction::Join { lhs, rhs, keep, .. } => {
                let (lf, lr) = self.operand(lhs, "l")?;
                let (rf, rr) = self.operand(rhs, "r")?;
                let shared: Vec<&String> = lr.attrs.iter().filter(|a| rr.attrs.contains(a)).collect();
                let from = if shared.is_empty() {
                    format!("{lf} CROSS JOIN {rf}")
                } else {
                    let on: Vec<String> = shared
                        .iter()
                        .map(|a| format!("l.{} = r.{}", d.ident(a), d.ident(a)))
                        .collect();
                    format!("{lf} JOIN {rf} ON {}", on.join(" AND "))
                };
                let v = match (lr.annotated, rr.annotated) {
                    (true, true) => Some(times(self.k(), &format!("l.{ANNOTATION_COLUMN}"), &format!("r.{ANNOTATION_COLUMN}"))),
                    (true, false) => Some(format!("l.{ANNOTATION_COLUMN}")),
                    (false, true) => Some(format!("r.{ANNOTATION_COLUMN}")),
                    (false, false) => None,
                };
                let side = |a: &String| if lr.attrs.contains(a) { "l" } else { "r" };
                let mut all: Vec<String> = lr.attrs.clone();
                all.extend(rr.attrs.iter().filter(|a| !lr.attrs.contains(a)).cloned());
                match keep {
                    Some(p) if p.aggregate => {
                        let cols: Vec<String> = p.attrs.iter().map(|a| format!("{}.{}", side(a), d.ident(a))).collect();
                        let agg = aggregate(self.k(), v.as_deref());
                        let annotated = agg.is_some();
                        (
                            group_select(&cols, agg.as_deref(), &from, ""),
                            Rel {
                                attrs: p.attrs.clone(),
                                annotated,
                            },
                        )
                    }
                    _ => {
                        let attrs = keep.as_ref().map_or(all, |p| p.attrs.clone());
                        let mut cols: Vec<String> = attrs.iter().map(|a| format!("{}.{}", side(a), d.ident(a))).collect();
                        if let Some(v) = &v {
                            cols.push(format!("{v} AS {ANNOTATION_COLUMN}"));
                        }
                        (
                            format!("SELECT {} FROM {from}", cols.join(", ")),
                            Rel {
                                attrs,
                                annotated: v.is_some(),
                            },
                        )
                    }
                }
            }
            Instruction::Semijoin { lhs, rhs, .. } => {
                let lr = self.rel(lhs)?;
                let rr = self.rel(rhs)?;
                let mut cols: Vec<String> = lr.attrs.iter().map(|a| format!("l.{}", d.ident(a))).collect();
                if lr.annotated {
                    cols.push(format!("l.{ANNOTATION_COLUMN}"));
                }
                let on: Vec<String> = lr
                    .attrs
                    .iter()
                    .filter(|a| rr.attrs.contains(a))
                    .map(|a| format!("l.{} = r.{}", d.ident(a), d.ident(a)))
                    .collect();
                let cond = if on.is_empty() {
                    String::new()
                } else {
                    format!(" WHERE {}", on.join(" AND "))
                };
                (
                    format!(
                        "SELECT {} FROM {} WHERE EXISTS (SELECT 1 FROM {}{cond})",
                        cols.join(", "),
                        self.source_sql(lhs, "l")?,
                        self.source_sql(rhs, "r")?
                    ),
                    lr,
                )
            }
            Instruction::Project { src, keep, .. } => {
                let rel = self.rel(src)?;
                self.project_select(src, &rel, keep, "t")?
            }
            Instruction::Select { src, predicate, .. } => {
                let rel = self.rel(src)?;
                let mut cols: Vec<String> = rel.attrs.iter().map(|a| format!("t.{}", d.ident(a))).collect();
                if rel.annotated {
                    cols.push(format!("t.{ANNOTATION_COLUMN}"));
                }
                let wh = if predicate.is_true() {
                    String::new()
                } else {
                    format!(" WHERE {}", self.predicate(predicate, "t"))
                };
                (format!("SELECT {} FROM {}{wh}", cols.join(", "), self.source_sql(src, "t")?), rel)
            }
            Instruction::Materialize { src, one, .. } => {
                let rel = self.rel(src)?;
                let cols: Vec<String> = rel.attrs.iter().map(|a| format!("t.{}", d.ident(a))).collect();
                let from = self.source_sql(src, "t")?;
                if *one {
                    (
                        format!("SELECT DISTINCT {} FROM {from}", cols.join(", ")),
                        Rel {
                            attrs: rel.attrs.clone(),
                            annotated: false,
                        },
                    )
                } else {
                    let mut sel = cols;
                    if rel.annotated {
                        sel.push(format!("t.{ANNOTATION_COLUMN}"));
                    }
                    (format!("SELECT {} FROM {from}", sel.join(", ")), rel)
                }
            }
        })
    }
}

fn group_select(cols: &[String], agg: Option<&str>, from: &str, filter: &str) -> String {
    let mut sel: Vec<String> = cols.to_vec();
    if let Some(a) = agg {
        sel.push(format!("{a} AS {ANNOTATION_COLUMN}"));
    }
    let sel = if sel.is_empty() { "1 AS one".to_string() } else { sel.join(", ") };
    let group = if cols.is_empty() {
        String::new()
    } else {
        format!(" GROUP BY {}", cols.join(", "))
    };
    format!("SELECT {sel} FROM {from}{filter}{group}")
}

/// One statement per step: views for all but the last, then a SELECT of the
/// result. Deterministic for a given plan.
pub fn emit_sql(plan: &PlanIR, query: &ConjunctiveQuery, dialect: Dialect) -> Result<Vec<String>> {
    check_semiring(query.semiring)?;
    let mut low = Lowering {
        query,
        plan,
        d: dialect,
        env: HashMap::new(),
    };
    let mut out = Vec::with_capacity(plan.steps.len() + 1);
    let n = plan.steps.len();
    for (i, s) in plan.steps.iter().enumerate() {
        let (mut sql, rel) = low.instruction(&s.instr)?;
        if i + 1 == n && s.instr.dst() == plan.result {
            if query.semiring == SemiringKind::BoolOrAnd {
                sql = bool_final(&sql, &rel, dialect);
            }
            out.push(sql);
            return Ok(out);
        }
        out.push(dialect.create(s.instr.dst(), &sql));
        low.env.insert(s.instr.dst().to_string(), rel);
    }
    let rel = low.rel(&plan.result)?;
    let mut cols: Vec<String> = rel.attrs.iter().map(|a| format!("t.{}", dialect.ident(a))).collect();
    if rel.annotated {
        cols.push(format!("t.{ANNOTATION_COLUMN}"));
    }
    let sql = format!("SELECT {} FROM {}", cols.join(", "), low.source_sql(&plan.result, "t")?);
    out.push(if query.semiring == SemiringKind::BoolOrAnd {
        bool_final(&sql, &rel, dialect)
    } else {
        sql
    });
    Ok(out)
}

/// Wraps a boolean-semiring result so every output tuple reports `true`.
fn bool_final(sql: &str, rel: &Rel, d: Dialect) -> String {
    let cols: Vec<String> = rel.attrs.iter().map(|a| format!("t.{}", d.ident(a))).collect();
    group_select(&cols, Some("COUNT(*) > 0"), &format!("({sql}) AS t"), "")
}

/// The whole query as one SELECT over the base tables: equality predicates
/// for every shared attribute, selections, then GROUP BY the output.
pub fn emit_baseline_sql(query: &ConjunctiveQuery, dialect: Dialect) -> Result<String> {
    check_semiring(query.semiring)?;
    let d = dialect;
    let k = query.semiring;
    let col = |i: usize, a: &str| {
        let e = &query.relations[i];
        let p = e.attrs.iter().position(|x| x == a).expect("attribute of entry");
        let c = e.source.as_ref().map_or(a, |s| s.columns[p].as_str());
        format!("{}.{}", d.ident(&e.name), d.ident(c))
    };
    let holder = |a: &str| query.relations.iter().position(|e| e.attrs.iter().any(|x| x == a)).expect("held");
    let mut conds: Vec<String> = Vec::new();
    for a in &query.attributes {
        let holders: Vec<usize> = (0..query.n())
            .filter(|&i| query.relations[i].attrs.iter().any(|x| x == &a.name))
            .collect();
        for w in holders.windows(2) {
            conds.push(format!("{} = {}", col(w[0], &a.name), col(w[1], &a.name)));
        }
    }
    for (rel, p) in &query.selections {
        let i = query.index_of(rel).ok_or_else(|| Error::MissingRelation(rel.clone()))?;
        let low = Lowering {
            query,
            plan: &PlanIR::default(),
            d,
            env: HashMap::new(),
        };
        // Rendered against the table alias, then mapped to bound columns.
        let text = low.predicate(p, &d.ident(rel));
        let mapped = query.relations[i].attrs.iter().fold(text, |t, a| {
            t.replace(&format!("{}.{}", d.ident(rel), d.ident(a)), &col(i, a))
        });
        conds.push(mapped);
    }
    let mut factors: Vec<String> = Vec::new();
    for e in &query.relations {
        if let AnnotationSource::Column(c) = &e.annotation {
            let c = format!("{}.{}", d.ident(&e.name), d.ident(c));
            if k == SemiringKind::BoolOrAnd {
                conds.push(c);
            } else {
                factors.push(c);
            }
        }
    }
    let v = factors.iter().skip(1).fold(factors.first().cloned(), |acc, f| acc.map(|a| times(k, &a, f)));
    let agg = match k {
        SemiringKind::BoolOrAnd => Some("COUNT(*) > 0".to_string()),
        _ => aggregate(k, v.as_deref()),
    };
    let cols: Vec<String> = query.output.iter().map(|a| col(holder(a), a)).collect();
    let from: Vec<String> = query.relations.iter().map(|e| d.ident(&e.name)).collect();
    let wh = if conds.is_empty() {
        String::new()
    } else {
        format!(" WHERE {}", conds.join(" AND "))
    };
    Ok(group_select(&cols, agg.as_deref(), &from.join(", "), &wh))
}
