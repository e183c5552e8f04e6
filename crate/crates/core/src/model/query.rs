use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use super::predicate::Predicate;
use super::semiring::SemiringKind;
use super::value::DomainKind;
use super::Attribute;
use crate::error::{Error, Result};

/// Where a relation's annotations come from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AnnotationSource {
    /// Every tuple is annotated with the semiring's `one`.
    One,
    /// A numeric column consumed into the annotation.
    Column(String),
}

/// CSV binding of a relation entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableSource {
    pub path: PathBuf,
    /// Source column for each attribute, parallel to the entry's attributes.
    pub columns: Vec<String>,
}

/// Input to [`make_query`].
#[derive(Clone, Debug)]
pub struct RelationSpec {
    pub name: String,
    pub attrs: Vec<(String, Option<DomainKind>)>,
    pub annotation: AnnotationSource,
    pub source: Option<TableSource>,
}

impl RelationSpec {
    pub fn new(name: &str, attrs: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            attrs: attrs.iter().map(|a| (a.to_string(), None)).collect(),
            annotation: AnnotationSource::One,
            source: None,
        }
    }

    pub fn annotated(mut self, column: &str) -> Self {
        self.annotation = AnnotationSource::Column(column.to_string());
        self
    }
}

/// One logical relation occurrence in a query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationEntry {
    pub name: String,
    pub attrs: Vec<String>,
    pub annotation: AnnotationSource,
    pub source: Option<TableSource>,
}

/// `π_O (R_1(A_1) ⋈ ... ⋈ R_n(A_n))` with semiring aggregation and
/// pushed-down selections.
#[derive(Clone, Debug)]
pub struct ConjunctiveQuery {
    pub relations: Vec<RelationEntry>,
    /// Output attributes, in universe order.
    pub output: Vec<String>,
    /// Attribute universe in first-appearance order.
    pub attributes: Vec<Attribute>,
    pub semiring: SemiringKind,
    pub selections: BTreeMap<String, Predicate>,
}

/// Validates and assembles a query.
pub fn make_query(
    relations: Vec<RelationSpec>,
    output: &[&str],
    semiring: SemiringKind,
    selections: BTreeMap<String, Predicate>,
) -> Result<ConjunctiveQuery> {
    if relations.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut names = BTreeSet::new();
    let mut attributes: Vec<Attribute> = Vec::new();
    let mut entries = Vec::with_capacity(relations.len());
    for spec in relations {
        if spec.name.is_empty() || !names.insert(spec.name.clone()) {
            return Err(Error::DuplicateRelation(spec.name));
        }
        let mut seen = BTreeSet::new();
        for (a, kind) in &spec.attrs {
            if a.is_empty() {
                return Err(Error::UnknownAttribute(format!("empty name in {}", spec.name)));
            }
            if !seen.insert(a.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "attribute `{a}` repeated in `{}`",
                    spec.name
                )));
            }
            match attributes.iter_mut().find(|x| &x.name == a) {
                Some(existing) => {
                    if let (Some(k0), Some(k1)) = (existing.kind, *kind) {
                        existing.kind = Some(k0.unify(k1).ok_or_else(|| Error::DomainMismatch {
                            attr: a.clone(),
                            detail: format!("declared both {k0} and {k1}"),
                        })?);
                    } else if existing.kind.is_none() {
                        existing.kind = *kind;
                    }
                }
                None => attributes.push(Attribute {
                    name: a.clone(),
                    kind: *kind,
                }),
            }
        }
        if let Some(src) = &spec.source {
            if src.columns.len() != spec.attrs.len() {
                return Err(Error::SchemaMismatch(format!(
                    "`{}` binds {} columns for {} attributes",
                    spec.name,
                    src.columns.len(),
                    spec.attrs.len()
                )));
            }
        }
        entries.push(RelationEntry {
            name: spec.name,
            attrs: spec.attrs.into_iter().map(|(a, _)| a).collect(),
            annotation: spec.annotation,
            source: spec.source,
        });
    }
    for o in output {
        if !attributes.iter().any(|a| a.name == *o) {
            return Err(Error::UnknownAttribute(o.to_string()));
        }
    }
    let out_set: BTreeSet<&str> = output.iter().copied().collect();
    let output = attributes
        .iter()
        .filter(|a| out_set.contains(a.name.as_str()))
        .map(|a| a.name.clone())
        .collect();
    for (rel, pred) in &selections {
        let entry = entries
            .iter()
            .find(|e| &e.name == rel)
            .ok_or_else(|| Error::MissingRelation(rel.clone()))?;
        for a in pred.attrs() {
            if !entry.attrs.iter().any(|x| x == a) {
                return Err(Error::UnknownAttribute(format!("{a} (selection on {rel})")));
            }
        }
    }
    Ok(ConjunctiveQuery {
        relations: entries,
        output,
        attributes,
        semiring,
        selections,
    })
}

impl ConjunctiveQuery {
    /// Number of relation entries.
    pub fn n(&self) -> usize {
        self.relations.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn attr_set(&self, i: usize) -> BTreeSet<&str> {
        self.relations[i].attrs.iter().map(String::as_str).collect()
    }

    pub fn output_set(&self) -> BTreeSet<&str> {
        self.output.iter().map(String::as_str).collect()
    }

    pub fn kind_of(&self, attr: &str) -> Option<DomainKind> {
        self.attributes.iter().find(|a| a.name == attr).and_then(|a| a.kind)
    }

    /// Position of an attribute in the universe order.
    pub fn rank(&self, attr: &str) -> usize {
        self.attributes
            .iter()
            .position(|a| a.name == attr)
            .unwrap_or(usize::MAX)
    }

    /// Sorts attribute names into universe order, dropping duplicates.
    pub fn order_attrs<'a, I, T>(&self, attrs: I) -> Vec<String>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str> + 'a,
    {
        let mut v: Vec<String> = attrs.into_iter().map(|a| a.as_ref().to_string()).collect();
        v.sort_by(|a, b| self.rank(a).cmp(&self.rank(b)).then_with(|| a.cmp(b)));
        v.dedup();
        v
    }

    /// A query with no projection (O covers every attribute).
    pub fn is_full(&self) -> bool {
        self.output.len() == self.attributes.len()
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q({}) :- ", self.output.join(", "))?;
        for (i, r) in self.relations.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}({})", r.name, r.attrs.join(", "))?;
        }
        for (r, p) in &self.selections {
            write!(f, "; {r}: {p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predicate::CmpOp;

    fn q1_specs() -> Vec<RelationSpec> {
        vec![
            RelationSpec::new("R1", &["x1", "x2", "x3", "x4"]).annotated("l_quantity"),
            RelationSpec::new("R2", &["x2", "x5"]),
            RelationSpec::new("R3", &["x3", "x4"]).annotated("ps_supplycost"),
            RelationSpec::new("R4", &["x3", "x6"]),
            RelationSpec::new("R5", &["x4", "x7"]),
            RelationSpec::new("R6", &["x7", "x8"]),
        ]
    }

    #[test]
    fn builds_q1() {
        let q = make_query(q1_specs(), &["x8", "x1", "x2"], SemiringKind::SumProduct, BTreeMap::new())
            .unwrap();
        assert_eq!(q.n(), 6);
        assert_eq!(q.attributes.len(), 8);
        assert_eq!(q.output, vec!["x1", "x2", "x8"]);
    }

    #[test]
    fn rejects_bad_queries() {
        assert!(matches!(
            make_query(vec![], &[], SemiringKind::Counting, BTreeMap::new()),
            Err(Error::EmptyQuery)
        ));
        assert!(matches!(
            make_query(q1_specs(), &["x9"], SemiringKind::Counting, BTreeMap::new()),
            Err(Error::UnknownAttribute(_))
        ));
        let mut specs = q1_specs();
        specs[0].attrs[0].1 = Some(DomainKind::Integer);
        specs.push(RelationSpec {
            attrs: vec![("x1".into(), Some(DomainKind::String))],
            ..RelationSpec::new("R7", &[])
        });
        assert!(matches!(
            make_query(specs, &[], SemiringKind::Counting, BTreeMap::new()),
            Err(Error::DomainMismatch { .. })
        ));
        let mut sel = BTreeMap::new();
        sel.insert("R2".to_string(), Predicate::cmp("x1", CmpOp::Eq, 1i64));
        assert!(make_query(q1_specs(), &[], SemiringKind::Counting, sel).is_err());
    }

    #[test]
    fn triangle_is_a_valid_query() {
        let specs = vec![
            RelationSpec::new("R", &["x1", "x2"]),
            RelationSpec::new("S", &["x2", "x3"]),
            RelationSpec::new("T", &["x3", "x1"]),
        ];
        let q = make_query(specs, &[], SemiringKind::Counting, BTreeMap::new()).unwrap();
        assert!(q.output.is_empty());
    }
}
