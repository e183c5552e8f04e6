//! Attributes, values, semirings, annotated relations and queries.

mod predicate;
mod query;
mod relation;
mod semiring;
mod value;

use std::collections::BTreeMap;

use serde::Serialize;

pub use predicate::{BoundPredicate, CmpOp, Operand, Predicate, Term};
pub use query::{
    make_query, AnnotationSource, ConjunctiveQuery, RelationEntry, RelationSpec, TableSource,
};
pub use relation::{AnnotatedRelation, Canonical, Row};
pub use semiring::{
    BoolOrAnd, Counting, GroundKind, MaxPlus, Semiring, SemiringKind, SumProduct, FLOAT_RTOL,
};
pub use value::{DomainKind, Value};

use crate::error::{Error, Result};

/// A named column. `kind` is `None` until the attribute is bound to data.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Attribute {
    pub name: String,
    pub kind: Option<DomainKind>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: DomainKind) -> Self {
        Self {
            name: name.into(),
            kind: Some(kind),
        }
    }

    pub fn untyped(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: None,
        }
    }
}

/// Base relations by entry name.
pub struct Database<S: Semiring> {
    relations: BTreeMap<String, AnnotatedRelation<S>>,
}

impl<S: Semiring> Clone for Database<S> {
    fn clone(&self) -> Self {
        Self {
            relations: self.relations.clone(),
        }
    }
}

impl<S: Semiring> Default for Database<S> {
    fn default() -> Self {
        Self {
            relations: BTreeMap::new(),
        }
    }
}

impl<S: Semiring> std::fmt::Debug for Database<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in self.relations.values() {
            write!(f, "{r:?}")?;
        }
        Ok(())
    }
}

impl<S: Semiring> Database<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts under the relation's own name, replacing any previous one.
    pub fn insert(&mut self, rel: AnnotatedRelation<S>) {
        self.relations.insert(rel.name().to_string(), rel);
    }

    pub fn with(mut self, rel: AnnotatedRelation<S>) -> Self {
        self.insert(rel);
        self
    }

    pub fn get(&self, name: &str) -> Option<&AnnotatedRelation<S>> {
        self.relations.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&AnnotatedRelation<S>> {
        self.get(name).ok_or_else(|| Error::MissingRelation(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotatedRelation<S>> {
        self.relations.values()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// N: total number of input tuples over the query's relation entries.
    pub fn input_size(&self, query: &ConjunctiveQuery) -> usize {
        query
            .relations
            .iter()
            .filter_map(|r| self.get(&r.name))
            .map(AnnotatedRelation::len)
            .sum()
    }

    /// Checks that every entry is present with the attributes the query
    /// expects.
    pub fn check_against(&self, query: &ConjunctiveQuery) -> Result<()> {
        for e in &query.relations {
            let r = self.require(&e.name)?;
            let mut have = r.attr_names();
            have.sort_unstable();
            let mut want: Vec<&str> = e.attrs.iter().map(String::as_str).collect();
            want.sort_unstable();
            if have != want {
                return Err(Error::SchemaMismatch(format!(
                    "`{}` has attributes {have:?}, query expects {want:?}",
                    e.name
                )));
            }
        }
        Ok(())
    }
}
