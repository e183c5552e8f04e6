use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::semiring::Semiring;
use super::value::Value;
use super::Attribute;
use crate::error::{Error, Result};

pub type Row = Box<[Value]>;

/// A bag of rows, each carrying one semiring annotation.
///
/// `annotations == None` means every row is annotated with `one`; this is the
/// representation used when annotations are pruned.
pub struct AnnotatedRelation<S: Semiring> {
    name: String,
    schema: Vec<Attribute>,
    rows: Vec<Row>,
    annotations: Option<Vec<S::Elem>>,
}

impl<S: Semiring> Clone for AnnotatedRelation<S> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            schema: self.schema.clone(),
            rows: self.rows.clone(),
            annotations: self.annotations.clone(),
        }
    }
}

impl<S: Semiring> std::fmt::Debug for AnnotatedRelation<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

/// Normalized content: one entry per distinct tuple (attributes sorted by
/// name), duplicates ⊕-merged and zero-annotated tuples dropped.
pub type Canonical<E> = BTreeMap<Vec<Value>, E>;

impl<S: Semiring> AnnotatedRelation<S> {
    /// Builds a relation, checking arity, domains, and annotation count.
    pub fn new(
        name: impl Into<String>,
        schema: Vec<Attribute>,
        rows: Vec<Row>,
        annotations: Option<Vec<S::Elem>>,
    ) -> Result<Self> {
        let name = name.into();
        for (i, a) in schema.iter().enumerate() {
            if schema[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::SchemaMismatch(format!(
                    "attribute `{}` repeated in `{name}`",
                    a.name
                )));
            }
        }
        for row in &rows {
            if row.len() != schema.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row of arity {} in `{name}` with {} attributes",
                    row.len(),
                    schema.len()
                )));
            }
            for (v, a) in row.iter().zip(&schema) {
                if let Some(k) = a.kind {
                    if v.kind() != k {
                        return Err(Error::DomainMismatch {
                            attr: a.name.clone(),
                            detail: format!("value `{v}` is {} but attribute is {k}", v.kind()),
                        });
                    }
                }
            }
        }
        if let Some(a) = &annotations {
            if a.len() != rows.len() {
                return Err(Error::SchemaMismatch(format!(
                    "{} annotations for {} rows in `{name}`",
                    a.len(),
                    rows.len()
                )));
            }
        }
        Ok(Self {
            name,
            schema,
            rows,
            annotations,
        })
    }

    /// Convenience constructor over attribute names with untyped schema.
    pub fn from_rows(
        name: impl Into<String>,
        attrs: &[&str],
        rows: Vec<Vec<Value>>,
        annotations: Option<Vec<S::Elem>>,
    ) -> Result<Self> {
        let schema = attrs.iter().map(|a| Attribute::untyped(*a)).collect();
        let rows = rows.into_iter().map(Vec::into_boxed_slice).collect();
        Self::new(name, schema, rows, annotations)
    }

    pub(crate) fn from_parts(
        name: String,
        schema: Vec<Attribute>,
        rows: Vec<Row>,
        annotations: Option<Vec<S::Elem>>,
    ) -> Self {
        debug_assert!(annotations.as_ref().is_none_or(|a| a.len() == rows.len()));
        Self {
            name,
            schema,
            rows,
            annotations,
        }
    }

    pub fn empty(name: impl Into<String>, schema: Vec<Attribute>) -> Self {
        Self::from_parts(name.into(), schema, Vec::new(), Some(Vec::new()))
    }

    /// Annotates every row with `one`.
    pub fn annotate_default(mut self) -> Self {
        self.annotations = Some(vec![S::one(); self.rows.len()]);
        self
    }

    /// Drops annotations; every row then counts as `one`.
    pub fn strip_annotations(mut self) -> Self {
        self.annotations = None;
        self
    }

    /// Renames columns `from -> to`; errors on a missing or clashing name.
    pub fn rename_attrs(mut self, renames: &[(String, String)]) -> Result<Self> {
        for (from, to) in renames {
            let p = self
                .position(from)
                .ok_or_else(|| Error::UnknownAttribute(format!("{from} (in {})", self.name)))?;
            if self.position(to).is_some() {
                return Err(Error::SchemaMismatch(format!("`{}` already has `{to}`", self.name)));
            }
            self.schema[p].name = to.clone();
        }
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &[Attribute] {
        &self.schema
    }

    pub fn attr_names(&self) -> Vec<&str> {
        self.schema.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn position(&self, attr: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == attr)
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_annotated(&self) -> bool {
        self.annotations.is_some()
    }

    pub fn annotations(&self) -> Option<&[S::Elem]> {
        self.annotations.as_deref()
    }

    pub fn annotation(&self, i: usize) -> S::Elem {
        match &self.annotations {
            Some(a) => a[i].clone(),
            None => S::one(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Row, S::Elem)> + '_ {
        self.rows.iter().enumerate().map(|(i, r)| (r, self.annotation(i)))
    }

    pub(crate) fn positions(&self, attrs: &[&str]) -> Result<Vec<usize>> {
        attrs
            .iter()
            .map(|a| {
                self.position(a)
                    .ok_or_else(|| Error::UnknownAttribute(format!("{a} (in {})", self.name)))
            })
            .collect()
    }

    /// Groups on `keep` (in the given order) and ⊕-folds annotations.
    ///
    /// With `keep` empty and a non-empty input, yields the single empty tuple.
    /// An unannotated input stays unannotated only when ⊕ is idempotent;
    /// otherwise group sizes become visible and are materialized.
    pub fn group_aggregate(&self, keep: &[&str]) -> Result<Self> {
        let pos = self.positions(keep)?;
        let schema: Vec<Attribute> = pos.iter().map(|&p| self.schema[p].clone()).collect();
        let mut index: HashMap<Row, usize> = HashMap::with_capacity(self.rows.len());
        let mut rows: Vec<Row> = Vec::new();
        let keep_plain = self.annotations.is_none() && S::plus_idempotent();
        let mut annots: Vec<S::Elem> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let key: Row = pos.iter().map(|&p| row[p].clone()).collect();
            match index.get(&key) {
                Some(&g) => {
                    if !keep_plain {
                        annots[g] = S::plus(&annots[g], &self.annotation(i));
                    }
                }
                None => {
                    index.insert(key.clone(), rows.len());
                    rows.push(key);
                    if !keep_plain {
                        annots.push(self.annotation(i));
                    }
                }
            }
        }
        let annotations = if keep_plain { None } else { Some(annots) };
        Ok(Self::from_parts(self.name.clone(), schema, rows, annotations))
    }

    /// Column projection without grouping; duplicates survive.
    pub fn project_columns(&self, keep: &[&str]) -> Result<Self> {
        let pos = self.positions(keep)?;
        let schema = pos.iter().map(|&p| self.schema[p].clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| pos.iter().map(|&p| r[p].clone()).collect())
            .collect();
        Ok(Self::from_parts(self.name.clone(), schema, rows, self.annotations.clone()))
    }

    /// Keeps rows whose index satisfies `pred`.
    pub(crate) fn filter_rows(&self, mut pred: impl FnMut(&Row) -> bool) -> Self {
        let mut rows = Vec::new();
        let mut annots = self.annotations.as_ref().map(|_| Vec::new());
        for (i, r) in self.rows.iter().enumerate() {
            if pred(r) {
                rows.push(r.clone());
                if let (Some(out), Some(src)) = (annots.as_mut(), self.annotations.as_ref()) {
                    out.push(src[i].clone());
                }
            }
        }
        Self::from_parts(self.name.clone(), self.schema.clone(), rows, annots)
    }

    /// Attribute names sorted, the column order of [`Self::canonical`].
    pub fn sorted_attrs(&self) -> Vec<&str> {
        let mut a = self.attr_names();
        a.sort_unstable();
        a
    }

    pub fn canonical(&self) -> Canonical<S::Elem> {
        let order = self.sorted_attrs();
        let pos: Vec<usize> = order.iter().map(|a| self.position(a).unwrap()).collect();
        let mut out: Canonical<S::Elem> = BTreeMap::new();
        for (row, a) in self.iter() {
            let key: Vec<Value> = pos.iter().map(|&p| row[p].clone()).collect();
            match out.get_mut(&key) {
                Some(v) => *v = S::plus(v, &a),
                None => {
                    out.insert(key, a);
                }
            }
        }
        let zero = S::zero();
        out.retain(|_, v| !S::approx_eq(v, &zero));
        out
    }

    /// Equality as K-relations, using the semiring's comparison.
    pub fn same_as(&self, other: &Self) -> bool {
        self.diff(other).is_none()
    }

    /// Describes the first difference from `other`, if any.
    pub fn diff(&self, other: &Self) -> Option<String> {
        if self.sorted_attrs() != other.sorted_attrs() {
            return Some(format!(
                "attributes differ: {:?} vs {:?}",
                self.sorted_attrs(),
                other.sorted_attrs()
            ));
        }
        let (a, b) = (self.canonical(), other.canonical());
        for (k, va) in &a {
            match b.get(k) {
                None => return Some(format!("tuple {k:?} -> {va} only on the left")),
                Some(vb) if !S::approx_eq(va, vb) => {
                    return Some(format!("tuple {k:?}: {va} vs {vb}"));
                }
                _ => {}
            }
        }
        for (k, vb) in &b {
            if !a.contains_key(k) {
                return Some(format!("tuple {k:?} -> {vb} only on the right"));
            }
        }
        None
    }

    /// Aligned text table, rows sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.attr_names();
        let _ = writeln!(out, "{} ({}) | annotation", self.name, header.join(", "));
        let mut lines: Vec<String> = self
            .iter()
            .map(|(r, a)| {
                let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                format!("  ({}) -> {a}", cells.join(", "))
            })
            .collect();
        lines.sort();
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }
}
