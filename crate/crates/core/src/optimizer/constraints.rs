use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ConjunctiveQuery;

/// `child.child_attr` references `parent.parent_attr`, a single-column key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ForeignKey {
    pub child: String,
    pub child_attr: String,
    pub parent: String,
    pub parent_attr: String,
}

impl ForeignKey {
    pub fn new(child: &str, child_attr: &str, parent: &str, parent_attr: &str) -> Self {
        Self {
            child: child.into(),
            child_attr: child_attr.into(),
            parent: parent.into(),
            parent_attr: parent_attr.into(),
        }
    }
}

/// Declared keys. Attribute names are query attribute names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SchemaConstraints {
    pub primary_keys: BTreeMap<String, Vec<String>>,
    pub foreign_keys: Vec<ForeignKey>,
    pub uniques: BTreeMap<String, Vec<Vec<String>>>,
}

pub(crate) type KeySet = Vec<BTreeSet<String>>;

impl SchemaConstraints {
    pub fn is_empty(&self) -> bool {
        self.primary_keys.is_empty() && self.foreign_keys.is_empty() && self.uniques.is_empty()
    }

    pub fn with_pk(mut self, rel: &str, attrs: &[&str]) -> Self {
        self.primary_keys.insert(rel.into(), attrs.iter().map(|a| a.to_string()).collect());
        self
    }

    pub fn with_fk(mut self, fk: ForeignKey) -> Self {
        self.foreign_keys.push(fk);
        self
    }

    /// Primary key and unique sets of `rel`.
    pub fn keys_of(&self, rel: &str) -> KeySet {
        let mut out: KeySet = Vec::new();
        if let Some(pk) = self.primary_keys.get(rel) {
            out.push(pk.iter().cloned().collect());
        }
        for u in self.uniques.get(rel).into_iter().flatten() {
            out.push(u.iter().cloned().collect());
        }
        out
    }

    fn is_single_key(&self, rel: &str, attr: &str) -> bool {
        self.keys_of(rel).iter().any(|k| k.len() == 1 && k.contains(attr))
    }

    /// Whether `attr` occurs in some declared key of `rel`.
    pub fn in_key(&self, rel: &str, attr: &str) -> bool {
        self.keys_of(rel).iter().any(|k| k.contains(attr))
    }

    pub fn has_fk_on(&self, child: &str, attr: &str) -> bool {
        self.foreign_keys.iter().any(|f| f.child == child && f.child_attr == attr)
    }

    /// Foreign keys may only target single-column keys; with a query, every
    /// named relation and attribute must exist.
    pub fn validate(&self, query: Option<&ConjunctiveQuery>) -> Result<()> {
        for f in &self.foreign_keys {
            if !self.is_single_key(&f.parent, &f.parent_attr) {
                return Err(Error::InvalidConstraint(format!(
                    "{}.{} -> {}.{}: target is not a declared key",
                    f.child, f.child_attr, f.parent, f.parent_attr
                )));
            }
        }
        let Some(q) = query else { return Ok(()) };
        let check = |rel: &str, attr: &str| -> Result<()> {
            let i = q
                .index_of(rel)
                .ok_or_else(|| Error::InvalidConstraint(format!("unknown relation `{rel}`")))?;
            if !q.relations[i].attrs.iter().any(|a| a == attr) {
                return Err(Error::InvalidConstraint(format!("`{rel}` has no attribute `{attr}`")));
            }
            Ok(())
        };
        for (rel, attrs) in &self.primary_keys {
            for a in attrs {
                check(rel, a)?;
            }
        }
        for (rel, sets) in &self.uniques {
            for a in sets.iter().flatten() {
                check(rel, a)?;
            }
        }
        for f in &self.foreign_keys {
            check(&f.child, &f.child_attr)?;
            check(&f.parent, &f.parent_attr)?;
        }
        Ok(())
    }
}

/// Keeps the inclusion-minimal sets, at most `cap` of them (smallest first).
pub(crate) fn minimal_keys(mut keys: KeySet, cap: usize) -> KeySet {
    keys.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let mut out: KeySet = Vec::new();
    for k in keys {
        if !out.iter().any(|o| o.is_subset(&k)) {
            out.push(k);
        }
        if out.len() == cap {
            break;
        }
    }
    out
}

/// Keys of `lhs ⋈ rhs` given the shared attributes.
pub(crate) fn join_keys(lhs: &KeySet, rhs: &KeySet, shared: &BTreeSet<String>) -> KeySet {
    let mut out: KeySet = Vec::new();
    if rhs.iter().any(|k| k.is_subset(shared)) {
        out.extend(lhs.iter().cloned());
    }
    if lhs.iter().any(|k| k.is_subset(shared)) {
        out.extend(rhs.iter().cloned());
    }
    for l in lhs {
        for r in rhs {
            out.push(l.union(r).cloned().collect());
        }
    }
    minimal_keys(out, 8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn set(a: &[&str]) -> BTreeSet<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fk_must_target_a_key() {
        let c = SchemaConstraints::default().with_fk(ForeignKey::new("R5", "x7", "R6", "x7"));
        assert!(matches!(c.validate(None), Err(Error::InvalidConstraint(_))));
        let c = c.with_pk("R6", &["x7"]);
        c.validate(Some(&fixtures::q1())).unwrap();
        fixtures::q5_constraints().validate(Some(&fixtures::q5())).unwrap();
        let bad = SchemaConstraints::default().with_pk("R6", &["x1"]);
        assert!(bad.validate(Some(&fixtures::q1())).is_err());
    }

    #[test]
    fn key_propagation_through_joins() {
        let l = vec![set(&["a"])];
        let r = vec![set(&["b"])];
        assert_eq!(join_keys(&l, &r, &set(&["b"])), vec![set(&["a"])]);
        assert_eq!(join_keys(&l, &r, &set(&["c"])), vec![set(&["a", "b"])]);
        assert!(join_keys(&l, &Vec::new(), &set(&["a"])).is_empty());
        assert_eq!(minimal_keys(vec![set(&["a", "b"]), set(&["a"])], 8), vec![set(&["a"])]);
    }
}
