//! Reference evaluation by backtracking over relation rows. Shares no join
//! code with the plan interpreter.

use std::collections::{HashMap, HashSet};
use std::ops::ControlFlow;

use crate::error::Result;
use crate::model::{AnnotatedRelation, Attribute, ConjunctiveQuery, Database, Semiring, Value};

struct Level<'a, S: Semiring> {
    rel: &'a AnnotatedRelation<S>,
    /// Rows passing the relation's selection.
    rows: Vec<usize>,
    /// (column, universe slot) for columns bound by earlier levels.
    bound: Vec<(usize, usize)>,
    /// (column, universe slot) for columns this level binds.
    fresh: Vec<(usize, usize)>,
    index: HashMap<Vec<Value>, Vec<usize>>,
}

/// Visits every full-join tuple as (universe binding, ⊗ of annotations).
fn for_each_tuple<S: Semiring>(
    query: &ConjunctiveQuery,
    db: &Database<S>,
    mut visit: impl FnMut(&[Value], &S::Elem) -> ControlFlow<()>,
) -> Result<()> {
    let universe: Vec<&str> = query.attributes.iter().map(|a| a.name.as_str()).collect();
    let slot = |a: &str| universe.iter().position(|u| *u == a).expect("attribute in universe");
    let n = query.n();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut seen_attrs: HashSet<&str> = HashSet::new();
    while order.len() < n {
        let next = (0..n)
            .filter(|i| !order.contains(i))
            .max_by_key(|&i| {
                let shared = query.relations[i].attrs.iter().filter(|a| seen_attrs.contains(a.as_str())).count();
                (shared, std::cmp::Reverse(i))
            })
            .expect("relations remain");
        seen_attrs.extend(query.relations[next].attrs.iter().map(String::as_str));
        order.push(next);
    }
    let mut levels: Vec<Level<'_, S>> = Vec::with_capacity(n);
    let mut bound_slots: HashSet<usize> = HashSet::new();
    for &i in &order {
        let entry = &query.relations[i];
        let rel = db.require(&entry.name)?;
        let rows: Vec<usize> = match query.selections.get(&entry.name) {
            Some(p) => {
                let b = p.bind(|a| rel.position(a))?;
                (0..rel.len()).filter(|&r| b.eval(&rel.rows()[r])).collect()
            }
            None => (0..rel.len()).collect(),
        };
        let mut bound = Vec::new();
        let mut fresh = Vec::new();
        for a in &entry.attrs {
            let col = rel.positions(&[a])?[0];
            let s = slot(a);
            if bound_slots.contains(&s) {
                bound.push((col, s));
            } else {
                fresh.push((col, s));
            }
        }
        for &(_, s) in &fresh {
            bound_slots.insert(s);
        }
        let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
        for &r in &rows {
            let k = bound.iter().map(|&(c, _)| rel.rows()[r][c].clone()).collect();
            index.entry(k).or_default().push(r);
        }
        levels.push(Level {
            rel,
            rows,
            bound,
            fresh,
            index,
        });
    }
    let mut binding = vec![Value::Int(0); universe.len()];
    let _ = descend(&levels, 0, &mut binding, S::one(), &mut visit);
    Ok(())
}

fn descend<S: Semiring>(
    levels: &[Level<'_, S>],
    depth: usize,
    binding: &mut Vec<Value>,
    acc: S::Elem,
    visit: &mut impl FnMut(&[Value], &S::Elem) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let Some(level) = levels.get(depth) else {
        return visit(binding, &acc);
    };
    let key: Vec<Value> = level.bound.iter().map(|&(_, s)| binding[s].clone()).collect();
    let Some(matches) = level.index.get(&key) else {
        return ControlFlow::Continue(());
    };
    debug_assert!(matches.iter().all(|r| level.rows.contains(r)));
    for &r in matches {
        let row = &level.rel.rows()[r];
        for &(c, s) in &level.fresh {
            binding[s] = row[c].clone();
        }
        let a = S::times(&acc, &level.rel.annotation(r));
        descend(levels, depth + 1, binding, a, visit)?;
    }
    ControlFlow::Continue(())
}

/// `π_O` of the full join with ⊕-aggregation, computed literally.
pub fn oracle<S: Semiring>(query: &ConjunctiveQuery, db: &Database<S>) -> Result<AnnotatedRelation<S>> {
    let slots: Vec<usize> = query
        .output
        .iter()
        .map(|o| query.attributes.iter().position(|a| &a.name == o).expect("output in universe"))
        .collect();
    let mut groups: HashMap<Vec<Value>, usize> = HashMap::new();
    let mut rows: Vec<Vec<Value>> = Vec::new();
    let mut annots: Vec<S::Elem> = Vec::new();
    for_each_tuple(query, db, |b, a| {
        let key: Vec<Value> = slots.iter().map(|&s| b[s].clone()).collect();
        match groups.get(&key) {
            Some(&g) => annots[g] = S::plus(&annots[g], a),
            None => {
                groups.insert(key.clone(), rows.len());
                rows.push(key);
                annots.push(a.clone());
            }
        }
        ControlFlow::Continue(())
    })?;
    let schema: Vec<Attribute> = query
        .output
        .iter()
        .map(|o| Attribute {
            name: o.clone(),
            kind: query.kind_of(o),
        })
        .collect();
    let rows = rows.into_iter().map(Vec::into_boxed_slice).collect();
    Ok(AnnotatedRelation::from_parts("oracle".into(), schema, rows, Some(annots)))
}

/// Number of full-join tuples (bag count), stopping at `cap`.
pub fn full_join_size<S: Semiring>(query: &ConjunctiveQuery, db: &Database<S>, cap: u64) -> Result<u64> {
    let mut count = 0u64;
    for_each_tuple(query, db, |_, _| {
        count += 1;
        if count >= cap {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(count)
}

/// Distinct projections of full-join tuples onto `attrs`.
pub fn participation<S: Semiring>(
    query: &ConjunctiveQuery,
    db: &Database<S>,
    attrs: &[String],
) -> Result<HashSet<Vec<Value>>> {
    let slots: Vec<usize> = attrs
        .iter()
        .map(|o| {
            query
                .attributes
                .iter()
                .position(|a| &a.name == o)
                .ok_or_else(|| crate::error::Error::UnknownAttribute(o.clone()))
        })
        .collect::<Result<_>>()?;
    let mut out = HashSet::new();
    for_each_tuple(query, db, |b, _| {
        out.insert(slots.iter().map(|&s| b[s].clone()).collect());
        ControlFlow::Continue(())
    })?;
    Ok(out)
}
