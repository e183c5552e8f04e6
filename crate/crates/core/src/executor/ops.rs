use std::collections::{HashMap, HashSet};

use crate::error::Result;
use crate::model::{AnnotatedRelation, Predicate, Row, Semiring, Value};

fn shared_positions<S: Semiring>(lhs: &AnnotatedRelation<S>, rhs: &AnnotatedRelation<S>) -> Vec<(usize, usize)> {
    lhs.schema()
        .iter()
        .enumerate()
        .filter_map(|(i, a)| rhs.position(&a.name).map(|j| (i, j)))
        .collect()
}

fn key(row: &[Value], pos: impl Iterator<Item = usize>) -> Box<[Value]> {
    pos.map(|p| row[p].clone()).collect()
}

/// Natural hash join; annotations multiply. The smaller side is hashed.
/// Output columns: `lhs` schema followed by the non-shared `rhs` columns.
pub fn exec_join<S: Semiring>(lhs: &AnnotatedRelation<S>, rhs: &AnnotatedRelation<S>) -> AnnotatedRelation<S> {
    let shared = shared_positions(lhs, rhs);
    let rhs_extra: Vec<usize> = (0..rhs.schema().len())
        .filter(|j| !shared.iter().any(|(_, s)| s == j))
        .collect();
    let mut schema = lhs.schema().to_vec();
    schema.extend(rhs_extra.iter().map(|&j| rhs.schema()[j].clone()));
    let annotated = lhs.is_annotated() || rhs.is_annotated();
    let mut rows: Vec<Row> = Vec::new();
    let mut annots: Vec<S::Elem> = Vec::new();
    let mut emit = |l: usize, r: usize| {
        let lr = &lhs.rows()[l];
        let rr = &rhs.rows()[r];
        let mut out: Vec<Value> = Vec::with_capacity(lr.len() + rhs_extra.len());
        out.extend(lr.iter().cloned());
        out.extend(rhs_extra.iter().map(|&j| rr[j].clone()));
        rows.push(out.into_boxed_slice());
        if annotated {
            annots.push(S::times(&lhs.annotation(l), &rhs.annotation(r)));
        }
    };
    if rhs.len() <= lhs.len() {
        let mut table: HashMap<Box<[Value]>, Vec<usize>> = HashMap::with_capacity(rhs.len());
        for (j, r) in rhs.rows().iter().enumerate() {
            table.entry(key(r, shared.iter().map(|s| s.1))).or_default().push(j);
        }
        for (i, l) in lhs.rows().iter().enumerate() {
            if let Some(ms) = table.get(&key(l, shared.iter().map(|s| s.0))) {
                for &j in ms {
                    emit(i, j);
                }
            }
        }
    } else {
        let mut table: HashMap<Box<[Value]>, Vec<usize>> = HashMap::with_capacity(lhs.len());
        for (i, l) in lhs.rows().iter().enumerate() {
            table.entry(key(l, shared.iter().map(|s| s.0))).or_default().push(i);
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (j, r) in rhs.rows().iter().enumerate() {
            if let Some(ms) = table.get(&key(r, shared.iter().map(|s| s.1))) {
                pairs.extend(ms.iter().map(|&i| (i, j)));
            }
        }
        pairs.sort_unstable();
        for (i, j) in pairs {
            emit(i, j);
        }
    }
    let name = format!("{}_{}", lhs.name(), rhs.name());
    AnnotatedRelation::from_parts(name, schema, rows, annotated.then_some(annots))
}

/// Rows of `lhs` with at least one match in `rhs`; annotations untouched.
pub fn exec_semijoin<S: Semiring>(lhs: &AnnotatedRelation<S>, rhs: &AnnotatedRelation<S>) -> AnnotatedRelation<S> {
    let shared = shared_positions(lhs, rhs);
    let keys: HashSet<Box<[Value]>> = rhs.rows().iter().map(|r| key(r, shared.iter().map(|s| s.1))).collect();
    lhs.filter_rows(|l| keys.contains(&key(l, shared.iter().map(|s| s.0))))
}

pub fn exec_project_aggregate<S: Semiring>(src: &AnnotatedRelation<S>, keep: &[&str]) -> Result<AnnotatedRelation<S>> {
    src.group_aggregate(keep)
}

pub fn exec_select<S: Semiring>(src: &AnnotatedRelation<S>, predicate: &Predicate) -> Result<AnnotatedRelation<S>> {
    let bound = predicate.bind(|a| src.position(a))?;
    Ok(src.filter_rows(|r| bound.eval(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CmpOp, Counting};
    use proptest::prelude::*;

    fn rel(name: &str, attrs: &[&str], rows: &[(Vec<i64>, u64)]) -> AnnotatedRelation<Counting> {
        AnnotatedRelation::from_rows(
            name,
            attrs,
            rows.iter().map(|(r, _)| r.iter().map(|&v| Value::Int(v)).collect()).collect(),
            Some(rows.iter().map(|(_, a)| *a).collect()),
        )
        .unwrap()
    }

    #[test]
    fn join_multiplies_annotations() {
        // Reduced R1 against the grouped R3 ⋉ R4 view from the worked instance.
        let r1 = rel("R1", &["x1", "x2", "x4"], &[(vec![4, 1, 1], 3), (vec![6, 1, 2], 5)]);
        let tv1 = rel("TV1", &["x3", "x4"], &[(vec![1, 1], 6), (vec![2, 2], 8)]);
        let r1x = rel("R1", &["x1", "x2", "x3", "x4"], &[(vec![4, 1, 1, 1], 3), (vec![5, 1, 2, 1], 4), (vec![6, 1, 2, 2], 5)]);
        let j = exec_join(&r1x, &tv1).group_aggregate(&["x1", "x2", "x4"]).unwrap();
        let want = rel("W", &["x1", "x2", "x4"], &[(vec![4, 1, 1], 18), (vec![6, 1, 2], 40)]);
        assert!(j.same_as(&want), "{j:?}");
        assert_eq!(exec_join(&r1, &rel("E", &["x4"], &[])).len(), 0);
    }

    #[test]
    fn semijoin_keeps_left_annotations() {
        let r3 = rel("R3", &["x3", "x4"], &[(vec![1, 1], 6), (vec![1, 2], 7), (vec![2, 2], 8)]);
        let r4 = rel("R4", &["x3"], &[(vec![1], 1), (vec![2], 1), (vec![3], 1)]);
        assert!(exec_semijoin(&r3, &r4).same_as(&r3));
        assert!(exec_semijoin(&r3, &r3).same_as(&r3));
        let r4b = rel("R4", &["x3"], &[(vec![2], 9)]);
        let s = exec_semijoin(&r3, &r4b);
        assert_eq!(s.len(), 1);
        assert_eq!(s.annotation(0), 8);
    }

    #[test]
    fn select_filters_rows() {
        let r = rel("R", &["a", "b"], &[(vec![1, 1], 1), (vec![2, 3], 1), (vec![3, 3], 1)]);
        let s = exec_select(&r, &Predicate::attr_eq("a", "b")).unwrap();
        assert_eq!(s.len(), 2);
        assert!(exec_select(&r, &Predicate::always()).unwrap().same_as(&r));
        let s = exec_select(&r, &Predicate::cmp("a", CmpOp::Gt, 1i64)).unwrap();
        assert_eq!(s.len(), 2);
    }

    fn arb_rel(name: &'static str, attrs: &'static [&'static str]) -> impl Strategy<Value = AnnotatedRelation<Counting>> {
        proptest::collection::vec((proptest::collection::vec(0i64..3, attrs.len()), 1u64..4), 0..10)
            .prop_map(move |rows| rel(name, attrs, &rows))
    }

    proptest! {
        #[test]
        fn join_matches_nested_loops(a in arb_rel("A", &["x", "y"]), b in arb_rel("B", &["y", "z"])) {
            let j = exec_join(&a, &b);
            let mut rows = Vec::new();
            let mut ann = Vec::new();
            for (ra, va) in a.iter() {
                for (rb, vb) in b.iter() {
                    if ra[1] == rb[0] {
                        rows.push(vec![ra[0].clone(), ra[1].clone(), rb[1].clone()]);
                        ann.push(va * vb);
                    }
                }
            }
            let want = AnnotatedRelation::<Counting>::from_rows("W", &["x", "y", "z"], rows, Some(ann)).unwrap();
            prop_assert!(j.same_as(&want));
            prop_assert!(exec_join(&b, &a).same_as(&j));
        }

        #[test]
        fn semijoin_matches_membership(a in arb_rel("A", &["x", "y"]), b in arb_rel("B", &["y", "z"])) {
            let s = exec_semijoin(&a, &b);
            let ys: HashSet<Value> = b.rows().iter().map(|r| r[0].clone()).collect();
            let want = a.filter_rows(|r| ys.contains(&r[1]));
            prop_assert!(s.same_as(&want));
            prop_assert_eq!(s.len(), want.len());
        }

        #[test]
        fn grouping_matches_hash_oracle(a in arb_rel("A", &["x", "y"])) {
            let g = exec_project_aggregate(&a, &["y"]).unwrap();
            let mut sums: HashMap<Value, u64> = HashMap::new();
            for (r, v) in a.iter() {
                *sums.entry(r[1].clone()).or_default() += v;
            }
            prop_assert_eq!(g.len(), sums.len());
            for (r, v) in g.iter() {
                prop_assert_eq!(sums[&r[0]], v);
            }
        }

        #[test]
        fn range_select_matches_filter(a in arb_rel("A", &["x", "y"]), lo in 0i64..3) {
            let p = Predicate::cmp("x", CmpOp::Ge, lo).and(Predicate::cmp("y", CmpOp::Lt, 2i64));
            let s = exec_select(&a, &p).unwrap();
            let want = a.iter().filter(|(r, _)| r[0] >= Value::Int(lo) && r[1] < Value::Int(2)).count();
            prop_assert_eq!(s.len(), want);
        }
    }
}
