//! Canonical queries, join trees and instances used by tests, benches and
//! the CLI's bundled examples.

use std::collections::BTreeMap;

use crate::hypergraph::JoinTree;
use crate::model::{
    make_query, AnnotatedRelation, ConjunctiveQuery, Database, RelationSpec, Semiring, SemiringKind,
    Value,
};
use crate::optimizer::{ForeignKey, SchemaConstraints};

fn build(specs: Vec<RelationSpec>, output: &[&str], semiring: SemiringKind) -> ConjunctiveQuery {
    make_query(specs, output, semiring, BTreeMap::new()).expect("fixture query is valid")
}

fn q1_relations() -> Vec<RelationSpec> {
    vec![
        RelationSpec::new("R1", &["x1", "x2", "x3", "x4"]).annotated("l_quantity"),
        RelationSpec::new("R2", &["x2", "x5"]),
        RelationSpec::new("R3", &["x3", "x4"]).annotated("ps_supplycost"),
        RelationSpec::new("R4", &["x3", "x6"]),
        RelationSpec::new("R5", &["x4", "x7"]),
        RelationSpec::new("R6", &["x7", "x8"]),
    ]
}

/// The six-relation profit query over x1..x8 with O = {x1, x2, x8}.
pub fn q1() -> ConjunctiveQuery {
    build(q1_relations(), &["x1", "x2", "x8"], SemiringKind::SumProduct)
}

/// Q1's relations with O = {x1, x2, x3, x5, x6} (free-connex).
pub fn q2() -> ConjunctiveQuery {
    build(q1_relations(), &["x1", "x2", "x3", "x5", "x6"], SemiringKind::SumProduct)
}

/// Q1's relations with O = {x1} (relation-dominated by R1).
pub fn q3() -> ConjunctiveQuery {
    build(q1_relations(), &["x1"], SemiringKind::SumProduct)
}

/// `π_{x1}(R1(x1,x2) ⋈ R2(x2,x3))`.
pub fn q4() -> ConjunctiveQuery {
    build(
        vec![RelationSpec::new("R1", &["x1", "x2"]), RelationSpec::new("R2", &["x2", "x3"])],
        &["x1"],
        SemiringKind::Counting,
    )
}

/// Six relations whose PK-FK joins close the cycle R1, R2, R3, R5.
pub fn q5() -> ConjunctiveQuery {
    build(
        vec![
            RelationSpec::new("R1", &["x1", "x2"]),
            RelationSpec::new("R2", &["x2", "x3", "x8"]),
            RelationSpec::new("R3", &["x3", "x4"]),
            RelationSpec::new("R4", &["x4", "x5", "x6"]),
            RelationSpec::new("R5", &["x1", "x4"]),
            RelationSpec::new("R6", &["x6", "x7"]),
        ],
        &["x5"],
        SemiringKind::Counting,
    )
}

/// Key declarations for [`q5`].
pub fn q5_constraints() -> SchemaConstraints {
    let mut c = SchemaConstraints::default();
    for (rel, key) in [("R2", "x2"), ("R3", "x3"), ("R4", "x4"), ("R5", "x1"), ("R6", "x6")] {
        c.primary_keys.insert(rel.into(), vec![key.into()]);
    }
    for (child, attr, parent) in [
        ("R1", "x2", "R2"),
        ("R2", "x3", "R3"),
        ("R3", "x4", "R4"),
        ("R1", "x1", "R5"),
        ("R5", "x4", "R4"),
        ("R4", "x6", "R6"),
    ] {
        c.foreign_keys.push(ForeignKey::new(child, attr, parent, attr));
    }
    c
}

pub fn triangle() -> ConjunctiveQuery {
    build(
        vec![
            RelationSpec::new("R", &["x1", "x2"]),
            RelationSpec::new("S", &["x2", "x3"]),
            RelationSpec::new("T", &["x3", "x1"]),
        ],
        &[],
        SemiringKind::Counting,
    )
}

/// Two triangles joined through R4(x3, x4).
pub fn two_triangles(output: &[&str]) -> ConjunctiveQuery {
    build(
        vec![
            RelationSpec::new("R1", &["x1", "x2"]),
            RelationSpec::new("R2", &["x2", "x3"]),
            RelationSpec::new("R3", &["x3", "x1"]),
            RelationSpec::new("R4", &["x3", "x4"]),
            RelationSpec::new("R5", &["x4", "x5"]),
            RelationSpec::new("R6", &["x5", "x6"]),
            RelationSpec::new("R7", &["x6", "x4"]),
        ],
        output,
        SemiringKind::Counting,
    )
}

pub fn single() -> ConjunctiveQuery {
    build(vec![RelationSpec::new("R", &["x1"])], &["x1"], SemiringKind::Counting)
}

/// T1: R5 at the root with children R1 and R6; R2 and R3 under R1; R4 under R3.
pub fn t1() -> JoinTree {
    JoinTree::new(vec![Some(4), Some(0), Some(0), Some(2), None, Some(4)]).unwrap()
}

/// T2: R1 at the root with children R2..R5; R6 under R5.
pub fn t2() -> JoinTree {
    JoinTree::new(vec![None, Some(0), Some(0), Some(0), Some(0), Some(4)]).unwrap()
}

/// T1 rerooted at R1.
pub fn t3() -> JoinTree {
    t1().reroot(0)
}

fn ints(v: &[i64]) -> Vec<Value> {
    v.iter().map(|&i| Value::Int(i)).collect()
}

fn annots<S: Semiring>(v: &[i64]) -> Option<Vec<S::Elem>> {
    Some(v.iter().map(|&i| S::from_value(&Value::Int(i)).expect("integral annotation")).collect())
}

/// The small worked instance for [`q1`].
pub fn appendix_db<S: Semiring>() -> Database<S> {
    let rel = |name: &str, attrs: &[&str], rows: Vec<Vec<Value>>, ann: Option<Vec<S::Elem>>| {
        let r = AnnotatedRelation::<S>::from_rows(name, attrs, rows, ann).unwrap();
        if r.is_annotated() {
            r
        } else {
            r.annotate_default()
        }
    };
    let blue = |i: i64| vec![Value::Int(i), Value::str(&format!("blue{i}"))];
    let nation = |k: i64, n: &str| vec![Value::Int(k), Value::str(n)];
    Database::new()
        .with(rel(
            "R1",
            &["x1", "x2", "x3", "x4"],
            vec![ints(&[4, 1, 1, 1]), ints(&[5, 1, 2, 1]), ints(&[6, 1, 2, 2])],
            annots::<S>(&[3, 4, 5]),
        ))
        .with(rel(
            "R2",
            &["x2", "x5"],
            vec![ints(&[1, 1996]), ints(&[2, 1996]), ints(&[3, 1996])],
            None,
        ))
        .with(rel(
            "R3",
            &["x3", "x4"],
            vec![ints(&[1, 1]), ints(&[1, 2]), ints(&[2, 2])],
            annots::<S>(&[6, 7, 8]),
        ))
        .with(rel("R4", &["x3", "x6"], vec![blue(1), blue(2), blue(3)], None))
        .with(rel(
            "R5",
            &["x4", "x7"],
            vec![ints(&[1, 1]), ints(&[2, 2]), ints(&[3, 1])],
            None,
        ))
        .with(rel(
            "R6",
            &["x7", "x8"],
            vec![nation(1, "ARGENTINA"), nation(2, "BRAZIL"), nation(3, "CANADA")],
            None,
        ))
}

/// Expected result on [`appendix_db`].
pub fn appendix_result<S: Semiring>() -> AnnotatedRelation<S> {
    AnnotatedRelation::from_rows(
        "Result",
        &["x1", "x2", "x8"],
        vec![
            vec![Value::Int(4), Value::Int(1), Value::str("ARGENTINA")],
            vec![Value::Int(6), Value::Int(1), Value::str("BRAZIL")],
        ],
        annots::<S>(&[18, 40]),
    )
    .unwrap()
}
