//! Seeded synthetic queries and instances.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::model::{
    make_query, AnnotatedRelation, AnnotationSource, ConjunctiveQuery, Counting, Database, GroundKind, RelationSpec,
    Semiring, SemiringKind, Value,
};
use crate::optimizer::SchemaConstraints;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bounds for [`random_acyclic_query`].
#[derive(Clone, Debug)]
pub struct QueryShape {
    pub min_relations: usize,
    pub max_relations: usize,
    pub max_attrs: usize,
    /// Chance that an attribute is in the output.
    pub output_prob: f64,
    /// Chance that a relation carries an annotation column.
    pub annotated_prob: f64,
    pub semiring: SemiringKind,
}

impl Default for QueryShape {
    fn default() -> Self {
        Self {
            min_relations: 2,
            max_relations: 7,
            max_attrs: 4,
            output_prob: 0.4,
            annotated_prob: 0.5,
            semiring: SemiringKind::Counting,
        }
    }
}

/// A query built along a random tree: each relation shares a nonempty
/// subset of its parent's attributes, so the query is acyclic by
/// construction.
pub fn random_acyclic_query(rng: &mut impl Rng, shape: &QueryShape) -> ConjunctiveQuery {
    let n = rng.random_range(shape.min_relations..=shape.max_relations.max(shape.min_relations));
    let mut next = 1usize;
    let mut fresh = || {
        let a = format!("x{next}");
        next += 1;
        a
    };
    let mut attrs: Vec<Vec<String>> = Vec::with_capacity(n);
    for i in 0..n {
        let k = rng.random_range(1..=shape.max_attrs);
        let mut a: Vec<String> = Vec::new();
        if i > 0 {
            let p = rng.random_range(0..i);
            let s = rng.random_range(1..=attrs[p].len().min(k));
            a.extend(attrs[p].choose_multiple(rng, s).cloned());
        }
        while a.len() < k {
            a.push(fresh());
        }
        attrs.push(a);
    }
    let universe: BTreeSet<&String> = attrs.iter().flatten().collect();
    let output: Vec<&str> = universe
        .iter()
        .filter(|_| rng.random_bool(shape.output_prob))
        .map(|s| s.as_str())
        .collect();
    let specs = attrs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            let spec = RelationSpec::new(&format!("R{}", i + 1), &refs);
            if rng.random_bool(shape.annotated_prob) {
                spec.annotated("v")
            } else {
                spec
            }
        })
        .collect();
    make_query(specs, &output, shape.semiring, BTreeMap::new()).expect("generated query is valid")
}

/// A random annotation in the semiring's ground set: small integers,
/// floats in `[0.5, 4)`, or mostly-true booleans.
pub fn random_annotation<S: Semiring>(rng: &mut impl Rng) -> S::Elem {
    let v = match S::GROUND {
        GroundKind::Integer => Value::Int(rng.random_range(1..=5)),
        GroundKind::Float => Value::float(rng.random_range(0.5..4.0)),
        GroundKind::Boolean => Value::Int(rng.random_bool(0.8) as i64),
    };
    S::from_value(&v).expect("ground value converts")
}

fn finish<S: Semiring>(
    name: &str,
    attrs: &[String],
    rows: Vec<Vec<Value>>,
    annotated: bool,
    rng: &mut impl Rng,
) -> AnnotatedRelation<S> {
    let refs: Vec<&str> = attrs.iter().map(String::as_str).collect();
    let ann = annotated.then(|| rows.iter().map(|_| random_annotation::<S>(rng)).collect());
    let r = AnnotatedRelation::from_rows(name, &refs, rows, ann).expect("generated relation is valid");
    if annotated {
        r
    } else {
        r.annotate_default()
    }
}

/// Duplicate-free uniform data: each relation gets between one and
/// `max_rows` distinct tuples over `0..domain`.
pub fn random_instance<S: Semiring>(query: &ConjunctiveQuery, max_rows: usize, domain: i64, seed: u64) -> Database<S> {
    let mut rng = rng(seed);
    let mut db = Database::new();
    for e in &query.relations {
        let want = rng.random_range(1..=max_rows.max(1));
        let cap = (domain.max(1) as u128).saturating_pow(e.attrs.len() as u32).min(want as u128) as usize;
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let mut rows = Vec::with_capacity(cap);
        while rows.len() < cap {
            let row: Vec<Value> = e.attrs.iter().map(|_| Value::Int(rng.random_range(0..domain.max(1)))).collect();
            if seen.insert(row.clone()) {
                rows.push(row);
            }
        }
        let annotated = matches!(e.annotation, AnnotationSource::Column(_));
        db.insert(finish::<S>(&e.name, &e.attrs, rows, annotated, &mut rng));
    }
    db
}

/// `n` draws from `1..=domain` with Zipf exponent `s`; `s = 0` is uniform.
pub fn zipf_values(rng: &mut impl Rng, n: usize, domain: u64, s: f64) -> Vec<i64> {
    let z = Zipf::new(domain.max(1) as f64, s.max(0.0)).expect("valid zipf parameters");
    (0..n).map(|_| z.sample(rng) as i64).collect()
}

/// Data honoring `constraints`: key columns take distinct values `0..rows`,
/// foreign-key columns draw from the referenced keys, other columns are
/// uniform over `0..domain`.
pub fn pkfk_instance<S: Semiring>(
    query: &ConjunctiveQuery,
    constraints: &SchemaConstraints,
    rows: usize,
    domain: i64,
    seed: u64,
) -> Database<S> {
    let mut rng = rng(seed);
    let mut db = Database::new();
    for e in &query.relations {
        let keys = constraints.keys_of(&e.name);
        let single: Vec<&String> = keys.iter().filter(|k| k.len() == 1).flat_map(|k| k.iter()).collect();
        let mut cols: Vec<Vec<Value>> = Vec::with_capacity(e.attrs.len());
        for a in &e.attrs {
            let col = if single.contains(&a) {
                let mut v: Vec<i64> = (0..rows as i64).collect();
                use rand::seq::SliceRandom;
                v.shuffle(&mut rng);
                v.into_iter().map(Value::Int).collect()
            } else if constraints.has_fk_on(&e.name, a) {
                // Parent keys are 0..rows by construction.
                (0..rows).map(|_| Value::Int(rng.random_range(0..rows as i64))).collect()
            } else {
                (0..rows).map(|_| Value::Int(rng.random_range(0..domain.max(1)))).collect()
            };
            cols.push(col);
        }
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let tuples: Vec<Vec<Value>> = (0..rows)
            .map(|r| cols.iter().map(|c| c[r].clone()).collect::<Vec<Value>>())
            .filter(|t| seen.insert(t.clone()))
            .collect();
        let annotated = matches!(e.annotation, AnnotationSource::Column(_));
        db.insert(finish::<S>(&e.name, &e.attrs, tuples, annotated, &mut rng));
    }
    db
}

/// Instance for the five-relation key cycle fixture.
pub fn q5_instance<S: Semiring>(rows: usize, seed: u64) -> Database<S> {
    pkfk_instance(
        &crate::fixtures::q5(),
        &crate::fixtures::q5_constraints(),
        rows,
        (rows as i64).max(2),
        seed,
    )
}

/// Many-to-many version of a key relation: every tuple repeated `k` times,
/// so a foreign-key join fans out `k` ways. The result is bag-valued.
pub fn k_copy<S: Semiring>(rel: &AnnotatedRelation<S>, k: usize) -> AnnotatedRelation<S> {
    let attrs = rel.attr_names();
    let mut rows = Vec::with_capacity(rel.len() * k);
    let mut ann = Vec::with_capacity(rel.len() * k);
    for (row, a) in rel.iter() {
        for _ in 0..k {
            rows.push(row.to_vec());
            ann.push(a.clone());
        }
    }
    AnnotatedRelation::from_rows(rel.name(), &attrs, rows, Some(ann)).expect("same schema")
}

/// Two-path counting query `π_{x1} E1(x1, x2) ⋈ E2(x2, x3)` on a star: `d`
/// leaves point into hub 0 and the hub points to `d` leaves, plus one edge
/// that joins nothing. N = 2d + 1 and the full join has d² rows.
pub fn star_two_path(d: usize) -> (ConjunctiveQuery, Database<Counting>) {
    let q = make_query(
        vec![RelationSpec::new("E1", &["x1", "x2"]), RelationSpec::new("E2", &["x2", "x3"])],
        &["x1"],
        SemiringKind::Counting,
        BTreeMap::new(),
    )
    .expect("valid query");
    let d = d as i64;
    let e1 = (1..=d).map(|i| vec![Value::Int(i), Value::Int(0)]).collect();
    let mut e2: Vec<Vec<Value>> = (1..=d).map(|j| vec![Value::Int(0), Value::Int(d + j)]).collect();
    e2.push(vec![Value::Int(-1), Value::Int(-2)]);
    let rel = |name: &str, attrs: &[&str], rows| {
        AnnotatedRelation::<Counting>::from_rows(name, attrs, rows, None)
            .expect("valid relation")
            .annotate_default()
    };
    let db = Database::new()
        .with(rel("E1", &["x1", "x2"], e1))
        .with(rel("E2", &["x2", "x3"], e2));
    (q, db)
}

/// Skewed instance of the six-relation fixture shape: attribute values are
/// Zipf-distributed with exponent `s`, relation sizes vary by a factor of
/// `rows / 8`.
pub fn q1_skewed<S: Semiring>(rows: usize, s: f64, seed: u64) -> Database<S> {
    let q = crate::fixtures::q1();
    let mut rng = rng(seed);
    let mut db = Database::new();
    for (i, e) in q.relations.iter().enumerate() {
        let n = if i % 2 == 0 { rows } else { (rows / 8).max(1) };
        let domain = (rows as u64 / 4).max(2);
        let cols: Vec<Vec<i64>> = e.attrs.iter().map(|_| zipf_values(&mut rng, n, domain, s)).collect();
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let tuples: Vec<Vec<Value>> = (0..n)
            .map(|r| cols.iter().map(|c| Value::Int(c[r])).collect::<Vec<Value>>())
            .filter(|t| seen.insert(t.clone()))
            .collect();
        let annotated = matches!(e.annotation, AnnotationSource::Column(_));
        db.insert(finish::<S>(&e.name, &e.attrs, tuples, annotated, &mut rng));
    }
    db
}

/// Uniform data for every relation of `query` at exactly `rows` rows (minus
/// duplicates), used by the CLI generator.
pub fn uniform_instance<S: Semiring>(query: &ConjunctiveQuery, rows: usize, domain: i64, seed: u64) -> Database<S> {
    let mut rng = rng(seed);
    let mut db = Database::new();
    for e in &query.relations {
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let tuples: Vec<Vec<Value>> = (0..rows)
            .map(|_| e.attrs.iter().map(|_| Value::Int(rng.random_range(0..domain.max(1)))).collect::<Vec<Value>>())
            .filter(|t| seen.insert(t.clone()))
            .collect();
        let annotated = matches!(e.annotation, AnnotationSource::Column(_));
        db.insert(finish::<S>(&e.name, &e.attrs, tuples, annotated, &mut rng));
    }
    db
}

/// Zipf-skewed variant of [`uniform_instance`].
pub fn zipf_instance<S: Semiring>(query: &ConjunctiveQuery, rows: usize, domain: u64, s: f64, seed: u64) -> Database<S> {
    let mut rng = rng(seed);
    let mut db = Database::new();
    for e in &query.relations {
        let cols: Vec<Vec<i64>> = e.attrs.iter().map(|_| zipf_values(&mut rng, rows, domain, s)).collect();
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let tuples: Vec<Vec<Value>> = (0..rows)
            .map(|r| cols.iter().map(|c| Value::Int(c[r])).collect::<Vec<Value>>())
            .filter(|t| seen.insert(t.clone()))
            .collect();
        let annotated = matches!(e.annotation, AnnotationSource::Column(_));
        db.insert(finish::<S>(&e.name, &e.attrs, tuples, annotated, &mut rng));
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::full_join_size;
    use crate::fixtures;
    use crate::hypergraph::{build_hypergraph, gyo_reduce};

    #[test]
    fn generated_queries_are_acyclic() {
        let mut r = rng(1);
        for _ in 0..200 {
            let q = random_acyclic_query(&mut r, &QueryShape::default());
            assert!((2..=7).contains(&q.n()));
            assert!(q.relations.iter().all(|e| (1..=4).contains(&e.attrs.len())));
            assert!(gyo_reduce(&build_hypergraph(&q)).is_acyclic());
        }
    }

    #[test]
    fn zipf_zero_is_uniform() {
        let mut r = rng(3);
        let v = zipf_values(&mut r, 20_000, 4, 0.0);
        for k in 1..=4 {
            let share = v.iter().filter(|&&x| x == k).count() as f64 / v.len() as f64;
            assert!((share - 0.25).abs() < 0.02, "{k}: {share}");
        }
        let skewed = zipf_values(&mut r, 20_000, 4, 2.0);
        assert!(skewed.iter().filter(|&&x| x == 1).count() > 10_000);
    }

    #[test]
    fn k_copy_fans_out_foreign_key_joins() {
        let q = fixtures::q5();
        let c = fixtures::q5_constraints();
        let db: Database<Counting> = pkfk_instance(&q, &c, 30, 30, 9);
        let r6 = db.get("R6").unwrap();
        let five = k_copy(r6, 5);
        assert_eq!(five.len(), 5 * r6.len());
        let two = make_query(
            vec![RelationSpec::new("R4", &["x4", "x5", "x6"]), RelationSpec::new("R6", &["x6", "x7"])],
            &[],
            SemiringKind::Counting,
            BTreeMap::new(),
        )
        .unwrap();
        let base = full_join_size(&two, &db, u64::MAX).unwrap();
        assert_eq!(base, db.get("R4").unwrap().len() as u64);
        let copied = db.clone().with(five);
        assert_eq!(full_join_size(&two, &copied, u64::MAX).unwrap(), 5 * base);
    }

    #[test]
    fn star_sizes() {
        let (q, db) = star_two_path(1000);
        assert_eq!(db.input_size(&q), 2001);
        assert_eq!(full_join_size(&q, &db, u64::MAX).unwrap(), 1_000_000);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let q = fixtures::q1();
        let a: Database<Counting> = random_instance(&q, 50, 5, 11);
        let b: Database<Counting> = random_instance(&q, 50, 5, 11);
        for e in &q.relations {
            assert!(a.get(&e.name).unwrap().same_as(b.get(&e.name).unwrap()));
        }
    }
}
