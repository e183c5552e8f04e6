//! Hypertree decompositions for cyclic queries: bag search, bag
//! materialization, and the hand-off of an acyclic bag query to the planner.
//!
//! Bags are unions of connected groups of relations. Every relation whose
//! attributes fit in a bag joins that bag, but only its first bag in tree
//! pre-order sees the true annotations; the others read a deduplicated copy
//! annotated with `one`, so no annotation is multiplied in twice.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::executor::run_plan;
use crate::hypergraph::{build_hypergraph, gyo_reduce, Hypergraph, JoinTree};
use crate::model::{make_query, AnnotationSource, ConjunctiveQuery, Database, RelationSpec, Semiring};
use crate::optimizer::constraints::join_keys;
use crate::optimizer::{SchemaConstraints, Stats};
use crate::planner::{Input, Instruction, Names, Phase, PlanIR, Step};

/// Default maximum number of relations generating one bag.
pub const DEFAULT_FAN: usize = 4;

/// Partitions explored before enumeration gives up.
const PARTITION_BUDGET: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub attrs: BTreeSet<String>,
    /// Relations whose attributes fit in the bag, in id order.
    pub relations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ghd {
    pub bags: Vec<Bag>,
    /// Tree over bag indices.
    pub tree: JoinTree,
    /// Estimated materialization size per bag; empty until ranked.
    pub width_estimate: Vec<f64>,
}

impl Ghd {
    /// Sorted bag attribute lists.
    pub fn canonical(&self) -> Vec<Vec<String>> {
        let mut c: Vec<Vec<String>> = self.bags.iter().map(|b| b.attrs.iter().cloned().collect()).collect();
        c.sort();
        c
    }

    /// Bag receiving relation `i`'s true annotations: the first bag in tree
    /// pre-order containing it.
    pub fn owner(&self, i: usize) -> Option<usize> {
        self.tree.pre_order().into_iter().find(|&b| self.bags[b].relations.contains(&i))
    }

    /// Coverage and per-attribute connectedness.
    pub fn is_valid_for(&self, h: &Hypergraph) -> bool {
        if self.tree.len() != self.bags.len() {
            return false;
        }
        let covered = h.edges.iter().all(|e| self.bags.iter().any(|b| e.is_subset(&b.attrs)));
        let connected = h.vertices.iter().all(|x| {
            let holders: Vec<usize> = (0..self.bags.len()).filter(|&b| self.bags[b].attrs.contains(x)).collect();
            // Connected iff exactly one holder has its parent outside the set.
            holders
                .iter()
                .filter(|&&b| self.tree.parent(b).is_none_or(|p| !self.bags[p].attrs.contains(x)))
                .count()
                == 1
        });
        covered && connected
    }

    pub fn width(&self) -> f64 {
        self.width_estimate.iter().copied().fold(0.0, f64::max)
    }

    /// Multi-line rendering: one bag per line, indented by depth.
    pub fn dump(&self, names: &[String]) -> String {
        let mut out = String::new();
        for b in self.tree.pre_order() {
            let rels: Vec<&str> = self.bags[b].relations.iter().map(|&i| names[i].as_str()).collect();
            let attrs: Vec<&str> = self.bags[b].attrs.iter().map(String::as_str).collect();
            out.push_str(&"  ".repeat(self.tree.depth(b)));
            out.push_str(&format!("B{} {{{}}} <- {}", b + 1, attrs.join(", "), rels.join(", ")));
            if let Some(w) = self.width_estimate.get(b) {
                out.push_str(&format!(" ~{w:.0}"));
            }
            out.push('\n');
        }
        out
    }
}

fn connected(h: &Hypergraph, group: &[usize]) -> bool {
    let mut seen = vec![group[0]];
    let mut frontier = vec![group[0]];
    while let Some(v) = frontier.pop() {
        for &u in group {
            if !seen.contains(&u) && !h.edges[u].is_disjoint(&h.edges[v]) {
                seen.push(u);
                frontier.push(u);
            }
        }
    }
    seen.len() == group.len()
}

fn ghd_from_groups(h: &Hypergraph, groups: &[Vec<usize>]) -> Option<Ghd> {
    let attrs: Vec<BTreeSet<String>> = groups
        .iter()
        .map(|g| g.iter().flat_map(|&i| h.edges[i].iter().cloned()).collect())
        .collect();
    let bag_h = Hypergraph::from_edges(attrs.clone());
    let tree = JoinTree::from_gyo(&gyo_reduce(&bag_h), attrs.len()).ok()?;
    let bags = attrs
        .into_iter()
        .map(|a| Bag {
            relations: (0..h.len()).filter(|&i| h.edges[i].is_subset(&a)).collect(),
            attrs: a,
        })
        .collect();
    Some(Ghd {
        bags,
        tree,
        width_estimate: Vec::new(),
    })
}

/// Edge-generated decompositions with at most [`DEFAULT_FAN`] relations per
/// bag, deduplicated by bag sets, capped at `limit`. The single-bag
/// decomposition is always first.
pub fn enumerate_ghds(h: &Hypergraph, limit: usize) -> Vec<Ghd> {
    enumerate_ghds_with_fan(h, limit, DEFAULT_FAN)
}

pub fn enumerate_ghds_with_fan(h: &Hypergraph, limit: usize, fan: usize) -> Vec<Ghd> {
    let n = h.len();
    let mut out: Vec<Ghd> = Vec::new();
    let mut seen: BTreeSet<Vec<Vec<String>>> = BTreeSet::new();
    if n == 0 || limit == 0 {
        return out;
    }
    let all: Vec<usize> = (0..n).collect();
    if let Some(g) = ghd_from_groups(h, &[all]) {
        seen.insert(g.canonical());
        out.push(g);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut explored = 0usize;
    partitions(h, 0, fan, &mut groups, &mut explored, &mut |groups| {
        if out.len() >= limit {
            return false;
        }
        if groups.iter().all(|g| connected(h, g)) {
            if let Some(g) = ghd_from_groups(h, groups) {
                if seen.insert(g.canonical()) {
                    out.push(g);
                }
            }
        }
        true
    });
    out
}

/// Visits set partitions of `0..n` into groups of at most `fan`; the visitor
/// returns false to stop.
fn partitions(
    h: &Hypergraph,
    i: usize,
    fan: usize,
    groups: &mut Vec<Vec<usize>>,
    explored: &mut usize,
    visit: &mut dyn FnMut(&[Vec<usize>]) -> bool,
) -> bool {
    if *explored >= PARTITION_BUDGET {
        return false;
    }
    if i == h.len() {
        *explored += 1;
        return visit(groups);
    }
    for g in 0..groups.len() {
        if groups[g].len() < fan {
            groups[g].push(i);
            let go = partitions(h, i + 1, fan, groups, explored, visit);
            groups[g].pop();
            if !go {
                return false;
            }
        }
    }
    groups.push(vec![i]);
    let go = partitions(h, i + 1, fan, groups, explored, visit);
    groups.pop();
    go
}

/// One relation inside a bag, for size estimation.
#[derive(Clone, Debug)]
pub struct BagMember {
    pub card: f64,
    pub attrs: BTreeSet<String>,
    pub keys: Vec<BTreeSet<String>>,
}

fn chain_estimate(order: &[&BagMember]) -> f64 {
    let Some(first) = order.first() else { return 0.0 };
    let mut est = first.card;
    let mut attrs = first.attrs.clone();
    let mut keys = first.keys.clone();
    for m in &order[1..] {
        let shared: BTreeSet<String> = attrs.intersection(&m.attrs).cloned().collect();
        let m_keyed = m.keys.iter().any(|k| k.is_subset(&shared));
        let acc_keyed = keys.iter().any(|k| k.is_subset(&shared));
        est = if m_keyed {
            est
        } else if acc_keyed {
            m.card.min(est * m.card)
        } else {
            est * m.card
        };
        keys = join_keys(&keys, &m.keys, &shared);
        attrs.extend(m.attrs.iter().cloned());
    }
    est
}

/// Upper bound on a bag's join size: a product, except that joining on a
/// side's key keeps the other side's size. Takes the best join order for up
/// to six members.
pub fn merge_key_covered(members: &[BagMember]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let refs: Vec<&BagMember> = members.iter().collect();
    if refs.len() > 6 {
        return chain_estimate(&refs);
    }
    let mut best = f64::INFINITY;
    permute(&mut refs.clone(), 0, &mut |order| best = best.min(chain_estimate(order)));
    best
}

fn permute<'a>(items: &mut Vec<&'a BagMember>, k: usize, f: &mut dyn FnMut(&[&'a BagMember])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, f);
        items.swap(k, i);
    }
}

fn members_of(query: &ConjunctiveQuery, bag: &Bag, stats: &Stats, constraints: &SchemaConstraints) -> Vec<BagMember> {
    bag.relations
        .iter()
        .map(|&i| {
            let e = &query.relations[i];
            BagMember {
                card: stats.table(&e.name).map_or(1000.0, |t| t.cardinality as f64),
                attrs: e.attrs.iter().cloned().collect(),
                keys: constraints.keys_of(&e.name),
            }
        })
        .collect()
}

/// Fills width estimates and orders by widest bag, then bag count, then bag
/// sets.
pub fn rank_ghds(ghds: &mut [Ghd], query: &ConjunctiveQuery, stats: &Stats, constraints: &SchemaConstraints) {
    for g in ghds.iter_mut() {
        g.width_estimate = g
            .bags
            .iter()
            .map(|b| merge_key_covered(&members_of(query, b, stats, constraints)))
            .collect();
    }
    ghds.sort_by(|a, b| {
        a.width()
            .total_cmp(&b.width())
            .then(a.bags.len().cmp(&b.bags.len()))
            .then_with(|| a.canonical().cmp(&b.canonical()))
    });
}

/// Steps that build each bag relation, and the acyclic query over them.
#[derive(Clone, Debug)]
pub struct BagPlan {
    pub query: ConjunctiveQuery,
    pub steps: Vec<Step>,
    /// The decomposition tree, over the bag query's relation ids.
    pub tree: JoinTree,
}

pub fn bag_plan(query: &ConjunctiveQuery, ghd: &Ghd) -> Result<BagPlan> {
    let h = build_hypergraph(query);
    if !ghd.is_valid_for(&h) {
        return Err(Error::InvalidGhd("coverage or connectedness violated".into()));
    }
    let mut names = Names::new(query.relations.iter().map(|r| r.name.clone()));
    let mut steps: Vec<Step> = Vec::new();
    let push = |steps: &mut Vec<Step>, instr: Instruction| steps.push(Step { instr, phase: Phase::Bag });
    // Selected inputs, computed once.
    let mut input: Vec<String> = Vec::with_capacity(query.n());
    for e in &query.relations {
        match query.selections.get(&e.name).filter(|p| !p.is_true()) {
            Some(p) => {
                let dst = names.fresh(&format!("{}_sel", e.name));
                push(
                    &mut steps,
                    Instruction::Select {
                        dst: dst.clone(),
                        src: e.name.clone(),
                        predicate: p.clone(),
                    },
                );
                input.push(dst);
            }
            None => input.push(e.name.clone()),
        }
    }
    let owner: Vec<usize> = (0..query.n())
        .map(|i| ghd.owner(i).ok_or_else(|| Error::InvalidGhd(format!("`{}` in no bag", query.relations[i].name))))
        .collect::<Result<_>>()?;
    let mut ones: BTreeMap<usize, String> = BTreeMap::new();
    let mut specs: Vec<RelationSpec> = Vec::with_capacity(ghd.bags.len());
    for (b, bag) in ghd.bags.iter().enumerate() {
        let mut ids: Vec<(usize, String)> = Vec::new();
        for &i in &bag.relations {
            if owner[i] == b {
                ids.push((i, input[i].clone()));
            } else {
                let id = match ones.get(&i) {
                    Some(id) => id.clone(),
                    None => {
                        let dst = names.fresh(&format!("{}_one", query.relations[i].name));
                        push(
                            &mut steps,
                            Instruction::Materialize {
                                dst: dst.clone(),
                                src: input[i].clone(),
                                one: true,
                            },
                        );
                        ones.insert(i, dst.clone());
                        dst
                    }
                };
                ids.push((i, id));
            }
        }
        let bag_name = match ids.as_slice() {
            [(i, id)] if owner[*i] == b => {
                names.reserve(id);
                id.clone()
            }
            _ => {
                let name = names.fresh(&format!("B{}", b + 1));
                // Connected join order: lowest id first, then the lowest id
                // sharing an attribute with what is joined so far.
                let mut order: Vec<(usize, String)> = Vec::new();
                let mut seen: BTreeSet<&String> = BTreeSet::new();
                let mut rest = ids.clone();
                while !rest.is_empty() {
                    let k = rest
                        .iter()
                        .position(|(i, _)| query.relations[*i].attrs.iter().any(|a| seen.contains(a)))
                        .unwrap_or(0);
                    let (i, id) = rest.remove(k);
                    seen.extend(query.relations[i].attrs.iter());
                    order.push((i, id));
                }
                if order.len() == 1 {
                    push(
                        &mut steps,
                        Instruction::Materialize {
                            dst: name.clone(),
                            src: order[0].1.clone(),
                            one: false,
                        },
                    );
                } else {
                    let mut acc = order[0].1.clone();
                    for (k, (_, id)) in order.iter().enumerate().skip(1) {
                        let dst = if k + 1 == order.len() {
                            name.clone()
                        } else {
                            names.fresh(&format!("{name}_m{k}"))
                        };
                        push(
                            &mut steps,
                            Instruction::Join {
                                dst: dst.clone(),
                                lhs: Input::plain(acc),
                                rhs: Input::plain(id.clone()),
                                keep: None,
                            },
                        );
                        acc = dst;
                    }
                }
                name
            }
        };
        let owned_column = bag
            .relations
            .iter()
            .any(|&i| owner[i] == b && query.relations[i].annotation != AnnotationSource::One);
        specs.push(RelationSpec {
            name: bag_name,
            attrs: query
                .order_attrs(&bag.attrs)
                .into_iter()
                .map(|a| {
                    let k = query.kind_of(&a);
                    (a, k)
                })
                .collect(),
            annotation: if owned_column {
                AnnotationSource::Column("__bag".into())
            } else {
                AnnotationSource::One
            },
            source: None,
        });
    }
    let output: Vec<&str> = query.output.iter().map(String::as_str).collect();
    let bag_query = make_query(specs, &output, query.semiring, BTreeMap::new())?;
    Ok(BagPlan {
        query: bag_query,
        steps,
        tree: ghd.tree.clone(),
    })
}

/// Evaluates every bag over `db`; returns the bag query, its instance and
/// the decomposition tree as a join tree.
pub fn materialize_bags<S: Semiring>(
    query: &ConjunctiveQuery,
    ghd: &Ghd,
    db: &Database<S>,
) -> Result<(ConjunctiveQuery, Database<S>, JoinTree)> {
    let bp = bag_plan(query, ghd)?;
    let mut out = Database::new();
    for e in &bp.query.relations {
        let plan = PlanIR {
            steps: bp.steps.clone(),
            result: e.name.clone(),
            ..Default::default()
        };
        let (rel, _) = run_plan(&plan, db)?;
        out.insert(rel.with_name(e.name.clone()));
    }
    Ok((bp.query, out, bp.tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::oracle;
    use crate::fixtures;
    use crate::model::{AnnotatedRelation, Counting, Value};
    use crate::planner::plan_with_tree;

    fn set(a: &[&str]) -> BTreeSet<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_triangles_include_the_three_bag_decomposition() {
        let h = build_hypergraph(&fixtures::two_triangles(&[]));
        let ghds = enumerate_ghds(&h, 1000);
        assert!(ghds.iter().all(|g| g.is_valid_for(&h)));
        let want = vec![
            vec!["x1".to_string(), "x2".into(), "x3".into()],
            vec!["x3".to_string(), "x4".into()],
            vec!["x4".to_string(), "x5".into(), "x6".into()],
        ];
        assert!(ghds.iter().any(|g| g.canonical() == want));
        assert_eq!(ghds[0].bags.len(), 1);
    }

    #[test]
    fn triangle_has_single_bag() {
        let h = build_hypergraph(&fixtures::triangle());
        let ghds = enumerate_ghds(&h, 100);
        assert_eq!(ghds[0].bags[0].attrs, set(&["x1", "x2", "x3"]));
        assert!(ghds.iter().all(|g| g.bags.len() < 3));
    }

    #[test]
    fn acyclic_query_gets_relation_per_bag() {
        let q = fixtures::q1();
        let h = build_hypergraph(&q);
        let g = enumerate_ghds(&h, 10_000)
            .into_iter()
            .find(|g| g.bags.len() == q.n())
            .unwrap();
        let bp = bag_plan(&q, &g).unwrap();
        assert_eq!(bp.query.n(), 6);
        // R3's attributes sit inside R1's bag too; one of the two gets a
        // ONE copy.
        assert_eq!(bp.steps.iter().filter(|s| matches!(s.instr, Instruction::Materialize { one: true, .. })).count(), 1);
        let db = fixtures::appendix_db::<crate::model::SumProduct>();
        let (bq, bdb, tree) = materialize_bags(&q, &g, &db).unwrap();
        let (got, _) = run_plan(&plan_with_tree(&bq, &tree).unwrap(), &bdb).unwrap();
        assert!(got.same_as(&fixtures::appendix_result()));
    }

    #[test]
    fn figure_decomposition_yields_line_query() {
        let q = fixtures::two_triangles(&["x1"]);
        let h = build_hypergraph(&q);
        let g = enumerate_ghds(&h, 1000)
            .into_iter()
            .find(|g| g.bags.iter().any(|b| b.attrs == set(&["x3", "x4"])) && g.bags.len() == 3)
            .unwrap();
        let bp = bag_plan(&q, &g).unwrap();
        assert_eq!(bp.query.n(), 3);
        assert!(gyo_reduce(&build_hypergraph(&bp.query)).is_acyclic());
        let attrs: Vec<Vec<String>> = bp.query.relations.iter().map(|r| r.attrs.clone()).collect();
        assert!(attrs.contains(&vec!["x3".to_string(), "x4".into()]), "{attrs:?}");
        assert_eq!(bp.query.relations.iter().filter(|r| r.name == "R4").count(), 1);
    }

    #[test]
    fn key_merge_estimate() {
        let m = |card: f64, attrs: &[&str], key: Option<&str>| BagMember {
            card,
            attrs: set(attrs),
            keys: key.map(|k| vec![set(&[k])]).unwrap_or_default(),
        };
        assert_eq!(merge_key_covered(&[m(100.0, &["x1", "x2"], None), m(50.0, &["x2", "x3"], Some("x2"))]), 100.0);
        assert_eq!(merge_key_covered(&[m(100.0, &["x1", "x2"], None), m(50.0, &["x2", "x3"], None)]), 5000.0);
        let chain = [
            m(100.0, &["x1", "x2"], None),
            m(50.0, &["x2", "x3"], Some("x2")),
            m(20.0, &["x3", "x4"], Some("x3")),
        ];
        assert_eq!(merge_key_covered(&chain), 100.0);
    }

    #[test]
    fn triangle_bags_match_oracle() {
        let q = fixtures::triangle();
        let rel = |name: &str, attrs: &[&str], rows: &[(i64, i64, u64)]| {
            AnnotatedRelation::<Counting>::from_rows(
                name,
                attrs,
                rows.iter().map(|&(a, b, _)| vec![Value::Int(a), Value::Int(b)]).collect(),
                Some(rows.iter().map(|r| r.2).collect()),
            )
            .unwrap()
        };
        let db = Database::new()
            .with(rel("R", &["x1", "x2"], &[(1, 2, 2), (1, 3, 1), (2, 3, 5)]))
            .with(rel("S", &["x2", "x3"], &[(2, 3, 3), (3, 1, 1), (3, 4, 7)]))
            .with(rel("T", &["x3", "x1"], &[(3, 1, 4), (1, 1, 1), (1, 2, 2)]));
        let want = oracle(&q, &db).unwrap();
        let h = build_hypergraph(&q);
        for g in enumerate_ghds(&h, 100) {
            let (bq, bdb, tree) = materialize_bags(&q, &g, &db).unwrap();
            let plan = plan_with_tree(&bq, &tree).unwrap();
            let (got, _) = run_plan(&plan, &bdb).unwrap();
            assert!(got.same_as(&want), "{}", g.dump(&h.names));
        }
    }
}
