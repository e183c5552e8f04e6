use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::constraints::{join_keys, minimal_keys, KeySet, SchemaConstraints};
use super::cost::estimate_ids;
use super::stats::{Stats, TableStats};
use crate::error::Result;
use crate::hypergraph::{build_hypergraph, gyo_reduce};
use crate::model::{make_query, AnnotationSource, ConjunctiveQuery, Predicate, RelationSpec};
use crate::planner::{Input, Instruction, Names, Phase, PlanIR, Projection, Step};

/// Result of breaking PK-FK cycles by renaming attribute occurrences.
#[derive(Clone, Debug)]
pub struct CycleRewrite {
    /// Acyclic query over the renamed attributes; its output adds each
    /// renamed pair.
    pub query: ConjunctiveQuery,
    /// `(relation, from, to)` column renames.
    pub renames: Vec<(String, String, String)>,
    /// Equalities restoring the broken joins, applied to the result.
    pub predicate: Predicate,
}

impl CycleRewrite {
    pub fn renamed_map(&self) -> BTreeMap<String, Vec<(String, String)>> {
        let mut m: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for (r, f, t) in &self.renames {
            m.entry(r.clone()).or_default().push((f.clone(), t.clone()));
        }
        m
    }
}

fn specs_of(query: &ConjunctiveQuery) -> Vec<RelationSpec> {
    query
        .relations
        .iter()
        .map(|e| RelationSpec {
            name: e.name.clone(),
            attrs: e.attrs.iter().map(|a| (a.clone(), query.kind_of(a))).collect(),
            annotation: e.annotation.clone(),
            source: e.source.clone(),
        })
        .collect()
}

/// Every residual relation holding `attr` either keys on it or references a
/// key through it.
fn key_joined(query: &ConjunctiveQuery, c: &SchemaConstraints, residual: &[usize], attr: &str) -> bool {
    let holders: Vec<&str> = residual
        .iter()
        .map(|&i| &query.relations[i])
        .filter(|e| e.attrs.iter().any(|a| a == attr))
        .map(|e| e.name.as_str())
        .collect();
    holders.len() >= 2 && holders.iter().all(|r| c.in_key(r, attr) || c.has_fk_on(r, attr))
}

/// Renames one occurrence of a cycle attribute at a time (`x` to `x'`) until
/// the query is acyclic. Fires only when every attribute shared inside the
/// cyclic core joins through a declared key.
pub fn rule_cycle_elimination(query: &ConjunctiveQuery, constraints: &SchemaConstraints) -> Option<CycleRewrite> {
    let mut q = query.clone();
    let mut renames = Vec::new();
    let mut predicate = Predicate::always();
    for _ in 0..query.attributes.len() {
        let g = gyo_reduce(&build_hypergraph(&q));
        if g.is_acyclic() {
            break;
        }
        let mut shared: Vec<&str> = Vec::new();
        for a in &q.attributes {
            let n = g.residual.iter().filter(|&&i| q.relations[i].attrs.contains(&a.name)).count();
            if n >= 2 {
                shared.push(&a.name);
            }
        }
        // Renamed attributes occur once, so every shared name is original.
        if shared.is_empty() || !shared.iter().all(|a| key_joined(&q, constraints, &g.residual, a)) {
            return None;
        }
        let occurrences = |a: &str| q.relations.iter().filter(|e| e.attrs.iter().any(|x| x == a)).count();
        let attr = shared
            .iter()
            .copied()
            .max_by_key(|a| (occurrences(a), std::cmp::Reverse(q.rank(a))))
            .expect("shared attributes exist")
            .to_string();
        let rel = g
            .residual
            .iter()
            .copied()
            .find(|&i| q.relations[i].attrs.contains(&attr))
            .expect("a residual relation holds the attribute");
        let mut to = format!("{attr}'");
        while q.attributes.iter().any(|a| a.name == to) {
            to.push('\'');
        }
        let mut specs = specs_of(&q);
        for (a, _) in &mut specs[rel].attrs {
            if *a == attr {
                *a = to.clone();
            }
        }
        let rel_name = q.relations[rel].name.clone();
        let mut selections = q.selections.clone();
        if let Some(p) = selections.get_mut(&rel_name) {
            *p = p.rename(|a| if a == attr { to.clone() } else { a.to_string() });
        }
        let mut output: Vec<&str> = q.output.iter().map(String::as_str).collect();
        for a in [attr.as_str(), to.as_str()] {
            if !output.contains(&a) {
                output.push(a);
            }
        }
        q = make_query(specs, &output, q.semiring, selections).ok()?;
        predicate = predicate.and(Predicate::attr_eq(&attr, &to));
        renames.push((rel_name, attr.clone(), to));
    }
    if renames.is_empty() || !gyo_reduce(&build_hypergraph(&q)).is_acyclic() {
        return None;
    }
    Some(CycleRewrite {
        query: q,
        renames,
        predicate,
    })
}

/// Base columns after renames.
fn renamed_attr(plan: &PlanIR, rel: &str, attr: &str) -> String {
    plan.renamed
        .get(rel)
        .and_then(|r| r.iter().find(|(f, _)| f == attr))
        .map_or_else(|| attr.to_string(), |(_, t)| t.clone())
}

fn base_schemas<'a>(query: &'a ConjunctiveQuery, plan: &'a PlanIR) -> impl Fn(&str) -> Option<Vec<String>> + 'a {
    let q = query.clone();
    let plan = plan.clone();
    move |id: &str| {
        q.index_of(id)
            .map(|i| q.relations[i].attrs.iter().map(|a| renamed_attr(&plan, id, a)).collect())
    }
}

fn base_keys(query: &ConjunctiveQuery, plan: &PlanIR, c: &SchemaConstraints, id: &str) -> KeySet {
    let Some(i) = query.index_of(id) else { return Vec::new() };
    let attrs: BTreeSet<String> = query.relations[i].attrs.iter().map(|a| renamed_attr(plan, id, a)).collect();
    c.keys_of(id)
        .into_iter()
        .map(|k| k.iter().map(|a| renamed_attr(plan, id, a)).collect::<BTreeSet<String>>())
        .filter(|k| k.is_subset(&attrs))
        .collect()
}

/// Turns grouping projections into plain column selections when the kept
/// attributes contain a key of the input: every group is then one tuple.
pub fn rule_aggregation_elimination(
    plan: &PlanIR,
    query: &ConjunctiveQuery,
    constraints: &SchemaConstraints,
) -> Result<PlanIR> {
    let mut out = plan.clone();
    if constraints.is_empty() {
        return Ok(out);
    }
    let schemas = out.schemas(&base_schemas(query, plan))?;
    let mut keys: HashMap<String, KeySet> = HashMap::new();
    let get = |keys: &HashMap<String, KeySet>, id: &str| -> KeySet {
        keys.get(id).cloned().unwrap_or_else(|| base_keys(query, plan, constraints, id))
    };
    let visit = |p: &mut Projection, src: KeySet| -> KeySet {
        let keep: BTreeSet<String> = p.attrs.iter().cloned().collect();
        let mut kept: KeySet = src.iter().filter(|k| k.is_subset(&keep)).cloned().collect();
        if p.aggregate && !kept.is_empty() {
            p.aggregate = false;
        }
        if p.aggregate {
            kept.push(keep);
        }
        minimal_keys(kept, 8)
    };
    let attrs_of = |schemas: &HashMap<String, Vec<String>>, id: &str| -> BTreeSet<String> {
        schemas
            .get(id)
            .cloned()
            .or_else(|| base_schemas(query, plan)(id))
            .unwrap_or_default()
            .into_iter()
            .collect()
    };
    for s in &mut out.steps {
        let k = match &mut s.instr {
            Instruction::Join { lhs, rhs, keep, .. } => {
                let side = |i: &mut Input| -> (KeySet, BTreeSet<String>) {
                    let base = get(&keys, &i.rel);
                    match &mut i.project {
                        Some(p) => {
                            let a = p.attrs.iter().cloned().collect();
                            (visit(p, base), a)
                        }
                        None => (base, attrs_of(&schemas, &i.rel)),
                    }
                };
                let (lk, la) = side(lhs);
                let (rk, ra) = side(rhs);
                let shared: BTreeSet<String> = la.intersection(&ra).cloned().collect();
                let jk = join_keys(&lk, &rk, &shared);
                match keep {
                    Some(p) => visit(p, jk),
                    None => jk,
                }
            }
            Instruction::Semijoin { lhs, .. } => get(&keys, lhs),
            Instruction::Select { src, .. } => get(&keys, src),
            Instruction::Project { src, keep, .. } => {
                let base = get(&keys, src);
                visit(keep, base)
            }
            Instruction::Materialize { src, one, .. } => {
                let mut k = get(&keys, src);
                if *one {
                    k.push(attrs_of(&schemas, src));
                }
                minimal_keys(k, 8)
            }
        };
        keys.insert(s.instr.dst().to_string(), k);
    }
    Ok(out)
}

/// Base relation every tuple of `id` traces back to through filters and
/// projections, with whether the id still holds all of that base's tuples.
fn lineage(plan: &PlanIR, upto: usize, id: &str) -> Option<(String, bool)> {
    let mut cur = id.to_string();
    let mut complete = true;
    loop {
        let Some(step) = plan.steps[..upto].iter().rev().find(|s| s.instr.dst() == cur) else {
            return Some((cur, complete));
        };
        match &step.instr {
            Instruction::Semijoin { lhs, .. } => {
                complete = false;
                cur = lhs.clone();
            }
            Instruction::Select { src, .. } => {
                complete = false;
                cur = src.clone();
            }
            Instruction::Project { src, .. } | Instruction::Materialize { src, .. } => cur = src.clone(),
            Instruction::Join { .. } => return None,
        }
    }
}

/// Base relations whose `attr` values bound those of `id` (joins keep only
/// values present on both sides).
fn value_origins(plan: &PlanIR, upto: usize, id: &str, attr: &str, schemas: &HashMap<String, Vec<String>>) -> BTreeSet<String> {
    let Some(step) = plan.steps[..upto].iter().rev().find(|s| s.instr.dst() == id) else {
        return BTreeSet::from([id.to_string()]);
    };
    let has = |x: &str| schemas.get(x).is_none_or(|a| a.iter().any(|c| c == attr));
    match &step.instr {
        Instruction::Join { lhs, rhs, .. } => {
            let mut out = BTreeSet::new();
            for side in [&lhs.rel, &rhs.rel] {
                if has(side) {
                    out.extend(value_origins(plan, upto, side, attr, schemas));
                }
            }
            out
        }
        Instruction::Semijoin { lhs, rhs, .. } => {
            let mut out = value_origins(plan, upto, lhs, attr, schemas);
            if has(rhs) {
                out.extend(value_origins(plan, upto, rhs, attr, schemas));
            }
            out
        }
        Instruction::Project { src, .. } | Instruction::Select { src, .. } | Instruction::Materialize { src, .. } => {
            value_origins(plan, upto, src, attr, schemas)
        }
    }
}

/// Drops semijoins a foreign key makes redundant.
///
/// `L ⋉ R` on a single attribute goes when `L`'s values trace to a base with
/// a foreign key into `R`'s base and `R` still holds every base tuple. The
/// reverse direction (key side on the left) goes when its result only feeds a
/// join with the same `R`, which discards the same tuples.
pub fn rule_semijoin_elimination(
    plan: &PlanIR,
    query: &ConjunctiveQuery,
    constraints: &SchemaConstraints,
) -> Result<PlanIR> {
    let mut out = plan.clone();
    if constraints.foreign_keys.is_empty() {
        return Ok(out);
    }
    'scan: loop {
        let base = base_schemas(query, plan);
        let mut schemas = out.schemas(&base)?;
        for e in &query.relations {
            if let Some(a) = base(&e.name) {
                schemas.entry(e.name.clone()).or_insert(a);
            }
        }
        for idx in 0..out.steps.len() {
            let Instruction::Semijoin { dst, lhs, rhs } = &out.steps[idx].instr else { continue };
            let (Some(la), Some(ra)) = (schemas.get(lhs), schemas.get(rhs)) else { continue };
            let shared: Vec<&String> = la.iter().filter(|a| ra.contains(a)).collect();
            let [attr] = shared.as_slice() else { continue };
            let fk_between = |child_origins: &BTreeSet<String>, parent: &str| {
                constraints.foreign_keys.iter().any(|f| {
                    f.parent == parent
                        && child_origins.contains(&f.child)
                        && renamed_attr(&out, &f.child, &f.child_attr) == **attr
                        && renamed_attr(&out, &f.parent, &f.parent_attr) == **attr
                })
            };
            let forward = match lineage(&out, idx, rhs) {
                Some((base, true)) => fk_between(&value_origins(&out, idx, lhs, attr, &schemas), &base),
                _ => false,
            };
            let backward = !forward
                && match lineage(&out, idx, lhs) {
                    Some((base, true)) => {
                        let readers: Vec<&Step> =
                            out.steps[idx + 1..].iter().filter(|s| s.instr.reads().contains(&dst.as_str())).collect();
                        let feeds_join_with_rhs = matches!(readers.as_slice(), [s] if matches!(
                            &s.instr,
                            Instruction::Join { lhs: a, rhs: b, .. }
                                if (a.rel == *dst && b.rel == *rhs) || (b.rel == *dst && a.rel == *rhs)
                        ));
                        feeds_join_with_rhs
                            && out.result != *dst
                            && fk_between(&value_origins(&out, idx, rhs, attr, &schemas), &base)
                    }
                    _ => false,
                };
            if forward || backward {
                let to = lhs.clone();
                out.remove_step(idx, &to);
                continue 'scan;
            }
        }
        break;
    }
    Ok(out)
}

/// Relations whose annotations can be dropped: default-one annotations under
/// an idempotent ⊕, where duplicates and multiplicities are invisible.
pub fn rule_annotation_pruning(query: &ConjunctiveQuery) -> BTreeSet<String> {
    if !query.semiring.plus_idempotent() {
        return BTreeSet::new();
    }
    query
        .relations
        .iter()
        .filter(|e| e.annotation == AnnotationSource::One)
        .map(|e| e.name.clone())
        .collect()
}

/// Small relations folded into one before planning.
#[derive(Clone, Debug)]
pub struct Fusion {
    pub query: ConjunctiveQuery,
    /// Steps building the fused relations (selections included).
    pub steps: Vec<Step>,
    /// Fused relation name and its members.
    pub groups: Vec<(String, Vec<String>)>,
    /// Stats extended with estimates for the fused relations.
    pub stats: Stats,
}

/// Fuses two or more relations of at most `threshold` rows that share a
/// neighbor larger than `threshold` (join, or product when disjoint). Only
/// applied when the fused query stays acyclic.
pub fn rule_dimension_fusion(
    query: &ConjunctiveQuery,
    stats: &Stats,
    constraints: &SchemaConstraints,
    threshold: u64,
) -> Result<Option<Fusion>> {
    let card = |name: &str| stats.table(name).map_or(u64::MAX, |t| t.cardinality);
    let mut q = query.clone();
    let mut steps: Vec<Step> = Vec::new();
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    let mut names = Names::new(query.relations.iter().map(|r| r.name.clone()));
    let mut current: BTreeMap<String, String> = BTreeMap::new();
    let mut stats_out = stats.clone();
    loop {
        let mut applied = false;
        for big in 0..q.n() {
            if card(&q.relations[big].name) <= threshold || stats_out.table(&q.relations[big].name).is_none() {
                continue;
            }
            let big_attrs = q.attr_set(big);
            let small: Vec<usize> = (0..q.n())
                .filter(|&i| i != big && card(&q.relations[i].name) <= threshold)
                .filter(|&i| q.attr_set(i).iter().any(|a| big_attrs.contains(a)))
                .filter(|&i| stats_out.table(&q.relations[i].name).is_some())
                .collect();
            if small.len() < 2 {
                continue;
            }
            let fused_name = names.fresh("F1");
            let mut attrs: Vec<String> = Vec::new();
            let mut fsteps: Vec<Step> = Vec::new();
            let mut acc: Option<String> = None;
            for (k, &i) in small.iter().enumerate() {
                let e = &q.relations[i];
                let mut id = current.get(&e.name).cloned().unwrap_or_else(|| e.name.clone());
                if let Some(p) = q.selections.get(&e.name).filter(|p| !p.is_true()) {
                    let dst = names.fresh(&format!("{}_sel", e.name));
                    fsteps.push(Step {
                        instr: Instruction::Select {
                            dst: dst.clone(),
                            src: id.clone(),
                            predicate: p.clone(),
                        },
                        phase: Phase::Fusion,
                    });
                    id = dst;
                }
                for a in &e.attrs {
                    if !attrs.contains(a) {
                        attrs.push(a.clone());
                    }
                }
                acc = Some(match acc {
                    None => id,
                    Some(prev) => {
                        let dst = if k + 1 == small.len() {
                            fused_name.clone()
                        } else {
                            names.fresh(&format!("{fused_name}_m{k}"))
                        };
                        fsteps.push(Step {
                            instr: Instruction::Join {
                                dst: dst.clone(),
                                lhs: Input::plain(prev),
                                rhs: Input::plain(id),
                                keep: None,
                            },
                            phase: Phase::Fusion,
                        });
                        dst
                    }
                });
            }
            let members: Vec<String> = small.iter().map(|&i| q.relations[i].name.clone()).collect();
            let mut specs = specs_of(&q);
            let annotation = if small.iter().all(|&i| q.relations[i].annotation == AnnotationSource::One) {
                AnnotationSource::One
            } else {
                AnnotationSource::Column("__fused".into())
            };
            let fused = RelationSpec {
                name: fused_name.clone(),
                attrs: q.order_attrs(&attrs).into_iter().map(|a| {
                    let k = q.kind_of(&a);
                    (a, k)
                }).collect(),
                annotation,
                source: None,
            };
            let first = small[0];
            specs[first] = fused;
            let specs: Vec<RelationSpec> = specs
                .into_iter()
                .enumerate()
                .filter(|(i, _)| *i == first || !small.contains(i))
                .map(|(_, s)| s)
                .collect();
            let output: Vec<&str> = q.output.iter().map(String::as_str).collect();
            let mut selections = q.selections.clone();
            for m in &members {
                selections.remove(m);
            }
            let candidate = make_query(specs, &output, q.semiring, selections)?;
            if !gyo_reduce(&build_hypergraph(&candidate)).is_acyclic() {
                continue;
            }
            let ids = estimate_ids(&fsteps, query, &stats_out, constraints, &BTreeMap::new())?;
            let est = ids.get(&fused_name).or_else(|| ids.get(&members[0]));
            let table = TableStats {
                cardinality: est.map_or(1, |e| e.card.ceil() as u64),
                distinct: est
                    .map(|e| e.ndv.iter().map(|(a, v)| (a.clone(), v.ceil() as u64)).collect())
                    .unwrap_or_default(),
                quantiles: BTreeMap::new(),
            };
            stats_out.tables.insert(fused_name.clone(), table);
            for m in &members {
                current.insert(m.clone(), fused_name.clone());
            }
            steps.extend(fsteps);
            groups.push((fused_name, members));
            q = candidate;
            applied = true;
            break;
        }
        if !applied {
            break;
        }
    }
    if groups.is_empty() {
        return Ok(None);
    }
    Ok(Some(Fusion {
        query: q,
        steps,
        groups,
        stats: stats_out,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::optimizer::ForeignKey;
    use crate::planner::{count_ops, plan_with_tree};

    #[test]
    fn q5_breaks_at_r3_x4() {
        let rw = rule_cycle_elimination(&fixtures::q5(), &fixtures::q5_constraints()).unwrap();
        assert_eq!(rw.renames, vec![("R3".to_string(), "x4".to_string(), "x4'".to_string())]);
        assert_eq!(rw.predicate.to_string(), "x4 = x4'");
        assert!(gyo_reduce(&build_hypergraph(&rw.query)).is_acyclic());
        assert_eq!(rw.query.output, ["x4'", "x4", "x5"]);
    }

    #[test]
    fn cycle_rule_needs_keys() {
        assert!(rule_cycle_elimination(&fixtures::triangle(), &SchemaConstraints::default()).is_none());
        assert!(rule_cycle_elimination(&fixtures::q5(), &SchemaConstraints::default()).is_none());
        assert!(rule_cycle_elimination(&fixtures::q1(), &fixtures::q5_constraints()).is_none());
    }

    #[test]
    fn key_projection_loses_its_aggregation() {
        let q = fixtures::q1();
        let plan = plan_with_tree(&q, &fixtures::t1()).unwrap();
        let c = SchemaConstraints::default().with_pk("R2", &["x2"]);
        let rewritten = rule_aggregation_elimination(&plan, &q, &c).unwrap();
        assert_eq!(rewritten.steps[0].instr.to_string(), "R1_1 <- JOIN(R1, COLUMNS(R2, [x2]))");
        assert_eq!(rewritten.steps[1..], plan.steps[1..]);
        assert_eq!(rule_aggregation_elimination(&plan, &q, &SchemaConstraints::default()).unwrap(), plan);
    }

    #[test]
    fn r5_r6_semijoins_are_dropped() {
        let q = fixtures::q1();
        let plan = plan_with_tree(&q, &fixtures::t1()).unwrap();
        let c = SchemaConstraints::default()
            .with_pk("R6", &["x7"])
            .with_fk(ForeignKey::new("R5", "x7", "R6", "x7"));
        let rewritten = rule_semijoin_elimination(&plan, &q, &c).unwrap();
        assert_eq!(count_ops(&rewritten).semijoins, 1);
        assert!(rewritten.text().contains("R5_1 <- SEMIJOIN(R5, R1_3)"));
        assert!(rewritten.text().contains("PROJECT(JOIN(R5_1, R6), [x4, x8])"));
        assert_eq!(rule_semijoin_elimination(&plan, &q, &SchemaConstraints::default()).unwrap(), plan);
    }

    #[test]
    fn pruning_only_under_idempotent_plus() {
        let mut q = fixtures::q1();
        assert!(rule_annotation_pruning(&q).is_empty());
        q.semiring = crate::model::SemiringKind::MaxPlus;
        let pruned = rule_annotation_pruning(&q);
        assert_eq!(pruned, BTreeSet::from(["R2", "R4", "R5", "R6"].map(String::from)));
    }

    #[test]
    fn fuses_small_neighbours_of_a_large_relation() {
        let q = make_query(
            vec![
                RelationSpec::new("R1", &["x1"]),
                RelationSpec::new("R2", &["x1", "x2"]),
                RelationSpec::new("R3", &["x2"]),
            ],
            &["x1"],
            crate::model::SemiringKind::Counting,
            BTreeMap::new(),
        )
        .unwrap();
        let mut stats = Stats::uniform(&q, 10);
        stats.tables.get_mut("R2").unwrap().cardinality = 100_000;
        let f = rule_dimension_fusion(&q, &stats, &SchemaConstraints::default(), 1000).unwrap().unwrap();
        assert_eq!(f.groups, vec![("F1".to_string(), vec!["R1".to_string(), "R3".to_string()])]);
        assert_eq!(f.query.n(), 2);
        assert_eq!(f.steps.len(), 1);
        assert_eq!(f.steps[0].instr.to_string(), "F1 <- JOIN(R1, R3)");
        let all_large = Stats::uniform(&q, 5000);
        assert!(rule_dimension_fusion(&q, &all_large, &SchemaConstraints::default(), 1000).unwrap().is_none());
    }
}
