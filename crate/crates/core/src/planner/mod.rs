//! Plan generation: the two-round reduction over a join tree, the classic
//! semijoin-sweep baseline, and a naive binary-join plan.

mod ir;

use std::collections::BTreeSet;

pub use ir::{count_ops, Input, Instruction, Names, OpCounts, Phase, PlanIR, Projection, Step};

use crate::error::{Error, Result};
use crate::hypergraph::{build_hypergraph, JoinTree, QueryClass};
use crate::model::ConjunctiveQuery;
use crate::optimizer::{self, OptimizerConfig, SchemaConstraints, Stats};

/// A live join-tree node during planning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    /// Base relation the node started as; versions are named after it.
    pub label: String,
    /// Plan id currently holding the node's relation.
    pub current: String,
    pub attrs: BTreeSet<String>,
    pub parent: Option<usize>,
    pub removed: bool,
    pub dangling_free: bool,
}

/// The join tree as it shrinks during planning.
#[derive(Clone, Debug)]
pub struct TreeState {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    pub output: BTreeSet<String>,
    universe: Vec<String>,
    names: Names,
}

impl TreeState {
    fn new(query: &ConjunctiveQuery, tree: &JoinTree, current: Vec<String>, names: Names) -> Self {
        let nodes = query
            .relations
            .iter()
            .zip(current)
            .enumerate()
            .map(|(i, (r, cur))| TreeNode {
                label: r.name.clone(),
                current: cur,
                attrs: r.attrs.iter().cloned().collect(),
                parent: tree.parent(i),
                removed: false,
                dangling_free: false,
            })
            .collect();
        Self {
            nodes,
            root: tree.root(),
            output: query.output.iter().cloned().collect(),
            universe: query.attributes.iter().map(|a| a.name.clone()).collect(),
            names,
        }
    }

    pub fn live(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].removed).collect()
    }

    /// Live children in id order.
    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&c| !self.nodes[c].removed && self.nodes[c].parent == Some(v))
            .collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n = self.children(v);
        if let Some(p) = self.nodes[v].parent {
            n.push(p);
        }
        n
    }

    pub fn depth(&self, v: usize) -> usize {
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.nodes[cur].parent {
            d += 1;
            cur = p;
        }
        d
    }

    /// Attributes of all live nodes except those in `skip`.
    fn attrs_except(&self, skip: &[usize]) -> BTreeSet<String> {
        self.live()
            .into_iter()
            .filter(|u| !skip.contains(u))
            .flat_map(|u| self.nodes[u].attrs.iter().cloned())
            .collect()
    }

    /// Attributes in query-universe order.
    pub fn ordered(&self, set: &BTreeSet<String>) -> Vec<String> {
        self.universe.iter().filter(|a| set.contains(*a)).cloned().collect()
    }

    /// `(label, current id, attributes)` of each live node.
    pub fn reduced(&self) -> Vec<(String, String, Vec<String>)> {
        self.live()
            .into_iter()
            .map(|i| {
                let n = &self.nodes[i];
                (n.label.clone(), n.current.clone(), self.ordered(&n.attrs))
            })
            .collect()
    }

    /// `j` is reducible for `i` when every other neighbor of `i` shares only
    /// output attributes with it.
    pub fn is_reducible(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).contains(&j)
            && self.neighbors(i).into_iter().filter(|&k| k != j).all(|k| {
                self.nodes[k]
                    .attrs
                    .intersection(&self.nodes[i].attrs)
                    .all(|x| self.output.contains(x))
            })
    }

    /// First (dangling-free node, reducible neighbor) pair in id order.
    pub fn find_reducible_pair(&self) -> Option<(usize, usize)> {
        self.live()
            .into_iter()
            .filter(|&i| self.nodes[i].dangling_free)
            .find_map(|i| self.neighbors(i).into_iter().find(|&j| self.is_reducible(i, j)).map(|j| (i, j)))
    }

    fn deepest_leaf(&self, v: usize) -> usize {
        let cs = self.children(v);
        if cs.is_empty() {
            self.depth(v)
        } else {
            cs.into_iter().map(|c| self.deepest_leaf(c)).max().unwrap_or(0)
        }
    }

    fn result_id(&self) -> String {
        let live = self.live();
        self.nodes[live[0]].current.clone()
    }
}

fn check_tree(query: &ConjunctiveQuery, tree: &JoinTree) -> Result<()> {
    if tree.len() != query.n() {
        return Err(Error::InvalidTree(format!(
            "tree has {} nodes, query has {} relations",
            tree.len(),
            query.n()
        )));
    }
    if !tree.is_join_tree_for(&build_hypergraph(query)) {
        return Err(Error::InvalidTree("connectedness property violated".into()));
    }
    Ok(())
}

fn step(instr: Instruction, phase: Phase) -> Step {
    Step { instr, phase }
}

/// Emits pushed-down selections; returns the current id of each relation.
fn selection_steps(query: &ConjunctiveQuery, names: &mut Names, steps: &mut Vec<Step>) -> Vec<String> {
    query
        .relations
        .iter()
        .map(|r| match query.selections.get(&r.name) {
            Some(p) if !p.is_true() => {
                let dst = names.version(&r.name);
                steps.push(step(
                    Instruction::Select {
                        dst: dst.clone(),
                        src: r.name.clone(),
                        predicate: p.clone(),
                    },
                    Phase::Select,
                ));
                dst
            }
            _ => r.name.clone(),
        })
        .collect()
}

/// First round: a post-order pass that folds removable leaves into their
/// parents and semijoin-reduces the rest, leaving a dangling-free root.
///
/// The leaf test runs against the shrinking tree, so a node whose children
/// were all folded away is itself treated as a leaf.
pub fn plan_first_round(query: &ConjunctiveQuery, tree: &JoinTree) -> Result<(Vec<Step>, TreeState)> {
    check_tree(query, tree)?;
    let mut names = Names::new(query.relations.iter().map(|r| r.name.clone()));
    let mut steps = Vec::new();
    let current = selection_steps(query, &mut names, &mut steps);
    let mut st = TreeState::new(query, tree, current, names);
    let root = tree.root();
    for v in tree.post_order() {
        if v == root {
            continue;
        }
        let p = st.nodes[v].parent.expect("non-root has a parent");
        let is_leaf = st.children(v).is_empty();
        let out_v_in_parent = st.nodes[v]
            .attrs
            .iter()
            .filter(|x| st.output.contains(*x))
            .all(|x| st.nodes[p].attrs.contains(x));
        if is_leaf && out_v_in_parent {
            let shared: BTreeSet<String> = st.nodes[v].attrs.intersection(&st.nodes[p].attrs).cloned().collect();
            let rhs = if shared == st.nodes[v].attrs {
                Input::plain(st.nodes[v].current.clone())
            } else {
                Input::projected(st.nodes[v].current.clone(), st.ordered(&shared))
            };
            let dst = st.names.version(&st.nodes[p].label);
            steps.push(step(
                Instruction::Join {
                    dst: dst.clone(),
                    lhs: Input::plain(st.nodes[p].current.clone()),
                    rhs,
                    keep: None,
                },
                Phase::FirstRound,
            ));
            st.nodes[p].current = dst;
            st.nodes[v].removed = true;
        } else {
            project_private(&mut st, v, &mut steps);
            let dst = st.names.version(&st.nodes[p].label);
            steps.push(step(
                Instruction::Semijoin {
                    dst: dst.clone(),
                    lhs: st.nodes[p].current.clone(),
                    rhs: st.nodes[v].current.clone(),
                },
                Phase::FirstRound,
            ));
            st.nodes[p].current = dst;
        }
    }
    project_private(&mut st, root, &mut steps);
    st.nodes[root].dangling_free = true;
    Ok((steps, st))
}

/// `R_v <- π_{O ∪ Ā_v} R_v`, elided when nothing is dropped.
fn project_private(st: &mut TreeState, v: usize, steps: &mut Vec<Step>) {
    let others = st.attrs_except(&[v]);
    let keep: BTreeSet<String> = st.nodes[v]
        .attrs
        .iter()
        .filter(|x| st.output.contains(*x) || others.contains(*x))
        .cloned()
        .collect();
    if keep != st.nodes[v].attrs {
        let dst = st.names.version(&st.nodes[v].label);
        steps.push(step(
            Instruction::Project {
                dst: dst.clone(),
                src: st.nodes[v].current.clone(),
                keep: Projection::group(st.ordered(&keep)),
            },
            Phase::FirstRound,
        ));
        st.nodes[v].current = dst;
        st.nodes[v].attrs = keep;
    }
}

/// Merges dangling-free `i` with its reducible neighbor `j`.
///
/// The merged node takes the parent's place and keeps the attributes still
/// needed: outputs plus anything shared with the remaining nodes.
pub fn plan_reduction(state: &mut TreeState, i: usize, j: usize) -> Result<Vec<Step>> {
    let live = |k: usize| k < state.nodes.len() && !state.nodes[k].removed;
    if !live(i) || !live(j) {
        return Err(Error::InvalidTree("reduction on a removed node".into()));
    }
    if !state.nodes[i].dangling_free {
        return Err(Error::NotDanglingFree(state.nodes[i].label.clone()));
    }
    if !state.is_reducible(i, j) {
        return Err(Error::NotReducible(state.nodes[j].label.clone(), state.nodes[i].label.clone()));
    }
    let (p, c) = if state.nodes[j].parent == Some(i) { (i, j) } else { (j, i) };
    let union: BTreeSet<String> = state.nodes[p].attrs.union(&state.nodes[c].attrs).cloned().collect();
    let others = state.attrs_except(&[p, c]);
    let keep: BTreeSet<String> = union
        .iter()
        .filter(|x| state.output.contains(*x) || others.contains(*x))
        .cloned()
        .collect();
    let dst = state.names.version(&state.nodes[p].label);
    let instr = Instruction::Join {
        dst: dst.clone(),
        lhs: Input::plain(state.nodes[p].current.clone()),
        rhs: Input::plain(state.nodes[c].current.clone()),
        keep: (keep != union).then(|| Projection::group(state.ordered(&keep))),
    };
    for k in state.children(c) {
        state.nodes[k].parent = Some(p);
    }
    state.nodes[c].removed = true;
    let node = &mut state.nodes[p];
    node.current = dst;
    node.attrs = keep;
    node.dangling_free = true;
    Ok(vec![step(instr, Phase::SecondRound)])
}

/// Second round: reduce until one node remains, inserting a top-down
/// semijoin whenever no dangling-free node has a reducible neighbor.
///
/// Semijoin target: among non-dangling-free children of dangling-free nodes,
/// prefer leaves (narrowest schema, then lowest id); otherwise the child
/// whose subtree reaches deepest (lowest id on ties).
pub fn plan_second_round(state: &mut TreeState, class: QueryClass) -> Result<Vec<Step>> {
    let mut steps = Vec::new();
    if matches!(class, QueryClass::RelationDominated { .. }) && state.live().len() > 1 {
        return Err(Error::InvalidTree("relation-dominated query left several relations".into()));
    }
    while state.live().len() > 1 {
        if let Some((i, j)) = state.find_reducible_pair() {
            steps.extend(plan_reduction(state, i, j)?);
            continue;
        }
        let cands: Vec<usize> = state
            .live()
            .into_iter()
            .filter(|&c| {
                !state.nodes[c].dangling_free
                    && state.nodes[c].parent.is_some_and(|p| state.nodes[p].dangling_free)
            })
            .collect();
        let leaf = cands
            .iter()
            .copied()
            .filter(|&c| state.children(c).is_empty())
            .min_by_key(|&c| (state.nodes[c].attrs.len(), c));
        let target = leaf
            .or_else(|| {
                cands
                    .iter()
                    .copied()
                    .min_by_key(|&c| (std::cmp::Reverse(state.deepest_leaf(c)), c))
            })
            .ok_or_else(|| Error::InvalidTree("no semijoin target in second round".into()))?;
        let p = state.nodes[target].parent.expect("candidate has a parent");
        let dst = state.names.version(&state.nodes[target].label);
        steps.push(step(
            Instruction::Semijoin {
                dst: dst.clone(),
                lhs: state.nodes[target].current.clone(),
                rhs: state.nodes[p].current.clone(),
            },
            Phase::SecondRound,
        ));
        state.nodes[target].current = dst;
        state.nodes[target].dangling_free = true;
    }
    Ok(steps)
}

/// Full two-round plan over a given join tree.
pub fn plan_with_tree(query: &ConjunctiveQuery, tree: &JoinTree) -> Result<PlanIR> {
    let (mut steps, mut state) = plan_first_round(query, tree)?;
    let class = if state.live().len() == 1 {
        QueryClass::RelationDominated { root: state.root }
    } else {
        QueryClass::Acyclic
    };
    steps.extend(plan_second_round(&mut state, class)?);
    let mut plan = PlanIR {
        steps,
        result: state.result_id(),
        ..Default::default()
    };
    plan.name_result("Q");
    Ok(plan)
}

/// Classic plan: semijoin sweeps up and down the tree, then post-order joins
/// with projection onto parent and output attributes, then `π_O`.
pub fn plan_yannakakis_baseline(query: &ConjunctiveQuery, tree: &JoinTree) -> Result<PlanIR> {
    check_tree(query, tree)?;
    let mut names = Names::new(query.relations.iter().map(|r| r.name.clone()));
    let mut steps = Vec::new();
    let mut cur = selection_steps(query, &mut names, &mut steps);
    let labels: Vec<String> = query.relations.iter().map(|r| r.name.clone()).collect();
    let output: BTreeSet<String> = query.output.iter().cloned().collect();
    let mut attrs: Vec<BTreeSet<String>> = query.relations.iter().map(|r| r.attrs.iter().cloned().collect()).collect();
    let post: Vec<usize> = tree.post_order().into_iter().filter(|&v| v != tree.root()).collect();
    let mut semijoin = |dst_of: usize, src_of: usize, cur: &mut Vec<String>, steps: &mut Vec<Step>| {
        let dst = names.version(&labels[dst_of]);
        steps.push(step(
            Instruction::Semijoin {
                dst: dst.clone(),
                lhs: cur[dst_of].clone(),
                rhs: cur[src_of].clone(),
            },
            Phase::Baseline,
        ));
        cur[dst_of] = dst;
    };
    for &v in &post {
        semijoin(tree.parent(v).unwrap(), v, &mut cur, &mut steps);
    }
    for &v in post.iter().rev() {
        semijoin(v, tree.parent(v).unwrap(), &mut cur, &mut steps);
    }
    for &v in &post {
        let p = tree.parent(v).unwrap();
        let keep: BTreeSet<String> = attrs[v]
            .iter()
            .filter(|x| attrs[p].contains(*x) || output.contains(*x))
            .cloned()
            .collect();
        let (lhs, rhs) = if keep != attrs[v] {
            (
                Input::projected(cur[v].clone(), query.order_attrs(&keep)),
                Input::plain(cur[p].clone()),
            )
        } else {
            (Input::plain(cur[p].clone()), Input::plain(cur[v].clone()))
        };
        let dst = names.join();
        steps.push(step(
            Instruction::Join {
                dst: dst.clone(),
                lhs,
                rhs,
                keep: None,
            },
            Phase::Baseline,
        ));
        cur[p] = dst;
        attrs[p].extend(keep);
    }
    let root = tree.root();
    let mut result = cur[root].clone();
    if attrs[root] != output {
        steps.push(step(
            Instruction::Project {
                dst: "Q".into(),
                src: result,
                keep: Projection::group(query.output.clone()),
            },
            Phase::Final,
        ));
        result = "Q".into();
    }
    let mut plan = PlanIR {
        steps,
        result,
        ..Default::default()
    };
    plan.name_result("Q");
    Ok(plan)
}

/// Left-deep joins in relation order (connected relations first), then `π_O`.
/// Materializes the full join; used as the standard-plan comparison point.
pub fn plan_binary_join(query: &ConjunctiveQuery) -> PlanIR {
    let mut names = Names::new(query.relations.iter().map(|r| r.name.clone()));
    let mut steps = Vec::new();
    let cur = selection_steps(query, &mut names, &mut steps);
    let mut done = vec![false; query.n()];
    done[0] = true;
    let mut acc = cur[0].clone();
    let mut acc_attrs: BTreeSet<&str> = query.attr_set(0);
    for _ in 1..query.n() {
        let next = (0..query.n())
            .filter(|&i| !done[i])
            .find(|&i| query.attr_set(i).iter().any(|a| acc_attrs.contains(a)))
            .or_else(|| (0..query.n()).find(|&i| !done[i]))
            .expect("relations remain");
        done[next] = true;
        acc_attrs.extend(query.attr_set(next));
        let dst = names.join();
        steps.push(step(
            Instruction::Join {
                dst: dst.clone(),
                lhs: Input::plain(acc),
                rhs: Input::plain(cur[next].clone()),
                keep: None,
            },
            Phase::Binary,
        ));
        acc = dst;
    }
    steps.push(step(
        Instruction::Project {
            dst: "Q".into(),
            src: acc,
            keep: Projection::group(query.output.clone()),
        },
        Phase::Final,
    ));
    PlanIR {
        steps,
        result: "Q".into(),
        ..Default::default()
    }
}

/// End-to-end plan: rules, tree choice under structural statistics, and the
/// hypertree route for cyclic queries.
pub fn plan(query: &ConjunctiveQuery) -> Result<PlanIR> {
    let stats = Stats::uniform(query, 1000);
    optimizer::choose_plan(query, &stats, &SchemaConstraints::default(), &OptimizerConfig::default(), None)
        .map(|c| c.plan)
}

#[cfg(test)]
mod tests;
