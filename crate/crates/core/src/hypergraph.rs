//! Query hypergraphs, GYO reduction, join trees and query classification.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::ConjunctiveQuery;

/// Edge `i` is the attribute set of relation entry `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    pub vertices: BTreeSet<String>,
    pub edges: Vec<BTreeSet<String>>,
    pub names: Vec<String>,
}

pub fn build_hypergraph(query: &ConjunctiveQuery) -> Hypergraph {
    let edges: Vec<BTreeSet<String>> = query
        .relations
        .iter()
        .map(|r| r.attrs.iter().cloned().collect())
        .collect();
    Hypergraph {
        vertices: edges.iter().flatten().cloned().collect(),
        edges,
        names: query.relations.iter().map(|r| r.name.clone()).collect(),
    }
}

impl Hypergraph {
    pub fn from_edges(edges: Vec<BTreeSet<String>>) -> Self {
        let names = (0..edges.len()).map(|i| format!("E{i}")).collect();
        Self {
            vertices: edges.iter().flatten().cloned().collect(),
            edges,
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn shared(&self, a: usize, b: usize) -> usize {
        self.edges[a].intersection(&self.edges[b]).count()
    }
}

/// One GYO step: `ear` removed, covered by `witness` (none for the last edge).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ear {
    pub ear: usize,
    pub witness: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GyoResult {
    /// Edges left when no ear exists; empty iff the hypergraph is acyclic.
    pub residual: Vec<usize>,
    pub trace: Vec<Ear>,
}

impl GyoResult {
    pub fn is_acyclic(&self) -> bool {
        self.residual.is_empty()
    }
}

/// Ear removal with lowest-id ear first and lowest-id witness.
///
/// An edge is an ear when the vertices it shares with the remaining edges all
/// lie in one other remaining edge. Of two identical edges the smaller id
/// stays and absorbs the larger.
pub fn gyo_reduce(h: &Hypergraph) -> GyoResult {
    let mut active: BTreeSet<usize> = (0..h.len()).collect();
    let mut trace = Vec::with_capacity(h.len());
    'outer: while !active.is_empty() {
        for &e in &active {
            let others: Vec<usize> = active.iter().copied().filter(|&o| o != e).collect();
            if others.is_empty() {
                trace.push(Ear { ear: e, witness: None });
                active.remove(&e);
                continue 'outer;
            }
            let shared: BTreeSet<&String> = h.edges[e]
                .iter()
                .filter(|v| others.iter().any(|&o| h.edges[o].contains(*v)))
                .collect();
            let witness = others
                .iter()
                .copied()
                .find(|&w| shared.iter().all(|v| h.edges[w].contains(*v)));
            if let Some(w) = witness {
                let twin = others
                    .iter()
                    .copied()
                    .find(|&t| t > e && h.edges[t] == h.edges[e]);
                let step = match twin {
                    Some(t) => Ear { ear: t, witness: Some(e) },
                    None => Ear { ear: e, witness: Some(w) },
                };
                active.remove(&step.ear);
                trace.push(step);
                continue 'outer;
            }
        }
        break;
    }
    GyoResult {
        residual: active.into_iter().collect(),
        trace,
    }
}

/// A rooted tree over relation ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JoinTree {
    parent: Vec<Option<usize>>,
    root: usize,
    connex: Option<BTreeSet<usize>>,
}

impl JoinTree {
    /// Builds a tree from a parent vector; exactly one entry must be `None`.
    pub fn new(parent: Vec<Option<usize>>) -> Result<Self> {
        let roots: Vec<usize> = (0..parent.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!("{} roots", roots.len())));
        }
        let n = parent.len();
        for start in 0..n {
            let mut v = start;
            for _ in 0..=n {
                match parent[v] {
                    None => break,
                    Some(p) if p >= n => {
                        return Err(Error::InvalidTree(format!("parent {p} out of range")))
                    }
                    Some(p) => v = p,
                }
            }
            if parent[v].is_some() {
                return Err(Error::InvalidTree("parent pointers form a cycle".into()));
            }
        }
        Ok(Self {
            root: roots[0],
            parent,
            connex: None,
        })
    }

    /// Tree read off a GYO trace: each ear hangs under its witness.
    pub fn from_gyo(g: &GyoResult, n: usize) -> Result<Self> {
        if !g.is_acyclic() {
            return Err(Error::CyclicQuery);
        }
        let mut parent = vec![None; n];
        for e in &g.trace {
            parent[e.ear] = e.witness;
        }
        Self::new(parent)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn connex(&self) -> Option<&BTreeSet<usize>> {
        self.connex.as_ref()
    }

    pub fn with_connex(mut self, connex: Option<BTreeSet<usize>>) -> Self {
        self.connex = connex;
        self
    }

    /// Children in id order.
    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(v)).collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n = self.children(v);
        if let Some(p) = self.parent[v] {
            n.push(p);
        }
        n
    }

    /// Post-order, children visited in id order.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        self.post_from(self.root, &mut out);
        out
    }

    fn post_from(&self, v: usize, out: &mut Vec<usize>) {
        for c in self.children(v) {
            self.post_from(c, out);
        }
        out.push(v);
    }

    /// Pre-order, children visited in id order.
    pub fn pre_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            let mut cs = self.children(v);
            cs.reverse();
            stack.extend(cs);
        }
        out
    }

    pub fn depth(&self, v: usize) -> usize {
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            d += 1;
            cur = p;
        }
        d
    }

    pub fn height(&self) -> usize {
        (0..self.len()).map(|v| self.depth(v)).max().unwrap_or(0)
    }

    /// Same undirected tree rooted at `r`.
    pub fn reroot(&self, r: usize) -> JoinTree {
        let n = self.len();
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([r]);
        seen[r] = true;
        while let Some(v) = queue.pop_front() {
            for u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some(v);
                    queue.push_back(u);
                }
            }
        }
        JoinTree {
            parent,
            root: r,
            connex: None,
        }
    }

    /// Sort key: the parent vector with the root encoded as `usize::MAX`.
    pub fn canonical(&self) -> Vec<usize> {
        self.parent.iter().map(|p| p.unwrap_or(usize::MAX)).collect()
    }

    /// Checks the connectedness property: for every vertex, the nodes
    /// containing it induce a connected subtree.
    pub fn is_join_tree_for(&self, h: &Hypergraph) -> bool {
        if self.len() != h.len() {
            return false;
        }
        h.vertices.iter().all(|x| {
            let holders: Vec<usize> = (0..self.len()).filter(|&i| h.edges[i].contains(x)).collect();
            // A subset of tree nodes is connected iff exactly one of them has
            // its parent outside the subset.
            holders
                .iter()
                .filter(|&&v| self.parent[v].is_none_or(|p| !h.edges[p].contains(x)))
                .count()
                == 1
        })
    }

    /// Checks both connex-subset conditions for `set` on this tree.
    pub fn is_connex_subset(&self, h: &Hypergraph, output: &BTreeSet<&str>, set: &BTreeSet<usize>) -> bool {
        if !set.contains(&self.root) {
            return false;
        }
        let covered: BTreeSet<&str> = set.iter().flat_map(|&i| h.edges[i].iter().map(String::as_str)).collect();
        if !output.is_subset(&covered) {
            return false;
        }
        set.iter().all(|&v| match self.parent[v] {
            None => true,
            Some(p) => {
                set.contains(&p)
                    && h.edges[v]
                        .intersection(&h.edges[p])
                        .all(|x| output.contains(x.as_str()))
            }
        })
    }

    /// Indented dump: one node per line, `name [attrs]`, `*` marking connex
    /// membership.
    pub fn dump(&self, names: &[String], attrs: &[Vec<String>]) -> String {
        let mut out = String::new();
        for v in self.pre_order() {
            let star = if self.connex.as_ref().is_some_and(|c| c.contains(&v)) {
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{}{} [{}]{star}",
                "  ".repeat(self.depth(v)),
                names[v],
                attrs[v].join(", ")
            );
        }
        out
    }

    /// Nested notation such as `R5(R1(R2,R3(R4)),R6)`.
    pub fn nested(&self, names: &[String]) -> String {
        fn go(t: &JoinTree, v: usize, names: &[String], out: &mut String) {
            out.push_str(&names[v]);
            let cs = t.children(v);
            if !cs.is_empty() {
                out.push('(');
                for (i, c) in cs.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    go(t, c, names, out);
                }
                out.push(')');
            }
        }
        let mut out = String::new();
        go(self, self.root, names, &mut out);
        out
    }
}

/// Parses nested notation `R5(R1(R2,R3(R4)),R6)` against relation names.
pub fn parse_tree(text: &str, names: &[String]) -> Result<JoinTree> {
    let mut parent: Vec<Option<Option<usize>>> = vec![None; names.len()];
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0;
    let mut stack: Vec<usize> = Vec::new();
    let mut last: Option<usize> = None;
    let bad = |m: String| Error::InvalidTree(m);
    while pos < chars.len() {
        match chars[pos] {
            '(' => {
                stack.push(last.ok_or_else(|| bad("`(` without a relation".into()))?);
                pos += 1;
            }
            ')' => {
                stack.pop().ok_or_else(|| bad("unbalanced `)`".into()))?;
                pos += 1;
            }
            ',' => pos += 1,
            _ => {
                let start = pos;
                while pos < chars.len() && !matches!(chars[pos], '(' | ')' | ',') {
                    pos += 1;
                }
                let name: String = chars[start..pos].iter().collect();
                let id = names
                    .iter()
                    .position(|n| *n == name)
                    .ok_or_else(|| bad(format!("unknown relation `{name}`")))?;
                if parent[id].is_some() {
                    return Err(bad(format!("`{name}` appears twice")));
                }
                parent[id] = Some(stack.last().copied());
                last = Some(id);
            }
        }
    }
    if !stack.is_empty() {
        return Err(bad("unbalanced `(`".into()));
    }
    let parent: Vec<Option<usize>> = parent
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| bad(format!("`{}` missing", names[i]))))
        .collect::<Result<_>>()?;
    JoinTree::new(parent)
}

/// All rooted join trees, sorted by canonical encoding, at most `limit`.
///
/// Join trees of an acyclic hypergraph are exactly the maximum-weight
/// spanning trees of its intersection graph (weight = shared vertices); these
/// are enumerated by branch and bound, then rooted at every node.
pub fn enumerate_join_trees(h: &Hypergraph, limit: usize) -> Result<Vec<JoinTree>> {
    if !gyo_reduce(h).is_acyclic() {
        return Err(Error::CyclicQuery);
    }
    let n = h.len();
    if n == 1 {
        return Ok(vec![JoinTree::new(vec![None])?]);
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((h.shared(a, b), a, b));
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let target = kruskal_weight(n, &pairs);
    let mut out: Vec<JoinTree> = Vec::new();
    let mut chosen = Vec::with_capacity(n - 1);
    let mut comp: Vec<usize> = (0..n).collect();
    let mut search = SpanningSearch {
        n,
        pairs: &pairs,
        target,
        limit,
        h,
        out: &mut out,
    };
    search.run(0, &mut comp, &mut chosen, 0);
    out.sort_by_key(JoinTree::canonical);
    out.truncate(limit);
    Ok(out)
}

fn kruskal_weight(n: usize, pairs: &[(usize, usize, usize)]) -> usize {
    let mut comp: Vec<usize> = (0..n).collect();
    let mut total = 0;
    for &(w, a, b) in pairs {
        let (ca, cb) = (comp[a], comp[b]);
        if ca != cb {
            total += w;
            for c in comp.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
        }
    }
    total
}

struct SpanningSearch<'a> {
    n: usize,
    pairs: &'a [(usize, usize, usize)],
    target: usize,
    limit: usize,
    h: &'a Hypergraph,
    out: &'a mut Vec<JoinTree>,
}

impl SpanningSearch<'_> {
    fn run(&mut self, idx: usize, comp: &mut Vec<usize>, chosen: &mut Vec<(usize, usize)>, weight: usize) {
        if self.out.len() >= self.limit {
            return;
        }
        let need = self.n - 1 - chosen.len();
        if need == 0 {
            if weight == self.target {
                self.emit(chosen);
            }
            return;
        }
        if idx >= self.pairs.len() {
            return;
        }
        let bound: usize = self.pairs[idx..].iter().take(need).map(|p| p.0).sum();
        if weight + bound < self.target {
            return;
        }
        let (w, a, b) = self.pairs[idx];
        let (ca, cb) = (comp[a], comp[b]);
        if ca != cb {
            let saved = comp.clone();
            for c in comp.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
            chosen.push((a, b));
            self.run(idx + 1, comp, chosen, weight + w);
            chosen.pop();
            *comp = saved;
        }
        self.run(idx + 1, comp, chosen, weight);
    }

    fn emit(&mut self, edges: &[(usize, usize)]) {
        let mut parent = vec![None; self.n];
        parent[0] = Some(usize::MAX);
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &(a, b) in edges {
                let u = if a == v { b } else if b == v { a } else { continue };
                if parent[u].is_none() {
                    parent[u] = Some(v);
                    queue.push_back(u);
                }
            }
        }
        parent[0] = None;
        let Ok(base) = JoinTree::new(parent) else { return };
        if !base.is_join_tree_for(self.h) {
            return;
        }
        for r in 0..self.n {
            if self.out.len() >= self.limit {
                return;
            }
            self.out.push(base.reroot(r));
        }
    }
}

/// Minimal root-containing subtree meeting both connex conditions.
///
/// Grows from the root across edges whose shared attributes are all outputs,
/// then drops leaves that are not needed to cover `O`.
pub fn find_connex_subset(tree: &JoinTree, h: &Hypergraph, output: &BTreeSet<&str>) -> Option<BTreeSet<usize>> {
    let mut set = BTreeSet::from([tree.root()]);
    let mut queue = VecDeque::from([tree.root()]);
    while let Some(v) = queue.pop_front() {
        for c in tree.children(v) {
            if h.edges[c].intersection(&h.edges[v]).all(|x| output.contains(x.as_str())) {
                set.insert(c);
                queue.push_back(c);
            }
        }
    }
    let covers = |s: &BTreeSet<usize>| {
        let attrs: BTreeSet<&str> = s.iter().flat_map(|&i| h.edges[i].iter().map(String::as_str)).collect();
        output.is_subset(&attrs)
    };
    if !covers(&set) {
        return None;
    }
    loop {
        let leaf = set.iter().copied().find(|&v| {
            v != tree.root()
                && !tree.children(v).iter().any(|c| set.contains(c))
                && {
                    let mut rest = set.clone();
                    rest.remove(&v);
                    covers(&rest)
                }
        });
        match leaf {
            Some(v) => {
                set.remove(&v);
            }
            None => break,
        }
    }
    Some(set)
}

/// Strongest class of a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryClass {
    RelationDominated { root: usize },
    FreeConnex,
    Acyclic,
    Cyclic,
}

impl QueryClass {
    pub fn is_acyclic(self) -> bool {
        self != QueryClass::Cyclic
    }

    pub fn is_free_connex(self) -> bool {
        matches!(self, QueryClass::FreeConnex | QueryClass::RelationDominated { .. })
    }

    pub fn describe(self, names: &[String]) -> String {
        match self {
            QueryClass::RelationDominated { root } => format!("relation-dominated, root {}", names[root]),
            QueryClass::FreeConnex => "free-connex".into(),
            QueryClass::Acyclic => "acyclic, not free-connex".into(),
            QueryClass::Cyclic => "cyclic".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub class: QueryClass,
    /// Witness tree; carries the connex subset for free-connex classes.
    pub tree: Option<JoinTree>,
}

pub fn classify(query: &ConjunctiveQuery) -> Classification {
    let h = build_hypergraph(query);
    let output = query.output_set();
    let gyo = gyo_reduce(&h);
    let Ok(tree) = JoinTree::from_gyo(&gyo, h.len()) else {
        return Classification {
            class: QueryClass::Cyclic,
            tree: None,
        };
    };
    if let Some(root) = (0..h.len()).find(|&i| output.iter().all(|o| h.edges[i].contains(*o))) {
        let t = tree.reroot(root).with_connex(Some(BTreeSet::from([root])));
        return Classification {
            class: QueryClass::RelationDominated { root },
            tree: Some(t),
        };
    }
    if let Some(t) = free_connex_witness(&h, &output) {
        return Classification {
            class: QueryClass::FreeConnex,
            tree: Some(t),
        };
    }
    Classification {
        class: QueryClass::Acyclic,
        tree: Some(tree),
    }
}

/// Free-connex test via acyclicity of the hypergraph extended with an `O`
/// edge. The witness hangs the relations adjacent to `O` into a join tree of
/// their own and keeps the rest of the extended tree below them.
fn free_connex_witness(h: &Hypergraph, output: &BTreeSet<&str>) -> Option<JoinTree> {
    let n = h.len();
    let mut ext = h.clone();
    ext.edges.push(output.iter().map(|s| s.to_string()).collect());
    ext.names.push("[O]".into());
    let g = gyo_reduce(&ext);
    if !g.is_acyclic() {
        return None;
    }
    let t_ext = JoinTree::from_gyo(&g, n + 1).ok()?.reroot(n);
    let top: Vec<usize> = t_ext.children(n);
    let sub = Hypergraph::from_edges(top.iter().map(|&i| h.edges[i].clone()).collect());
    let sub_tree = JoinTree::from_gyo(&gyo_reduce(&sub), top.len()).ok()?.reroot(0);
    let parent = (0..n)
        .map(|v| match top.iter().position(|&t| t == v) {
            Some(k) => sub_tree.parent(k).map(|p| top[p]),
            None => t_ext.parent(v),
        })
        .collect();
    let candidate = JoinTree::new(parent).ok()?;
    if candidate.is_join_tree_for(h) {
        if let Some(c) = find_connex_subset(&candidate, h, output) {
            return Some(candidate.with_connex(Some(c)));
        }
    }
    // Fall back to searching rooted trees directly.
    enumerate_join_trees(h, 10_000)
        .ok()?
        .into_iter()
        .find_map(|t| find_connex_subset(&t, h, output).map(|c| t.with_connex(Some(c))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn names(q: &ConjunctiveQuery) -> Vec<String> {
        q.relations.iter().map(|r| r.name.clone()).collect()
    }

    #[test]
    fn q1_hypergraph_shape() {
        let h = build_hypergraph(&fixtures::q1());
        assert_eq!(h.edges.len(), 6);
        assert_eq!(h.vertices.len(), 8);
        assert!(gyo_reduce(&h).is_acyclic());
    }

    #[test]
    fn cyclic_shapes_leave_residuals() {
        let tri = build_hypergraph(&fixtures::triangle());
        assert_eq!(tri.edges.len(), 3);
        assert_eq!(tri.vertices.len(), 3);
        assert_eq!(gyo_reduce(&tri).residual, vec![0, 1, 2]);
        assert!(!gyo_reduce(&build_hypergraph(&fixtures::q5())).is_acyclic());
        assert!(gyo_reduce(&build_hypergraph(&fixtures::single())).is_acyclic());
    }

    #[test]
    fn twins_absorb_into_smaller_id() {
        let h = Hypergraph::from_edges(vec![
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
        ]);
        let g = gyo_reduce(&h);
        assert_eq!(g.trace[0], Ear { ear: 1, witness: Some(0) });
    }

    #[test]
    fn q1_trees_include_t1_and_t2() {
        let q = fixtures::q1();
        let h = build_hypergraph(&q);
        let trees = enumerate_join_trees(&h, 10_000).unwrap();
        assert!(trees.contains(&fixtures::t1()));
        assert!(trees.contains(&fixtures::t2()));
        assert!(trees.iter().all(|t| t.is_join_tree_for(&h)));
        let mut keys: Vec<_> = trees.iter().map(JoinTree::canonical).collect();
        let before = keys.len();
        keys.dedup();
        assert_eq!(keys.len(), before);
    }

    #[test]
    fn two_relations_have_two_rooted_trees() {
        let q = fixtures::q4();
        let trees = enumerate_join_trees(&build_hypergraph(&q), 100).unwrap();
        assert_eq!(trees.len(), 2);
        assert!(matches!(
            enumerate_join_trees(&build_hypergraph(&fixtures::triangle()), 10),
            Err(Error::CyclicQuery)
        ));
    }

    #[test]
    fn connex_subsets_on_q2() {
        let q2 = fixtures::q2();
        let h = build_hypergraph(&q2);
        let out = q2.output_set();
        let c = find_connex_subset(&fixtures::t2(), &h, &out).unwrap();
        assert!(fixtures::t2().is_connex_subset(&h, &out, &c));
        assert!(find_connex_subset(&fixtures::t1(), &h, &out).is_none());
        let empty = BTreeSet::new();
        assert_eq!(find_connex_subset(&fixtures::t1(), &h, &empty), Some(BTreeSet::from([4])));
    }

    #[test]
    fn classifies_fixture_queries() {
        let q1 = fixtures::q1();
        assert_eq!(classify(&q1).class, QueryClass::Acyclic);
        let q3 = fixtures::q3();
        let c3 = classify(&q3);
        assert_eq!(c3.class, QueryClass::RelationDominated { root: 0 });
        assert_eq!(c3.class.describe(&names(&q3)), "relation-dominated, root R1");
        let q2 = fixtures::q2();
        let c2 = classify(&q2);
        assert_eq!(c2.class, QueryClass::FreeConnex);
        let t = c2.tree.unwrap();
        let h = build_hypergraph(&q2);
        assert!(t.is_join_tree_for(&h));
        assert!(t.is_connex_subset(&h, &q2.output_set(), t.connex().unwrap()));
        assert_eq!(classify(&fixtures::triangle()).class, QueryClass::Cyclic);
    }

    #[test]
    fn tree_text_round_trip() {
        let q = fixtures::q1();
        let n = names(&q);
        let t = parse_tree("R5(R1(R2,R3(R4)),R6)", &n).unwrap();
        assert_eq!(t, fixtures::t1());
        assert_eq!(t.nested(&n), "R5(R1(R2,R3(R4)),R6)");
        assert!(parse_tree("R5(R1", &n).is_err());
        assert!(parse_tree("R5(R1(R2,R3(R4)),R6,R9)", &n).is_err());
        let attrs: Vec<Vec<String>> = q.relations.iter().map(|r| r.attrs.clone()).collect();
        let dump = t.with_connex(Some(BTreeSet::from([4]))).dump(&n, &attrs);
        assert!(dump.starts_with("R5 [x4, x7] *\n  R1 [x1, x2, x3, x4]\n"));
    }

    #[test]
    fn orders() {
        let t = fixtures::t1();
        assert_eq!(t.post_order(), vec![1, 3, 2, 0, 5, 4]);
        assert_eq!(t.pre_order(), vec![4, 0, 1, 2, 3, 5]);
        assert_eq!(t.height(), 3);
    }
}
