//! Plan choice: rewrite rules, join-tree candidates, cost-based selection.

pub(crate) mod constraints;
mod cost;
mod rules;
mod stats;

use std::collections::BTreeMap;

pub use constraints::{ForeignKey, SchemaConstraints};
pub use cost::{estimate_cost, CostEstimate, DryRun};
pub use rules::{
    rule_aggregation_elimination, rule_annotation_pruning, rule_cycle_elimination, rule_dimension_fusion,
    rule_semijoin_elimination, CycleRewrite, Fusion,
};
pub use stats::{collect_stats, CeMode, Stats, TableStats, QUANTILE_POINTS};

use crate::error::{Error, Result};
use crate::ghd::{bag_plan, enumerate_ghds_with_fan, rank_ghds};
use crate::hypergraph::{build_hypergraph, classify, enumerate_join_trees, find_connex_subset, JoinTree, QueryClass};
use crate::model::{ConjunctiveQuery, Predicate};
use crate::par::Parallelism;
use crate::planner::{plan_with_tree, Instruction, Phase, PlanIR, Projection, Step};

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    /// Join trees enumerated per query.
    pub tree_limit: usize,
    /// Trees (per decomposition) that get a full plan and a cost.
    pub candidate_limit: usize,
    /// Decompositions enumerated for a cyclic query.
    pub ghd_search_limit: usize,
    /// Best-ranked decompositions that get planned.
    pub ghd_limit: usize,
    /// Relations per decomposition bag.
    pub fan: usize,
    /// Row threshold for dimension fusion.
    pub fusion_threshold: u64,
    pub cycle_elimination: bool,
    pub aggregation_elimination: bool,
    pub semijoin_elimination: bool,
    pub annotation_pruning: bool,
    pub dimension_fusion: bool,
    pub parallelism: Parallelism,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tree_limit: 10_000,
            candidate_limit: 16,
            ghd_search_limit: 2_000,
            ghd_limit: 4,
            fan: crate::ghd::DEFAULT_FAN,
            fusion_threshold: 1_000,
            cycle_elimination: true,
            aggregation_elimination: true,
            semijoin_elimination: true,
            annotation_pruning: true,
            dimension_fusion: true,
            parallelism: Parallelism::default(),
        }
    }
}

impl OptimizerConfig {
    /// Every rewrite rule off.
    pub fn without_rules(mut self) -> Self {
        self.cycle_elimination = false;
        self.aggregation_elimination = false;
        self.semijoin_elimination = false;
        self.annotation_pruning = false;
        self.dimension_fusion = false;
        self
    }
}

/// One scored plan.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub plan: PlanIR,
    pub tree: JoinTree,
    pub cost: CostEstimate,
}

#[derive(Clone, Debug)]
pub struct ChosenPlan {
    pub plan: PlanIR,
    /// Join tree over `query`'s relations.
    pub tree: JoinTree,
    /// Query the tree plan was built for: the input after rewrites, fusion,
    /// or bag construction.
    pub query: ConjunctiveQuery,
    pub cost: CostEstimate,
    /// Every scored candidate, in scoring order.
    pub candidates: Vec<Candidate>,
    pub class: QueryClass,
    /// Tree enumeration hit its limit; only the first candidate was scored.
    pub truncated: bool,
    /// Names of the rewrites that fired.
    pub rewrites: Vec<String>,
}

/// Σ depth·cardinality over the tree: large relations should sit near the
/// root.
fn depth_weight(tree: &JoinTree, query: &ConjunctiveQuery, stats: &Stats) -> f64 {
    (0..tree.len())
        .map(|v| {
            let card = stats.table(&query.relations[v].name).map_or(1000.0, |t| t.cardinality as f64);
            tree.depth(v) as f64 * card
        })
        .sum()
}

/// Join trees worth planning, best first, and whether enumeration was
/// truncated.
///
/// Free-connex queries keep trees with a connex subset. Trees rooted at a
/// relation holding an output attribute are preferred; the rest are ranked
/// by [`depth_weight`], then height.
pub fn enumerate_candidate_trees(
    query: &ConjunctiveQuery,
    stats: &Stats,
    cfg: &OptimizerConfig,
) -> Result<(Vec<JoinTree>, bool)> {
    let h = build_hypergraph(query);
    let all = enumerate_join_trees(&h, cfg.tree_limit)?;
    let truncated = all.len() >= cfg.tree_limit;
    let output = query.output_set();
    let mut trees = all;
    if classify(query).class.is_free_connex() {
        let connex: Vec<JoinTree> = trees
            .iter()
            .filter_map(|t| find_connex_subset(t, &h, &output).map(|s| t.clone().with_connex(Some(s))))
            .collect();
        if !connex.is_empty() {
            trees = connex;
        }
    }
    let rooted: Vec<JoinTree> = trees
        .iter()
        .filter(|t| h.edges[t.root()].iter().any(|a| output.contains(a.as_str())))
        .cloned()
        .collect();
    if !rooted.is_empty() {
        trees = rooted;
    }
    let mut keyed: Vec<(f64, usize, Vec<usize>, JoinTree)> = trees
        .into_iter()
        .map(|t| (depth_weight(&t, query, stats), t.height(), t.canonical(), t))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    let take = if truncated { 1 } else { cfg.candidate_limit.max(1) };
    Ok((keyed.into_iter().take(take).map(|k| k.3).collect(), truncated))
}

/// A tree plan over `planning_query`, with `prefix` steps building its
/// relations first.
struct Route {
    planning_query: ConjunctiveQuery,
    stats: Stats,
    prefix: Vec<Step>,
}

fn route_plans(route: &Route, cfg: &OptimizerConfig) -> Result<(Vec<(PlanIR, JoinTree)>, bool)> {
    let (trees, truncated) = enumerate_candidate_trees(&route.planning_query, &route.stats, cfg)?;
    let mut out = Vec::with_capacity(trees.len());
    for t in trees {
        let mut p = plan_with_tree(&route.planning_query, &t)?;
        let mut steps = route.prefix.clone();
        steps.append(&mut p.steps);
        p.steps = steps;
        out.push((p, t));
    }
    Ok((out, truncated))
}

/// Statistics for the bag relations of a decomposition route.
fn bag_stats(
    query: &ConjunctiveQuery,
    bag_query: &ConjunctiveQuery,
    steps: &[Step],
    stats: &Stats,
    constraints: &SchemaConstraints,
    renamed: &BTreeMap<String, Vec<(String, String)>>,
) -> Result<Stats> {
    let ids = cost::estimate_ids(steps, query, stats, constraints, renamed)?;
    let mut out = stats.clone();
    for e in &bag_query.relations {
        if out.table(&e.name).is_some() {
            continue;
        }
        if let Some(est) = ids.get(&e.name) {
            out.tables.insert(
                e.name.clone(),
                TableStats {
                    cardinality: est.card.ceil() as u64,
                    distinct: est.ndv.iter().map(|(a, v)| (a.clone(), v.ceil() as u64)).collect(),
                    quantiles: BTreeMap::new(),
                },
            );
        }
    }
    Ok(out)
}

/// Picks the cheapest plan for `query`.
///
/// Pipeline: constraint validation, cycle elimination, then either dimension
/// fusion and join-tree candidates (acyclic) or the best-ranked hypertree
/// decompositions (cyclic). Each candidate gets aggregation and semijoin
/// elimination, a final selection and projection when a cycle was broken,
/// and annotation pruning; the cheapest by (total rows, max intermediate,
/// plan text) wins. With `CeMode::Accurate` and a dry-run source, costs are
/// exact.
pub fn choose_plan(
    query: &ConjunctiveQuery,
    stats: &Stats,
    constraints: &SchemaConstraints,
    cfg: &OptimizerConfig,
    dry: Option<&dyn DryRun>,
) -> Result<ChosenPlan> {
    constraints.validate(Some(query))?;
    let class = classify(query).class;
    let mut rewrites: Vec<String> = Vec::new();
    let mut work = query.clone();
    let mut renamed = BTreeMap::new();
    let mut deferred: Option<Predicate> = None;
    if cfg.cycle_elimination && !class.is_acyclic() {
        if let Some(cr) = rule_cycle_elimination(query, constraints) {
            renamed = cr.renamed_map();
            deferred = Some(cr.predicate.clone());
            work = cr.query;
            rewrites.push("cycle_elimination".into());
        }
    }
    let h = build_hypergraph(&work);
    let mut routes: Vec<Route> = Vec::new();
    if crate::hypergraph::gyo_reduce(&h).is_acyclic() {
        let fusion = if cfg.dimension_fusion {
            rule_dimension_fusion(&work, stats, constraints, cfg.fusion_threshold)?
        } else {
            None
        };
        match fusion {
            Some(f) => {
                rewrites.push("dimension_fusion".into());
                routes.push(Route {
                    planning_query: f.query,
                    stats: f.stats,
                    prefix: f.steps,
                });
            }
            None => routes.push(Route {
                planning_query: work.clone(),
                stats: stats.clone(),
                prefix: Vec::new(),
            }),
        }
    } else {
        let mut ghds = enumerate_ghds_with_fan(&h, cfg.ghd_search_limit, cfg.fan);
        rank_ghds(&mut ghds, &work, stats, constraints);
        for g in ghds.iter().take(cfg.ghd_limit.max(1)) {
            let bp = bag_plan(&work, g)?;
            let bstats = bag_stats(&work, &bp.query, &bp.steps, stats, constraints, &renamed)?;
            routes.push(Route {
                planning_query: bp.query,
                stats: bstats,
                prefix: bp.steps,
            });
        }
        if routes.is_empty() {
            return Err(Error::InvalidGhd("no decomposition found".into()));
        }
        rewrites.push("hypertree".into());
    }

    let unannotated = if cfg.annotation_pruning {
        rule_annotation_pruning(query)
    } else {
        Default::default()
    };
    let mut truncated = false;
    let mut pending: Vec<(PlanIR, JoinTree, usize)> = Vec::new();
    for (ri, route) in routes.iter().enumerate() {
        let (plans, tr) = route_plans(route, cfg)?;
        truncated |= tr;
        for (mut p, t) in plans {
            p.renamed = renamed.clone();
            if cfg.aggregation_elimination {
                p = rule_aggregation_elimination(&p, &work, constraints)?;
            }
            if cfg.semijoin_elimination {
                p = rule_semijoin_elimination(&p, &work, constraints)?;
            }
            if let Some(pred) = &deferred {
                finish_cycle_plan(&mut p, pred, &query.output);
            }
            p.unannotated = unannotated.clone();
            pending.push((p, t, ri));
        }
    }
    let costs: Vec<Result<CostEstimate>> = cfg
        .parallelism
        .map(&pending, |(p, _, _)| estimate_cost(p, &work, stats, constraints, dry));
    let mut candidates: Vec<(Candidate, usize)> = Vec::with_capacity(pending.len());
    for ((plan, tree, ri), cost) in pending.into_iter().zip(costs) {
        candidates.push((Candidate { plan, tree, cost: cost? }, ri));
    }
    let best = candidates
        .iter()
        .enumerate()
        .min_by(|(_, (a, _)), (_, (b, _))| a.cost.compare(&b.cost).then_with(|| a.plan.text().cmp(&b.plan.text())))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NoValidTree("no candidate plan".into()))?;
    let (chosen, ri) = candidates[best].clone();
    let planning_query = routes.swap_remove(ri).planning_query;
    Ok(ChosenPlan {
        plan: chosen.plan,
        tree: chosen.tree,
        query: planning_query,
        cost: chosen.cost,
        candidates: candidates.into_iter().map(|(c, _)| c).collect(),
        class,
        truncated,
        rewrites,
    })
}

/// Appends the equality restoring a broken cycle and the projection back to
/// the original output.
fn finish_cycle_plan(plan: &mut PlanIR, predicate: &Predicate, output: &[String]) {
    if plan.result == "Q" {
        if let Some(last) = plan.steps.iter_mut().rev().find(|s| s.instr.dst() == "Q") {
            last.instr.set_dst("Q_full".into());
        }
        plan.result = "Q_full".into();
    }
    let src = plan.result.clone();
    plan.steps.push(Step {
        instr: Instruction::Select {
            dst: "Q_sel".into(),
            src,
            predicate: predicate.clone(),
        },
        phase: Phase::Final,
    });
    plan.steps.push(Step {
        instr: Instruction::Project {
            dst: "Q".into(),
            src: "Q_sel".into(),
            keep: Projection::group(output.to_vec()),
        },
        phase: Phase::Final,
    });
    plan.result = "Q".into();
}
