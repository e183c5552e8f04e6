use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::constraints::{join_keys, minimal_keys, KeySet, SchemaConstraints};
use super::stats::{CeMode, Stats, TableStats};
use crate::error::{Error, Result};
use crate::executor::{run_plan, ExecutionReport};
use crate::model::{CmpOp, ConjunctiveQuery, Database, Operand, Predicate, Semiring, Term};
use crate::planner::{count_ops, Input, Instruction, OpCounts, PlanIR, Projection, Step};

/// Source of exact sizes for accurate-mode costing.
pub trait DryRun: Sync {
    fn dry_run(&self, plan: &PlanIR) -> Result<ExecutionReport>;
}

impl<S: Semiring> DryRun for Database<S> {
    fn dry_run(&self, plan: &PlanIR) -> Result<ExecutionReport> {
        run_plan(plan, self).map(|(_, r)| r)
    }
}

/// Row-count cost of a plan: Σ over instructions of rows read plus rows
/// produced, and the largest relation built.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mode: CeMode,
    pub total_rows: f64,
    pub max_intermediate: f64,
    pub ops: OpCounts,
}

impl CostEstimate {
    /// Total rows, then max intermediate.
    pub fn compare(&self, other: &Self) -> Ordering {
        self.total_rows
            .total_cmp(&other.total_rows)
            .then(self.max_intermediate.total_cmp(&other.max_intermediate))
    }
}

/// Estimated shape of one relation.
#[derive(Clone, Debug)]
pub(crate) struct Est {
    pub card: f64,
    pub ndv: BTreeMap<String, f64>,
    pub keys: KeySet,
}

impl Est {
    fn cap(mut self) -> Self {
        let floor = if self.card > 0.0 { 1.0 } else { 0.0 };
        for v in self.ndv.values_mut() {
            *v = v.min(self.card).max(floor);
        }
        self
    }

    fn ndv(&self, a: &str) -> f64 {
        self.ndv.get(a).copied().unwrap_or(self.card).max(1.0)
    }

    fn attrs(&self) -> BTreeSet<String> {
        self.ndv.keys().cloned().collect()
    }
}

/// Sizes attributed to one instruction, mirroring the executor's report.
#[derive(Clone, Debug, Default)]
pub(crate) struct StepEst {
    pub inputs: Vec<f64>,
    pub operands: Vec<f64>,
    pub join_rows: Option<f64>,
    pub out: f64,
}

impl StepEst {
    fn touched(&self) -> f64 {
        self.inputs.iter().sum::<f64>() + self.operands.iter().sum::<f64>() + self.join_rows.unwrap_or(0.0) + self.out
    }

    fn peak(&self) -> f64 {
        self.out.max(self.join_rows.unwrap_or(0.0))
    }
}

/// Cardinality propagation over plan ids.
pub(crate) struct Estimator<'a> {
    query: &'a ConjunctiveQuery,
    stats: &'a Stats,
    constraints: &'a SchemaConstraints,
    renamed: &'a BTreeMap<String, Vec<(String, String)>>,
    mode: CeMode,
    env: HashMap<String, Est>,
    /// Base tables by id, for quantile lookups on selections.
    base_tables: HashMap<String, TableStats>,
}

const DEFAULT_CARD: f64 = 1000.0;

impl<'a> Estimator<'a> {
    pub fn new(
        query: &'a ConjunctiveQuery,
        stats: &'a Stats,
        constraints: &'a SchemaConstraints,
        renamed: &'a BTreeMap<String, Vec<(String, String)>>,
        mode: CeMode,
    ) -> Self {
        Self {
            query,
            stats,
            constraints,
            renamed,
            mode,
            env: HashMap::new(),
            base_tables: HashMap::new(),
        }
    }

    fn rename(&self, rel: &str, attr: &str) -> String {
        self.renamed
            .get(rel)
            .and_then(|r| r.iter().find(|(f, _)| f == attr))
            .map_or_else(|| attr.to_string(), |(_, t)| t.clone())
    }

    fn base(&mut self, id: &str) -> Result<Est> {
        let i = self.query.index_of(id).ok_or_else(|| Error::MissingRelation(id.to_string()))?;
        let entry = &self.query.relations[i];
        let table = self.stats.table(id).cloned().unwrap_or_else(|| TableStats {
            cardinality: DEFAULT_CARD as u64,
            ..Default::default()
        });
        let card = table.cardinality as f64;
        let mut renamed_table = TableStats {
            cardinality: table.cardinality,
            ..Default::default()
        };
        let mut ndv = BTreeMap::new();
        for a in &entry.attrs {
            let to = self.rename(id, a);
            ndv.insert(to.clone(), table.ndv(a) as f64);
            renamed_table.distinct.insert(to.clone(), table.ndv(a));
            if let Some(q) = table.quantiles.get(a) {
                renamed_table.quantiles.insert(to, q.clone());
            }
        }
        self.base_tables.insert(id.to_string(), renamed_table);
        let keys = self
            .constraints
            .keys_of(id)
            .into_iter()
            .map(|k| k.iter().map(|a| self.rename(id, a)).collect::<BTreeSet<String>>())
            .filter(|k| k.iter().all(|a| ndv.contains_key(a)))
            .collect();
        Ok(Est { card, ndv, keys }.cap())
    }

    pub fn get(&mut self, id: &str) -> Result<Est> {
        if let Some(e) = self.env.get(id) {
            return Ok(e.clone());
        }
        let e = self.base(id)?;
        self.env.insert(id.to_string(), e.clone());
        Ok(e)
    }

    fn project(&self, e: &Est, p: &Projection) -> Est {
        let keep: BTreeSet<String> = p.attrs.iter().cloned().collect();
        let mut keys: KeySet = e.keys.iter().filter(|k| k.is_subset(&keep)).cloned().collect();
        let card = if p.aggregate && keys.is_empty() {
            let prod: f64 = keep.iter().map(|a| e.ndv(a)).product();
            e.card.min(prod)
        } else {
            e.card
        };
        if p.aggregate {
            keys.push(keep.clone());
        }
        let ndv = e.ndv.iter().filter(|(a, _)| keep.contains(*a)).map(|(a, v)| (a.clone(), *v)).collect();
        Est {
            card,
            ndv,
            keys: minimal_keys(keys, 8),
        }
        .cap()
    }

    fn join(&self, l: &Est, r: &Est) -> Est {
        let shared: BTreeSet<String> = l.attrs().intersection(&r.attrs()).cloned().collect();
        let product = l.card * r.card;
        let card = match self.mode {
            CeMode::WorstCase | CeMode::Accurate => {
                let mut c = product;
                if r.keys.iter().any(|k| k.is_subset(&shared)) {
                    c = c.min(l.card);
                }
                if l.keys.iter().any(|k| k.is_subset(&shared)) {
                    c = c.min(r.card);
                }
                c
            }
            CeMode::Estimated => {
                let denom: f64 = shared.iter().map(|a| l.ndv(a).max(r.ndv(a))).product();
                product / denom.max(1.0)
            }
        };
        let mut ndv = l.ndv.clone();
        for (a, v) in &r.ndv {
            let e = ndv.entry(a.clone()).or_insert(*v);
            *e = e.min(*v);
        }
        Est {
            card,
            ndv,
            keys: join_keys(&l.keys, &r.keys, &shared),
        }
        .cap()
    }

    fn semijoin(&self, l: &Est, r: &Est) -> Est {
        let shared: BTreeSet<String> = l.attrs().intersection(&r.attrs()).cloned().collect();
        let card = match self.mode {
            CeMode::Estimated => {
                let sel: f64 = shared.iter().map(|a| (r.ndv(a) / l.ndv(a)).min(1.0)).product();
                l.card * sel
            }
            _ => l.card,
        };
        let mut ndv = l.ndv.clone();
        for a in &shared {
            if let Some(v) = ndv.get_mut(a) {
                *v = v.min(r.ndv(a));
            }
        }
        Est {
            card,
            ndv,
            keys: l.keys.clone(),
        }
        .cap()
    }

    fn select(&self, e: &Est, pred: &Predicate, table: Option<&TableStats>) -> Est {
        if self.mode != CeMode::Estimated {
            return e.clone();
        }
        let mut sel = 1.0;
        let mut ndv = e.ndv.clone();
        for t in &pred.terms {
            let s = match t {
                Term::Cmp { attr, op, rhs: Operand::Lit(v) } => match op {
                    CmpOp::Eq => {
                        ndv.insert(attr.clone(), 1.0);
                        1.0 / e.ndv(attr)
                    }
                    CmpOp::Ne => 1.0 - 1.0 / e.ndv(attr),
                    _ => table
                        .and_then(|t| t.quantile_fraction(attr, |x| x.compare(v).is_some_and(|o| op.holds(o))))
                        .unwrap_or(1.0 / 3.0),
                },
                Term::Cmp { attr, op, rhs: Operand::Attr(b) } => match op {
                    CmpOp::Eq => 1.0 / e.ndv(attr).max(e.ndv(b)),
                    _ => 1.0 / 3.0,
                },
                Term::Between { attr, lo, hi } => table
                    .and_then(|t| {
                        t.quantile_fraction(attr, |x| {
                            x.compare(lo).is_some_and(|o| o.is_ge()) && x.compare(hi).is_some_and(|o| o.is_le())
                        })
                    })
                    .unwrap_or(0.25),
            };
            sel *= s;
        }
        Est {
            card: e.card * sel,
            ndv,
            keys: e.keys.clone(),
        }
        .cap()
    }

    fn operand(&mut self, i: &Input) -> Result<(Est, f64, bool)> {
        let e = self.get(&i.rel)?;
        let raw = e.card;
        Ok(match &i.project {
            Some(p) => (self.project(&e, p), raw, true),
            None => (e, raw, false),
        })
    }

    /// Estimates one step and records its output.
    pub fn step(&mut self, step: &Step) -> Result<StepEst> {
        let mut se = StepEst::default();
        let out = match &step.instr {
            Instruction::Join { lhs, rhs, keep, .. } => {
                let (l, lraw, lp) = self.operand(lhs)?;
                let (r, rraw, rp) = self.operand(rhs)?;
                se.inputs = vec![lraw, rraw];
                if lp || rp {
                    se.operands = vec![l.card, r.card];
                }
                let j = self.join(&l, &r);
                se.join_rows = Some(j.card);
                match keep {
                    Some(p) => self.project(&j, p),
                    None => j,
                }
            }
            Instruction::Semijoin { lhs, rhs, .. } => {
                let l = self.get(lhs)?;
                let r = self.get(rhs)?;
                se.inputs = vec![l.card, r.card];
                self.semijoin(&l, &r)
            }
            Instruction::Project { src, keep, .. } => {
                let e = self.get(src)?;
                se.inputs = vec![e.card];
                self.project(&e, keep)
            }
            Instruction::Select { src, predicate, .. } => {
                let e = self.get(src)?;
                se.inputs = vec![e.card];
                let table = self.base_tables.get(src).cloned();
                self.select(&e, predicate, table.as_ref())
            }
            Instruction::Materialize { src, one, .. } => {
                let e = self.get(src)?;
                se.inputs = vec![e.card];
                if *one {
                    let all = Projection::group(e.ndv.keys().cloned().collect());
                    self.project(&e, &all)
                } else {
                    e
                }
            }
        };
        se.out = out.card;
        self.env.insert(step.instr.dst().to_string(), out);
        Ok(se)
    }
}

/// Scores `plan`. Accurate mode uses `dry` for exact sizes and falls back to
/// estimation without one. `query` supplies base schemas.
pub fn estimate_cost(
    plan: &PlanIR,
    query: &ConjunctiveQuery,
    stats: &Stats,
    constraints: &SchemaConstraints,
    dry: Option<&dyn DryRun>,
) -> Result<CostEstimate> {
    if let (CeMode::Accurate, Some(d)) = (stats.mode, dry) {
        let report = d.dry_run(plan)?;
        return Ok(CostEstimate {
            mode: CeMode::Accurate,
            total_rows: report.rows_touched as f64,
            max_intermediate: report.max_intermediate as f64,
            ops: report.ops,
        });
    }
    let mode = if stats.mode == CeMode::Accurate {
        CeMode::Estimated
    } else {
        stats.mode
    };
    let mut est = Estimator::new(query, stats, constraints, &plan.renamed, mode);
    let mut total = 0.0;
    let mut max: f64 = 0.0;
    for s in &plan.steps {
        let se = est.step(s)?;
        total += se.touched();
        max = max.max(se.peak());
    }
    Ok(CostEstimate {
        mode,
        total_rows: total,
        max_intermediate: max,
        ops: count_ops(plan),
    })
}

/// Estimated cardinality of every id after running `steps`.
pub(crate) fn estimate_ids(
    steps: &[Step],
    query: &ConjunctiveQuery,
    stats: &Stats,
    constraints: &SchemaConstraints,
    renamed: &BTreeMap<String, Vec<(String, String)>>,
) -> Result<HashMap<String, Est>> {
    let mode = match stats.mode {
        CeMode::Accurate => CeMode::Estimated,
        m => m,
    };
    let mut est = Estimator::new(query, stats, constraints, renamed, mode);
    for s in steps {
        est.step(s)?;
    }
    Ok(est.env)
}
