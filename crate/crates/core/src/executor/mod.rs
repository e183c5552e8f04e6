//! Plan interpreter with per-step size instrumentation, plus the reference
//! oracle used to check it.

mod ops;
pub mod oracle;

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

pub use ops::{exec_join, exec_project_aggregate, exec_select, exec_semijoin};
pub use oracle::{full_join_size, oracle, participation};

use crate::error::{Error, Result};
use crate::model::{AnnotatedRelation, Database, Semiring};
use crate::planner::{count_ops, Input, Instruction, OpCounts, Phase, PlanIR, Projection};

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub op: &'static str,
    pub dst: String,
    pub phase: Phase,
    /// Sizes of the relations read, before operand projections.
    pub inputs: Vec<usize>,
    /// Sizes after operand projections (joins only).
    pub operands: Vec<usize>,
    /// Join output before the fused projection.
    pub join_rows: Option<usize>,
    pub out_rows: usize,
}

impl StepReport {
    /// Largest relation this step materialized.
    pub fn peak(&self) -> usize {
        self.out_rows.max(self.join_rows.unwrap_or(0))
    }

    /// Rows read plus rows produced, counting operand projections and the
    /// unprojected join output.
    pub fn touched(&self) -> usize {
        self.inputs.iter().sum::<usize>() + self.operands.iter().sum::<usize>() + self.join_rows.unwrap_or(0) + self.out_rows
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExecutionReport {
    pub steps: Vec<StepReport>,
    /// Tuples in the distinct base relations the plan reads.
    pub input_rows: usize,
    pub result_rows: usize,
    pub max_intermediate: usize,
    pub rows_touched: usize,
    pub ops: OpCounts,
    pub wall_micros: u128,
}

impl ExecutionReport {
    /// Line-oriented `key=value` rendering.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps={}", self.steps.len());
        let _ = writeln!(s, "input_rows={}", self.input_rows);
        let _ = writeln!(s, "result_rows={}", self.result_rows);
        let _ = writeln!(s, "max_intermediate={}", self.max_intermediate);
        let _ = writeln!(s, "rows_touched={}", self.rows_touched);
        let _ = writeln!(
            s,
            "joins={} semijoins={} projections={} selections={} materializations={}",
            self.ops.joins, self.ops.semijoins, self.ops.projections, self.ops.selections, self.ops.materializations
        );
        let _ = writeln!(s, "wall_micros={}", self.wall_micros);
        for st in &self.steps {
            let ins: Vec<String> = st.inputs.iter().map(usize::to_string).collect();
            let _ = write!(s, "step[{}] op={} dst={} phase={:?} in={}", st.index, st.op, st.dst, st.phase, ins.join(","));
            if let Some(j) = st.join_rows {
                let _ = write!(s, " join_rows={j}");
            }
            let _ = writeln!(s, " out={}", st.out_rows);
        }
        s
    }
}

fn apply_projection<S: Semiring>(rel: &AnnotatedRelation<S>, p: &Projection) -> Result<AnnotatedRelation<S>> {
    let keep: Vec<&str> = p.attrs.iter().map(String::as_str).collect();
    let out = if p.aggregate {
        rel.group_aggregate(&keep)
    } else {
        rel.project_columns(&keep)
    };
    out.map_err(|e| match e {
        Error::UnknownAttribute(a) => Error::SchemaMismatch(format!("projection onto missing attribute {a}")),
        other => other,
    })
}

struct Env<'a, S: Semiring> {
    db: &'a Database<S>,
    derived: HashMap<String, Cow<'a, AnnotatedRelation<S>>>,
}

impl<'a, S: Semiring> Env<'a, S> {
    fn get(&self, id: &str) -> Result<&AnnotatedRelation<S>> {
        if let Some(r) = self.derived.get(id) {
            return Ok(r.as_ref());
        }
        self.db.get(id).ok_or_else(|| Error::MissingRelation(id.to_string()))
    }
}

/// Executes `plan` over `db`.
pub fn run_plan<S: Semiring>(plan: &PlanIR, db: &Database<S>) -> Result<(AnnotatedRelation<S>, ExecutionReport)> {
    execute(plan, db, None)
}

/// [`run_plan`] that also returns every step's output, in step order.
pub fn run_plan_traced<S: Semiring>(
    plan: &PlanIR,
    db: &Database<S>,
) -> Result<(AnnotatedRelation<S>, ExecutionReport, Vec<AnnotatedRelation<S>>)> {
    let mut views = Vec::with_capacity(plan.steps.len());
    let (r, report) = execute(plan, db, Some(&mut views))?;
    Ok((r, report, views))
}

fn execute<S: Semiring>(
    plan: &PlanIR,
    db: &Database<S>,
    mut trace: Option<&mut Vec<AnnotatedRelation<S>>>,
) -> Result<(AnnotatedRelation<S>, ExecutionReport)> {
    let start = Instant::now();
    let mut env = Env {
        db,
        derived: HashMap::new(),
    };
    let defined: BTreeSet<&str> = plan.steps.iter().map(|s| s.instr.dst()).collect();
    let mut bases: BTreeSet<&str> = BTreeSet::new();
    for s in &plan.steps {
        for r in s.instr.reads() {
            if !defined.contains(r) {
                bases.insert(r);
            }
        }
    }
    if plan.steps.is_empty() {
        bases.insert(&plan.result);
    }
    let mut input_rows = 0;
    for b in &bases {
        let rel = db.get(b).ok_or_else(|| Error::MissingRelation((*b).to_string()))?;
        input_rows += rel.len();
        let strip = plan.unannotated.contains(*b) && rel.is_annotated();
        let renames = plan.renamed.get(*b).filter(|r| !r.is_empty());
        if strip || renames.is_some() {
            let mut r = rel.clone();
            if strip {
                r = r.strip_annotations();
            }
            if let Some(renames) = renames {
                r = r.rename_attrs(renames)?;
            }
            env.derived.insert((*b).to_string(), Cow::Owned(r));
        }
    }
    let mut steps = Vec::with_capacity(plan.steps.len());
    for (index, step) in plan.steps.iter().enumerate() {
        let reads: Vec<usize> = step
            .instr
            .reads()
            .iter()
            .map(|r| env.get(r).map(AnnotatedRelation::len))
            .collect::<Result<_>>()?;
        let mut operands = Vec::new();
        let mut join_rows = None;
        let out = match &step.instr {
            Instruction::Join { lhs, rhs, keep, .. } => {
                let side = |i: &Input| -> Result<Cow<'_, AnnotatedRelation<S>>> {
                    let base = env.get(&i.rel)?;
                    Ok(match &i.project {
                        Some(p) => Cow::Owned(apply_projection(base, p)?),
                        None => Cow::Borrowed(base),
                    })
                };
                let l = side(lhs)?;
                let r = side(rhs)?;
                if lhs.project.is_some() || rhs.project.is_some() {
                    operands = vec![l.len(), r.len()];
                }
                let j = exec_join(&l, &r);
                join_rows = Some(j.len());
                match keep {
                    Some(p) => apply_projection(&j, p)?,
                    None => j,
                }
            }
            Instruction::Semijoin { lhs, rhs, .. } => exec_semijoin(env.get(lhs)?, env.get(rhs)?),
            Instruction::Project { src, keep, .. } => apply_projection(env.get(src)?, keep)?,
            Instruction::Select { src, predicate, .. } => exec_select(env.get(src)?, predicate).map_err(|e| match e {
                Error::UnknownAttribute(a) => Error::SchemaMismatch(format!("selection on missing attribute {a}")),
                other => other,
            })?,
            Instruction::Materialize { src, one, .. } => {
                let r = env.get(src)?;
                if *one {
                    r.group_aggregate(&r.attr_names())?.annotate_default()
                } else {
                    r.clone()
                }
            }
        };
        let dst = step.instr.dst().to_string();
        steps.push(StepReport {
            index,
            op: step.instr.op_name(),
            dst: dst.clone(),
            phase: step.phase,
            inputs: reads,
            operands,
            join_rows,
            out_rows: out.len(),
        });
        let out = out.with_name(dst.clone());
        if let Some(t) = trace.as_deref_mut() {
            t.push(out.clone());
        }
        env.derived.insert(dst, Cow::Owned(out));
    }
    let result = env.get(&plan.result)?.clone();
    let result = if result.is_annotated() {
        result
    } else {
        result.annotate_default()
    };
    let report = ExecutionReport {
        max_intermediate: steps.iter().map(StepReport::peak).max().unwrap_or(0),
        rows_touched: steps.iter().map(StepReport::touched).sum(),
        result_rows: result.len(),
        input_rows,
        ops: count_ops(plan),
        steps,
        wall_micros: start.elapsed().as_micros(),
    };
    Ok((result, report))
}

/// Measured intermediate sizes against the output-sensitive limits.
#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub n: usize,
    pub m: usize,
    pub f: u64,
    /// Largest relation built outside the merge phase.
    pub reduction_max: usize,
    /// Largest relation built by the merge phase (joins before projection).
    pub merge_max: usize,
    /// `min(N·M, F)`, or `M` when free-connex.
    pub merge_limit: u64,
    pub holds: bool,
}

/// Checks a report: reduction-phase relations stay within `N`, merge-phase
/// relations within `min(N·M, F)` (`M` for free-connex queries). `F` is the
/// full-join size and `M` the output size.
pub fn measure_bounds(report: &ExecutionReport, n: usize, m: usize, f: u64, free_connex: bool) -> BoundCheck {
    let merge_limit = if free_connex {
        m as u64
    } else {
        ((n as u64).saturating_mul(m as u64)).min(f)
    };
    let mut reduction_max = 0;
    let mut merge_max = 0;
    for s in &report.steps {
        match s.phase {
            Phase::SecondRound => merge_max = merge_max.max(s.peak()),
            _ => reduction_max = reduction_max.max(s.peak()),
        }
    }
    BoundCheck {
        n,
        m,
        f,
        reduction_max,
        merge_max,
        merge_limit,
        holds: reduction_max <= n && merge_max as u64 <= merge_limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{Counting, SumProduct};
    use crate::planner::{plan_with_tree, plan_yannakakis_baseline, Step};

    #[test]
    fn golden_plan_reproduces_worked_result() {
        let q = fixtures::q1();
        let plan = plan_with_tree(&q, &fixtures::t1()).unwrap();
        let (res, report) = run_plan(&plan, &fixtures::appendix_db::<SumProduct>()).unwrap();
        assert!(res.same_as(&fixtures::appendix_result()), "{}", res.render());
        assert_eq!(report.steps.len(), 9);
        assert_eq!(report.input_rows, 18);
        assert_eq!(report.result_rows, 2);
    }

    #[test]
    fn baseline_matches_oracle() {
        let q = fixtures::q1();
        let plan = plan_yannakakis_baseline(&q, &fixtures::t1()).unwrap();
        let db = fixtures::appendix_db::<Counting>();
        let (res, _) = run_plan(&plan, &db).unwrap();
        assert!(res.same_as(&oracle(&q, &db).unwrap()));
    }

    #[test]
    fn merge_of_r5_and_r6_has_dangling_free_rows() {
        let q = fixtures::q1();
        let plan = plan_with_tree(&q, &fixtures::t1()).unwrap();
        let db = fixtures::appendix_db::<SumProduct>();
        let (_, report) = run_plan(&plan, &db).unwrap();
        let r53 = report.steps.iter().find(|s| s.dst == "R5_3").unwrap();
        // (x4, x8) in {(1, ARGENTINA), (2, BRAZIL)}; x4 = 3 has no R1 partner.
        assert_eq!(r53.out_rows, 2);
    }

    #[test]
    fn missing_relation_is_reported() {
        let plan = PlanIR {
            steps: vec![Step {
                instr: Instruction::Semijoin {
                    dst: "A".into(),
                    lhs: "R1".into(),
                    rhs: "Nope".into(),
                },
                phase: Phase::FirstRound,
            }],
            result: "A".into(),
            ..Default::default()
        };
        let err = run_plan(&plan, &fixtures::appendix_db::<Counting>()).unwrap_err();
        assert!(matches!(err, Error::MissingRelation(_)));
    }

    #[test]
    fn projection_onto_missing_attribute_is_schema_mismatch() {
        let plan = PlanIR {
            steps: vec![Step {
                instr: Instruction::Project {
                    dst: "A".into(),
                    src: "R2".into(),
                    keep: Projection::group(vec!["x9".into()]),
                },
                phase: Phase::Final,
            }],
            result: "A".into(),
            ..Default::default()
        };
        let err = run_plan(&plan, &fixtures::appendix_db::<Counting>()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn bounds_split_by_phase() {
        let q = fixtures::q1();
        let db = fixtures::appendix_db::<Counting>();
        let plan = plan_with_tree(&q, &fixtures::t1()).unwrap();
        let (res, report) = run_plan(&plan, &db).unwrap();
        let f = full_join_size(&q, &db, u64::MAX).unwrap();
        let b = measure_bounds(&report, db.input_size(&q), res.len(), f, false);
        assert!(b.holds, "{b:?}");
        assert_eq!(b.merge_limit, 2);
    }
}
