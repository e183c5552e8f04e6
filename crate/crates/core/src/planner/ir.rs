use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Predicate;

/// Which planning stage produced a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Select,
    Fusion,
    Bag,
    FirstRound,
    SecondRound,
    Baseline,
    Binary,
    Final,
}

/// Attribute list of a projection. `aggregate == false` keeps columns
/// without grouping, used once a key makes every group a single tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Projection {
    pub attrs: Vec<String>,
    pub aggregate: bool,
}

impl Projection {
    pub fn group(attrs: Vec<String>) -> Self {
        Self {
            attrs,
            aggregate: true,
        }
    }
}

/// A join operand, optionally projected first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Input {
    pub rel: String,
    pub project: Option<Projection>,
}

impl Input {
    pub fn plain(rel: impl Into<String>) -> Self {
        Self {
            rel: rel.into(),
            project: None,
        }
    }

    pub fn projected(rel: impl Into<String>, attrs: Vec<String>) -> Self {
        Self {
            rel: rel.into(),
            project: Some(Projection::group(attrs)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// `dst <- [π_keep](lhs ⋈ rhs)`.
    Join {
        dst: String,
        lhs: Input,
        rhs: Input,
        keep: Option<Projection>,
    },
    Semijoin {
        dst: String,
        lhs: String,
        rhs: String,
    },
    Project {
        dst: String,
        src: String,
        keep: Projection,
    },
    Select {
        dst: String,
        src: String,
        predicate: Predicate,
    },
    /// Copy of `src`; with `one` set, duplicates collapse and every
    /// annotation becomes `one`.
    Materialize {
        dst: String,
        src: String,
        one: bool,
    },
}

impl Instruction {
    pub fn dst(&self) -> &str {
        match self {
            Instruction::Join { dst, .. }
            | Instruction::Semijoin { dst, .. }
            | Instruction::Project { dst, .. }
            | Instruction::Select { dst, .. }
            | Instruction::Materialize { dst, .. } => dst,
        }
    }

    pub(crate) fn set_dst(&mut self, name: String) {
        match self {
            Instruction::Join { dst, .. }
            | Instruction::Semijoin { dst, .. }
            | Instruction::Project { dst, .. }
            | Instruction::Select { dst, .. }
            | Instruction::Materialize { dst, .. } => *dst = name,
        }
    }

    pub fn reads(&self) -> Vec<&str> {
        match self {
            Instruction::Join { lhs, rhs, .. } => vec![&lhs.rel, &rhs.rel],
            Instruction::Semijoin { lhs, rhs, .. } => vec![lhs, rhs],
            Instruction::Project { src, .. }
            | Instruction::Select { src, .. }
            | Instruction::Materialize { src, .. } => vec![src],
        }
    }

    /// Replaces every read of `from` with `to`.
    pub(crate) fn rename_reads(&mut self, from: &str, to: &str) {
        let fix = |s: &mut String| {
            if s == from {
                *s = to.to_string();
            }
        };
        match self {
            Instruction::Join { lhs, rhs, .. } => {
                fix(&mut lhs.rel);
                fix(&mut rhs.rel);
            }
            Instruction::Semijoin { lhs, rhs, .. } => {
                fix(lhs);
                fix(rhs);
            }
            Instruction::Project { src, .. }
            | Instruction::Select { src, .. }
            | Instruction::Materialize { src, .. } => fix(src),
        }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Instruction::Join { .. } => "join",
            Instruction::Semijoin { .. } => "semijoin",
            Instruction::Project { .. } => "project",
            Instruction::Select { .. } => "select",
            Instruction::Materialize { .. } => "materialize",
        }
    }
}

fn fmt_input(i: &Input, out: &mut String) {
    match &i.project {
        None => out.push_str(&i.rel),
        Some(p) => {
            let _ = write!(out, "{}({}, [{}])", proj_word(p), i.rel, p.attrs.join(", "));
        }
    }
}

fn proj_word(p: &Projection) -> &'static str {
    if p.aggregate {
        "PROJECT"
    } else {
        "COLUMNS"
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        match self {
            Instruction::Join { dst, lhs, rhs, keep } => {
                let _ = write!(s, "{dst} <- ");
                let mut join = String::from("JOIN(");
                fmt_input(lhs, &mut join);
                join.push_str(", ");
                fmt_input(rhs, &mut join);
                join.push(')');
                match keep {
                    None => s.push_str(&join),
                    Some(p) => {
                        let _ = write!(s, "{}({join}, [{}])", proj_word(p), p.attrs.join(", "));
                    }
                }
            }
            Instruction::Semijoin { dst, lhs, rhs } => {
                let _ = write!(s, "{dst} <- SEMIJOIN({lhs}, {rhs})");
            }
            Instruction::Project { dst, src, keep } => {
                let _ = write!(s, "{dst} <- {}({src}, [{}])", proj_word(keep), keep.attrs.join(", "));
            }
            Instruction::Select { dst, src, predicate } => {
                let _ = write!(s, "{dst} <- SELECT({src}, {predicate})");
            }
            Instruction::Materialize { dst, src, one } => {
                let suffix = if *one { ", ONE" } else { "" };
                let _ = write!(s, "{dst} <- MATERIALIZE({src}{suffix})");
            }
        }
        f.write_str(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub instr: Instruction,
    pub phase: Phase,
}

/// An ordered, single-assignment list of relational instructions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanIR {
    pub steps: Vec<Step>,
    pub result: String,
    /// Base relations read without annotations (pruned).
    pub unannotated: BTreeSet<String>,
    /// Column renames applied when a base relation is read: `from -> to`.
    pub renamed: BTreeMap<String, Vec<(String, String)>>,
}

/// Atomic operator tallies; projections fused into joins count separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub joins: usize,
    pub semijoins: usize,
    pub projections: usize,
    pub selections: usize,
    pub materializations: usize,
}

pub fn count_ops(plan: &PlanIR) -> OpCounts {
    let mut c = OpCounts::default();
    for s in &plan.steps {
        match &s.instr {
            Instruction::Join { lhs, rhs, keep, .. } => {
                c.joins += 1;
                c.projections += [lhs.project.is_some(), rhs.project.is_some(), keep.is_some()]
                    .iter()
                    .filter(|b| **b)
                    .count();
            }
            Instruction::Semijoin { .. } => c.semijoins += 1,
            Instruction::Project { .. } => c.projections += 1,
            Instruction::Select { .. } => c.selections += 1,
            Instruction::Materialize { .. } => c.materializations += 1,
        }
    }
    c
}

impl PlanIR {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One instruction per line plus a closing `RETURN` line.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(out, "{}", s.instr);
        }
        let _ = writeln!(out, "RETURN {}", self.result);
        out
    }

    /// Renames the last step's output to `name` when it is the result.
    pub(crate) fn name_result(&mut self, name: &str) {
        let Some((last, earlier)) = self.steps.split_last_mut() else { return };
        if last.instr.dst() == self.result
            && !earlier.iter().any(|s| s.instr.reads().contains(&name) || s.instr.dst() == name)
        {
            last.instr.set_dst(name.to_string());
            self.result = name.to_string();
        }
    }

    /// Drops step `idx`, redirecting later reads of its output to `to`.
    pub(crate) fn remove_step(&mut self, idx: usize, to: &str) {
        let old = self.steps.remove(idx).instr.dst().to_string();
        for s in &mut self.steps[idx..] {
            s.instr.rename_reads(&old, to);
        }
        if self.result == old {
            self.result = to.to_string();
        }
    }

    /// Checks single assignment and that each read is defined earlier or is
    /// a base relation.
    pub fn validate(&self, bases: &BTreeSet<String>) -> Result<()> {
        let mut defined: HashSet<&str> = HashSet::new();
        for s in &self.steps {
            for r in s.instr.reads() {
                if !defined.contains(r) && !bases.contains(r) {
                    return Err(Error::MissingRelation(format!("{r} read before written")));
                }
            }
            let d = s.instr.dst();
            if bases.contains(d) || !defined.insert(d) {
                return Err(Error::SchemaMismatch(format!("`{d}` written twice")));
            }
        }
        if !defined.contains(self.result.as_str()) && !bases.contains(&self.result) {
            return Err(Error::MissingRelation(self.result.clone()));
        }
        Ok(())
    }

    /// Attribute lists of every id, derived from base schemas.
    pub fn schemas(&self, base: &dyn Fn(&str) -> Option<Vec<String>>) -> Result<HashMap<String, Vec<String>>> {
        let mut out: HashMap<String, Vec<String>> = HashMap::new();
        let lookup = |out: &HashMap<String, Vec<String>>, id: &str| -> Result<Vec<String>> {
            out.get(id)
                .cloned()
                .or_else(|| base(id))
                .ok_or_else(|| Error::MissingRelation(id.to_string()))
        };
        for s in &self.steps {
            let attrs = match &s.instr {
                Instruction::Join { lhs, rhs, keep, .. } => match keep {
                    Some(p) => p.attrs.clone(),
                    None => {
                        let side = |i: &Input| -> Result<Vec<String>> {
                            Ok(match &i.project {
                                Some(p) => p.attrs.clone(),
                                None => lookup(&out, &i.rel)?,
                            })
                        };
                        let mut l = side(lhs)?;
                        for a in side(rhs)? {
                            if !l.contains(&a) {
                                l.push(a);
                            }
                        }
                        l
                    }
                },
                Instruction::Semijoin { lhs, .. } => lookup(&out, lhs)?,
                Instruction::Project { keep, .. } => keep.attrs.clone(),
                Instruction::Select { src, .. } | Instruction::Materialize { src, .. } => {
                    lookup(&out, src)?
                }
            };
            out.insert(s.instr.dst().to_string(), attrs);
        }
        if !out.contains_key(&self.result) {
            let r = lookup(&out, &self.result)?;
            out.insert(self.result.clone(), r);
        }
        Ok(out)
    }
}

impl fmt::Display for PlanIR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Fresh-name source: versions `R_1, R_2, ...` per label and `J1, J2, ...`
/// for baseline joins.
#[derive(Clone, Debug, Default)]
pub struct Names {
    taken: HashSet<String>,
    versions: HashMap<String, usize>,
    joins: usize,
}

impl Names {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(reserved: I) -> Self {
        let mut n = Self::default();
        for r in reserved {
            n.taken.insert(r.into());
        }
        n.taken.insert("Q".into());
        n
    }

    pub fn reserve(&mut self, name: &str) {
        self.taken.insert(name.to_string());
    }

    pub fn version(&mut self, label: &str) -> String {
        loop {
            let k = self.versions.entry(label.to_string()).or_insert(0);
            *k += 1;
            let name = format!("{label}_{k}");
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    pub fn join(&mut self) -> String {
        loop {
            self.joins += 1;
            let name = format!("J{}", self.joins);
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    pub fn fresh(&mut self, stem: &str) -> String {
        if self.taken.insert(stem.to_string()) {
            return stem.to_string();
        }
        self.version(stem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_counts_zero() {
        assert_eq!(count_ops(&PlanIR::default()), OpCounts::default());
    }

    #[test]
    fn renders_fused_projections() {
        let i = Instruction::Join {
            dst: "R5_3".into(),
            lhs: Input::plain("R5_2"),
            rhs: Input::projected("R6_1", vec!["x7".into()]),
            keep: Some(Projection::group(vec!["x4".into(), "x8".into()])),
        };
        assert_eq!(i.to_string(), "R5_3 <- PROJECT(JOIN(R5_2, PROJECT(R6_1, [x7])), [x4, x8])");
    }

    #[test]
    fn names_skip_reserved() {
        let mut n = Names::new(["R1_1", "J1"]);
        assert_eq!(n.version("R1"), "R1_2");
        assert_eq!(n.join(), "J2");
        assert_eq!(n.fresh("B1"), "B1");
        assert_eq!(n.fresh("B1"), "B1_1");
    }

    #[test]
    fn validate_rejects_double_write() {
        let step = |d: &str, s: &str| Step {
            instr: Instruction::Materialize { dst: d.into(), src: s.into(), one: false },
            phase: Phase::Bag,
        };
        let bases = BTreeSet::from(["R".to_string()]);
        let ok = PlanIR { steps: vec![step("A", "R")], result: "A".into(), ..Default::default() };
        assert!(ok.validate(&bases).is_ok());
        let bad = PlanIR { steps: vec![step("A", "R"), step("A", "R")], result: "A".into(), ..Default::default() };
        assert!(bad.validate(&bases).is_err());
        let undefined = PlanIR { steps: vec![step("A", "Z")], result: "A".into(), ..Default::default() };
        assert!(undefined.validate(&bases).is_err());
    }
}
