use super::*;
use crate::error::Error;
use crate::fixtures;

fn lines(plan: &PlanIR) -> Vec<String> {
    plan.text().lines().map(str::to_string).collect()
}

#[test]
fn q4_folds_into_two_steps() {
    let tree = JoinTree::new(vec![None, Some(0)]).unwrap();
    let plan = plan_with_tree(&fixtures::q4(), &tree).unwrap();
    assert_eq!(lines(&plan), ["R1_1 <- JOIN(R1, PROJECT(R2, [x2]))", "Q <- PROJECT(R1_1, [x1])", "RETURN Q"]);
}

#[test]
fn q1_over_t1_golden_text() {
    let plan = plan_with_tree(&fixtures::q1(), &fixtures::t1()).unwrap();
    let want = "\
R1_1 <- JOIN(R1, PROJECT(R2, [x2]))
R3_1 <- JOIN(R3, PROJECT(R4, [x3]))
R1_2 <- JOIN(R1_1, R3_1)
R1_3 <- PROJECT(R1_2, [x1, x2, x4])
R5_1 <- SEMIJOIN(R5, R1_3)
R5_2 <- SEMIJOIN(R5_1, R6)
R6_1 <- SEMIJOIN(R6, R5_2)
R5_3 <- PROJECT(JOIN(R5_2, R6_1), [x4, x8])
Q <- PROJECT(JOIN(R5_3, R1_3), [x1, x2, x8])
RETURN Q
";
    assert_eq!(plan.text(), want);
    assert_eq!(plan.len(), 9);
    let phases: Vec<Phase> = plan.steps.iter().map(|s| s.phase).collect();
    assert_eq!(phases.iter().filter(|p| **p == Phase::FirstRound).count(), 6);
    assert_eq!(phases.iter().filter(|p| **p == Phase::SecondRound).count(), 3);
}

#[test]
fn q1_baseline_golden_text() {
    let plan = plan_yannakakis_baseline(&fixtures::q1(), &fixtures::t1()).unwrap();
    let want = "\
R1_1 <- SEMIJOIN(R1, R2)
R3_1 <- SEMIJOIN(R3, R4)
R1_2 <- SEMIJOIN(R1_1, R3_1)
R5_1 <- SEMIJOIN(R5, R1_2)
R5_2 <- SEMIJOIN(R5_1, R6)
R6_1 <- SEMIJOIN(R6, R5_2)
R1_3 <- SEMIJOIN(R1_2, R5_2)
R3_2 <- SEMIJOIN(R3_1, R1_3)
R4_1 <- SEMIJOIN(R4, R3_2)
R2_1 <- SEMIJOIN(R2, R1_3)
J1 <- JOIN(PROJECT(R2_1, [x2]), R1_3)
J2 <- JOIN(PROJECT(R4_1, [x3]), R3_2)
J3 <- JOIN(J1, J2)
J4 <- JOIN(PROJECT(J3, [x1, x2, x4]), R5_2)
J5 <- JOIN(J4, R6_1)
Q <- PROJECT(J5, [x1, x2, x8])
RETURN Q
";
    assert_eq!(plan.text(), want);
    assert_eq!(plan.len(), 16);
}

#[test]
fn semijoin_counts_three_versus_ten() {
    let q = fixtures::q1();
    let y = count_ops(&plan_with_tree(&q, &fixtures::t1()).unwrap());
    let b = count_ops(&plan_yannakakis_baseline(&q, &fixtures::t1()).unwrap());
    assert_eq!((y.semijoins, b.semijoins), (3, 10));
    assert_eq!(y.joins, 5);
    assert_eq!(b.joins, 5);
}

#[test]
fn q2_over_t2_reduces_then_merges() {
    let q = fixtures::q2();
    let (steps, mut st) = plan_first_round(&q, &fixtures::t2()).unwrap();
    let text: Vec<String> = steps.iter().map(|s| s.instr.to_string()).collect();
    assert_eq!(
        text,
        [
            "R1_1 <- SEMIJOIN(R1, R2)",
            "R1_2 <- JOIN(R1_1, R3)",
            "R1_3 <- SEMIJOIN(R1_2, R4)",
            "R5_1 <- JOIN(R5, PROJECT(R6, [x7]))",
            "R1_4 <- JOIN(R1_3, PROJECT(R5_1, [x4]))",
            "R1_5 <- PROJECT(R1_4, [x1, x2, x3])",
        ]
    );
    let reduced: Vec<(String, Vec<String>)> = st.reduced().into_iter().map(|(l, _, a)| (l, a)).collect();
    let want = |l: &str, a: &[&str]| (l.to_string(), a.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    assert_eq!(
        reduced,
        [want("R1", &["x1", "x2", "x3"]), want("R2", &["x2", "x5"]), want("R4", &["x3", "x6"])]
    );
    let second = plan_second_round(&mut st, QueryClass::FreeConnex).unwrap();
    let text: Vec<String> = second.iter().map(|s| s.instr.to_string()).collect();
    assert_eq!(text, ["R1_6 <- JOIN(R1_5, R2)", "R1_7 <- JOIN(R1_6, R4)"]);
    assert!(second.iter().all(|s| matches!(s.instr, Instruction::Join { keep: None, .. })));
}

#[test]
fn relation_dominated_needs_no_second_round() {
    let plan = plan_with_tree(&fixtures::q3(), &fixtures::t3()).unwrap();
    assert!(plan.steps.iter().all(|s| s.phase == Phase::FirstRound));
    assert_eq!(plan.len(), 6);
    assert_eq!(plan.steps.last().unwrap().instr.to_string(), "Q <- PROJECT(R1_3, [x1])");
    assert_eq!(count_ops(&plan).semijoins, 0);
}

#[test]
fn t3_plan_for_q1_is_shorter() {
    let plan = plan_with_tree(&fixtures::q1(), &fixtures::t3()).unwrap();
    assert_eq!(plan.len(), 8);
    assert_eq!(count_ops(&plan).semijoins, 2);
}

#[test]
fn reduction_preconditions() {
    let (_, mut st) = plan_first_round(&fixtures::q1(), &fixtures::t1()).unwrap();
    assert!(matches!(plan_reduction(&mut st, 0, 4), Err(Error::NotDanglingFree(_))));
    assert!(matches!(plan_reduction(&mut st, 4, 0), Err(Error::NotReducible(..))));
    assert_eq!(st.find_reducible_pair(), None);
    // R2 was folded into R1 during the first round.
    assert!(plan_reduction(&mut st, 4, 1).is_err());
}

#[test]
fn rejects_trees_that_break_connectedness() {
    let chain = JoinTree::new(vec![None, Some(0), Some(1), Some(2), Some(3), Some(4)]).unwrap();
    assert!(matches!(plan_with_tree(&fixtures::q1(), &chain), Err(Error::InvalidTree(_))));
    let short = JoinTree::new(vec![None, Some(0)]).unwrap();
    assert!(matches!(plan_yannakakis_baseline(&fixtures::q1(), &short), Err(Error::InvalidTree(_))));
}

#[test]
fn plans_are_single_assignment() {
    let q = fixtures::q1();
    let bases: BTreeSet<String> = q.relations.iter().map(|r| r.name.clone()).collect();
    for tree in [fixtures::t1(), fixtures::t2(), fixtures::t3()] {
        plan_with_tree(&q, &tree).unwrap().validate(&bases).unwrap();
        plan_yannakakis_baseline(&q, &tree).unwrap().validate(&bases).unwrap();
    }
    plan_binary_join(&q).validate(&bases).unwrap();
}

#[test]
fn selections_are_pushed_first() {
    let mut q = fixtures::q4();
    q.selections.insert("R2".into(), crate::model::Predicate::cmp("x3", crate::model::CmpOp::Ge, 2i64));
    let tree = JoinTree::new(vec![None, Some(0)]).unwrap();
    let plan = plan_with_tree(&q, &tree).unwrap();
    assert_eq!(plan.steps[0].instr.to_string(), "R2_1 <- SELECT(R2, x3 >= 2)");
    assert_eq!(plan.steps[1].instr.to_string(), "R1_1 <- JOIN(R1, PROJECT(R2_1, [x2]))");
}
