use std::path::Path;

use yplus::emitter::{emit_sql, render_script, Dialect};
use yplus::executor::{oracle, run_plan};
use yplus::fixtures;
use yplus::gen::{self, QueryShape};
use yplus::load::{load_database, write_csv};
use yplus::model::{AnnotationSource, Database, SumProduct};
use yplus::optimizer::{choose_plan, collect_stats, CeMode, OptimizerConfig, SchemaConstraints};
use yplus::par::Parallelism;
use yplus::planner::plan;
use yplus::queryfile::parse_query_file;

fn cli_queries() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/queries")
}

#[test]
fn query_file_to_result() {
    let qf = parse_query_file(&cli_queries().join("q1.query")).unwrap();
    let db: Database<SumProduct> = load_database(&qf.query, Some(&cli_queries().join("appendix"))).unwrap();
    let p = plan(&qf.query).unwrap();
    let (res, report) = run_plan(&p, &db).unwrap();
    assert!(res.same_as(&fixtures::appendix_result()));
    assert_eq!(report.result_rows, 2);
    let sql = render_script(&emit_sql(&p, &qf.query, Dialect::default()).unwrap());
    assert!(sql.contains("GROUP BY"), "{sql}");
}

#[test]
fn csv_round_trip_keeps_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = gen::rng(3);
    let q = gen::random_acyclic_query(
        &mut rng,
        &QueryShape {
            semiring: yplus::model::SemiringKind::SumProduct,
            ..QueryShape::default()
        },
    );
    let db = gen::random_instance::<SumProduct>(&q, 30, 6, 3);
    for e in &q.relations {
        let annot = match &e.annotation {
            AnnotationSource::Column(c) => Some(c.as_str()),
            AnnotationSource::One => None,
        };
        write_csv(db.get(&e.name).unwrap(), &dir.path().join(format!("{}.csv", e.name)), annot).unwrap();
    }
    let back: Database<SumProduct> = load_database(&q, Some(dir.path())).unwrap();
    let (res, _) = run_plan(&plan(&q).unwrap(), &back).unwrap();
    assert!(res.same_as(&oracle(&q, &db).unwrap()));
}

#[test]
fn parallel_scoring_matches_sequential() {
    let mut rng = gen::rng(11);
    for seed in 0..20 {
        let q = gen::random_acyclic_query(&mut rng, &QueryShape::default());
        let db = gen::random_instance::<yplus::model::Counting>(&q, 40, 8, seed);
        let stats = collect_stats(&q, &db, CeMode::Accurate).unwrap();
        let pick = |parallelism| {
            let cfg = OptimizerConfig {
                parallelism,
                ..OptimizerConfig::default()
            };
            choose_plan(&q, &stats, &SchemaConstraints::default(), &cfg, Some(&db)).unwrap()
        };
        let (a, b) = (pick(Parallelism::Sequential), pick(Parallelism::Parallel));
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.candidates.len(), b.candidates.len());
    }
}
