use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use yplus::emitter::{emit_baseline_sql, emit_sql, render_script, Dialect, Materialization, QuoteStyle};
use yplus::executor::{full_join_size, oracle, run_plan, ExecutionReport};
use yplus::gen;
use yplus::hypergraph::{build_hypergraph, classify, gyo_reduce, parse_tree, JoinTree};
use yplus::load::{load_database, write_csv};
use yplus::model::{
    AnnotatedRelation, AnnotationSource, BoolOrAnd, ConjunctiveQuery, Counting, Database, MaxPlus, Semiring,
    SemiringKind, SumProduct,
};
use yplus::optimizer::{choose_plan, collect_stats, CeMode, OptimizerConfig, Stats};
use yplus::planner::{count_ops, plan_binary_join, plan_with_tree, plan_yannakakis_baseline, PlanIR};
use yplus::queryfile::{parse_query_file, QueryFile};

#[derive(Parser)]
#[command(name = "yplus", version, about = "Plan, run and compare conjunctive queries over CSV data")]
struct Cli {
    /// Override the query file's semiring.
    #[arg(long, global = true, value_parser = parse_semiring)]
    semiring: Option<SemiringKind>,
    /// Cardinality estimation used by the optimizer.
    #[arg(long, global = true, value_parser = parse_ce_mode, default_value = "estimated")]
    ce_mode: CeMode,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Join trees enumerated per query.
    #[arg(long, global = true)]
    limit_trees: Option<usize>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PlanArgs {
    query: PathBuf,
    /// Fixed join tree in nested notation, e.g. `R5(R1(R2,R3(R4)),R6)`.
    #[arg(long)]
    tree: Option<String>,
    /// Classic semi-join reduction plan instead.
    #[arg(long)]
    baseline: bool,
    /// Directory holding `{relation}.csv`; defaults to the query file's directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Disable every rewrite rule.
    #[arg(long)]
    no_rules: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Report acyclicity, free-connexity and a witness join tree.
    Classify { query: PathBuf },
    /// Print the plan.
    Plan(PlanArgs),
    /// Execute the plan and print the result with a size report.
    Run(PlanArgs),
    /// Run the two-round plan, the baseline and the optimizer's plan against the oracle.
    Compare {
        query: PathBuf,
        #[arg(long)]
        tree: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the plan as SQL statements.
    EmitSql {
        #[command(flatten)]
        plan: PlanArgs,
        /// One statement over the base tables instead of a plan.
        #[arg(long)]
        single: bool,
        #[arg(long)]
        temp_tables: bool,
        #[arg(long)]
        backticks: bool,
    },
    /// Write a synthetic instance as CSV files.
    Gen {
        kind: GenKind,
        /// Query file (not needed for `star`).
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        rows: usize,
        #[arg(long, default_value_t = 50)]
        domain: i64,
        /// Zipf exponent.
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        /// Copies per referenced key for `k-copy`.
        #[arg(long, default_value_t = 5)]
        copies: usize,
        /// Hub degree for `star`.
        #[arg(long, default_value_t = 1000)]
        degree: usize,
    },
    /// Collect per-relation statistics from CSV data.
    Stats {
        query: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Uniform,
    Zipf,
    Pkfk,
    KCopy,
    Star,
}

fn parse_semiring(s: &str) -> std::result::Result<SemiringKind, String> {
    SemiringKind::parse_name(s).ok_or_else(|| format!("unknown semiring `{s}` (sum_product, count, max_plus, bool)"))
}

fn parse_ce_mode(s: &str) -> std::result::Result<CeMode, String> {
    CeMode::parse_name(s).ok_or_else(|| format!("unknown mode `{s}` (accurate, estimated, worst_case)"))
}

/// Calls `$f::<S>(args)` with `S` matching a semiring kind.
macro_rules! dispatch {
    ($kind:expr, $f:ident ( $($arg:expr),* $(,)? )) => {
        match $kind {
            SemiringKind::SumProduct => $f::<SumProduct>($($arg),*),
            SemiringKind::Counting => $f::<Counting>($($arg),*),
            SemiringKind::MaxPlus => $f::<MaxPlus>($($arg),*),
            SemiringKind::BoolOrAnd => $f::<BoolOrAnd>($($arg),*),
            SemiringKind::Custom => Err(anyhow!("custom semirings are only available through the library")),
        }
    };
}

struct Ctx {
    semiring: Option<SemiringKind>,
    ce_mode: CeMode,
    seed: u64,
    limit_trees: Option<usize>,
    json: bool,
}

impl Ctx {
    fn load_query(&self, path: &Path) -> Result<QueryFile> {
        let mut f = parse_query_file(path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(k) = self.semiring {
            f.query.semiring = k;
        }
        Ok(f)
    }

    fn config(&self, no_rules: bool) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default();
        if let Some(l) = self.limit_trees {
            cfg.tree_limit = l.max(1);
        }
        if no_rules {
            cfg = cfg.without_rules();
        }
        cfg
    }
}

fn data_dir(query: &Path, data: &Option<PathBuf>) -> PathBuf {
    data.clone()
        .unwrap_or_else(|| query.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf))
}

fn names(q: &ConjunctiveQuery) -> Vec<String> {
    q.relations.iter().map(|e| e.name.clone()).collect()
}

/// Left-aligned text table.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().enumerate().map(|(i, c)| format!("{c:<width$}", width = w[i])).collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn annotation_json(a: impl ToString) -> serde_json::Value {
    let s = a.to_string();
    serde_json::from_str(&s).unwrap_or(serde_json::Value::String(s))
}

fn relation_json<S: Semiring>(rel: &AnnotatedRelation<S>) -> serde_json::Value {
    let mut rows: Vec<(Vec<String>, String)> = rel
        .iter()
        .map(|(r, a)| (r.iter().map(ToString::to_string).collect(), a.to_string()))
        .collect();
    rows.sort();
    json!({
        "attributes": rel.attr_names(),
        "rows": rows.into_iter().map(|(t, a)| json!({"tuple": t, "annotation": annotation_json(a)})).collect::<Vec<_>>(),
    })
}

fn tree_for(q: &ConjunctiveQuery, text: Option<&str>) -> Result<JoinTree> {
    match text {
        Some(t) => Ok(parse_tree(t, &names(q))?),
        None => classify(q)
            .tree
            .ok_or_else(|| anyhow!("query is cyclic; a fixed join tree needs an acyclic query")),
    }
}

struct Planned {
    plan: PlanIR,
    /// Notes printed above the plan.
    notes: Vec<String>,
}

/// Fixed-tree plans when `--tree` or `--baseline` is given, else the
/// optimizer's choice with statistics from `db` when available.
fn make_plan<S: Semiring>(
    ctx: &Ctx,
    f: &QueryFile,
    args: &PlanArgs,
    db: Option<&Database<S>>,
) -> Result<Planned> {
    let q = &f.query;
    if args.tree.is_some() || args.baseline {
        let tree = tree_for(q, args.tree.as_deref())?;
        let plan = if args.baseline {
            plan_yannakakis_baseline(q, &tree)?
        } else {
            plan_with_tree(q, &tree)?
        };
        return Ok(Planned {
            plan,
            notes: vec![format!("tree: {}", tree.nested(&names(q)))],
        });
    }
    let stats = match db {
        Some(db) => collect_stats(q, db, ctx.ce_mode)?,
        None => Stats::uniform(q, 1000).with_mode(if ctx.ce_mode == CeMode::Accurate {
            CeMode::Estimated
        } else {
            ctx.ce_mode
        }),
    };
    let dry = db.map(|d| d as &dyn yplus::optimizer::DryRun);
    let c = choose_plan(q, &stats, &f.constraints, &ctx.config(args.no_rules), dry)?;
    let mut notes = vec![
        format!("class: {}", c.class.describe(&names(q))),
        format!("tree: {}", c.tree.nested(&names(&c.query))),
        format!(
            "cost ({}): total_rows={} max_intermediate={} candidates={}",
            c.cost.mode.name(),
            c.cost.total_rows,
            c.cost.max_intermediate,
            c.candidates.len()
        ),
    ];
    if !c.rewrites.is_empty() {
        notes.push(format!("rewrites: {}", c.rewrites.join(", ")));
    }
    if c.truncated {
        notes.push("tree enumeration truncated".into());
    }
    Ok(Planned { plan: c.plan, notes })
}

fn cmd_classify(ctx: &Ctx, path: &Path) -> Result<String> {
    let f = ctx.load_query(path)?;
    let q = &f.query;
    let n = names(q);
    let c = classify(q);
    let gyo = gyo_reduce(&build_hypergraph(q));
    if ctx.json {
        return Ok(json!({
            "class": c.class.describe(&n),
            "acyclic": c.class.is_acyclic(),
            "free_connex": c.class.is_free_connex(),
            "tree": c.tree.as_ref().map(|t| t.nested(&n)),
            "residual": gyo.residual.iter().map(|&i| n[i].clone()).collect::<Vec<_>>(),
        })
        .to_string()
            + "\n");
    }
    let mut out = format!("{}\n", c.class.describe(&n));
    if let Some(t) = &c.tree {
        let _ = writeln!(out, "tree: {}", t.nested(&n));
        if let Some(cx) = t.connex() {
            let members: Vec<&str> = cx.iter().map(|&i| n[i].as_str()).collect();
            let _ = writeln!(out, "connex subset: {}", members.join(", "));
        }
    } else {
        let res: Vec<&str> = gyo.residual.iter().map(|&i| n[i].as_str()).collect();
        let _ = writeln!(out, "residual after ear removal: {}", res.join(", "));
    }
    Ok(out)
}

fn cmd_plan<S: Semiring>(ctx: &Ctx, args: &PlanArgs) -> Result<String> {
    let f = ctx.load_query(&args.query)?;
    let db = match args.data.as_ref() {
        Some(_) => Some(load_database::<S>(&f.query, Some(&data_dir(&args.query, &args.data)))?),
        None => None,
    };
    let p = make_plan(ctx, &f, args, db.as_ref())?;
    if ctx.json {
        let steps: Vec<String> = p.plan.steps.iter().map(|s| s.instr.to_string()).collect();
        return Ok(json!({"notes": p.notes, "steps": steps, "result": p.plan.result, "ops": count_ops(&p.plan)})
            .to_string()
            + "\n");
    }
    let mut out = String::new();
    for n in &p.notes {
        let _ = writeln!(out, "# {n}");
    }
    out.push_str(&p.plan.text());
    if !out.ends_with('\n') {
        out.push('\n');
    }
    Ok(out)
}

fn cmd_run<S: Semiring>(ctx: &Ctx, args: &PlanArgs) -> Result<String> {
    let f = ctx.load_query(&args.query)?;
    let db = load_database::<S>(&f.query, Some(&data_dir(&args.query, &args.data)))?;
    let p = make_plan(ctx, &f, args, Some(&db))?;
    let (rel, report) = run_plan(&p.plan, &db)?;
    let rel = rel.with_name("Result");
    if ctx.json {
        return Ok(json!({"result": relation_json(&rel), "report": report}).to_string() + "\n");
    }
    Ok(format!("{}\n{}", rel.render(), report.to_kv()))
}

struct Row {
    name: &'static str,
    report: ExecutionReport,
    agrees: bool,
    diff: Option<String>,
}

fn cmd_compare<S: Semiring>(ctx: &Ctx, path: &Path, tree: Option<&str>, data: &Option<PathBuf>) -> Result<(String, bool)> {
    let f = ctx.load_query(path)?;
    let q = &f.query;
    let db = load_database::<S>(q, Some(&data_dir(path, data)))?;
    let expected = oracle(q, &db)?;
    let mut plans: Vec<(&'static str, PlanIR)> = Vec::new();
    if classify(q).class.is_acyclic() {
        let t = tree_for(q, tree)?;
        plans.push(("two-round", plan_with_tree(q, &t)?));
        plans.push(("baseline", plan_yannakakis_baseline(q, &t)?));
    } else {
        if tree.is_some() {
            bail!("--tree needs an acyclic query");
        }
        plans.push(("binary-join", plan_binary_join(q)));
    }
    let stats = collect_stats(q, &db, ctx.ce_mode)?;
    let chosen = choose_plan(q, &stats, &f.constraints, &ctx.config(false), Some(&db))?;
    plans.push(("optimized", chosen.plan));
    let mut rows = Vec::new();
    for (name, plan) in plans {
        let (got, report) = run_plan(&plan, &db)?;
        let diff = got.diff(&expected);
        rows.push(Row {
            name,
            report,
            agrees: diff.is_none(),
            diff,
        });
    }
    let ok = rows.iter().all(|r| r.agrees);
    if ctx.json {
        let list: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| json!({"plan": r.name, "agrees": r.agrees, "diff": r.diff, "report": r.report}))
            .collect();
        return Ok((json!({"oracle_rows": expected.len(), "plans": list}).to_string() + "\n", ok));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let o = r.report.ops;
            vec![
                r.name.to_string(),
                r.report.steps.len().to_string(),
                o.joins.to_string(),
                o.semijoins.to_string(),
                o.projections.to_string(),
                r.report.max_intermediate.to_string(),
                r.report.rows_touched.to_string(),
                r.report.result_rows.to_string(),
                if r.agrees { "yes" } else { "NO" }.to_string(),
            ]
        })
        .collect();
    let mut out = format!("oracle: {} rows\n", expected.len());
    out.push_str(&table(
        &["plan", "steps", "joins", "semijoins", "projections", "max_intermediate", "rows_touched", "rows", "agrees"],
        &body,
    ));
    for r in rows.iter().filter(|r| !r.agrees) {
        let _ = writeln!(out, "{}: {}", r.name, r.diff.as_deref().unwrap_or(""));
    }
    Ok((out, ok))
}

fn cmd_emit_sql<S: Semiring>(ctx: &Ctx, args: &PlanArgs, single: bool, dialect: Dialect) -> Result<String> {
    let f = ctx.load_query(&args.query)?;
    if single {
        return Ok(render_script(&[emit_baseline_sql(&f.query, dialect)?]));
    }
    let db = match args.data.as_ref() {
        Some(_) => Some(load_database::<S>(&f.query, Some(&data_dir(&args.query, &args.data)))?),
        None => None,
    };
    let p = make_plan(ctx, &f, args, db.as_ref())?;
    Ok(render_script(&emit_sql(&p.plan, &f.query, dialect)?))
}

fn annot_col(q: &ConjunctiveQuery, name: &str) -> Option<String> {
    q.relations.iter().find(|e| e.name == name).and_then(|e| match &e.annotation {
        AnnotationSource::Column(c) => Some(c.clone()),
        AnnotationSource::One => None,
    })
}

fn write_db<S: Semiring>(q: &ConjunctiveQuery, db: &Database<S>, out: &Path) -> Result<Vec<Vec<String>>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut rows = Vec::new();
    for e in &q.relations {
        let rel = db.require(&e.name)?;
        let path = out.join(format!("{}.csv", e.name));
        write_csv(rel, &path, annot_col(q, &e.name).as_deref())?;
        rows.push(vec![e.name.clone(), rel.len().to_string(), path.display().to_string()]);
    }
    Ok(rows)
}

struct GenArgs<'a> {
    kind: GenKind,
    query: Option<&'a Path>,
    out: &'a Path,
    rows: usize,
    domain: i64,
    skew: f64,
    copies: usize,
    degree: usize,
}

const STAR_QUERY: &str = "\
# Two-hop paths through a hub, counted per source.
semiring count
relation E1(x1, x2)
relation E2(x2, x3)
output x1
";

fn cmd_gen<S: Semiring>(ctx: &Ctx, g: &GenArgs) -> Result<String> {
    let seed = ctx.seed;
    let (q, db): (ConjunctiveQuery, Database<S>) = if let GenKind::Star = g.kind {
        let (q, db) = gen::star_two_path(g.degree);
        std::fs::create_dir_all(g.out)?;
        std::fs::write(g.out.join("star.query"), STAR_QUERY)?;
        let rows = write_db(&q, &db, g.out)?;
        let f = full_join_size(&q, &db, u64::MAX)?;
        return Ok(format!(
            "{}input_rows={} full_join={}\n",
            table(&["relation", "rows", "file"], &rows),
            db.input_size(&q),
            f
        ));
    } else {
        let path = g.query.ok_or_else(|| anyhow!("--query is required for this generator"))?;
        let f = ctx.load_query(path)?;
        let db = match g.kind {
            GenKind::Uniform => gen::uniform_instance::<S>(&f.query, g.rows, g.domain, seed),
            GenKind::Zipf => gen::zipf_instance::<S>(&f.query, g.rows, g.domain.max(1) as u64, g.skew, seed),
            GenKind::Pkfk => gen::pkfk_instance::<S>(&f.query, &f.constraints, g.rows, g.domain, seed),
            GenKind::KCopy => {
                if f.constraints.foreign_keys.is_empty() {
                    bail!("k-copy needs foreign keys in the query file");
                }
                let base = gen::pkfk_instance::<S>(&f.query, &f.constraints, g.rows, g.domain, seed);
                let mut db = Database::new();
                for rel in base.iter() {
                    let parent = f.constraints.foreign_keys.iter().any(|fk| fk.parent == rel.name());
                    db.insert(if parent { gen::k_copy(rel, g.copies) } else { rel.clone() });
                }
                db
            }
            GenKind::Star => unreachable!(),
        };
        (f.query, db)
    };
    let rows = write_db(&q, &db, g.out)?;
    let f = full_join_size(&q, &db, 100_000_000)?;
    Ok(format!(
        "{}input_rows={} full_join={}\n",
        table(&["relation", "rows", "file"], &rows),
        db.input_size(&q),
        f
    ))
}

fn cmd_stats<S: Semiring>(ctx: &Ctx, path: &Path, data: &Option<PathBuf>) -> Result<String> {
    let f = ctx.load_query(path)?;
    let db = load_database::<S>(&f.query, Some(&data_dir(path, data)))?;
    let stats = collect_stats(&f.query, &db, ctx.ce_mode)?;
    if ctx.json {
        return Ok(serde_json::to_string(&stats)? + "\n");
    }
    let rows: Vec<Vec<String>> = stats
        .tables
        .iter()
        .map(|(name, t)| {
            let d: Vec<String> = t.distinct.iter().map(|(a, n)| format!("{a}={n}")).collect();
            vec![name.clone(), t.cardinality.to_string(), d.join(" ")]
        })
        .collect();
    Ok(table(&["relation", "rows", "distinct"], &rows))
}

fn semiring_of(ctx: &Ctx, path: &Path) -> Result<SemiringKind> {
    Ok(ctx.load_query(path)?.query.semiring)
}

fn run(cli: Cli) -> Result<(String, bool)> {
    let ctx = Ctx {
        semiring: cli.semiring,
        ce_mode: cli.ce_mode,
        seed: cli.seed,
        limit_trees: cli.limit_trees,
        json: cli.json,
    };
    let out = match &cli.command {
        Command::Classify { query } => cmd_classify(&ctx, query)?,
        Command::Plan(a) => dispatch!(semiring_of(&ctx, &a.query)?, cmd_plan(&ctx, a))?,
        Command::Run(a) => dispatch!(semiring_of(&ctx, &a.query)?, cmd_run(&ctx, a))?,
        Command::Compare { query, tree, data } => {
            return dispatch!(semiring_of(&ctx, query)?, cmd_compare(&ctx, query, tree.as_deref(), data));
        }
        Command::EmitSql {
            plan,
            single,
            temp_tables,
            backticks,
        } => {
            let dialect = Dialect {
                materialization: if *temp_tables {
                    Materialization::TempTable
                } else {
                    Materialization::TempView
                },
                quote: if *backticks { QuoteStyle::Backtick } else { QuoteStyle::Double },
            };
            dispatch!(semiring_of(&ctx, &plan.query)?, cmd_emit_sql(&ctx, plan, *single, dialect))?
        }
        Command::Gen {
            kind,
            query,
            out,
            rows,
            domain,
            skew,
            copies,
            degree,
        } => {
            let g = GenArgs {
                kind: *kind,
                query: query.as_deref(),
                out,
                rows: *rows,
                domain: *domain,
                skew: *skew,
                copies: *copies,
                degree: *degree,
            };
            let k = match (kind, query) {
                (GenKind::Star, _) => SemiringKind::Counting,
                (_, Some(q)) => semiring_of(&ctx, q)?,
                (_, None) => bail!("--query is required for this generator"),
            };
            dispatch!(k, cmd_gen(&ctx, &g))?
        }
        Command::Stats { query, data } => dispatch!(semiring_of(&ctx, query)?, cmd_stats(&ctx, query, data))?,
    };
    Ok((out, true))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((out, ok)) => {
            print!("{out}");
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: a plan disagrees with the oracle");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
