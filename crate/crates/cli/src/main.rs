//! Command-line front end: graph ingestion, query optimization, execution,
//! benchmarking and plan-space analysis.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rqe_core::bench::{self, Bindings, Mode};
use rqe_core::cost::CostModel;
use rqe_core::enumerate::{
    self, enumerate, make_ccc_query, make_chain_query, make_star_query, predicted_plan_count,
};
use rqe_core::exec::{count_results, execute_with_deadline, ExecError};
use rqe_core::graph::{build_catalog, ingest_rdf, load_graph, Catalog, PropertyGraph};
use rqe_core::ir::parse_program;
use rqe_core::relation::{Relation, Value};
use rqe_core::rules::RuleSet;

#[derive(Parser)]
#[command(name = "rqe", version, about = "Recursive graph query engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a graph, optimize a query, execute the chosen plan.
    Run(RunArgs),
    /// Optimize only; print the chosen plan as DOT plus its cost estimate.
    Explain(RunArgs),
    /// Execute every root plan and report the improvement ratios.
    Exhaustive(ExhaustiveArgs),
    /// Tabulate plan counts and optimization time over query shapes.
    CountPlans(CountPlansArgs),
    /// Run the benchmark templates in all three modes.
    Templates(TemplatesArgs),
    /// Convert RDF triples (3-column TSV) into edge/property files.
    IngestRdf(IngestArgs),
}

#[derive(Args)]
struct GraphArgs {
    /// Edge file: one `src TAB edge TAB dst` per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Property file: one `obj TAB key TAB value` per line.
    #[arg(long)]
    props: Option<PathBuf>,
    /// RDF triple file (`subject TAB predicate TAB object`) as graph source.
    #[arg(long)]
    rdf: Option<PathBuf>,
    /// Generate a deterministic random graph: `EDGES,LABELS`.
    #[arg(long, value_name = "EDGES,LABELS")]
    gen_random: Option<String>,
    /// Seed for generated graphs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlannerArgs {
    /// Optimizer mode: unopt | waveguide | opt.
    #[arg(long, default_value = "opt")]
    mode: String,
    /// Rule toggles, comma separated: join, seed, seed.interior,
    /// seed.stacking (e.g. `--rules seed=off`).
    #[arg(long)]
    rules: Option<String>,
    /// Cost-model settings, comma separated: weight.<kind>, expansion_cap,
    /// default_selectivity.
    #[arg(long)]
    cost: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Query file.
    #[arg(long)]
    query: PathBuf,
    /// Per-execution time limit in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Print only the result count.
    #[arg(long)]
    count: bool,
    /// Output format: text | csv | dot.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct ExhaustiveArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    query: PathBuf,
    /// Per-plan time limit in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Worker threads executing plans.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Refuse to run when the root plan count exceeds this bound.
    #[arg(long, default_value_t = 512)]
    max_plans: usize,
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct CountPlansArgs {
    /// Query shape: star | chain | ccc.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 2)]
    min_n: u64,
    #[arg(long, default_value_t = 6)]
    max_n: u64,
    /// Mark every term as a transitive closure.
    #[arg(long)]
    recursive: bool,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Args)]
struct TemplatesArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Bindings file: `l1 = <label>` lines for l1, l2, l3 and c1.
    #[arg(long)]
    bindings: PathBuf,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long, default_value = "text")]
    format: String,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Args)]
struct IngestArgs {
    /// RDF triple file, `subject TAB predicate TAB object` per line.
    #[arg(long)]
    rdf: PathBuf,
    #[arg(long)]
    out_edges: PathBuf,
    #[arg(long)]
    out_props: PathBuf,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args, false),
        Command::Explain(args) => cmd_run(args, true),
        Command::Exhaustive(args) => cmd_exhaustive(args),
        Command::CountPlans(args) => cmd_count_plans(args),
        Command::Templates(args) => cmd_templates(args),
        Command::IngestRdf(args) => cmd_ingest_rdf(args),
    }
}

fn load_graph_args(args: &GraphArgs) -> Result<PropertyGraph> {
    if let (Some(edges), Some(props)) = (&args.edges, &args.props) {
        let e = fs::File::open(edges).with_context(|| format!("opening {}", edges.display()))?;
        let p = fs::File::open(props).with_context(|| format!("opening {}", props.display()))?;
        return Ok(load_graph(BufReader::new(e), BufReader::new(p))?);
    }
    if let Some(rdf) = &args.rdf {
        return Ok(ingest_rdf(read_triples(rdf)?));
    }
    if let Some(spec) = &args.gen_random {
        let (edges, labels) = spec
            .split_once(',')
            .ok_or_else(|| anyhow!("--gen-random expects `EDGES,LABELS`"))?;
        return Ok(rqe_core::fixtures::random_graph(
            args.seed,
            edges.trim().parse().context("--gen-random EDGES")?,
            labels.trim().parse().context("--gen-random LABELS")?,
        ));
    }
    bail!("no graph source: pass --edges/--props, --rdf, or --gen-random")
}

fn read_triples(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(p), Some(o)) => {
                out.push((s.to_string(), p.to_string(), o.to_string()))
            }
            _ => bail!("{}:{}: expected 3 TAB-separated columns", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn planner_config(args: &PlannerArgs) -> Result<(RuleSet, CostModel)> {
    let mode = Mode::parse(&args.mode)
        .ok_or_else(|| anyhow!("unknown mode `{}` (unopt|waveguide|opt)", args.mode))?;
    let mut rules = mode.rule_set();
    if let Some(spec) = &args.rules {
        for item in spec.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("rule toggle `{item}` is not `key=value`"))?;
            rules.set_config(k.trim(), v.trim()).map_err(|e| anyhow!(e))?;
        }
    }
    let mut cost = CostModel::default();
    if let Some(spec) = &args.cost {
        for item in spec.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("cost setting `{item}` is not `key=value`"))?;
            let k = k.trim();
            let k = k.strip_prefix("cost.").unwrap_or(k);
            cost.set_config(k, v.trim()).map_err(|e| anyhow!(e))?;
        }
    }
    Ok((rules, cost))
}

fn read_query(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading query {}", path.display()))
}

fn decode(rel: &Relation, g: &PropertyGraph) -> Vec<Vec<String>> {
    rel.sorted_tuples()
        .into_iter()
        .map(|t| {
            t.iter()
                .map(|v| match v {
                    Value::Id(x) => x.to_string(),
                    Value::Int(x) => x.to_string(),
                    Value::Str(r) => g.dict.resolve(*r).to_string(),
                })
                .collect()
        })
        .collect()
}

fn cmd_run(args: RunArgs, explain_only: bool) -> Result<()> {
    let g = load_graph_args(&args.graph)?;
    let catalog = build_catalog(&g);
    let (rules, cost) = planner_config(&args.planner)?;
    let text = read_query(&args.query)?;
    let program = parse_program(&text)?;
    let result = enumerate(&program, &catalog, &cost, rules)?;

    if explain_only {
        // No timing lines here: explain output is byte-deterministic.
        if args.format == "dot" {
            println!("// cost_estimate={:.3}", result.best_cost);
        } else {
            println!("cost_estimate: {:.3}", result.best_cost);
            println!("stat.leaf_count={}", result.stats.leaf_count);
        }
        print!("{}", result.best.render_dot());
        return Ok(());
    }

    let deadline = args.timeout_ms.map(|ms| std::time::Instant::now() + Duration::from_millis(ms));
    let (rel, mut metrics) = match execute_with_deadline(&result.best, &g, deadline) {
        Ok(r) => r,
        Err(ExecError::Timeout) => bail!("execution exceeded {} ms", args.timeout_ms.unwrap()),
        Err(e) => return Err(e.into()),
    };
    metrics.opt_ms = result.stats.opt_ms;

    // Print in the answer head's declared column order.
    let head_vars: Vec<String> =
        program.answer_rules()[0].head.vars().map(|v| v.to_string()).collect();
    let ordered = rel.project_names(&head_vars);
    if args.count {
        println!("count: {}", count_results(&ordered));
    } else {
        match args.format.as_str() {
            "csv" => {
                println!("{}", head_vars.join(","));
                for row in decode(&ordered, &g) {
                    println!("{}", row.join(","));
                }
            }
            _ => {
                for row in decode(&ordered, &g) {
                    println!("{}", row.join("\t"));
                }
            }
        }
    }
    for line in result.stats.report_lines() {
        println!("{line}");
    }
    println!("stat.exec_ms={:.3}", metrics.exec_ms);
    println!("stat.tuples_processed={}", metrics.tuples_processed);
    println!("stat.result_count={}", count_results(&ordered));
    Ok(())
}

fn cmd_exhaustive(args: ExhaustiveArgs) -> Result<()> {
    let g = load_graph_args(&args.graph)?;
    let catalog = build_catalog(&g);
    let (_, cost) = planner_config(&args.planner)?;
    let text = read_query(&args.query)?;
    {
        // Respect the configured plan-count bound before executing anything.
        let program = parse_program(&text)?;
        let probe =
            enumerate::exhaustive_plans(&program, &catalog, &cost, RuleSet::optimized())?;
        if probe.root_plans.len() > args.max_plans {
            bail!(
                "{} root plans exceed --max-plans {}",
                probe.root_plans.len(),
                args.max_plans
            );
        }
    }
    let outcome = bench::run_exhaustive(
        &text,
        &g,
        &catalog,
        &cost,
        Some(Duration::from_millis(args.timeout_ms)),
        args.jobs,
    )
    .map_err(|e| anyhow!("{e}"))?;

    if args.format == "csv" {
        println!("plan,seeded,cost_estimate,exec_ms,tuples_processed,result_count,timed_out");
        for r in &outcome.rows {
            println!(
                "{},{},{:.3},{:.3},{},{},{}",
                r.index,
                r.used_seeding,
                r.cost_estimate,
                r.exec_ms,
                r.tuples_processed,
                r.result_count,
                r.timed_out
            );
        }
    } else {
        println!(
            "{:>4} {:>6} {:>14} {:>10} {:>12} {:>10} {:>9}",
            "plan", "seeded", "cost_estimate", "exec_ms", "tuples", "results", "timed_out"
        );
        for r in &outcome.rows {
            println!(
                "{:>4} {:>6} {:>14.3} {:>10.3} {:>12} {:>10} {:>9}",
                r.index,
                r.used_seeding,
                r.cost_estimate,
                r.exec_ms,
                r.tuples_processed,
                r.result_count,
                r.timed_out
            );
        }
    }
    println!("stat.opt_ms={:.3}", outcome.opt_ms);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into());
    println!("ratio.PC={}", fmt(outcome.summary.potential_cardinality));
    println!("ratio.PT={}", fmt(outcome.summary.potential_time));
    println!("ratio.AC={}", fmt(outcome.summary.actual_cardinality));
    println!("ratio.AT={}", fmt(outcome.summary.actual_time));
    for note in &outcome.summary.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn cmd_count_plans(args: CountPlansArgs) -> Result<()> {
    if args.min_n < 2 || args.max_n < args.min_n {
        bail!("need 2 <= min-n <= max-n");
    }
    let (rules, cost) = planner_config(&args.planner)?;
    // A small synthetic graph provides the catalog the cost model reads.
    let g = rqe_core::fixtures::random_graph(7, 3 * args.max_n as usize + 6, args.max_n as usize);
    let catalog: Catalog = build_catalog(&g);
    println!("shape,n,recursive,leaf_count,predicted,opt_ms");
    for n in args.min_n..=args.max_n {
        let program = match args.shape.as_str() {
            "star" => make_star_query(n, args.recursive),
            "chain" => make_chain_query(n, args.recursive),
            "ccc" => make_ccc_query(n, args.recursive),
            other => bail!("unknown shape `{other}` (star|chain|ccc)"),
        };
        let result = enumerate(&program, &catalog, &cost, rules)?;
        let predicted = if args.shape == "star" {
            predicted_plan_count(n, args.recursive).to_string()
        } else {
            String::new()
        };
        println!(
            "{},{},{},{},{},{:.3}",
            args.shape, n, args.recursive, result.stats.leaf_count, predicted,
            result.stats.opt_ms
        );
    }
    Ok(())
}

fn cmd_templates(args: TemplatesArgs) -> Result<()> {
    let g = load_graph_args(&args.graph)?;
    let catalog = build_catalog(&g);
    let (_, cost) = planner_config(&args.planner)?;
    let text = fs::read_to_string(&args.bindings)
        .with_context(|| format!("reading bindings {}", args.bindings.display()))?;
    let bindings = Bindings::parse(&text).map_err(|e| anyhow!(e))?;
    let timeout = args.timeout_ms.map(Duration::from_millis);
    let rows =
        bench::run_templates(&bindings, &g, &catalog, &cost, timeout).map_err(|e| anyhow!("{e}"))?;
    if args.format == "csv" {
        println!("{}", rqe_core::bench::InstanceRow::csv_header());
        for r in &rows {
            println!("{}", r.to_csv());
        }
    } else {
        println!(
            "{:<6} {:<10} {:>10} {:>10} {:>12} {:>10}",
            "query", "mode", "opt_ms", "exec_ms", "tuples", "results"
        );
        for r in &rows {
            let flag = if r.timed_out { " (timeout)" } else { "" };
            println!(
                "{:<6} {:<10} {:>10.3} {:>10.3} {:>12} {:>10}{flag}",
                r.query, r.mode, r.opt_ms, r.exec_ms, r.tuples_processed, r.result_count
            );
        }
    }
    Ok(())
}

fn cmd_ingest_rdf(args: IngestArgs) -> Result<()> {
    let triples = read_triples(&args.rdf)?;
    let g = ingest_rdf(triples);
    let mut edges = String::new();
    for (s, e, t) in &g.edges {
        edges.push_str(&format!("{s}\t{e}\t{t}\n"));
    }
    let mut props = String::new();
    for (o, k, v) in &g.props {
        let key = g.dict.resolve(*k);
        let val = match v {
            Value::Id(x) => x.to_string(),
            Value::Int(x) => x.to_string(),
            Value::Str(r) => g.dict.resolve(*r).to_string(),
        };
        props.push_str(&format!("{o}\t{key}\t{val}\n"));
    }
    fs::write(&args.out_edges, edges)
        .with_context(|| format!("writing {}", args.out_edges.display()))?;
    fs::write(&args.out_props, props)
        .with_context(|| format!("writing {}", args.out_props.display()))?;
    println!(
        "ingested {} triples: {} vertices, {} edges",
        g.edge_count(),
        g.vertex_count(),
        g.edge_count()
    );
    Ok(())
}
