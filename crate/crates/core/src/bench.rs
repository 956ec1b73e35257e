//! Benchmark harness: optimizer modes, the evaluation query templates, and
//! the potential/actual improvement ratios between plan classes.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cost::CostModel;
use crate::enumerate::{enumerate, exhaustive_plans, EnumError};
use crate::exec::{count_results, execute_with_deadline, ExecError};
use crate::graph::{Catalog, PropertyGraph};
use crate::ir::parse_program;
use crate::rules::RuleSet;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Query(#[from] crate::ir::QueryError),
    #[error("{0}")]
    Other(String),
}

/// The three optimizer configurations the study compares: no seeding at
/// all, exterior-only seeding, and the full rule set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Unoptimized,
    Waveguide,
    Optimized,
}

pub const MODES: [Mode; 3] = [Mode::Unoptimized, Mode::Waveguide, Mode::Optimized];

impl Mode {
    pub fn rule_set(self) -> RuleSet {
        match self {
            Mode::Unoptimized => RuleSet::unoptimized(),
            Mode::Waveguide => RuleSet::waveguide(),
            Mode::Optimized => RuleSet::optimized(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Unoptimized => "unopt",
            Mode::Waveguide => "waveguide",
            Mode::Optimized => "opt",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "unopt" | "unoptimized" => Some(Mode::Unoptimized),
            "waveguide" | "wave" => Some(Mode::Waveguide),
            "opt" | "optimized" => Some(Mode::Optimized),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

pub const TEMPLATE_NAMES: [&str; 7] =
    ["CCC1", "CCC2", "CCC3", "CCC4", "PCC2", "PCC3", "RQ"];

/// Bindings for the template placeholders `l1`, `l2`, `l3` (edge labels) and
/// `c1` (a filter constant).
#[derive(Debug, Clone, Default)]
pub struct Bindings(pub BTreeMap<String, String>);

impl Bindings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Bindings, String> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Bindings(map))
    }

    fn get(&self, key: &str) -> Result<&str, String> {
        self.0
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| format!("unbound template variable `{key}`"))
    }
}

/// Instantiates one of the seven templates with concrete labels and filter
/// constant, producing query text.
pub fn instantiate_template(name: &str, bindings: &Bindings) -> Result<String, String> {
    let l1 = bindings.get("l1")?;
    let l2 = bindings.get("l2")?;
    let l3 = bindings.get("l3")?;
    let bases = format!(
        "R(s, t) :- E(s, e, t), P(e, \"label\", \"{l1}\").\n\
         S(s, t) :- E(s, e, t), P(e, \"label\", \"{l2}\").\n\
         T(s, t) :- E(s, e, t), P(e, \"label\", \"{l3}\").\n"
    );
    let answer = match name {
        "CCC1" => "Ans(x, y, z) :- R+(x, y), S(x, z), T(z, y).".to_string(),
        "CCC2" => "Ans(x, y, z) :- R+(x, y), S(x, z), T(y, z).".to_string(),
        "CCC3" => "Ans(x, y, z) :- R+(x, y), S(z, x), T(z, y).".to_string(),
        "CCC4" => "Ans(x, y, z) :- R+(x, y), S(z, x), T(y, z).".to_string(),
        "PCC2" => "Ans(x, y) :- R+(x, y), S+(x, y).".to_string(),
        "PCC3" => "Ans(x, y) :- R+(x, y), S+(x, y), T+(x, y).".to_string(),
        "RQ" => {
            let c1 = bindings.get("c1")?;
            let constant = if c1.parse::<i64>().is_ok() {
                c1.to_string()
            } else {
                format!("\"{c1}\"")
            };
            format!(
                "I(x, y) :- S(x, y), T+(x, z), z = {constant}.\n\
                 Ans(x, y, z) :- R(x, y), I+(y, z)."
            )
        }
        other => return Err(format!("unknown template `{other}`")),
    };
    Ok(format!("{bases}{answer}"))
}

pub fn instantiate_all(bindings: &Bindings) -> Result<Vec<(String, String)>, String> {
    TEMPLATE_NAMES
        .iter()
        .map(|name| Ok((name.to_string(), instantiate_template(name, bindings)?)))
        .collect()
}

// ---------------------------------------------------------------------------
// Instance runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InstanceRow {
    pub query: String,
    pub mode: &'static str,
    pub opt_ms: f64,
    pub exec_ms: f64,
    pub tuples_processed: u64,
    pub result_count: u64,
    pub cost_estimate: f64,
    pub timed_out: bool,
}

impl InstanceRow {
    pub fn csv_header() -> &'static str {
        "query,mode,opt_ms,exec_ms,tuples_processed,result_count,cost_estimate,timed_out"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{},{},{:.3},{}",
            self.query,
            self.mode,
            self.opt_ms,
            self.exec_ms,
            self.tuples_processed,
            self.result_count,
            self.cost_estimate,
            self.timed_out
        )
    }
}

/// Optimizes and executes one query in one mode.
pub fn run_instance(
    name: &str,
    text: &str,
    g: &PropertyGraph,
    catalog: &Catalog,
    cost: &CostModel,
    mode: Mode,
    timeout: Option<Duration>,
) -> Result<InstanceRow, BenchError> {
    let program = parse_program(text)?;
    let result = enumerate(&program, catalog, cost, mode.rule_set())?;
    let deadline = timeout.map(|t| Instant::now() + t);
    match execute_with_deadline(&result.best, g, deadline) {
        Ok((relation, metrics)) => Ok(InstanceRow {
            query: name.to_string(),
            mode: mode.name(),
            opt_ms: result.stats.opt_ms,
            exec_ms: metrics.exec_ms,
            tuples_processed: metrics.tuples_processed,
            result_count: count_results(&relation),
            cost_estimate: result.best_cost,
            timed_out: false,
        }),
        Err(ExecError::Timeout) => Ok(InstanceRow {
            query: name.to_string(),
            mode: mode.name(),
            opt_ms: result.stats.opt_ms,
            exec_ms: timeout.map(|t| t.as_secs_f64() * 1e3).unwrap_or(0.0),
            tuples_processed: 0,
            result_count: 0,
            cost_estimate: result.best_cost,
            timed_out: true,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Runs every template in every mode.
pub fn run_templates(
    bindings: &Bindings,
    g: &PropertyGraph,
    catalog: &Catalog,
    cost: &CostModel,
    timeout: Option<Duration>,
) -> Result<Vec<InstanceRow>, BenchError> {
    let mut rows = Vec::new();
    for (name, text) in instantiate_all(bindings).map_err(BenchError::Other)? {
        for mode in MODES {
            rows.push(run_instance(&name, &text, g, catalog, cost, mode, timeout)?);
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Exhaustive plan-space runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PlanRow {
    pub index: usize,
    pub used_seeding: bool,
    pub cost_estimate: f64,
    pub exec_ms: f64,
    pub tuples_processed: u64,
    pub result_count: u64,
    pub timed_out: bool,
}

/// PC/PT/AC/AT per the study's definitions; a ratio is absent when one of
/// its operands does not exist (class empty or fully timed out). Ratios are
/// never fabricated from partial data.
#[derive(Debug, Clone, Default)]
pub struct RatioSummary {
    pub potential_cardinality: Option<f64>,
    pub potential_time: Option<f64>,
    pub actual_cardinality: Option<f64>,
    pub actual_time: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug)]
pub struct ExhaustiveOutcome {
    pub rows: Vec<PlanRow>,
    pub summary: RatioSummary,
    pub opt_ms: f64,
}

/// Executes every root plan (optionally across worker threads), identifies
/// the best plans in practice and by estimate per class, and derives the
/// improvement ratios.
pub fn run_exhaustive(
    text: &str,
    g: &PropertyGraph,
    catalog: &Catalog,
    cost: &CostModel,
    timeout: Option<Duration>,
    jobs: usize,
) -> Result<ExhaustiveOutcome, BenchError> {
    let program = parse_program(text)?;
    let result = exhaustive_plans(&program, catalog, cost, RuleSet::optimized())?;
    let plans = &result.root_plans;

    let rows: Mutex<Vec<PlanRow>> = Mutex::new(Vec::new());
    let next: AtomicUsize = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= plans.len() {
            break;
        }
        let rp = &plans[i];
        let deadline = timeout.map(|t| Instant::now() + t);
        let row = match execute_with_deadline(&rp.plan, g, deadline) {
            Ok((relation, metrics)) => PlanRow {
                index: i,
                used_seeding: rp.used_seeding,
                cost_estimate: rp.cost,
                exec_ms: metrics.exec_ms,
                tuples_processed: metrics.tuples_processed,
                result_count: count_results(&relation),
                timed_out: false,
            },
            Err(ExecError::Timeout) => PlanRow {
                index: i,
                used_seeding: rp.used_seeding,
                cost_estimate: rp.cost,
                exec_ms: timeout.map(|t| t.as_secs_f64() * 1e3).unwrap_or(0.0),
                tuples_processed: 0,
                result_count: 0,
                timed_out: true,
            },
            Err(_) => PlanRow {
                index: i,
                used_seeding: rp.used_seeding,
                cost_estimate: rp.cost,
                exec_ms: 0.0,
                tuples_processed: 0,
                result_count: 0,
                timed_out: true,
            },
        };
        rows.lock().unwrap().push(row);
    };
    let jobs = jobs.max(1).min(plans.len().max(1));
    if jobs <= 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(worker);
            }
        });
    }
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by_key(|r| r.index);

    let summary = summarize(&rows, result.stats.opt_ms);
    Ok(ExhaustiveOutcome { rows, summary, opt_ms: result.stats.opt_ms })
}

fn summarize(rows: &[PlanRow], opt_ms: f64) -> RatioSummary {
    let mut s = RatioSummary::default();
    let live =
        |seeded: bool| rows.iter().filter(move |r| r.used_seeding == seeded && !r.timed_out);
    let eval_time = |r: &PlanRow| opt_ms + r.exec_ms;

    let best_practice = |seeded: bool| -> Option<&PlanRow> {
        live(seeded).min_by(|a, b| eval_time(a).partial_cmp(&eval_time(b)).unwrap())
    };
    let best_estimated = |seeded: bool| -> Option<&PlanRow> {
        live(seeded).min_by(|a, b| a.cost_estimate.partial_cmp(&b.cost_estimate).unwrap())
    };

    let abp_u = best_practice(false);
    let abp_o = best_practice(true);
    let ebp_o = best_estimated(true);
    if abp_u.is_none() {
        s.notes.push("all unoptimized plans timed out or none exist".into());
    }
    if abp_o.is_none() {
        s.notes.push("all optimized plans timed out or none exist".into());
    }
    if let (Some(u), Some(o)) = (abp_u, abp_o) {
        if o.tuples_processed > 0 {
            s.potential_cardinality =
                Some(u.tuples_processed as f64 / o.tuples_processed as f64);
        }
        if eval_time(o) > 0.0 {
            s.potential_time = Some(eval_time(u) / eval_time(o));
        }
    }
    if let (Some(u), Some(o)) = (abp_u, ebp_o) {
        if o.tuples_processed > 0 {
            s.actual_cardinality =
                Some(u.tuples_processed as f64 / o.tuples_processed as f64);
        }
        if eval_time(o) > 0.0 {
            s.actual_time = Some(eval_time(u) / eval_time(o));
        }
    }
    s
}
