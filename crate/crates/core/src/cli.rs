//! Command implementations behind the `rdnflow` binary.
//!
//! Each command returns a [`CmdOutput`] holding its exit code and the text
//! destined for stdout and stderr, so the binary only has to print it.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ingest::{self, NodeMapping, RawTable, TableFormat, TopologyReport};
use crate::model::{NetworkModel, PerUnitBase};
use crate::oracle::baseline_solve;
use crate::solver::{self, step_model, CountMode, SolveOptions, SolveReport, StepModel};
use crate::synth::{random_tree, seeded_rng, TreeSpec};

pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const TOPOLOGY: u8 = 5;
    pub const NON_CONVERGENCE: u8 = 6;
    pub const COMPARISON: u8 = 7;
    pub const SOLVER: u8 = 8;
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Data(_) => exit::PARSE,
        Error::Topology(_) | Error::Ordering(_) => exit::TOPOLOGY,
        Error::NonConvergence { .. } => exit::NON_CONVERGENCE,
        _ => exit::SOLVER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input_path: PathBuf,
    /// Inferred from the file extension when unset.
    pub format: Option<TableFormat>,
    /// Falls back to the file's root, then node 1.
    pub root: Option<usize>,
    pub kv_base: Option<f64>,
    pub mva_base: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub output: OutputFormat,
    pub debug_polar: bool,
    pub renumber: bool,
    pub count_mode: CountMode,
}

impl RunConfig {
    pub fn new(input_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            input_path: input_path.into(),
            format: None,
            root: None,
            kv_base: None,
            mva_base: None,
            tolerance: solver::DEFAULT_TOLERANCE,
            max_iterations: solver::DEFAULT_MAX_ITERATIONS,
            output: OutputFormat::Table,
            debug_polar: false,
            renumber: false,
            count_mode: CountMode::Adjacency,
        }
    }

    fn options(&self) -> SolveOptions {
        SolveOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            debug_polar: self.debug_polar,
            count_mode: self.count_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CmdOutput {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutput {
    fn ok(stdout: String) -> Self {
        CmdOutput {
            code: exit::OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: u8, stderr: impl Into<String>) -> Self {
        let mut stderr = stderr.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        CmdOutput {
            code,
            stdout: String::new(),
            stderr,
        }
    }

    fn from_error(context: &str, err: &Error) -> Self {
        Self::fail(exit_code(err), format!("error: {context}: {err}"))
    }
}

struct Loaded {
    table: RawTable,
    root: usize,
    base: PerUnitBase,
    mapping: Option<NodeMapping>,
}

fn load(cfg: &RunConfig) -> Result<Loaded, CmdOutput> {
    let path = &cfg.input_path;
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdOutput::fail(exit::IO, format!("error: cannot read {name}: {e}")))?;
    let format = cfg.format.unwrap_or_else(|| TableFormat::from_path(path));
    let table =
        ingest::parse_named(&text, format, &name).map_err(|e| CmdOutput::from_error(&name, &e))?;

    let root = cfg.root.or(table.meta.root).unwrap_or(1);
    let file_base = table.meta.base.unwrap_or_default();
    let base = PerUnitBase::new(
        cfg.kv_base.unwrap_or(file_base.kv_base),
        cfg.mva_base.unwrap_or(file_base.mva_base),
    )
    .map_err(|e| CmdOutput::from_error(&name, &e))?;

    if cfg.renumber {
        let (table, mapping) = ingest::renumber_sequential(&table, root)
            .map_err(|e| CmdOutput::from_error(&name, &e))?;
        Ok(Loaded {
            table,
            root: 1,
            base,
            mapping: Some(mapping),
        })
    } else {
        Ok(Loaded {
            table,
            root,
            base,
            mapping: None,
        })
    }
}

fn network(cfg: &RunConfig) -> Result<(Loaded, NetworkModel), CmdOutput> {
    let loaded = load(cfg)?;
    let net = ingest::validate_radial(&loaded.table, loaded.root, loaded.base).map_err(|e| {
        let mut out = CmdOutput::from_error(&loaded.table.source_name, &e);
        if matches!(e, Error::Ordering(_)) {
            out.stderr.push_str("hint: rerun with --renumber\n");
        }
        out
    })?;
    Ok((loaded, net))
}

pub fn format_topology(report: &TopologyReport) -> String {
    format!(
        "NB={} LN={} ties={} leaves={} ordered={}",
        report.node_count,
        report.branch_count,
        report.tie_count,
        report.leaf_count,
        if report.ordered { "yes" } else { "no" }
    )
}

pub fn cmd_validate(cfg: &RunConfig) -> CmdOutput {
    let loaded = match load(cfg) {
        Ok(l) => l,
        Err(out) => return out,
    };
    let name = &loaded.table.source_name;
    let report = match ingest::inspect_topology(&loaded.table, loaded.root) {
        Ok(r) => r,
        Err(e) => return CmdOutput::from_error(name, &e),
    };
    let line = format_topology(&report) + "\n";
    match &report.ordering_issue {
        None => CmdOutput::ok(line),
        Some(issue) => CmdOutput {
            code: exit::TOPOLOGY,
            stdout: line,
            stderr: format!(
                "error: {name}: ordering error: {issue}\nhint: rerun with --renumber\n"
            ),
        },
    }
}

/// Everything `solve` reports, in the shape written as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub source: String,
    pub report: SolveReport,
    pub step_count_proposed: u64,
    pub step_count_baseline: u64,
    pub step_model: StepModel,
    /// `(old, new)` node labels when the input was renumbered.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub renumbered: Vec<(usize, usize)>,
}

pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutput, CmdOutput> {
    let (loaded, net) = network(cfg)?;
    let name = loaded.table.source_name.clone();
    let options = cfg.options();
    let report = solver::solve(&net, &options).map_err(|e| CmdOutput::from_error(&name, &e))?;
    let baseline = baseline_solve(&net, &options).map_err(|e| CmdOutput::from_error(&name, &e))?;
    let model = step_model(
        net.node_count() as u64,
        report.leaf_count as u64,
        report.iterations as u64,
    );
    let renumbered = loaded
        .mapping
        .filter(|m| !m.is_identity())
        .map(|m| {
            (1..=m.len())
                .filter_map(|new| m.old_of(new).map(|old| (old, new)))
                .collect()
        })
        .unwrap_or_default();
    Ok(SolveOutput {
        source: name,
        step_count_proposed: report.step_count(),
        step_count_baseline: baseline.step_count(),
        step_model: model,
        report,
        renumbered,
    })
}

pub fn cmd_solve(cfg: &RunConfig) -> CmdOutput {
    match run_solve(cfg) {
        Ok(out) => CmdOutput::ok(render_solve(&out, cfg.output)),
        Err(out) => out,
    }
}

pub fn render_solve(out: &SolveOutput, format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => render_solve_table(out),
        OutputFormat::Csv => render_solve_csv(out),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(out).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

fn render_solve_table(out: &SolveOutput) -> String {
    let r = &out.report;
    let mut s = String::new();
    let _ = writeln!(s, "# source: {}", out.source);
    for (old, new) in &out.renumbered {
        let _ = writeln!(s, "# node {old} -> {new}");
    }
    let _ = writeln!(
        s,
        "# converged={} iterations={} tolerance={}",
        if r.converged { "yes" } else { "no" },
        r.iterations,
        r.tolerance
    );
    let _ = writeln!(s, "{:>5} {:>8} {:>10}", "node", "vmag_pu", "angle_deg");
    for v in &r.node_voltages {
        let _ = writeln!(s, "{:>5} {:>8.5} {:>10.5}", v.node, v.vmag_pu, v.angle_deg);
    }
    let _ = writeln!(
        s,
        "{:>6} {:>5} {:>5} {:>11} {:>11} {:>11}",
        "branch", "from", "to", "current_pu", "loss_kw", "loss_kvar"
    );
    for b in &r.branch_flows {
        let _ = writeln!(
            s,
            "{:>6} {:>5} {:>5} {:>11.6} {:>11.5} {:>11.5}",
            b.id, b.from, b.to, b.current_pu, b.loss_kw, b.loss_kvar
        );
    }
    let _ = writeln!(s, "total_loss_kw={:.5}", r.total_loss_kw);
    let _ = writeln!(s, "total_loss_kvar={:.5}", r.total_loss_kvar);
    let _ = writeln!(s, "leaves={}", r.leaf_count);
    let _ = writeln!(
        s,
        "steps_proposed={} steps_baseline={}",
        out.step_count_proposed, out.step_count_baseline
    );
    let _ = writeln!(
        s,
        "model_proposed={} model_baseline={}",
        out.step_model.proposed, out.step_model.baseline
    );
    s
}

fn render_solve_csv(out: &SolveOutput) -> String {
    let r = &out.report;
    let mut nodes = csv::Writer::from_writer(Vec::new());
    nodes
        .write_record(["node", "vmag_pu", "angle_deg"])
        .expect("in-memory write");
    for v in &r.node_voltages {
        nodes
            .write_record([
                v.node.to_string(),
                format!("{:.5}", v.vmag_pu),
                format!("{:.5}", v.angle_deg),
            ])
            .expect("in-memory write");
    }
    let mut branches = csv::Writer::from_writer(Vec::new());
    branches
        .write_record(["branch", "from", "to", "current_pu", "loss_kw", "loss_kvar"])
        .expect("in-memory write");
    for b in &r.branch_flows {
        branches
            .write_record([
                b.id.to_string(),
                b.from.to_string(),
                b.to.to_string(),
                format!("{:.6}", b.current_pu),
                format!("{:.5}", b.loss_kw),
                format!("{:.5}", b.loss_kvar),
            ])
            .expect("in-memory write");
    }
    let mut summary = csv::Writer::from_writer(Vec::new());
    let rows = [
        ("iterations", r.iterations.to_string()),
        ("total_loss_kw", format!("{:.5}", r.total_loss_kw)),
        ("total_loss_kvar", format!("{:.5}", r.total_loss_kvar)),
        ("leaves", r.leaf_count.to_string()),
        ("steps_proposed", out.step_count_proposed.to_string()),
        ("steps_baseline", out.step_count_baseline.to_string()),
    ];
    summary
        .write_record(["key", "value"])
        .expect("in-memory write");
    for (k, v) in rows {
        summary
            .write_record([k, v.as_str()])
            .expect("in-memory write");
    }

    let mut s = String::new();
    for w in [nodes, branches, summary] {
        if !s.is_empty() {
            s.push('\n');
        }
        s.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
    }
    s
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct GoldenRow {
    node: usize,
    vmag_pu: f64,
}

/// Reads a `node,vmag_pu` CSV.
pub fn read_golden(path: &Path) -> Result<Vec<(usize, f64)>, CmdOutput> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdOutput::fail(exit::IO, format!("error: cannot read {name}: {e}")))?;
    parse_golden(&text).map_err(|e| CmdOutput::from_error(&name, &e))
}

pub fn parse_golden(text: &str) -> Result<Vec<(usize, f64)>, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["node", "vmag_pu"] {
        return Err(Error::Parse {
            line: 1,
            message: "golden header must be `node,vmag_pu`".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize::<GoldenRow>() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows.push((rec.node, rec.vmag_pu));
    }
    Ok(rows)
}

pub const DEFAULT_COMPARE_BOUND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `(node, golden, computed, |deviation|)` ascending by node.
    pub rows: Vec<(usize, f64, f64, f64)>,
    pub max_deviation: f64,
    pub worst_node: usize,
}

/// Pairs golden magnitudes with a solved report; the node sets must match.
pub fn compare_voltages(
    report: &SolveReport,
    golden: &[(usize, f64)],
) -> Result<Comparison, Error> {
    let ours: BTreeSet<usize> = report.node_voltages.iter().map(|v| v.node).collect();
    let theirs: BTreeSet<usize> = golden.iter().map(|g| g.0).collect();
    if ours != theirs || theirs.len() != golden.len() {
        let missing: Vec<_> = ours.difference(&theirs).collect();
        let extra: Vec<_> = theirs.difference(&ours).collect();
        return Err(Error::Data(format!(
            "golden node set differs from network (missing {missing:?}, unknown {extra:?}, {} rows for {} nodes)",
            golden.len(),
            ours.len()
        )));
    }
    let mut rows: Vec<_> = golden
        .iter()
        .map(|&(node, g)| {
            let v = report.vmag(node);
            (node, g, v, (v - g).abs())
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    let worst = rows.iter().fold(
        (0usize, 0.0f64),
        |acc, r| if r.3 > acc.1 { (r.0, r.3) } else { acc },
    );
    Ok(Comparison {
        rows,
        max_deviation: worst.1,
        worst_node: worst.0,
    })
}

pub fn cmd_compare(cfg: &RunConfig, golden_path: &Path, bound: f64) -> CmdOutput {
    let golden = match read_golden(golden_path) {
        Ok(g) => g,
        Err(out) => return out,
    };
    let solved = match run_solve(cfg) {
        Ok(s) => s,
        Err(out) => return out,
    };
    let cmp = match compare_voltages(&solved.report, &golden) {
        Ok(c) => c,
        Err(e) => return CmdOutput::from_error(&golden_path.display().to_string(), &e),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>5} {:>8} {:>8} {:>10}",
        "node", "golden", "computed", "deviation"
    );
    for (node, g, v, d) in &cmp.rows {
        let _ = writeln!(s, "{node:>5} {g:>8.5} {v:>8.5} {d:>10.3e}");
    }
    let _ = writeln!(
        s,
        "max_deviation={:.3e} node={} bound={:e}",
        cmp.max_deviation, cmp.worst_node, bound
    );

    if cmp.max_deviation <= bound {
        CmdOutput::ok(s)
    } else {
        let mut err = String::new();
        for (node, _, _, d) in cmp.rows.iter().filter(|r| r.3 > bound) {
            let _ = writeln!(
                err,
                "node {node} deviates by {d:.3e} p.u. (bound {bound:e})"
            );
        }
        CmdOutput {
            code: exit::COMPARISON,
            stdout: s,
            stderr: err,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub leaf_fractions: Vec<f64>,
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub count_mode: CountMode,
    pub output: OutputFormat,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![10, 33, 69, 150],
            leaf_fractions: vec![0.1, 0.3],
            seed: 1,
            tolerance: solver::DEFAULT_TOLERANCE,
            max_iterations: solver::DEFAULT_MAX_ITERATIONS,
            count_mode: CountMode::LiteralScan,
            output: OutputFormat::Table,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub leaf_fraction: f64,
    pub leaves: usize,
    pub iterations: usize,
    pub measured_proposed: u64,
    pub measured_baseline: u64,
    pub measured_proposed_per_iteration: f64,
    pub measured_baseline_per_iteration: f64,
    pub model: StepModel,
    pub measured_ratio: f64,
    pub model_ratio: f64,
}

/// Feeder generated for one bench cell.
pub fn bench_tree(nodes: usize, fraction: f64, seed: u64) -> RawTable {
    let mut spec = TreeSpec::with_leaf_fraction(nodes, fraction);
    // keep the end-of-feeder voltage drop bounded as the tree grows
    spec.max_ohm *= (30.0 / nodes as f64).min(1.0);
    random_tree(&spec, &mut seeded_rng(seed))
}

pub fn bench_cell(
    nodes: usize,
    fraction: f64,
    seed: u64,
    options: &SolveOptions,
) -> Result<BenchRow, Error> {
    let table = bench_tree(nodes, fraction, seed);
    let net = ingest::validate_radial(&table, 1, PerUnitBase::default())?;
    let proposed = solver::solve(&net, options)?;
    let baseline = baseline_solve(&net, options)?;
    let model = step_model(
        nodes as u64,
        proposed.leaf_count as u64,
        proposed.iterations as u64,
    );
    Ok(BenchRow {
        nodes,
        leaf_fraction: fraction,
        leaves: proposed.leaf_count,
        iterations: proposed.iterations,
        measured_proposed: proposed.step_count(),
        measured_baseline: baseline.step_count(),
        measured_proposed_per_iteration: proposed.steps.mean_per_iteration(),
        measured_baseline_per_iteration: baseline.steps.mean_per_iteration(),
        model,
        measured_ratio: baseline.step_count() as f64 / proposed.step_count() as f64,
        model_ratio: model.saving_ratio(),
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, Error> {
    if let Some(&n) = cfg.sizes.iter().find(|&&n| n < 2) {
        return Err(Error::Data(format!(
            "bench sizes must be at least 2, got {n}"
        )));
    }
    if let Some(f) = cfg
        .leaf_fractions
        .iter()
        .find(|f| !(f.is_finite() && **f > 0.0 && **f < 1.0))
    {
        return Err(Error::Data(format!(
            "leaf fractions must lie in (0, 1), got {f}"
        )));
    }
    let options = SolveOptions {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        debug_polar: false,
        count_mode: cfg.count_mode,
    };
    let cells: Vec<(usize, usize, f64, u64)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| cfg.leaf_fractions.iter().map(move |&f| (n, f)))
        .enumerate()
        .map(|(i, (n, f))| {
            (
                i,
                n,
                f,
                cfg.seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(i as u64),
            )
        })
        .collect();
    let mut rows: Vec<(usize, BenchRow)> = cells
        .par_iter()
        .map(|&(i, n, f, seed)| bench_cell(n, f, seed, &options).map(|row| (i, row)))
        .collect::<Result<_, _>>()?;
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn render_bench(rows: &[BenchRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "nodes",
                "leaf_fraction",
                "leaves",
                "iterations",
                "measured_proposed",
                "measured_baseline",
                "model_proposed",
                "model_baseline",
                "measured_ratio",
                "model_ratio",
            ])
            .expect("in-memory write");
            for r in rows {
                w.write_record([
                    r.nodes.to_string(),
                    r.leaf_fraction.to_string(),
                    r.leaves.to_string(),
                    r.iterations.to_string(),
                    r.measured_proposed.to_string(),
                    r.measured_baseline.to_string(),
                    r.model.proposed.to_string(),
                    r.model.baseline.to_string(),
                    format!("{:.4}", r.measured_ratio),
                    format!("{:.4}", r.model_ratio),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        OutputFormat::Table => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>6} {:>4} {:>12} {:>12} {:>12} {:>12} {:>8} {:>8}",
                "n",
                "frac",
                "m",
                "r",
                "meas_prop",
                "meas_base",
                "model_prop",
                "model_base",
                "ratio",
                "model"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:>6} {:>6.3} {:>6} {:>4} {:>12} {:>12} {:>12} {:>12} {:>8.4} {:>8.4}",
                    r.nodes,
                    r.leaf_fraction,
                    r.leaves,
                    r.iterations,
                    r.measured_proposed,
                    r.measured_baseline,
                    r.model.proposed,
                    r.model.baseline,
                    r.measured_ratio,
                    r.model_ratio
                );
            }
            s
        }
    }
}

pub fn cmd_bench(cfg: &BenchConfig) -> CmdOutput {
    match run_bench(cfg) {
        Ok(rows) => CmdOutput::ok(render_bench(&rows, cfg.output)),
        Err(e) => CmdOutput::from_error("bench", &e),
    }
}
