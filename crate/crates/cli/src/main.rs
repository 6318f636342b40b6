//! `exactci`: exact intervals by the h-function method, interval
//! modification and refinement to the fixed point, from the command line.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use exactci::diff::{self, DiffDesign, DiffMethod, DiffModel, DiffStatKind, IcpGridOptions};
use exactci::gauss::{self, GaussianSpec};
use exactci::hcore::{FiniteModel, GridPolicy};
use exactci::io::{LimitsFile, SampleSpace};
use exactci::limits::{CoverageReport, LimitsTable};
use exactci::mpair::{self, MPairDesign};
use exactci::prop::{self, BinomialModel, PropDesign, PropMethod};
use exactci::refine::{self, OneSided, RefinementTrace, DEFAULT_MAX_K};
use exactci::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "exactci", version, about = "Exact confidence intervals by the h-function method")]
struct Cli {
    /// Grid policy as THETA_POINTS,NUISANCE_POINTS[,POLISH].
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<GridPolicy>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RefineLevel {
    None,
    #[value(name = "M")]
    M,
    #[value(name = "Minf")]
    Minf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    TwoSided,
    Lower,
    Upper,
}

#[derive(Subcommand)]
enum Command {
    /// Single binomial proportion.
    Prop(PropArgs),
    /// Difference of two independent proportions.
    Diff(DiffArgs),
    /// Matched-pair difference from an ingested baseline table.
    Mpair(MpairArgs),
    /// Modify or refine an arbitrary limits table.
    Refine(RefineArgs),
    /// Closed-form normal-model cases.
    #[command(subcommand)]
    Gauss(GaussCommand),
    /// Infimum coverage and total length of a limits table.
    Icp(IcpArgs),
}

#[derive(Args)]
struct RefineFlags {
    #[arg(long, value_enum, default_value_t = RefineLevel::None)]
    refine: RefineLevel,
    #[arg(long, default_value_t = DEFAULT_MAX_K)]
    max_k: usize,
    /// Write the resulting limits at full precision.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PropArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// cp, blaker, lrt, wald, wilson or sample_prop.
    #[arg(long)]
    method: String,
    #[command(flatten)]
    refine: RefineFlags,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    n1: u32,
    #[arg(long)]
    n2: u32,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// lrt, score, wald or mle.
    #[arg(long)]
    method: String,
    /// Report only the interval at X,Y.
    #[arg(long, value_parser = parse_pair)]
    at: Option<(u32, u32)>,
    /// Points per axis of the coverage grid.
    #[arg(long, default_value_t = 201)]
    icp_points: usize,
    #[command(flatten)]
    refine: RefineFlags,
}

#[derive(Args)]
struct MpairArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Baseline limits keyed by (n10, t).
    #[arg(long)]
    limits: PathBuf,
    /// Report the interval and the p-value at d_m = 0 for N10,T.
    #[arg(long, value_parser = parse_pair)]
    at: Option<(u32, u32)>,
    /// Coverage grid step is 1/STEPS.
    #[arg(long, default_value_t = 100)]
    icp_steps: u32,
    #[command(flatten)]
    refine: RefineFlags,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    limits: PathBuf,
    /// prop:N, diff:N1,N2 or mpair:N; defaults to the file header.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = Mode::TwoSided)]
    mode: Mode,
    /// Apply the operator once instead of iterating.
    #[arg(long)]
    once: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_K)]
    max_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IcpArgs {
    #[arg(long)]
    limits: PathBuf,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 201)]
    icp_points: usize,
    #[arg(long, default_value_t = 100)]
    icp_steps: u32,
}

#[derive(Args)]
struct NormalArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Subcommand)]
enum GaussCommand {
    /// Interval from the point estimator a*xbar + b.
    Zab {
        #[arg(long, allow_hyphen_values = true)]
        xbar: f64,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        b: f64,
        #[command(flatten)]
        normal: NormalArgs,
    },
    /// Modification of the box [xbar - a se, xbar + b se].
    Box {
        #[arg(long, allow_hyphen_values = true)]
        xbar: f64,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[command(flatten)]
        normal: NormalArgs,
    },
    /// Modification of the one-sided t interval [xbar + c s / sqrt(n), inf).
    Tmod {
        #[arg(long, allow_hyphen_values = true)]
        c: f64,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

fn parse_grid(s: &str) -> Result<GridPolicy, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if !(2..=3).contains(&parts.len()) {
        return Err("expected THETA_POINTS,NUISANCE_POINTS[,POLISH]".into());
    }
    let mut g = GridPolicy::default();
    g.theta_points = parts[0].parse().map_err(|e| format!("theta points: {e}"))?;
    g.nuisance_points = parts[1].parse().map_err(|e| format!("nuisance points: {e}"))?;
    if let Some(p) = parts.get(2) {
        g.polish = p.parse().map_err(|e| format!("polish: {e}"))?;
    }
    g.validate().map_err(|e| e.to_string())?;
    Ok(g)
}

fn parse_pair(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(',').ok_or("expected two integers A,B")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: EXIT_INPUT,
            msg: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.into(),
    }
}

/// Everything a command prints, in one structure shared by all formats.
struct Report {
    header: Map<String, Value>,
    space: Option<SampleSpace>,
    /// Limits as reported: clipped and rounded outward.
    table: Option<LimitsTable>,
    /// Restrict the printed rows to these table indices.
    rows: Option<Vec<usize>>,
    summary: Map<String, Value>,
    trace: Option<Value>,
    nonconverged: bool,
}

impl Report {
    fn new(grid: &GridPolicy) -> Self {
        let mut header = Map::new();
        header.insert("grid".into(), grid_json(grid));
        Self {
            header,
            space: None,
            table: None,
            rows: None,
            summary: Map::new(),
            trace: None,
            nonconverged: false,
        }
    }

    fn set_table(&mut self, space: SampleSpace, full: &LimitsTable) {
        let (a, b) = space.theta_range();
        self.space = Some(space);
        self.table = Some(full.clipped(a, b).rounded());
    }

    fn to_json(&self) -> Value {
        let mut out = Map::new();
        out.insert("design".into(), Value::Object(self.header.clone()));
        if let (Some(space), Some(table)) = (self.space, &self.table) {
            let keys = space.keys();
            let points: Vec<Value> = self
                .row_indices()
                .into_iter()
                .map(|s| json!({"point": keys[s], "lower": num(table.lower[s]), "upper": num(table.upper[s])}))
                .collect();
            out.insert("points".into(), Value::Array(points));
        }
        for (k, v) in &self.summary {
            out.insert(k.clone(), v.clone());
        }
        if let Some(t) = &self.trace {
            out.insert("trace".into(), t.clone());
        }
        Value::Object(out)
    }

    fn row_indices(&self) -> Vec<usize> {
        match (&self.rows, &self.table) {
            (Some(r), _) => r.clone(),
            (None, Some(t)) => (0..t.len()).collect(),
            (None, None) => Vec::new(),
        }
    }

    fn print(&self, format: Format) {
        match format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&self.to_json()).unwrap_or_default()),
            Format::Csv => self.print_csv(),
            Format::Text => self.print_text(),
        }
    }

    fn print_csv(&self) {
        let (Some(space), Some(table)) = (self.space, &self.table) else {
            let keys: Vec<&String> = self.summary.keys().collect();
            println!("{}", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
            println!(
                "{}",
                self.summary.values().map(plain).collect::<Vec<_>>().join(",")
            );
            return;
        };
        println!("{},lower,upper", space.key_columns().join(","));
        let keys = space.keys();
        for s in self.row_indices() {
            let k: Vec<String> = keys[s].iter().map(u32::to_string).collect();
            println!("{},{},{}", k.join(","), fmt4(table.lower[s]), fmt4(table.upper[s]));
        }
    }

    fn print_text(&self) {
        for (k, v) in &self.header {
            println!("# {k}: {}", plain(v));
        }
        if let (Some(space), Some(table)) = (self.space, &self.table) {
            let cols = space.key_columns();
            let key_head: Vec<String> = cols.iter().map(|c| format!("{c:>5}")).collect();
            println!("{} {:>9} {:>9}", key_head.join(" "), "lower", "upper");
            let keys = space.keys();
            for s in self.row_indices() {
                let k: Vec<String> = keys[s].iter().map(|v| format!("{v:>5}")).collect();
                println!("{} {:>9} {:>9}", k.join(" "), fmt4(table.lower[s]), fmt4(table.upper[s]));
            }
        }
        for (k, v) in &self.summary {
            println!("{k}: {}", plain(v));
        }
        if let Some(t) = &self.trace {
            println!("trace: {}", plain(t));
        }
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn fmt4(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn grid_json(g: &GridPolicy) -> Value {
    json!({
        "theta_points": g.theta_points,
        "nuisance_points": g.nuisance_points,
        "bisection_tol": g.bisection_tol,
        "polish": g.polish,
    })
}

fn coverage_json(c: &CoverageReport) -> Value {
    json!({"value": c.icp, "at": c.at, "side": c.side, "warnings": c.warnings})
}

fn trace_json(t: &RefinementTrace) -> Value {
    json!({
        "k": t.k,
        "converged": t.converged,
        "nested": t.nested,
        "til_sequence": t.til_sequence,
        "ratio_sequence": t.ratio_sequence,
        "degenerate_points": t.degenerate,
    })
}

/// Infimum coverage of a reported table on the design's default grid.
fn coverage(space: SampleSpace, reported: &LimitsTable, icp_points: usize, icp_steps: u32) -> Result<CoverageReport, Failure> {
    Ok(match space {
        SampleSpace::Prop { n } => prop::icp_single_prop(reported, n)?,
        SampleSpace::Diff { n1, n2 } => {
            let d = DiffDesign::new(n1, n2, 0.05)?;
            let opts = IcpGridOptions {
                points: icp_points,
                ..IcpGridOptions::default()
            };
            diff::icp_grid_d(reported, &d, &opts)?
        }
        SampleSpace::Mpair { n } => mpair::icp_grid_m(reported, &MPairDesign::new(n, 0.05)?, icp_steps)?,
    })
}

/// Applies the requested refinement level and fills the report.
fn apply_refinement(
    report: &mut Report,
    model: &dyn FiniteModel,
    space: SampleSpace,
    base: LimitsTable,
    alpha: f64,
    grid: &GridPolicy,
    flags: &RefineFlags,
) -> Result<LimitsTable, Failure> {
    report.header.insert(
        "refine".into(),
        json!(match flags.refine {
            RefineLevel::None => "none",
            RefineLevel::M => "M",
            RefineLevel::Minf => "Minf",
        }),
    );
    let out = match flags.refine {
        RefineLevel::None => base,
        RefineLevel::M => refine::modify(model, &base, alpha, grid)?.limits,
        RefineLevel::Minf => {
            if flags.max_k == 0 {
                return Err(usage("--max-k must be at least 1"));
            }
            let trace = refine::refine_fixed_point(model, &base, alpha, grid, flags.max_k)?;
            report.trace = Some(trace_json(&trace));
            report.nonconverged = !trace.converged;
            trace.final_limits
        }
    };
    if let Some(path) = &flags.out {
        let mut f = LimitsFile::new(space, out.clone())?;
        f.alpha = Some(alpha);
        f.method = report.header.get("method").map(plain);
        f.write(path)?;
    }
    Ok(out)
}

fn cmd_prop(args: &PropArgs, grid: &GridPolicy) -> Result<Report, Failure> {
    let method = PropMethod::from_str(&args.method).map_err(|e| usage(e.to_string()))?;
    let design = PropDesign::new(args.n, args.alpha)?;
    let space = SampleSpace::Prop { n: args.n };
    let mut report = Report::new(grid);
    report.header.insert("design".into(), json!("prop"));
    report.header.insert("n".into(), json!(args.n));
    report.header.insert("alpha".into(), json!(args.alpha));
    report.header.insert("method".into(), json!(method.tag()));
    let base = prop::method_limits(&design, &method, grid)?;
    let model = BinomialModel::new(args.n);
    let out = apply_refinement(&mut report, &model, space, base, args.alpha, grid, &args.refine)?;
    report.set_table(space, &out);
    let cov = coverage(space, report.table.as_ref().expect("table set"), 0, 0)?;
    report.summary.insert("icp".into(), coverage_json(&cov));
    report.summary.insert("til".into(), json!(out.til()));
    Ok(report)
}

fn cmd_diff(args: &DiffArgs, grid: &GridPolicy) -> Result<Report, Failure> {
    let method = DiffMethod::from_str(&args.method).map_err(|e| usage(e.to_string()))?;
    let design = DiffDesign::new(args.n1, args.n2, args.alpha)?;
    let space = SampleSpace::Diff { n1: args.n1, n2: args.n2 };
    let mut report = Report::new(grid);
    report.header.insert("design".into(), json!("diff"));
    report.header.insert("n1".into(), json!(args.n1));
    report.header.insert("n2".into(), json!(args.n2));
    report.header.insert("alpha".into(), json!(args.alpha));
    report.header.insert("method".into(), json!(method.tag()));
    if let Some((x, y)) = args.at {
        if x > args.n1 || y > args.n2 {
            return Err(Failure::from(Error::InvalidInput(format!(
                "point ({x},{y}) outside the sample space"
            ))));
        }
    }

    // A single interval without refinement needs no full table.
    if let (Some((x, y)), RefineLevel::None) = (args.at, args.refine.refine) {
        let (l, u) = match method {
            DiffMethod::Lrt => diff::h_interval_d(DiffStatKind::Lrt, x, y, &design, grid)?,
            DiffMethod::Score => diff::h_interval_d(DiffStatKind::Score, x, y, &design, grid)?,
            DiffMethod::Wald => diff::wald_interval_d_raw(x, y, &design)?,
            DiffMethod::Mle => diff::mle_point_d(x, y, &design)?,
        };
        let s = design.index(x, y);
        let mut one = LimitsTable::constant(design.num_points(), 0.0, 0.0);
        one.lower[s] = l;
        one.upper[s] = u;
        report.set_table(space, &one);
        report.rows = Some(vec![s]);
        return Ok(report);
    }

    let base = diff::diff_limits(&design, method, grid)?;
    let model = DiffModel::new(design);
    let out = apply_refinement(&mut report, &model, space, base, args.alpha, grid, &args.refine)?;
    report.set_table(space, &out);
    if let Some((x, y)) = args.at {
        report.rows = Some(vec![design.index(x, y)]);
    }
    let cov = coverage(space, report.table.as_ref().expect("table set"), args.icp_points, 0)?;
    report.summary.insert("icp".into(), coverage_json(&cov));
    report.summary.insert("til".into(), json!(out.til()));
    Ok(report)
}

fn cmd_mpair(args: &MpairArgs, grid: &GridPolicy) -> Result<Report, Failure> {
    let design = MPairDesign::new(args.n, args.alpha)?;
    let space = SampleSpace::Mpair { n: args.n };
    let file = LimitsFile::read(&args.limits, Some(space))?;
    let mut report = Report::new(grid);
    report.header.insert("design".into(), json!("mpair"));
    report.header.insert("n".into(), json!(args.n));
    report.header.insert("alpha".into(), json!(args.alpha));
    report
        .header
        .insert("method".into(), json!(file.method.clone().unwrap_or_else(|| "ingested".into())));
    let model = mpair::build_mpair_model(&design);
    let base = file.limits;
    let out = apply_refinement(&mut report, &model, space, base.clone(), args.alpha, grid, &args.refine)?;
    report.set_table(space, &out);
    if let Some((a, t)) = args.at {
        let s = model
            .index(a, t)
            .ok_or_else(|| Failure::from(Error::InvalidInput(format!("point ({a},{t}) outside the sample space"))))?;
        report.rows = Some(vec![s]);
        let p = mpair::h_m(&base, a, t, 0.0, &design, grid)?;
        report.summary.insert("p_value_at_zero".into(), json!(p));
    }
    let cov = coverage(space, report.table.as_ref().expect("table set"), 0, args.icp_steps)?;
    report.summary.insert("icp".into(), coverage_json(&cov));
    report.summary.insert("til".into(), json!(out.til()));
    Ok(report)
}

fn resolve_space(model: &Option<String>) -> Result<Option<SampleSpace>, Failure> {
    model
        .as_deref()
        .map(|m| SampleSpace::from_str(m).map_err(|e| usage(e.to_string())))
        .transpose()
}

fn cmd_refine(args: &RefineArgs, grid: &GridPolicy) -> Result<Report, Failure> {
    let file = LimitsFile::read(&args.limits, resolve_space(&args.model)?)?;
    let space = file.space;
    let model = space.model()?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::from(Error::InvalidInput(format!("alpha = {} outside (0, 1)", args.alpha))));
    }
    let mut report = Report::new(grid);
    report.header.insert("design".into(), json!(space.tag()));
    report.header.insert("model".into(), json!(space.to_string()));
    report.header.insert("alpha".into(), json!(args.alpha));
    if let Some(m) = &file.method {
        report.header.insert("method".into(), json!(m));
    }
    let out = match args.mode {
        Mode::TwoSided => {
            report.header.insert("mode".into(), json!("two-sided"));
            let flags = RefineFlags {
                refine: if args.once { RefineLevel::M } else { RefineLevel::Minf },
                max_k: args.max_k,
                out: None,
            };
            apply_refinement(&mut report, model.as_ref(), space, file.limits.clone(), args.alpha, grid, &flags)?
        }
        Mode::Lower | Mode::Upper => {
            let (side, order) = if args.mode == Mode::Lower {
                (OneSided::Lower, &file.limits.lower)
            } else {
                (OneSided::Upper, &file.limits.upper)
            };
            report
                .header
                .insert("mode".into(), json!(if side == OneSided::Lower { "lower" } else { "upper" }));
            refine::modify_one_sided(model.as_ref(), order, side, args.alpha, grid)?
        }
    };
    if let Some(path) = &args.out {
        let mut f = LimitsFile::new(space, out.clone())?;
        f.alpha = Some(args.alpha);
        f.method = file.method.clone();
        f.write(path)?;
    }
    report.set_table(space, &out);
    report.summary.insert("til".into(), json!(out.til()));
    Ok(report)
}

fn cmd_icp(args: &IcpArgs, grid: &GridPolicy) -> Result<Report, Failure> {
    let file = LimitsFile::read(&args.limits, resolve_space(&args.model)?)?;
    let space = file.space;
    let mut report = Report::new(grid);
    report.header.insert("design".into(), json!(space.tag()));
    report.header.insert("model".into(), json!(space.to_string()));
    report.set_table(space, &file.limits);
    let cov = coverage(space, report.table.as_ref().expect("table set"), args.icp_points, args.icp_steps)?;
    report.summary.insert("icp".into(), coverage_json(&cov));
    report.summary.insert("til".into(), json!(file.limits.til()));
    Ok(report)
}

fn cmd_gauss(cmd: &GaussCommand, grid: &GridPolicy) -> Result<Report, Failure> {
    let mut report = Report::new(grid);
    report.header.remove("grid");
    report.header.insert("design".into(), json!("gauss"));
    match cmd {
        GaussCommand::Zab { xbar, a, b, normal } => {
            let spec = GaussianSpec::new(normal.n, normal.sigma, normal.alpha)?;
            let iv = gauss::c_zab(*xbar, *a, *b, &spec)?;
            report.summary.insert("lower".into(), num(iv.lower));
            report.summary.insert("upper".into(), num(iv.upper));
            report.summary.insert("case".into(), json!(iv.case.to_string()));
        }
        GaussCommand::Box { xbar, a, b, normal } => {
            let spec = GaussianSpec::new(normal.n, normal.sigma, normal.alpha)?;
            let r = gauss::refine_box(*xbar, *a, *b, &spec)?;
            for (k, v) in [
                ("lower", r.lower),
                ("upper", r.upper),
                ("c1", r.c1),
                ("c2", r.c2),
                ("alpha1", r.alpha1),
                ("alpha2", r.alpha2),
            ] {
                report.summary.insert(k.into(), json!(v));
            }
        }
        GaussCommand::Tmod { c, n, alpha } => {
            let t = gauss::one_sided_t_modify(*c, *n, *alpha)?;
            report
                .summary
                .insert("result".into(), json!(if t.keep { "keep" } else { "whole line" }));
            report.summary.insert("threshold".into(), json!(t.threshold));
            report.summary.insert("h_below".into(), json!(t.h_below));
        }
    }
    Ok(report)
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    let grid = cli.grid.unwrap_or_default();
    match &cli.command {
        Command::Prop(a) => cmd_prop(a, &grid),
        Command::Diff(a) => cmd_diff(a, &grid),
        Command::Mpair(a) => cmd_mpair(a, &grid),
        Command::Refine(a) => cmd_refine(a, &grid),
        Command::Gauss(g) => cmd_gauss(g, &grid),
        Command::Icp(a) => cmd_icp(a, &grid),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(report) => {
            report.print(cli.format);
            if report.nonconverged {
                eprintln!("warning: refinement did not converge within --max-k iterations");
                ExitCode::from(EXIT_NONCONVERGED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
