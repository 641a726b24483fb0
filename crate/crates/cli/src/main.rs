use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gexp::bsde::solve_root;
use gexp::choquet::{capacity_curve, choquet_expectation, distinct_values, estimated_cost, MERGE_TOLERANCE};
use gexp::generators::{
    check_hypotheses, probe_additivity, probe_positive_homogeneity, standard_pairs, ProbeSample, STANDARD_LAMBDAS,
};
use gexp::lab::{
    compare, oracle_value, run_suite, ClaimExpr, CoordinateMap, Format, GeneratorSpec, LabError, ReportRow, SuiteConfig,
    SuiteKind, SuiteReport, Tolerances, Verdict,
};
use gexp::lattice::LatticeModel;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gexp", version, about = "g-expectation and Choquet expectation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one BSDE and report E_g[claim].
    Solve(Single),
    /// Dump the capacity curve v -> V(claim >= v).
    Capacity(Single),
    /// One Choquet expectation.
    Choquet(Single),
    /// E_g against C_g for one claim.
    Compare {
        #[command(flatten)]
        single: Single,
        /// Largest |E_g - C_g| that counts as agreement.
        #[arg(long, default_value_t = Tolerances::default().oracle)]
        tol: f64,
    },
    /// Run an experiment suite.
    Suite(SuiteArgs),
    /// Probe reports.
    Check {
        #[command(subcommand)]
        target: CheckTarget,
    },
}

#[derive(Subcommand)]
enum CheckTarget {
    /// Sampled hypothesis, homogeneity and additivity checks for a generator.
    Generator {
        #[arg(long = "g")]
        g: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Single {
    #[arg(long = "g")]
    g: String,
    #[arg(long)]
    claim: String,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Warn when distinct values x lattice nodes exceeds this.
    #[arg(long, default_value_t = 1_000_000_000)]
    budget: u128,
}

#[derive(Args)]
struct SuiteArgs {
    /// equivalence, divergence or rotation.
    kind: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the embedded defaults for this suite and dimension, then exit.
    #[arg(long)]
    print_defaults: bool,
    #[arg(long = "g")]
    g: Option<String>,
    /// Repeatable; replaces the configured claims.
    #[arg(long)]
    claim: Vec<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Comma-separated ladder, e.g. 100,200,400.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value_t = 1_000_000_000)]
    budget: u128,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Verdict::Fail) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Verdict, LabError> {
    match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Capacity(a) => capacity(&a),
        Command::Choquet(a) => choquet(&a),
        Command::Compare { single, tol } => {
            let (spec, expr) = parse_single(&single)?;
            warn_budget(&single, &expr)?;
            let report = compare(&spec, &expr, single.dim, single.horizon, single.steps, tol)?;
            write_report(&report, single.out.as_deref(), parse_format(&single.format)?)?;
            Ok(report.verdict())
        }
        Command::Suite(a) => suite(a),
        Command::Check { target: CheckTarget::Generator { g, dim, horizon, out } } => check_generator(&g, dim, horizon, out),
    }
}

fn parse_format(s: &str) -> Result<Format, LabError> {
    Ok(s.parse::<Format>()?)
}

fn parse_single(a: &Single) -> Result<(GeneratorSpec, ClaimExpr), LabError> {
    let spec: GeneratorSpec = a.g.parse()?;
    let expr: ClaimExpr = a.claim.parse()?;
    if expr.max_coordinate() > a.dim {
        return Err(LabError::Config(format!("claim `{expr}` uses w{} on a {}-D lattice", expr.max_coordinate(), a.dim)));
    }
    Ok((spec, expr))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), LabError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|source| LabError::Report(gexp::lab::ReportError::Io { path: path.to_path_buf(), source })),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_report(report: &SuiteReport, out: Option<&Path>, format: Format) -> Result<(), LabError> {
    emit(&report.render(format)?, out)
}

fn warn_if_costly(model: &LatticeModel, expr: &ClaimExpr, budget: u128) -> Result<(), LabError> {
    let values = expr.compile(&CoordinateMap::Identity).terminal_values(model)?;
    let m = distinct_values(&values, MERGE_TOLERANCE).len();
    let cost = estimated_cost(model, m);
    if cost > budget {
        eprintln!(
            "warning: `{expr}` has {m} distinct values on N = {}; about {cost} node updates exceeds the budget of {budget}",
            model.steps()
        );
    }
    Ok(())
}

fn warn_budget(a: &Single, expr: &ClaimExpr) -> Result<(), LabError> {
    warn_if_costly(&LatticeModel::new(a.dim, a.horizon, a.steps)?, expr, a.budget)
}

fn solve(a: &Single) -> Result<Verdict, LabError> {
    let (spec, expr) = parse_single(a)?;
    let start = Instant::now();
    let g = spec.build(a.dim, a.horizon)?;
    let model = LatticeModel::new(a.dim, a.horizon, a.steps)?;
    let e_g = solve_root(&model, &g, &expr.compile(&CoordinateMap::Identity))?.y0;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let oracle = oracle_value(&spec, &expr, a.dim, a.horizon)?;
    let oracle_dev = oracle.map(|o| e_g - o);
    let verdict = Verdict::from_bool(oracle_dev.is_none_or(|d| d.abs() <= Tolerances::default().oracle));
    let row = ReportRow {
        suite: "solve".into(),
        generator: g.label().to_string(),
        claim: expr.to_string(),
        dimension: a.dim,
        steps: a.steps,
        e_g,
        c_g: None,
        gap: None,
        comono_gap: None,
        oracle,
        oracle_dev,
        verdict,
        runtime_ms,
    };
    let report = SuiteReport { rows: vec![row] };
    write_report(&report, a.out.as_deref(), parse_format(&a.format)?)?;
    Ok(verdict)
}

fn capacity(a: &Single) -> Result<Verdict, LabError> {
    let (spec, expr) = parse_single(a)?;
    warn_budget(a, &expr)?;
    let g = spec.build(a.dim, a.horizon)?;
    let model = LatticeModel::new(a.dim, a.horizon, a.steps)?;
    let curve = capacity_curve(&model, &g, &expr.compile(&CoordinateMap::Identity))?;
    let text = match parse_format(&a.format)? {
        Format::Csv => {
            let mut s = String::from("value,capacity\n");
            for (v, c) in curve.values().iter().zip(curve.capacities()) {
                s.push_str(&format!("{v:.16e},{c:.16e}\n"));
            }
            s
        }
        Format::Json => {
            let points: Vec<Value> =
                curve.values().iter().zip(curve.capacities()).map(|(v, c)| json!({"value": v, "capacity": c})).collect();
            let doc = json!({
                "generator": curve.generator(),
                "claim": expr.to_string(),
                "dimension": a.dim,
                "N": a.steps,
                "curve": points,
            });
            serde_json::to_string_pretty(&doc).map_err(gexp::lab::ReportError::from)? + "\n"
        }
    };
    emit(&text, a.out.as_deref())?;
    Ok(Verdict::Pass)
}

fn choquet(a: &Single) -> Result<Verdict, LabError> {
    let (spec, expr) = parse_single(a)?;
    warn_budget(a, &expr)?;
    let g = spec.build(a.dim, a.horizon)?;
    let model = LatticeModel::new(a.dim, a.horizon, a.steps)?;
    let result = choquet_expectation(&model, &g, &expr.compile(&CoordinateMap::Identity))?;
    let text = match parse_format(&a.format)? {
        Format::Csv => format!(
            "generator,claim,dimension,N,c_g,distinct_values\n{},\"{}\",{},{},{:.16e},{}\n",
            g.label(),
            expr,
            a.dim,
            a.steps,
            result.value,
            result.curve.len()
        ),
        Format::Json => {
            let doc = json!({
                "generator": g.label(),
                "claim": expr.to_string(),
                "dimension": a.dim,
                "N": a.steps,
                "c_g": result.value,
                "distinct_values": result.curve.len(),
            });
            serde_json::to_string_pretty(&doc).map_err(gexp::lab::ReportError::from)? + "\n"
        }
    };
    emit(&text, a.out.as_deref())?;
    Ok(Verdict::Pass)
}

fn suite(a: SuiteArgs) -> Result<Verdict, LabError> {
    let kind: SuiteKind = a.kind.parse()?;
    if a.print_defaults {
        println!("{}", SuiteConfig::defaults(kind, a.dim.unwrap_or(1)).to_json());
        return Ok(Verdict::Pass);
    }
    let mut config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| LabError::Config(format!("reading {}: {e}", path.display())))?;
            let config = SuiteConfig::from_json(&text)?;
            if config.suite != kind {
                return Err(LabError::Config(format!(
                    "{} is a {} config, not {}",
                    path.display(),
                    config.suite.name(),
                    kind.name()
                )));
            }
            config
        }
        None => SuiteConfig::defaults(kind, a.dim.unwrap_or(1)),
    };
    if let Some(d) = a.dim {
        config.dimension = d;
    }
    if let Some(g) = a.g {
        config.generator = g;
    }
    if !a.claim.is_empty() {
        config.claims = a.claim;
    }
    if let Some(t) = a.horizon {
        config.horizon = t;
    }
    if let Some(s) = &a.steps {
        config.steps = parse_ladder(s)?;
    }
    if let Some(f) = &a.format {
        config.format = parse_format(f)?;
    }
    let out = a.out.or_else(|| config.output.as_ref().map(PathBuf::from));
    config.validate()?;
    // rotation builds no capacity curves
    if config.suite != SuiteKind::Rotation {
        if let Some(&n) = config.steps.iter().max() {
            let model = LatticeModel::new(config.dimension, config.horizon, n)?;
            for expr in &config.claim_exprs()? {
                warn_if_costly(&model, expr, a.budget)?;
            }
        }
    }
    let report = run_suite(&config)?;
    write_report(&report, out.as_deref(), config.format)?;
    Ok(report.verdict())
}

fn parse_ladder(s: &str) -> Result<Vec<usize>, LabError> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|e| LabError::Parse { input: s.to_string(), message: e.to_string() })
        })
        .collect()
}

fn check_generator(spec: &str, dim: usize, horizon: f64, out: Option<PathBuf>) -> Result<Verdict, LabError> {
    let spec: GeneratorSpec = spec.parse()?;
    let g = spec.build(dim, horizon)?;
    let sample = ProbeSample::standard(g.dimension(), horizon);
    let hyp = check_hypotheses(&g, &sample)?;
    let hom = probe_positive_homogeneity(&g, &sample, &STANDARD_LAMBDAS)?;
    let add = probe_additivity(&g, &sample.times, &standard_pairs(&sample))?;
    let doc = json!({
        "generator": g.label(),
        "dimension": g.dimension(),
        "hypotheses": {
            "h3_max_violation": hyp.h3_max_violation,
            "lipschitz_estimate": hyp.lipschitz_estimate,
            "declared_lipschitz": hyp.declared_lipschitz,
            "tolerance": hyp.tolerance,
            "sample": hyp.sample,
            "zero_at_origin": hyp.zero_at_origin(),
            "lipschitz_ok": hyp.lipschitz_ok(),
            "passed": hyp.passed(),
        },
        "homogeneity": {
            "max_deviation": hom.max_deviation,
            "worst": hom.worst.map(|(t, y, z, l)| json!({"t": t, "y": y, "z": z, "lambda": l})),
        },
        "additivity": {
            "max_deviation": add.max_deviation,
            "worst": add.worst.map(|(t, z1, z2)| json!({"t": t, "z1": z1, "z2": z2})),
            "h": add.h.iter().map(|&(t, h)| json!({"t": t, "h": h})).collect::<Vec<_>>(),
        },
    });
    let text = serde_json::to_string_pretty(&doc).map_err(gexp::lab::ReportError::from)? + "\n";
    emit(&text, out.as_deref())?;
    Ok(Verdict::from_bool(hyp.passed()))
}
