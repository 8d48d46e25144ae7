//! Batch front end for the dckit toolkit.
//!
//! Loads a problem from a JSON file, the built-in gallery, or a seeded
//! generator; runs one of the iterative methods; writes a JSON report and a
//! CSV trace; and prints a short summary. Exit status: 0 when the run
//! terminated by its step criterion, 2 when it hit an iteration or penalty
//! cap, 3 on invalid input or an infeasibility diagnosis.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dckit::certify::{self, Certificate};
use dckit::consensus::{consensus_solve, ConsensusOptions};
use dckit::dca::{
    algorithm_one, algorithm_one_randomized, dca_baseline, BaselineSelection, DcProgram,
    SolveOptions, SolveReport, Termination,
};
use dckit::dcc::{
    algorithm_two, check_B_stationary, penalty_solve, Classification, ConstrainedDcProgram,
    PenaltySchedule,
};
use dckit::decomp::{build_dc, random_model, theta_bruteforce};
use dckit::json::{
    problem_from_json, problem_to_json, CertificateSummary, LoadedProblem, RunReport,
};
use dckit::models::{
    gallery_names, random_dc_program, random_secrecy_params, secrecy_rate_program, toy_gallery,
    GalleryProblem,
};
use dckit::Error;

#[derive(Parser)]
#[command(
    name = "dckit",
    version,
    about = "Difference-of-convex optimization: solve, certify, decompose, generate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an iterative method and write report.json / trace.csv.
    Solve(SolveArgs),
    /// Evaluate stationarity certificates at a query point.
    Certify(CertifyArgs),
    /// Build the dc decomposition of a seeded bivariate-term model.
    Decompose(DecomposeArgs),
    /// Emit a problem instance as a JSON document.
    Generate(GenerateArgs),
}

/// Where the problem comes from. Exactly one selector is required.
#[derive(Args)]
struct Source {
    /// Problem file in the JSON schema.
    #[arg(long, value_name = "PATH", group = "source")]
    problem: Option<PathBuf>,

    /// Built-in instance: example3, abs-square, neg-abs, plus-abs,
    /// quartic-constraint, qpcc-toy.
    #[arg(long, value_name = "NAME", group = "source")]
    gallery: Option<String>,

    /// Seeded random unconstrained instance, "dim,pieces".
    #[arg(long, value_name = "N,PIECES", group = "source")]
    random: Option<String>,

    /// Seeded secrecy-rate instance, "users,tones,jammer-tones".
    #[arg(long, value_name = "Q,N,J", group = "source")]
    secrecy: Option<String>,

    /// Per-user rate floors for the secrecy instance (turns it into a
    /// dc-constrained problem).
    #[arg(
        long,
        value_name = "R1,R2,...",
        value_delimiter = ',',
        requires = "secrecy"
    )]
    floors: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// All epsilon-active pieces per step, best merit wins.
    #[value(name = "algorithm1")]
    Algorithm1,
    /// Randomized piece sampling (uses --seed).
    #[value(name = "algorithm1-random")]
    Algorithm1Random,
    /// Classical single-piece baseline.
    #[value(name = "dca-baseline")]
    DcaBaseline,
    /// Feasible-iterates method for dc-constrained problems.
    #[value(name = "algorithm2")]
    Algorithm2,
    /// Exact-penalty method for dc-constrained problems.
    #[value(name = "penalty")]
    Penalty,
    /// Duplicated-variable consensus splitting for grouped objectives.
    #[value(name = "consensus")]
    Consensus,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Algorithm1 => "algorithm1",
            Method::Algorithm1Random => "algorithm1-random",
            Method::DcaBaseline => "dca-baseline",
            Method::Algorithm2 => "algorithm2",
            Method::Penalty => "penalty",
            Method::Consensus => "consensus",
        }
    }

    fn needs_constraint(self) -> bool {
        matches!(self, Method::Algorithm2 | Method::Penalty)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineRule {
    /// Lowest-index active piece.
    FirstActive,
    /// Active piece with the largest gradient norm.
    MaxGradientNorm,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(false)))]
struct SolveArgs {
    #[command(flatten)]
    source: Source,

    /// Iterative method to run.
    #[arg(long, value_enum)]
    method: Method,

    /// Start point "x1,x2,...". Defaults to the gallery's canonical start,
    /// else the projection of the origin onto the polyhedron.
    #[arg(
        long,
        value_name = "X1,X2,...",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    x0: Option<Vec<f64>>,

    /// Margin for the epsilon-active piece sets.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,

    /// Step-norm termination threshold.
    #[arg(long = "tol-step", default_value_t = 1e-8)]
    tol_step: f64,

    /// Iteration cap (per phase for penalty/consensus).
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,

    /// Seed for the randomized method and the seeded generators.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Initial penalty weight (penalty/consensus).
    #[arg(long, default_value_t = 1.0)]
    rho0: f64,

    /// Penalty growth factor (penalty/consensus).
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,

    /// Penalty weight cap; defaults to 1e8 for penalty and 1e6 for consensus.
    #[arg(long = "rho-max")]
    rho_max: Option<f64>,

    /// Tolerance for the closing certificates.
    #[arg(long = "cert-tol", default_value_t = 1e-6)]
    cert_tol: f64,

    /// Target consensus residual (consensus only).
    #[arg(long = "cons-tol", default_value_t = 1e-6)]
    cons_tol: f64,

    /// Piece-selection rule for dca-baseline.
    #[arg(long = "baseline-rule", value_enum, default_value = "first-active")]
    baseline_rule: BaselineRule,

    /// Trace CSV output path.
    #[arg(long, value_name = "PATH", default_value = "trace.csv")]
    trace: PathBuf,

    /// Report JSON output path.
    #[arg(long, value_name = "PATH", default_value = "report.json")]
    report: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(false)))]
struct CertifyArgs {
    #[command(flatten)]
    source: Source,

    /// Query point "x1,x2,...".
    #[arg(
        long,
        value_name = "X1,X2,...",
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    point: Vec<f64>,

    /// Certificate tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,

    /// Seed for the seeded generators.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Also write the verdict document here (it always goes to stdout).
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Model seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of random points for the agreement check.
    #[arg(long, default_value_t = 100)]
    samples: usize,

    /// Write the induced dc program here in the JSON problem schema.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Also write the summary document here (it always goes to stdout).
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(false)))]
struct GenerateArgs {
    #[command(flatten)]
    source: Source,

    /// Seed for the seeded generators.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output path (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and succeed; usage errors are
            // invalid parameters.
            let failed = e.use_stderr();
            let _ = e.print();
            return if failed { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::NonConvergence(_)) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Decompose(args) => cmd_decompose(args),
        Command::Generate(args) => cmd_generate(args),
    }
}

/// DCKIT_THREADS caps the rayon pool the inner loops draw from. Results do
/// not depend on it (candidate merges are index-ordered).
fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("DCKIT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        Error::InvalidParams(format!(
            "DCKIT_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    if threads == 0 {
        return Err(Error::InvalidParams("DCKIT_THREADS must be positive".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("rayon pool initialization")?;
    Ok(())
}

/// A resolved problem, plus the gallery's canonical start when there is one.
struct Loaded {
    problem: LoadedProblem,
    default_start: Option<DVector<f64>>,
}

fn load_source(source: &Source, seed: u64) -> anyhow::Result<Loaded> {
    if let Some(path) = &source.problem {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        return Ok(Loaded {
            problem: problem_from_json(&text)?,
            default_start: None,
        });
    }
    if let Some(name) = &source.gallery {
        let entry = toy_gallery(name).map_err(|e| match e {
            Error::UnknownName(_) => Error::UnknownName(format!(
                "no gallery entry {name:?}; known names: {}",
                gallery_names().join(", ")
            )),
            other => other,
        })?;
        let problem = match entry.problem {
            GalleryProblem::Unconstrained(p) => LoadedProblem::Unconstrained(p),
            GalleryProblem::Constrained(p) => LoadedProblem::Constrained(p),
        };
        return Ok(Loaded {
            problem,
            default_start: Some(entry.start),
        });
    }
    if let Some(spec) = &source.random {
        let dims = parse_sizes(spec, "--random", 2)?;
        return Ok(Loaded {
            problem: LoadedProblem::Unconstrained(random_dc_program(dims[0], dims[1], seed)?),
            default_start: None,
        });
    }
    if let Some(spec) = &source.secrecy {
        let dims = parse_sizes(spec, "--secrecy", 3)?;
        let mut params = random_secrecy_params(dims[0], dims[1], dims[2], seed)?;
        if let Some(floors) = &source.floors {
            params.floors = Some(floors.clone());
        }
        let build = secrecy_rate_program(&params)?;
        let problem = match build.constrained {
            Some(p) => LoadedProblem::Constrained(p),
            None => LoadedProblem::Unconstrained(build.program),
        };
        return Ok(Loaded {
            problem,
            default_start: None,
        });
    }
    unreachable!("clap enforces exactly one problem source")
}

fn parse_sizes(spec: &str, flag: &str, want: usize) -> anyhow::Result<Vec<usize>> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            Error::InvalidParams(format!(
                "{flag} expects {want} comma-separated nonnegative integers, got {spec:?}"
            ))
        })?;
    if parts.len() != want {
        return Err(Error::InvalidParams(format!(
            "{flag} expects {want} comma-separated values, got {} in {spec:?}",
            parts.len()
        ))
        .into());
    }
    Ok(parts)
}

fn parse_point(raw: &[f64], dim: usize, flag: &str) -> anyhow::Result<DVector<f64>> {
    if raw.len() != dim {
        return Err(Error::InvalidParams(format!(
            "{flag} has {} entries for a {dim}-dimensional problem",
            raw.len()
        ))
        .into());
    }
    Ok(DVector::from_row_slice(raw))
}

/// The unconstrained methods and the certificate checks work on a single
/// concave group; grouped programs are flattened first (pointwise unchanged).
fn flattened(program: &DcProgram) -> anyhow::Result<DcProgram> {
    Ok(program.flatten_groups()?)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

fn cmd_solve(args: SolveArgs) -> anyhow::Result<ExitCode> {
    let loaded = load_source(&args.source, args.seed)?;
    let dim = loaded.problem.base().dim();
    let x0 = match &args.x0 {
        Some(raw) => parse_point(raw, dim, "--x0")?,
        None => match &loaded.default_start {
            Some(s) => s.clone(),
            None => loaded
                .problem
                .base()
                .set
                .project(&DVector::zeros(dim), 1e-10)?,
        },
    };

    if args.method.needs_constraint() && loaded.problem.constrained().is_none() {
        return Err(Error::InvalidParams(format!(
            "method `{}` needs a dc constraint and this problem has none",
            args.method.as_str()
        ))
        .into());
    }
    if !args.method.needs_constraint() && loaded.problem.constrained().is_some() {
        return Err(Error::InvalidParams(format!(
            "method `{}` would ignore this problem's dc constraint; use algorithm2 or penalty",
            args.method.as_str()
        ))
        .into());
    }

    let opts = SolveOptions {
        epsilon: args.epsilon,
        tol_step: args.tol_step,
        max_iter: args.max_iter,
        seed: args.seed,
        ..SolveOptions::default()
    };

    let t0 = Instant::now();
    let (report, certificates, classification, rho_final, constraint_residual, consensus_residual) =
        match args.method {
            Method::Algorithm1 | Method::Algorithm1Random | Method::DcaBaseline => {
                let program = flattened(loaded.problem.base())?;
                let report = match args.method {
                    Method::Algorithm1 => algorithm_one(&program, &x0, &opts)?,
                    Method::Algorithm1Random => algorithm_one_randomized(&program, &x0, &opts)?,
                    _ => dca_baseline(
                        &program,
                        &x0,
                        &opts,
                        match args.baseline_rule {
                            BaselineRule::FirstActive => BaselineSelection::FirstActive,
                            BaselineRule::MaxGradientNorm => BaselineSelection::MaxGradientNorm,
                        },
                    )?,
                };
                let certs = unconstrained_certificates(&program, &report.x, args.cert_tol)?;
                (report, certs, None, None, None, None)
            }
            Method::Algorithm2 => {
                let program = loaded.problem.constrained().expect("checked above");
                let report = algorithm_two(program, &x0, &opts)?;
                let certs = boundary_certificates(program, &report.x, args.cert_tol)?;
                let residual = program.constraint_value(&report.x)?.max(0.0);
                (report, certs, None, None, Some(residual), None)
            }
            Method::Penalty => {
                let program = loaded.problem.constrained().expect("checked above");
                let schedule = PenaltySchedule {
                    rho0: args.rho0,
                    gamma: args.gamma,
                    rho_max: args.rho_max.unwrap_or(1e8),
                };
                let out = penalty_solve(program, &x0, &schedule, &opts)?;
                let certs = if out.classification == Classification::InfeasibleStationary {
                    vec![]
                } else {
                    boundary_certificates(program, &out.report.x, args.cert_tol)?
                };
                (
                    out.report,
                    certs,
                    Some(out.classification),
                    Some(out.rho_final),
                    Some(out.constraint_residual),
                    None,
                )
            }
            Method::Consensus => {
                let program = loaded.problem.base().clone();
                let copts = ConsensusOptions {
                    rho0: args.rho0,
                    gamma: args.gamma,
                    rho_max: args.rho_max.unwrap_or(1e6),
                    cons_tol: args.cons_tol,
                    cert_tol: args.cert_tol,
                    base: opts.clone(),
                    ..ConsensusOptions::default()
                };
                let out = consensus_solve(&program, &x0, &copts)?;
                let certs = vec![CertificateSummary::from(&out.certificate)];
                let rho = out.report.trace.last().and_then(|r| r.rho);
                (out.report, certs, None, rho, None, Some(out.consensus_residual))
            }
        };
    let wall = t0.elapsed();

    let run_report = RunReport {
        method: args.method.as_str().to_string(),
        x: report.x.iter().copied().collect(),
        zeta: report.zeta,
        termination: report.termination.as_str().to_string(),
        iterations: report.trace.last().map(|r| r.iter).unwrap_or(0),
        certificates,
        classification: classification.map(|c| c.as_str().to_string()),
        rho_final,
        constraint_residual,
        consensus_residual,
    };

    fs::write(&args.trace, report.trace_csv())
        .with_context(|| format!("writing {}", args.trace.display()))?;
    let mut json = run_report.to_json()?;
    json.push('\n');
    fs::write(&args.report, json)
        .with_context(|| format!("writing {}", args.report.display()))?;

    print_solve_summary(&args, &report, &run_report, wall.as_secs_f64());

    if classification == Some(Classification::InfeasibleStationary) {
        return Ok(ExitCode::from(3));
    }
    Ok(match report.termination {
        Termination::StepBelowTol => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    })
}

fn print_solve_summary(args: &SolveArgs, report: &SolveReport, run: &RunReport, wall: f64) {
    println!(
        "method={} termination={} iterations={} zeta={:.9e} wall={wall:.3}s",
        run.method, run.termination, run.iterations, run.zeta
    );
    println!("x = {}", fmt_vector(&report.x));
    if let Some(c) = &run.classification {
        println!("classification = {c}");
    }
    if let Some(rho) = run.rho_final {
        println!("rho_final = {rho:.3e}");
    }
    if let Some(r) = run.constraint_residual {
        println!("constraint_residual = {r:.3e}");
    }
    if let Some(r) = run.consensus_residual {
        println!("consensus_residual = {r:.3e}");
    }
    for c in &run.certificates {
        let cq = match c.cq_verified {
            Some(false) => ", cq unverified",
            _ => "",
        };
        println!(
            "certificate {}: {} (residual {:.3e}{cq})",
            c.kind, c.verdict, c.residual
        );
    }
    println!(
        "report: {}  trace: {}",
        args.report.display(),
        args.trace.display()
    );
}

fn fmt_vector(x: &DVector<f64>) -> String {
    let shown: Vec<String> = x.iter().take(8).map(|v| format!("{v:.10}")).collect();
    if x.len() <= 8 {
        format!("[{}]", shown.join(", "))
    } else {
        format!("[{}, ...] ({} entries)", shown.join(", "), x.len())
    }
}

/// d / critical / Clarke at the final point. The Clarke check only exists for
/// a smooth convex part; it is skipped (not failed) elsewhere.
fn unconstrained_certificates(
    program: &DcProgram,
    x: &DVector<f64>,
    tol: f64,
) -> anyhow::Result<Vec<CertificateSummary>> {
    let mut out = vec![
        CertificateSummary::from(&certify::check_d_stationary(program, x, tol)?),
        CertificateSummary::from(&certify::check_critical(program, x, tol)?),
    ];
    match certify::check_clarke(program, x, tol) {
        Ok(c) => out.push(CertificateSummary::from(&c)),
        Err(Error::UnsupportedStructure(_)) => {}
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

/// B-stationarity at the final point of a constrained run. A dc-infeasible
/// final point has no B claim; the classification already says what happened.
fn boundary_certificates(
    program: &ConstrainedDcProgram,
    x: &DVector<f64>,
    tol: f64,
) -> anyhow::Result<Vec<CertificateSummary>> {
    match check_B_stationary(program, x, tol) {
        Ok(c) => Ok(vec![CertificateSummary::from(&c)]),
        Err(Error::NotFeasible(_)) => Ok(vec![]),
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

fn cmd_certify(args: CertifyArgs) -> anyhow::Result<ExitCode> {
    let loaded = load_source(&args.source, args.seed)?;
    let dim = loaded.problem.base().dim();
    let x = parse_point(&args.point, dim, "--point")?;

    let mut certificates: Vec<Certificate> = vec![];
    let mut skipped: Vec<(String, String)> = vec![];
    match &loaded.problem {
        LoadedProblem::Unconstrained(p) => {
            let program = flattened(p)?;
            certificates.push(certify::check_d_stationary(&program, &x, args.tol)?);
            certificates.push(certify::check_critical(&program, &x, args.tol)?);
            match certify::check_clarke(&program, &x, args.tol) {
                Ok(c) => certificates.push(c),
                Err(Error::UnsupportedStructure(msg)) => skipped.push(("clarke".into(), msg)),
                Err(e) => return Err(e.into()),
            }
        }
        LoadedProblem::Constrained(p) => {
            certificates.push(check_B_stationary(p, &x, args.tol)?);
        }
    }

    let mut verdicts = serde_json::Map::new();
    for c in &certificates {
        verdicts.insert(
            c.kind.as_str().to_string(),
            serde_json::Value::String(c.verdict.as_str().to_string()),
        );
    }
    for (kind, _) in &skipped {
        verdicts.insert(kind.clone(), serde_json::Value::String("unsupported".into()));
    }

    let summaries: Vec<CertificateSummary> =
        certificates.iter().map(CertificateSummary::from).collect();
    let mut doc = serde_json::Map::new();
    doc.insert("point".into(), serde_json::json!(args.point));
    doc.insert("tol".into(), serde_json::json!(args.tol));
    doc.insert("verdicts".into(), serde_json::Value::Object(verdicts));
    doc.insert("certificates".into(), serde_json::json!(summaries));
    if !skipped.is_empty() {
        let entries: Vec<serde_json::Value> = skipped
            .iter()
            .map(|(kind, reason)| serde_json::json!({ "kind": kind, "reason": reason }))
            .collect();
        doc.insert("skipped".into(), serde_json::Value::Array(entries));
    }

    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
        .context("verdict serialization")?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = &args.report {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

fn cmd_decompose(args: DecomposeArgs) -> anyhow::Result<ExitCode> {
    let model = random_model(args.seed);
    let (dc, program) = build_dc(&model)?;

    // Agreement of the decomposition with direct enumeration at random
    // points; the model's factors are polynomial, so any box is in-domain.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(0x9e37_79b9));
    let mut max_gap = 0.0f64;
    for _ in 0..args.samples {
        let x = DVector::from_fn(model.dim(), |_, _| rng.random_range(-2.0..2.0));
        let direct = theta_bruteforce(&model, &x)?;
        let split = dc.u_value(&x)? + dc.v_value(&x)?;
        max_gap = max_gap.max((direct - split).abs());
    }

    let doc = serde_json::json!({
        "seed": args.seed,
        "dim": model.dim(),
        "agents": model.agents.len(),
        "u_terms": dc.u_negated.len(),
        "v_smooth_terms": dc.v_smooth.len(),
        "v_max_groups": dc.v_max.len(),
        "samples": args.samples,
        "max_abs_gap": max_gap,
    });
    let mut text = serde_json::to_string_pretty(&doc).context("summary serialization")?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = &args.report {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.out {
        let mut json = problem_to_json(&program, None)?;
        json.push('\n');
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let loaded = load_source(&args.source, args.seed)?;
    let mut text = match &loaded.problem {
        LoadedProblem::Unconstrained(p) => problem_to_json(p, None)?,
        LoadedProblem::Constrained(p) => problem_to_json(&p.base, Some(&p.constraint))?,
    };
    text.push('\n');
    match &args.out {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
