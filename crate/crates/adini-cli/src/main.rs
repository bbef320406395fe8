//! `adini` — solve the clamped biharmonic problem `Δ²u = f` with the Adini
//! element on box meshes (d = 1, 2, 3), run mesh-refinement studies, and
//! machine-verify the element's exact structural identities.
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed check or
//! assertion, 4 solver failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adini::analysis::{
    error_norms, final_orders, interpolation_hessian_identity, random_quartic,
    residual_decomposition, run_study, write_csv, DiscreteField, SolveConfig, StudyParams,
    StudyRecord,
};
use adini::assembly::Assembler;
use adini::element::{
    check_duality, face_expansion, face_residual_span, opposite_face_equality, random_shape_poly,
    AdiniElement, CheckOutcome,
};
use adini::field::{poly_from_text, u1, u2, FieldFn};
use adini::linsolve::{cg_solve, default_maxit};
use adini::mesh::{BoxMesh, DofMap};
use adini::polyq::{random, DRect};
use adini::quadrature::gauss_rule;

const CONFIG_ERROR: u8 = 2;
const CHECK_FAILURE: u8 = 3;
const SOLVER_FAILURE: u8 = 4;

/// Acceptance threshold for the numeric residual-decomposition check.
const RESIDUAL_IDENTITY_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "adini",
    version,
    about = "Adini finite elements for the clamped biharmonic problem on box meshes"
)]
struct Cli {
    /// Worker threads (overrides the ADINI_THREADS environment variable;
    /// default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve on a single mesh and report error norms.
    Solve(SolveArgs),
    /// Run a mesh-refinement study and emit CSV with observed orders.
    Convergence(ConvergenceArgs),
    /// Machine-verify the element's structural identities in exact
    /// rational arithmetic.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Space dimension (1, 2 or 3).
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Manufactured solution: `u1` (trigonometric), `u2` (polynomial),
    /// or the path of a polynomial file (one `coeff a1 .. ad` term per line).
    #[arg(long, default_value = "u2")]
    u: String,
    /// Relative jitter of interior mesh planes, in [0, 0.45].
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Seed for jittered meshes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gauss points per axis for stiffness and load assembly.
    #[arg(long, default_value_t = 4)]
    quad_assembly: usize,
    /// Gauss points per axis for error norms.
    #[arg(long, default_value_t = 6)]
    quad_error: usize,
    /// Relative residual tolerance for conjugate gradients.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Iteration cap for conjugate gradients (default scales with size).
    #[arg(long)]
    maxit: Option<usize>,
}

impl CommonArgs {
    fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            quad_assembly: self.quad_assembly,
            quad_error: self.quad_error,
            tol: self.tol,
            maxit: self.maxit,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Cells per axis on the unit box.
    #[arg(long, default_value_t = 8, conflicts_with = "mesh_file")]
    n: usize,
    /// Read the mesh from a breakpoint file instead of subdividing the
    /// unit box (`dim d` header, then one line of coordinates per axis).
    #[arg(long)]
    mesh_file: Option<PathBuf>,
    /// Write the assembled stiffness matrix in coordinate text form.
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
    /// Append the run as a one-line CSV record to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated cells per axis, coarse to fine.
    #[arg(long, default_value = "4,8,16")]
    ns: String,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assert an observed order on the finest mesh pair, e.g. `h2:1.8:2.2`
    /// (repeatable; norms: l2, h1, h2). Violations exit with code 3.
    #[arg(long = "assert-orders", value_name = "NORM:LO:HI")]
    assert_orders: Vec<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict to one dimension (default: all of 1, 2, 3).
    #[arg(long)]
    d: Option<usize>,
    /// Random (polynomial, box) pairs per check.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the numeric residual-decomposition check on a coarse mesh
    /// (d = 2 and 3).
    #[arg(long)]
    residual_identity: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("ADINI_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    let code = match cli.cmd {
        Cmd::Solve(args) => cmd_solve(&args),
        Cmd::Convergence(args) => cmd_convergence(&args),
        Cmd::Verify(args) => cmd_verify(&args),
    };
    ExitCode::from(code)
}

fn exit_code_for(err: &adini::Error) -> u8 {
    use adini::Error;
    match err {
        Error::CgStalled { .. }
        | Error::SingularMatrix { .. }
        | Error::QuadNoConvergence { .. } => SOLVER_FAILURE,
        _ => CONFIG_ERROR,
    }
}

fn fail(err: &adini::Error) -> u8 {
    eprintln!("error: {err}");
    exit_code_for(err)
}

/// Resolve `--u`: a built-in manufactured solution or a polynomial file.
fn manufactured(selector: &str, dim: usize) -> Result<FieldFn, u8> {
    let field = match selector {
        "u1" => u1(dim),
        "u2" => u2(dim),
        path => {
            let src = fs::read_to_string(Path::new(path)).map_err(|e| {
                eprintln!("error: cannot read polynomial file {path}: {e}");
                CONFIG_ERROR
            })?;
            poly_from_text(&src).map_err(|e| fail(&e))?
        }
    };
    if field.dim() != dim {
        eprintln!(
            "error: solution has dimension {}, mesh has dimension {dim}",
            field.dim()
        );
        return Err(CONFIG_ERROR);
    }
    Ok(field)
}

fn write_or_report(path: &Path, contents: &[u8]) -> Result<(), u8> {
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        CONFIG_ERROR
    })
}

fn cmd_solve(args: &SolveArgs) -> u8 {
    let mesh = match &args.mesh_file {
        Some(path) => {
            let src = match fs::read_to_string(path) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: cannot read mesh file {}: {e}", path.display());
                    return CONFIG_ERROR;
                }
            };
            match BoxMesh::from_text(&src) {
                Ok(m) => m,
                Err(e) => return fail(&e),
            }
        }
        None => {
            let d = args.common.d;
            if !(1..=3).contains(&d) {
                return fail(&adini::Error::BadDimension(d));
            }
            match BoxMesh::graded(
                &DRect::unit(d),
                &vec![args.n; d],
                args.common.seed,
                args.common.jitter,
            ) {
                Ok(m) => m,
                Err(e) => return fail(&e),
            }
        }
    };
    let d = mesh.dim();
    let u = match manufactured(&args.common.u, d) {
        Ok(u) => u,
        Err(code) => return code,
    };
    let cfg = args.common.solve_config();
    let start = std::time::Instant::now();
    let asm = Assembler::new();
    let dofs = DofMap::clamped(&mesh);
    let rule_a = match gauss_rule(cfg.quad_assembly) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let a = match asm.assemble(&mesh, &dofs, &rule_a) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    if let Some(path) = &args.dump_matrix {
        let mut buf = Vec::new();
        a.write_coordinate(&mut buf).expect("writing to memory");
        if let Err(code) = write_or_report(path, &buf) {
            return code;
        }
    }
    let f = u.biharmonic();
    let b = match asm.load_vector(&f, &mesh, &dofs, &rule_a) {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    let maxit = cfg.maxit.unwrap_or_else(|| default_maxit(a.n()));
    let (x, stats) = match cg_solve(&a, &b, cfg.tol, maxit) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let uh = DiscreteField::from_free(&dofs, &x, d);
    let rule_e = match gauss_rule(cfg.quad_error) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let errors = error_norms(&u, &uh, &mesh, &asm, &rule_e);
    let seconds = start.elapsed().as_secs_f64();

    println!(
        "d={d} cells={:?} dofs={} h={:.6e}",
        mesh.cells_per_axis(),
        dofs.num_free(),
        mesh.h_max()
    );
    println!(
        "l2={:.16e} h1={:.16e} h2={:.16e}",
        errors.l2, errors.h1, errors.h2
    );
    println!(
        "cg_iters={} restarts={} residual={:.3e} seconds={seconds:.3}",
        stats.iterations, stats.restarts, stats.residual
    );
    if let Some(path) = &args.out {
        let record = StudyRecord {
            n: mesh.cells_per_axis().iter().copied().max().unwrap_or(0),
            h: mesh.h_max(),
            dofs: dofs.num_free(),
            errors,
            orders: [None; 3],
            cg_iterations: stats.iterations,
            seconds,
        };
        let mut buf = Vec::new();
        write_csv(d, &[record], &mut buf).expect("writing to memory");
        if let Err(code) = write_or_report(path, &buf) {
            return code;
        }
    }
    0
}

fn cmd_convergence(args: &ConvergenceArgs) -> u8 {
    let d = args.common.d;
    let ns: Vec<usize> = match args
        .ns
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect()
    {
        Ok(ns) => ns,
        Err(e) => {
            eprintln!("error: bad --ns list {:?}: {e}", args.ns);
            return CONFIG_ERROR;
        }
    };
    if ns.is_empty() || ns.contains(&0) {
        eprintln!("error: --ns needs positive cell counts");
        return CONFIG_ERROR;
    }
    let u = match manufactured(&args.common.u, d) {
        Ok(u) => u,
        Err(code) => return code,
    };
    let params = StudyParams {
        dim: d,
        ns,
        domain: DRect::unit(d),
        jitter: args.common.jitter,
        seed: args.common.seed,
        solve: args.common.solve_config(),
    };
    let records = match run_study(&u, &params) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let mut buf = Vec::new();
    write_csv(d, &records, &mut buf).expect("writing to memory");
    match &args.out {
        Some(path) => {
            if let Err(code) = write_or_report(path, &buf) {
                return code;
            }
        }
        None => {
            std::io::stdout()
                .write_all(&buf)
                .expect("writing to stdout");
        }
    }
    for assertion in &args.assert_orders {
        match check_order_assertion(assertion, &records) {
            Ok(msg) => eprintln!("[PASS] {msg}"),
            Err(AssertionError::Config(msg)) => {
                eprintln!("error: {msg}");
                return CONFIG_ERROR;
            }
            Err(AssertionError::Lib(e)) => return fail(&e),
            Err(AssertionError::Violated(msg)) => {
                eprintln!("[FAIL] {msg}");
                return CHECK_FAILURE;
            }
        }
    }
    0
}

enum AssertionError {
    Config(String),
    Lib(adini::Error),
    Violated(String),
}

fn check_order_assertion(assertion: &str, records: &[StudyRecord]) -> Result<String, AssertionError> {
    let parts: Vec<&str> = assertion.split(':').collect();
    let [norm, lo, hi] = parts.as_slice() else {
        return Err(AssertionError::Config(format!(
            "bad --assert-orders value {assertion:?}; expected NORM:LO:HI"
        )));
    };
    let idx = match *norm {
        "l2" => 0,
        "h1" => 1,
        "h2" => 2,
        other => {
            return Err(AssertionError::Config(format!(
                "unknown norm {other:?} in {assertion:?}; use l2, h1 or h2"
            )))
        }
    };
    let bounds: Result<(f64, f64), _> = lo.parse().and_then(|l| hi.parse().map(|h| (l, h)));
    let (lo, hi) = bounds.map_err(|_| {
        AssertionError::Config(format!("bad bounds in --assert-orders value {assertion:?}"))
    })?;
    let orders = final_orders(records).map_err(AssertionError::Lib)?;
    let got = orders[idx];
    if (lo..=hi).contains(&got) {
        Ok(format!(
            "observed {norm} order {got:.4} within [{lo}, {hi}] on the finest pair"
        ))
    } else {
        Err(AssertionError::Violated(format!(
            "observed {norm} order {got:.4} outside [{lo}, {hi}] on the finest pair"
        )))
    }
}

fn report(outcome: CheckOutcome, label: &str) -> Result<(), u8> {
    match outcome {
        Ok(()) => Ok(()),
        Err(failure) => {
            eprintln!("[FAIL] {label}: {failure}");
            Err(CHECK_FAILURE)
        }
    }
}

fn cmd_verify(args: &VerifyArgs) -> u8 {
    let dims: Vec<usize> = match args.d {
        Some(d) if (1..=3).contains(&d) => vec![d],
        Some(d) => return fail(&adini::Error::BadDimension(d)),
        None => vec![1, 2, 3],
    };
    let trials = args.trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    for &d in &dims {
        for _ in 0..trials {
            let rect = random::rect(&mut rng, d);
            let elem = AdiniElement::build(&rect);
            if let Err(code) = report(check_duality(&elem), "nodal duality") {
                return code;
            }
        }
        println!("[PASS] nodal unisolvence and duality d={d} ({trials} boxes)");

        for _ in 0..trials {
            let rect = random::rect(&mut rng, d);
            let w = random_shape_poly(&mut rng, d);
            if let Err(code) = report(
                opposite_face_equality(&w, &rect),
                "opposite-face trace equality",
            ) {
                return code;
            }
            if let Err(code) = report(face_expansion(&w, &rect), "face expansion") {
                return code;
            }
            if let Err(code) = report(face_residual_span(&w, &rect), "face residual span") {
                return code;
            }
        }
        println!("[PASS] opposite-face trace equality d={d} ({trials} trials)");
        println!("[PASS] face expansion of the interpolation residual d={d} ({trials} trials)");
        println!("[PASS] face residual span membership d={d} ({trials} trials)");

        for _ in 0..trials {
            let rect = random::rect(&mut rng, d);
            let q = random_quartic(&mut rng, d);
            if let Err(code) = report(
                interpolation_hessian_identity(&q, &rect),
                "interpolation-error Hessian identity",
            ) {
                return code;
            }
        }
        println!("[PASS] interpolation-error Hessian identity d={d} ({trials} trials)");
    }

    if args.residual_identity {
        for &d in &dims {
            if d < 2 {
                continue;
            }
            let u = u2(d);
            let mesh = match BoxMesh::uniform(&DRect::unit(d), &vec![4; d]) {
                Ok(m) => m,
                Err(e) => return fail(&e),
            };
            let asm = Assembler::new();
            let cfg = SolveConfig::default();
            let r = match residual_decomposition(&u, &mesh, &asm, &cfg) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            if r > RESIDUAL_IDENTITY_TOL {
                eprintln!(
                    "[FAIL] residual decomposition d={d} N=4: residual {r:.3e} exceeds {RESIDUAL_IDENTITY_TOL:.0e}"
                );
                return CHECK_FAILURE;
            }
            println!("[PASS] residual decomposition d={d} N=4 (residual {r:.3e})");
        }
    }
    0
}
