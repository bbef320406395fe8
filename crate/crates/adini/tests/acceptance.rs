//! End-to-end acceptance suite: exact structural identities of the Adini
//! element, convergence-rate bands for the clamped biharmonic solver,
//! quadrature/assembly oracle agreement, and kernel structure.
//!
//! Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test -p adini --test acceptance -- --nocapture` to see them.
//! Expensive refinement studies are computed once and shared.

use std::sync::OnceLock;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adini::analysis::{
    consistency_error, consistency_probe, interpolate, interpolation_hessian_identity,
    random_quartic, residual_decomposition, run_study, scaled_l2_spread, SolveConfig,
    StudyParams, StudyRecord,
};
use adini::assembly::{affine_nodal_vector, Assembler};
use adini::element::{
    check_duality, face_expansion, face_residual_span, opposite_face_equality, random_shape_poly,
    AdiniElement,
};
use adini::field::{u1, u2};
use adini::linsolve::dense_rank;
use adini::mesh::BoxMesh;
use adini::polyq::{random, DRect, FloatPoly, RationalPoly};
use adini::quadrature::gauss_rule;

// ---- pinned experiment parameters and tolerances ----

/// Random boxes per dimension in the exact identity suite.
const EXACT_SUITE_BOXES: usize = 5;
/// Random trials per box and identity.
const EXACT_SUITE_TRIALS: usize = 20;
/// Wall-clock budget for the exact identity suite.
const EXACT_SUITE_BUDGET_SECONDS: f64 = 30.0;
/// Random boxes per dimension for the unisolvence check.
const UNISOLVENCE_BOXES: usize = 20;
/// Observed H² order band, d = 2 (two finest refinement pairs).
const ENERGY_BAND_D2: (f64, f64) = (1.8, 2.2);
/// Observed H² order band, d = 3 (finest pair).
const ENERGY_BAND_D3: (f64, f64) = (1.7, 2.3);
/// Combined compute budget for the uniform-mesh studies.
const STUDY_BUDGET_SECONDS: f64 = 300.0;
/// Breakpoint jitter fraction for the non-uniform-mesh study.
const JITTER_FRACTION: f64 = 0.25;
/// Fixed seed of the jittered coarse mesh.
const JITTER_SEED: u64 = 42;
/// Max allowed spread of N²-scaled L² errors (order exactly 2, not higher).
const SCALED_L2_SPREAD_MAX: f64 = 4.0;
/// Relative residual bound for the error-decomposition identity.
const RESIDUAL_IDENTITY_TOL: f64 = 1e-8;
/// Observed decay band of the consistency functional.
const CONSISTENCY_BAND: (f64, f64) = (1.7, 2.3);
/// Seed of the fixed random consistency probe.
const CONSISTENCY_PROBE_SEED: u64 = 2024;
/// Random boxes per dimension for the oracle-agreement checks.
const ORACLE_BOXES: usize = 10;
/// Relative tolerance for stiffness/quadrature oracle agreement.
const ORACLE_REL_TOL: f64 = 1e-12;
/// Relative tolerance for annihilation of affine nodal vectors.
const AFFINE_REL_TOL: f64 = 1e-12;
/// Relative pivot threshold for the dense rank computation.
const RANK_REL_TOL: f64 = 1e-9;
/// Conjugate-gradient relative residual target in all studies.
const SOLVER_TOL: f64 = 1e-10;

fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn in_band(value: f64, band: (f64, f64)) -> bool {
    (band.0..=band.1).contains(&value)
}

// ---- shared refinement studies (computed once) ----

fn study(u: &adini::field::FieldFn, dim: usize, ns: &[usize], jitter: f64, seed: u64) -> Vec<StudyRecord> {
    let params = StudyParams {
        dim,
        ns: ns.to_vec(),
        domain: DRect::unit(dim),
        jitter,
        seed,
        solve: SolveConfig {
            tol: SOLVER_TOL,
            ..SolveConfig::default()
        },
    };
    run_study(u, &params).expect("refinement study")
}

fn study_d2_uniform() -> &'static [StudyRecord] {
    static S: OnceLock<Vec<StudyRecord>> = OnceLock::new();
    S.get_or_init(|| study(&u2(2), 2, &[4, 8, 16, 32], 0.0, 0))
}

fn study_d3_u2() -> &'static [StudyRecord] {
    static S: OnceLock<Vec<StudyRecord>> = OnceLock::new();
    S.get_or_init(|| study(&u2(3), 3, &[4, 8, 16], 0.0, 0))
}

fn study_d3_u1() -> &'static [StudyRecord] {
    static S: OnceLock<Vec<StudyRecord>> = OnceLock::new();
    S.get_or_init(|| study(&u1(3), 3, &[4, 8, 16], 0.0, 0))
}

fn study_d2_jittered() -> &'static [StudyRecord] {
    static S: OnceLock<Vec<StudyRecord>> = OnceLock::new();
    S.get_or_init(|| study(&u2(2), 2, &[4, 8, 16, 32], JITTER_FRACTION, JITTER_SEED))
}

fn h2_order(records: &[StudyRecord], level: usize) -> f64 {
    records[level].orders[2].expect("order defined past the first level")
}

// ---- criteria ----

#[test]
fn exact_identity_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut run = || -> Result<(), String> {
        for d in 2..=3 {
            for _ in 0..EXACT_SUITE_BOXES {
                let rect = random::rect(&mut rng, d);
                for _ in 0..EXACT_SUITE_TRIALS {
                    let w = random_shape_poly(&mut rng, d);
                    opposite_face_equality(&w, &rect).map_err(|f| f.to_string())?;
                    face_expansion(&w, &rect).map_err(|f| f.to_string())?;
                    face_residual_span(&w, &rect).map_err(|f| f.to_string())?;
                    let q = random_quartic(&mut rng, d);
                    interpolation_hessian_identity(&q, &rect).map_err(|f| f.to_string())?;
                }
            }
        }
        Ok(())
    };
    let outcome = run();
    let seconds = start.elapsed().as_secs_f64();
    let within_budget = seconds < EXACT_SUITE_BUDGET_SECONDS;
    report(
        "exact identity suite",
        outcome.is_ok() && within_budget,
        &format!(
            "opposite-face equality, face expansion, residual span and Hessian identity: \
             {EXACT_SUITE_TRIALS} trials x {EXACT_SUITE_BOXES} boxes, d=2,3, exact rational \
             equality, {seconds:.1}s (budget {EXACT_SUITE_BUDGET_SECONDS:.0}s){}",
            outcome.err().map(|e| format!("; {e}")).unwrap_or_default()
        ),
    );
}

#[test]
fn unisolvence_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut failure = None;
    'outer: for d in 1..=3usize {
        let expected = (d + 1) << d;
        for _ in 0..UNISOLVENCE_BOXES {
            let rect = random::rect(&mut rng, d);
            let elem = AdiniElement::build(&rect);
            if elem.ndof() != expected {
                failure = Some(format!("d={d}: {} DOFs, expected {expected}", elem.ndof()));
                break 'outer;
            }
            if let Err(f) = check_duality(&elem) {
                failure = Some(f.to_string());
                break 'outer;
            }
        }
    }
    report(
        "unisolvence",
        failure.is_none(),
        &format!(
            "nodal basis built and bi-orthogonal on {UNISOLVENCE_BOXES} random boxes for \
             d=1,2,3; space dimensions 4/12/32{}",
            failure.map(|e| format!("; {e}")).unwrap_or_default()
        ),
    );
}

#[test]
fn energy_rate_uniform_meshes() {
    let d2 = study_d2_uniform();
    let d3 = study_d3_u2();
    let seconds: f64 = d2.iter().chain(d3).map(|r| r.seconds).sum();
    let d2_orders = [h2_order(d2, 2), h2_order(d2, 3)];
    let d3_order = h2_order(d3, 2);
    let pass = d2_orders.iter().all(|&o| in_band(o, ENERGY_BAND_D2))
        && in_band(d3_order, ENERGY_BAND_D3)
        && seconds < STUDY_BUDGET_SECONDS;
    report(
        "energy-norm rate on uniform meshes",
        pass,
        &format!(
            "d=2 H² orders {:.3}, {:.3} in [{}, {}]; d=3 finest order {:.3} in [{}, {}]; \
             solve time {seconds:.1}s (budget {STUDY_BUDGET_SECONDS:.0}s)",
            d2_orders[0],
            d2_orders[1],
            ENERGY_BAND_D2.0,
            ENERGY_BAND_D2.1,
            d3_order,
            ENERGY_BAND_D3.0,
            ENERGY_BAND_D3.1
        ),
    );
}

#[test]
fn energy_rate_jittered_meshes() {
    let records = study_d2_jittered();
    let orders = [h2_order(records, 2), h2_order(records, 3)];
    let pass = orders.iter().all(|&o| in_band(o, ENERGY_BAND_D2));
    report(
        "energy-norm rate on non-uniform meshes",
        pass,
        &format!(
            "jitter {JITTER_FRACTION}, seed {JITTER_SEED}: d=2 H² orders {:.3}, {:.3} \
             in [{}, {}]",
            orders[0], orders[1], ENERGY_BAND_D2.0, ENERGY_BAND_D2.1
        ),
    );
}

#[test]
fn l2_error_is_second_order_from_below() {
    let spread_u2 = scaled_l2_spread(study_d3_u2());
    let spread_u1 = scaled_l2_spread(study_d3_u1());
    let pass = matches!(spread_u2, Ok(s) if s <= SCALED_L2_SPREAD_MAX)
        && matches!(spread_u1, Ok(s) if s <= SCALED_L2_SPREAD_MAX);
    report(
        "L² lower-bound scaling",
        pass,
        &format!(
            "N²-scaled L² errors positive with spread ≤ {SCALED_L2_SPREAD_MAX}: \
             polynomial solution {:?}, trigonometric solution {:?} (d=3, N=4,8,16)",
            spread_u2.map(|s| format!("{s:.2}")),
            spread_u1.map(|s| format!("{s:.2}"))
        ),
    );
}

#[test]
fn residual_identity_closes() {
    let cfg = SolveConfig {
        tol: SOLVER_TOL,
        ..SolveConfig::default()
    };
    let mut detail = String::new();
    let mut pass = true;
    for d in 2..=3usize {
        let mesh = BoxMesh::uniform(&DRect::unit(d), &vec![4; d]).expect("mesh");
        let asm = Assembler::new();
        let r = residual_decomposition(&u2(d), &mesh, &asm, &cfg).expect("solve");
        pass &= r <= RESIDUAL_IDENTITY_TOL;
        detail.push_str(&format!("d={d}: {r:.2e}; "));
    }
    report(
        "error-decomposition identity",
        pass,
        &format!("relative residual ≤ {RESIDUAL_IDENTITY_TOL:.0e} at N=4: {detail}"),
    );
}

#[test]
fn consistency_error_decays_second_order() {
    let u = u2(2);
    let w = consistency_probe(2, CONSISTENCY_PROBE_SEED);
    let asm = Assembler::new();
    let rule = gauss_rule(6).expect("rule");
    let mut samples = Vec::new();
    for n in [4usize, 8, 16] {
        let mesh = BoxMesh::uniform(&DRect::unit(2), &[n, n]).expect("mesh");
        let wh = interpolate(&w, &mesh).expect("interpolant");
        let e = consistency_error(&u, &wh, &mesh, &asm, &rule);
        samples.push((mesh.h_max(), e));
    }
    let orders: Vec<f64> = samples
        .windows(2)
        .map(|p| (p[0].1 / p[1].1).ln() / (p[0].0 / p[1].0).ln())
        .collect();
    let pass = orders.iter().all(|&o| in_band(o, CONSISTENCY_BAND));
    report(
        "consistency-error decay",
        pass,
        &format!(
            "normalized nonconformity residual orders {:.3}, {:.3} in [{}, {}] \
             (d=2, N=4→8→16, fixed probe)",
            orders[0], orders[1], CONSISTENCY_BAND.0, CONSISTENCY_BAND.1
        ),
    );
}

/// Independent exact oracle: stiffness entries via rational integration of
/// the exact basis, no quadrature, no floats until the final comparison.
fn exact_local_stiffness(elem: &AdiniElement) -> Vec<f64> {
    let d = elem.dim();
    let rect = elem.geometry().centered();
    let basis = elem.shape().centered_basis();
    let n = basis.len();
    let mut s = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let mut acc = BigRational::from_integer(0.into());
            for i in 0..d {
                for j in 0..d {
                    let pa = basis[a].diff(i).diff(j);
                    let pb = basis[b].diff(i).diff(j);
                    acc += (&pa * &pb).integrate_box(&rect);
                }
            }
            let v = acc.to_f64().expect("finite stiffness entry");
            s[a * n + b] = v;
            s[b * n + a] = v;
        }
    }
    s
}

#[test]
fn stiffness_matches_exact_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let rule = gauss_rule(4).expect("rule");
    let mut worst = 0.0f64;
    for d in 2..=3 {
        let asm = Assembler::new();
        for _ in 0..ORACLE_BOXES {
            let rect = random::rect(&mut rng, d);
            let elem = asm.shapes().element(&rect);
            let got = asm.local_stiffness(rect.half_lengths(), &rule);
            let expect = exact_local_stiffness(&elem);
            let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (g, e) in got.iter().zip(&expect) {
                worst = worst.max((g - e).abs() / scale.max(e.abs()));
            }
        }
    }
    report(
        "local stiffness vs exact integration",
        worst <= ORACLE_REL_TOL,
        &format!(
            "entrywise relative deviation {worst:.2e} ≤ {ORACLE_REL_TOL:.0e} on \
             {ORACLE_BOXES} random boxes, d=2,3"
        ),
    );
}

#[test]
fn quadrature_matches_exact_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let rule = gauss_rule(4).expect("rule");
    let mut worst = 0.0f64;
    for d in 1..=3usize {
        for _ in 0..ORACLE_BOXES {
            let rect = random::rect(&mut rng, d);
            // Sparse random polynomial of degree ≤ 7 per axis: the highest
            // degree the 4-point tensor rule must integrate exactly.
            let mut p = RationalPoly::zero(d);
            for _ in 0..30 {
                let alpha: Vec<u32> = (0..d).map(|_| rng.random_range(0..=7)).collect();
                p = &p + &RationalPoly::monomial(d, alpha, random::rational(&mut rng));
            }
            let exact = p.integrate_box(&rect).to_f64().expect("finite integral");
            let fp: FloatPoly = p.to_float();
            let pts = rule.tensor_points(&rect.center_f64(), &rect.half_f64());
            let quad: f64 = pts.iter().map(|(x, w)| w * fp.eval(x)).sum();
            let l1: f64 = pts.iter().map(|(x, w)| w * fp.eval(x).abs()).sum();
            worst = worst.max((quad - exact).abs() / exact.abs().max(l1).max(1e-300));
        }
    }
    report(
        "tensor quadrature vs exact integration",
        worst <= ORACLE_REL_TOL,
        &format!(
            "4-point rule on degree-≤7-per-axis polynomials: relative deviation \
             {worst:.2e} ≤ {ORACLE_REL_TOL:.0e} on {ORACLE_BOXES} random boxes, d=1,2,3"
        ),
    );
}

#[test]
fn unconstrained_kernel_is_exactly_the_affines() {
    let rule = gauss_rule(4).expect("rule");
    let mut detail = String::new();
    let mut pass = true;
    for d in 1..=3usize {
        let mesh = BoxMesh::graded(&DRect::unit(d), &vec![2; d], 7, 0.3).expect("mesh");
        let asm = Assembler::new();
        let a = asm.assemble_unconstrained(&mesh, &rule);
        let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));

        // Annihilation of affine nodal vectors.
        let mut coeffs = vec![0.6; d + 1];
        coeffs[0] = -0.8;
        let v = affine_nodal_vector(&mesh, &coeffs);
        let worst = a
            .apply(&v)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()))
            / scale;
        pass &= worst <= AFFINE_REL_TOL;

        // Kernel dimension via dense rank.
        let n = a.n();
        let rank = dense_rank(&a.to_dense(), n, n, RANK_REL_TOL);
        let kernel = n - rank;
        pass &= kernel == d + 1;
        detail.push_str(&format!("d={d}: residual {worst:.1e}, kernel {kernel}; "));
    }
    report(
        "affine kernel of the unconstrained matrix",
        pass,
        &format!("N=2 meshes, annihilation ≤ {AFFINE_REL_TOL:.0e}, kernel dim d+1: {detail}"),
    );
}
