//! Discrete solutions, interpolation, error norms, structural identity
//! checks and convergence studies for the clamped biharmonic problem.
//!
//! The measurement conventions used throughout:
//!
//! * broken H² seminorm squared: `Σ_K Σ_{i≤j} mult ∫_K (∂_ij v)²` with
//!   `mult = 2` for mixed pairs (Hessian Frobenius norm);
//! * observed order between two records: `ln(e₁/e₂) / ln(h₁/h₂)`;
//! * all element loops collect per-cell contributions in element order and
//!   sum sequentially, so results are bit-deterministic under threading.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;

use crate::assembly::{Assembler, LocalTables};
use crate::element::{hessian_pairs, AdiniElement, CheckFailure, CheckOutcome, NodalValues};
use crate::field::FieldFn;
use crate::linsolve::{cg_solve, default_maxit, CgStats};
use crate::mesh::{BoxMesh, DofMap};
use crate::polyq::{random, ratio, DRect, RationalPoly};
use crate::quadrature::{gauss_rule, QuadRule};
use crate::{Error, Result};

/// Global coefficient vector of a discrete function in the nodal basis:
/// `coeffs[g*(d+1)]` is the value at vertex `g`, `coeffs[g*(d+1)+1+k]`
/// the k-th first derivative.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    dim: usize,
    coeffs: Vec<f64>,
}

impl DiscreteField {
    pub fn from_coeffs(dim: usize, coeffs: Vec<f64>) -> Self {
        Self { dim, coeffs }
    }

    /// Expand a free-DOF vector to the full nodal layout, zero on
    /// constrained DOFs.
    pub fn from_free(dofs: &DofMap, free: &[f64], dim: usize) -> Self {
        Self {
            dim,
            coeffs: dofs.expand(free),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Pointwise difference of coefficient vectors.
    pub fn sub(&self, other: &DiscreteField) -> DiscreteField {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.coeffs.len(), other.coeffs.len(), "layout mismatch");
        DiscreteField {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Nodal interpolant: sample value and first derivatives of `f` at every
/// mesh vertex. Polynomial fields are sampled in exact rational arithmetic
/// (so e.g. clamped boundary data interpolates to exact zeros); analytic
/// fields are sampled in `f64`.
pub fn interpolate(f: &FieldFn, mesh: &BoxMesh) -> Result<DiscreteField> {
    let d = mesh.dim();
    if f.dim() != d {
        return Err(Error::DimensionMismatch(f.dim(), d));
    }
    let mut coeffs = vec![0.0; (d + 1) * mesh.num_vertices()];
    for g in 0..mesh.num_vertices() {
        let multi = mesh.vertex_multi(g);
        let mut alpha = vec![0u32; d];
        if f.is_polynomial() {
            let x = mesh.vertex_coord(&multi);
            coeffs[g * (d + 1)] = f.deriv_exact(&x, &alpha).unwrap().to_f64().unwrap();
            for k in 0..d {
                alpha[k] = 1;
                coeffs[g * (d + 1) + 1 + k] =
                    f.deriv_exact(&x, &alpha).unwrap().to_f64().unwrap();
                alpha[k] = 0;
            }
        } else {
            let x = mesh.vertex_coord_f64(&multi);
            coeffs[g * (d + 1)] = f.eval(&x);
            for k in 0..d {
                alpha[k] = 1;
                coeffs[g * (d + 1) + 1 + k] = f.deriv(&x, &alpha);
                alpha[k] = 0;
            }
        }
    }
    Ok(DiscreteField::from_coeffs(d, coeffs))
}

/// One side of an integral pairing over the mesh.
#[derive(Clone, Copy)]
pub enum Probe<'a> {
    Field(&'a FieldFn),
    Discrete(&'a DiscreteField),
    /// Pointwise difference `field − discrete`, evaluated jointly per
    /// quadrature point to avoid catastrophic cancellation of large pieces.
    Difference(&'a FieldFn, &'a DiscreteField),
}

/// Per-element evaluation context shared by the pairing loops.
struct CellCtx<'a> {
    tables: Arc<LocalTables>,
    gdofs: Vec<usize>,
    /// Physical quadrature points, tensor order matching `tables`.
    points: Vec<Vec<f64>>,
    pairs: &'a [(usize, usize)],
}

impl Probe<'_> {
    fn values(&self, ctx: &CellCtx) -> Vec<f64> {
        let nq = ctx.points.len();
        let disc = |uh: &DiscreteField, q: usize| -> f64 {
            ctx.gdofs
                .iter()
                .enumerate()
                .map(|(a, &g)| uh.coeffs[g] * ctx.tables.value[a][q])
                .sum()
        };
        (0..nq)
            .map(|q| match self {
                Probe::Field(f) => f.eval(&ctx.points[q]),
                Probe::Discrete(uh) => disc(uh, q),
                Probe::Difference(f, uh) => f.eval(&ctx.points[q]) - disc(uh, q),
            })
            .collect()
    }

    fn gradients(&self, ctx: &CellCtx, dim: usize) -> Vec<Vec<f64>> {
        let nq = ctx.points.len();
        let disc = |uh: &DiscreteField, k: usize, q: usize| -> f64 {
            ctx.gdofs
                .iter()
                .enumerate()
                .map(|(a, &g)| uh.coeffs[g] * ctx.tables.grad[a][k][q])
                .sum()
        };
        (0..dim)
            .map(|k| {
                let mut alpha = vec![0u32; dim];
                alpha[k] = 1;
                (0..nq)
                    .map(|q| match self {
                        Probe::Field(f) => f.deriv(&ctx.points[q], &alpha),
                        Probe::Discrete(uh) => disc(uh, k, q),
                        Probe::Difference(f, uh) => {
                            f.deriv(&ctx.points[q], &alpha) - disc(uh, k, q)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn hessians(&self, ctx: &CellCtx, dim: usize) -> Vec<Vec<f64>> {
        let nq = ctx.points.len();
        let disc = |uh: &DiscreteField, p: usize, q: usize| -> f64 {
            ctx.gdofs
                .iter()
                .enumerate()
                .map(|(a, &g)| uh.coeffs[g] * ctx.tables.hess[a][p][q])
                .sum()
        };
        ctx.pairs
            .iter()
            .enumerate()
            .map(|(p, &(i, j))| {
                let mut alpha = vec![0u32; dim];
                alpha[i] += 1;
                alpha[j] += 1;
                (0..nq)
                    .map(|q| match self {
                        Probe::Field(f) => f.deriv(&ctx.points[q], &alpha),
                        Probe::Discrete(uh) => disc(uh, p, q),
                        Probe::Difference(f, uh) => {
                            f.deriv(&ctx.points[q], &alpha) - disc(uh, p, q)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn per_cell_sum<F>(mesh: &BoxMesh, asm: &Assembler, rule: &QuadRule, cell: F) -> f64
where
    F: Fn(&CellCtx) -> f64 + Sync,
{
    let pairs = hessian_pairs(mesh.dim());
    let parts: Vec<f64> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let rect = mesh.element_box(e);
            let tables = asm.tables(rect.half_lengths(), rule);
            let center = rect.center_f64();
            let points = tables
                .points
                .iter()
                .map(|p| p.iter().zip(&center).map(|(u, c)| u + c).collect())
                .collect();
            let ctx = CellCtx {
                tables,
                gdofs: mesh.global_dofs(e),
                points,
                pairs: &pairs,
            };
            cell(&ctx)
        })
        .collect();
    parts.iter().sum()
}

/// L² pairing `(u, v) = Σ_K ∫_K u v` by quadrature.
pub fn l2_pairing(
    u: Probe,
    v: Probe,
    mesh: &BoxMesh,
    asm: &Assembler,
    rule: &QuadRule,
) -> f64 {
    per_cell_sum(mesh, asm, rule, |ctx| {
        let uv = u.values(ctx);
        let vv = v.values(ctx);
        ctx.tables
            .weights
            .iter()
            .zip(uv.iter().zip(&vv))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    })
}

/// Broken Hessian energy pairing
/// `a_h(u, v) = Σ_K Σ_{i,j} ∫_K ∂_ij u ∂_ij v`, mixed pairs counted twice.
pub fn energy_pairing(
    u: Probe,
    v: Probe,
    mesh: &BoxMesh,
    asm: &Assembler,
    rule: &QuadRule,
) -> f64 {
    let d = mesh.dim();
    per_cell_sum(mesh, asm, rule, |ctx| {
        let uh = u.hessians(ctx, d);
        let vh = v.hessians(ctx, d);
        let mut acc = 0.0;
        for (p, &(i, j)) in ctx.pairs.iter().enumerate() {
            let mult = if i == j { 1.0 } else { 2.0 };
            let dot: f64 = ctx
                .tables
                .weights
                .iter()
                .zip(uh[p].iter().zip(&vh[p]))
                .map(|(w, (a, b))| w * a * b)
                .sum();
            acc += mult * dot;
        }
        acc
    })
}

/// L², broken H¹ and broken H² (semi)norms of the error `u − u_h`.
#[derive(Clone, Copy, Debug)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// All three error norms of `u − u_h` in a single sweep over the mesh.
pub fn error_norms(
    u: &FieldFn,
    uh: &DiscreteField,
    mesh: &BoxMesh,
    asm: &Assembler,
    rule: &QuadRule,
) -> ErrorNorms {
    let d = mesh.dim();
    let diff = Probe::Difference(u, uh);
    let sums: Vec<[f64; 3]> = {
        let pairs = hessian_pairs(d);
        (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let rect = mesh.element_box(e);
                let tables = asm.tables(rect.half_lengths(), rule);
                let center = rect.center_f64();
                let points = tables
                    .points
                    .iter()
                    .map(|p| p.iter().zip(&center).map(|(x, c)| x + c).collect())
                    .collect();
                let ctx = CellCtx {
                    tables,
                    gdofs: mesh.global_dofs(e),
                    points,
                    pairs: &pairs,
                };
                let vals = diff.values(&ctx);
                let grads = diff.gradients(&ctx, d);
                let hess = diff.hessians(&ctx, d);
                let mut cell = [0.0f64; 3];
                for (q, w) in ctx.tables.weights.iter().enumerate() {
                    cell[0] += w * vals[q] * vals[q];
                    let g2: f64 = grads.iter().map(|gk| gk[q] * gk[q]).sum();
                    cell[1] += w * g2;
                    let h2: f64 = ctx
                        .pairs
                        .iter()
                        .enumerate()
                        .map(|(p, &(i, j))| {
                            let mult = if i == j { 1.0 } else { 2.0 };
                            mult * hess[p][q] * hess[p][q]
                        })
                        .sum();
                    cell[2] += w * h2;
                }
                cell
            })
            .collect()
    };
    let mut total = [0.0f64; 3];
    for cell in sums {
        for (t, c) in total.iter_mut().zip(cell) {
            *t += c;
        }
    }
    ErrorNorms {
        l2: total[0].max(0.0).sqrt(),
        h1: total[1].max(0.0).sqrt(),
        h2: total[2].max(0.0).sqrt(),
    }
}

/// Solver configuration shared by the drivers.
#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// Gauss points per axis for stiffness and load assembly.
    pub quad_assembly: usize,
    /// Gauss points per axis for error norms and pairings.
    pub quad_error: usize,
    /// Relative residual target for conjugate gradients.
    pub tol: f64,
    /// Iteration cap; `None` picks a size-based default.
    pub maxit: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            quad_assembly: 4,
            quad_error: 6,
            tol: 1e-10,
            maxit: None,
        }
    }
}

/// A discrete solve on one mesh.
pub struct SolveOutput {
    pub uh: DiscreteField,
    pub stats: CgStats,
    pub num_free: usize,
}

/// Solve the clamped discrete problem `a_h(u_h, v) = (f, v)` for all test
/// functions `v` with homogeneous value and gradient data on the boundary.
pub fn solve_clamped(
    f: &FieldFn,
    mesh: &BoxMesh,
    asm: &Assembler,
    cfg: &SolveConfig,
) -> Result<SolveOutput> {
    let dofs = DofMap::clamped(mesh);
    let rule = gauss_rule(cfg.quad_assembly)?;
    let a = asm.assemble(mesh, &dofs, &rule)?;
    let b = asm.load_vector(f, mesh, &dofs, &rule)?;
    let maxit = cfg.maxit.unwrap_or_else(|| default_maxit(a.n()));
    let (x, stats) = cg_solve(&a, &b, cfg.tol, maxit)?;
    Ok(SolveOutput {
        uh: DiscreteField::from_free(&dofs, &x, mesh.dim()),
        stats,
        num_free: dofs.num_free(),
    })
}

/// Consistency functional of the manufactured solution `u` against a fixed
/// discrete probe: `|a_h(u, w_h) − (Δ²u, w_h)| / |w_h|_{2,h}`.
///
/// For a conforming discretization this vanishes identically; for the
/// nonconforming element it measures the variational crime and is expected
/// to decay like h².
pub fn consistency_error(
    u: &FieldFn,
    wh: &DiscreteField,
    mesh: &BoxMesh,
    asm: &Assembler,
    rule: &QuadRule,
) -> f64 {
    let f = u.biharmonic();
    let num = energy_pairing(Probe::Field(u), Probe::Discrete(wh), mesh, asm, rule)
        - l2_pairing(Probe::Field(&f), Probe::Discrete(wh), mesh, asm, rule);
    let den = energy_pairing(Probe::Discrete(wh), Probe::Discrete(wh), mesh, asm, rule)
        .max(0.0)
        .sqrt();
    num.abs() / den
}

/// Fixed smooth probe for consistency studies: the clamped polynomial
/// `Π x_k²(1−x_k)²` times a seeded random polynomial of total degree ≤ 2.
/// Clamped boundary data makes its interpolant an admissible test function;
/// keeping it fixed across refinements isolates the h-dependence of the
/// consistency functional.
pub fn consistency_probe(dim: usize, seed: u64) -> FieldFn {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let bump = crate::field::u2_poly(dim);
    let mut factor = random::poly_total_degree(&mut rng, dim, 2);
    // Guard against the (improbable) zero draw.
    if factor.is_zero() {
        factor = RationalPoly::constant(dim, ratio(1, 1));
    }
    FieldFn::from_poly(&bump * &factor)
}

/// Exact check of the interpolation-error Hessian identity on one cell:
/// for `u` of total degree ≤ 4 and every shape function `v`,
///
/// `Σ_{i,j} ∫_K ∂_ij(u − Πu) ∂_ij v
///    = −Σ_i Σ_{j≠i} (h_j²/3) ∫_K (∂⁴u/∂x_i²∂x_j²) (∂²v/∂x_i²)`,
///
/// as an identity of rationals. Degree-5 data genuinely violates it, so a
/// failure report for such input is meaningful, not a bug.
pub fn interpolation_hessian_identity(u: &RationalPoly, rect: &DRect) -> CheckOutcome {
    assert_eq!(u.dim(), rect.dim(), "polynomial/box dimension mismatch");
    let d = rect.dim();
    // Work in the centered frame where the shape basis lives; the identity
    // commutes with translation.
    let centered = rect.centered();
    let uc = u.translate(rect.center());
    let elem = AdiniElement::build(&centered);
    let interp = elem.interp_nodal(&NodalValues::sample(&uc, &centered));
    let err = &uc - &interp;
    let third = ratio(1, 3);
    for (idx, v) in elem.shape().centered_basis().iter().enumerate() {
        let mut lhs = BigRational::zero();
        for i in 0..d {
            for j in 0..d {
                let e_ij = err.diff(i).diff(j);
                let v_ij = v.diff(i).diff(j);
                lhs += (&e_ij * &v_ij).integrate_box(&centered);
            }
        }
        let mut rhs = BigRational::zero();
        for i in 0..d {
            let v_ii = v.diff(i).diff(i);
            for j in 0..d {
                if j == i {
                    continue;
                }
                let u4 = uc.diff(i).diff(i).diff(j).diff(j);
                let h_j = &rect.half_lengths()[j];
                rhs -= h_j * h_j * &third * (&u4 * &v_ii).integrate_box(&centered);
            }
        }
        if lhs != rhs {
            return Err(Box::new(CheckFailure {
                check: "interpolation-error Hessian identity",
                detail: format!(
                    "shape function {idx} on {rect:?}: lhs = {lhs}, rhs = {rhs}, u = {u}"
                ),
            }));
        }
    }
    Ok(())
}

/// Relative residual of the error-decomposition identity that underlies the
/// L² error analysis. With `f = Δ²u`, `Πu` the interpolant and `u_h` the
/// discrete solution:
///
/// `(−f, u − u_h) = a_h(u, Πu − u_h) − (f, Πu − u_h)
///    + a_h(u − Πu, u − Πu) + a_h(u − Πu, u_h − Πu)
///    + 2(f, Πu − u) + 2 a_h(u − Πu, Πu)`.
///
/// The identity is algebraic given `a(u, u) = (f, u)` and Galerkin
/// orthogonality, so the residual is bounded by quadrature and solver
/// tolerance; a large value flags an inconsistency in the pipeline.
pub fn residual_decomposition(
    u: &FieldFn,
    mesh: &BoxMesh,
    asm: &Assembler,
    cfg: &SolveConfig,
) -> Result<f64> {
    let f = u.biharmonic();
    let solved = solve_clamped(&f, mesh, asm, cfg)?;
    let uh = solved.uh;
    let pi_u = interpolate(u, mesh)?;
    let pi_minus_uh = pi_u.sub(&uh);
    let uh_minus_pi = uh.sub(&pi_u);
    let rule = gauss_rule(cfg.quad_error)?;

    let lhs = -l2_pairing(
        Probe::Field(&f),
        Probe::Difference(u, &uh),
        mesh,
        asm,
        &rule,
    );
    let t1 = energy_pairing(
        Probe::Field(u),
        Probe::Discrete(&pi_minus_uh),
        mesh,
        asm,
        &rule,
    );
    let t2 = -l2_pairing(
        Probe::Field(&f),
        Probe::Discrete(&pi_minus_uh),
        mesh,
        asm,
        &rule,
    );
    let diff_u_pi = Probe::Difference(u, &pi_u);
    let t3 = energy_pairing(diff_u_pi, diff_u_pi, mesh, asm, &rule);
    let t4 = energy_pairing(diff_u_pi, Probe::Discrete(&uh_minus_pi), mesh, asm, &rule);
    let t5 = -2.0 * l2_pairing(Probe::Field(&f), diff_u_pi, mesh, asm, &rule);
    let t6 = 2.0 * energy_pairing(diff_u_pi, Probe::Discrete(&pi_u), mesh, asm, &rule);
    let rhs = t1 + t2 + t3 + t4 + t5 + t6;
    Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1.0))
}

/// Parameters of a mesh-refinement study.
#[derive(Clone, Debug)]
pub struct StudyParams {
    pub dim: usize,
    /// Cells per axis at each refinement level, coarse to fine.
    pub ns: Vec<usize>,
    pub domain: DRect,
    /// Relative perturbation of interior breakpoints, 0 for uniform meshes.
    pub jitter: f64,
    pub seed: u64,
    pub solve: SolveConfig,
}

impl StudyParams {
    pub fn uniform(dim: usize, ns: Vec<usize>) -> Self {
        Self {
            dim,
            ns,
            domain: DRect::unit(dim),
            jitter: 0.0,
            seed: 0,
            solve: SolveConfig::default(),
        }
    }
}

/// One refinement level of a study.
#[derive(Clone, Debug)]
pub struct StudyRecord {
    pub n: usize,
    pub h: f64,
    pub dofs: usize,
    pub errors: ErrorNorms,
    /// Observed orders (L², H¹, H²) against the previous level.
    pub orders: [Option<f64>; 3],
    pub cg_iterations: usize,
    pub seconds: f64,
}

/// Observed convergence order between consecutive (h, error) samples.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0 && h_coarse > h_fine && h_fine > 0.0) {
        return None;
    }
    Some((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
}

/// Run a refinement study for manufactured solution `u`: on each level
/// solve with `f = Δ²u`, measure error norms, and report observed orders.
///
/// With `jitter = 0` each level is the uniform mesh with `n` cells per
/// axis. With positive jitter the *coarsest* level is jittered once and
/// finer levels refine it exactly, so every level is non-uniform but the
/// largest cell shrinks by the exact level ratio — redrawing an
/// independent random mesh per level would contaminate the observed
/// orders with mesh-draw noise. Jittered studies therefore require each
/// `n` to be a multiple of the coarsest `n`.
pub fn run_study(u: &FieldFn, params: &StudyParams) -> Result<Vec<StudyRecord>> {
    if u.dim() != params.dim {
        return Err(Error::DimensionMismatch(u.dim(), params.dim));
    }
    if !(0.0..=0.45).contains(&params.jitter) {
        return Err(Error::BadJitter(params.jitter));
    }
    let f = u.biharmonic();
    let asm = Assembler::new();
    let err_rule = gauss_rule(params.solve.quad_error)?;
    let coarse = match params.ns.first() {
        Some(&n0) if params.jitter > 0.0 => Some(BoxMesh::graded(
            &params.domain,
            &vec![n0; params.dim],
            params.seed,
            params.jitter,
        )?),
        _ => None,
    };
    let mut records: Vec<StudyRecord> = Vec::with_capacity(params.ns.len());
    for &n in &params.ns {
        let start = Instant::now();
        let mesh = match &coarse {
            Some(coarse) => {
                let n0 = params.ns[0];
                if n % n0 != 0 {
                    return Err(Error::BadStudyLevels(n, n0));
                }
                coarse.refine(n / n0)?
            }
            None => BoxMesh::uniform(&params.domain, &vec![n; params.dim])?,
        };
        let solved = solve_clamped(&f, &mesh, &asm, &params.solve)?;
        let errors = error_norms(u, &solved.uh, &mesh, &asm, &err_rule);
        let h = mesh.h_max();
        let orders = match records.last() {
            Some(prev) => [
                observed_order(prev.errors.l2, errors.l2, prev.h, h),
                observed_order(prev.errors.h1, errors.h1, prev.h, h),
                observed_order(prev.errors.h2, errors.h2, prev.h, h),
            ],
            None => [None; 3],
        };
        records.push(StudyRecord {
            n,
            h,
            dofs: solved.num_free,
            errors,
            orders,
            cg_iterations: solved.stats.iterations,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Orders observed on the finest level pair, `[l2, h1, h2]`.
pub fn final_orders(records: &[StudyRecord]) -> Result<[f64; 3]> {
    if records.len() < 2 {
        return Err(Error::TooFewRecords);
    }
    let last = &records[records.len() - 1];
    if records[records.len() - 2].h <= last.h {
        return Err(Error::NonDecreasingH);
    }
    match last.orders {
        [Some(l2), Some(h1), Some(h2)] => Ok([l2, h1, h2]),
        _ => Err(Error::TooFewRecords),
    }
}

/// Spread `max/min` of the N²-scaled L² errors `N² · e_N` across records.
/// A bounded spread with positive entries witnesses a genuine Θ(h²) lower
/// bound at the sampled resolutions: the L² error is not quietly O(h³).
pub fn scaled_l2_spread(records: &[StudyRecord]) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::TooFewRecords);
    }
    let scaled: Vec<f64> = records
        .iter()
        .map(|r| (r.n * r.n) as f64 * r.errors.l2)
        .collect();
    let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scaled.iter().cloned().fold(0.0f64, f64::max);
    if !(min > 0.0) {
        return Err(Error::TooFewRecords);
    }
    Ok(max / min)
}

/// Write study records as CSV. All columns except `seconds` are
/// deterministic for fixed inputs; `seconds` is wall-clock time.
pub fn write_csv(dim: usize, records: &[StudyRecord], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "d,N,h,dofs,l2_err,h1_err,h2_err,l2_order,h1_order,h2_order,cg_iters,seconds"
    )?;
    for r in records {
        let ord = |o: Option<f64>| o.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{},{},{},{:.3}",
            dim,
            r.n,
            r.h,
            r.dofs,
            r.errors.l2,
            r.errors.h1,
            r.errors.h2,
            ord(r.orders[0]),
            ord(r.orders[1]),
            ord(r.orders[2]),
            r.cg_iterations,
            r.seconds
        )?;
    }
    Ok(())
}

/// Random polynomial of total degree ≤ 4 for identity sweeps: the degree
/// cap is exactly the regime where the Hessian identity holds.
pub fn random_quartic(rng: &mut impl Rng, dim: usize) -> RationalPoly {
    random::poly_total_degree(rng, dim, 4)
}
