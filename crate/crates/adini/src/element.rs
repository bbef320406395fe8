//! The Adini element on a d-rectangle: shape space, nodal basis, local
//! interpolation operators, and the exact structural identities its faces
//! satisfy.
//!
//! The shape space is `Q1(K) + span{ x_i^2 q : q in Q1(K), i = 1..d }`,
//! of dimension `(d+1)·2^d`. Degrees of freedom are the value and the `d`
//! physical first derivatives at each vertex, ordered vertex-major with the
//! value slot first. Vertices follow the lexicographic sign order of
//! [`crate::polyq::DRect::vertices`].
//!
//! Basis polynomials are stored in the *centered* frame `u = x - x_c` of
//! their box, which makes them a function of the half-lengths alone; the
//! [`ShapeCache`] exploits that to solve the nodal system once per distinct
//! cell shape. Every other polynomial-valued operation in this module speaks
//! the physical frame.

use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use crate::polyq::{ratio, vertex_sign, DRect, FloatPoly, MultiIndex, RationalPoly, Side};

/// All exponent multi-indices of the Adini shape space in `dim` variables:
/// the `2^d` multilinear ones, then for each axis `i` the monomials with
/// `alpha_i in {2, 3}` and every other exponent at most 1.
pub fn shape_monomials(dim: usize) -> Vec<MultiIndex> {
    assert!((1..=3).contains(&dim), "dimension {dim} unsupported");
    let mut out = Vec::with_capacity((dim + 1) << dim);
    let mut multilinear: Vec<MultiIndex> = (0..1u32 << dim)
        .map(|bits| (0..dim).map(|k| (bits >> k) & 1).collect())
        .collect();
    multilinear.sort();
    out.extend(multilinear.iter().cloned());
    for axis in 0..dim {
        for exp in [2u32, 3u32] {
            let mut block: Vec<MultiIndex> = multilinear
                .iter()
                .filter(|alpha| alpha[axis] == 0)
                .map(|alpha| {
                    let mut beta = alpha.clone();
                    beta[axis] = exp;
                    beta
                })
                .collect();
            block.sort();
            out.extend(block);
        }
    }
    debug_assert_eq!(out.len(), (dim + 1) << dim);
    out
}

/// Ordered upper-triangle Hessian index pairs `(i, j)` with `i <= j`.
pub fn hessian_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in i..dim {
            out.push((i, j));
        }
    }
    out
}

/// Local degree-of-freedom index for vertex `v`, slot `s`
/// (`s = 0`: value, `s = 1 + k`: derivative along axis `k`).
pub fn local_dof(vertex: usize, slot: usize, dim: usize) -> usize {
    vertex * (dim + 1) + slot
}

/// Shape-dependent element data: the nodal basis in the centered frame plus
/// floating-point twins of its derivatives, shared between all cells of the
/// same size.
pub struct ElementShape {
    dim: usize,
    half: Vec<BigRational>,
    monomials: Vec<MultiIndex>,
    basis: Vec<RationalPoly>,
    basis_float: Vec<FloatPoly>,
    grad_float: Vec<Vec<FloatPoly>>,
    hess_float: Vec<Vec<FloatPoly>>,
}

impl ElementShape {
    /// Solve the nodal system exactly for a centered box with the given
    /// half-lengths. Panics if the nodal matrix is singular: the Adini
    /// element is unisolvent on every genuine box, so that is a bug.
    pub fn build(dim: usize, half: &[BigRational]) -> Self {
        assert_eq!(half.len(), dim);
        let monomials = shape_monomials(dim);
        let n = monomials.len();
        let rect = DRect::new(vec![BigRational::zero(); dim], half.to_vec());
        let vertices = rect.vertices();

        // Row r = nodal parameter, column c = monomial: M[r][c] = param_r(x^alpha_c).
        let mut m = vec![vec![BigRational::zero(); n]; n];
        for (v, vertex) in vertices.iter().enumerate() {
            for (c, alpha) in monomials.iter().enumerate() {
                let mono = RationalPoly::monomial(dim, alpha.clone(), BigRational::one());
                m[local_dof(v, 0, dim)][c] = mono.eval(vertex);
                for k in 0..dim {
                    m[local_dof(v, 1 + k, dim)][c] = mono.diff(k).eval(vertex);
                }
            }
        }
        let inv = invert_rational(m).expect("Adini nodal matrix must be unisolvent on a box");

        // Basis j has coefficient inv[c][j] on monomial c, making the nodal
        // parameters dual to the basis.
        let basis: Vec<RationalPoly> = (0..n)
            .map(|j| {
                RationalPoly::from_terms(
                    dim,
                    monomials
                        .iter()
                        .enumerate()
                        .map(|(c, alpha)| (alpha.clone(), inv[c][j].clone())),
                )
            })
            .collect();

        let basis_float = basis.iter().map(RationalPoly::to_float).collect();
        let grad_float = basis
            .iter()
            .map(|b| (0..dim).map(|k| b.diff(k).to_float()).collect())
            .collect();
        let pairs = hessian_pairs(dim);
        let hess_float = basis
            .iter()
            .map(|b| {
                pairs
                    .iter()
                    .map(|&(i, j)| b.diff(i).diff(j).to_float())
                    .collect()
            })
            .collect();

        Self {
            dim,
            half: half.to_vec(),
            monomials,
            basis,
            basis_float,
            grad_float,
            hess_float,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Degrees of freedom per element: `(d+1)·2^d`.
    pub fn ndof(&self) -> usize {
        self.basis.len()
    }

    pub fn half_lengths(&self) -> &[BigRational] {
        &self.half
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    /// Exact nodal basis in the centered frame `u = x - x_c`.
    pub fn centered_basis(&self) -> &[RationalPoly] {
        &self.basis
    }

    /// `f64` twin of basis function `j` (centered frame).
    pub fn basis_float(&self, j: usize) -> &FloatPoly {
        &self.basis_float[j]
    }

    /// `f64` twin of `∂ basis_j / ∂x_k` (centered frame).
    pub fn grad_float(&self, j: usize, k: usize) -> &FloatPoly {
        &self.grad_float[j][k]
    }

    /// `f64` twin of the Hessian entry of basis `j` for upper-triangle pair `p`.
    pub fn hess_float(&self, j: usize, pair: usize) -> &FloatPoly {
        &self.hess_float[j][pair]
    }
}

/// Concurrent cache of [`ElementShape`]s keyed by exact half-lengths.
/// Uniform meshes hit a single entry; jittered meshes one per distinct size.
#[derive(Default)]
pub struct ShapeCache {
    shapes: DashMap<Vec<BigRational>, Arc<ElementShape>>,
}

impl ShapeCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fetch or build (at most once per key) the shape for these half-lengths.
    pub fn shape(&self, half: &[BigRational]) -> Arc<ElementShape> {
        if let Some(hit) = self.shapes.get(half) {
            return hit.clone();
        }
        self.shapes
            .entry(half.to_vec())
            .or_insert_with(|| Arc::new(ElementShape::build(half.len(), half)))
            .clone()
    }

    /// Element bound to a concrete cell.
    pub fn element(&self, rect: &DRect) -> AdiniElement {
        AdiniElement {
            shape: self.shape(rect.half_lengths()),
            rect: rect.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }
}

/// An Adini element on a concrete cell: shared shape data plus geometry.
pub struct AdiniElement {
    rect: DRect,
    shape: Arc<ElementShape>,
}

impl AdiniElement {
    /// Build without a cache (tests and one-off checks).
    pub fn build(rect: &DRect) -> Self {
        Self {
            shape: Arc::new(ElementShape::build(rect.dim(), rect.half_lengths())),
            rect: rect.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rect.dim()
    }

    pub fn ndof(&self) -> usize {
        self.shape.ndof()
    }

    pub fn geometry(&self) -> &DRect {
        &self.rect
    }

    pub fn shape(&self) -> &Arc<ElementShape> {
        &self.shape
    }

    /// Nodal interpolant: the unique shape-space polynomial matching the
    /// given vertex values and gradients. Physical frame.
    pub fn interp_nodal(&self, values: &NodalValues) -> RationalPoly {
        assert_eq!(values.dim(), self.dim(), "nodal data dimension mismatch");
        let d = self.dim();
        let mut p = RationalPoly::zero(d);
        for v in 0..values.num_vertices() {
            let data = values.vertex(v);
            p = &p + &self.shape.basis[local_dof(v, 0, d)].scale(&data.value);
            for k in 0..d {
                p = &p + &self.shape.basis[local_dof(v, 1 + k, d)].scale(&data.gradient[k]);
            }
        }
        // The basis lives in the centered frame; shift back to physical.
        let neg_center: Vec<BigRational> =
            self.rect.center().iter().map(|c| -c.clone()).collect();
        p.translate(&neg_center)
    }

    /// Multilinear interpolant of the vertex *values* (gradients ignored).
    /// Physical frame.
    pub fn interp_bilinear(&self, values: &NodalValues) -> RationalPoly {
        assert_eq!(values.dim(), self.dim(), "nodal data dimension mismatch");
        bilinear_from_values(
            &(0..values.num_vertices())
                .map(|v| values.vertex(v).value.clone())
                .collect::<Vec<_>>(),
            &self.rect,
        )
    }
}

/// Vertex value plus the `d` physical first derivatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexData {
    pub value: BigRational,
    pub gradient: Vec<BigRational>,
}

/// Exact nodal data at the `2^d` vertices of a cell, in lexicographic
/// vertex order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodalValues {
    dim: usize,
    data: Vec<VertexData>,
}

impl NodalValues {
    pub fn new(dim: usize, data: Vec<VertexData>) -> Self {
        assert_eq!(data.len(), 1 << dim, "need one record per vertex");
        assert!(
            data.iter().all(|v| v.gradient.len() == dim),
            "gradient length must equal dim"
        );
        Self { dim, data }
    }

    /// Sample value and gradient of a physical-frame polynomial at the
    /// vertices of `rect`.
    pub fn sample(p: &RationalPoly, rect: &DRect) -> Self {
        assert_eq!(p.dim(), rect.dim(), "polynomial/box dimension mismatch");
        let grads: Vec<RationalPoly> = (0..p.dim()).map(|k| p.diff(k)).collect();
        let data = rect
            .vertices()
            .iter()
            .map(|x| VertexData {
                value: p.eval(x),
                gradient: grads.iter().map(|g| g.eval(x)).collect(),
            })
            .collect();
        Self::new(p.dim(), data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.data.len()
    }

    pub fn vertex(&self, v: usize) -> &VertexData {
        &self.data[v]
    }
}

/// Multilinear interpolant of per-vertex values on `rect` (physical frame):
/// `sum_v value_v · prod_k (1 + s_k (x_k - c_k)/h_k)/2`.
fn bilinear_from_values(values: &[BigRational], rect: &DRect) -> RationalPoly {
    let d = rect.dim();
    assert_eq!(values.len(), 1 << d);
    let half = ratio(1, 2);
    let mut out = RationalPoly::zero(d);
    for (v, value) in values.iter().enumerate() {
        let mut hat = RationalPoly::constant(d, BigRational::one());
        for k in 0..d {
            let sign = BigRational::from_integer(BigInt::from(vertex_sign(v, k, d)));
            // (1 ± (x_k - c_k)/h_k) / 2
            let lin = RationalPoly::from_terms(
                d,
                [
                    (vec![0; d], BigRational::one() - &sign * &rect.center()[k] / &rect.half_lengths()[k]),
                    (
                        {
                            let mut a = vec![0; d];
                            a[k] = 1;
                            a
                        },
                        &sign / &rect.half_lengths()[k],
                    ),
                ],
            );
            hat = &hat * &lin.scale(&half);
        }
        out = &out + &hat.scale(value);
    }
    out
}

/// Mean value of `p` over `rect`: `(1/|K|) ∫_K p`.
pub fn cell_average(p: &RationalPoly, rect: &DRect) -> BigRational {
    p.integrate_box(rect) / rect.volume()
}

/// Residual of the multilinear vertex interpolant: `p - Π¹ p`.
/// Vanishes at every vertex of `rect`.
pub fn r1(p: &RationalPoly, rect: &DRect) -> RationalPoly {
    assert_eq!(p.dim(), rect.dim(), "polynomial/box dimension mismatch");
    let values: Vec<BigRational> = rect.vertices().iter().map(|x| p.eval(x)).collect();
    p - &bilinear_from_values(&values, rect)
}

/// Multi-indices `M_{i,j}`: `alpha_i = 1`, `alpha_j in {2, 3}`, all other
/// exponents at most 1. These index the mean derivatives appearing in the
/// face expansion of `r1(∂w/∂x_i)`.
pub fn m_indices(dim: usize, i: usize, j: usize) -> Vec<MultiIndex> {
    assert!(i < dim && j < dim && i != j, "need two distinct axes");
    let others: Vec<usize> = (0..dim).filter(|&k| k != i && k != j).collect();
    let mut out = Vec::new();
    for ej in [2u32, 3u32] {
        for bits in 0..1u32 << others.len() {
            let mut alpha = vec![0u32; dim];
            alpha[i] = 1;
            alpha[j] = ej;
            for (b, &k) in others.iter().enumerate() {
                alpha[k] = (bits >> b) & 1;
            }
            out.push(alpha);
        }
    }
    out.sort();
    out
}

/// Polynomial factor multiplying the mean derivative `Π₀(∂^alpha w)` in the
/// face expansion, for `alpha in M_{i,j}` (physical frame):
/// `(1/alpha_j!)·[(x_j-c_j)^{alpha_j} - h_j²(x_j-c_j)^{alpha_j-2}]·(x-c)^{alpha - e_i - alpha_j e_j}`.
///
/// Panics when `alpha` is not a member of `M_{i,j}`.
pub fn b_coefficient(rect: &DRect, i: usize, j: usize, alpha: &[u32]) -> RationalPoly {
    let d = rect.dim();
    assert_eq!(alpha.len(), d, "multi-index length must equal dim");
    assert!(i < d && j < d && i != j, "need two distinct axes");
    assert!(
        alpha[i] == 1
            && (alpha[j] == 2 || alpha[j] == 3)
            && (0..d).filter(|&k| k != i && k != j).all(|k| alpha[k] <= 1),
        "multi-index {alpha:?} is outside M_{{{i},{j}}}"
    );

    let centered_var = |k: usize| {
        &RationalPoly::var(d, k) - &RationalPoly::constant(d, rect.center()[k].clone())
    };
    let uj = centered_var(j);
    let mut uj_pow = RationalPoly::constant(d, BigRational::one());
    for _ in 0..alpha[j] {
        uj_pow = &uj_pow * &uj;
    }
    let mut uj_low = RationalPoly::constant(d, BigRational::one());
    for _ in 0..alpha[j] - 2 {
        uj_low = &uj_low * &uj;
    }
    let hj2 = &rect.half_lengths()[j] * &rect.half_lengths()[j];
    let factorial = ratio(if alpha[j] == 2 { 2 } else { 6 }, 1);
    let mut out = (&uj_pow - &uj_low.scale(&hj2)).scale(&(BigRational::one() / factorial));
    for k in (0..d).filter(|&k| k != i && k != j) {
        for _ in 0..alpha[k] {
            out = &out * &centered_var(k);
        }
    }
    out
}

/// Random member of the Adini shape space on any cell (the span of
/// [`shape_monomials`] is translation invariant, so no frame is needed).
pub fn random_shape_poly(rng: &mut impl Rng, dim: usize) -> RationalPoly {
    crate::polyq::random::poly_on_monomials(rng, dim, &shape_monomials(dim))
}

/// A failed exact check, with enough context to reproduce it.
#[derive(Debug)]
pub struct CheckFailure {
    pub check: &'static str,
    pub detail: String,
}

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.check, self.detail)
    }
}

pub type CheckOutcome = std::result::Result<(), Box<CheckFailure>>;

fn fail(check: &'static str, detail: String) -> CheckOutcome {
    Err(Box::new(CheckFailure { check, detail }))
}

/// Exact check: for every axis `i`, the residual `r1(∂w/∂x_i)` takes the
/// same trace on the two faces orthogonal to axis `i`.
pub fn opposite_face_equality(w: &RationalPoly, rect: &DRect) -> CheckOutcome {
    for i in 0..rect.dim() {
        let g = r1(&w.diff(i), rect);
        let low = g.restrict_face(i, Side::Low, rect);
        let high = g.restrict_face(i, Side::High, rect);
        if low != high {
            return fail(
                "opposite-face trace equality",
                format!(
                    "axis {i}, box {rect:?}, w = {w}; low trace {low} != high trace {high}"
                ),
            );
        }
    }
    Ok(())
}

/// Exact check: on either face orthogonal to axis `i`, the trace of
/// `r1(∂w/∂x_i)` equals the finite expansion
/// `sum_{j≠i} sum_{alpha in M_{i,j}} B(j, alpha) · Π₀(∂^alpha w)`.
pub fn face_expansion(w: &RationalPoly, rect: &DRect) -> CheckOutcome {
    let d = rect.dim();
    for i in 0..d {
        let mut rhs = RationalPoly::zero(d);
        for j in (0..d).filter(|&j| j != i) {
            for alpha in m_indices(d, i, j) {
                let mean = cell_average(&w.diff_multi(&alpha), rect);
                rhs = &rhs + &b_coefficient(rect, i, j, &alpha).scale(&mean);
            }
        }
        let g = r1(&w.diff(i), rect);
        for side in Side::BOTH {
            let lhs = g.restrict_face(i, side, rect);
            // The expansion polynomials never involve x_i, but restrict for symmetry.
            let rhs_trace = rhs.restrict_face(i, side, rect);
            if lhs != rhs_trace {
                return fail(
                    "face expansion",
                    format!(
                        "axis {i}, side {side:?}, box {rect:?}, w = {w}; \
                         trace {lhs} != expansion {rhs_trace}"
                    ),
                );
            }
        }
    }
    Ok(())
}

/// Exact check: `r1(∂w/∂x_i)` lies in the span of
/// `((x_j-c_j)² - h_j²)·(x-c)^m` over `j = 1..d` and multilinear `m` with
/// `m_i = 0`, and (necessarily) vanishes at every vertex.
pub fn face_residual_span(w: &RationalPoly, rect: &DRect) -> CheckOutcome {
    let d = rect.dim();
    let centered_var = |k: usize| {
        &RationalPoly::var(d, k) - &RationalPoly::constant(d, rect.center()[k].clone())
    };
    for i in 0..d {
        let target = r1(&w.diff(i), rect);
        for x in rect.vertices() {
            if !target.eval(&x).is_zero() {
                return fail(
                    "face residual span",
                    format!("axis {i}: residual does not vanish at vertex {x:?}"),
                );
            }
        }
        let mut generators = Vec::new();
        for j in 0..d {
            let uj = centered_var(j);
            let hj2 = &rect.half_lengths()[j] * &rect.half_lengths()[j];
            let bracket = &(&uj * &uj) - &RationalPoly::constant(d, hj2);
            for bits in 0..1u32 << d {
                if (bits >> i) & 1 == 1 {
                    continue; // m_i = 0: no x_i dependence allowed.
                }
                let mut gen = bracket.clone();
                for k in 0..d {
                    if (bits >> k) & 1 == 1 {
                        gen = &gen * &centered_var(k);
                    }
                }
                generators.push(gen);
            }
        }
        if !in_rational_span(&target, &generators) {
            return fail(
                "face residual span",
                format!("axis {i}, box {rect:?}, w = {w}; residual {target} escapes the span"),
            );
        }
    }
    Ok(())
}

/// Exact check: the nodal parameters applied to the element's own basis
/// reproduce the identity matrix.
pub fn check_duality(elem: &AdiniElement) -> CheckOutcome {
    let d = elem.dim();
    let rect = DRect::new(
        vec![BigRational::zero(); d],
        elem.geometry().half_lengths().to_vec(),
    );
    let vertices = rect.vertices();
    for (j, b) in elem.shape().centered_basis().iter().enumerate() {
        let grads: Vec<RationalPoly> = (0..d).map(|k| b.diff(k)).collect();
        for (v, x) in vertices.iter().enumerate() {
            let mut entries = vec![b.eval(x)];
            entries.extend(grads.iter().map(|g| g.eval(x)));
            for (s, got) in entries.into_iter().enumerate() {
                let expect = if local_dof(v, s, d) == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                };
                if got != expect {
                    return fail(
                        "nodal duality",
                        format!(
                            "basis {j}, vertex {v}, slot {s}: got {got}, expected {expect} \
                             (half-lengths {:?})",
                            elem.geometry().half_lengths()
                        ),
                    );
                }
            }
        }
    }
    Ok(())
}

/// Gauss–Jordan inverse over exact rationals. `None` when singular.
fn invert_rational(mut m: Vec<Vec<BigRational>>) -> Option<Vec<Vec<BigRational>>> {
    let n = m.len();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if r == c {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col].clone();
        for x in m[col].iter_mut().chain(inv[col].iter_mut()) {
            *x /= &p;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            for c in 0..n {
                let t = &m[col][c] * &f;
                m[r][c] -= t;
                let t = &inv[col][c] * &f;
                inv[r][c] -= t;
            }
        }
    }
    Some(inv)
}

/// Does `target` lie in the rational span of `generators`? Decided exactly
/// by eliminating the augmented coefficient matrix over the union of
/// monomial supports.
fn in_rational_span(target: &RationalPoly, generators: &[RationalPoly]) -> bool {
    use std::collections::BTreeSet;
    let mut support: BTreeSet<MultiIndex> = target.terms().map(|(a, _)| a.clone()).collect();
    for g in generators {
        support.extend(g.terms().map(|(a, _)| a.clone()));
    }
    let rows: Vec<MultiIndex> = support.into_iter().collect();
    let mut a: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|alpha| generators.iter().map(|g| g.coeff(alpha)).collect())
        .collect();
    let mut b: Vec<BigRational> = rows.iter().map(|alpha| target.coeff(alpha)).collect();

    let (nrows, ncols) = (a.len(), generators.len());
    let mut pivot_row = 0;
    for col in 0..ncols {
        let Some(r) = (pivot_row..nrows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(pivot_row, r);
        b.swap(pivot_row, r);
        let p = a[pivot_row][col].clone();
        for x in a[pivot_row].iter_mut() {
            *x /= &p;
        }
        b[pivot_row] /= &p;
        for r in 0..nrows {
            if r == pivot_row || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in 0..ncols {
                let t = &a[pivot_row][c] * &f;
                a[r][c] -= t;
            }
            let t = &b[pivot_row] * &f;
            b[r] -= t;
        }
        pivot_row += 1;
        if pivot_row == nrows {
            break;
        }
    }
    // Consistent iff no zero row of A pairs with a nonzero entry of b.
    (0..nrows).all(|r| !(a[r].iter().all(Zero::is_zero) && !b[r].is_zero()))
}
