//! Global assembly of the broken Hessian bilinear form
//! `a_h(u, v) = Σ_K Σ_{i,j} ∫_K ∂_ij u ∂_ij v` and of load vectors.
//!
//! Local stiffness matrices and basis-derivative tables are computed once
//! per distinct cell shape and quadrature order, then shared: on a uniform
//! mesh assembly reduces to one local solve plus index bookkeeping.
//!
//! The element loop runs in parallel; contributions are collected in
//! element order and scattered sequentially, so assembled values are
//! bit-identical run to run regardless of thread count.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use dashmap::DashMap;
use num_rational::BigRational;
use rayon::prelude::*;

use crate::element::{hessian_pairs, ElementShape, ShapeCache};
use crate::field::FieldFn;
use crate::mesh::{BoxMesh, DofMap};
use crate::quadrature::QuadRule;
use crate::{Error, Result};

/// Symmetric sparse matrix in compressed-row form. Both triangles are
/// stored; the assembled entries `(i, j)` and `(j, i)` are bit-identical.
#[derive(Clone, Debug)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    fn from_rows(rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Build from a row-major dense matrix, keeping exact nonzeros.
    /// Intended for small systems and solver tests.
    pub fn from_dense(dense: &[f64], n: usize) -> Self {
        assert_eq!(dense.len(), n * n, "dense data must be n*n");
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| dense[i * n + j] != 0.0)
                    .map(|j| (j, dense[i * n + j]))
                    .collect::<BTreeMap<_, _>>()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Stored entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Parallel matrix-vector product; per-row sums run in a fixed order,
    /// so the result does not depend on scheduling.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        });
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Row-major dense copy (small systems only).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                dense[i * self.n + self.cols[k]] = self.vals[k];
            }
        }
        dense
    }

    /// Sparsity pattern, for structural comparisons.
    pub fn pattern(&self) -> (&[usize], &[usize]) {
        (&self.row_ptr, &self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    /// Coordinate text format: header `n nnz`, then one `i j value` line
    /// per stored upper-triangle entry (0-based, 17 significant digits).
    pub fn write_coordinate(&self, w: &mut impl Write) -> std::io::Result<()> {
        let upper = (0..self.n)
            .flat_map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .filter(move |&k| self.cols[k] >= i)
                    .map(move |k| (i, self.cols[k], self.vals[k]))
            })
            .collect::<Vec<_>>();
        writeln!(w, "{} {}", self.n, upper.len())?;
        for (i, j, v) in upper {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}

/// Basis values, gradients and Hessian entries evaluated at the tensor
/// quadrature points of a centered cell; one instance per (shape, rule).
pub struct LocalTables {
    /// Quadrature points in the centered frame, tensor order.
    pub points: Vec<Vec<f64>>,
    /// Quadrature weights including the cell Jacobian.
    pub weights: Vec<f64>,
    /// `value[a][q]` = basis `a` at point `q`.
    pub value: Vec<Vec<f64>>,
    /// `grad[a][k][q]` = `∂basis_a/∂x_k` at point `q`.
    pub grad: Vec<Vec<Vec<f64>>>,
    /// `hess[a][p][q]` = Hessian upper-triangle pair `p` of basis `a` at `q`.
    pub hess: Vec<Vec<Vec<f64>>>,
}

impl LocalTables {
    fn build(shape: &ElementShape, rule: &QuadRule) -> Self {
        let d = shape.dim();
        let half: Vec<f64> = shape
            .half_lengths()
            .iter()
            .map(|h| num_traits::ToPrimitive::to_f64(h).unwrap())
            .collect();
        let pts = rule.tensor_points(&vec![0.0; d], &half);
        let npairs = hessian_pairs(d).len();
        let value = (0..shape.ndof())
            .map(|a| pts.iter().map(|(x, _)| shape.basis_float(a).eval(x)).collect())
            .collect();
        let grad = (0..shape.ndof())
            .map(|a| {
                (0..d)
                    .map(|k| pts.iter().map(|(x, _)| shape.grad_float(a, k).eval(x)).collect())
                    .collect()
            })
            .collect();
        let hess = (0..shape.ndof())
            .map(|a| {
                (0..npairs)
                    .map(|p| pts.iter().map(|(x, _)| shape.hess_float(a, p).eval(x)).collect())
                    .collect()
            })
            .collect();
        let (points, weights) = pts.into_iter().unzip();
        Self {
            points,
            weights,
            value,
            grad,
            hess,
        }
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }
}

type ShapeKey = (Vec<BigRational>, usize);

/// Shared element machinery for one mesh family: shape cache plus
/// per-(shape, quadrature) tables and local stiffness matrices.
#[derive(Default)]
pub struct Assembler {
    shapes: ShapeCache,
    tables: DashMap<ShapeKey, Arc<LocalTables>>,
    locals: DashMap<ShapeKey, Arc<Vec<f64>>>,
}

impl Assembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shapes(&self) -> &ShapeCache {
        &self.shapes
    }

    /// Fetch or build the evaluation tables for a cell shape under `rule`.
    pub fn tables(&self, half: &[BigRational], rule: &QuadRule) -> Arc<LocalTables> {
        let key = (half.to_vec(), rule.len());
        if let Some(hit) = self.tables.get(&key) {
            return hit.clone();
        }
        let shape = self.shapes.shape(half);
        self.tables
            .entry(key)
            .or_insert_with(|| Arc::new(LocalTables::build(&shape, rule)))
            .clone()
    }

    /// Local stiffness matrix (row-major `ndof x ndof`) of a cell shape:
    /// `S[a][b] = Σ_{i,j} ∫ ∂_ij φ_a ∂_ij φ_b`, mixed pairs twice.
    pub fn local_stiffness(&self, half: &[BigRational], rule: &QuadRule) -> Arc<Vec<f64>> {
        let key = (half.to_vec(), rule.len());
        if let Some(hit) = self.locals.get(&key) {
            return hit.clone();
        }
        let tables = self.tables(half, rule);
        self.locals
            .entry(key)
            .or_insert_with(|| {
                let d = half.len();
                let pairs = hessian_pairs(d);
                let ndof = tables.value.len();
                let mut s = vec![0.0; ndof * ndof];
                for a in 0..ndof {
                    for b in a..ndof {
                        let mut acc = 0.0;
                        for (p, &(i, j)) in pairs.iter().enumerate() {
                            let mult = if i == j { 1.0 } else { 2.0 };
                            let (ha, hb) = (&tables.hess[a][p], &tables.hess[b][p]);
                            let mut dot = 0.0;
                            for q in 0..tables.weights.len() {
                                dot += tables.weights[q] * ha[q] * hb[q];
                            }
                            acc += mult * dot;
                        }
                        s[a * ndof + b] = acc;
                        s[b * ndof + a] = acc;
                    }
                }
                Arc::new(s)
            })
            .clone()
    }

    fn assemble_filtered<F>(
        &self,
        mesh: &BoxMesh,
        rule: &QuadRule,
        nrows: usize,
        index: F,
    ) -> SparseSym
    where
        F: Fn(usize) -> Option<usize> + Sync,
    {
        let contributions: Vec<(Vec<usize>, Arc<Vec<f64>>)> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let rect = mesh.element_box(e);
                let local = self.local_stiffness(rect.half_lengths(), rule);
                (mesh.global_dofs(e), local)
            })
            .collect();
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for (gdofs, local) in contributions {
            let nloc = gdofs.len();
            for (a, &ga) in gdofs.iter().enumerate() {
                let Some(i) = index(ga) else { continue };
                for (b, &gb) in gdofs.iter().enumerate() {
                    let Some(j) = index(gb) else { continue };
                    *rows[i].entry(j).or_insert(0.0) += local[a * nloc + b];
                }
            }
        }
        SparseSym::from_rows(rows)
    }

    /// Assembled stiffness matrix on the free DOFs of `dofs`; constrained
    /// DOFs are eliminated (homogeneous clamped data contributes nothing).
    pub fn assemble(&self, mesh: &BoxMesh, dofs: &DofMap, rule: &QuadRule) -> Result<SparseSym> {
        if dofs.num_free() == 0 {
            return Err(Error::NoFreeDofs);
        }
        Ok(self.assemble_filtered(mesh, rule, dofs.num_free(), |g| dofs.free_index(g)))
    }

    /// Stiffness matrix over *all* DOFs, boundary included: positive
    /// semidefinite with the affine fields in its kernel.
    pub fn assemble_unconstrained(&self, mesh: &BoxMesh, rule: &QuadRule) -> SparseSym {
        let total = (mesh.dim() + 1) * mesh.num_vertices();
        self.assemble_filtered(mesh, rule, total, Some)
    }

    fn load_filtered<F>(
        &self,
        f: &FieldFn,
        mesh: &BoxMesh,
        rule: &QuadRule,
        nrows: usize,
        index: F,
    ) -> Vec<f64>
    where
        F: Fn(usize) -> Option<usize> + Sync,
    {
        let contributions: Vec<(Vec<usize>, Vec<f64>)> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let rect = mesh.element_box(e);
                let tables = self.tables(rect.half_lengths(), rule);
                let pts = rule.tensor_points(&rect.center_f64(), &rect.half_f64());
                let fvals: Vec<f64> = pts.iter().map(|(x, _)| f.eval(x)).collect();
                let local: Vec<f64> = tables
                    .value
                    .iter()
                    .map(|va| {
                        va.iter()
                            .zip(&fvals)
                            .zip(&tables.weights)
                            .map(|((phi, fv), w)| w * fv * phi)
                            .sum()
                    })
                    .collect();
                (mesh.global_dofs(e), local)
            })
            .collect();
        let mut rhs = vec![0.0; nrows];
        for (gdofs, local) in contributions {
            for (a, &g) in gdofs.iter().enumerate() {
                if let Some(i) = index(g) {
                    rhs[i] += local[a];
                }
            }
        }
        rhs
    }

    /// Load vector `(f, φ_a)` over free DOFs.
    pub fn load_vector(
        &self,
        f: &FieldFn,
        mesh: &BoxMesh,
        dofs: &DofMap,
        rule: &QuadRule,
    ) -> Result<Vec<f64>> {
        if dofs.num_free() == 0 {
            return Err(Error::NoFreeDofs);
        }
        if f.dim() != mesh.dim() {
            return Err(Error::DimensionMismatch(f.dim(), mesh.dim()));
        }
        Ok(self.load_filtered(f, mesh, rule, dofs.num_free(), |g| dofs.free_index(g)))
    }

    /// Load vector over all DOFs, boundary included.
    pub fn load_vector_unconstrained(
        &self,
        f: &FieldFn,
        mesh: &BoxMesh,
        rule: &QuadRule,
    ) -> Vec<f64> {
        let total = (mesh.dim() + 1) * mesh.num_vertices();
        self.load_filtered(f, mesh, rule, total, Some)
    }
}

/// Global nodal vector of the affine field `coeffs[0] + Σ_k coeffs[1+k] x_k`:
/// exact value at each vertex, constant gradient slots. Lies in the kernel
/// of the unconstrained stiffness matrix.
pub fn affine_nodal_vector(mesh: &BoxMesh, coeffs: &[f64]) -> Vec<f64> {
    let d = mesh.dim();
    assert_eq!(coeffs.len(), d + 1, "need d+1 affine coefficients");
    let mut out = vec![0.0; (d + 1) * mesh.num_vertices()];
    for g in 0..mesh.num_vertices() {
        let x = mesh.vertex_coord_f64(&mesh.vertex_multi(g));
        let mut value = coeffs[0];
        for k in 0..d {
            value += coeffs[1 + k] * x[k];
        }
        out[g * (d + 1)] = value;
        for k in 0..d {
            out[g * (d + 1) + 1 + k] = coeffs[1 + k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::AdiniElement;
    use crate::polyq::{ratio, random, DRect};
    use crate::quadrature::gauss_rule;
    use approx::assert_relative_eq;
    use num_traits::ToPrimitive;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent exact oracle: local stiffness entries via rational
    /// integration of the exact basis, bypassing quadrature and floats.
    fn exact_local_stiffness(elem: &AdiniElement) -> Vec<f64> {
        let d = elem.dim();
        let rect = elem.geometry().centered();
        let basis = elem.shape().centered_basis();
        let n = basis.len();
        let mut s = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let mut acc = num_rational::BigRational::from_integer(0.into());
                for i in 0..d {
                    for j in 0..d {
                        let pa = basis[a].diff(i).diff(j);
                        let pb = basis[b].diff(i).diff(j);
                        acc += (&pa * &pb).integrate_box(&rect);
                    }
                }
                let v = acc.to_f64().unwrap();
                s[a * n + b] = v;
                s[b * n + a] = v;
            }
        }
        s
    }

    #[test]
    fn hermite_beam_stiffness_on_reference_interval() {
        // d=1 local stiffness on [-1,1] equals the classic clamped beam
        // element matrix (EI/L³)[[12,6L,-12,6L],[6L,4L²,-6L,2L²],
        // [-12,-6L,12,-6L],[6L,2L²,-6L,4L²]] with L=2.
        let asm = Assembler::new();
        let rule = gauss_rule(4).unwrap();
        let s = asm.local_stiffness(&[ratio(1, 1)], &rule);
        let expect = [
            [1.5, 1.5, -1.5, 1.5],
            [1.5, 2.0, -1.5, 1.0],
            [-1.5, -1.5, 1.5, -1.5],
            [1.5, 1.0, -1.5, 2.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert_relative_eq!(s[a * 4 + b], expect[a][b], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_stiffness_matches_exact_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let asm = Assembler::new();
        let rule = gauss_rule(4).unwrap();
        for d in 2..=3 {
            let rect = random::rect(&mut rng, d);
            let elem = asm.shapes().element(&rect);
            let got = asm.local_stiffness(rect.half_lengths(), &rule);
            let expect = exact_local_stiffness(&elem);
            let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (g, e) in got.iter().zip(&expect) {
                assert!(
                    (g - e).abs() <= 1e-12 * scale.max(e.abs()),
                    "d={d}: {g} vs {e} (scale {scale})"
                );
            }
        }
    }

    #[test]
    fn unconstrained_matrix_annihilates_affine_fields() {
        let rule = gauss_rule(4).unwrap();
        for d in 1..=3usize {
            let mesh = crate::mesh::BoxMesh::graded(&DRect::unit(d), &vec![2; d], 3, 0.3).unwrap();
            let asm = Assembler::new();
            let a = asm.assemble_unconstrained(&mesh, &rule);
            let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut coeffs = vec![0.25; d + 1];
            coeffs[0] = -1.5;
            let v = affine_nodal_vector(&mesh, &coeffs);
            let resid = a.apply(&v);
            let worst = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            assert!(worst <= 1e-12 * scale, "d={d}: residual {worst}, scale {scale}");
        }
    }

    #[test]
    fn sparsity_pattern_ignores_jitter() {
        let rule = gauss_rule(4).unwrap();
        let dom = DRect::unit(2);
        let asm = Assembler::new();
        let uniform = crate::mesh::BoxMesh::uniform(&dom, &[4, 4]).unwrap();
        let jittered = crate::mesh::BoxMesh::graded(&dom, &[4, 4], 17, 0.3).unwrap();
        let du = crate::mesh::DofMap::clamped(&uniform);
        let dj = crate::mesh::DofMap::clamped(&jittered);
        let au = asm.assemble(&uniform, &du, &rule).unwrap();
        let aj = asm.assemble(&jittered, &dj, &rule).unwrap();
        assert_eq!(au.pattern().0, aj.pattern().0);
        assert_eq!(au.pattern().1, aj.pattern().1);
    }

    #[test]
    fn assembly_is_bitwise_deterministic() {
        let rule = gauss_rule(4).unwrap();
        let mesh = crate::mesh::BoxMesh::graded(&DRect::unit(2), &[6, 6], 9, 0.25).unwrap();
        let dofs = crate::mesh::DofMap::clamped(&mesh);
        let a1 = Assembler::new().assemble(&mesh, &dofs, &rule).unwrap();
        let a2 = Assembler::new().assemble(&mesh, &dofs, &rule).unwrap();
        assert_eq!(a1.values(), a2.values());
        assert_eq!(a1.pattern().1, a2.pattern().1);
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric() {
        let rule = gauss_rule(4).unwrap();
        let mesh = crate::mesh::BoxMesh::graded(&DRect::unit(2), &[3, 4], 5, 0.3).unwrap();
        let dofs = crate::mesh::DofMap::clamped(&mesh);
        let a = Assembler::new().assemble(&mesh, &dofs, &rule).unwrap();
        for i in 0..a.n() {
            for j in 0..a.n() {
                assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn empty_free_set_is_an_error() {
        let rule = gauss_rule(4).unwrap();
        let mesh = crate::mesh::BoxMesh::uniform(&DRect::unit(2), &[1, 1]).unwrap();
        let dofs = crate::mesh::DofMap::clamped(&mesh);
        assert!(matches!(
            Assembler::new().assemble(&mesh, &dofs, &rule),
            Err(Error::NoFreeDofs)
        ));
    }

    #[test]
    fn value_shape_functions_partition_unity_in_load() {
        // For f ≡ 1 the value-slot loads sum to ∫ 1 = |Ω| because the value
        // basis functions alone reproduce the constant.
        let rule = gauss_rule(4).unwrap();
        let mesh = crate::mesh::BoxMesh::graded(&DRect::unit(2), &[4, 3], 2, 0.2).unwrap();
        let one = FieldFn::from_poly(crate::polyq::RationalPoly::constant(
            2,
            num_rational::BigRational::from_integer(1.into()),
        ));
        let rhs = Assembler::new().load_vector_unconstrained(&one, &mesh, &rule);
        let total: f64 = rhs.chunks(3).map(|c| c[0]).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn coordinate_dump_has_header_and_upper_triangle() {
        let rule = gauss_rule(4).unwrap();
        let mesh = crate::mesh::BoxMesh::uniform(&DRect::unit(2), &[2, 2]).unwrap();
        let dofs = crate::mesh::DofMap::clamped(&mesh);
        let a = Assembler::new().assemble(&mesh, &dofs, &rule).unwrap();
        let mut buf = Vec::new();
        a.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(header[0], 3); // one interior vertex, three slots
        assert_eq!(text.lines().count(), header[1] + 1);
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let (i, j): (usize, usize) = (toks[0].parse().unwrap(), toks[1].parse().unwrap());
            assert!(i <= j);
        }
    }
}
