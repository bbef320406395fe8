//! Tensor-product box meshes with exact rational breakpoints, and the
//! clamped degree-of-freedom map for the fourth-order problem.
//!
//! A mesh is one strictly increasing breakpoint sequence per axis; cells are
//! all products of consecutive intervals. Uniform meshes have exactly
//! rational breakpoints; jittered ("non-congruent") meshes perturb interior
//! breakpoints by seeded dyadic offsets, so they stay exact as well.
//!
//! Flat element and vertex indices are lexicographic over the axis
//! multi-index with the last axis varying fastest, matching the vertex sign
//! order used by the element layer.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::polyq::{vertex_sign, DRect};
use crate::{Error, Result};

/// Tensor-product mesh of d-rectangles.
#[derive(Clone, Debug)]
pub struct BoxMesh {
    /// Per-axis strictly increasing breakpoints (exact).
    breakpoints: Vec<Vec<BigRational>>,
    /// `f64` twins of the breakpoints, converted once.
    breaks_f64: Vec<Vec<f64>>,
}

impl BoxMesh {
    /// Build from explicit breakpoints, validating shape and monotonicity.
    pub fn from_breakpoints(breakpoints: Vec<Vec<BigRational>>) -> Result<Self> {
        let d = breakpoints.len();
        if !(1..=3).contains(&d) {
            return Err(Error::BadDimension(d));
        }
        for (axis, bp) in breakpoints.iter().enumerate() {
            if bp.len() < 2 {
                return Err(Error::EmptyAxis(axis));
            }
            if bp.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::UnsortedBreakpoints(axis));
            }
        }
        let breaks_f64 = breakpoints
            .iter()
            .map(|bp| bp.iter().map(|x| x.to_f64().unwrap()).collect())
            .collect();
        Ok(Self {
            breakpoints,
            breaks_f64,
        })
    }

    /// Uniform mesh with `n[k]` equal cells per axis over `domain`.
    pub fn uniform(domain: &DRect, n: &[usize]) -> Result<Self> {
        Self::graded(domain, n, 0, 0.0)
    }

    /// Mesh whose interior breakpoints are perturbed by at most
    /// `jitter x (local uniform spacing)`, deterministically from `seed`.
    /// `jitter = 0` reproduces [`BoxMesh::uniform`] exactly. Offsets are
    /// dyadic rationals, so the mesh stays exact.
    pub fn graded(domain: &DRect, n: &[usize], seed: u64, jitter: f64) -> Result<Self> {
        let d = domain.dim();
        if n.len() != d {
            return Err(Error::DimensionMismatch(n.len(), d));
        }
        if !(0.0..=0.45).contains(&jitter) {
            return Err(Error::BadJitter(jitter));
        }
        let jitter_rat = BigRational::from_float(jitter).expect("finite jitter");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let denom = BigInt::from(1u32 << 20);
        let mut breakpoints = Vec::with_capacity(d);
        for axis in 0..d {
            if n[axis] == 0 {
                return Err(Error::EmptyAxis(axis));
            }
            let lo = domain.lower(axis);
            let hi = domain.upper(axis);
            if lo >= hi {
                return Err(Error::DegenerateDomain(axis));
            }
            let spacing = (&hi - &lo) / BigRational::from_integer(BigInt::from(n[axis]));
            let mut bp = Vec::with_capacity(n[axis] + 1);
            for i in 0..=n[axis] {
                let mut x = &lo + &spacing * BigRational::from_integer(BigInt::from(i));
                if i > 0 && i < n[axis] && !jitter_rat.is_zero() {
                    // Dyadic fraction in [-1, 1] with 20 bits of resolution.
                    let ticks: i64 = rng.random_range(-(1 << 20)..=1 << 20);
                    let r = BigRational::new(BigInt::from(ticks), denom.clone());
                    x += &jitter_rat * &spacing * r;
                }
                bp.push(x);
            }
            breakpoints.push(bp);
        }
        Self::from_breakpoints(breakpoints)
    }

    /// Split every cell into `factor` equal parts per axis (exactly, in
    /// rational arithmetic). Refining a non-uniform mesh yields a family
    /// whose largest cell shrinks by exactly `factor` per step, which keeps
    /// observed convergence orders free of mesh-redraw noise.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::EmptyAxis(0));
        }
        let frat = BigRational::from_integer(BigInt::from(factor));
        let breakpoints = self
            .breakpoints
            .iter()
            .map(|bp| {
                let mut out = Vec::with_capacity((bp.len() - 1) * factor + 1);
                for pair in bp.windows(2) {
                    let step = (&pair[1] - &pair[0]) / &frat;
                    for i in 0..factor {
                        out.push(&pair[0] + &step * BigRational::from_integer(BigInt::from(i)));
                    }
                }
                out.push(bp.last().expect("nonempty axis").clone());
                out
            })
            .collect();
        Self::from_breakpoints(breakpoints)
    }

    pub fn dim(&self) -> usize {
        self.breakpoints.len()
    }

    /// Cells along each axis.
    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.breakpoints.iter().map(|bp| bp.len() - 1).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints.iter().map(|bp| bp.len() - 1).product()
    }

    pub fn num_vertices(&self) -> usize {
        self.breakpoints.iter().map(|bp| bp.len()).product()
    }

    pub fn breakpoints(&self, axis: usize) -> &[BigRational] {
        &self.breakpoints[axis]
    }

    /// Axis multi-index of flat element index `e` (last axis fastest).
    pub fn element_multi(&self, e: usize) -> Vec<usize> {
        debug_assert!(e < self.num_elements());
        let d = self.dim();
        let mut multi = vec![0; d];
        let mut rest = e;
        for k in (0..d).rev() {
            let nk = self.breakpoints[k].len() - 1;
            multi[k] = rest % nk;
            rest /= nk;
        }
        multi
    }

    /// Flat vertex index of an axis multi-index (last axis fastest).
    pub fn vertex_flat(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim());
        let mut flat = 0;
        for (k, &i) in multi.iter().enumerate() {
            debug_assert!(i < self.breakpoints[k].len());
            flat = flat * self.breakpoints[k].len() + i;
        }
        flat
    }

    /// Exact coordinates of a vertex by axis multi-index.
    pub fn vertex_coord(&self, multi: &[usize]) -> Vec<BigRational> {
        multi
            .iter()
            .enumerate()
            .map(|(k, &i)| self.breakpoints[k][i].clone())
            .collect()
    }

    pub fn vertex_coord_f64(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(k, &i)| self.breaks_f64[k][i])
            .collect()
    }

    /// Axis multi-index of flat vertex index `g`.
    pub fn vertex_multi(&self, g: usize) -> Vec<usize> {
        debug_assert!(g < self.num_vertices());
        let d = self.dim();
        let mut multi = vec![0; d];
        let mut rest = g;
        for k in (0..d).rev() {
            let nk = self.breakpoints[k].len();
            multi[k] = rest % nk;
            rest /= nk;
        }
        multi
    }

    /// Cell geometry of flat element `e`, exact.
    pub fn element_box(&self, e: usize) -> DRect {
        let multi = self.element_multi(e);
        DRect::from_bounds(
            &multi
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    (
                        self.breakpoints[k][i].clone(),
                        self.breakpoints[k][i + 1].clone(),
                    )
                })
                .collect::<Vec<_>>(),
        )
    }

    /// Global DOF indices of element `e` in local DOF order: vertex-major
    /// (lexicographic sign order), value slot then the `d` derivative slots.
    /// Shared vertices yield identical indices across neighboring elements.
    pub fn global_dofs(&self, e: usize) -> Vec<usize> {
        let d = self.dim();
        let multi = self.element_multi(e);
        let mut dofs = Vec::with_capacity((d + 1) << d);
        for v in 0..1usize << d {
            let vm: Vec<usize> = (0..d)
                .map(|k| multi[k] + usize::from(vertex_sign(v, k, d) > 0))
                .collect();
            let g = self.vertex_flat(&vm);
            for s in 0..=d {
                dofs.push(g * (d + 1) + s);
            }
        }
        dofs
    }

    /// Is the vertex with this multi-index on the domain boundary?
    pub fn is_boundary_vertex(&self, multi: &[usize]) -> bool {
        multi
            .iter()
            .enumerate()
            .any(|(k, &i)| i == 0 || i == self.breakpoints[k].len() - 1)
    }

    /// Largest cell diameter, in `f64`.
    pub fn h_max(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| self.element_box(e).diameter())
            .fold(0.0, f64::max)
    }

    /// Max over cells of (longest axis length / shortest axis length).
    pub fn shape_regularity(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| {
                let h = self.element_box(e).half_f64();
                let max = h.iter().cloned().fold(f64::MIN, f64::max);
                let min = h.iter().cloned().fold(f64::MAX, f64::min);
                max / min
            })
            .fold(1.0, f64::max)
    }

    /// Exact total volume (sum of cell volumes telescopes to the domain box).
    pub fn total_volume(&self) -> BigRational {
        self.breakpoints
            .iter()
            .map(|bp| bp.last().unwrap() - bp.first().unwrap())
            .product()
    }

    /// Plain-text serialization: first line `dim d`, then one line of
    /// breakpoints per axis (17 significant digits).
    pub fn to_text(&self) -> String {
        let mut out = format!("dim {}\n", self.dim());
        for bp in &self.breaks_f64 {
            let line: Vec<String> = bp.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parse the [`BoxMesh::to_text`] format. Every finite float is a dyadic
    /// rational, so the conversion back to exact breakpoints is lossless
    /// with respect to the file contents.
    pub fn from_text(text: &str) -> Result<Self> {
        let parse = |what: &'static str, line: usize, msg: String| Error::Parse { what, line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (lno, header) = lines
            .next()
            .ok_or_else(|| parse("mesh file", 1, "empty file".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim")
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse("mesh file", lno + 1, format!("expected `dim d`, got {header:?}")))?;
        let mut breakpoints = Vec::with_capacity(dim);
        for _ in 0..dim {
            let (lno, line) = lines.next().ok_or_else(|| {
                parse("mesh file", 0, format!("expected {dim} breakpoint lines"))
            })?;
            let mut bp = Vec::new();
            for tok in line.split_whitespace() {
                let x: f64 = tok.parse().map_err(|e| {
                    parse("mesh file", lno + 1, format!("bad number {tok:?}: {e}"))
                })?;
                bp.push(BigRational::from_float(x).ok_or_else(|| {
                    parse("mesh file", lno + 1, format!("non-finite number {tok:?}"))
                })?);
            }
            breakpoints.push(bp);
        }
        if let Some((lno, extra)) = lines.next() {
            return Err(parse(
                "mesh file",
                lno + 1,
                format!("unexpected trailing line {extra:?}"),
            ));
        }
        Self::from_breakpoints(breakpoints)
    }
}

/// Map from global DOFs to the free (unconstrained) subset. The clamped
/// problem fixes the value and all first derivatives at boundary vertices,
/// which on a box mesh means every DOF of every boundary vertex.
#[derive(Clone, Debug)]
pub struct DofMap {
    total: usize,
    free_of_global: Vec<Option<usize>>,
    free_to_global: Vec<usize>,
}

impl DofMap {
    /// Clamp every boundary vertex of `mesh`.
    pub fn clamped(mesh: &BoxMesh) -> Self {
        let d = mesh.dim();
        let total = (d + 1) * mesh.num_vertices();
        let mut free_of_global = vec![None; total];
        let mut free_to_global = Vec::new();
        for g in 0..mesh.num_vertices() {
            if mesh.is_boundary_vertex(&mesh.vertex_multi(g)) {
                continue;
            }
            for s in 0..=d {
                free_of_global[g * (d + 1) + s] = Some(free_to_global.len());
                free_to_global.push(g * (d + 1) + s);
            }
        }
        Self {
            total,
            free_of_global,
            free_to_global,
        }
    }

    /// Total DOF count including constrained ones: `(d+1) x vertices`.
    pub fn total_dofs(&self) -> usize {
        self.total
    }

    pub fn num_free(&self) -> usize {
        self.free_to_global.len()
    }

    /// Free index of a global DOF, `None` when constrained.
    pub fn free_index(&self, global: usize) -> Option<usize> {
        self.free_of_global[global]
    }

    pub fn free_to_global(&self) -> &[usize] {
        &self.free_to_global
    }

    /// Expand a free-DOF vector to a full global vector, zeros on
    /// constrained entries.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        assert_eq!(free.len(), self.num_free());
        let mut full = vec![0.0; self.total];
        for (i, &g) in self.free_to_global.iter().enumerate() {
            full[g] = free[i];
        }
        full
    }

    /// Restrict a full global vector to the free subset.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.total);
        self.free_to_global.iter().map(|&g| full[g]).collect()
    }
}
