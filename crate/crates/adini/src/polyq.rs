//! Exact multivariate polynomial arithmetic over arbitrary-precision
//! rationals, plus axis-aligned box geometry with rational coordinates.
//!
//! Polynomials are sparse maps from exponent multi-indices to coefficients.
//! The representation is canonical: zero coefficients are pruned on every
//! operation, so structural equality (`==`) is mathematical equality. All
//! arithmetic is exact; nothing in this module rounds.
//!
//! Dimension mismatches between operands are programmer errors and panic.
//! Runtime input never reaches this layer unvalidated.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exponent multi-index; always `dim` entries long.
pub type MultiIndex = Vec<u32>;

/// `base^exp` for small non-negative exponents.
pub fn rat_pow(base: &BigRational, exp: u32) -> BigRational {
    let mut out = BigRational::one();
    for _ in 0..exp {
        out *= base;
    }
    out
}

/// Rational from an integer pair, panicking on zero denominator.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Sparse multivariate polynomial with exact rational coefficients.
#[derive(Clone, PartialEq, Eq)]
pub struct RationalPoly {
    dim: usize,
    terms: BTreeMap<MultiIndex, BigRational>,
}

impl RationalPoly {
    /// The zero polynomial in `dim` variables.
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1, "polynomials need at least one variable");
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// Constant polynomial.
    pub fn constant(dim: usize, c: BigRational) -> Self {
        Self::monomial(dim, vec![0; dim], c)
    }

    /// The coordinate polynomial `x_axis`.
    pub fn var(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dim {dim}");
        let mut alpha = vec![0; dim];
        alpha[axis] = 1;
        Self::monomial(dim, alpha, BigRational::one())
    }

    /// Single term `c · x^alpha`.
    pub fn monomial(dim: usize, alpha: MultiIndex, c: BigRational) -> Self {
        assert!(dim >= 1, "polynomials need at least one variable");
        assert_eq!(alpha.len(), dim, "multi-index length must equal dim");
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(alpha, c);
        }
        Self { dim, terms }
    }

    /// Build from `(multi-index, coefficient)` pairs; repeated indices are summed.
    pub fn from_terms(dim: usize, pairs: impl IntoIterator<Item = (MultiIndex, BigRational)>) -> Self {
        let mut p = Self::zero(dim);
        for (alpha, c) in pairs {
            p.add_term(alpha, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of stored (nonzero) terms.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Iterate over `(multi-index, coefficient)` in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &BigRational)> {
        self.terms.iter()
    }

    /// Coefficient of `x^alpha` (zero when absent).
    pub fn coeff(&self, alpha: &[u32]) -> BigRational {
        self.terms.get(alpha).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Largest exponent of `x_axis` appearing in any term.
    pub fn degree_on_axis(&self, axis: usize) -> u32 {
        assert!(axis < self.dim);
        self.terms.keys().map(|a| a[axis]).max().unwrap_or(0)
    }

    /// Largest total degree `|alpha|` over stored terms.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|a| a.iter().sum()).max().unwrap_or(0)
    }

    fn add_term(&mut self, alpha: MultiIndex, c: BigRational) {
        assert_eq!(alpha.len(), self.dim, "multi-index length must equal dim");
        if c.is_zero() {
            return;
        }
        match self.terms.entry(alpha) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    fn check_dim(&self, other: &Self) {
        assert_eq!(
            self.dim, other.dim,
            "dimension mismatch: {} vs {}",
            self.dim, other.dim
        );
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_dim(other);
        let mut out = self.clone();
        for (alpha, c) in &other.terms {
            out.add_term(alpha.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_dim(other);
        let mut out = self.clone();
        for (alpha, c) in &other.terms {
            out.add_term(alpha.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        if s.is_zero() {
            return Self::zero(self.dim);
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check_dim(other);
        let mut out = Self::zero(self.dim);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let alpha: MultiIndex = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(alpha, ca * cb);
            }
        }
        out
    }

    /// Partial derivative with respect to `x_axis`.
    pub fn diff(&self, axis: usize) -> Self {
        assert!(axis < self.dim, "axis {axis} out of range for dim {}", self.dim);
        let mut out = Self::zero(self.dim);
        for (alpha, c) in &self.terms {
            let k = alpha[axis];
            if k == 0 {
                continue;
            }
            let mut beta = alpha.clone();
            beta[axis] = k - 1;
            out.add_term(beta, c * BigRational::from_integer(BigInt::from(k)));
        }
        out
    }

    /// Mixed derivative `∂^alpha`, applying `diff` `alpha[i]` times per axis.
    pub fn diff_multi(&self, alpha: &[u32]) -> Self {
        assert_eq!(alpha.len(), self.dim, "multi-index length must equal dim");
        let mut out = self.clone();
        for (axis, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                out = out.diff(axis);
            }
        }
        out
    }

    /// Antiderivative in `x_axis` with zero constant of integration.
    pub fn antiderivative(&self, axis: usize) -> Self {
        assert!(axis < self.dim, "axis {axis} out of range for dim {}", self.dim);
        let mut out = Self::zero(self.dim);
        for (alpha, c) in &self.terms {
            let mut beta = alpha.clone();
            beta[axis] += 1;
            let k = BigRational::from_integer(BigInt::from(beta[axis]));
            out.add_term(beta, c / k);
        }
        out
    }

    /// Exact integral over the box `rect` (same coordinate frame as `self`).
    pub fn integrate_box(&self, rect: &DRect) -> BigRational {
        assert_eq!(
            self.dim,
            rect.dim(),
            "dimension mismatch: {} vs {}",
            self.dim,
            rect.dim()
        );
        let mut total = BigRational::zero();
        for (alpha, c) in &self.terms {
            let mut factor = c.clone();
            for axis in 0..self.dim {
                let k = alpha[axis];
                let hi = rat_pow(&rect.upper(axis), k + 1);
                let lo = rat_pow(&rect.lower(axis), k + 1);
                factor *= (hi - lo) / BigRational::from_integer(BigInt::from(k + 1));
            }
            total += factor;
        }
        total
    }

    /// Substitute the face coordinate `x_axis = rect.face_coordinate(axis, side)`.
    ///
    /// The result keeps all `dim` variables but no longer depends on `x_axis`,
    /// so restrictions to opposite faces are comparable with plain `==`.
    pub fn restrict_face(&self, axis: usize, side: Side, rect: &DRect) -> Self {
        assert_eq!(
            self.dim,
            rect.dim(),
            "dimension mismatch: {} vs {}",
            self.dim,
            rect.dim()
        );
        assert!(axis < self.dim, "axis {axis} out of range for dim {}", self.dim);
        let value = rect.face_coordinate(axis, side);
        self.substitute(axis, &value)
    }

    /// Substitute the constant `value` for `x_axis`.
    pub fn substitute(&self, axis: usize, value: &BigRational) -> Self {
        assert!(axis < self.dim, "axis {axis} out of range for dim {}", self.dim);
        let mut out = Self::zero(self.dim);
        for (alpha, c) in &self.terms {
            let mut beta = alpha.clone();
            beta[axis] = 0;
            out.add_term(beta, c * rat_pow(value, alpha[axis]));
        }
        out
    }

    /// `p(x + offset)`: translate the coordinate frame by `-offset`.
    pub fn translate(&self, offset: &[BigRational]) -> Self {
        assert_eq!(offset.len(), self.dim, "offset length must equal dim");
        let mut out = self.clone();
        for (axis, delta) in offset.iter().enumerate() {
            if delta.is_zero() {
                continue;
            }
            let mut next = Self::zero(self.dim);
            for (alpha, c) in &out.terms {
                // (x + δ)^k expanded by the binomial theorem.
                let k = alpha[axis];
                let mut binom = BigRational::one();
                for m in (0..=k).rev() {
                    let mut beta = alpha.clone();
                    beta[axis] = m;
                    next.add_term(beta, c * &binom * rat_pow(delta, k - m));
                    if m > 0 {
                        binom = binom * BigRational::from_integer(BigInt::from(m))
                            / BigRational::from_integer(BigInt::from(k - m + 1));
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        assert_eq!(x.len(), self.dim, "point length must equal dim");
        let mut total = BigRational::zero();
        for (alpha, c) in &self.terms {
            let mut term = c.clone();
            for (axis, &k) in alpha.iter().enumerate() {
                term *= rat_pow(&x[axis], k);
            }
            total += term;
        }
        total
    }

    /// Lossy conversion of every coefficient to `f64`.
    pub fn to_float(&self) -> FloatPoly {
        FloatPoly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.clone(), c.to_f64().expect("rational out of f64 range")))
                .collect(),
        }
    }
}

impl fmt::Debug for RationalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RationalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (alpha, c) in &self.terms {
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
                first = false;
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mag = c.abs();
            let is_const = alpha.iter().all(|&k| k == 0);
            if !mag.is_one() || is_const {
                write!(f, "{mag}")?;
            }
            for (axis, &k) in alpha.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, " x{}", axis + 1)?,
                    _ => write!(f, " x{}^{}", axis + 1, k)?,
                }
            }
        }
        Ok(())
    }
}

impl std::ops::Add for &RationalPoly {
    type Output = RationalPoly;
    fn add(self, rhs: &RationalPoly) -> RationalPoly {
        RationalPoly::add(self, rhs)
    }
}

impl std::ops::Sub for &RationalPoly {
    type Output = RationalPoly;
    fn sub(self, rhs: &RationalPoly) -> RationalPoly {
        RationalPoly::sub(self, rhs)
    }
}

impl std::ops::Mul for &RationalPoly {
    type Output = RationalPoly;
    fn mul(self, rhs: &RationalPoly) -> RationalPoly {
        RationalPoly::mul(self, rhs)
    }
}

impl std::ops::Neg for &RationalPoly {
    type Output = RationalPoly;
    fn neg(self) -> RationalPoly {
        RationalPoly::neg(self)
    }
}

/// Floating-point twin of a [`RationalPoly`]: same sparse terms, `f64` coefficients.
#[derive(Clone, Debug)]
pub struct FloatPoly {
    dim: usize,
    terms: Vec<(MultiIndex, f64)>,
}

impl FloatPoly {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut total = 0.0;
        for (alpha, c) in &self.terms {
            let mut term = *c;
            for (axis, &k) in alpha.iter().enumerate() {
                for _ in 0..k {
                    term *= x[axis];
                }
            }
            total += term;
        }
        total
    }
}

/// Which of the two faces orthogonal to an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Face at `center - half`.
    Low,
    /// Face at `center + half`.
    High,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Low, Side::High];
}

/// Axis-aligned d-rectangle with exact rational center and half-lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DRect {
    center: Vec<BigRational>,
    half: Vec<BigRational>,
}

impl DRect {
    /// Build from center and (strictly positive) half-lengths.
    pub fn new(center: Vec<BigRational>, half: Vec<BigRational>) -> Self {
        assert!(!center.is_empty(), "boxes need at least one axis");
        assert_eq!(center.len(), half.len(), "center/half length mismatch");
        assert!(
            half.iter().all(|h| h.is_positive()),
            "half-lengths must be strictly positive"
        );
        Self { center, half }
    }

    /// Build from per-axis `(lower, upper)` bounds.
    pub fn from_bounds(bounds: &[(BigRational, BigRational)]) -> Self {
        let two = BigRational::from_integer(BigInt::from(2));
        let center = bounds.iter().map(|(lo, hi)| (lo + hi) / &two).collect();
        let half = bounds.iter().map(|(lo, hi)| (hi - lo) / &two).collect();
        Self::new(center, half)
    }

    /// The unit box `[0,1]^d`.
    pub fn unit(dim: usize) -> Self {
        let h = ratio(1, 2);
        Self::new(vec![h.clone(); dim], vec![h; dim])
    }

    /// Same half-lengths, center moved to the origin.
    pub fn centered(&self) -> Self {
        Self::new(vec![BigRational::zero(); self.dim()], self.half.clone())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[BigRational] {
        &self.center
    }

    pub fn half_lengths(&self) -> &[BigRational] {
        &self.half
    }

    pub fn lower(&self, axis: usize) -> BigRational {
        &self.center[axis] - &self.half[axis]
    }

    pub fn upper(&self, axis: usize) -> BigRational {
        &self.center[axis] + &self.half[axis]
    }

    /// Coordinate of the face orthogonal to `axis` on the given side.
    pub fn face_coordinate(&self, axis: usize, side: Side) -> BigRational {
        match side {
            Side::Low => self.lower(axis),
            Side::High => self.upper(axis),
        }
    }

    pub fn volume(&self) -> BigRational {
        let two = BigRational::from_integer(BigInt::from(2));
        self.half.iter().map(|h| h * &two).product()
    }

    /// The `2^d` vertices in lexicographic sign order: the sign of the last
    /// axis flips fastest, so vertex `v` uses bit `d-1-k` of `v` for axis `k`.
    pub fn vertices(&self) -> Vec<Vec<BigRational>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|v| {
                (0..d)
                    .map(|k| {
                        if vertex_sign(v, k, d) > 0 {
                            self.upper(k)
                        } else {
                            self.lower(k)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn center_f64(&self) -> Vec<f64> {
        self.center.iter().map(|c| c.to_f64().unwrap()).collect()
    }

    pub fn half_f64(&self) -> Vec<f64> {
        self.half.iter().map(|h| h.to_f64().unwrap()).collect()
    }

    /// Euclidean diameter (largest vertex-to-vertex distance), in `f64`.
    pub fn diameter(&self) -> f64 {
        self.half_f64().iter().map(|h| (2.0 * h) * (2.0 * h)).sum::<f64>().sqrt()
    }
}

/// Sign (`-1` or `+1`) of vertex `v` on `axis` under the lexicographic
/// ordering of sign tuples used everywhere in this crate.
pub fn vertex_sign(v: usize, axis: usize, dim: usize) -> i8 {
    debug_assert!(axis < dim && v < (1 << dim));
    if (v >> (dim - 1 - axis)) & 1 == 1 {
        1
    } else {
        -1
    }
}

/// Seeded random rationals, boxes and polynomials with small numerators and
/// denominators, used by the exact structure checks and their tests.
pub mod random {
    use super::*;
    use rand::Rng;

    /// Rational with numerator in `-9..=9` and denominator in `1..=9`.
    pub fn rational(rng: &mut impl Rng) -> BigRational {
        ratio(rng.random_range(-9..=9), rng.random_range(1..=9))
    }

    /// Nonzero rational with the same bounds as [`rational`].
    pub fn nonzero_rational(rng: &mut impl Rng) -> BigRational {
        loop {
            let r = rational(rng);
            if !r.is_zero() {
                return r;
            }
        }
    }

    /// Strictly positive rational with numerator in `1..=9`, denominator in `1..=9`.
    pub fn positive_rational(rng: &mut impl Rng) -> BigRational {
        ratio(rng.random_range(1..=9), rng.random_range(1..=9))
    }

    /// Random box with rational center in `[-9, 9]^d` and half-lengths in `(0, 9]`.
    pub fn rect(rng: &mut impl Rng, dim: usize) -> DRect {
        let center = (0..dim).map(|_| rational(rng)).collect();
        let half = (0..dim).map(|_| positive_rational(rng)).collect();
        DRect::new(center, half)
    }

    /// Random polynomial supported on the given monomials.
    pub fn poly_on_monomials(
        rng: &mut impl Rng,
        dim: usize,
        monomials: &[MultiIndex],
    ) -> RationalPoly {
        RationalPoly::from_terms(
            dim,
            monomials.iter().map(|alpha| (alpha.clone(), rational(rng))),
        )
    }

    /// Random polynomial of total degree ≤ `deg` (all monomials populated).
    pub fn poly_total_degree(rng: &mut impl Rng, dim: usize, deg: u32) -> RationalPoly {
        let monos = monomials_total_degree(dim, deg);
        poly_on_monomials(rng, dim, &monos)
    }

    /// All multi-indices in `dim` variables with `|alpha| <= deg`.
    pub fn monomials_total_degree(dim: usize, deg: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut alpha = vec![0u32; dim];
        loop {
            if alpha.iter().sum::<u32>() <= deg {
                out.push(alpha.clone());
            }
            // Odometer over [0, deg]^dim.
            let mut axis = 0;
            loop {
                if axis == dim {
                    return out;
                }
                if alpha[axis] < deg {
                    alpha[axis] += 1;
                    break;
                }
                alpha[axis] = 0;
                axis += 1;
            }
        }
    }
}
