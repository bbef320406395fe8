//! Scalar fields with derivatives on demand: the right-hand sides, exact
//! solutions and interpolation targets of the solver pipeline.
//!
//! A [`FieldFn`] is either backed by an exact [`RationalPoly`] (derivatives
//! precomputed symbolically, exact evaluation available at rational points)
//! or by an analytic closure that maps `(x, alpha)` to `∂^alpha f(x)`.
//! Mixed derivatives up to total order 4 are supported on the polynomial
//! path — enough for Hessians of solutions and fourth-order right-hand
//! sides.

use std::collections::HashMap;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::One;

use crate::polyq::{random::monomials_total_degree, FloatPoly, MultiIndex, RationalPoly};

/// Highest total derivative order served by polynomial-backed fields.
pub const MAX_DERIV_ORDER: u32 = 4;

#[derive(Clone)]
enum Kind {
    Poly {
        exact: RationalPoly,
        table: Arc<HashMap<MultiIndex, FloatPoly>>,
    },
    Analytic(Arc<dyn Fn(&[f64], &[u32]) -> f64 + Send + Sync>),
}

/// Scalar field over d variables with derivatives up to order 4.
#[derive(Clone)]
pub struct FieldFn {
    dim: usize,
    kind: Kind,
}

impl FieldFn {
    /// Wrap an exact polynomial (physical frame). All mixed derivatives of
    /// total order ≤ 4 are differentiated symbolically once, here.
    pub fn from_poly(p: RationalPoly) -> Self {
        let dim = p.dim();
        let table = monomials_total_degree(dim, MAX_DERIV_ORDER)
            .into_iter()
            .map(|alpha| {
                let d = p.diff_multi(&alpha).to_float();
                (alpha, d)
            })
            .collect();
        Self {
            dim,
            kind: Kind::Poly {
                exact: p,
                table: Arc::new(table),
            },
        }
    }

    /// Wrap an analytic closure `(x, alpha) -> ∂^alpha f(x)`.
    pub fn from_fn(
        dim: usize,
        f: impl Fn(&[f64], &[u32]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            kind: Kind::Analytic(Arc::new(f)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.kind, Kind::Poly { .. })
    }

    /// The exact polynomial behind this field, when there is one.
    pub fn as_poly(&self) -> Option<&RationalPoly> {
        match &self.kind {
            Kind::Poly { exact, .. } => Some(exact),
            Kind::Analytic(_) => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.deriv(x, &vec![0; self.dim])
    }

    /// Mixed derivative `∂^alpha f(x)`. Polynomial fields panic beyond total
    /// order 4; analytic fields forward `alpha` to their closure.
    pub fn deriv(&self, x: &[f64], alpha: &[u32]) -> f64 {
        assert_eq!(x.len(), self.dim, "point length must equal dim");
        assert_eq!(alpha.len(), self.dim, "multi-index length must equal dim");
        match &self.kind {
            Kind::Poly { table, .. } => table
                .get(alpha)
                .unwrap_or_else(|| {
                    panic!("derivative {alpha:?} beyond supported total order {MAX_DERIV_ORDER}")
                })
                .eval(x),
            Kind::Analytic(f) => f(x, alpha),
        }
    }

    /// Exact derivative at a rational point; `None` for analytic fields.
    pub fn deriv_exact(&self, x: &[BigRational], alpha: &[u32]) -> Option<BigRational> {
        match &self.kind {
            Kind::Poly { exact, .. } => Some(exact.diff_multi(alpha).eval(x)),
            Kind::Analytic(_) => None,
        }
    }

    /// The biharmonic image `Δ²f = Σ_{i,j} ∂⁴f/∂x_i²∂x_j²`: symbolic for
    /// polynomial fields, a derivative-forwarding closure otherwise.
    pub fn biharmonic(&self) -> FieldFn {
        let d = self.dim;
        match &self.kind {
            Kind::Poly { exact, .. } => {
                let mut out = RationalPoly::zero(d);
                for i in 0..d {
                    for j in 0..d {
                        out = &out + &exact.diff(i).diff(i).diff(j).diff(j);
                    }
                }
                FieldFn::from_poly(out)
            }
            Kind::Analytic(f) => {
                let f = f.clone();
                FieldFn::from_fn(d, move |x, alpha| {
                    let mut total = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            let mut beta = alpha.to_vec();
                            beta[i] += 2;
                            beta[j] += 2;
                            total += f(x, &beta);
                        }
                    }
                    total
                })
            }
        }
    }
}

/// `n`-th derivative of `t ↦ sin²(πt)`: closed form via
/// `sin²(πt) = (1 - cos 2πt)/2`.
fn sin_sq_deriv(t: f64, n: u32) -> f64 {
    use std::f64::consts::PI;
    if n == 0 {
        let s = (PI * t).sin();
        return s * s;
    }
    let omega = 2.0 * PI;
    -0.5 * omega.powi(n as i32) * (omega * t + f64::from(n) * PI / 2.0).cos()
}

/// Trigonometric manufactured solution `Π_k sin²(π x_k)` on the unit box:
/// clamped on the boundary, analytic everywhere.
pub fn u1(dim: usize) -> FieldFn {
    FieldFn::from_fn(dim, move |x, alpha| {
        x.iter()
            .zip(alpha)
            .map(|(&t, &n)| sin_sq_deriv(t, n))
            .product()
    })
}

/// Polynomial manufactured solution `Π_k x_k²(1-x_k)²` on the unit box,
/// as an exact polynomial.
pub fn u2_poly(dim: usize) -> RationalPoly {
    let mut p = RationalPoly::constant(dim, BigRational::one());
    for k in 0..dim {
        // x² - 2x³ + x⁴
        let axis = RationalPoly::from_terms(
            dim,
            [2u32, 3, 4].iter().zip([1i64, -2, 1]).map(|(&e, c)| {
                let mut a = vec![0; dim];
                a[k] = e;
                (a, crate::polyq::ratio(c, 1))
            }),
        );
        p = &p * &axis;
    }
    p
}

/// Polynomial manufactured solution wrapped as a field.
pub fn u2(dim: usize) -> FieldFn {
    FieldFn::from_poly(u2_poly(dim))
}

/// Exact rational from a coefficient token: integer (`-3`), fraction
/// (`5/4`), or decimal with optional exponent (`0.25`, `1.5e2`), all parsed
/// without any float round-trip.
fn parse_rational(token: &str, line: usize) -> crate::Result<BigRational> {
    use num_bigint::BigInt;
    let err = |msg: String| crate::Error::Parse {
        what: "polynomial file",
        line,
        msg,
    };
    let int = |s: &str| -> crate::Result<BigInt> {
        s.parse::<BigInt>()
            .map_err(|_| err(format!("bad integer {s:?}")))
    };
    if let Some((p, q)) = token.split_once('/') {
        let den = int(q)?;
        if den == BigInt::from(0) {
            return Err(err(format!("zero denominator in {token:?}")));
        }
        return Ok(BigRational::new(int(p)?, den));
    }
    let (mantissa, exp10) = match token.split_once(['e', 'E']) {
        Some((m, e)) => (
            m,
            e.parse::<i32>()
                .map_err(|_| err(format!("bad exponent in {token:?}")))?,
        ),
        None => (token, 0),
    };
    let mut value = match mantissa.split_once('.') {
        Some((whole, frac)) => {
            if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(err(format!("bad decimal {token:?}")));
            }
            let whole_part = if whole.is_empty() || whole == "-" || whole == "+" {
                BigInt::from(0)
            } else {
                int(whole)?
            };
            let negative = whole.starts_with('-');
            let scale = BigInt::from(10).pow(frac.len() as u32);
            let frac_part = BigRational::new(int(frac)?, scale);
            let whole_rat = BigRational::from_integer(whole_part);
            if negative {
                whole_rat - frac_part
            } else {
                whole_rat + frac_part
            }
        }
        None => BigRational::from_integer(int(mantissa)?),
    };
    let ten = BigRational::from_integer(BigInt::from(10));
    let factor = crate::polyq::rat_pow(&ten, exp10.unsigned_abs());
    if exp10 >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    Ok(value)
}

/// Parse a polynomial from text: one term per line as `coeff a1 .. ad`
/// (coefficient then one exponent per axis), with `#` comments and blank
/// lines ignored. The dimension is inferred from the first term and must
/// be 1, 2 or 3. Repeated monomials accumulate.
pub fn poly_from_text(src: &str) -> crate::Result<FieldFn> {
    let mut dim: Option<usize> = None;
    let mut poly: Option<RationalPoly> = None;
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let coeff = parse_rational(tokens.next().expect("nonempty line"), line)?;
        let alpha = tokens
            .map(|t| {
                t.parse::<u32>().map_err(|_| crate::Error::Parse {
                    what: "polynomial file",
                    line,
                    msg: format!("bad exponent {t:?}"),
                })
            })
            .collect::<crate::Result<Vec<u32>>>()?;
        match dim {
            None => {
                if !(1..=3).contains(&alpha.len()) {
                    return Err(crate::Error::BadDimension(alpha.len()));
                }
                dim = Some(alpha.len());
                poly = Some(RationalPoly::zero(alpha.len()));
            }
            Some(d) if d != alpha.len() => {
                return Err(crate::Error::Parse {
                    what: "polynomial file",
                    line,
                    msg: format!("expected {d} exponents, found {}", alpha.len()),
                });
            }
            Some(_) => {}
        }
        let d = dim.expect("set above");
        let term = RationalPoly::monomial(d, alpha, coeff);
        poly = Some(&poly.expect("set above") + &term);
    }
    match poly {
        Some(p) => Ok(FieldFn::from_poly(p)),
        None => Err(crate::Error::Parse {
            what: "polynomial file",
            line: 0,
            msg: "no terms found".into(),
        }),
    }
}
