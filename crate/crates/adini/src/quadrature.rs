//! Tensor-product Gauss–Legendre quadrature on box cells.
//!
//! One-dimensional nodes are computed at startup by Newton iteration on the
//! three-term Legendre recurrence rather than hard-coded tables, so every
//! supported order shares one code path. An `n`-point rule integrates
//! polynomials of degree `2n-1` exactly on `[-1, 1]`.

use crate::{Error, Result};

/// One-dimensional Gauss–Legendre rule on the reference interval `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct QuadRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Legendre polynomial `P_n` and its derivative at `x`, by the recurrence
/// `(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    // P_n' from P_n and P_{n-1}: (x^2 - 1) P_n' = n (x P_n - P_{n-1}).
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Build the `n`-point Gauss–Legendre rule, `1 <= n <= 16`.
pub fn gauss_rule(n: usize) -> Result<QuadRule> {
    if !(1..=16).contains(&n) {
        return Err(Error::BadQuadOrder(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-flavored initial guess, accurate enough for Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::QuadNoConvergence { n, node: i });
        }
        let (_, dp) = legendre(n, x);
        // Nodes come out ordered decreasing in x; store increasing.
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Ok(QuadRule { nodes, weights })
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Tensor nodes and weights on the box with the given `center` and
    /// `half` lengths; weights include the Jacobian `∏ half[k]`.
    pub fn tensor_points(&self, center: &[f64], half: &[f64]) -> Vec<(Vec<f64>, f64)> {
        assert_eq!(center.len(), half.len());
        let d = center.len();
        let n = self.len();
        let jac: f64 = half.iter().product();
        let total = n.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut x = vec![0.0; d];
            let mut w = jac;
            let mut rest = flat;
            for k in 0..d {
                let i = rest % n;
                rest /= n;
                x[k] = center[k] + half[k] * self.nodes[i];
                w *= self.weights[i];
            }
            out.push((x, w));
        }
        out
    }
}

/// Integrate `f` over the box with the given center and half-lengths by the
/// tensor product of `rule` on each axis.
pub fn integrate_cell<F: Fn(&[f64]) -> f64>(
    f: F,
    center: &[f64],
    half: &[f64],
    rule: &QuadRule,
) -> f64 {
    rule.tensor_points(center, half)
        .iter()
        .map(|(x, w)| w * f(x))
        .sum()
}
