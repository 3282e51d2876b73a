//! Gauss–Legendre and Gauss–Jacobi rules.

use crate::special::ln_gamma;
use std::f64::consts::PI;

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affine map of a rule on [-1, 1] to [lo, hi]. `power` is the degree of
    /// homogeneity of the weight function (0 for Legendre).
    pub fn mapped(&self, lo: f64, hi: f64, power: f64) -> Rule {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let scale = half.powf(power + 1.0);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * scale).collect(),
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Jacobi polynomial P_n^{(a,b)} and P_{n-1}^{(a,b)} at x.
fn jacobi_pair(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = 0.5 * (a - b + (a + b + 2.0) * x);
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (a * a - b * b);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn jacobi_derivative(n: usize, a: f64, b: f64, x: f64, pn: f64, pnm1: f64) -> f64 {
    let nf = n as f64;
    let c = 2.0 * nf + a + b;
    (nf * (a - b - c * x) * pn + 2.0 * (nf + a) * (nf + b) * pnm1) / (c * (1.0 - x * x))
}

/// n-point Gauss–Jacobi rule on [-1, 1] for the weight (1-x)^a (1+x)^b.
///
/// Nodes come from Newton iteration started at the Chebyshev-like guesses and
/// deflated against the roots already found; weights use the closed form in
/// terms of P_n'.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Rule {
    assert!(n >= 1 && a > -1.0 && b > -1.0);
    let nf = n as f64;
    let mut nodes: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        // largest root first
        let theta = PI * (i as f64 + 0.75 + 0.5 * a) / (nf + 0.5 * (a + b + 1.0));
        let mut x = theta.cos();
        for _ in 0..100 {
            let (pn, pnm1) = jacobi_pair(n, a, b, x);
            let dp = jacobi_derivative(n, a, b, x, pn, pnm1);
            let defl: f64 = nodes.iter().map(|r| 1.0 / (x - r)).sum();
            let dx = pn / (dp - defl * pn);
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
    }
    nodes.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let log_c = ln_gamma(nf + a + 1.0) + ln_gamma(nf + b + 1.0)
        - ln_gamma(nf + a + b + 1.0)
        - ln_gamma(nf + 1.0)
        + (a + b + 1.0) * 2f64.ln();
    let c = log_c.exp();
    let weights = nodes
        .iter()
        .map(|&x| {
            let (pn, pnm1) = jacobi_pair(n, a, b, x);
            let dp = jacobi_derivative(n, a, b, x, pn, pnm1);
            c / ((1.0 - x * x) * dp * dp)
        })
        .collect();
    Rule { nodes, weights }
}

/// n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Gauss–Legendre on [lo, hi].
pub fn legendre_on(n: usize, lo: f64, hi: f64) -> Rule {
    gauss_legendre(n).mapped(lo, hi, 0.0)
}

/// Rule on [lo, hi] for the weight (x - lo)^p.
pub fn jacobi_left(n: usize, lo: f64, hi: f64, p: f64) -> Rule {
    gauss_jacobi(n, 0.0, p).mapped(lo, hi, p)
}

/// Rule on [lo, hi] for the weight (hi - x)^p.
pub fn jacobi_right(n: usize, lo: f64, hi: f64, p: f64) -> Rule {
    gauss_jacobi(n, p, 0.0).mapped(lo, hi, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(10);
        for k in 0..20 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let v = r.integrate(|x| x.powi(k));
            assert!((v - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn jacobi_moments() {
        // ∫_0^1 s^p s^k ds = 1/(p+k+1)
        for &p in &[-0.7, -0.4, 0.3, 0.6] {
            let r = jacobi_left(16, 0.0, 1.0, p);
            for k in 0..30 {
                let v = r.integrate(|s| s.powi(k));
                let exact = 1.0 / (p + k as f64 + 1.0);
                assert!((v / exact - 1.0).abs() < 1e-13, "p={p} k={k}");
            }
        }
    }

    #[test]
    fn jacobi_beta_integral() {
        // ∫_{-1}^{1} (1-x)^a (1+x)^b dx = 2^{a+b+1} B(a+1, b+1)
        let (a, b) = (0.35, -0.6);
        let r = gauss_jacobi(7, a, b);
        let total: f64 = r.weights.iter().sum();
        let exact = 2f64.powf(a + b + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0);
        assert!((total / exact - 1.0).abs() < 1e-14);
    }

    #[test]
    fn right_weight_mirror() {
        let r = jacobi_right(12, 0.2, 1.0, -0.3);
        let v = r.integrate(|x| x * x);
        // substitute t = 1 - x on [0, 0.8]
        let l = jacobi_left(12, 0.0, 0.8, -0.3);
        let w = l.integrate(|t| (1.0 - t) * (1.0 - t));
        assert!((v - w).abs() < 1e-14);
    }
}
