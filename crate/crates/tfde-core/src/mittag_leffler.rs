//! Mittag-Leffler functions of a matrix pencil by contour quadrature.
//!
//! The spatial operator is the pencil L = M⁻¹S (mass M, stiffness S). All
//! vectors handed to the integrators are mass-weighted, i.e. `M v` rather
//! than `v`, which is exactly what a load assembly produces; the returned
//! vectors are plain nodal coefficients.
//!
//! Two rule families are supported:
//!
//! * Laplace type (CF, PC): t^{β−1}E_{γ,β}(−K t^γ L)v ≈
//!   t^{β−1} Re Σ_k w_k z_k^{γ−β} (z_k^γ M + K t^γ S)⁻¹ M v.
//! * Resolvent type (DTI): the same quantity as
//!   Re Σ_k w_k f(z_k) (z_k M − S)⁻¹ M v with f(z) = t^{β−1}E_{γ,β}(−K t^γ z^p),
//!   which also covers fractional powers L^p.
//!
//! Nodes are stored in the closed upper half plane; weights of nodes whose
//! conjugate is implied already carry the factor 2.

use crate::error::{check_dim, invalid, Result, TfdeError};
use crate::krylov_toeplitz::{eigenvalues, gmres, Banded, BandedLu, Dense, DenseLu};
use crate::special::{gamma as gamma_fn, ln_gamma, rgamma};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use std::borrow::Cow;
use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::{Duration, Instant};

// ---------------------------------------------------------------------------
// scalar function

// Series is used while |z|^{1/γ} stays below this; beyond it the terms grow
// like e^{|z|^{1/γ}} before cancelling.
const SERIES_RADIUS: f64 = 3.0;

/// E_{γ,β}(z) = Σ zⁿ/Γ(γn+β).
pub fn scalar_ml(gamma: f64, beta: f64, z: C64) -> C64 {
    assert!(gamma > 0.0, "Mittag-Leffler order must be positive");
    if z == C64::new(0.0, 0.0) {
        return C64::new(rgamma(beta), 0.0);
    }
    if z.norm().powf(1.0 / gamma) <= SERIES_RADIUS {
        return ml_series(gamma, beta, z);
    }
    if gamma == 1.0 && beta == beta.round() && beta >= 1.0 {
        return ml_exponential(beta as usize, z);
    }
    ml_contour(gamma, beta, z)
}

fn ml_series(gamma: f64, beta: f64, z: C64) -> C64 {
    let mut sum = C64::new(0.0, 0.0);
    let mut zk = C64::new(1.0, 0.0);
    for k in 0..2000 {
        let term = zk * rgamma(gamma * k as f64 + beta);
        sum += term;
        if k > 3 && term.norm() <= 1e-17 * sum.norm() {
            break;
        }
        zk *= z;
    }
    sum
}

// E_{1,m}(z) = z^{1−m}(e^z − Σ_{k<m−1} z^k/k!), accurate when e^z is tiny.
fn ml_exponential(m: usize, z: C64) -> C64 {
    let mut poly = C64::new(0.0, 0.0);
    let mut term = C64::new(1.0, 0.0);
    for k in 0..m.saturating_sub(1) {
        poly += term;
        term = term * z / (k + 1) as f64;
    }
    (z.exp() - poly) * z.powi(1 - m as i32)
}

// Singularities s of s^{γ−β}/(s^γ − z) on the principal sheet.
fn ml_poles(gamma: f64, z: C64) -> Vec<C64> {
    let r = z.norm().powf(1.0 / gamma);
    let th = z.arg();
    let kmin = ((-gamma * PI - th) / (2.0 * PI)).floor() as i64 - 1;
    let kmax = ((gamma * PI - th) / (2.0 * PI)).ceil() as i64 + 1;
    (kmin..=kmax)
        .filter_map(|k| {
            let a = th + 2.0 * PI * k as f64;
            (a.abs() < gamma * PI).then(|| C64::from_polar(r, a / gamma))
        })
        .collect()
}

// Inverse Laplace transform of s^{γ−β}/(s^γ − z) along the parabola
// s = μ(1 + iu)², plus residues of the poles to its right.
fn ml_contour(gamma: f64, beta: f64, z: C64) -> C64 {
    let poles = ml_poles(gamma, z);
    let mu0 = (beta - gamma).max(1.0);
    let mut best = (mu0, -1.0);
    for f in [1.0, 0.6, 1.6, 0.4, 2.5, 0.25, 4.0, 0.15, 6.0] {
        let mu = mu0 * f;
        let dist = poles.iter().map(|p| (1.0 - (p / mu).sqrt().re).abs()).fold(1.0, f64::min);
        if dist > best.1 {
            best = (mu, dist);
        }
        if dist >= 0.3 {
            break;
        }
    }
    let (mu, d) = (best.0, best.1.min(1.0));
    let mut residues = C64::new(0.0, 0.0);
    for p in &poles {
        if (p / mu).sqrt().re > 1.0 {
            residues += p.powf(1.0 - beta) * p.exp() / gamma;
        }
    }
    let step = 2.0 * PI * d / (mu * (1.0 + d).powi(2) + 40.0);
    let umax = (1.0 + (40.0 + (1.0 + z.norm()).ln()) / mu).sqrt();
    let n = (umax / step).ceil() as i64;
    let i = C64::new(0.0, 1.0);
    let mut acc = C64::new(0.0, 0.0);
    for j in -n..=n {
        let w = C64::new(1.0, j as f64 * step);
        let s = mu * w * w;
        let ds = 2.0 * i * mu * w;
        acc += s.exp() * s.powf(gamma - beta) / (s.powf(gamma) - z) * ds;
    }
    acc * step / (2.0 * PI * i) + residues
}

// ---------------------------------------------------------------------------
// contour rules

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Cf,
    Pc,
    Dti,
}

impl std::str::FromStr for Scheme {
    type Err = TfdeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cf" => Ok(Scheme::Cf),
            "pc" => Ok(Scheme::Pc),
            "dti" => Ok(Scheme::Dti),
            other => Err(invalid(format!("unknown contour scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleInfo {
    /// `singular_value` is the CF estimate of the approximation error.
    Cf { n1: usize, singular_value: f64 },
    Pc { n1: usize, sigma: f64, tau: f64, predicted_error: f64 },
    Dti { n1: usize, sigma_min: f64, sigma_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourRule {
    pub scheme: Scheme,
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub info: RuleInfo,
}

impl ContourRule {
    /// Scalar evaluation t^{β−1}E_{γ,β}(−K t^γ σ^p) through the rule, with the
    /// operator replaced by the number σ > 0.
    pub fn scalar(&self, gamma: f64, beta: f64, t: f64, k: f64, sigma: f64, power: f64) -> f64 {
        let scale = t.powf(beta - 1.0);
        match self.scheme {
            Scheme::Cf | Scheme::Pc => {
                let q = k * t.powf(gamma) * sigma.powf(power);
                let s: C64 = self
                    .nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(z, w)| w * z.powf(gamma - beta) / (z.powf(gamma) + q))
                    .sum();
                scale * s.re
            }
            Scheme::Dti => {
                let s: C64 = self
                    .nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(z, w)| w * scalar_ml(gamma, beta, -k * t.powf(gamma) * z.powf(power)) / (z - sigma))
                    .sum();
                scale * s.re
            }
        }
    }
}

/// Number of Chebyshev coefficients kept in the CF construction.
pub const CF_COEFFS: usize = 75;
/// FFT length of the CF construction.
pub const CF_SAMPLES: usize = 1024;
const CF_SCALE: f64 = 9.0;

/// Poles and residues of the type (N1−1, N1) CF approximation of e^z on
/// (−∞, 0]: r(z) = Σ c_k/(z − z_k). The rule stores w_k = −c_k so that the
/// Laplace-type formula applies unchanged.
pub fn cf_nodes(n1: usize) -> Result<ContourRule> {
    if n1 % 2 != 0 || !(8..=20).contains(&n1) {
        return Err(invalid(format!("CF degree must be even and in 8..=20, got {n1}")));
    }
    let (kk, nf) = (CF_COEFFS, CF_SAMPLES);
    let w: Vec<C64> = (0..nf).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / nf as f64)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nf);
    let forward = |v: &[C64]| -> Vec<C64> {
        let mut buf = v.to_vec();
        buf.resize(nf, C64::new(0.0, 0.0));
        fft.process(&mut buf);
        buf
    };

    // Chebyshev coefficients of e^{9(t−1)/(t+1)} on the unit circle
    let samples: Vec<C64> = w
        .iter()
        .map(|wj| {
            let t = wj.re;
            C64::new((CF_SCALE * (t - 1.0) / (t + 1.0 + 1e-16)).exp(), 0.0)
        })
        .collect();
    let c: Vec<f64> = forward(&samples).iter().map(|v| v.re / nf as f64).collect();
    let f: Vec<C64> = w.iter().map(|wj| horner_ascending(&c[..=kk], *wj)).collect();

    let hankel: Vec<Vec<f64>> =
        (0..kk).map(|j| (0..kk).map(|i| if i + j < kk { c[1 + i + j] } else { 0.0 }).collect()).collect();
    let (cols, sv, right) = jacobi_svd(hankel);
    let mut order: Vec<usize> = (0..kk).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let col = order[n1];
    let s = sv[col];
    let u: Vec<C64> = (0..kk).map(|i| C64::new(cols[col][kk - 1 - i] / s, 0.0)).collect();
    let v: Vec<f64> = right[col].clone();
    let vc: Vec<C64> = v.iter().map(|x| C64::new(*x, 0.0)).collect();
    let (fu, fv) = (forward(&u), forward(&vc));
    let rt: Vec<C64> = (0..nf).map(|j| f[j] - s * w[j].powi(kk as i32) * fu[j] / fv[j]).collect();

    // v holds the denominator coefficients, highest degree first
    let roots = polynomial_roots(&v)?;
    // Noise-level singular vectors can add spurious roots just outside the
    // circle; the genuine poles are the N1 largest in modulus.
    let mut q = roots;
    q.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    q.truncate(n1);
    if q.len() != n1 || q[n1 - 1].norm() <= 1.0 {
        return Err(TfdeError::AccuracyFailure {
            what: format!("CF denominator has fewer than {n1} roots outside the unit disc"),
            achieved: s,
        });
    }
    let pt: Vec<C64> = (0..nf)
        .map(|j| rt[j] * q.iter().fold(C64::new(1.0, 0.0), |acc, qk| acc * (w[j] - qk)))
        .collect();
    let ptc: Vec<f64> = forward(&pt).iter().take(n1 + 1).map(|v| v.re / nf as f64).collect();

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (k, qk) in q.iter().enumerate() {
        let num = horner_ascending(&ptc, *qk);
        let den = q.iter().enumerate().filter(|(m, _)| *m != k).fold(C64::new(1.0, 0.0), |a, (_, qm)| a * (qk - qm));
        let zk = CF_SCALE * (qk - 1.0).powi(2) / (qk + 1.0).powi(2);
        let ck = 4.0 * (num / den) * zk / (qk * qk - 1.0);
        if zk.im > 1e-12 * zk.norm() {
            nodes.push(zk);
            weights.push(-2.0 * ck);
        } else if zk.im.abs() <= 1e-12 * zk.norm() {
            nodes.push(C64::new(zk.re, 0.0));
            weights.push(-ck);
        }
    }
    sort_nodes(&mut nodes, &mut weights);
    let worst = (0..2000)
        .map(|i| {
            let x = -(10f64).powf(-8.0 + 14.0 * i as f64 / 1999.0);
            let r: f64 = nodes.iter().zip(&weights).map(|(z, w)| (-w / (x - z)).re).sum();
            (r - x.exp()).abs()
        })
        .fold(0.0, f64::max);
    if !(worst <= 1e-6) {
        return Err(TfdeError::AccuracyFailure { what: format!("CF approximation of degree {n1}"), achieved: worst });
    }
    Ok(ContourRule { scheme: Scheme::Cf, nodes, weights, info: RuleInfo::Cf { n1, singular_value: s } })
}

// One-sided Jacobi SVD of a square matrix given by columns. Returns the
// rotated columns (u_i σ_i), the σ_i and the right singular vectors. Unlike
// bidiagonalization it keeps relative accuracy for the tiny singular values
// of the graded Hankel matrix.
fn jacobi_svd(mut a: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-16 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for m in [&mut a, &mut v] {
                    let (lo, hi) = m.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, yq) = (*x, *y);
                        *x = cs * xp - sn * yq;
                        *y = sn * xp + cs * yq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv = a.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    (a, sv, v)
}

fn horner_ascending(c: &[f64], x: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, ci| acc * x + ci)
}

fn sort_nodes(nodes: &mut Vec<C64>, weights: &mut Vec<C64>) {
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&a, &b| nodes[a].im.partial_cmp(&nodes[b].im).unwrap());
    *nodes = idx.iter().map(|&i| nodes[i]).collect();
    *weights = idx.iter().map(|&i| weights[i]).collect();
}

// Roots of Σ c_i x^{n−i} (highest first): companion eigenvalues polished by
// Newton steps on the polynomial itself.
fn polynomial_roots(c: &[f64]) -> Result<Vec<C64>> {
    let lead = c.iter().position(|x| *x != 0.0).ok_or_else(|| invalid("zero polynomial"))?;
    let c = &c[lead..];
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let comp = Dense::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -c[j + 1] / c[0]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots = eigenvalues(&comp)?;
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let (mut p, mut dp) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for ci in c {
                dp = dp * *r + p;
                p = p * *r + ci;
            }
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 1e-3 * r.norm().max(1.0) {
                break;
            }
            *r -= step;
        }
    }
    Ok(roots)
}

/// Default PC node count.
pub const PC_DEFAULT_N1: usize = 16;

// ln of the discretization, truncation and round-off-like error terms.
fn pc_log_errors(s: f64, tau: f64, n1: usize, beta: f64) -> [f64; 3] {
    let base = (1.0 - beta) * s.ln() + if beta > 0.0 { ln_gamma(beta) } else { 0.0 };
    let disc = -PI * PI / (s * tau * tau) + 2.0 * PI / tau + base;
    let p = n1 as f64 * tau;
    let trunc = s * (1.0 - p * p) + (0.5 - beta) * (1.0 + p * p).ln() + base;
    let mut cross = f64::INFINITY;
    for i in 1..100 {
        let a = i as f64 / 100.0;
        cross = cross.min(s * (1.0 - a).powi(2) - 2.0 * PI * a / tau + (1.0 - 2.0 * beta) * (1.0 - a).ln());
    }
    [disc, trunc, cross + base]
}

/// (σ, τ₁, predicted ln error) balancing the PC error terms for β and N1.
pub fn pc_parameters(beta: f64, n1: usize) -> (f64, f64, f64) {
    let mut best = (1.0, 1.0, f64::INFINITY);
    for i in 0..491 {
        let tau = 0.02 + 0.002 * i as f64;
        if n1 as f64 * tau <= 1.0 {
            continue;
        }
        let (mut lo, mut hi) = (1e-3, PI / tau * 0.999);
        for _ in 0..80 {
            let mid = (lo * hi).sqrt();
            let e = pc_log_errors(mid, tau, n1, beta);
            if e[0] > e[1] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = (lo * hi).sqrt();
        let e = pc_log_errors(s, tau, n1, beta).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if e < best.2 {
            best = (s, tau, e);
        }
    }
    best
}

/// Trapezoid rule on the parabola z(p) = σ(ip + 1)², p = kτ₁, k = 0..=N1.
///
/// The parameters depend on β only; `t` and γ enter at application time.
pub fn pc_nodes(beta: f64, n1: usize) -> Result<ContourRule> {
    if beta < 0.5 {
        return Err(invalid(format!("PC rule needs beta >= 1/2, got {beta}")));
    }
    if n1 < 2 {
        return Err(invalid("PC rule needs at least two nodes"));
    }
    let (sigma, tau, predicted) = pc_parameters(beta, n1);
    let i = C64::new(0.0, 1.0);
    let mut nodes = Vec::with_capacity(n1 + 1);
    let mut weights = Vec::with_capacity(n1 + 1);
    for k in 0..=n1 {
        let p = k as f64 * tau;
        let wp = C64::new(1.0, p);
        let z = sigma * wp * wp;
        let dz = 2.0 * i * sigma * wp;
        let nu = if k == 0 { 1.0 } else { 2.0 };
        nodes.push(z);
        weights.push(nu * tau * z.exp() * dz / (2.0 * PI * i));
    }
    Ok(ContourRule {
        scheme: Scheme::Pc,
        nodes,
        weights,
        info: RuleInfo::Pc { n1, sigma, tau, predicted_error: predicted.exp() },
    })
}

const DTI_HALF_HEIGHT: f64 = 0.45 * PI;

/// Resolvent rule enclosing [σ_min, σ_max]: an ellipse in the ln z plane
/// with foci ln σ_min, ln σ_max and half-height 0.45π, so the contour stays
/// in the right half plane. N1 = 10⌈ln(σ_max/σ_min) + 3⌉ trapezoid nodes.
pub fn dti_nodes(sigma_min: f64, sigma_max: f64) -> Result<ContourRule> {
    if !(sigma_min > 0.0) || !(sigma_max >= sigma_min) || !sigma_max.is_finite() {
        return Err(TfdeError::InvalidContour(format!(
            "need 0 < sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
        )));
    }
    let spread = (sigma_max / sigma_min).ln();
    let n1 = 10 * (spread + 3.0).ceil() as usize;
    let centre = 0.5 * (sigma_min * sigma_max).ln();
    let focal = (0.5 * spread).max(0.05);
    let mu = (DTI_HALF_HEIGHT / focal).asinh();
    let semi = focal * mu.cosh();
    let i = C64::new(0.0, 1.0);
    let mut nodes = Vec::with_capacity(n1 / 2);
    let mut weights = Vec::with_capacity(n1 / 2);
    for k in 0..n1 / 2 {
        let th = 2.0 * PI * (k as f64 + 0.5) / n1 as f64;
        let w = C64::new(centre + semi * th.cos(), DTI_HALF_HEIGHT * th.sin());
        let dw = C64::new(-semi * th.sin(), DTI_HALF_HEIGHT * th.cos());
        let z = w.exp();
        nodes.push(z);
        weights.push(2.0 * z * dw / (i * n1 as f64));
    }
    Ok(ContourRule { scheme: Scheme::Dti, nodes, weights, info: RuleInfo::Dti { n1, sigma_min, sigma_max } })
}

// ---------------------------------------------------------------------------
// shifted solves

/// Factorization of a M + b S for fixed complex a, b.
pub trait ShiftedFactor {
    fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>>;
}

/// Access to the pencil (M, S) and to solves with a M + b S.
pub trait ShiftedSolver: Sync {
    fn dim(&self) -> usize;
    fn is_symmetric(&self) -> bool;
    fn mass_apply(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn stiffness_apply(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn factor(&self, a: C64, b: C64) -> Result<Box<dyn ShiftedFactor + '_>>;

    /// M⁻¹ b, used for L² projections.
    fn mass_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor(C64::new(1.0, 0.0), C64::new(0.0, 0.0))?;
        let rhs: Vec<C64> = b.iter().map(|x| C64::new(*x, 0.0)).collect();
        Ok(f.solve(&rhs)?.iter().map(|z| z.re).collect())
    }
}

impl ShiftedFactor for BandedLu<C64> {
    fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        BandedLu::solve(self, rhs)
    }
}

impl ShiftedFactor for DenseLu<C64> {
    fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        DenseLu::solve(self, rhs)
    }
}

/// Banded mass and stiffness (standard FEM Laplacians).
#[derive(Debug, Clone)]
pub struct BandedPencil {
    pub mass: Banded<f64>,
    pub stiffness: Banded<f64>,
}

impl BandedPencil {
    pub fn new(mass: Banded<f64>, stiffness: Banded<f64>) -> Result<Self> {
        check_dim(mass.dim(), stiffness.dim())?;
        if mass.lower() != stiffness.lower() || mass.upper() != stiffness.upper() {
            return Err(invalid("mass and stiffness band shapes differ"));
        }
        Ok(Self { mass, stiffness })
    }
}

impl ShiftedSolver for BandedPencil {
    fn dim(&self) -> usize {
        self.mass.dim()
    }
    fn is_symmetric(&self) -> bool {
        true
    }
    fn mass_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.mass.matvec(v)
    }
    fn stiffness_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.stiffness.matvec(v)
    }
    fn factor(&self, a: C64, b: C64) -> Result<Box<dyn ShiftedFactor + '_>> {
        Ok(Box::new(self.mass.combine(a, &self.stiffness, b)?.lu()?))
    }
}

/// Dense mass and stiffness (the tempered space operator).
#[derive(Debug, Clone)]
pub struct DensePencil {
    pub mass: Dense<f64>,
    pub stiffness: Dense<f64>,
    symmetric: bool,
}

impl DensePencil {
    pub fn new(mass: Dense<f64>, stiffness: Dense<f64>) -> Result<Self> {
        check_dim(mass.nrows(), stiffness.nrows())?;
        check_dim(mass.nrows(), mass.ncols())?;
        check_dim(stiffness.nrows(), stiffness.ncols())?;
        let asym = stiffness.add_scaled(-1.0, &stiffness.transpose())?.max_abs();
        let symmetric = asym <= 1e-12 * stiffness.max_abs();
        Ok(Self { mass, stiffness, symmetric })
    }
}

impl ShiftedSolver for DensePencil {
    fn dim(&self) -> usize {
        self.mass.nrows()
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    fn mass_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.mass.matvec(v)
    }
    fn stiffness_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.stiffness.matvec(v)
    }
    fn factor(&self, a: C64, b: C64) -> Result<Box<dyn ShiftedFactor + '_>> {
        let n = self.dim();
        let m = self.mass.as_slice();
        let s = self.stiffness.as_slice();
        let data = (0..n * n).map(|i| a * m[i] + b * s[i]).collect();
        Ok(Box::new(Dense::from_row_major(n, n, data)?.lu()?))
    }
}

/// Matrix-free stiffness (e.g. FFT Toeplitz) with banded mass; shifted
/// systems are solved by un-restarted complex GMRES.
pub struct IterativePencil<'a> {
    pub mass: Banded<f64>,
    stiffness: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a>,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> IterativePencil<'a> {
    pub fn new(mass: Banded<f64>, stiffness: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a, tol: f64) -> Self {
        let max_iter = mass.dim();
        Self { mass, stiffness: Box::new(stiffness), tol, max_iter }
    }
}

struct GmresFactor<'p, 'a> {
    pencil: &'p IterativePencil<'a>,
    a: C64,
    b: C64,
}

impl ShiftedFactor for GmresFactor<'_, '_> {
    fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let n = rhs.len();
        let failure = Mutex::new(None);
        let op = |x: &[C64]| -> Vec<C64> {
            let re: Vec<f64> = x.iter().map(|z| z.re).collect();
            let im: Vec<f64> = x.iter().map(|z| z.im).collect();
            let parts = (|| -> Result<_> {
                Ok((
                    self.pencil.mass.matvec(&re)?,
                    self.pencil.mass.matvec(&im)?,
                    (self.pencil.stiffness)(&re)?,
                    (self.pencil.stiffness)(&im)?,
                ))
            })();
            match parts {
                Ok((mr, mi, sr, si)) => (0..n)
                    .map(|i| self.a * C64::new(mr[i], mi[i]) + self.b * C64::new(sr[i], si[i]))
                    .collect(),
                Err(e) => {
                    *failure.lock().unwrap() = Some(e);
                    vec![C64::new(0.0, 0.0); n]
                }
            }
        };
        let (x, report) = gmres(&op, rhs, self.pencil.tol, self.pencil.max_iter, None)?;
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        if !report.converged {
            return Err(TfdeError::AccuracyFailure {
                what: format!("shifted GMRES after {} iterations", report.iterations),
                achieved: report.residual_history.last().cloned().unwrap_or(f64::NAN),
            });
        }
        Ok(x)
    }
}

impl ShiftedSolver for IterativePencil<'_> {
    fn dim(&self) -> usize {
        self.mass.dim()
    }
    fn is_symmetric(&self) -> bool {
        false
    }
    fn mass_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.mass.matvec(v)
    }
    fn stiffness_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (self.stiffness)(v)
    }
    fn factor(&self, a: C64, b: C64) -> Result<Box<dyn ShiftedFactor + '_>> {
        Ok(Box::new(GmresFactor { pencil: self, a, b }))
    }
    fn mass_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.mass.lu()?.solve(b)
    }
}

// ---------------------------------------------------------------------------
// operator functions

/// coef · t^{β−1}E_{γ,β}(−K t^γ L^p) v_rhs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlTerm {
    pub t: f64,
    pub beta: f64,
    pub coef: f64,
    pub rhs: usize,
}

/// Rule choice for an integrator. PC rules are built per β on demand.
#[derive(Debug, Clone)]
pub enum RuleSet {
    Cf(ContourRule),
    Pc { n1: usize },
    Dti(ContourRule),
}

impl RuleSet {
    pub fn scheme(&self) -> Scheme {
        match self {
            RuleSet::Cf(_) => Scheme::Cf,
            RuleSet::Pc { .. } => Scheme::Pc,
            RuleSet::Dti(_) => Scheme::Dti,
        }
    }
}

/// Evaluates sums of Mittag-Leffler operator functions on one pencil.
pub struct MlIntegrator<'a> {
    pub gamma: f64,
    pub k: f64,
    /// Power p of the operator (1, or α/2 for the fractional Laplacian).
    pub power: f64,
    solver: &'a dyn ShiftedSolver,
    rules: RuleSet,
    pc_cache: Mutex<Vec<(u64, ContourRule)>>,
    /// Non-fatal remarks gathered at construction.
    pub diagnostics: Vec<String>,
}

impl<'a> MlIntegrator<'a> {
    pub fn new(gamma: f64, k: f64, power: f64, solver: &'a dyn ShiftedSolver, rules: RuleSet) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if !(k > 0.0) {
            return Err(invalid("K must be positive"));
        }
        if !(power > 0.0 && power <= 1.0) {
            return Err(invalid(format!("operator power must lie in (0, 1], got {power}")));
        }
        if power != 1.0 && rules.scheme() != Scheme::Dti {
            return Err(invalid("fractional operator powers need the DTI scheme"));
        }
        let mut diagnostics = Vec::new();
        if gamma > 0.5 && !solver.is_symmetric() && rules.scheme() != Scheme::Dti {
            diagnostics.push(format!(
                "gamma = {gamma} > 1/2 with a non-symmetric operator: the resolvent sector condition is not guaranteed"
            ));
        }
        Ok(Self { gamma, k, power, solver, rules, pc_cache: Mutex::new(Vec::new()), diagnostics })
    }

    pub fn solver(&self) -> &dyn ShiftedSolver {
        self.solver
    }

    pub fn scheme(&self) -> Scheme {
        self.rules.scheme()
    }

    /// The rule used for a given β.
    pub fn rule(&self, beta: f64) -> Result<Cow<'_, ContourRule>> {
        match &self.rules {
            RuleSet::Cf(r) | RuleSet::Dti(r) => Ok(Cow::Borrowed(r)),
            RuleSet::Pc { n1 } => {
                let key = beta.to_bits();
                let mut cache = self.pc_cache.lock().unwrap();
                if let Some((_, r)) = cache.iter().find(|(k, _)| *k == key) {
                    return Ok(Cow::Owned(r.clone()));
                }
                let r = pc_nodes(beta, *n1)?;
                cache.push((key, r.clone()));
                Ok(Cow::Owned(r))
            }
        }
    }

    /// Σ_terms coef·t^{β−1}E_{γ,β}(−K t^γ L^p)v_rhs where `rhs` holds the
    /// mass-weighted vectors M v. Terms sharing t (and, for PC, β) share one
    /// factorization per node; the reduction runs in fixed node order.
    pub fn apply_terms(&self, terms: &[MlTerm], rhs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.solver.dim();
        for r in rhs {
            check_dim(n, r.len())?;
        }
        if let Some(bad) = terms.iter().find(|t| t.rhs >= rhs.len()) {
            return Err(invalid(format!("term refers to right-hand side {} of {}", bad.rhs, rhs.len())));
        }
        if let Some(bad) = terms.iter().find(|t| !(t.t > 0.0)) {
            return Err(invalid(format!("time must be positive, got {}", bad.t)));
        }
        let crhs: Vec<Vec<C64>> = rhs.iter().map(|r| r.iter().map(|x| C64::new(*x, 0.0)).collect()).collect();
        let mut out = vec![0.0; n];
        match self.rules.scheme() {
            Scheme::Dti => self.apply_resolvent(terms, &crhs, &mut out)?,
            Scheme::Cf | Scheme::Pc => self.apply_laplace(terms, &crhs, &mut out)?,
        }
        Ok(out)
    }

    fn apply_laplace(&self, terms: &[MlTerm], rhs: &[Vec<C64>], out: &mut [f64]) -> Result<()> {
        let per_beta = matches!(self.rules, RuleSet::Pc { .. });
        let mut groups: Vec<((u64, u64), Vec<MlTerm>)> = Vec::new();
        for term in terms {
            let key = (term.t.to_bits(), if per_beta { term.beta.to_bits() } else { 0 });
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, g)) => g.push(*term),
                None => groups.push((key, vec![*term])),
            }
        }
        for (_, group) in &groups {
            let t = group[0].t;
            let rule = self.rule(group[0].beta)?;
            let shift = self.k * t.powf(self.gamma);
            for (node, (z, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                let factor = self
                    .solver
                    .factor(z.powf(self.gamma), C64::new(shift, 0.0))
                    .map_err(|e| TfdeError::NodeSolve { node, source: Box::new(e) })?;
                let mut solved: Vec<Option<Vec<C64>>> = vec![None; rhs.len()];
                for term in group {
                    if solved[term.rhs].is_none() {
                        let x = factor
                            .solve(&rhs[term.rhs])
                            .map_err(|e| TfdeError::NodeSolve { node, source: Box::new(e) })?;
                        solved[term.rhs] = Some(x);
                    }
                    let x = solved[term.rhs].as_ref().unwrap();
                    let c = term.coef * t.powf(term.beta - 1.0) * w * z.powf(self.gamma - term.beta);
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o += c.re * xi.re - c.im * xi.im;
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_resolvent(&self, terms: &[MlTerm], rhs: &[Vec<C64>], out: &mut [f64]) -> Result<()> {
        let rule = self.rule(1.0)?;
        let mut used: Vec<usize> = terms.iter().map(|t| t.rhs).collect();
        used.sort_unstable();
        used.dedup();
        for (node, (z, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let factor = self
                .solver
                .factor(*z, C64::new(-1.0, 0.0))
                .map_err(|e| TfdeError::NodeSolve { node, source: Box::new(e) })?;
            let zp = z.powf(self.power);
            let mut solved: Vec<Option<Vec<C64>>> = vec![None; rhs.len()];
            for &r in &used {
                let x = factor.solve(&rhs[r]).map_err(|e| TfdeError::NodeSolve { node, source: Box::new(e) })?;
                solved[r] = Some(x);
            }
            for term in terms {
                let f = term.t.powf(term.beta - 1.0)
                    * scalar_ml(self.gamma, term.beta, -self.k * term.t.powf(self.gamma) * zp);
                let c = term.coef * w * f;
                let x = solved[term.rhs].as_ref().unwrap();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += c.re * xi.re - c.im * xi.im;
                }
            }
        }
        Ok(())
    }
}

/// t^{β−1}E_{γ,β}(−K t^γ L^p)v for one rule, `mv` = M v.
#[allow(clippy::too_many_arguments)]
pub fn ml_apply(
    rule: &ContourRule,
    gamma: f64,
    beta: f64,
    t: f64,
    k: f64,
    power: f64,
    solver: &dyn ShiftedSolver,
    mv: &[f64],
) -> Result<Vec<f64>> {
    let rules = match rule.scheme {
        Scheme::Cf => RuleSet::Cf(rule.clone()),
        Scheme::Dti => RuleSet::Dti(rule.clone()),
        Scheme::Pc => {
            let integ = MlIntegrator::new(gamma, k, power, solver, RuleSet::Pc { n1: 1 })?;
            integ.pc_cache.lock().unwrap().push((beta.to_bits(), rule.clone()));
            return integ.apply_terms(&[MlTerm { t, beta, coef: 1.0, rhs: 0 }], &[mv.to_vec()]);
        }
    };
    MlIntegrator::new(gamma, k, power, solver, rules)?
        .apply_terms(&[MlTerm { t, beta, coef: 1.0, rhs: 0 }], &[mv.to_vec()])
}

// ---------------------------------------------------------------------------
// time model

/// ₀^C D_t^{γ,λ} u + K L^p u = f, u(0) = g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeModelSpec {
    pub gamma: f64,
    pub lambda: f64,
    pub k: f64,
    pub horizon: f64,
}

impl TimeModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda must be >= 0"));
        }
        if !(self.k > 0.0) {
            return Err(invalid("K must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        Ok(())
    }
}

/// Energy seminorm sqrt(vᵀ S v) (symmetric part of S).
pub fn energy_seminorm(solver: &dyn ShiftedSolver, v: &[f64]) -> Result<f64> {
    let sv = solver.stiffness_apply(v)?;
    Ok(v.iter().zip(&sv).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// u_h(t) = e^{−λt}E_{γ,1}(−K t^γ L^p)P_h g with `g_mv` = (g, φ_j).
///
/// The result is checked against the bound |u_h(t)|_S ≤ |P_h g|_S.
pub fn solve_homogeneous(spec: &TimeModelSpec, integ: &MlIntegrator, g_mv: &[f64], t: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(t > 0.0) {
        return Err(invalid("t must be positive"));
    }
    let decay = (-spec.lambda * t).exp();
    let u: Vec<f64> = integ
        .apply_terms(&[MlTerm { t, beta: 1.0, coef: decay, rhs: 0 }], &[g_mv.to_vec()])?;
    if integ.solver().is_symmetric() {
        let g = integ.solver().mass_solve(g_mv)?;
        let bound = energy_seminorm(integ.solver(), &g)? * (1.0 + 1e-8);
        let observed = energy_seminorm(integ.solver(), &u)?;
        if observed > bound {
            return Err(TfdeError::StabilityViolation { observed, bound });
        }
    }
    Ok(u)
}

/// Σ coef·s^{ν−1} in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub nu: f64,
    pub coef: f64,
}

/// Duhamel terms of a power-series source at time t: each s^{ν−1} becomes
/// Γ(ν)·t^{γ+ν−1}E_{γ,γ+ν}.
pub fn power_terms(gamma: f64, t: f64, terms: &[PowerTerm], rhs: usize) -> Result<Vec<MlTerm>> {
    terms
        .iter()
        .map(|p| {
            if !(p.nu > 0.0) {
                return Err(invalid(format!("power source needs nu > 0, got {}", p.nu)));
            }
            Ok(MlTerm { t, beta: gamma + p.nu, coef: p.coef * gamma_fn(p.nu), rhs })
        })
        .collect()
}

/// ∫₀ᵗ (t−s)^{γ−1}E_{γ,γ}(−K(t−s)^γ L^p) Σ c_i s^{ν_i−1} M⁻¹b ds.
pub fn source_power_ml(integ: &MlIntegrator, t: f64, terms: &[PowerTerm], b: &[f64]) -> Result<Vec<f64>> {
    integ.apply_terms(&power_terms(integ.gamma, t, terms, 0)?, &[b.to_vec()])
}

/// Piecewise polynomial in time. On [t_k, t_{k+1}] the polynomial is given
/// twice: `left[k]` in powers of (s − t_k), `right[k]` in powers of
/// (s − t_{k+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub breaks: Vec<f64>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

fn taylor_shift(c: &[f64], by: f64) -> Vec<f64> {
    let m = c.len();
    let mut out = vec![0.0; m];
    for (l, o) in out.iter_mut().enumerate() {
        let mut binom = 1.0;
        let mut pw = 1.0;
        for j in l..m {
            *o += binom * c[j] * pw;
            binom = binom * (j + 1) as f64 / (j + 1 - l) as f64;
            pw *= by;
        }
    }
    out
}

/// Largest interpolation degree for `PiecewisePoly`.
pub const PIECEWISE_MAX_DEGREE: usize = 3;

impl PiecewisePoly {
    pub fn new(breaks: Vec<f64>, left: Vec<Vec<f64>>, right: Vec<Vec<f64>>) -> Result<Self> {
        if breaks.len() < 2 || left.len() != breaks.len() - 1 || right.len() != left.len() {
            return Err(TfdeError::InvalidInput("piecewise polynomial shape mismatch".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(TfdeError::InvalidInput("breakpoints must increase".into()));
        }
        for k in 0..left.len() {
            if left[k].len() != right[k].len() || left[k].is_empty() || left[k].len() > PIECEWISE_MAX_DEGREE + 1 {
                return Err(TfdeError::InvalidInput(format!("bad coefficient set on interval {k}")));
            }
            let shifted = taylor_shift(&left[k], breaks[k + 1] - breaks[k]);
            let scale = left[k].iter().chain(&right[k]).fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
            if shifted.iter().zip(&right[k]).any(|(a, b)| (a - b).abs() > 1e-10 * scale) {
                return Err(TfdeError::InvalidInput(format!(
                    "left and right coefficients describe different polynomials on interval {k}"
                )));
            }
        }
        Ok(Self { breaks, left, right })
    }

    /// Interpolates f on each interval at degree+1 equispaced points
    /// (endpoints included).
    pub fn interpolate(f: &dyn Fn(f64) -> f64, breaks: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 || degree > PIECEWISE_MAX_DEGREE {
            return Err(invalid(format!("interpolation degree must be 1..={PIECEWISE_MAX_DEGREE}")));
        }
        let mut left = Vec::new();
        let mut right = Vec::new();
        for w in breaks.windows(2) {
            let tau = w[1] - w[0];
            // Vandermonde in y = (s − t_k)/τ ∈ [0, 1]
            let ys: Vec<f64> = (0..=degree).map(|i| i as f64 / degree as f64).collect();
            let vand = Dense::from_fn(degree + 1, degree + 1, |i, j| ys[i].powi(j as i32));
            let vals: Vec<f64> = ys.iter().map(|y| f(w[0] + y * tau)).collect();
            let a = vand.lu()?.solve(&vals)?;
            let c: Vec<f64> = a.iter().enumerate().map(|(j, v)| v / tau.powi(j as i32)).collect();
            right.push(taylor_shift(&c, tau));
            left.push(c);
        }
        Self::new(breaks, left, right)
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = match self.breaks.iter().rposition(|b| *b <= s) {
            Some(k) => k.min(self.left.len() - 1),
            None => 0,
        };
        let y = s - self.breaks[k];
        self.left[k].iter().rev().fold(0.0, |acc, c| acc * y + c)
    }

    /// Telescoped Duhamel terms at t = last breakpoint.
    pub fn ml_terms(&self, gamma: f64, rhs: usize) -> Vec<MlTerm> {
        let t = *self.breaks.last().unwrap();
        let mut out = Vec::new();
        for k in 0..self.left.len() {
            let dt = t - self.breaks[k];
            for l in 0..self.left[k].len() {
                let prev = if k == 0 { 0.0 } else { self.right[k - 1].get(l).cloned().unwrap_or(0.0) };
                let cc = self.left[k][l] - prev;
                if cc != 0.0 {
                    out.push(MlTerm { t: dt, beta: gamma + l as f64 + 1.0, coef: cc * gamma_fn(l as f64 + 1.0), rhs });
                }
            }
            // degree drop between intervals
            if k > 0 {
                for l in self.left[k].len()..self.right[k - 1].len() {
                    let cc = -self.right[k - 1][l];
                    if cc != 0.0 {
                        out.push(MlTerm { t: dt, beta: gamma + l as f64 + 1.0, coef: cc * gamma_fn(l as f64 + 1.0), rhs });
                    }
                }
            }
        }
        out
    }
}

/// Source contribution of a piecewise polynomial time factor times M⁻¹b,
/// evaluated at the last breakpoint.
pub fn source_piecewise(integ: &MlIntegrator, rep: &PiecewisePoly, b: &[f64]) -> Result<Vec<f64>> {
    integ.apply_terms(&rep.ml_terms(integ.gamma, 0), &[b.to_vec()])
}

/// Largest Chebyshev degree accepted (monomial conversion conditioning).
pub const CHEBYSHEV_MAX_DEGREE: usize = 20;
/// Terms with β above this are routed through the PC rule when the
/// integrator uses CF.
pub const CF_BETA_LIMIT: f64 = 4.0;

/// Degree-M interpolant on [0, t] at the M+1 Chebyshev–Gauss points
/// s_j = (t/2)(1 + cos((2j−1)π/(2M+2))), stored as monomials in s.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevInterp {
    pub horizon: f64,
    pub monomial: Vec<f64>,
}

impl ChebyshevInterp {
    pub fn interpolate(f: &dyn Fn(f64) -> f64, horizon: f64, degree: usize) -> Result<Self> {
        if degree > CHEBYSHEV_MAX_DEGREE {
            return Err(TfdeError::ConditioningFailure(format!(
                "Chebyshev degree {degree} exceeds {CHEBYSHEV_MAX_DEGREE}"
            )));
        }
        if !(horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        let np = degree + 1;
        let theta: Vec<f64> = (1..=np).map(|j| (2 * j - 1) as f64 * PI / (2 * np) as f64).collect();
        let vals: Vec<f64> = theta.iter().map(|th| f(0.5 * horizon * (1.0 + th.cos()))).collect();
        // Chebyshev coefficients in x = 2s/t − 1
        let cheb: Vec<f64> = (0..np)
            .map(|k| {
                let s: f64 = vals.iter().zip(&theta).map(|(v, th)| v * (k as f64 * th).cos()).sum();
                s * 2.0 / np as f64 * if k == 0 { 0.5 } else { 1.0 }
            })
            .collect();
        // T_k(2u − 1) as monomials in u = s/t
        let mut mono_u = vec![0.0; np];
        let mut prev = vec![1.0];
        let mut cur = vec![-1.0, 2.0];
        for (k, ck) in cheb.iter().enumerate() {
            let tk: &Vec<f64> = if k == 0 { &prev } else { &cur };
            for (i, v) in tk.iter().enumerate() {
                mono_u[i] += ck * v;
            }
            if k >= 1 {
                let mut next = vec![0.0; cur.len() + 1];
                for (i, v) in cur.iter().enumerate() {
                    next[i + 1] += 4.0 * v;
                    next[i] -= 2.0 * v;
                }
                for (i, v) in prev.iter().enumerate() {
                    next[i] -= v;
                }
                prev = std::mem::replace(&mut cur, next);
            }
        }
        let monomial = mono_u.iter().enumerate().map(|(j, c)| c / horizon.powi(j as i32)).collect();
        Ok(Self { horizon, monomial })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.monomial.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn ml_terms(&self, gamma: f64, rhs: usize) -> Vec<MlTerm> {
        self.monomial
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| MlTerm {
                t: self.horizon,
                beta: gamma + j as f64 + 1.0,
                coef: c * gamma_fn(j as f64 + 1.0),
                rhs,
            })
            .collect()
    }
}

/// Source contribution of a Chebyshev interpolant of the time factor. With a
/// CF integrator the terms with β > `CF_BETA_LIMIT` are evaluated with the
/// default PC rule instead; every other scheme handles all terms itself.
pub fn source_chebyshev(integ: &MlIntegrator, rep: &ChebyshevInterp, b: &[f64]) -> Result<Vec<f64>> {
    let terms = rep.ml_terms(integ.gamma, 0);
    let rhs = [b.to_vec()];
    if integ.scheme() != Scheme::Cf {
        return integ.apply_terms(&terms, &rhs);
    }
    let (low, high): (Vec<MlTerm>, Vec<MlTerm>) = terms.into_iter().partition(|t| t.beta <= CF_BETA_LIMIT);
    let mut out = integ.apply_terms(&low, &rhs)?;
    if !high.is_empty() {
        let pc = MlIntegrator::new(integ.gamma, integ.k, integ.power, integ.solver, RuleSet::Pc { n1: PC_DEFAULT_N1 })?;
        for (o, v) in out.iter_mut().zip(pc.apply_terms(&high, &rhs)?) {
            *o += v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// eigen-decomposition of the pencil and the L1 baseline

/// S V = M V Λ with Vᵀ M V = I for a symmetric-definite pencil.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    pub values: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: nalgebra::DMatrix<f64>,
}

fn cholesky_reduce(mass: &Dense<f64>, stiffness: &Dense<f64>) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> {
    check_dim(mass.nrows(), stiffness.nrows())?;
    let n = mass.nrows();
    let m = nalgebra::DMatrix::from_row_slice(n, n, mass.as_slice());
    let s = nalgebra::DMatrix::from_row_slice(n, n, stiffness.as_slice());
    let s = (&s + s.transpose()) * 0.5;
    let l = m.cholesky().ok_or_else(|| TfdeError::InvalidModel("mass matrix is not positive definite".into()))?.l();
    let li = l
        .clone()
        .try_inverse()
        .ok_or_else(|| TfdeError::InvalidModel("singular Cholesky factor".into()))?;
    let c = &li * s * li.transpose();
    Ok((c, li))
}

impl PencilEigen {
    pub fn new(mass: &Dense<f64>, stiffness: &Dense<f64>) -> Result<Self> {
        let (c, li) = cholesky_reduce(mass, stiffness)?;
        let eig = nalgebra::SymmetricEigen::new(c);
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let q = eig.eigenvectors.select_columns(&idx);
        Ok(Self { values, vectors: li.transpose() * q })
    }

    /// Modal coefficients c = Vᵀ(Mv) of a mass-weighted vector.
    pub fn to_modal(&self, mv: &[f64]) -> Vec<f64> {
        (self.vectors.transpose() * nalgebra::DVector::from_column_slice(mv)).iter().cloned().collect()
    }

    pub fn from_modal(&self, c: &[f64]) -> Vec<f64> {
        (&self.vectors * nalgebra::DVector::from_column_slice(c)).iter().cloned().collect()
    }
}

/// Smallest and largest eigenvalue of the symmetric-definite pencil.
pub fn pencil_extremes(mass: &Dense<f64>, stiffness: &Dense<f64>) -> Result<(f64, f64)> {
    let (c, _) = cholesky_reduce(mass, stiffness)?;
    let ev = c.symmetric_eigenvalues();
    Ok((ev.min(), ev.max()))
}

/// Result of an L1 run.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Outcome {
    /// Nodal coefficients at the horizon.
    pub coeffs: Vec<f64>,
    /// Modes integrated before the budget ran out.
    pub modes_done: usize,
    pub truncated: bool,
}

/// L1 time stepping for ₀^C D^{γ,λ}u + K L u = f on a uniform grid of
/// `steps` intervals, run mode by mode in the pencil eigenbasis.
///
/// The tempered problem is integrated for v = e^{λt}u, whose source is
/// e^{λt}f(t) = `source_time(t)`·M⁻¹`source_mv`. A mode whose loop would
/// start after `budget` has elapsed is skipped and the outcome is flagged.
#[allow(clippy::too_many_arguments)]
pub fn l1_baseline(
    spec: &TimeModelSpec,
    eig: &PencilEigen,
    init_mv: &[f64],
    source_time: &dyn Fn(f64) -> f64,
    source_mv: &[f64],
    steps: usize,
    budget: Option<Duration>,
) -> Result<L1Outcome> {
    spec.validate()?;
    let n = eig.values.len();
    check_dim(n, init_mv.len())?;
    check_dim(n, source_mv.len())?;
    if steps == 0 {
        return Err(invalid("L1 needs at least one step"));
    }
    let start = Instant::now();
    let gamma = spec.gamma;
    let tau = spec.horizon / steps as f64;
    let a0 = tau.powf(-gamma) * rgamma(2.0 - gamma);
    // reversed L1 weights: rev[p] = b_{steps − p}, b_m = (m+1)^{1−γ} − m^{1−γ}
    let rev: Vec<f64> = (0..=steps)
        .map(|p| {
            let m = (steps - p) as f64;
            (m + 1.0).powf(1.0 - gamma) - m.powf(1.0 - gamma)
        })
        .collect();
    let src: Vec<f64> = (1..=steps).map(|k| source_time(k as f64 * tau)).collect();
    let c0 = eig.to_modal(init_mv);
    let cs = eig.to_modal(source_mv);
    let mut modal = vec![0.0; n];
    let mut diffs = vec![0.0; steps];
    let mut modes_done = 0;
    let mut truncated = false;
    for i in 0..n {
        if let Some(b) = budget {
            if start.elapsed() > b {
                truncated = true;
                break;
            }
        }
        let denom = a0 + spec.k * eig.values[i];
        let mut prev = c0[i];
        for k in 1..=steps {
            let hist = if k >= 2 { dot_unrolled(&rev[steps - k + 1..steps], &diffs[..k - 1]) } else { 0.0 };
            let next = (a0 * (prev - hist) + src[k - 1] * cs[i]) / denom;
            diffs[k - 1] = next - prev;
            prev = next;
        }
        modal[i] = prev;
        modes_done += 1;
    }
    let decay = (-spec.lambda * spec.horizon).exp();
    let coeffs = eig.from_modal(&modal).iter().map(|v| v * decay).collect();
    Ok(L1Outcome { coeffs, modes_done, truncated })
}

// Eight independent partial sums so the loop vectorizes.
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem_space::{assemble_laplacian, assemble_mass, Basis, UniformMesh};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn exponential_and_cosine() {
        let e = scalar_ml(1.0, 1.0, C64::new(1.0, 0.0));
        assert!(close(e.re, std::f64::consts::E, 1e-15));
        let c = scalar_ml(2.0, 1.0, C64::new(-PI * PI, 0.0));
        assert!((c.re + 1.0).abs() < 1e-12, "{c}");
        let big = scalar_ml(1.0, 1.0, C64::new(-40.0, 0.0));
        assert!(close(big.re, (-40f64).exp(), 1e-13));
        let e12 = scalar_ml(1.0, 2.0, C64::new(-30.0, 0.0));
        assert!(close(e12.re, (1.0 - (-30f64).exp()) / 30.0, 1e-14));
    }

    #[test]
    fn series_and_contour_agree_near_switch() {
        for &(g, b) in &[(0.6, 1.0), (0.3, 1.3), (0.8, 4.8)] {
            let r = SERIES_RADIUS.powf(g);
            for f in [0.98, 1.02] {
                let z = C64::new(-r * f, 0.0);
                let a = ml_series(g, b, z);
                let c = ml_contour(g, b, z);
                assert!((a - c).norm() < 1e-12 * a.norm(), "g={g} b={b} {a} {c}");
            }
        }
    }

    #[test]
    fn cf_rule_approximates_exponential() {
        let rule = cf_nodes(16).unwrap();
        assert_eq!(rule.nodes.len(), 8);
        let mut worst: f64 = 0.0;
        for i in 0..2000 {
            let x = -(10f64).powf(-8.0 + 14.0 * i as f64 / 1999.0);
            // r(x) = Σ c_k/(x − z_k) = −Σ w_k/(x − z_k) over both halves
            let r: f64 = rule.nodes.iter().zip(&rule.weights).map(|(z, w)| (-w / (x - z)).re).sum();
            worst = worst.max((r - x.exp()).abs());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn pc_scalar_matches_series() {
        let gamma = 0.6;
        for beta in [1.0, 1.6, 3.6] {
            let rule = pc_nodes(beta, 16).unwrap();
            for q in [0.0, 0.5, 10.0, 1e3, 1e5] {
                let v = rule.scalar(gamma, beta, 1.0, q, 1.0, 1.0);
                let ex = scalar_ml(gamma, beta, C64::new(-q, 0.0)).re;
                assert!((v - ex).abs() < 1e-9 * rgamma(beta).max(ex.abs()), "beta={beta} q={q} {v} {ex}");
            }
        }
    }

    #[test]
    fn dti_scalar_matches_direct() {
        let rule = dti_nodes(9.87, 4e5).unwrap();
        for p in [0.6, 1.0] {
            for sigma in [10.0, 300.0, 3e5] {
                let v = rule.scalar(0.3, 1.0, 5.0, 1.0, sigma, p);
                let ex = scalar_ml(0.3, 1.0, C64::new(-(5f64).powf(0.3) * sigma.powf(p), 0.0)).re;
                assert!((v - ex).abs() < 1e-9 * ex.abs(), "p={p} sigma={sigma} {v} {ex}");
            }
        }
    }

    #[test]
    fn dti_rejects_bad_interval() {
        assert!(matches!(dti_nodes(0.0, 1.0), Err(TfdeError::InvalidContour(_))));
        assert!(matches!(dti_nodes(2.0, 1.0), Err(TfdeError::InvalidContour(_))));
    }

    fn laplace_pencil(levels: u32) -> BandedPencil {
        let basis = Basis::linear(UniformMesh::unit(levels).unwrap());
        BandedPencil::new(assemble_mass(&basis), assemble_laplacian(&basis)).unwrap()
    }

    #[test]
    fn schemes_agree_on_laplacian() {
        let pencil = laplace_pencil(5);
        let n = pencil.dim();
        let mv: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let md = pencil.mass.to_dense();
        let (lo, hi) = pencil_extremes(&md, &pencil.stiffness.to_dense()).unwrap();
        let (gamma, k, t) = (0.6, 0.3, 0.7);
        let cf = MlIntegrator::new(gamma, k, 1.0, &pencil, RuleSet::Cf(cf_nodes(16).unwrap())).unwrap();
        let pc = MlIntegrator::new(gamma, k, 1.0, &pencil, RuleSet::Pc { n1: 16 }).unwrap();
        let dti = MlIntegrator::new(gamma, k, 1.0, &pencil, RuleSet::Dti(dti_nodes(lo, hi).unwrap())).unwrap();
        for beta in [1.0, gamma, gamma + 1.0, gamma + 3.0] {
            let term = [MlTerm { t, beta, coef: 1.0, rhs: 0 }];
            let rhs = [mv.clone()];
            let a = cf.apply_terms(&term, &rhs).unwrap();
            let b = dti.apply_terms(&term, &rhs).unwrap();
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let d = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(d < 1e-8 * scale, "cf/dti beta={beta} {d} {scale}");
            if beta >= 0.5 {
                let c = pc.apply_terms(&term, &rhs).unwrap();
                let d = a.iter().zip(&c).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                assert!(d < 1e-8 * scale, "cf/pc beta={beta} {d} {scale}");
            }
        }
    }

    #[test]
    fn piecewise_consistency_is_checked() {
        let ok = PiecewisePoly::new(vec![0.0, 1.0], vec![vec![1.0, 2.0]], vec![vec![3.0, 2.0]]);
        assert!(ok.is_ok());
        let bad = PiecewisePoly::new(vec![0.0, 1.0], vec![vec![1.0, 2.0]], vec![vec![3.5, 2.0]]);
        assert!(matches!(bad, Err(TfdeError::InvalidInput(_))));
    }

    #[test]
    fn chebyshev_reproduces_polynomials() {
        let f = |s: f64| 1.0 - 2.0 * s + 0.5 * s.powi(3);
        let c = ChebyshevInterp::interpolate(&f, 2.0, 5).unwrap();
        for i in 0..50 {
            let s = 2.0 * i as f64 / 49.0;
            assert!((c.eval(s) - f(s)).abs() < 1e-13);
        }
        assert!((c.monomial[1] + 2.0).abs() < 1e-12);
        assert!(matches!(ChebyshevInterp::interpolate(&f, 1.0, 21), Err(TfdeError::ConditioningFailure(_))));
    }

    #[test]
    fn l1_backward_euler_limit() {
        // γ → 1 weights collapse to backward Euler: rev[steps − 1] = b_1 → 0
        let spec = TimeModelSpec { gamma: 1.0 - 1e-12, lambda: 0.0, k: 1.0, horizon: 1.0 };
        assert!(spec.validate().is_ok());
        let md = Dense::from_fn(1, 1, |_, _| 1.0);
        let sd = Dense::from_fn(1, 1, |_, _| 2.0);
        let eig = PencilEigen::new(&md, &sd).unwrap();
        let out = l1_baseline(&spec, &eig, &[1.0], &|_| 0.0, &[0.0], 10, None).unwrap();
        let euler = (1.0f64 / (1.0 + 0.2)).powi(10);
        assert!((out.coeffs[0] - euler).abs() < 1e-9, "{}", out.coeffs[0]);
    }

    #[test]
    fn pencil_eigen_is_mass_orthonormal() {
        let pencil = laplace_pencil(4);
        let md = pencil.mass.to_dense();
        let eig = PencilEigen::new(&md, &pencil.stiffness.to_dense()).unwrap();
        let v: Vec<f64> = (0..pencil.dim()).map(|i| (i as f64 * 0.3).sin()).collect();
        let mv = pencil.mass.matvec(&v).unwrap();
        let back = eig.from_modal(&eig.to_modal(&mv));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-11);
        }
        // lowest discrete eigenvalue approaches π²
        assert!((eig.values[0] / (PI * PI) - 1.0).abs() < 1e-2, "{}", eig.values[0]);
    }
}
