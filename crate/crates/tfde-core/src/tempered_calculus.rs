//! Tempered Riemann–Liouville operators.
//!
//! Quadrature-based integrals and reference derivatives (used as oracles),
//! and the closed-form actions on tempered truncated powers and hat
//! functions used by the assembly code.

use crate::error::{invalid, Result, TfdeError};
use crate::quadrature::{gauss_jacobi, gauss_legendre, Rule};
use crate::special::{gamma, rgamma};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::sync::OnceLock;

/// Order (μ, α or γ) and tempering rate λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperParams {
    pub order: f64,
    pub lambda: f64,
}

impl TemperParams {
    pub fn new(order: f64, lambda: f64) -> Result<Self> {
        if !(order >= 0.0) || !order.is_finite() {
            return Err(invalid(format!("order must be >= 0, got {order}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { order, lambda })
    }
}

/// Finite interval (a, b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(invalid(format!("interval needs a < b, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }
}

/// Which endpoint the operator integrates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Direction of the exponent shift ±(α−1) in the power rule.
///
/// `Plus` is the derivative of order α−1 (exponent drops by α−1),
/// `Minus` the integral of order α−1 (exponent grows by α−1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    Plus,
    Minus,
}

/// e^{−λx}(c·x − d)₊^k, or (c·x − d)₊^k when `tempered` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedPowerTerm {
    pub c: f64,
    pub d: f64,
    pub k: f64,
    pub tempered: bool,
}

impl TruncatedPowerTerm {
    pub fn new(c: f64, d: f64, k: f64, tempered: bool) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid("truncated power needs c > 0"));
        }
        if !(k >= 0.0) {
            return Err(invalid("truncated power needs k >= 0"));
        }
        Ok(Self { c, d, k, tempered })
    }

    pub fn eval(&self, lambda: f64, x: f64) -> f64 {
        let damp = if self.tempered { (-lambda * x).exp() } else { 1.0 };
        damp * trunc_pow(self.c * x - self.d, self.k)
    }
}

/// x₊^k with the convention x₊^0 = 1 for x > 0 and 0 otherwise.
pub fn trunc_pow(x: f64, k: f64) -> f64 {
    if x > 0.0 {
        if k == 0.0 {
            1.0
        } else {
            x.powf(k)
        }
    } else {
        0.0
    }
}

const PANEL_LO: usize = 16;
const PANEL_HI: usize = 32;
const MAX_DEPTH: usize = 48;
const QUAD_TOL: f64 = 1e-15;

fn legendre_lo() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(PANEL_LO))
}

fn legendre_hi() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(PANEL_HI))
}

struct KernelQuad<'a> {
    g: &'a dyn Fn(f64) -> f64,
    mu: f64,
    jac_lo: Rule,
    jac_hi: Rule,
    worst: f64,
    failed: bool,
    // absolute error below which panels are accepted regardless of depth
    floor: f64,
}

impl KernelQuad<'_> {
    fn panel(&self, lo: f64, hi: f64, singular: bool, fine: bool) -> f64 {
        if singular {
            let base = if fine { &self.jac_hi } else { &self.jac_lo };
            base.mapped(lo, hi, self.mu - 1.0)
                .integrate(|s| (self.g)(s))
        } else {
            let base = if fine { legendre_hi() } else { legendre_lo() };
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let mut acc = 0.0;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                let s = mid + half * x;
                acc += w * s.powf(self.mu - 1.0) * (self.g)(s);
            }
            acc * half
        }
    }

    fn adapt(&mut self, lo: f64, hi: f64, singular: bool, tol: f64, depth: usize) -> f64 {
        let coarse = self.panel(lo, hi, singular, false);
        let fine = self.panel(lo, hi, singular, true);
        let err = (fine - coarse).abs();
        if err <= tol.max(QUAD_TOL * fine.abs()).max(self.floor) {
            return fine;
        }
        if depth >= MAX_DEPTH {
            self.failed = true;
            self.worst = self.worst.max(err);
            return fine;
        }
        let mid = 0.5 * (lo + hi);
        self.adapt(lo, mid, singular, 0.5 * tol, depth + 1)
            + self.adapt(mid, hi, false, 0.5 * tol, depth + 1)
    }
}

/// ∫_0^X s^{μ−1} g(s) ds for g smooth on [0, X], by adaptive bisection with a
/// Gauss–Jacobi rule on the panel touching the singular endpoint.
pub fn singular_kernel_integral(g: &dyn Fn(f64) -> f64, x_len: f64, mu: f64, tol: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("kernel exponent needs mu > 0, got {mu}")));
    }
    if x_len <= 0.0 {
        return Ok(0.0);
    }
    let mut q = KernelQuad {
        g,
        mu,
        jac_lo: gauss_jacobi(PANEL_LO, 0.0, mu - 1.0),
        jac_hi: gauss_jacobi(PANEL_HI, 0.0, mu - 1.0),
        worst: 0.0,
        failed: false,
        floor: 0.0,
    };
    // round-off level of the whole integral
    q.floor = 4.0 * f64::EPSILON * q.panel(0.0, x_len, true, true).abs().max(f64::MIN_POSITIVE);
    let v = q.adapt(0.0, x_len, true, tol, 0);
    if q.failed {
        return Err(TfdeError::AccuracyFailure {
            what: "tempered integral quadrature".into(),
            achieved: q.worst,
        });
    }
    Ok(v)
}

const INTEGRAL_TOL: f64 = 1e-14;

/// ₐ𝔻^{−μ,λ}u(x) = ∫_a^x (x−ξ)^{μ−1} e^{−λ(x−ξ)} u(ξ) dξ / Γ(μ).
pub fn left_tempered_integral(u: &dyn Fn(f64) -> f64, iv: Interval, p: TemperParams, x: f64) -> Result<f64> {
    check_integral_args(iv, p, x)?;
    let lam = p.lambda;
    let g = |s: f64| (-lam * s).exp() * u(x - s);
    Ok(singular_kernel_integral(&g, x - iv.a, p.order, INTEGRAL_TOL)? / gamma(p.order))
}

/// ₓ𝔻_b^{−μ,λ}u(x) = ∫_x^b (ξ−x)^{μ−1} e^{−λ(ξ−x)} u(ξ) dξ / Γ(μ).
pub fn right_tempered_integral(u: &dyn Fn(f64) -> f64, iv: Interval, p: TemperParams, x: f64) -> Result<f64> {
    check_integral_args(iv, p, x)?;
    let lam = p.lambda;
    let g = |s: f64| (-lam * s).exp() * u(x + s);
    Ok(singular_kernel_integral(&g, iv.b - x, p.order, INTEGRAL_TOL)? / gamma(p.order))
}

/// Tempered integral from either side.
pub fn tempered_integral(u: &dyn Fn(f64) -> f64, iv: Interval, p: TemperParams, x: f64, side: Side) -> Result<f64> {
    match side {
        Side::Left => left_tempered_integral(u, iv, p, x),
        Side::Right => right_tempered_integral(u, iv, p, x),
    }
}

fn check_integral_args(iv: Interval, p: TemperParams, x: f64) -> Result<()> {
    if !(p.order > 0.0) {
        return Err(invalid(format!("integral order must be > 0, got {}", p.order)));
    }
    if !iv.contains(x) {
        return Err(invalid(format!("x = {x} outside [{}, {}]", iv.a, iv.b)));
    }
    Ok(())
}

// Central-difference weights on the stencil -4..=4.
const D1: [f64; 9] = [
    1.0 / 280.0,
    -4.0 / 105.0,
    1.0 / 5.0,
    -4.0 / 5.0,
    0.0,
    4.0 / 5.0,
    -1.0 / 5.0,
    4.0 / 105.0,
    -1.0 / 280.0,
];
const D2: [f64; 9] = [
    -1.0 / 560.0,
    8.0 / 315.0,
    -1.0 / 5.0,
    8.0 / 5.0,
    -205.0 / 72.0,
    8.0 / 5.0,
    -1.0 / 5.0,
    8.0 / 315.0,
    -1.0 / 560.0,
];
const D3: [f64; 9] = [
    -7.0 / 240.0,
    3.0 / 10.0,
    -169.0 / 120.0,
    61.0 / 30.0,
    0.0,
    -61.0 / 30.0,
    169.0 / 120.0,
    -3.0 / 10.0,
    7.0 / 240.0,
];

fn central_difference(f: &dyn Fn(f64) -> Result<f64>, x: f64, step: f64, n: usize) -> Result<f64> {
    let (w, p) = match n {
        0 => return f(x),
        1 => (&D1, 1),
        2 => (&D2, 2),
        3 => (&D3, 3),
        _ => return Err(invalid("only derivatives up to order 3 are supported")),
    };
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        if *wi != 0.0 {
            acc += wi * f(x + (i as f64 - 4.0) * step)?;
        }
    }
    Ok(acc / step.powi(p))
}

fn fd_step(iv: Interval, x: f64) -> Result<f64> {
    let room = (x - iv.a).min(iv.b - x);
    if room <= 0.0 {
        return Err(invalid("reference derivative needs an interior point"));
    }
    Ok((0.02 * iv.len()).min(room / 4.5))
}

/// ₐ𝔻^{μ,λ}u(x) (or its right-sided mirror) via the integrate-then-differentiate
/// form, with the outer derivatives taken by high-order central differences.
///
/// This is a test oracle; the assembly code never differentiates numerically.
pub fn tempered_rl_derivative(u: &dyn Fn(f64) -> f64, iv: Interval, p: TemperParams, x: f64, side: Side) -> Result<f64> {
    let mu = p.order;
    let lam = p.lambda;
    let step = fd_step(iv, x)?;
    let n = mu.floor() as usize + 1;
    let nu = n as f64 - mu;
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    // e^{∓λ(y−x)} keeps the weight O(1) across the stencil
    if mu == mu.floor() {
        let m = mu as usize;
        let f = |y: f64| -> Result<f64> { Ok((sign * lam * (y - x)).exp() * u(y)) };
        let d = central_difference(&f, x, step, m)?;
        return Ok(sign.powi(m as i32) * d);
    }
    let inner = TemperParams { order: nu, lambda: lam };
    let f = |y: f64| -> Result<f64> {
        let i = tempered_integral(u, iv, inner, y, side)?;
        Ok((sign * lam * (y - x)).exp() * i)
    };
    let d = central_difference(&f, x, step, n)?;
    Ok(sign.powi(n as i32) * d)
}

/// ₐD^{α,λ}u(x): the tempered derivative with its lower-order corrections,
/// 𝔻^{α,λ}u − λ^α u ∓ αλ^{α−1}u′ for 1 < α ≤ 2 and 𝔻^{α,λ}u − λ^α u for 0 < α < 1.
pub fn tempered_deriv_reference(u: &dyn Fn(f64) -> f64, iv: Interval, p: TemperParams, x: f64, side: Side) -> Result<f64> {
    let a = p.order;
    let lam = p.lambda;
    let valid = (a > 0.0 && a < 1.0) || (a > 1.0 && a <= 2.0);
    if !valid {
        return Err(invalid(format!("reference derivative needs order in (0,1) or (1,2], got {a}")));
    }
    let d = tempered_rl_derivative(u, iv, p, x, side)?;
    let mut v = d - lam.powf(a) * u(x);
    if a > 1.0 && lam > 0.0 {
        let step = fd_step(iv, x)?;
        let f = |y: f64| -> Result<f64> { Ok(u(y)) };
        let du = central_difference(&f, x, step, 1)?;
        let corr = a * lam.powf(a - 1.0) * du;
        v += match side {
            Side::Left => -corr,
            Side::Right => corr,
        };
    }
    Ok(v)
}

/// Left tempered Caputo derivative of order γ ∈ (0,1):
/// ₐ𝔻^{−(1−γ),λ}[(d/dx + λ)u], given u and u′.
pub fn tempered_caputo_reference(
    u: &dyn Fn(f64) -> f64,
    du: &dyn Fn(f64) -> f64,
    iv: Interval,
    p: TemperParams,
    x: f64,
) -> Result<f64> {
    if !(p.order > 0.0 && p.order < 1.0) {
        return Err(invalid("Caputo reference needs 0 < order < 1"));
    }
    let lam = p.lambda;
    let g = |y: f64| du(y) + lam * u(y);
    left_tempered_integral(&g, iv, TemperParams { order: 1.0 - p.order, lambda: lam }, x)
}

/// Closed-form ₐ𝔻^{±(α−1),λ} applied to a tempered truncated power at x.
///
/// `p.order` is α. The term must start inside the interval (d/c ≥ a).
pub fn power_action(t: &TruncatedPowerTerm, p: TemperParams, shift: Shift, a: f64, x: f64) -> Result<f64> {
    if t.d / t.c < a - 1e-14 * (1.0 + a.abs()) {
        return Err(invalid("power rule needs d/c >= a"));
    }
    if !t.tempered && p.lambda != 0.0 {
        return Err(invalid("the power rule for an untempered term needs lambda = 0"));
    }
    let nu = p.order - 1.0;
    let (e, scale) = match shift {
        Shift::Plus => (t.k - nu, t.c.powf(nu)),
        Shift::Minus => (t.k + nu, t.c.powf(-nu)),
    };
    if e <= -1.0 {
        return Err(invalid(format!("shifted exponent {e} is not integrable")));
    }
    let damp = if t.tempered { (-p.lambda * x).exp() } else { 1.0 };
    Ok(scale * gamma(t.k + 1.0) * rgamma(e + 1.0) * damp * trunc_pow(t.c * x - t.d, e))
}

/// J(y) = [y₊^e − 2(y−1)₊^e + (y−2)₊^e]/Γ(e+1) with e = 1 ∓ (α−1).
pub fn hat_kernel(alpha: f64, shift: Shift, y: f64) -> f64 {
    let e = match shift {
        Shift::Plus => 2.0 - alpha,
        Shift::Minus => alpha,
    };
    (trunc_pow(y, e) - 2.0 * trunc_pow(y - 1.0, e) + trunc_pow(y - 2.0, e)) * rgamma(e + 1.0)
}

/// ₐ𝔻^{±(α−1),λ}[e^{−λx}φ_{h,k}](x) for the normalized hat
/// φ_{h,k}(x) = h^{−1/2}φ((x−a)/h − k).
pub fn hat_action(k: usize, h: f64, a: f64, p: TemperParams, shift: Shift, x: f64) -> Result<f64> {
    let alpha = p.order;
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(invalid(format!("hat action needs 1 < alpha <= 2, got {alpha}")));
    }
    if !(h > 0.0) {
        return Err(invalid("mesh width must be positive"));
    }
    let pow = match shift {
        Shift::Plus => -(alpha - 1.0) - 0.5,
        Shift::Minus => (alpha - 1.0) - 0.5,
    };
    let y = (x - a) / h - k as f64;
    Ok((-p.lambda * x).exp() * h.powf(pow) * hat_kernel(alpha, shift, y))
}

/// Whether `fourier_symbol_check` tests an integral or a derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Integral,
    Derivative,
}

/// Compares the DFT of the left tempered operator on the whole line applied to
/// a compactly supported u against (λ ± iω)^{±μ}·û on a periodic box
/// [−L, L) with n points. Returns max deviation / max |û|.
pub fn fourier_symbol_check(
    u: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    half_box: f64,
    n: usize,
    p: TemperParams,
    kind: OperatorKind,
) -> Result<f64> {
    let (lo, hi) = support;
    if !(lo < hi) || lo <= -half_box || hi >= half_box {
        return Err(TfdeError::InvalidInput(format!(
            "support ({lo}, {hi}) must lie strictly inside the box (-{half_box}, {half_box})"
        )));
    }
    if n < 8 || !n.is_power_of_two() {
        return Err(invalid("grid size must be a power of two >= 8"));
    }
    if kind == OperatorKind::Integral && p.lambda == 0.0 && p.order > 0.0 {
        return Err(TfdeError::InvalidInput(
            "untempered integrals are not decaying; the periodic box would alias".into(),
        ));
    }
    let mu = p.order;
    let lam = p.lambda;
    let dx = 2.0 * half_box / n as f64;
    let xs: Vec<f64> = (0..n).map(|j| -half_box + j as f64 * dx).collect();
    let omega: Vec<f64> = (0..n)
        .map(|k| {
            let k = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            std::f64::consts::PI * k / half_box
        })
        .collect();

    // fractional part realized in space by quadrature, integer part spectrally
    let (frac, int_pow, sym_pow) = match kind {
        OperatorKind::Integral => (mu, 0usize, -mu),
        OperatorKind::Derivative => {
            if mu == mu.floor() {
                (0.0, mu as usize, mu)
            } else {
                let n_int = mu.floor() as usize + 1;
                (n_int as f64 - mu, n_int, mu)
            }
        }
    };
    let mut field: Vec<Complex64> = Vec::with_capacity(n);
    for &x in &xs {
        let v = if frac == 0.0 {
            u(x)
        } else if x <= lo {
            0.0
        } else {
            let g = |s: f64| (-lam * s).exp() * u(x - s);
            singular_kernel_integral(&g, x - lo, frac, 1e-13)? / gamma(frac)
        };
        field.push(Complex64::new(v, 0.0));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut field);
    let mut uhat: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(u(x), 0.0)).collect();
    fft.process(&mut uhat);
    let scale = uhat.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut dev: f64 = 0.0;
    for k in 0..n {
        let base = Complex64::new(lam, omega[k]);
        if base.norm() == 0.0 && sym_pow < 0.0 {
            continue;
        }
        let lhs = field[k] * base.powi(int_pow as i32);
        let rhs = if sym_pow == 0.0 { uhat[k] } else { base.powf(sym_pow) * uhat[k] };
        dev = dev.max((lhs - rhs).norm());
    }
    Ok(dev / scale)
}
