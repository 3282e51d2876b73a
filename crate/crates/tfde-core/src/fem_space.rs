//! Uniform meshes, linear/quadratic bases and Toeplitz-structured assembly.
//!
//! Basis functions are normalized by 1/√h. Degrees of freedom:
//! * Linear: interior hats, dof k ↔ node k+1.
//! * Quadratic: interleaved, dof 2e ↔ bubble of element e, dof 2i−1 ↔ hat
//!   at node i. This matches [`BlockToeplitzOperator`]'s layout (hats are
//!   the first family, bubbles the second).
//!
//! Stiffness matrices are stored row = test function, column = trial
//! function, so `A[(i, j)] = a(φ_j, φ_i)`.

use crate::error::{invalid, Result, TfdeError};
use crate::krylov_toeplitz::{Banded, BlockToeplitzOperator, Dense, ToeplitzOperator};
use crate::quadrature::{gauss_legendre, jacobi_left, jacobi_right, legendre_on, Rule};
use crate::special::{gamma, rgamma};
use crate::tempered_calculus::{trunc_pow, Interval, Side};
use std::f64::consts::PI;
use std::sync::Arc;

/// Uniform partition of an interval into 2^J elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformMesh {
    pub interval: Interval,
    pub levels: u32,
    pub n: usize,
    pub h: f64,
}

impl UniformMesh {
    pub fn new(interval: Interval, levels: u32) -> Result<Self> {
        if !(2..=20).contains(&levels) {
            return Err(invalid(format!("mesh levels must lie in 2..=20, got {levels}")));
        }
        let n = 1usize << levels;
        Ok(Self { interval, levels, n, h: interval.len() / n as f64 })
    }

    pub fn unit(levels: u32) -> Result<Self> {
        Self::new(Interval::unit(), levels)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.interval.a + i as f64 * self.h
    }

    /// Same interval, `factor`× more elements (factor a power of two).
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if !factor.is_power_of_two() {
            return Err(invalid("refinement factor must be a power of two"));
        }
        Self::new(self.interval, self.levels + factor.trailing_zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Linear,
    Quadratic,
}

/// Mother functions on the unit reference grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mother {
    Hat,
    Bubble,
}

impl Mother {
    fn width(self) -> i64 {
        match self {
            Mother::Hat => 2,
            Mother::Bubble => 1,
        }
    }

    fn value(self, y: f64) -> f64 {
        match self {
            Mother::Hat => {
                if (0.0..=1.0).contains(&y) {
                    y
                } else if y > 1.0 && y <= 2.0 {
                    2.0 - y
                } else {
                    0.0
                }
            }
            Mother::Bubble => {
                if (0.0..=1.0).contains(&y) {
                    4.0 * y * (1.0 - y)
                } else {
                    0.0
                }
            }
        }
    }

    fn deriv(self, y: f64) -> f64 {
        match self {
            Mother::Hat => {
                if (0.0..1.0).contains(&y) {
                    1.0
                } else if (1.0..2.0).contains(&y) {
                    -1.0
                } else {
                    0.0
                }
            }
            Mother::Bubble => {
                if (0.0..1.0).contains(&y) {
                    4.0 - 8.0 * y
                } else {
                    0.0
                }
            }
        }
    }
}

/// A basis family on a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub kind: BasisKind,
    pub mesh: UniformMesh,
}

/// One local shape function on an element: (dof, value, d/dx).
pub type LocalShape = (usize, f64, f64);

impl Basis {
    pub fn new(kind: BasisKind, mesh: UniformMesh) -> Self {
        Self { kind, mesh }
    }

    pub fn linear(mesh: UniformMesh) -> Self {
        Self::new(BasisKind::Linear, mesh)
    }

    pub fn quadratic(mesh: UniformMesh) -> Self {
        Self::new(BasisKind::Quadratic, mesh)
    }

    pub fn dofs(&self) -> usize {
        match self.kind {
            BasisKind::Linear => self.mesh.n - 1,
            BasisKind::Quadratic => 2 * self.mesh.n - 1,
        }
    }

    fn hat_dof(&self, node: usize) -> Option<usize> {
        if node == 0 || node >= self.mesh.n {
            return None;
        }
        Some(match self.kind {
            BasisKind::Linear => node - 1,
            BasisKind::Quadratic => 2 * node - 1,
        })
    }

    /// Shape functions active on element `e` at local coordinate y ∈ [0, 1].
    pub fn element_shapes(&self, e: usize, y: f64) -> Vec<LocalShape> {
        let h = self.mesh.h;
        let s = 1.0 / h.sqrt();
        let mut out = Vec::with_capacity(3);
        if let Some(d) = self.hat_dof(e) {
            out.push((d, s * (1.0 - y), -s / h));
        }
        if let Some(d) = self.hat_dof(e + 1) {
            out.push((d, s * y, s / h));
        }
        if self.kind == BasisKind::Quadratic {
            out.push((2 * e, s * 4.0 * y * (1.0 - y), s * (4.0 - 8.0 * y) / h));
        }
        out
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let m = &self.mesh;
        let t = (x - m.interval.a) / m.h;
        let e = (t.floor().max(0.0) as usize).min(m.n - 1);
        (e, t - e as f64)
    }

    /// Σ_j c_j φ_j(x).
    pub fn eval(&self, coeffs: &[f64], x: f64) -> f64 {
        if !self.mesh.interval.contains(x) {
            return 0.0;
        }
        let (e, y) = self.locate(x);
        self.element_shapes(e, y).iter().map(|(d, v, _)| coeffs[*d] * v).sum()
    }

    /// Nodal interpolant coefficients of u (bubbles take the midpoint defect).
    pub fn interpolate(&self, u: &dyn Fn(f64) -> f64) -> Vec<f64> {
        let m = &self.mesh;
        let s = m.h.sqrt();
        let mut c = vec![0.0; self.dofs()];
        for i in 1..m.n {
            c[self.hat_dof(i).expect("interior")] = u(m.node(i)) * s;
        }
        if self.kind == BasisKind::Quadratic {
            for e in 0..m.n {
                let mid = u(m.node(e) + 0.5 * m.h);
                let lin = 0.5 * (u(m.node(e)) + u(m.node(e + 1)));
                c[2 * e] = (mid - lin) * s;
            }
        }
        c
    }

    fn families(&self) -> Vec<Mother> {
        match self.kind {
            BasisKind::Linear => vec![Mother::Hat],
            BasisKind::Quadratic => vec![Mother::Hat, Mother::Bubble],
        }
    }

    fn family_len(&self, m: Mother) -> usize {
        match m {
            Mother::Hat => self.mesh.n - 1,
            Mother::Bubble => self.mesh.n,
        }
    }
}

/// Fractional stiffness in Toeplitz or 2×2 block-Toeplitz form.
#[derive(Debug, Clone)]
pub enum FractionalOperator {
    Scalar(ToeplitzOperator<f64>),
    Block(BlockToeplitzOperator<f64>),
}

impl FractionalOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Scalar(t) => t.nrows(),
            Self::Block(b) => b.dim(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Scalar(t) => t.matvec(x),
            Self::Block(b) => b.matvec(x),
        }
    }

    pub fn to_dense(&self) -> Dense<f64> {
        match self {
            Self::Scalar(t) => t.to_dense(),
            Self::Block(b) => b.to_dense(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Scalar(t) => t.entry(i, j),
            Self::Block(b) => b.entry(i, j),
        }
    }

    pub fn stored_len(&self) -> usize {
        match self {
            Self::Scalar(t) => t.stored_len(),
            Self::Block(b) => b.stored_len(),
        }
    }

    pub fn transpose(&self) -> Self {
        match self {
            Self::Scalar(t) => Self::Scalar(t.transpose()),
            Self::Block(b) => {
                let bl = &b.blocks;
                Self::Block(BlockToeplitzOperator {
                    blocks: [
                        [bl[0][0].transpose(), bl[1][0].transpose()],
                        [bl[0][1].transpose(), bl[1][1].transpose()],
                    ],
                })
            }
        }
    }

    /// a·self + b·other.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        match (self, other) {
            (Self::Scalar(x), Self::Scalar(y)) => Ok(Self::Scalar(x.combine(a, y, b)?)),
            (Self::Block(x), Self::Block(y)) => {
                let c = |p: usize, q: usize| x.blocks[p][q].combine(a, &y.blocks[p][q], b);
                Ok(Self::Block(BlockToeplitzOperator::new([[c(0, 0)?, c(0, 1)?], [c(1, 0)?, c(1, 1)?]])?))
            }
            _ => Err(invalid("cannot combine scalar and block operators")),
        }
    }
}

const CORR_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const CORR_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

// ∫ P(z) Q(z + t) dz for P = trial' + lt·trial and Q = test' − lt·test.
// Both are polynomials of degree ≤ 2 between integers, so a 3-point Gauss
// rule on each piece between the breakpoints is exact.
fn correlation(trial: Mother, test: Mother, lt: f64, t: f64) -> f64 {
    let wq = trial.width() as f64;
    let wp = test.width() as f64;
    let lo = 0f64.max(-t);
    let hi = wq.min(wp - t);
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for k in 0..=(wq as i64) {
        for &c in &[k as f64, k as f64 - t] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-15 {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in CORR_NODES.iter().zip(&CORR_WEIGHTS) {
            let z = mid + half * x;
            let p = trial.deriv(z) + lt * trial.value(z);
            let q = test.deriv(z + t) - lt * test.value(z + t);
            acc += wt * half * p * q;
        }
    }
    acc
}

// Rules on [0, 1]; the singular one carries the weight s^{1−α}.
struct EntryRules {
    singular: Rule,
    smooth: Rule,
}

impl EntryRules {
    fn new(alpha: f64) -> Self {
        Self {
            // α = 2 never reaches the kernel quadrature
            singular: jacobi_left(ENTRY_SINGULAR_POINTS, 0.0, 1.0, if alpha < 2.0 { 1.0 - alpha } else { 0.0 }),
            smooth: legendre_on(ENTRY_SMOOTH_POINTS, 0.0, 1.0),
        }
    }
}

// Reference value of the left stiffness entry between a trial function
// shifted by d = j − i relative to the test function:
// ∫_0^∞ s^{1−α} e^{−lt·s}/Γ(2−α) · corr(s + d) ds.
fn reference_entry(trial: Mother, test: Mother, alpha: f64, lt: f64, d: i64, rules: &EntryRules) -> f64 {
    if alpha == 2.0 {
        return correlation(trial, test, lt, d as f64);
    }
    let lo = 0i64.max(-trial.width() - d);
    let hi = test.width() - d;
    let mut acc = 0.0;
    for m in lo..hi {
        let rule = if m == 0 { &rules.singular } else { &rules.smooth };
        for (y, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = m as f64 + y;
            let kernel = if m == 0 { 1.0 } else { s.powf(1.0 - alpha) };
            acc += w * kernel * (-lt * s).exp() * correlation(trial, test, lt, s + d as f64);
        }
    }
    acc * rgamma(2.0 - alpha)
}

// J₁(x) = [x₊^{3−α} − 2(x−1)₊^{3−α} + (x−2)₊^{3−α}]/Γ(4−α)
fn j_antiderivative(alpha: f64, x: f64) -> f64 {
    let e = 3.0 - alpha;
    (trunc_pow(x, e) - 2.0 * trunc_pow(x - 1.0, e) + trunc_pow(x - 2.0, e)) * rgamma(e + 1.0)
}

// Exact λ = 0 hat–hat entry: ∫ φ'(y) J(y − d) dy in closed form.
fn exact_hat_entry(alpha: f64, d: i64) -> f64 {
    let d = d as f64;
    2.0 * j_antiderivative(alpha, 1.0 - d) - j_antiderivative(alpha, -d) - j_antiderivative(alpha, 2.0 - d)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(invalid(format!("alpha must lie in (1, 2], got {alpha}")));
    }
    Ok(())
}

/// Toeplitz generator block for trial family `q` and test family `p` of the
/// left operator: rows test, columns trial.
fn left_block(basis: &Basis, test: Mother, trial: Mother, alpha: f64, lambda: f64, rules: &EntryRules) -> Result<ToeplitzOperator<f64>> {
    let h = basis.mesh.h;
    let lt = lambda * h;
    let rows = basis.family_len(test);
    let cols = basis.family_len(trial);
    let scale = h.powf(-alpha);
    let exact = lambda == 0.0 && test == Mother::Hat && trial == Mother::Hat;
    let entry = |d: i64| -> f64 {
        let v = if exact { exact_hat_entry(alpha, d) } else { reference_entry(trial, test, alpha, lt, d, rules) };
        scale * v
    };
    // T(i, j) = entry(j − i); col[k] ↔ i − j = k, row[k] ↔ j − i = k
    let col: Vec<f64> = (0..rows).map(|k| entry(-(k as i64))).collect();
    let mut row: Vec<f64> = (0..cols).map(|k| entry(k as i64)).collect();
    row[0] = col[0];
    let worst = col.iter().chain(&row).find(|v| !v.is_finite());
    if let Some(v) = worst {
        return Err(TfdeError::AccuracyFailure { what: "stiffness generator".into(), achieved: *v });
    }
    ToeplitzOperator::new(col, row)
}

const ENTRY_SMOOTH_POINTS: usize = 20;
const ENTRY_SINGULAR_POINTS: usize = 32;

/// Fractional stiffness −(ₐ𝔻^{−(2−α),λ}(D+λ)u, (D−λ)v) (left) or its
/// transpose (right), as a Toeplitz or block-Toeplitz operator.
///
/// λ = 0 hat entries use the exact J(x) closed form; all other entries use
/// Gauss–Jacobi (weight s^{1−α}) on the first unit panel of the kernel and
/// Gauss–Legendre elsewhere, with the inner correlation integrated exactly.
pub fn assemble_fractional_toeplitz(basis: &Basis, alpha: f64, lambda: f64, side: Side) -> Result<FractionalOperator> {
    check_alpha(alpha)?;
    if !(lambda >= 0.0) {
        return Err(invalid("lambda must be >= 0"));
    }
    let rules = EntryRules::new(alpha);
    let fams = basis.families();
    let left = if fams.len() == 1 {
        FractionalOperator::Scalar(left_block(basis, fams[0], fams[0], alpha, lambda, &rules)?)
    } else {
        let (a, b) = (Mother::Hat, Mother::Bubble);
        FractionalOperator::Block(BlockToeplitzOperator::new([
            [
                left_block(basis, a, a, alpha, lambda, &rules)?,
                left_block(basis, a, b, alpha, lambda, &rules)?,
            ],
            [
                left_block(basis, b, a, alpha, lambda, &rules)?,
                left_block(basis, b, b, alpha, lambda, &rules)?,
            ],
        ])?)
    };
    Ok(match side {
        Side::Left => left,
        Side::Right => left.transpose(),
    })
}

/// A real coefficient function with its derivative.
#[derive(Clone)]
pub struct Coefficient {
    pub value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub constant: bool,
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Coefficient {{ constant: {} }}", self.constant)
    }
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Self { value: Arc::new(move |_| c), derivative: Arc::new(|_| 0.0), constant: true }
    }

    /// c0 + c1·x.
    pub fn linear(c0: f64, c1: f64) -> Self {
        if c1 == 0.0 {
            return Self::constant(c0);
        }
        Self { value: Arc::new(move |x| c0 + c1 * x), derivative: Arc::new(move |_| c1), constant: false }
    }

    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), derivative: Arc::new(derivative), constant: false }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }
}

/// Endpoint at which a load term may be singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    A,
    B,
}

/// g(x)·(x−a)^p or g(x)·(b−x)^p with g smooth.
#[derive(Clone)]
pub struct LoadTerm {
    pub smooth: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub power: f64,
    pub endpoint: Endpoint,
}

impl std::fmt::Debug for LoadTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LoadTerm {{ power: {}, endpoint: {:?} }}", self.power, self.endpoint)
    }
}

/// Right-hand side as a sum of possibly endpoint-singular terms.
#[derive(Debug, Clone, Default)]
pub struct LoadFunction {
    pub terms: Vec<LoadTerm>,
}

impl LoadFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn smooth(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let mut l = Self::default();
        l.push(f, 0.0, Endpoint::A);
        l
    }

    pub fn push(&mut self, g: impl Fn(f64) -> f64 + Send + Sync + 'static, power: f64, endpoint: Endpoint) {
        self.terms.push(LoadTerm { smooth: Arc::new(g), power, endpoint });
    }

    pub fn eval(&self, iv: Interval, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let r = match t.endpoint {
                    Endpoint::A => x - iv.a,
                    Endpoint::B => iv.b - x,
                };
                let w = if t.power == 0.0 { 1.0 } else { r.powf(t.power) };
                (t.smooth)(x) * w
            })
            .sum()
    }
}

/// Weight applied to the load before testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadWeight {
    Plain,
    /// e^{r·x}
    Exp(f64),
}

const LOAD_POINTS: usize = 20;

/// (w·f, φ_j) by per-element Gauss quadrature; the element touching a
/// singular endpoint uses Gauss–Jacobi with the term's exponent.
pub fn assemble_load(f: &LoadFunction, basis: &Basis, weight: LoadWeight) -> Result<Vec<f64>> {
    let m = &basis.mesh;
    let iv = m.interval;
    let mut out = vec![0.0; basis.dofs()];
    let gl = gauss_legendre(LOAD_POINTS);
    for term in &f.terms {
        if term.power <= -1.0 {
            return Err(TfdeError::InvalidInput(format!("load exponent {} is not integrable", term.power)));
        }
        let singular = term.power != term.power.round();
        let sing_elem = match term.endpoint {
            Endpoint::A => 0,
            Endpoint::B => m.n - 1,
        };
        for e in 0..m.n {
            let (a, b) = (m.node(e), m.node(e + 1));
            let (rule, weighted) = if singular && e == sing_elem {
                let r = match term.endpoint {
                    Endpoint::A => jacobi_left(LOAD_POINTS, a, b, term.power),
                    Endpoint::B => jacobi_right(LOAD_POINTS, a, b, term.power),
                };
                (r, true)
            } else {
                (gl.mapped(a, b, 0.0), false)
            };
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let mut v = (term.smooth)(*x) * w;
                if !weighted && term.power != 0.0 {
                    let r = match term.endpoint {
                        Endpoint::A => x - iv.a,
                        Endpoint::B => iv.b - x,
                    };
                    v *= r.powf(term.power);
                }
                if let LoadWeight::Exp(r) = weight {
                    v *= (r * x).exp();
                }
                for (d, phi, _) in basis.element_shapes(e, (x - a) / m.h) {
                    out[d] += v * phi;
                }
            }
        }
    }
    Ok(out)
}

/// Banded element assembly of ∫ c(x)φ_jφ_i + m(x)φ_j'φ_i (Gauss, 8 points).
pub fn assemble_banded(basis: &Basis, c: &dyn Fn(f64) -> f64, m: &dyn Fn(f64) -> f64) -> Banded<f64> {
    let mesh = &basis.mesh;
    let bw = match basis.kind {
        BasisKind::Linear => 1,
        BasisKind::Quadratic => 2,
    };
    let mut band = Banded::zeros(basis.dofs(), bw, bw);
    let rule = gauss_legendre(8);
    for e in 0..mesh.n {
        let (a, b) = (mesh.node(e), mesh.node(e + 1));
        let r = rule.mapped(a, b, 0.0);
        for (x, w) in r.nodes.iter().zip(&r.weights) {
            let shapes = basis.element_shapes(e, (x - a) / mesh.h);
            let cx = c(*x);
            let mx = m(*x);
            for &(i, pi, _) in &shapes {
                for &(j, pj, dj) in &shapes {
                    band.add(i, j, w * (cx * pj * pi + mx * dj * pi)).expect("element couplings stay in band");
                }
            }
        }
    }
    band
}

/// Consistent mass matrix.
pub fn assemble_mass(basis: &Basis) -> Banded<f64> {
    assemble_banded(basis, &|_| 1.0, &|_| 0.0)
}

/// Stiffness of −u'' (integer-order Laplacian), banded.
pub fn assemble_laplacian(basis: &Basis) -> Banded<f64> {
    let mesh = &basis.mesh;
    let bw = match basis.kind {
        BasisKind::Linear => 1,
        BasisKind::Quadratic => 2,
    };
    let mut band = Banded::zeros(basis.dofs(), bw, bw);
    let rule = gauss_legendre(8);
    for e in 0..mesh.n {
        let (a, b) = (mesh.node(e), mesh.node(e + 1));
        let r = rule.mapped(a, b, 0.0);
        for (x, w) in r.nodes.iter().zip(&r.weights) {
            let shapes = basis.element_shapes(e, (x - a) / mesh.h);
            for &(i, _, di) in &shapes {
                for &(j, _, dj) in &shapes {
                    band.add(i, j, w * di * dj).expect("in band");
                }
            }
        }
    }
    band
}

/// Stationary space-tempered model
/// −(1−p)ₐD^{α,λ}u − p·ₓD_b^{α,λ}u + m u' + c u = f, u(a) = u(b) = 0.
#[derive(Debug, Clone)]
pub struct SpaceModelSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub p: f64,
    pub m: Coefficient,
    pub c: Coefficient,
    pub f: LoadFunction,
}

impl SpaceModelSpec {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("p must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }

    /// Samples c − m'/2 on the closed interval. Zero is accepted (the
    /// fractional part alone is coercive); negative values are rejected.
    pub fn check_coercivity(&self, iv: Interval) -> Result<()> {
        let n = 257;
        for k in 0..n {
            let x = iv.a + iv.len() * k as f64 / (n - 1) as f64;
            let v = self.c.eval(x) - 0.5 * (self.m.derivative)(x);
            if v < -1e-14 {
                return Err(TfdeError::InvalidModel(format!("c - m'/2 = {v:.3e} < 0 at x = {x}")));
            }
        }
        Ok(())
    }
}

/// Assembled operator (fractional part + banded corrections) and load.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub fractional: FractionalOperator,
    pub banded: Banded<f64>,
    pub load: Vec<f64>,
    pub basis: Basis,
    pub alpha: f64,
    pub lambda: f64,
    pub p: f64,
    /// u = e^{rate·x}·u_h for the Petrov–Galerkin unknown, 0 otherwise.
    pub solution_rate: f64,
    /// True when every coefficient is constant (diagonal replication is exact
    /// for the wavelet scaling).
    pub translation_invariant: bool,
    pub warnings: Vec<String>,
}

impl AssembledSystem {
    pub fn dim(&self) -> usize {
        self.fractional.dim()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.fractional.matvec(x)?;
        for (a, b) in y.iter_mut().zip(self.banded.matvec(x)?) {
            *a += b;
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> Dense<f64> {
        let mut d = self.fractional.to_dense();
        let n = self.dim();
        for i in 0..n {
            for j in i.saturating_sub(self.banded.lower())..=(i + self.banded.upper()).min(n - 1) {
                d[(i, j)] += self.banded.get(i, j);
            }
        }
        d
    }

    /// Recovered approximation u_h(x).
    pub fn solution_value(&self, coeffs: &[f64], x: f64) -> f64 {
        let v = self.basis.eval(coeffs, x);
        if self.solution_rate == 0.0 {
            v
        } else {
            (self.solution_rate * x).exp() * v
        }
    }
}

/// Galerkin assembly for general p ∈ [0, 1].
///
/// The α λ^{α−1}(1−2p) first-order term and the advection m u' are tested
/// in their integrated-by-parts-free form (u', v) and (m u', v), which is
/// exact for the piecewise-polynomial trial space.
pub fn assemble_galerkin(spec: &SpaceModelSpec, basis: &Basis) -> Result<AssembledSystem> {
    spec.validate()?;
    spec.check_coercivity(basis.mesh.interval)?;
    let (alpha, lambda, p) = (spec.alpha, spec.lambda, spec.p);
    let left = assemble_fractional_toeplitz(basis, alpha, lambda, Side::Left)?;
    let fractional = if p == 0.0 {
        left
    } else if p == 1.0 {
        left.transpose()
    } else {
        left.combine(1.0 - p, &left.transpose(), p)?
    };
    let la = lambda.powf(alpha);
    let adv = alpha * (1.0 - 2.0 * p) * lambda.powf(alpha - 1.0);
    let (mc, cc) = (spec.m.clone(), spec.c.clone());
    let banded = assemble_banded(basis, &|x| la + cc.eval(x), &|x| adv + mc.eval(x));
    let load = assemble_load(&spec.f, basis, LoadWeight::Plain)?;
    Ok(AssembledSystem {
        fractional,
        banded,
        load,
        basis: *basis,
        alpha,
        lambda,
        p,
        solution_rate: 0.0,
        translation_invariant: spec.m.constant && spec.c.constant,
        warnings: Vec::new(),
    })
}

/// Lemma bound |cos(πα/2)|Γ²(α/2+1)/(2π(α−1)(b−a)^α) below which the
/// companion form is guaranteed coercive.
pub fn companion_lambda_bound(alpha: f64, len: f64) -> f64 {
    (PI * alpha / 2.0).cos().abs() * gamma(alpha / 2.0 + 1.0).powi(2) / (2.0 * PI * (alpha - 1.0) * len.powf(alpha))
}

/// Petrov–Galerkin assembly through the companion unknown.
///
/// For the right-sided operator (p = 1) the unknown is u₁ = e^{−λx}u, for
/// the left-sided one (p = 0) it is u₁ = e^{λx}u. The fractional part is the
/// exact λ = 0 stiffness.
pub fn assemble_petrov_galerkin(spec: &SpaceModelSpec, basis: &Basis) -> Result<AssembledSystem> {
    spec.validate()?;
    spec.check_coercivity(basis.mesh.interval)?;
    let (alpha, lambda) = (spec.alpha, spec.lambda);
    let side = if spec.p == 1.0 {
        Side::Right
    } else if spec.p == 0.0 {
        Side::Left
    } else {
        return Err(invalid("Petrov-Galerkin needs p = 0 or p = 1"));
    };
    let mut warnings = Vec::new();
    let bound = companion_lambda_bound(alpha, basis.mesh.interval.len());
    if lambda.powf(alpha) > bound {
        warnings.push(format!(
            "lambda^alpha = {:.4e} exceeds the coercivity bound {:.4e}; uniqueness is not guaranteed",
            lambda.powf(alpha),
            bound
        ));
    }
    let fractional = assemble_fractional_toeplitz(basis, alpha, 0.0, side)?;
    // u = e^{σλx}u₁ with σ = +1 (right) or −1 (left)
    let sigma = match side {
        Side::Right => 1.0,
        Side::Left => -1.0,
    };
    let first = -sigma * alpha * lambda.powf(alpha - 1.0);
    let zeroth = (1.0 - alpha) * lambda.powf(alpha);
    let (mc, cc) = (spec.m.clone(), spec.c.clone());
    let banded = assemble_banded(
        basis,
        &|x| zeroth + cc.eval(x) + sigma * lambda * mc.eval(x),
        &|x| first + mc.eval(x),
    );
    let load = assemble_load(&spec.f, basis, LoadWeight::Exp(-sigma * lambda))?;
    Ok(AssembledSystem {
        fractional,
        banded,
        load,
        basis: *basis,
        alpha,
        lambda,
        p: spec.p,
        solution_rate: sigma * lambda,
        translation_invariant: spec.m.constant && spec.c.constant,
        warnings,
    })
}

/// Manufactured solutions with closed-form forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    /// u = (1−x)^β − e^{λx}(1−x) on (0, 1), right-sided operator (p = 1).
    Example1 { beta: f64 },
    /// w = e^{−λx}(x³ − x²) on (0, 1); the returned load is ₀D^{α,λ}w.
    Example2Space,
}

impl ExactSolution {
    pub fn eval(&self, lambda: f64, x: f64) -> f64 {
        match *self {
            Self::Example1 { beta } => (1.0 - x).powf(beta) - (lambda * x).exp() * (1.0 - x),
            Self::Example2Space => (-lambda * x).exp() * (x * x * x - x * x),
        }
    }

    pub fn deriv(&self, lambda: f64, x: f64) -> f64 {
        match *self {
            Self::Example1 { beta } => {
                -beta * (1.0 - x).powf(beta - 1.0) - lambda * (lambda * x).exp() * (1.0 - x) + (lambda * x).exp()
            }
            Self::Example2Space => {
                let e = (-lambda * x).exp();
                e * (-lambda * (x * x * x - x * x) + 3.0 * x * x - 2.0 * x)
            }
        }
    }
}

const SERIES_MAX_TERMS: usize = 200;

/// Forcing for a manufactured solution.
///
/// Example 1: f = −ₓD₁^{α,λ}u + m u', with e^{−λx}(1−x)^β expanded as
/// e^{−λ}Σ λⁿ(1−x)^{β+n}/n! and each term mapped by the power rule.
/// Example 2: the left tempered derivative ₀D^{α,λ}w (two power terms plus
/// the lower-order corrections).
pub fn manufactured_rhs(exact: ExactSolution, alpha: f64, lambda: f64, m: &Coefficient) -> Result<LoadFunction> {
    check_alpha(alpha)?;
    let mut f = LoadFunction::zero();
    match exact {
        ExactSolution::Example1 { beta } => {
            let mut coeffs = Vec::new();
            let mut fact = 1.0;
            let mut sum = 0.0;
            let mut converged = false;
            for n in 0..SERIES_MAX_TERMS {
                if n > 0 {
                    fact *= n as f64;
                }
                let k = beta + n as f64;
                let c = (-lambda).exp() * lambda.powi(n as i32) / fact * gamma(k + 1.0) * rgamma(k + 1.0 - alpha);
                sum += c.abs();
                coeffs.push((c, k - alpha));
                if lambda == 0.0 || (n > 2 && c.abs() < 1e-16 * sum) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(TfdeError::AccuracyFailure { what: "forcing series".into(), achieved: sum });
            }
            for (c, e) in coeffs {
                f.push(move |x| -c * (lambda * x).exp(), e, Endpoint::B);
            }
            let g2 = rgamma(2.0 - alpha);
            f.push(move |x| g2 * (lambda * x).exp(), 1.0 - alpha, Endpoint::B);
            let la = lambda.powf(alpha);
            let a1 = alpha * lambda.powf(alpha - 1.0);
            let mv = m.value.clone();
            f.push(
                move |x| la * exact.eval(lambda, x) + (mv(x) - a1) * exact.deriv(lambda, x),
                0.0,
                Endpoint::B,
            );
        }
        ExactSolution::Example2Space => {
            let c3 = 6.0 * rgamma(4.0 - alpha);
            let c2 = -2.0 * rgamma(3.0 - alpha);
            f.push(move |x| c3 * (-lambda * x).exp(), 3.0 - alpha, Endpoint::A);
            f.push(move |x| c2 * (-lambda * x).exp(), 2.0 - alpha, Endpoint::A);
            let la = lambda.powf(alpha);
            let a1 = alpha * lambda.powf(alpha - 1.0);
            let mv = m.value.clone();
            f.push(
                move |x| -la * exact.eval(lambda, x) + (mv(x) - a1) * exact.deriv(lambda, x),
                0.0,
                Endpoint::A,
            );
        }
    }
    Ok(f)
}

/// Fine-mesh factor for the energy error.
pub const ENERGY_REFINEMENT: usize = 8;

/// (L² error, energy error) of the approximation `approx` against `exact`.
///
/// The L² error uses 20-point Gauss per element. The energy error is
/// sqrt(eᵀ S₀ e) where e is the nodal interpolant of the error on a mesh
/// `ENERGY_REFINEMENT`× finer and S₀ the λ = 0 stiffness of order α there.
pub fn error_norms(
    mesh: &UniformMesh,
    approx: &dyn Fn(f64) -> f64,
    exact: &dyn Fn(f64) -> f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    let l2 = l2_error(mesh, approx, exact);
    let fine = mesh.refined(ENERGY_REFINEMENT)?;
    let fb = Basis::linear(fine);
    let e = fb.interpolate(&|x| exact(x) - approx(x));
    let s0 = assemble_fractional_toeplitz(&fb, alpha, 0.0, Side::Left)?;
    let se = s0.matvec(&e)?;
    let energy: f64 = e.iter().zip(&se).map(|(a, b)| a * b).sum();
    Ok((l2, energy.max(0.0).sqrt()))
}

/// L² error by 20-point Gauss per element.
pub fn l2_error(mesh: &UniformMesh, approx: &dyn Fn(f64) -> f64, exact: &dyn Fn(f64) -> f64) -> f64 {
    let gl = gauss_legendre(LOAD_POINTS);
    let mut acc = 0.0;
    for e in 0..mesh.n {
        let r = gl.mapped(mesh.node(e), mesh.node(e + 1), 0.0);
        acc += r.integrate(|x| (exact(x) - approx(x)).powi(2));
    }
    acc.sqrt()
}

/// Per-element Gauss rule helper for callers that integrate against the mesh.
pub fn element_rule(mesh: &UniformMesh, e: usize, points: usize) -> Rule {
    legendre_on(points, mesh.node(e), mesh.node(e + 1))
}
