//! Time-fractional runs: Example 2 (tempered space operator and the
//! fractional Laplacian variant), Example 3 and scalar Mittag-Leffler values.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use tfde_core::fem_space::{
    assemble_galerkin, assemble_laplacian, assemble_load, assemble_mass, l2_error, manufactured_rhs, Basis,
    Coefficient, ExactSolution, LoadFunction, LoadWeight, SpaceModelSpec, UniformMesh,
};
use tfde_core::mittag_leffler::{
    cf_nodes, dti_nodes, l1_baseline, pencil_extremes, power_terms, scalar_ml, source_chebyshev, BandedPencil,
    ChebyshevInterp, DensePencil, IterativePencil, MlIntegrator, MlTerm, PencilEigen, PiecewisePoly, PowerTerm,
    RuleSet, ShiftedSolver, TimeModelSpec, CHEBYSHEV_MAX_DEGREE, PC_DEFAULT_N1,
};
use tfde_core::special::gamma as gamma_fn;
use tfde_core::{Result as CoreResult, C64};

use super::{allow, elapsed_ms, finite, max_level, metric, nonnegative, open_interval, positive, required};
use crate::config::{invalid, BasisChoice, Interpolation, Params, SchemeChoice, StepPolicy, TimeSteps};
use crate::error::CliError;
use crate::table::{log2_slope, rates, RateKind, ResultTable, Row};

pub const EX2_MAX_LEVEL: u32 = 10;
pub const FLAP_MAX_LEVEL: u32 = 10;
pub const EX3_MAX_LEVEL: u32 = 10;
pub const L1_MAX_LEVEL: u32 = 9;

fn rules(scheme: SchemeChoice, n1: usize, solver: &dyn ShiftedSolver) -> CoreResult<RuleSet> {
    Ok(match scheme {
        SchemeChoice::Cf => RuleSet::Cf(cf_nodes(n1)?),
        SchemeChoice::Pc => RuleSet::Pc { n1 },
        SchemeChoice::Dti => {
            let (lo, hi) = pencil_extremes(&solver_mass_dense(solver), &solver_stiffness_dense(solver))?;
            RuleSet::Dti(dti_nodes(lo, hi)?)
        }
        SchemeChoice::L1 => unreachable!("L1 is not a contour scheme"),
    })
}

fn solver_mass_dense(s: &dyn ShiftedSolver) -> tfde_core::DenseMatrix {
    tfde_core::DenseMatrix::from_operator(s.dim(), &|v: &[f64]| s.mass_apply(v).expect("square pencil"))
}

fn solver_stiffness_dense(s: &dyn ShiftedSolver) -> tfde_core::DenseMatrix {
    tfde_core::DenseMatrix::from_operator(s.dim(), &|v: &[f64]| s.stiffness_apply(v).expect("square pencil"))
}

fn check_n1(scheme: SchemeChoice, n1: Option<usize>) -> Result<usize, CliError> {
    match (scheme, n1) {
        (SchemeChoice::Dti, Some(_)) => Err(invalid("`N1` is fixed by the spectrum bounds for dti")),
        (SchemeChoice::L1, Some(_)) => Err(invalid("`N1` does not apply to l1")),
        (SchemeChoice::Cf, Some(n)) if n % 2 != 0 || !(8..=20).contains(&n) => {
            Err(invalid(format!("`N1` = {n} must be even and in [8, 20] for cf")))
        }
        (_, Some(n)) if !(4..=64).contains(&n) => Err(invalid(format!("`N1` = {n} must lie in [4, 64]"))),
        (_, Some(n)) => Ok(n),
        (_, None) => Ok(PC_DEFAULT_N1),
    }
}

fn push_series(
    table: &mut ResultTable,
    name: &str,
    label: &str,
    levels: &[u32],
    results: Vec<(CoreResult<(f64, Option<usize>)>, f64, Vec<String>)>,
) -> Vec<Option<f64>> {
    let values: Vec<Option<f64>> = results.iter().map(|(r, _, _)| r.as_ref().ok().and_then(|v| finite(v.0))).collect();
    let rs = rates(levels, &values, RateKind::Decay);
    for (i, (res, ms, flags)) in results.into_iter().enumerate() {
        let mut row = Row::new(Some(levels[i]), metric(name, label), values[i]);
        row.rate = rs[i];
        row.iterations = res.as_ref().ok().and_then(|v| v.1);
        let idx = table.push(row, Some(ms));
        match res {
            Err(e) => table.flag(idx, e.to_string()),
            Ok(_) if values[i].is_none() && flags.is_empty() => table.flag(idx, "non-finite error"),
            Ok(_) => {}
        }
        for f in flags {
            table.flag(idx, f);
        }
    }
    values
}

// ---------------------------------------------------------------------------
// Example 2

/// ₀^C D_t^γ u − K·₀D_x^{α,λ}u = f with u = (1 + t^β)·e^{−λx}(x³ − x²).
#[derive(Debug, Clone, PartialEq)]
pub struct Ex2Case {
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
    pub k: f64,
    pub t: f64,
    pub scheme: SchemeChoice,
    pub n1: usize,
    pub tolerance: f64,
}

impl Ex2Case {
    pub fn parse(p: &Params, levels: &[u32]) -> Result<Self, CliError> {
        allow(p, &["gamma", "alpha", "lambda", "beta", "K", "T", "scheme", "N1", "tolerance"], "ex2")?;
        let scheme = p.scheme.unwrap_or(SchemeChoice::Cf);
        if !matches!(scheme, SchemeChoice::Cf | SchemeChoice::Pc) {
            return Err(invalid(format!(
                "ex2 admits the cf and pc schemes, got {}; the DTI variant is ex2-flap",
                scheme.name()
            )));
        }
        max_level(levels, EX2_MAX_LEVEL, "dense pencil")?;
        Ok(Self {
            gamma: open_interval(required(p.gamma, "gamma")?, 0.0, 1.0, "gamma")?,
            alpha: open_interval(required(p.alpha, "alpha")?, 1.0, 2.0, "alpha")?,
            lambda: nonnegative(p.lambda.unwrap_or(3.0), "lambda")?,
            beta: positive(p.beta.unwrap_or(1.0), "beta")?,
            k: positive(p.k.unwrap_or(1.0), "K")?,
            t: positive(p.t.unwrap_or(2.0), "T")?,
            scheme,
            n1: check_n1(scheme, p.n1)?,
            tolerance: positive(p.tolerance.unwrap_or(1e-10), "tolerance")?,
        })
    }
}

/// L² error at T on level `j`, plus integrator diagnostics.
pub fn ex2_level(c: &Ex2Case, j: u32, iterative: bool) -> CoreResult<(f64, Vec<String>)> {
    let lam = c.lambda;
    let basis = Basis::linear(UniformMesh::unit(j)?);
    let zero = Coefficient::constant(0.0);
    let space = ExactSolution::Example2Space;
    let dw = manufactured_rhs(space, c.alpha, lam, &zero)?;
    let spec = SpaceModelSpec { alpha: c.alpha, lambda: lam, p: 0.0, m: zero.clone(), c: zero, f: dw };
    let sys = assemble_galerkin(&spec, &basis)?;
    let bw = assemble_load(&LoadFunction::smooth(move |x| space.eval(lam, x)), &basis, LoadWeight::Plain)?;
    let bd = sys.load.clone();
    let solver: Box<dyn ShiftedSolver + '_> = if iterative {
        Box::new(IterativePencil::new(assemble_mass(&basis), |v: &[f64]| sys.apply(v), c.tolerance))
    } else {
        Box::new(DensePencil::new(assemble_mass(&basis).to_dense(), sys.to_dense())?)
    };
    let integ = MlIntegrator::new(c.gamma, c.k, 1.0, solver.as_ref(), rules(c.scheme, c.n1, solver.as_ref())?)?;
    // f = w·Γ(β+1)/Γ(β+1−γ)·t^{β−γ} − K(1 + t^β)·D w
    let c1 = gamma_fn(c.beta + 1.0) / gamma_fn(c.beta + 1.0 - c.gamma);
    let mut terms = vec![MlTerm { t: c.t, beta: 1.0, coef: 1.0, rhs: 0 }];
    terms.extend(power_terms(c.gamma, c.t, &[PowerTerm { nu: c.beta - c.gamma + 1.0, coef: c1 }], 0)?);
    terms.extend(power_terms(
        c.gamma,
        c.t,
        &[PowerTerm { nu: 1.0, coef: -c.k }, PowerTerm { nu: c.beta + 1.0, coef: -c.k }],
        1,
    )?);
    let u = integ.apply_terms(&terms, &[bw, bd])?;
    let scale = 1.0 + c.t.powf(c.beta);
    let err = l2_error(&basis.mesh, &|x| basis.eval(&u, x), &|x| scale * space.eval(lam, x));
    Ok((err, integ.diagnostics.clone()))
}

pub(crate) fn run_ex2(c: &Ex2Case, label: &str, levels: &[u32], iterative: bool, table: &mut ResultTable) {
    let mut results = Vec::new();
    for &j in levels {
        let start = Instant::now();
        let r = ex2_level(c, j, iterative).map(|(e, diags)| {
            diags.into_iter().for_each(|d| table.note(d));
            (e, None)
        });
        results.push((r, elapsed_ms(start), Vec::new()));
    }
    let values = push_series(table, "l2", label, levels, results);
    let slope = log2_slope(levels, &values);
    table.push(Row::new(None, metric("slope", label), slope), None);
}

// ---------------------------------------------------------------------------
// Example 2, fractional Laplacian variant

/// ₀^C D_t^γ u + K(−Δ)^{α/2}u = 0 with u(0) = 5 sin πx (cos 2πx − 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FlapCase {
    pub gamma: f64,
    pub alpha: f64,
    pub k: f64,
    pub t: f64,
}

impl FlapCase {
    pub fn parse(p: &Params, levels: &[u32]) -> Result<Self, CliError> {
        allow(p, &["gamma", "alpha", "K", "T", "scheme"], "ex2-flap")?;
        if let Some(s) = p.scheme {
            if s != SchemeChoice::Dti {
                return Err(invalid(format!("ex2-flap admits only the dti scheme, got {}", s.name())));
            }
        }
        max_level(levels, FLAP_MAX_LEVEL, "dense spectrum bounds")?;
        let alpha = required(p.alpha, "alpha")?;
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid(format!("`alpha` = {alpha} must lie in (0, 2]")));
        }
        Ok(Self {
            gamma: open_interval(required(p.gamma, "gamma")?, 0.0, 1.0, "gamma")?,
            alpha,
            k: positive(p.k.unwrap_or(1.0), "K")?,
            t: positive(p.t.unwrap_or(5.0), "T")?,
        })
    }
}

pub fn flap_level(c: &FlapCase, j: u32) -> CoreResult<f64> {
    let basis = Basis::linear(UniformMesh::unit(j)?);
    let pencil = BandedPencil::new(assemble_mass(&basis), assemble_laplacian(&basis))?;
    let (lo, hi) = pencil_extremes(&pencil.mass.to_dense(), &pencil.stiffness.to_dense())?;
    let integ = MlIntegrator::new(c.gamma, c.k, c.alpha / 2.0, &pencil, RuleSet::Dti(dti_nodes(lo, hi)?))?;
    let g = LoadFunction::smooth(|x| 5.0 * (PI * x).sin() * ((2.0 * PI * x).cos() - 1.0));
    let b = assemble_load(&g, &basis, LoadWeight::Plain)?;
    let u = integ.apply_terms(&[MlTerm { t: c.t, beta: 1.0, coef: 1.0, rhs: 0 }], &[b])?;
    // 5 sin πx (cos 2πx − 1) = −7.5 sin πx + 2.5 sin 3πx
    let e = |s: f64| scalar_ml(c.gamma, 1.0, C64::new(-c.k * c.t.powf(c.gamma) * s.powf(c.alpha), 0.0)).re;
    let (e1, e3) = (e(PI), e(3.0 * PI));
    Ok(l2_error(&basis.mesh, &|x| basis.eval(&u, x), &|x| {
        -7.5 * e1 * (PI * x).sin() + 2.5 * e3 * (3.0 * PI * x).sin()
    }))
}

pub(crate) fn run_flap(c: &FlapCase, label: &str, levels: &[u32], table: &mut ResultTable) {
    let mut results = Vec::new();
    for &j in levels {
        let start = Instant::now();
        let r = flap_level(c, j).map(|e| (e, None));
        results.push((r, elapsed_ms(start), Vec::new()));
    }
    push_series(table, "l2", label, levels, results);
}

// ---------------------------------------------------------------------------
// Example 3

/// ₀^C D_t^{γ,λ}u − KΔu = f with u = e^{−λt}(t^β + 1) sin πx, quadratic
/// elements, and a time factor w(t) = Γ(β+1)t^{β−γ}/Γ(β−γ+1) + t^β + 1 of
/// e^{λt}f that is either interpolated (contour schemes) or sampled (L1).
#[derive(Debug, Clone, PartialEq)]
pub struct Ex3Case {
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub k: f64,
    pub t: f64,
    pub scheme: SchemeChoice,
    pub n1: usize,
    pub interpolation: Interpolation,
    pub chebyshev_degree: usize,
    pub time_steps: TimeSteps,
    pub budget: Option<Duration>,
}

impl Ex3Case {
    pub fn parse(p: &Params, levels: &[u32]) -> Result<Self, CliError> {
        allow(
            p,
            &[
                "gamma",
                "lambda",
                "beta",
                "K",
                "T",
                "scheme",
                "N1",
                "basis",
                "interpolation",
                "chebyshev_degree",
                "time_steps",
                "time_budget_s",
            ],
            "ex3",
        )?;
        if let Some(b) = p.basis {
            if b != BasisChoice::Quadratic {
                return Err(invalid("ex3 uses the quadratic basis"));
            }
        }
        let scheme = p.scheme.unwrap_or(SchemeChoice::Cf);
        let l1 = scheme == SchemeChoice::L1;
        if l1 {
            if p.interpolation.is_some() || p.chebyshev_degree.is_some() {
                return Err(invalid("l1 samples the source directly; `interpolation` does not apply"));
            }
            max_level(levels, L1_MAX_LEVEL, "dense eigen-decomposition for l1")?;
        } else {
            if p.time_steps.is_some() || p.time_budget_s.is_some() {
                return Err(invalid("`time_steps` and `time_budget_s` apply only to l1"));
            }
            max_level(levels, EX3_MAX_LEVEL, "contour schemes")?;
        }
        let interpolation = p.interpolation.unwrap_or(Interpolation::Quadratic);
        if interpolation == Interpolation::Quadratic && p.chebyshev_degree.is_some() {
            return Err(invalid("`chebyshev_degree` needs interpolation = chebyshev"));
        }
        let chebyshev_degree = p.chebyshev_degree.unwrap_or(16);
        if chebyshev_degree > CHEBYSHEV_MAX_DEGREE {
            return Err(invalid(format!("`chebyshev_degree` must not exceed {CHEBYSHEV_MAX_DEGREE}")));
        }
        let time_steps = p.time_steps.unwrap_or(TimeSteps::Policy(StepPolicy::Coupled));
        if time_steps == TimeSteps::Fixed(0) {
            return Err(invalid("`time_steps` must be positive"));
        }
        let budget = match p.time_budget_s {
            Some(s) => Some(Duration::from_secs_f64(positive(s, "time_budget_s")?)),
            None => None,
        };
        Ok(Self {
            gamma: open_interval(p.gamma.unwrap_or(0.6), 0.0, 1.0, "gamma")?,
            lambda: nonnegative(p.lambda.unwrap_or(1.0), "lambda")?,
            beta: positive(p.beta.unwrap_or(4.0), "beta")?,
            k: positive(p.k.unwrap_or(1.0 / (PI * PI)), "K")?,
            t: positive(p.t.unwrap_or(1.0), "T")?,
            scheme,
            n1: check_n1(scheme, p.n1)?,
            interpolation,
            chebyshev_degree,
            time_steps,
            budget,
        })
    }

    fn w(&self, s: f64) -> f64 {
        let (b, g) = (self.beta, self.gamma);
        gamma_fn(b + 1.0) * s.powf(b - g) / gamma_fn(b - g + 1.0) + s.powf(b) + 1.0
    }

    /// L1 steps at level `j`.
    pub fn steps(&self, j: u32) -> usize {
        match self.time_steps {
            TimeSteps::Fixed(m) => m,
            TimeSteps::Policy(StepPolicy::Coupled) => 2f64.powf(3.0 * j as f64 / (2.0 - self.gamma)).ceil() as usize,
            TimeSteps::Policy(StepPolicy::Squared) => 1usize << (2 * j),
        }
    }
}

/// Discrete solution of one Example 3 level.
pub struct Ex3Solution {
    pub basis: Basis,
    /// Nodal coefficients at T; meaningless when `flags` is non-empty.
    pub coeffs: Vec<f64>,
    /// L1 time steps.
    pub steps: Option<usize>,
    pub flags: Vec<String>,
    pub diagnostics: Vec<String>,
}

impl Ex3Solution {
    /// L² error against e^{−λT}(T^β + 1) sin πx.
    pub fn error(&self, c: &Ex3Case) -> f64 {
        if !self.flags.is_empty() {
            return f64::NAN;
        }
        let amp = (-c.lambda * c.t).exp() * (c.t.powf(c.beta) + 1.0);
        l2_error(&self.basis.mesh, &|x| self.basis.eval(&self.coeffs, x), &|x| amp * (PI * x).sin())
    }
}

pub fn ex3_solve(c: &Ex3Case, j: u32) -> CoreResult<Ex3Solution> {
    let basis = Basis::quadratic(UniformMesh::unit(j)?);
    let pencil = BandedPencil::new(assemble_mass(&basis), assemble_laplacian(&basis))?;
    let b = assemble_load(&LoadFunction::smooth(|x| (PI * x).sin()), &basis, LoadWeight::Plain)?;
    let decay = (-c.lambda * c.t).exp();
    let mut flags = Vec::new();
    let mut diagnostics = Vec::new();
    let mut steps = None;
    let coeffs: Vec<f64> = if c.scheme == SchemeChoice::L1 {
        let eig = PencilEigen::new(&pencil.mass.to_dense(), &pencil.stiffness.to_dense())?;
        let spec = TimeModelSpec { gamma: c.gamma, lambda: c.lambda, k: c.k, horizon: c.t };
        let m = c.steps(j);
        steps = Some(m);
        let out = l1_baseline(&spec, &eig, &b, &|s| c.w(s), &b, m, c.budget)?;
        if out.truncated {
            flags.push(format!(
                "L1 run truncated by the time budget after {} of {} modes",
                out.modes_done,
                eig.values.len()
            ));
        }
        out.coeffs
    } else {
        let integ = MlIntegrator::new(c.gamma, c.k, 1.0, &pencil, rules(c.scheme, c.n1, &pencil)?)?;
        diagnostics.extend(integ.diagnostics.iter().cloned());
        let homog = integ.apply_terms(&[MlTerm { t: c.t, beta: 1.0, coef: 1.0, rhs: 0 }], &[b.clone()])?;
        let source = match c.interpolation {
            Interpolation::Quadratic => {
                let m = 1usize << j;
                let breaks: Vec<f64> = (0..=m).map(|i| c.t * i as f64 / m as f64).collect();
                let pw = PiecewisePoly::interpolate(&|s| c.w(s), breaks, 2)?;
                integ.apply_terms(&pw.ml_terms(c.gamma, 0), &[b])?
            }
            Interpolation::Chebyshev => {
                let ch = ChebyshevInterp::interpolate(&|s| c.w(s), c.t, c.chebyshev_degree)?;
                if c.scheme == SchemeChoice::Cf {
                    diagnostics.push(
                        "cf with chebyshev interpolation: source terms of high Mittag-Leffler index use the pc rule"
                            .to_string(),
                    );
                }
                source_chebyshev(&integ, &ch, &b)?
            }
        };
        homog.iter().zip(&source).map(|(h, s)| (h + s) * decay).collect()
    };
    Ok(Ex3Solution { basis, coeffs, steps, flags, diagnostics })
}

pub(crate) fn run_ex3(c: &Ex3Case, label: &str, levels: &[u32], table: &mut ResultTable) {
    let mut results = Vec::new();
    for &j in levels {
        let start = Instant::now();
        match ex3_solve(c, j) {
            Ok(sol) => {
                let err = sol.error(c);
                sol.diagnostics.iter().for_each(|d| table.note(d.clone()));
                results.push((Ok((err, sol.steps)), elapsed_ms(start), sol.flags));
            }
            Err(e) => results.push((Err(e), elapsed_ms(start), Vec::new())),
        }
    }
    push_series(table, "l2", label, levels, results);
}

// ---------------------------------------------------------------------------
// scalar Mittag-Leffler values

#[derive(Debug, Clone, PartialEq)]
pub struct MlEvalCase {
    pub gamma: f64,
    pub beta: f64,
    pub points: Vec<[f64; 2]>,
}

impl MlEvalCase {
    pub fn parse(p: &Params) -> Result<Self, CliError> {
        allow(p, &["gamma", "beta", "points"], "ml-eval")?;
        let gamma = required(p.gamma, "gamma")?;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid(format!("`gamma` = {gamma} must lie in (0, 1]")));
        }
        let points = p.points.clone().unwrap_or_default();
        if points.is_empty() {
            return Err(invalid("`points` must list at least one [re, im] pair"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("`points` must be finite"));
        }
        Ok(Self { gamma, beta: positive(required(p.beta, "beta")?, "beta")?, points })
    }
}

pub(crate) fn run_ml_eval(c: &MlEvalCase, label: &str, table: &mut ResultTable) {
    for &[re, im] in &c.points {
        let start = Instant::now();
        let mut v = scalar_ml(c.gamma, c.beta, C64::new(re, im));
        if im == 0.0 {
            // real argument, real value; drop contour round-off
            v.im = 0.0;
        }
        let ms = elapsed_ms(start);
        let z = format!("z={re}{im:+}i");
        for (part, x) in [("re", v.re), ("im", v.im)] {
            let idx = table.push(Row::new(None, metric(&format!("{part} E({z})"), label), finite(x)), Some(ms));
            if !x.is_finite() {
                table.flag(idx, "non-finite value");
            }
        }
    }
}
