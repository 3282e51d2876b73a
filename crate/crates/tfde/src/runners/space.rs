//! Stationary space-tempered runs: Example 1 errors and the wavelet
//! preconditioning study.

use std::fmt::Write as _;
use std::time::Instant;

use tfde_core::fem_space::{
    assemble_galerkin, assemble_petrov_galerkin, error_norms, manufactured_rhs, AssembledSystem, Basis, Coefficient,
    ExactSolution, SpaceModelSpec, UniformMesh,
};
use tfde_core::krylov_toeplitz::{condition_number, dense_solve, eigenvalues, gmres, Dense, GmresReport};
use tfde_core::wavelet_precond::{build_diag, precondition_rhs, preconditioned_apply, recover_solution, FwtPlan};
use tfde_core::Result as CoreResult;

use super::{allow, elapsed_ms, finite, max_level, metric, nonnegative, open_interval, positive, required};
use crate::config::{invalid, BasisChoice, Method, Params};
use crate::error::CliError;
use crate::table::{rates, RateKind, ResultTable, Row};

/// Largest J solved by dense LU; beyond it `--iterative` is required.
pub const DENSE_MAX_LEVEL: u32 = 9;
pub const ITERATIVE_MAX_LEVEL: u32 = 13;
pub const PRECOND_MAX_LEVEL: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ex1Case {
    pub alpha: f64,
    pub lambda: f64,
    pub q: f64,
    pub beta: f64,
    pub method: Method,
    pub tolerance: f64,
}

impl Ex1Case {
    pub fn parse(p: &Params, levels: &[u32], iterative: bool) -> Result<Self, CliError> {
        allow(p, &["alpha", "lambda", "p", "q", "beta", "method", "basis", "tolerance"], "ex1")?;
        common_space_checks(p, "ex1")?;
        let alpha = open_interval(required(p.alpha, "alpha")?, 1.0, 2.0, "alpha")?;
        let beta = required(p.beta, "beta")?;
        if !(beta > alpha / 2.0) {
            return Err(invalid(format!("`beta` = {beta} must exceed alpha/2 = {}", alpha / 2.0)));
        }
        let method = p.method.ok_or_else(|| invalid("`method` is required (galerkin or petrov-galerkin)"))?;
        if iterative {
            max_level(levels, ITERATIVE_MAX_LEVEL, "iterative solver limit")?;
        } else {
            max_level(levels, DENSE_MAX_LEVEL, "dense LU limit; pass --iterative")?;
        }
        Ok(Self {
            alpha,
            lambda: nonnegative(required(p.lambda, "lambda")?, "lambda")?,
            q: nonnegative(p.q.unwrap_or(0.0), "q")?,
            beta,
            method,
            tolerance: positive(p.tolerance.unwrap_or(1e-8), "tolerance")?,
        })
    }

    fn exact(&self) -> ExactSolution {
        ExactSolution::Example1 { beta: self.beta }
    }

    /// Right-sided model with m(x) = qλ^{α−1}(1−x) and c = 0.
    fn system(&self, j: u32, method: Method) -> CoreResult<AssembledSystem> {
        let basis = Basis::linear(UniformMesh::unit(j)?);
        let s = self.q * self.lambda.powf(self.alpha - 1.0);
        let m = Coefficient::linear(s, -s);
        let f = manufactured_rhs(self.exact(), self.alpha, self.lambda, &m)?;
        let spec = SpaceModelSpec { alpha: self.alpha, lambda: self.lambda, p: 1.0, m, c: Coefficient::constant(0.0), f };
        match method {
            Method::Galerkin => assemble_galerkin(&spec, &basis),
            Method::PetrovGalerkin => assemble_petrov_galerkin(&spec, &basis),
        }
    }
}

fn common_space_checks(p: &Params, example: &str) -> Result<(), CliError> {
    if let Some(side) = p.p {
        if side != 1.0 {
            return Err(invalid(format!("{example} is right-sided: `p` must be 1, got {side}")));
        }
    }
    if let Some(b) = p.basis {
        if b != BasisChoice::Linear {
            return Err(invalid(format!("{example} uses the linear basis")));
        }
    }
    Ok(())
}

/// Wavelet-preconditioned GMRES on an assembled system.
fn solve_preconditioned(sys: &AssembledSystem, j: u32, tol: f64) -> CoreResult<(Vec<f64>, GmresReport)> {
    let plan = FwtPlan::new(j)?;
    let op = |v: &[f64]| sys.apply(v);
    let d = build_diag(&plan, &op, sys.translation_invariant)?;
    let rhs = precondition_rhs(&plan, &d, &sys.load)?;
    let pa = |y: &[f64]| preconditioned_apply(&plan, &d, &op, y).expect("preconditioned operator keeps the dimension");
    let (y, report) = gmres(&pa, &rhs, tol, rhs.len(), None)?;
    Ok((recover_solution(&plan, &d, &y)?, report))
}

/// (L² error, energy error, GMRES report when iterative) at level `j`.
pub fn ex1_level(case: &Ex1Case, j: u32, iterative: bool) -> CoreResult<(f64, f64, Option<GmresReport>)> {
    let sys = case.system(j, case.method)?;
    let (u, report) = if iterative {
        let (u, r) = solve_preconditioned(&sys, j, case.tolerance)?;
        (u, Some(r))
    } else {
        (dense_solve(&sys.to_dense(), &sys.load)?, None)
    };
    let ex = case.exact();
    let lambda = case.lambda;
    let (l2, energy) =
        error_norms(&sys.basis.mesh, &|x| sys.solution_value(&u, x), &|x| ex.eval(lambda, x), case.alpha)?;
    Ok((l2, energy, report))
}

pub(crate) fn run_ex1(case: &Ex1Case, label: &str, levels: &[u32], iterative: bool, table: &mut ResultTable) {
    let mut l2 = Vec::new();
    let mut energy = Vec::new();
    let mut extra = Vec::new();
    for &j in levels {
        let start = Instant::now();
        match ex1_level(case, j, iterative) {
            Ok((a, b, rep)) => {
                l2.push(finite(a));
                energy.push(finite(b));
                extra.push((rep, elapsed_ms(start), None));
            }
            Err(e) => {
                l2.push(None);
                energy.push(None);
                extra.push((None, elapsed_ms(start), Some(e.to_string())));
            }
        }
    }
    let r_l2 = rates(levels, &l2, RateKind::Decay);
    let r_en = rates(levels, &energy, RateKind::Decay);
    for (i, &j) in levels.iter().enumerate() {
        let (rep, ms, err) = &extra[i];
        for (name, vals, rs) in [("l2", &l2, &r_l2), ("energy", &energy, &r_en)] {
            let mut row = Row::new(Some(j), metric(name, label), vals[i]);
            row.rate = rs[i];
            row.iterations = rep.as_ref().map(|r| r.iterations);
            let idx = table.push(row, Some(*ms));
            if let Some(e) = err {
                table.flag(idx, e.clone());
            } else if vals[i].is_none() {
                table.flag(idx, "non-finite error");
            }
            if let Some(r) = rep {
                if !r.converged {
                    table.flag(idx, format!("GMRES stopped after {} iterations without convergence", r.iterations));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecondCase {
    pub model: Ex1Case,
    pub spectrum: bool,
}

impl PrecondCase {
    pub fn parse(p: &Params, levels: &[u32]) -> Result<Self, CliError> {
        allow(p, &["alpha", "lambda", "p", "q", "beta", "basis", "tolerance", "spectrum"], "precond-study")?;
        common_space_checks(p, "precond-study")?;
        if let Some(q) = p.q {
            if q != 0.0 {
                return Err(invalid("precond-study needs the translation-invariant model q = 0"));
            }
        }
        max_level(levels, PRECOND_MAX_LEVEL, "dense condition numbers")?;
        let alpha = open_interval(required(p.alpha, "alpha")?, 1.0, 2.0, "alpha")?;
        let beta = p.beta.unwrap_or(3.0);
        if !(beta > alpha / 2.0) {
            return Err(invalid(format!("`beta` = {beta} must exceed alpha/2 = {}", alpha / 2.0)));
        }
        let model = Ex1Case {
            alpha,
            lambda: nonnegative(required(p.lambda, "lambda")?, "lambda")?,
            q: 0.0,
            beta,
            method: Method::Galerkin,
            tolerance: positive(p.tolerance.unwrap_or(1e-8), "tolerance")?,
        };
        Ok(Self { model, spectrum: p.spectrum.unwrap_or(false) })
    }
}

pub struct PrecondLevel {
    pub cond_before: f64,
    pub cond_after: f64,
    pub plain: GmresReport,
    pub preconditioned: GmresReport,
    pub spectra: Option<(Vec<tfde_core::C64>, Vec<tfde_core::C64>)>,
}

pub fn precond_level(case: &PrecondCase, j: u32) -> CoreResult<PrecondLevel> {
    let tol = case.model.tolerance;
    let sys = case.model.system(j, Method::Galerkin)?;
    let a = sys.to_dense();
    let n = a.nrows();
    let plan = FwtPlan::new(j)?;
    let op = |v: &[f64]| sys.apply(v);
    let d = build_diag(&plan, &op, sys.translation_invariant)?;
    let pa = |y: &[f64]| preconditioned_apply(&plan, &d, &op, y).expect("preconditioned operator keeps the dimension");
    let p = Dense::from_operator(n, &pa);
    let cond_before = condition_number(&a)?;
    let cond_after = condition_number(&p)?;
    let plain_op = |v: &[f64]| a.matvec(v).expect("square matrix");
    let (_, plain) = gmres(&plain_op, &sys.load, tol, n, None)?;
    let rhs = precondition_rhs(&plan, &d, &sys.load)?;
    let (_, preconditioned) = gmres(&pa, &rhs, tol, n, None)?;
    let spectra = if case.spectrum { Some((eigenvalues(&a)?, eigenvalues(&p)?)) } else { None };
    Ok(PrecondLevel { cond_before, cond_after, plain, preconditioned, spectra })
}

pub(crate) fn run_precond(case: &PrecondCase, label: &str, levels: &[u32], table: &mut ResultTable) {
    let mut results = Vec::new();
    for &j in levels {
        let start = Instant::now();
        let r = precond_level(case, j);
        results.push((r, elapsed_ms(start)));
    }
    let before: Vec<Option<f64>> =
        results.iter().map(|(r, _)| r.as_ref().ok().and_then(|l| finite(l.cond_before))).collect();
    let after: Vec<Option<f64>> =
        results.iter().map(|(r, _)| r.as_ref().ok().and_then(|l| finite(l.cond_after))).collect();
    let g_before = rates(levels, &before, RateKind::Growth);
    let g_after = rates(levels, &after, RateKind::Growth);
    let mut spectrum = String::new();
    for (i, &j) in levels.iter().enumerate() {
        let (res, ms) = &results[i];
        let level = res.as_ref().ok();
        let rows = [
            ("cond_unpreconditioned", before[i], g_before[i], level.map(|l| &l.plain)),
            ("cond_preconditioned", after[i], g_after[i], level.map(|l| &l.preconditioned)),
        ];
        for (name, value, rate, rep) in rows {
            let mut row = Row::new(Some(j), metric(name, label), value);
            row.rate = rate;
            row.iterations = rep.map(|r| r.iterations);
            row.cond_before = before[i];
            row.cond_after = after[i];
            let idx = table.push(row, Some(*ms));
            match (res, rep) {
                (Err(e), _) => table.flag(idx, e.to_string()),
                (Ok(_), Some(r)) if !r.converged => {
                    table.flag(idx, format!("GMRES stopped after {} iterations without convergence", r.iterations))
                }
                _ => {}
            }
        }
        if let Some((ea, ep)) = level.and_then(|l| l.spectra.as_ref()) {
            for (which, vals) in [("A", ea), ("preconditioned", ep)] {
                let mut v = vals.clone();
                v.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
                for z in v {
                    writeln!(spectrum, "{label},{j},{which},{:e},{:e}", z.re, z.im).unwrap();
                }
            }
        }
    }
    if !spectrum.is_empty() {
        let suffix = "spectrum.csv".to_string();
        match table.artifacts.iter_mut().find(|(s, _)| *s == suffix) {
            Some((_, body)) => body.push_str(&spectrum),
            None => table.artifacts.push((suffix, format!("case,J,matrix,re,im\n{spectrum}"))),
        }
    }
}
