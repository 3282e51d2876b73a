//! Hierarchical (Schauder) basis transform and diagonal scaling.
//!
//! Multiscale coefficients are ordered level by level: index `2^j − 1 + k`
//! holds ψ*_{j,k}, j = 0..J−1, k = 0..2^j−1. The wavelet ψ*_{j,k} is the hat
//! centred at node (2k+1)·2^{J−j−1} spanning two level-(j+1) cells, scaled by
//! 2^{(j+1−J)/2} so that the finest level coincides with the normalized nodal
//! basis. `W` maps multiscale coefficients to nodal coefficients.

use crate::error::{check_dim, Result, TfdeError};

/// Level bookkeeping for the transform on 2^J − 1 interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FwtPlan {
    levels: u32,
}

impl FwtPlan {
    pub fn new(levels: u32) -> Result<Self> {
        if !(1..=30).contains(&levels) {
            return Err(TfdeError::InvalidParameter(format!("FWT levels {levels} outside 1..=30")));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn dim(&self) -> usize {
        (1usize << self.levels) - 1
    }

    /// Position of ψ*_{j,k} in the multiscale vector.
    pub fn index(&self, j: u32, k: usize) -> usize {
        (1usize << j) - 1 + k
    }

    /// Level of a multiscale index.
    pub fn level_of(&self, idx: usize) -> u32 {
        usize::BITS - 1 - (idx + 1).leading_zeros()
    }

    fn amplitude(&self, j: u32) -> f64 {
        2f64.powf((j as f64 + 1.0 - self.levels as f64) / 2.0)
    }
}

// Floating-point operations are tallied so the linear cost can be checked.
#[derive(Default)]
struct Tally(usize);

fn synthesize(plan: &FwtPlan, x: &[f64], tally: &mut Tally) -> Vec<f64> {
    let mut coarse: Vec<f64> = Vec::new();
    for j in 0..plan.levels {
        let half = 1usize << j;
        let amp = plan.amplitude(j);
        let off = plan.index(j, 0);
        let mut fine = vec![0.0; 2 * half - 1];
        // node m (1-based) of the finer grid lives at fine[m − 1]
        for i in 1..half {
            fine[2 * i - 1] = coarse[i - 1];
        }
        for k in 0..half {
            let left = if k == 0 { 0.0 } else { coarse[k - 1] };
            let right = if k + 1 == half { 0.0 } else { coarse[k] };
            fine[2 * k] = 0.5 * (left + right) + amp * x[off + k];
            tally.0 += 4;
        }
        coarse = fine;
    }
    coarse
}

fn analyze_transpose(plan: &FwtPlan, y: &[f64], tally: &mut Tally) -> Vec<f64> {
    let mut out = vec![0.0; plan.dim()];
    let mut fine = y.to_vec();
    for j in (0..plan.levels).rev() {
        let half = 1usize << j;
        let amp = plan.amplitude(j);
        let off = plan.index(j, 0);
        for k in 0..half {
            out[off + k] = amp * fine[2 * k];
        }
        let mut coarse = vec![0.0; half - 1];
        for i in 1..half {
            coarse[i - 1] = fine[2 * i - 1] + 0.5 * (fine[2 * i - 2] + fine[2 * i]);
        }
        tally.0 += 4 * half;
        fine = coarse;
    }
    out
}

fn analyze_inverse(plan: &FwtPlan, u: &[f64], tally: &mut Tally) -> Vec<f64> {
    let mut out = vec![0.0; plan.dim()];
    let mut fine = u.to_vec();
    for j in (0..plan.levels).rev() {
        let half = 1usize << j;
        let amp = plan.amplitude(j);
        let off = plan.index(j, 0);
        let coarse: Vec<f64> = (1..half).map(|i| fine[2 * i - 1]).collect();
        for k in 0..half {
            let left = if k == 0 { 0.0 } else { coarse[k - 1] };
            let right = if k + 1 == half { 0.0 } else { coarse[k] };
            out[off + k] = (fine[2 * k] - 0.5 * (left + right)) / amp;
        }
        tally.0 += 4 * half;
        fine = coarse;
    }
    out
}

/// W x: multiscale coefficients to nodal coefficients.
pub fn fwt_apply(plan: &FwtPlan, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(plan.dim(), x.len())?;
    Ok(synthesize(plan, x, &mut Tally::default()))
}

/// Wᵀ y.
pub fn fwt_transpose_apply(plan: &FwtPlan, y: &[f64]) -> Result<Vec<f64>> {
    check_dim(plan.dim(), y.len())?;
    Ok(analyze_transpose(plan, y, &mut Tally::default()))
}

/// W⁻¹ u, level by level.
pub fn fwt_inverse(plan: &FwtPlan, u: &[f64]) -> Result<Vec<f64>> {
    check_dim(plan.dim(), u.len())?;
    Ok(analyze_inverse(plan, u, &mut Tally::default()))
}

/// Number of floating-point operations one `fwt_apply` performs.
pub fn fwt_flops(plan: &FwtPlan) -> usize {
    let mut t = Tally::default();
    synthesize(plan, &vec![0.0; plan.dim()], &mut t);
    t.0
}

/// d_{j,k} = A(ψ*_{j,k}, ψ*_{j,k})^{−1/2}.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagScaling {
    pub d: Vec<f64>,
}

impl DiagScaling {
    pub fn identity(plan: &FwtPlan) -> Self {
        Self { d: vec![1.0; plan.dim()] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(a, b)| a * b).collect()
    }
}

/// Builds the diagonal scaling from matvecs with `a`.
///
/// With `translation_invariant` set (constant-coefficient models whose
/// operator is Toeplitz) only the first wavelet of each level is probed; its
/// value is exact for the rest of the level because every wavelet of a level
/// is a pure shift of the first one and stays inside the domain.
pub fn build_diag(
    plan: &FwtPlan,
    a: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    translation_invariant: bool,
) -> Result<DiagScaling> {
    let n = plan.dim();
    let mut d = vec![0.0; n];
    let probe = |idx: usize| -> Result<f64> {
        let mut e = vec![0.0; n];
        e[idx] = 1.0;
        let psi = fwt_apply(plan, &e)?;
        let apsi = a(&psi)?;
        check_dim(n, apsi.len())?;
        let v: f64 = psi.iter().zip(&apsi).map(|(p, q)| p * q).sum();
        if !(v > 0.0) || !v.is_finite() {
            return Err(TfdeError::IndefiniteForm { index: idx, value: v });
        }
        Ok(1.0 / v.sqrt())
    };
    for j in 0..plan.levels() {
        let off = plan.index(j, 0);
        let count = 1usize << j;
        if translation_invariant {
            let v = probe(off)?;
            d[off..off + count].iter_mut().for_each(|x| *x = v);
        } else {
            for k in 0..count {
                d[off + k] = probe(off + k)?;
            }
        }
    }
    Ok(DiagScaling { d })
}

/// D Wᵀ A W D x.
pub fn preconditioned_apply(
    plan: &FwtPlan,
    d: &DiagScaling,
    a: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dim(plan.dim(), x.len())?;
    let nodal = fwt_apply(plan, &d.apply(x))?;
    let y = a(&nodal)?;
    check_dim(plan.dim(), y.len())?;
    Ok(d.apply(&fwt_transpose_apply(plan, &y)?))
}

/// Right-hand side of the preconditioned system, D Wᵀ f.
pub fn precondition_rhs(plan: &FwtPlan, d: &DiagScaling, f: &[f64]) -> Result<Vec<f64>> {
    Ok(d.apply(&fwt_transpose_apply(plan, f)?))
}

/// Nodal solution from the preconditioned unknown: U = W D y.
pub fn recover_solution(plan: &FwtPlan, d: &DiagScaling, y: &[f64]) -> Result<Vec<f64>> {
    fwt_apply(plan, &d.apply(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov_toeplitz::Dense;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hat(y: f64) -> f64 {
        (1.0 - (y - 1.0).abs()).max(0.0)
    }

    // Columns by point evaluation of the scaled wavelets at the nodes.
    fn explicit_w(levels: u32) -> Dense<f64> {
        let plan = FwtPlan::new(levels).unwrap();
        let n_el = 1usize << levels;
        Dense::from_fn(plan.dim(), plan.dim(), |i, c| {
            let j = plan.level_of(c);
            let k = c - plan.index(j, 0);
            let x = (i + 1) as f64 / n_el as f64;
            plan.amplitude(j) * hat(2.0 * ((1u64 << j) as f64 * x - k as f64))
        })
    }

    #[test]
    fn single_level_is_identity() {
        let plan = FwtPlan::new(1).unwrap();
        assert_eq!(fwt_apply(&plan, &[2.5]).unwrap(), vec![2.5]);
        assert_eq!(fwt_transpose_apply(&plan, &[2.5]).unwrap(), vec![2.5]);
    }

    #[test]
    fn matches_point_evaluation() {
        for levels in [2, 3, 5] {
            let plan = FwtPlan::new(levels).unwrap();
            let w = explicit_w(levels);
            let n = plan.dim();
            for c in 0..n {
                let mut e = vec![0.0; n];
                e[c] = 1.0;
                let col = fwt_apply(&plan, &e).unwrap();
                let colt = fwt_transpose_apply(&plan, &e).unwrap();
                for i in 0..n {
                    assert!((col[i] - w[(i, c)]).abs() < 1e-15);
                    assert!((colt[i] - w[(c, i)]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let plan = FwtPlan::new(8).unwrap();
        let x: Vec<f64> = (0..plan.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = fwt_inverse(&plan, &fwt_apply(&plan, &x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn identity_operator_gives_unit_scaling_on_finest_level() {
        let plan = FwtPlan::new(4).unwrap();
        let id = |v: &[f64]| -> Result<Vec<f64>> { Ok(v.to_vec()) };
        let d = build_diag(&plan, &id, false).unwrap();
        let off = plan.index(3, 0);
        assert!(d.d[off..].iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(d.d.iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn laplacian_scaling_constant_per_level() {
        let levels = 6;
        let plan = FwtPlan::new(levels).unwrap();
        let n = plan.dim();
        let h = 1.0 / (n + 1) as f64;
        let lap = move |v: &[f64]| -> Result<Vec<f64>> {
            Ok((0..n)
                .map(|i| {
                    let l = if i > 0 { v[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                    (2.0 * v[i] - l - r) / (h * h)
                })
                .collect())
        };
        let full = build_diag(&plan, &lap, false).unwrap();
        let fast = build_diag(&plan, &lap, true).unwrap();
        for (a, b) in full.d.iter().zip(&fast.d) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        // level j hat has energy ∝ 2^{j+1}·amp², so d_j ∝ 2^{-j}
        for j in 1..levels {
            let r = fast.d[plan.index(j, 0)] / fast.d[plan.index(j - 1, 0)];
            assert!((r - 0.5).abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn indefinite_form_is_reported() {
        let plan = FwtPlan::new(3).unwrap();
        let neg = |v: &[f64]| -> Result<Vec<f64>> { Ok(v.iter().map(|x| -x).collect()) };
        assert!(matches!(build_diag(&plan, &neg, true), Err(TfdeError::IndefiniteForm { .. })));
    }

    #[test]
    fn level_indexing() {
        let plan = FwtPlan::new(5).unwrap();
        for j in 0..5 {
            for k in 0..(1usize << j) {
                assert_eq!(plan.level_of(plan.index(j, k)), j);
            }
        }
    }
}
