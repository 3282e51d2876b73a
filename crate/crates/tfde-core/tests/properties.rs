use num_complex::Complex64 as C64;
use proptest::prelude::*;
use tfde_core::fem_space::{assemble_laplacian, assemble_mass, Basis, UniformMesh};
use tfde_core::krylov_toeplitz::{dense_solve, gmres, Banded, Dense, ToeplitzOperator};
use tfde_core::mittag_leffler::*;
use tfde_core::quadrature::gauss_jacobi;
use tfde_core::special::gamma;
use tfde_core::wavelet_precond::*;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fwt_round_trip_and_adjoint(levels in 1u32..11, seed in vec_strategy(2048), other in vec_strategy(2048)) {
        let plan = FwtPlan::new(levels).unwrap();
        let n = plan.dim();
        let x = &seed[..n];
        let y = &other[..n];
        let back = fwt_inverse(&plan, &fwt_apply(&plan, x).unwrap()).unwrap();
        let err = back.iter().zip(x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-12, "round trip {err:e}");
        // (W x, y) = (x, Wᵀ y)
        let wx = fwt_apply(&plan, x).unwrap();
        let wty = fwt_transpose_apply(&plan, y).unwrap();
        let a: f64 = wx.iter().zip(y).map(|(p, q)| p * q).sum();
        let b: f64 = x.iter().zip(&wty).map(|(p, q)| p * q).sum();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "adjoint {a} {b}");
    }

    #[test]
    fn toeplitz_matvec_matches_dense(n in 1usize..70, col in vec_strategy(70), row in vec_strategy(70), x in vec_strategy(70)) {
        let mut r = row[..n].to_vec();
        r[0] = col[0];
        let t = ToeplitzOperator::new(col[..n].to_vec(), r).unwrap();
        let fast = t.matvec(&x[..n]).unwrap();
        let slow = t.to_dense().matvec(&x[..n]).unwrap();
        let err = fast.iter().zip(&slow).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-12 * n as f64);
    }

    #[test]
    fn banded_lu_matches_dense(n in 2usize..40, kl in 0usize..3, ku in 0usize..3, vals in vec_strategy(400), rhs in vec_strategy(40)) {
        let mut b = Banded::<f64>::zeros(n, kl, ku);
        let mut k = 0;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = if i == j { 4.0 + vals[k % 400] } else { vals[k % 400] };
                b.add(i, j, v).unwrap();
                k += 1;
            }
        }
        let x1 = b.lu().unwrap().solve(&rhs[..n]).unwrap();
        let x2 = dense_solve(&b.to_dense(), &rhs[..n]).unwrap();
        let err = x1.iter().zip(&x2).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        prop_assert!(err <= 1e-12 * (1.0 + max_abs(&x2)));
    }

    #[test]
    fn gmres_solves_dominant_systems(n in 2usize..50, vals in vec_strategy(2500), rhs in vec_strategy(50)) {
        let a = Dense::from_fn(n, n, |i, j| if i == j { n as f64 } else { vals[i * 50 + j] });
        let op = |v: &[f64]| a.matvec(v).unwrap();
        let (x, rep) = gmres(&op, &rhs[..n], 1e-12, 200, None).unwrap();
        prop_assert!(rep.converged);
        let r = a.matvec(&x).unwrap();
        let res = r.iter().zip(&rhs[..n]).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        prop_assert!(res <= 1e-9 * (1.0 + max_abs(&rhs[..n])));
    }

    #[test]
    fn ml_contour_agrees_with_series(gamma_ in 0.25f64..1.0, beta in 0.5f64..3.0, radius in 3.2f64..6.0, angle in 0.0f64..1.0) {
        // |z|^{1/γ} just past the switch, where the series is still accurate
        let r = radius.powf(gamma_);
        let th = std::f64::consts::PI * (1.0 - 0.5 * angle);
        let z = C64::from_polar(r, th);
        let contour = scalar_ml(gamma_, beta, z);
        let mut series = C64::new(0.0, 0.0);
        let mut zk = C64::new(1.0, 0.0);
        for k in 0..400 {
            series += zk / gamma(gamma_ * k as f64 + beta);
            zk *= z;
        }
        prop_assert!((contour - series).norm() <= 1e-10 * series.norm().max(1e-3), "{contour} {series}");
    }

    #[test]
    fn duhamel_power_identity(gamma_ in 0.2f64..0.95, nu in 0.5f64..4.0, q in 0.0f64..40.0, t in 0.2f64..3.0) {
        // ∫₀ᵗ (t−s)^{γ−1}E_{γ,γ}(−q(t−s)^γ) s^{ν−1} ds = Γ(ν) t^{γ+ν−1} E_{γ,γ+ν}(−q t^γ)
        // with (t−s) = t v^{1/γ} the left side is t^{γ+ν−1}/γ ∫₀¹ E_{γ,γ}(−q t^γ v)(1 − v^{1/γ})^{ν−1} dv
        let z = -q * t.powf(gamma_);
        let f = |v: f64| scalar_ml(gamma_, gamma_, C64::new(z * v, 0.0)).re;
        let upper = gauss_jacobi(60, nu - 1.0, 0.0);
        let mut acc = 0.0;
        for (x, w) in upper.nodes.iter().zip(&upper.weights) {
            let v = 0.75 + 0.25 * x;
            let smooth = ((1.0 - v.powf(1.0 / gamma_)) / (1.0 - v)).powf(nu - 1.0);
            acc += w * f(v) * smooth;
        }
        acc *= 0.25f64.powf(nu);
        // v^{1/γ} is only finitely smooth at 0: geometric panels
        let gl = gauss_jacobi(20, 0.0, 0.0);
        for k in 1..60 {
            let (a, b) = (0.5f64.powi(k + 1), 0.5f64.powi(k));
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let v = 0.5 * (a + b) + 0.5 * (b - a) * x;
                acc += 0.5 * (b - a) * w * f(v) * (1.0 - v.powf(1.0 / gamma_)).powf(nu - 1.0);
            }
        }
        let lhs = t.powf(gamma_ + nu - 1.0) / gamma_ * acc;
        let rhs = gamma(nu) * t.powf(gamma_ + nu - 1.0) * scalar_ml(gamma_, gamma_ + nu, C64::new(-q * t.powf(gamma_), 0.0)).re;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-3), "{lhs} {rhs}");
    }

    #[test]
    fn piecewise_source_telescopes(c in vec_strategy(3), pieces in 1usize..9, sigma in 0.5f64..200.0) {
        // one quadratic written on 1 or on `pieces` intervals gives the same source term
        let f = |s: f64| c[0] + c[1] * s + c[2] * s * s;
        let t = 1.3;
        let one = PiecewisePoly::interpolate(&f, vec![0.0, t], 2).unwrap();
        let many = PiecewisePoly::interpolate(&f, (0..=pieces).map(|i| t * i as f64 / pieces as f64).collect(), 2).unwrap();
        let m = Dense::from_fn(1, 1, |_, _| 1.0);
        let s = Dense::from_fn(1, 1, |_, _| sigma);
        let pencil = DensePencil::new(m, s).unwrap();
        let integ = MlIntegrator::new(0.6, 1.0, 1.0, &pencil, RuleSet::Cf(cf_nodes(16).unwrap())).unwrap();
        let a = source_piecewise(&integ, &one, &[1.0]).unwrap()[0];
        let b = source_piecewise(&integ, &many, &[1.0]).unwrap()[0];
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} {b}");
    }
}

#[test]
fn homogeneous_solution_is_stable_for_random_data() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let basis = Basis::linear(UniformMesh::unit(5).unwrap());
    let pencil = BandedPencil::new(assemble_mass(&basis), assemble_laplacian(&basis)).unwrap();
    let integ = MlIntegrator::new(0.6, 1.0, 1.0, &pencil, RuleSet::Cf(cf_nodes(16).unwrap())).unwrap();
    let spec = TimeModelSpec { gamma: 0.6, lambda: 0.5, k: 1.0, horizon: 1.0 };
    for _ in 0..50 {
        let g: Vec<f64> = (0..pencil.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gmv = pencil.mass.matvec(&g).unwrap();
        let t = rng.gen_range(0.01..2.0);
        solve_homogeneous(&spec, &integ, &gmv, t).unwrap();
    }
}
