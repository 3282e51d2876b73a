//! Frozen high-precision reference values. Regenerate with
//! `python3 tests/oracles/gen_oracles.py`.

use num_complex::Complex64 as C64;
use tfde_core::mittag_leffler::scalar_ml;
use tfde_core::special::{gamma, lower_incomplete_gamma};
use tfde_core::tempered_calculus::{left_tempered_integral, right_tempered_integral, Interval, TemperParams};

// (gamma, beta, re z, im z, re E, im E)
const ML: [(f64, f64, f64, f64, f64, f64); 12] = [
    (0.5, 1.0, -10.0, 0.0, 0.056140992743822585858, 0.0),
    (0.6, 1.0, -30.0, 0.0, 0.015211431482801457494, 0.0),
    (0.3, 1.3, -8.0, 0.0, 0.11381336302267241278, 0.0),
    (0.8, 4.6, -7.5, 0.0, 0.021339473301474611058, 0.0),
    (0.6, 0.6, -50.0, 0.0, 0.00010979389735394112334, 0.0),
    (0.6, 1.6, -5.0, 3.0, 0.14073280808079225304, 0.075822502636294571711),
    (0.9, 1.0, -20.0, -20.0, 0.0026135119628364354017, -0.0028579246668185436927),
    (0.3, 1.0, 1.2, 0.4, -4.0582262192043275161, 9.1806037881333298531),
    (0.7, 2.1, 4.0, 0.0, 226.45553586007260254, 0.0),
    (1.0, 1.0, -40.0, 0.0, 4.2483542552915889953e-18, 0.0),
    (1.0, 3.0, -25.0, 0.0, 0.03840000000002222071, 0.0),
    (0.4, 1.4, -2.0, 9.0, 0.030527966925218660558, 0.10229607545430821164),
];

#[test]
fn mittag_leffler_matches_high_precision_series() {
    for &(g, b, x, y, re, im) in &ML {
        let v = scalar_ml(g, b, C64::new(x, y));
        let exact = C64::new(re, im);
        let rel = (v - exact).norm() / exact.norm();
        assert!(rel <= 1e-12, "E_{{{g},{b}}}({x}+{y}i): {v} vs {exact}, rel {rel:e}");
    }
}

#[test]
fn incomplete_gamma_and_gamma() {
    let inc = [
        (0.5, 2.0, 1.6918067329451983365),
        (2.5, 0.7, 0.10061342331384050844),
        (1.3, 12.0, 0.8974574407338404422),
        (7.0, 3.0, 24.126145422365668978),
    ];
    for (a, x, v) in inc {
        let got = lower_incomplete_gamma(a, x);
        assert!((got - v).abs() <= 1e-13 * v, "gamma_inc({a},{x}) = {got}, want {v}");
    }
    let full = [
        (0.1, 9.5135076986687312858),
        (0.5, 1.7724538509055160273),
        (1.5, 0.88622692545275801365),
        (2.3, 1.1667119051981602207),
        (4.6, 13.381285870932442636),
        (10.5, 1133278.3889487855673),
        (-0.4, -3.7229806220320426767),
        (-2.7, -0.93108278483896396546),
    ];
    for (x, v) in full {
        let got = gamma(x);
        assert!((got - v).abs() <= 1e-13 * v.abs(), "gamma({x}) = {got}, want {v}");
    }
}

#[test]
fn tempered_integral_examples() {
    let iv = Interval::unit();
    let one = |_: f64| 1.0;
    let v = left_tempered_integral(&one, iv, TemperParams::new(0.5, 0.0).unwrap(), 1.0).unwrap();
    assert!((v - 1.0 / gamma(1.5)).abs() < 1e-12);
    // γ_inc(1/2, 2)/(√2 Γ(1/2))
    let v = left_tempered_integral(&one, iv, TemperParams::new(0.5, 2.0).unwrap(), 1.0).unwrap();
    let want = 1.6918067329451983365 / (2f64.sqrt() * gamma(0.5));
    assert!((v - want).abs() < 1e-13, "{v} {want}");
    let v = right_tempered_integral(&|x: f64| (-x).exp(), iv, TemperParams::new(0.7, 1.0).unwrap(), 0.3).unwrap();
    assert!((v - 0.38767192812373061768).abs() < 1e-10, "{v}");
}
