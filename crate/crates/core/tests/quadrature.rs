use map_replica::quadrature::{expect_gaussian, expect_tilted, integrate};
use map_replica::{GaussHermiteRule, LegendreRule};
use proptest::prelude::*;

// E|z|^k for a standard normal.
fn abs_moment(k: usize) -> f64 {
    let mut m = if k % 2 == 0 { 1.0 } else { (2.0 / std::f64::consts::PI).sqrt() };
    let mut j = k;
    while j >= 2 {
        m *= (j - 1) as f64;
        j -= 2;
    }
    m
}

fn poly(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * z + a)
}

proptest! {
    #[test]
    fn doubling_the_order_leaves_polynomials_unchanged(
        order in 4usize..24,
        coeffs in prop::collection::vec(-1.0f64..1.0, 25),
    ) {
        let c = &coeffs[..=order];
        let lo = GaussHermiteRule::new(order).unwrap();
        let hi = GaussHermiteRule::new(2 * order).unwrap();
        let a = expect_gaussian(|z| poly(c, z), &lo).unwrap();
        let b = expect_gaussian(|z| poly(c, z), &hi).unwrap();
        let scale: f64 = c.iter().enumerate().map(|(k, a)| a.abs() * abs_moment(k)).sum();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + scale), "{a} vs {b}");
    }

    #[test]
    fn tilted_expectation_ignores_tilt_scale(c in 1e-3f64..1e3, s in -2.0f64..2.0, m in -1.0f64..1.0) {
        let rule = GaussHermiteRule::new(61).unwrap();
        let f = |z: f64| (z + m).sin() + z * z;
        let tilt = |z: f64| (s * z - 0.1 * z * z).exp();
        let a = expect_tilted(f, tilt, &rule).unwrap();
        let b = expect_tilted(f, |z| c * tilt(z), &rule).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn legendre_is_exact_on_polynomials(
        coeffs in prop::collection::vec(-1.0f64..1.0, 20),
        lo in -3.0f64..0.0,
        len in 0.1f64..3.0,
    ) {
        let rule = LegendreRule::new(16).unwrap();
        let hi = lo + len;
        let got = integrate(|x| poly(&coeffs, x), lo, hi, &rule).unwrap();
        let anti = |x: f64| coeffs.iter().enumerate().rev().fold(0.0, |acc, (k, a)| acc * x + a / (k + 1) as f64) * x;
        let want = anti(hi) - anti(lo);
        let scale: f64 = coeffs.iter().enumerate().map(|(k, a)| a.abs() * 3f64.powi(k as i32 + 1)).sum();
        prop_assert!((got - want).abs() <= 1e-13 * (1.0 + scale), "{got} vs {want}");
    }
}
