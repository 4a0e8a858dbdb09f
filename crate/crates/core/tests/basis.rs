use dsic_core::basis::{
    build_measurement_matrix, build_transform, coeff_l, laguerre_l1, phi, psi, psi_via_monomials, BasisConfig, BasisKind,
};
use dsic_core::rng::seeded;
use dsic_core::signals::{gaussian_samples, gen_gaussian_sequence, ComplexSequence};
use dsic_core::{Complex64, Error};
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binom(n: u64, k: u64) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn laguerre_oracle(i: u64, t: f64) -> f64 {
    (0..=i)
        .map(|k| (-1f64).powi(k as i32) / factorial(k) * binom(i + 1, k + 1) * t.powi(k as i32))
        .sum()
}

fn coeff_oracle(p: u64, q: u64) -> f64 {
    let k = (q - 1) / 2;
    (2.0 / (p + 1) as f64).sqrt() * (-1f64).powi(k as i32) / factorial(k) * binom(p.div_ceil(2), q.div_ceil(2))
}

#[test]
fn laguerre_matches_explicit_sum() {
    for i in 0..=10u64 {
        for &t in &[0.0, 0.3, 1.0, 2.5, 7.0, 16.0] {
            let got = laguerre_l1(i as i64, t).unwrap();
            let want = laguerre_oracle(i, t);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "L_{i}({t}): {got} vs {want}");
        }
    }
    assert!((laguerre_l1(1, 0.7).unwrap() - 1.3).abs() < 1e-15);
    assert!(laguerre_l1(-1, 1.0).is_err());
}

#[test]
fn laguerre_weighted_orthogonality() {
    let w = |f: &dyn Fn(f64) -> f64| simpson(|t| f(t) * t * (-t).exp(), 0.0, 80.0, 40_000);
    let l1 = |t: f64| laguerre_l1(1, t).unwrap();
    let l2 = |t: f64| laguerre_l1(2, t).unwrap();
    assert!(w(&|t| l1(t) * l2(t)).abs() < 1e-9);
    assert!((w(&|t| l1(t) * l1(t)) - 2.0).abs() < 1e-9);
}

#[test]
fn coefficients_match_closed_form() {
    for p in (1..=11u64).step_by(2) {
        for q in (1..=p).step_by(2) {
            let got = coeff_l(p as usize, q as usize).unwrap();
            assert!((got - coeff_oracle(p, q)).abs() < 1e-12, "l_{p},{q}");
        }
    }
    assert!((coeff_l(3, 1).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!((coeff_l(3, 3).unwrap() + 0.5f64.sqrt()).abs() < 1e-12);
    assert!(coeff_l(1, 3).is_err());
    assert!(coeff_l(2, 1).is_err());
}

/// `E[psi_p psi_q^*]` under CN(0,1) reduces to a one-dimensional integral
/// over `t = |x|^2 ~ Exp(1)`.
#[test]
fn glp_orthonormal_by_quadrature() {
    for p in (1..=11).step_by(2) {
        for q in (1..=11).step_by(2) {
            let e = simpson(
                |t| (psi(Complex64::new(t.sqrt(), 0.0), p).unwrap() * psi(Complex64::new(t.sqrt(), 0.0), q).unwrap()).re
                    * (-t).exp(),
                0.0,
                120.0,
                120_000,
            );
            let target = if p == q { 1.0 } else { 0.0 };
            assert!((e - target).abs() < 1e-8, "E[psi_{p} psi_{q}] = {e}");
        }
    }
}

/// Monte-Carlo Gram entries lie within five standard errors of the identity,
/// with the standard error estimated from the same samples.
#[test]
fn glp_orthonormal_monte_carlo_within_sampling_error() {
    const N: usize = 200_000;
    let x = gaussian_samples(&mut seeded(21), N);
    let orders = [1, 3, 5, 7, 9];
    for &p in &orders {
        for &q in &orders {
            let prods: Vec<Complex64> = x.iter().map(|&s| psi(s, p).unwrap() * psi(s, q).unwrap().conj()).collect();
            let mean = prods.iter().sum::<Complex64>() / N as f64;
            let var = prods.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (N - 1) as f64;
            let se = (var / N as f64).sqrt();
            let target = if p == q { 1.0 } else { 0.0 };
            assert!((mean - target).norm() < 5.0 * se, "({p},{q}): {mean} with SE {se}");
        }
    }
}

#[test]
fn empirical_gram_converges_to_identity() {
    let cfg = BasisConfig::new(5, 2, BasisKind::Glp).unwrap();
    let dev = |len: usize| {
        let m = build_measurement_matrix(&gen_gaussian_sequence(len, 5).unwrap(), &cfg).unwrap();
        let g = m.entries.adjoint() * &m.entries / Complex64::new(m.rows() as f64, 0.0);
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - t).norm());
            }
        }
        worst
    };
    assert!(dev(1 << 14) < dev(1 << 10));
}

#[test]
fn measurement_matrix_examples() {
    let cfg = BasisConfig::new(3, 1, BasisKind::Ph).unwrap();
    let zeros = ComplexSequence::new(vec![Complex64::new(0.0, 0.0); 6]).unwrap();
    let m = build_measurement_matrix(&zeros, &cfg).unwrap();
    assert_eq!((m.rows(), m.columns()), (5, 4));
    assert!(m.entries.iter().all(|v| v.norm() == 0.0));

    let iq = BasisConfig::new(3, 0, BasisKind::PhIq).unwrap();
    let x = gen_gaussian_sequence(8, 1).unwrap();
    assert_eq!(build_measurement_matrix(&x, &iq).unwrap().columns(), 6);

    let short = gen_gaussian_sequence(2, 1).unwrap();
    assert!(build_measurement_matrix(&short, &BasisConfig::new(1, 2, BasisKind::Ph).unwrap()).is_err());
    assert!(matches!(build_transform(&iq), Err(Error::Unsupported(_))));
}

fn odd_order() -> impl Strategy<Value = usize> {
    (0usize..6).prop_map(|k| 2 * k + 1)
}

proptest! {
    #[test]
    fn psi_forms_agree(p in odd_order(), r in 0.0f64..4.0, th in 0.0f64..6.3) {
        let x = Complex64::from_polar(r, th);
        let a = psi(x, p).unwrap();
        let b = psi_via_monomials(x, p).unwrap();
        // The monomial sum cancels heavily for large |x|; bound by its term sizes.
        let terms: f64 = (1..=p).step_by(2).map(|q| coeff_l(p, q).unwrap().abs() * r.powi(q as i32)).sum();
        prop_assert!((a - b).norm() <= 1e-13 * terms.max(1.0));
    }

    #[test]
    fn phi_is_power_law(p in odd_order(), r in 0.0f64..3.0, th in 0.0f64..6.3) {
        let x = Complex64::from_polar(r, th);
        let want = x * r.powi(p as i32 - 1);
        prop_assert!((phi(x, p).unwrap() - want).norm() <= 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn glp_matrix_is_ph_matrix_times_transform(
        p in odd_order(),
        memory in 0usize..5,
        seed in any::<u64>(),
    ) {
        let ph = BasisConfig::new(p, memory, BasisKind::Ph).unwrap();
        let glp = ph.with_kind(BasisKind::Glp);
        let x = gen_gaussian_sequence(64, seed).unwrap();
        let phi_m = build_measurement_matrix(&x, &ph).unwrap();
        let psi_m = build_measurement_matrix(&x, &glp).unwrap();
        let t = build_transform(&glp).unwrap();
        let prod = &phi_m.entries * t.entries();
        let err = (&prod - &psi_m.entries).norm() / psi_m.entries.norm();
        prop_assert!(err < 1e-10);
        prop_assert_eq!(psi_m.rows(), 64 - memory);
        prop_assert_eq!(psi_m.columns(), (p + 1) * (memory + 1) / 2);
    }

    #[test]
    fn rows_hold_delayed_basis_values(p in odd_order(), memory in 0usize..4, seed in any::<u64>()) {
        let cfg = BasisConfig::new(p, memory, BasisKind::Glp).unwrap();
        let x = gen_gaussian_sequence(20, seed).unwrap();
        let m = build_measurement_matrix(&x, &cfg).unwrap();
        let b = p.div_ceil(2);
        for row in 0..m.rows() {
            let n = row + memory;
            for l in 0..=memory {
                for k in 0..b {
                    let want = psi(x.samples()[n - l], 2 * k + 1).unwrap();
                    prop_assert!((m.entries[(row, l * b + k)] - want).norm() < 1e-12);
                }
            }
        }
    }
}
