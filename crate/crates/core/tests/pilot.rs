use dsic_core::basis::{build_measurement_matrix, BasisConfig, BasisKind};
use dsic_core::linalg::hermitian_eigenvalues;
use dsic_core::pilot::{
    bire_bound, criterion, ensemble_member, evaluate_candidate, gram_spectrum, nire_bounds, select_pilot,
    select_pilot_with_diagnostics, shannon_rank, trace_inverse_bounds, GramSpectrum, PilotDistribution,
};
use dsic_core::rng::seeded;
use dsic_core::signals::{gaussian_samples, gen_gaussian_sequence};
use dsic_core::{Complex64, Error};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Entropy of the normalized spectrum, computed in nats and converted.
fn rank_oracle(l: &[f64]) -> f64 {
    let t: f64 = l.iter().sum();
    let h: f64 = l.iter().filter(|&&v| v > 0.0).map(|&v| -(v / t) * (v / t).ln()).sum();
    h.exp()
}

fn random_psd(n: usize, rows: usize, seed: u64) -> DMatrix<Complex64> {
    let a = DMatrix::from_vec(rows, n, gaussian_samples(&mut seeded(seed), rows * n));
    a.adjoint() * a
}

fn spectrum(n: usize, rows: usize, seed: u64) -> GramSpectrum {
    GramSpectrum::from_gram(random_psd(n, rows, seed)).unwrap()
}

#[test]
fn shannon_rank_known_values() {
    assert!((shannon_rank(&[1.0; 6]).unwrap() - 6.0).abs() < 1e-12);
    assert_eq!(shannon_rank(&[5.0, 0.0, 0.0]).unwrap(), 1.0);
    let want = rank_oracle(&[3.0, 1.0]);
    assert!((shannon_rank(&[3.0, 1.0]).unwrap() - want).abs() < 1e-12);
    assert!((want - 1.7548).abs() < 1e-4);
    assert!(shannon_rank(&[]).is_err());
    assert!(shannon_rank(&[0.0, 0.0]).is_err());
    assert!(matches!(shannon_rank(&[1.0, -0.5]), Err(Error::NotPsd { .. })));
}

#[test]
fn identity_gram_metrics() {
    let s = GramSpectrum::from_gram(DMatrix::identity(5, 5)).unwrap();
    assert!((s.shannon_rank - 5.0).abs() < 1e-12);
    assert!((criterion(&s) - 5.0).abs() < 1e-12);
    assert_eq!(trace_inverse_bounds(&s), (5.0, 5.0));
}

#[test]
fn bire_bound_scales_with_truncation_energy() {
    let p = spectrum(4, 30, 1);
    let d = spectrum(4, 60, 2);
    let b1 = bire_bound(&p, &d, 1.0).unwrap();
    let want = d.lambda_max * p.lambda_max / (p.lambda_min * p.lambda_min);
    assert!((b1 / want - 1.0).abs() < 1e-12);
    assert!((bire_bound(&p, &d, 3.0).unwrap() / b1 - 3.0).abs() < 1e-12);
    assert_eq!(bire_bound(&p, &d, 0.0).unwrap(), 0.0);

    let singular = GramSpectrum::from_gram(DMatrix::from_diagonal_element(3, 3, Complex64::new(0.0, 0.0)));
    assert!(singular.is_err() || bire_bound(&singular.unwrap(), &d, 1.0).is_err());
}

#[test]
fn selection_is_deterministic() {
    let cfg = BasisConfig::new(5, 3, BasisKind::Glp).unwrap();
    let a = select_pilot(16, 128, PilotDistribution::Gaussian, &cfg, 42).unwrap();
    let b = select_pilot(16, 128, PilotDistribution::Gaussian, &cfg, 42).unwrap();
    assert_eq!(a.sequence, b.sequence);
    assert_eq!(a.ensemble_index, b.ensemble_index);

    let (best, rows) = select_pilot_with_diagnostics(16, 128, PilotDistribution::Gaussian, &cfg, 42).unwrap();
    assert_eq!(rows.len(), 16);
    let top = rows.iter().map(|r| r.criterion).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.criterion_value, top);
    assert_eq!(best.sequence, ensemble_member(PilotDistribution::Gaussian, 128, 42, best.ensemble_index).unwrap());
}

#[test]
fn identical_candidates_keep_lowest_index() {
    let cfg = BasisConfig::new(3, 1, BasisKind::Glp).unwrap();
    let x = gen_gaussian_sequence(64, 3).unwrap();
    let picks: Vec<_> = (0..4).map(|i| evaluate_candidate(x.clone(), &cfg, 3 - i).unwrap()).collect();
    let best = dsic_core::pilot::best_candidate(picks).unwrap();
    assert_eq!(best.ensemble_index, 0);
}

/// The selected pilot yields a noise-induced error no worse than the median
/// ensemble member, judged by `tr(G_p^{-1} G_d)` on a fixed data sequence.
#[test]
fn selected_pilot_beats_ensemble_median_nire() {
    let cfg = BasisConfig::new(7, 5, BasisKind::Glp).unwrap();
    let (len, size) = (160, 64);
    let data = build_measurement_matrix(&gen_gaussian_sequence(2048, 99).unwrap(), &cfg).unwrap();
    let gd = gram_spectrum(&data).unwrap();
    let trace = |s: &GramSpectrum| {
        let inv = s.gram.clone().try_inverse().unwrap();
        (inv * &gd.gram).trace().re
    };
    let mut all: Vec<f64> = (0..size)
        .map(|i| {
            let x = ensemble_member(PilotDistribution::Gaussian, len, 5, i).unwrap();
            trace(&gram_spectrum(&build_measurement_matrix(&x, &cfg).unwrap()).unwrap())
        })
        .collect();
    let chosen = select_pilot(size, len, PilotDistribution::Gaussian, &cfg, 5).unwrap();
    let ours = trace(&chosen.spectrum);
    all.sort_by(f64::total_cmp);
    assert!(ours <= all[size / 2], "selected {ours} vs median {}", all[size / 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shannon_rank_matches_entropy(l in prop::collection::vec(0.0f64..10.0, 1..12)) {
        prop_assume!(l.iter().sum::<f64>() > 1e-6);
        let r = shannon_rank(&l).unwrap();
        prop_assert!((r - rank_oracle(&l)).abs() <= 1e-9 * r);
        let nonzero = l.iter().filter(|&&v| v > 0.0).count() as f64;
        prop_assert!(r >= 1.0 - 1e-12 && r <= nonzero + 1e-9);
    }

    #[test]
    fn shannon_rank_is_scale_and_order_invariant(
        l in prop::collection::vec(0.01f64..10.0, 1..12),
        c in 1e-6f64..1e6,
        rot in 0usize..12,
    ) {
        let r = shannon_rank(&l).unwrap();
        let scaled: Vec<f64> = l.iter().map(|v| v * c).collect();
        let mut perm = l.clone();
        perm.rotate_left(rot % l.len());
        prop_assert!((shannon_rank(&scaled).unwrap() - r).abs() <= 1e-9 * r);
        prop_assert!((shannon_rank(&perm).unwrap() - r).abs() <= 1e-9 * r);
    }

    #[test]
    fn averaging_spectra_does_not_lower_rank(
        l in prop::collection::vec(0.01f64..10.0, 6),
        m in prop::collection::vec(0.01f64..10.0, 6),
    ) {
        let sl: f64 = l.iter().sum();
        let sm: f64 = m.iter().sum();
        let avg: Vec<f64> = l.iter().zip(&m).map(|(a, b)| 0.5 * (a / sl + b / sm)).collect();
        let lo = shannon_rank(&l).unwrap().min(shannon_rank(&m).unwrap());
        prop_assert!(shannon_rank(&avg).unwrap() >= lo * (1.0 - 1e-12));
    }

    #[test]
    fn criterion_is_linear_in_scale(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let g = random_psd(4, 20, seed);
        let a = GramSpectrum::from_gram(g.clone()).unwrap();
        let b = GramSpectrum::from_gram(g * Complex64::new(c, 0.0)).unwrap();
        prop_assert!((criterion(&b) / criterion(&a) / c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trace_identity_and_inverse_bounds(seed in any::<u64>(), n in 1usize..7) {
        let g = random_psd(n, 3 * n + 4, seed);
        let s = GramSpectrum::from_gram(g.clone()).unwrap();
        let sum: f64 = hermitian_eigenvalues(&g).iter().sum();
        prop_assert!((s.trace - sum).abs() <= 1e-9 * s.trace);
        let exact = g.try_inverse().unwrap().trace().re;
        let (lo, hi) = trace_inverse_bounds(&s);
        prop_assert!(lo <= exact * (1.0 + 1e-9) && exact <= hi * (1.0 + 1e-9));
        prop_assert!((s.tr_inverse / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn nire_bounds_bracket_trace(seed in any::<u64>(), n in 1usize..7) {
        let gp = random_psd(n, 2 * n + 3, seed);
        let gd = random_psd(n, 4 * n, seed ^ 1);
        let exact = (gp.clone().try_inverse().unwrap() * &gd).trace().re;
        let (lo, hi) = nire_bounds(
            &GramSpectrum::from_gram(gp).unwrap(),
            &GramSpectrum::from_gram(gd).unwrap(),
        ).unwrap();
        prop_assert!(lo <= exact * (1.0 + 1e-9), "{lo} > {exact}");
        prop_assert!(exact <= hi * (1.0 + 1e-9), "{exact} > {hi}");
    }
}
