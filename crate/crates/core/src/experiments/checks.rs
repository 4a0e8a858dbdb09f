//! Per-instance verification of the estimation theory: PH/GLP equivalence,
//! the RSI bound chain, the expected-RSI formula and the bias trend.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_measurement_matrix, build_transform, BasisConfig, BasisKind};
use crate::canceller::{decompose_rsi_powers, ls_estimate, reconstruct, LsEstimator, TruthBundle};
use crate::error::Result;
use crate::linalg::LsSolver;
use crate::pilot::{bire_bound, gram_spectrum, nire_bounds, trace_inverse_bounds};
use crate::rng::{stream_rng, Stream};
use crate::signals::{gaussian_sequence, ComplexSequence};

use super::config::ExperimentConfig;
use super::sim::{noise_realization, propagate, truth_weights, Frontend, Phase, Scenario, TrialChannels, TruthModel};
use super::table::summarize;

/// Relative slack for inequalities that hold exactly in exact arithmetic.
pub const ROUND_OFF: f64 = 1e-9;

/// Pilot length of the equivalence instances.
pub const EQUIVALENCE_PILOT_LENGTH: usize = 512;

fn rel_err(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// PH versus GLP canceller on one random instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalenceOutcome {
    pub order: usize,
    pub memory: usize,
    /// `||Phi_d w - Psi_d w~|| / ||Phi_d w||`.
    pub output_error: f64,
    /// `||w~ - T^{-1} w|| / ||w~||`.
    pub weight_error: f64,
}

/// Random order `P <= 9`, memory `L_h <= 8`, Gaussian pilot and data and an
/// arbitrary received vector.
pub fn equivalence_instance(seed: u64, index: u64) -> Result<EquivalenceOutcome> {
    let mut rng = stream_rng(seed, Stream::Instance, index, 0);
    let order = 2 * rng.random_range(0..5usize) + 1;
    let memory = rng.random_range(0..=8usize);
    let ph = BasisConfig::new(order, memory, BasisKind::Ph)?;
    let glp = ph.with_kind(BasisKind::Glp);
    let xp = gaussian_sequence(&mut rng, EQUIVALENCE_PILOT_LENGTH)?;
    let xd = gaussian_sequence(&mut rng, EQUIVALENCE_PILOT_LENGTH)?;
    let r = gaussian_sequence(&mut rng, EQUIVALENCE_PILOT_LENGTH - memory)?;
    let w = ls_estimate(&build_measurement_matrix(&xp, &ph)?, &r)?;
    let w_glp = ls_estimate(&build_measurement_matrix(&xp, &glp)?, &r)?;
    let y_ph = reconstruct(&build_measurement_matrix(&xd, &ph)?, &w, 0)?;
    let y_glp = reconstruct(&build_measurement_matrix(&xd, &glp)?, &w_glp, 0)?;
    let t = build_transform(&glp)?;
    let w_mapped = t.solve(&w.column(0));
    Ok(EquivalenceOutcome {
        order,
        memory,
        output_error: (&y_ph - &y_glp).norm() / y_ph.norm(),
        weight_error: rel_err(&w_mapped, &w_glp.column(0)),
    })
}

/// Margins of the bound chain on one instance; every margin is
/// `(upper - lower) / |upper|` and must be `>= -ROUND_OFF`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundOutcome {
    pub order: usize,
    pub memory: usize,
    pub pilot_length: usize,
    /// Four-term bound versus the exact expected RSI.
    pub rsi_bound: f64,
    /// Rayleigh BIRE bound versus the measured BIRE energy.
    pub bire_bound: f64,
    /// `tr(G_p^{-1} G_d)` against its lower and upper bounds.
    pub nire_lower: f64,
    pub nire_upper: f64,
    /// `tr(G_p^{-1})` against the trace/condition bounds.
    pub trace_lower: f64,
    pub trace_upper: f64,
    /// `tr(G_p^{-1}) <= L_w / lambda_min(G_p)`.
    pub identity_form: f64,
}

impl BoundOutcome {
    pub fn margins(&self) -> [(&'static str, f64); 7] {
        [
            ("rsi_bound_ordering", self.rsi_bound),
            ("bire_rayleigh_bound", self.bire_bound),
            ("nire_lower_bound", self.nire_lower),
            ("nire_upper_bound", self.nire_upper),
            ("trace_inverse_lower_bound", self.trace_lower),
            ("trace_inverse_upper_bound", self.trace_upper),
            ("trace_inverse_identity_form", self.identity_form),
        ]
    }
}

fn margin(lower: f64, upper: f64) -> f64 {
    (upper - lower) / upper.abs().max(f64::MIN_POSITIVE)
}

/// One random RAPP scenario: order, memory, pilot length, drive and channel
/// are drawn per instance.
pub fn bound_instance(config: &ExperimentConfig, index: u64) -> Result<BoundOutcome> {
    let seed = config.master_seed;
    let mut rng = stream_rng(seed, Stream::Instance, index, 1);
    let order = 2 * rng.random_range(0..5usize) + 1;
    let memory = rng.random_range(1..=8usize);
    let cfg = BasisConfig::new(order, memory, BasisKind::Glp)?;
    let min_len = cfg.weight_count() + memory + 16;
    let pilot_length = rng.random_range(min_len..=min_len.max(600));
    let data_length = 512;
    let scenario = Scenario {
        memory,
        link: crate::frontend::LinkBudget {
            tx_power_dbm: rng.random_range(17.0..27.0),
            ..config.link()
        },
        truth: TruthModel::Rapp,
        ..config.scenario()
    };
    let frontend = Frontend::new(scenario, order, seed)?;
    let channels = TrialChannels::draw(&frontend, seed ^ 0x5eed, index)?;
    let xp = gaussian_sequence(&mut rng, pilot_length)?;
    let xd = gaussian_sequence(&mut rng, data_length)?;
    let rx_p = propagate(&frontend, &channels, std::slice::from_ref(&xp), Phase::Pilot, seed, index)?;
    let rx_d = propagate(&frontend, &channels, std::slice::from_ref(&xd), Phase::Data, seed, index)?;
    let psi_p = build_measurement_matrix(&xp, &cfg)?;
    let psi_d = build_measurement_matrix(&xd, &cfg)?;
    let est = LsEstimator::new(&psi_p)?;
    let weights = est.estimate(&rx_p.noisy[0])?.with_run_id(index);
    let residual = crate::canceller::cancel(&psi_d, &weights, &rx_d.noisy[0])?;
    let w_true = truth_weights(&frontend, &channels, &cfg, 0)?;
    let trunc_pilot = &rx_p.noiseless[0] - &psi_p.entries * &w_true;
    let trunc_energy = trunc_pilot.norm_squared();
    let truth = TruthBundle {
        run_id: index,
        weights: w_true.clone(),
        pilot_solver: est.solver().clone(),
        data_matrix: psi_d.entries.clone(),
        trunc_data: &rx_d.noiseless[0] - &psi_d.entries * &w_true,
        trunc_pilot,
        noise_power: channels.equivalent_noise(&frontend, 0),
        data_noise: Some(rx_d.noise[0].clone()),
        nire_trace: None,
        rx_power: rx_d.rx_power(0),
    };
    let powers = decompose_rsi_powers(&truth, &weights, &residual)?;
    let sp = gram_spectrum(&psi_p)?;
    let sd = gram_spectrum(&psi_d)?;
    let ld = psi_d.rows() as f64;
    let trace = est.solver().trace_inverse_gram_with(&psi_d.entries)?;
    let (lo, hi) = nire_bounds(&sp, &sd)?;
    let (tlo, thi) = trace_inverse_bounds(&sp);
    let tr_inv = est.solver().trace_inverse_gram();
    Ok(BoundOutcome {
        order,
        memory,
        pilot_length,
        rsi_bound: margin(powers.analytic_expected, powers.bound),
        bire_bound: margin(powers.bire * ld, bire_bound(&sp, &sd, trunc_energy)?),
        nire_lower: margin(lo, trace),
        nire_upper: margin(trace, hi),
        trace_lower: margin(tlo, tr_inv),
        trace_upper: margin(tr_inv, thi),
        identity_form: margin(tr_inv, cfg.weight_count() as f64 / sp.lambda_min),
    })
}

/// Monte-Carlo check of the expected RSI in a truncation-free scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedRsiOutcome {
    pub realizations: usize,
    /// Mean `||e_d||^2` over noise realizations.
    pub measured: f64,
    /// `rho (tr(G_p^{-1} G_d) + L~_d)` plus the (numerically zero) bias term.
    pub predicted: f64,
    pub relative_error: f64,
}

/// Fixed pilot, data and channel with a polynomial truth PA of the canceller
/// order and white Rx noise only; the noise is redrawn `realizations` times.
pub fn expected_rsi_check(config: &ExperimentConfig, order: usize, realizations: usize) -> Result<ExpectedRsiOutcome> {
    let seed = config.master_seed;
    let cfg = BasisConfig::new(order, config.memory, BasisKind::Glp)?;
    let scenario = Scenario {
        truth: TruthModel::Polynomial { order },
        link: crate::frontend::LinkBudget {
            tx_snr_db: f64::INFINITY,
            ..config.link()
        },
        ..config.scenario()
    };
    let frontend = Frontend::new(scenario, order, seed)?;
    let channels = TrialChannels::draw(&frontend, seed, 0)?;
    let xp = gaussian_sequence(&mut stream_rng(seed, Stream::Pilot, 0, 0), config.pilot_length())?;
    let xd = gaussian_sequence(&mut stream_rng(seed, Stream::Data, 0, 0), config.data_length())?;
    let psi_p = build_measurement_matrix(&xp, &cfg)?;
    let psi_d = build_measurement_matrix(&xd, &cfg)?;
    let est = LsEstimator::new(&psi_p)?;
    let clean_p = propagate(&frontend, &channels, std::slice::from_ref(&xp), Phase::Pilot, seed, 0)?.noiseless;
    let clean_d = propagate(&frontend, &channels, std::slice::from_ref(&xd), Phase::Data, seed, 0)?.noiseless;
    let w_true = truth_weights(&frontend, &channels, &cfg, 0)?;
    let rho = channels.equivalent_noise(&frontend, 0);
    let mut total = 0.0;
    let mut predicted = 0.0;
    for k in 0..realizations as u64 {
        let zp = &noise_realization(&frontend, &channels, xp.len(), Phase::Pilot, seed, k)?[0];
        let zd = &noise_realization(&frontend, &channels, xd.len(), Phase::Data, seed, k)?[0];
        let rp = ComplexSequence::new((&clean_p[0] + zp).iter().copied().collect())?;
        let rd = ComplexSequence::new((&clean_d[0] + zd).iter().copied().collect())?;
        let w = est.estimate(&rp)?.with_run_id(k);
        let e = crate::canceller::cancel(&psi_d, &w, &rd)?;
        total += e.energy();
        if k == 0 {
            let truth = TruthBundle {
                run_id: k,
                weights: w_true.clone(),
                pilot_solver: est.solver().clone(),
                data_matrix: psi_d.entries.clone(),
                trunc_pilot: &clean_p[0] - &psi_p.entries * &w_true,
                trunc_data: &clean_d[0] - &psi_d.entries * &w_true,
                noise_power: rho,
                data_noise: None,
                nire_trace: None,
                rx_power: rd.nominal_power(),
            };
            predicted = decompose_rsi_powers(&truth, &w, &e)?.analytic_expected * psi_d.rows() as f64;
        }
    }
    let measured = total / realizations as f64;
    Ok(ExpectedRsiOutcome {
        realizations,
        measured,
        predicted,
        relative_error: (measured - predicted).abs() / predicted,
    })
}

/// Median conditional bias at one pilot length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub pilot_length: usize,
    pub median_bias: f64,
}

/// `|| mean_noise(w~_hat) - w~ ||` with a fixed RAPP truth and channel,
/// medians over `bias_seeds` Gaussian pilots per length.
///
/// LS is linear in the received vector, so the noise average of the
/// estimates equals the estimate from the noise-averaged received vector.
pub fn bias_trend(config: &ExperimentConfig) -> Result<Vec<BiasPoint>> {
    let seed = config.master_seed;
    let cfg = BasisConfig::new(config.order, config.memory, BasisKind::Glp)?;
    let frontend = Frontend::new(config.scenario(), config.order, seed)?;
    let channels = TrialChannels::draw(&frontend, seed, 0)?;
    let w_true = truth_weights(&frontend, &channels, &cfg, 0)?;
    let realizations = config.bias_realizations as u64;
    let mut out = Vec::with_capacity(config.bias_lengths.len());
    for (li, &len) in config.bias_lengths.iter().enumerate() {
        let mut biases = Vec::with_capacity(config.bias_seeds);
        for s in 0..config.bias_seeds as u64 {
            let trial_base = (li as u64 * config.bias_seeds as u64 + s) * realizations;
            let xp = gaussian_sequence(&mut stream_rng(seed, Stream::Pilot, trial_base, 1), len)?;
            let psi_p = build_measurement_matrix(&xp, &cfg)?;
            let clean = propagate(&frontend, &channels, std::slice::from_ref(&xp), Phase::Pilot, seed, trial_base)?
                .noiseless
                .remove(0);
            let mut mean_noise = DVector::zeros(clean.len());
            for r in 0..realizations {
                mean_noise += &noise_realization(&frontend, &channels, len, Phase::Pilot, seed, trial_base + r)?[0];
            }
            mean_noise /= Complex64::new(realizations as f64, 0.0);
            let rhs: Vec<Complex64> = (&clean + mean_noise).iter().copied().collect();
            let (w_mean, _) = LsSolver::new(&psi_p.entries)?.solve(&rhs)?;
            biases.push((w_mean - &w_true).norm());
        }
        let median = summarize(biases).map(|s| s.median).unwrap_or(f64::NAN);
        out.push(BiasPoint {
            pilot_length: len,
            median_bias: median,
        });
    }
    Ok(out)
}

/// Whether the medians strictly decrease along the sweep.
pub fn strictly_decreasing(points: &[BiasPoint]) -> bool {
    points.windows(2).all(|w| w[1].median_bias < w[0].median_bias)
}

/// One aggregated verification row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub instances: usize,
    pub violations: usize,
    /// Smallest margin, largest error or largest ratio, depending on the check.
    pub worst_value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// All bound-check rows.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheckReport {
    pub rows: Vec<CheckRow>,
    pub bias: Vec<BiasPoint>,
}

impl BoundCheckReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn min_margin_row(name: &str, margins: &[f64]) -> CheckRow {
    let violations = margins.iter().filter(|&&m| !(m >= -ROUND_OFF)).count();
    CheckRow {
        check: name.to_string(),
        instances: margins.len(),
        violations,
        worst_value: margins.iter().copied().fold(f64::INFINITY, f64::min),
        threshold: -ROUND_OFF,
        passed: violations == 0,
    }
}

fn max_error_row(name: &str, errors: &[f64], threshold: f64) -> CheckRow {
    let violations = errors.iter().filter(|&&e| !(e < threshold)).count();
    CheckRow {
        check: name.to_string(),
        instances: errors.len(),
        violations,
        worst_value: errors.iter().copied().fold(0.0, f64::max),
        threshold,
        passed: violations == 0,
    }
}

/// Equivalence tolerance for outputs and transformed weights.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;

/// Relative tolerance of the expected-RSI Monte-Carlo match.
pub const EXPECTED_RSI_TOLERANCE: f64 = 0.05;

/// Run every verification and collect pass/fail rows.
pub fn run_bound_check(config: &ExperimentConfig) -> Result<BoundCheckReport> {
    config.validate()?;
    let n = config.bound_instances as u64;
    let mut rows = Vec::new();

    let eq = (0..n)
        .map(|i| equivalence_instance(config.master_seed, i))
        .collect::<Result<Vec<_>>>()?;
    rows.push(max_error_row(
        "equivalence_output",
        &eq.iter().map(|o| o.output_error).collect::<Vec<_>>(),
        EQUIVALENCE_TOLERANCE,
    ));
    rows.push(max_error_row(
        "equivalence_weights",
        &eq.iter().map(|o| o.weight_error).collect::<Vec<_>>(),
        EQUIVALENCE_TOLERANCE,
    ));

    let bounds = (0..n).map(|i| bound_instance(config, i)).collect::<Result<Vec<_>>>()?;
    for k in 0..7 {
        let name = bounds.first().map(|b| b.margins()[k].0).unwrap_or("bound");
        let margins: Vec<f64> = bounds.iter().map(|b| b.margins()[k].1).collect();
        rows.push(min_margin_row(name, &margins));
    }

    let rsi = expected_rsi_check(config, config.order, config.noise_realizations)?;
    rows.push(max_error_row("expected_rsi_match", &[rsi.relative_error], EXPECTED_RSI_TOLERANCE));

    let bias = bias_trend(config)?;
    let worst_ratio = bias
        .windows(2)
        .map(|w| w[1].median_bias / w[0].median_bias)
        .fold(0.0, f64::max);
    rows.push(CheckRow {
        check: "bias_trend_decreasing".into(),
        instances: bias.len(),
        violations: bias.windows(2).filter(|w| !(w[1].median_bias < w[0].median_bias)).count(),
        worst_value: worst_ratio,
        threshold: 1.0,
        passed: strictly_decreasing(&bias),
    });
    Ok(BoundCheckReport { rows, bias })
}
