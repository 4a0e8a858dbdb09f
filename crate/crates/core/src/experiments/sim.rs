//! Monte-Carlo link simulation: Tx chain, SI channel, noise and the
//! simulation-side truth used for the RSI decomposition.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::basis::{build_mimo_matrix, BasisConfig, BasisKind, MeasurementMatrix};
use crate::canceller::{
    decompose_rsi_powers, excess_power, separable_weights, LsEstimator, RsiPowers, TruthBundle, WeightVector,
};
use crate::error::{Error, Result};
use crate::frontend::{apply_channel, apply_iq_imbalance, gen_channel, fit_polynomial_pa, ChannelModel, LinkBudget, RappParams, Transmitter};
use crate::rng::{stream_rng, Stream};
use crate::signals::{gaussian_samples, ComplexSequence};
use crate::units::{dbm_to_mw, lin_to_db};

/// Samples used when fitting a polynomial truth PA.
const TRUTH_FIT_SAMPLES: usize = 200_000;

/// How the PA ground truth is generated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TruthModel {
    /// RAPP curve, infinite nonlinear order.
    Rapp,
    /// Odd polynomial of the given order fitted to the RAPP curve.
    Polynomial { order: usize },
}

/// Physical setup shared by every trial of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub rapp: RappParams,
    pub truth: TruthModel,
    pub link: LinkBudget,
    /// Channel memory `L_h` (taps minus one).
    pub memory: usize,
    pub delay_spread_taps: f64,
    pub asic_db: f64,
    /// Raw SI channel energy before A-SIC (negative antenna isolation).
    pub isolation_db: f64,
    /// Tx antennas; the system is square, one Rx chain per Tx antenna.
    pub antennas: usize,
    /// Tx I/Q imbalance; `None` for an ideal modulator.
    pub irr_db: Option<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.rapp.validate()?;
        self.link.validate()?;
        if self.antennas == 0 {
            return Err(Error::InvalidConfig("antenna count must be >= 1".into()));
        }
        if !(self.delay_spread_taps > 0.0) {
            return Err(Error::InvalidConfig("delay spread must be positive".into()));
        }
        if let Some(irr) = self.irr_db {
            if !(irr > 0.0) {
                return Err(Error::InvalidConfig(format!("IRR must be positive, got {irr} dB")));
            }
        }
        Ok(())
    }

    /// Per-antenna Tx power when the total is split over the array.
    pub fn per_antenna_power_dbm(&self) -> f64 {
        self.link.tx_power_dbm - lin_to_db(self.antennas as f64)
    }

    /// Per-antenna PA input power.
    pub fn drive_dbm(&self) -> f64 {
        self.per_antenna_power_dbm() - self.rapp.linear_gain_db
    }
}

/// Scenario with its PA response resolved, ready to run trials.
#[derive(Clone, Debug)]
pub struct Frontend {
    pub scenario: Scenario,
    pub tx: Transmitter,
    /// GLP coefficients of the PA response in digital units.
    glp: Vec<Complex64>,
    tx_noise_mw: f64,
    rx_noise_mw: f64,
}

impl Frontend {
    /// Resolve the truth PA and its GLP coefficients up to `max_order`.
    pub fn new(scenario: Scenario, max_order: usize, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let drive = scenario.drive_dbm();
        let tx = match scenario.truth {
            TruthModel::Rapp => Transmitter::rapp_at_output_power(scenario.rapp, scenario.per_antenna_power_dbm()),
            TruthModel::Polynomial { order } => {
                let fit = fit_polynomial_pa(&scenario.rapp, order, TRUTH_FIT_SAMPLES, drive, seed)?;
                Transmitter::new(fit.into_model(), drive)
            }
        };
        let glp = tx.glp_coefficients(max_order)?;
        let tx_noise_mw = dbm_to_mw(scenario.per_antenna_power_dbm() - scenario.link.tx_snr_db);
        let rx_noise_mw = scenario.link.rx_noise_mw();
        Ok(Self {
            scenario,
            tx,
            glp,
            tx_noise_mw,
            rx_noise_mw,
        })
    }

    pub fn antennas(&self) -> usize {
        self.scenario.antennas
    }

    /// GLP coefficients `c~_1 ... c~_P`.
    pub fn glp_coefficients(&self, order: usize) -> Result<&[Complex64]> {
        let b = order.div_ceil(2);
        self.glp.get(..b).ok_or(Error::InvalidConfig(format!(
            "truth coefficients were resolved up to order {}, not {order}",
            2 * self.glp.len() - 1
        )))
    }

    /// The I/Q modulator output for a digital sequence.
    pub fn modulate(&self, x: &ComplexSequence) -> Result<ComplexSequence> {
        match self.scenario.irr_db {
            Some(irr) => apply_iq_imbalance(x, irr),
            None => Ok(x.clone()),
        }
    }

    pub fn tx_noise_mw(&self) -> f64 {
        self.tx_noise_mw
    }

    pub fn rx_noise_mw(&self) -> f64 {
        self.rx_noise_mw
    }
}

/// The `M x M` SI channels of one trial, indexed `[tx * M + rx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialChannels {
    antennas: usize,
    links: Vec<ChannelModel>,
}

impl TrialChannels {
    pub fn draw(frontend: &Frontend, seed: u64, trial: u64) -> Result<Self> {
        let s = &frontend.scenario;
        let m = s.antennas;
        let links = (0..m * m)
            .map(|k| {
                gen_channel(
                    s.memory,
                    s.delay_spread_taps,
                    s.asic_db,
                    s.isolation_db,
                    &mut stream_rng(seed, Stream::Channel, trial, k as u64),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { antennas: m, links })
    }

    pub fn link(&self, tx: usize, rx: usize) -> &ChannelModel {
        &self.links[tx * self.antennas + rx]
    }

    /// Equivalent Rx noise power `rho_z~` at Rx antenna `rx`.
    pub fn equivalent_noise(&self, frontend: &Frontend, rx: usize) -> f64 {
        let energy: f64 = (0..self.antennas).map(|m| self.link(m, rx).energy()).sum();
        energy * frontend.tx_noise_mw() + frontend.rx_noise_mw()
    }
}

/// Which noise streams a transmission draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pilot,
    Data,
}

/// Received signal at every Rx antenna over the valid region.
#[derive(Clone, Debug)]
pub struct Received {
    pub noiseless: Vec<DVector<Complex64>>,
    /// Equivalent noise `z~` (Tx noise through the channel plus Rx noise).
    pub noise: Vec<DVector<Complex64>>,
    pub noisy: Vec<ComplexSequence>,
}

impl Received {
    pub fn rx_power(&self, rx: usize) -> f64 {
        self.noisy[rx].nominal_power()
    }
}

fn noise_vector(seed: u64, stream: Stream, trial: u64, sub: u64, len: usize, power: f64) -> Vec<Complex64> {
    if power == 0.0 {
        return vec![Complex64::new(0.0, 0.0); len];
    }
    let sigma = power.sqrt();
    gaussian_samples(&mut stream_rng(seed, stream, trial, sub), len)
        .into_iter()
        .map(|z| z * sigma)
        .collect()
}

/// Send one sequence per Tx antenna through the PA, channels and noise.
pub fn propagate(
    frontend: &Frontend,
    channels: &TrialChannels,
    tx_sequences: &[ComplexSequence],
    phase: Phase,
    seed: u64,
    trial: u64,
) -> Result<Received> {
    let m = frontend.antennas();
    if tx_sequences.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: tx_sequences.len(),
        });
    }
    let len = tx_sequences[0].len();
    let pa_out = tx_sequences
        .iter()
        .map(|x| Ok(frontend.tx.transmit(&frontend.modulate(x)?)))
        .collect::<Result<Vec<_>>>()?;
    let noise = noise_realization(frontend, channels, len, phase, seed, trial)?;
    let rows = len.saturating_sub(frontend.scenario.memory);
    let mut out = Received {
        noiseless: Vec::with_capacity(m),
        noise: Vec::with_capacity(m),
        noisy: Vec::with_capacity(m),
    };
    for (rx, z) in noise.into_iter().enumerate() {
        let mut clean = DVector::zeros(rows);
        for (tx, s) in pa_out.iter().enumerate() {
            clean += DVector::from_column_slice(apply_channel(s, channels.link(tx, rx))?.samples());
        }
        out.noisy.push(ComplexSequence::new((&clean + &z).iter().copied().collect())?);
        out.noiseless.push(clean);
        out.noise.push(z);
    }
    Ok(out)
}

/// Equivalent noise `z~` at every Rx antenna for a transmission of `len`
/// samples per Tx antenna.
pub fn noise_realization(
    frontend: &Frontend,
    channels: &TrialChannels,
    len: usize,
    phase: Phase,
    seed: u64,
    trial: u64,
) -> Result<Vec<DVector<Complex64>>> {
    let m = frontend.antennas();
    let (tx_stream, rx_stream) = match phase {
        Phase::Pilot => (Stream::TxNoisePilot, Stream::RxNoisePilot),
        Phase::Data => (Stream::TxNoiseData, Stream::RxNoiseData),
    };
    let rows = len.checked_sub(frontend.scenario.memory).filter(|&r| r > 0).ok_or(Error::SequenceTooShort {
        len,
        needed: frontend.scenario.memory + 1,
    })?;
    let tx_noise = if frontend.tx_noise_mw() > 0.0 {
        (0..m)
            .map(|k| ComplexSequence::new(noise_vector(seed, tx_stream, trial, k as u64, len, frontend.tx_noise_mw())))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    (0..m)
        .map(|rx| {
            let mut z = DVector::from_vec(noise_vector(seed, rx_stream, trial, rx as u64, rows, frontend.rx_noise_mw()));
            for (tx, zt) in tx_noise.iter().enumerate() {
                z += DVector::from_column_slice(apply_channel(zt, channels.link(tx, rx))?.samples());
            }
            Ok(z)
        })
        .collect()
}

/// Draw one CN(0, 1) sequence per Tx antenna from `stream`.
pub fn gaussian_per_antenna(seed: u64, stream: Stream, trial: u64, antennas: usize, len: usize) -> Result<Vec<ComplexSequence>> {
    (0..antennas)
        .map(|m| crate::signals::gaussian_sequence(&mut stream_rng(seed, stream, trial, m as u64), len))
        .collect()
}

/// Truth weights for Rx antenna `rx` in the column order of `config`.
pub fn truth_weights(frontend: &Frontend, channels: &TrialChannels, config: &BasisConfig, rx: usize) -> Result<DVector<Complex64>> {
    if config.kind != BasisKind::Glp {
        return Err(Error::Unsupported("truth weights exist only in the GLP basis"));
    }
    let coeffs = frontend.glp_coefficients(config.order)?;
    let mut blocks = Vec::with_capacity(config.columns());
    for tx in 0..config.antennas {
        blocks.extend(separable_weights(coeffs, &channels.link(tx, rx).taps).iter().copied());
    }
    Ok(DVector::from_vec(blocks))
}

/// Per-trial metrics averaged (in mW) over the Rx antennas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialMetrics {
    pub rsi: f64,
    pub reconstruction: f64,
    pub noise: f64,
    pub truncation: Option<f64>,
    pub bire: Option<f64>,
    pub nire: Option<f64>,
    pub analytic_expected: Option<f64>,
    pub bound: Option<f64>,
    pub rx_power: f64,
    pub criterion: f64,
}

impl TrialMetrics {
    pub fn cancellation_db(&self) -> f64 {
        lin_to_db(self.rx_power / self.rsi)
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Everything a canceller needs about the data phase of one trial.
pub struct DataSide<'a> {
    pub channels: &'a TrialChannels,
    pub matrix: &'a MeasurementMatrix,
    pub received: &'a Received,
}

/// Estimate from the received pilot, cancel on the data and decompose.
///
/// The decomposition is only available for the GLP basis without I/Q
/// imbalance; otherwise only the measured RSI, its noise-free part and the
/// noise level are reported.
pub fn evaluate_canceller(
    frontend: &Frontend,
    estimator: &LsEstimator,
    rx_pilot: &Received,
    data: &DataSide<'_>,
    run_id: u64,
    criterion: f64,
) -> Result<TrialMetrics> {
    let cfg = estimator.basis();
    let weights = estimator.estimate_many(&rx_pilot.noisy)?.with_run_id(run_id);
    let residuals = crate::canceller::cancel_mimo(data.matrix, &weights, &data.received.noisy)?;
    let m = residuals.len();
    let decompose = cfg.kind == BasisKind::Glp && frontend.scenario.irr_db.is_none();
    let nire_trace = if decompose {
        estimator.solver().trace_inverse_gram_with(&data.matrix.entries)?
    } else {
        f64::NAN
    };
    let mut powers = Vec::with_capacity(m);
    for (rx, e) in residuals.iter().enumerate() {
        let noise = data.channels.equivalent_noise(frontend, rx);
        if decompose {
            let ctx = DecomposeContext {
                rx,
                noise,
                run_id,
                nire_trace,
            };
            powers.push(decompose_one(frontend, estimator, rx_pilot, data, &weights, e, ctx)?);
        } else {
            powers.push(RsiPowers {
                rsi: e.nominal_power(),
                truncation: f64::NAN,
                bire: f64::NAN,
                nire: f64::NAN,
                noise,
                analytic_expected: f64::NAN,
                bound: f64::NAN,
                reconstruction: Some(excess_power(e, &data.received.noise[rx])?),
                rx_power: data.received.rx_power(rx),
            });
        }
    }
    let avg = |f: &dyn Fn(&RsiPowers) -> f64| mean(powers.iter().map(f), m);
    let opt = |v: f64| if decompose { Some(v) } else { None };
    Ok(TrialMetrics {
        rsi: avg(&|p| p.rsi),
        reconstruction: avg(&|p| p.reconstruction.unwrap_or(f64::NAN)),
        noise: avg(&|p| p.noise),
        truncation: opt(avg(&|p| p.truncation)),
        bire: opt(avg(&|p| p.bire)),
        nire: opt(avg(&|p| p.nire)),
        analytic_expected: opt(avg(&|p| p.analytic_expected)),
        bound: opt(avg(&|p| p.bound)),
        rx_power: avg(&|p| p.rx_power),
        criterion,
    })
}

struct DecomposeContext {
    rx: usize,
    noise: f64,
    run_id: u64,
    nire_trace: f64,
}

fn decompose_one(
    frontend: &Frontend,
    estimator: &LsEstimator,
    rx_pilot: &Received,
    data: &DataSide<'_>,
    weights: &WeightVector,
    residual: &ComplexSequence,
    ctx: DecomposeContext,
) -> Result<RsiPowers> {
    let DecomposeContext {
        rx,
        noise,
        run_id,
        nire_trace,
    } = ctx;
    let cfg = estimator.basis();
    let w_true = truth_weights(frontend, data.channels, &cfg, rx)?;
    let solver = estimator.solver();
    let trunc_pilot = &rx_pilot.noiseless[rx] - estimator.pilot_matrix() * &w_true;
    let trunc_data = &data.received.noiseless[rx] - &data.matrix.entries * &w_true;
    let truth = TruthBundle {
        run_id,
        weights: w_true,
        pilot_solver: solver.clone(),
        data_matrix: data.matrix.entries.clone(),
        trunc_pilot,
        trunc_data,
        noise_power: noise,
        data_noise: Some(data.received.noise[rx].clone()),
        nire_trace: Some(nire_trace),
        rx_power: data.received.rx_power(rx),
    };
    decompose_rsi_powers(&truth, weights, residual)
}

/// Measurement matrix for one sequence per Tx antenna.
pub fn system_matrix(sequences: &[ComplexSequence], config: &BasisConfig) -> Result<MeasurementMatrix> {
    build_mimo_matrix(sequences, &BasisConfig { antennas: sequences.len(), ..*config })
}
