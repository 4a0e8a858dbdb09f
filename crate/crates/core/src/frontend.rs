//! Ground-truth transceiver impairments: RAPP power amplifier, SI channel with
//! analog cancellation residual, Tx/Rx noise and Tx I/Q imbalance.
//!
//! Units: the digital baseband `x` has unit average power. The PA input is
//! `u = sqrt(P_drive) x` with amplitudes in sqrt(mW), so `|u|^2` is in mW and
//! every signal after the PA is in sqrt(mW).

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_measurement_matrix, build_transform, coeff_l, BasisConfig, BasisKind};
use crate::error::{Error, Result};
use crate::linalg::LsSolver;
use crate::signals::{gaussian_samples, ComplexSequence};
use crate::units::{db_to_lin, dbm_to_mw};

/// RAPP AM-AM / AM-PM parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RappParams {
    /// Small-signal gain `A` in dB.
    pub linear_gain_db: f64,
    /// Output amplitude saturation power `A_sat` in dBm.
    pub sat_power_dbm: f64,
    /// Amplitude smoothing factor `s`.
    pub smoothness: f64,
    /// Phase gain `B` (rad per unit input amplitude^q).
    pub phase_gain: f64,
    /// Phase saturation level `B_sat` (input amplitude, sqrt(mW)).
    pub phase_sat: f64,
    /// Phase smoothing factor `q`.
    pub phase_smoothness: f64,
}

impl Default for RappParams {
    /// A = 30 dB, A_sat = 30 dBm, s = 2, B = -0.15, B_sat = 0.88, q = 2.
    fn default() -> Self {
        Self {
            linear_gain_db: 30.0,
            sat_power_dbm: 30.0,
            smoothness: 2.0,
            phase_gain: -0.15,
            phase_sat: 0.88,
            phase_smoothness: 2.0,
        }
    }
}

impl RappParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.smoothness > 0.0
            && self.phase_sat > 0.0
            && self.phase_smoothness > 0.0
            && self.linear_gain_db.is_finite()
            && self.sat_power_dbm.is_finite()
            && self.phase_gain.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid RAPP parameters {self:?}")))
        }
    }

    pub fn linear_gain(&self) -> f64 {
        10f64.powf(self.linear_gain_db / 20.0)
    }

    /// Output saturation amplitude in sqrt(mW).
    pub fn sat_amplitude(&self) -> f64 {
        dbm_to_mw(self.sat_power_dbm).sqrt()
    }

    /// Output amplitude `R(a)`.
    pub fn amplitude(&self, a: f64) -> f64 {
        let g = self.linear_gain() * a;
        let ratio = (g / self.sat_amplitude()).abs();
        g / (1.0 + ratio.powf(2.0 * self.smoothness)).powf(1.0 / (2.0 * self.smoothness))
    }

    /// Phase rotation `theta(a) = B a^q / (1 + (a / B_sat)^q)` in radians.
    pub fn phase(&self, a: f64) -> f64 {
        self.phase_gain * a.powf(self.phase_smoothness)
            / (1.0 + (a / self.phase_sat).abs().powf(self.phase_smoothness))
    }
}

/// Pass one PA-input sample through the RAPP model.
pub fn rapp_apply(x: Complex64, params: &RappParams) -> Complex64 {
    let a = x.norm();
    if a == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let gain = params.amplitude(a) / a;
    x * Complex64::from_polar(gain, params.phase(a))
}

/// Memoryless PA truth model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum PaModel {
    Rapp(RappParams),
    /// `s = sum_p c_p |u|^{p-1} u` over odd `p`, in PA-input units.
    Polynomial { coefficients: Vec<Complex64> },
}

/// Digital-to-PA chain at a fixed drive level.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmitter {
    pub pa: PaModel,
    /// Average PA input power in dBm.
    pub drive_dbm: f64,
}

impl Transmitter {
    pub fn new(pa: PaModel, drive_dbm: f64) -> Self {
        Self { pa, drive_dbm }
    }

    /// RAPP PA driven so that its small-signal output power is `tx_power_dbm`.
    pub fn rapp_at_output_power(params: RappParams, tx_power_dbm: f64) -> Self {
        Self::new(PaModel::Rapp(params), tx_power_dbm - params.linear_gain_db)
    }

    pub fn drive_amplitude(&self) -> f64 {
        dbm_to_mw(self.drive_dbm).sqrt()
    }

    /// PA output for one digital sample.
    pub fn respond(&self, x: Complex64) -> Complex64 {
        let u = x * self.drive_amplitude();
        match &self.pa {
            PaModel::Rapp(p) => rapp_apply(u, p),
            PaModel::Polynomial { coefficients } => {
                let t = u.norm_sqr();
                let mut acc = Complex64::new(0.0, 0.0);
                let mut pow = u;
                for c in coefficients {
                    acc += c * pow;
                    pow *= t;
                }
                acc
            }
        }
    }

    pub fn transmit(&self, seq: &ComplexSequence) -> ComplexSequence {
        seq.map(|x| self.respond(x))
    }

    /// Coefficients of the PA response on the orthonormal GLP basis of the
    /// digital input, `c~_p = E[s(x) psi_p(x)^*]` for `x ~ CN(0, 1)`, for
    /// odd `p <= max_order`.
    pub fn glp_coefficients(&self, max_order: usize) -> Result<Vec<Complex64>> {
        let cfg = BasisConfig::new(max_order, 0, BasisKind::Glp)?;
        match &self.pa {
            PaModel::Polynomial { coefficients } => {
                // Digital PH coefficients c_p d^p, then c~ = T^{-1} c.
                let d = self.drive_amplitude();
                let n = cfg.branches().max(coefficients.len());
                let full = BasisConfig::new(2 * n - 1, 0, BasisKind::Glp)?;
                let mut ph = nalgebra::DVector::zeros(n);
                for (k, c) in coefficients.iter().enumerate() {
                    ph[k] = c * d.powi(2 * k as i32 + 1);
                }
                let glp = build_transform(&full)?.solve(&ph);
                Ok(glp.iter().take(cfg.branches()).copied().collect())
            }
            PaModel::Rapp(_) => Ok(cfg
                .orders()
                .map(|p| self.project_glp(p))
                .collect()),
        }
    }

    /// Quadrature for `E[s(x) psi_p(x)^*]`. With `x = r e^{j phi}` the phase
    /// integrates out and, substituting `t = r^2`,
    /// `c~_p = sqrt(2/(p+1)) int_0^inf G(r) r L^1_i(r^2) e^{-r^2} 2r dr`
    /// where `s(x) = G(|x|) x / |x|`. Composite Simpson in `r`.
    fn project_glp(&self, p: usize) -> Complex64 {
        const R_MAX: f64 = 12.0;
        const INTERVALS: usize = 24_000;
        let i = (p - 1) / 2;
        let scale = (2.0 / (p as f64 + 1.0)).sqrt();
        let h = R_MAX / INTERVALS as f64;
        let f = |r: f64| -> Complex64 {
            if r == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let g = self.respond(Complex64::new(r, 0.0));
            let lag = crate::basis::laguerre_l1(i as i64, r * r).expect("non-negative index");
            g * (r * lag * (-r * r).exp() * 2.0 * r)
        };
        let mut acc = f(0.0) + f(R_MAX);
        for k in 1..INTERVALS {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(k as f64 * h) * w;
        }
        acc * (h / 3.0 * scale)
    }
}

/// Result of fitting an odd-order memoryless polynomial to the RAPP curve.
#[derive(Clone, Debug, PartialEq)]
pub struct PaFit {
    /// `c_1, c_3, ..., c_P` in PA-input units (`s = sum c_p |u|^{p-1} u`).
    pub coefficients: Vec<Complex64>,
    /// Mean squared fit error over the drive samples (mW).
    pub residual_power: f64,
    pub drive_dbm: f64,
}

impl PaFit {
    pub fn into_model(self) -> PaModel {
        PaModel::Polynomial {
            coefficients: self.coefficients,
        }
    }
}

/// LS fit of `sum_p c_p |u|^{p-1} u` to the RAPP response over circular
/// Gaussian drive samples of average power `drive_dbm`.
pub fn fit_polynomial_pa(
    params: &RappParams,
    order: usize,
    num_samples: usize,
    drive_dbm: f64,
    seed: u64,
) -> Result<PaFit> {
    params.validate()?;
    let cfg = BasisConfig::new(order, 0, BasisKind::Glp)?;
    let min_samples = 10 * cfg.branches();
    if num_samples < min_samples {
        return Err(Error::InvalidConfig(format!(
            "polynomial fit of order {order} needs at least {min_samples} samples"
        )));
    }
    let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Fit, 0, 0);
    let x = ComplexSequence::new(gaussian_samples(&mut rng, num_samples))?;
    let tx = Transmitter::new(PaModel::Rapp(*params), drive_dbm);
    let target = tx.transmit(&x);

    // The GLP basis keeps the fit well conditioned; convert to PH afterwards.
    let psi = build_measurement_matrix(&x, &cfg)?;
    let solver = LsSolver::new(&psi.entries)?;
    let (glp, residual) = solver.solve(target.samples())?;
    let ph = build_transform(&cfg)?.apply(&glp);
    let d = dbm_to_mw(drive_dbm).sqrt();
    let coefficients = ph
        .iter()
        .enumerate()
        .map(|(k, c)| c / d.powi(2 * k as i32 + 1))
        .collect();
    Ok(PaFit {
        coefficients,
        residual_power: residual * residual / num_samples as f64,
        drive_dbm,
    })
}

/// Post-A-SIC equivalent SI channel `alpha_0 ... alpha_{L_h}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub taps: Vec<Complex64>,
    pub asic_suppression_db: f64,
}

impl ChannelModel {
    pub fn new(taps: Vec<Complex64>, asic_suppression_db: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidConfig("channel needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::NonFinite("channel taps"));
        }
        Ok(Self {
            taps,
            asic_suppression_db,
        })
    }

    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    /// `sum |alpha_l|^2`.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// RMS delay spread in taps.
    pub fn rms_delay_spread(&self) -> f64 {
        let e = self.energy();
        let mean: f64 = self
            .taps
            .iter()
            .enumerate()
            .map(|(l, t)| l as f64 * t.norm_sqr())
            .sum::<f64>()
            / e;
        let second: f64 = self
            .taps
            .iter()
            .enumerate()
            .map(|(l, t)| (l as f64).powi(2) * t.norm_sqr())
            .sum::<f64>()
            / e;
        (second - mean * mean).max(0.0).sqrt()
    }

    /// CSV with header `l,re,im`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["l", "re", "im"])?;
        for (l, t) in self.taps.iter().enumerate() {
            w.write_record([
                l.to_string(),
                format!("{:.17e}", t.re),
                format!("{:.17e}", t.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Taps at or below this delay are the ones A-SIC mostly suppresses.
const ASIC_SHORT_DELAY_TAPS: usize = 2;

/// Long-delay taps are suppressed this fraction (in dB) less than the average.
const ASIC_LONG_DELAY_RELIEF: f64 = 0.25;

/// Scale raw SI taps so the total energy drops by exactly `asic_db`, with the
/// short-delay taps taking more of the suppression than the long-delay ones.
pub fn apply_asic(raw: &[Complex64], asic_db: f64) -> Vec<Complex64> {
    let relief = db_to_lin(ASIC_LONG_DELAY_RELIEF * asic_db);
    let weight = |l: usize| if l <= ASIC_SHORT_DELAY_TAPS { 1.0 } else { relief };
    let raw_energy: f64 = raw.iter().map(|t| t.norm_sqr()).sum();
    let weighted: f64 = raw
        .iter()
        .enumerate()
        .map(|(l, t)| weight(l) * t.norm_sqr())
        .sum();
    if weighted == 0.0 {
        return raw.to_vec();
    }
    let kappa = raw_energy * db_to_lin(-asic_db) / weighted;
    raw.iter()
        .enumerate()
        .map(|(l, t)| t * (kappa * weight(l)).sqrt())
        .collect()
}

/// Random SI channel with an exponential power-delay profile
/// `e^{-l / delay_spread_taps}`. The raw channel has total energy
/// `rx_distance_gain_db` (antenna isolation as a negative gain); A-SIC then
/// removes a further `asic_db`.
pub fn gen_channel<R: Rng + ?Sized>(
    memory: usize,
    delay_spread_taps: f64,
    asic_db: f64,
    rx_distance_gain_db: f64,
    rng: &mut R,
) -> Result<ChannelModel> {
    if !(delay_spread_taps > 0.0) {
        return Err(Error::InvalidConfig("delay spread must be positive".into()));
    }
    let draws = gaussian_samples(rng, memory + 1);
    let mut raw: Vec<Complex64> = draws
        .into_iter()
        .enumerate()
        .map(|(l, g)| g * (-(l as f64) / delay_spread_taps).exp().sqrt())
        .collect();
    let energy: f64 = raw.iter().map(|t| t.norm_sqr()).sum();
    let target = db_to_lin(rx_distance_gain_db);
    let g = (target / energy).sqrt();
    for t in raw.iter_mut() {
        *t *= g;
    }
    ChannelModel::new(apply_asic(&raw, asic_db), asic_db)
}

/// Linear convolution restricted to the valid region `n = L_h, ..., L-1`.
pub fn apply_channel(seq: &ComplexSequence, ch: &ChannelModel) -> Result<ComplexSequence> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    if ch.taps.is_empty() {
        return Err(Error::InvalidConfig("channel needs at least one tap".into()));
    }
    let lh = ch.memory();
    if seq.len() <= lh {
        return Err(Error::SequenceTooShort {
            len: seq.len(),
            needed: lh + 1,
        });
    }
    let x = seq.samples();
    let out = (lh..x.len())
        .map(|n| {
            ch.taps
                .iter()
                .enumerate()
                .map(|(l, a)| a * x[n - l])
                .sum()
        })
        .collect();
    Ok(ComplexSequence::from_trusted(out))
}

/// Transmit power, Tx SNR and receiver noise floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    /// Tx SNR; `inf` disables Tx noise.
    pub tx_snr_db: f64,
    /// Composite Rx noise floor (thermal plus quantization).
    pub rx_noise_dbm: f64,
    pub adc_bits: u32,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbm: 23.0,
            tx_snr_db: 50.0,
            rx_noise_dbm: -90.0,
            adc_bits: 12,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if self.adc_bits == 0
            || !self.tx_power_dbm.is_finite()
            || self.tx_snr_db.is_nan()
            || self.rx_noise_dbm.is_nan()
        {
            return Err(Error::InvalidConfig(format!("invalid link budget {self:?}")));
        }
        Ok(())
    }

    pub fn tx_noise_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm - self.tx_snr_db)
    }

    pub fn rx_noise_mw(&self) -> f64 {
        dbm_to_mw(self.rx_noise_dbm)
    }

    /// Equivalent Rx noise power `sum|alpha|^2 P_zt + P_zr` (mW).
    pub fn equivalent_noise_mw(&self, channel_energy: f64) -> f64 {
        channel_energy * self.tx_noise_mw() + self.rx_noise_mw()
    }
}

/// Where noise is injected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseStage {
    /// Tx noise `z_t` at `tx_power - tx_snr`, before the channel.
    Tx,
    /// Rx noise `z_r` at the receiver floor.
    Rx,
}

/// Add white circular Gaussian noise for the given stage.
pub fn add_noise<R: Rng + ?Sized>(
    seq: &ComplexSequence,
    budget: &LinkBudget,
    stage: NoiseStage,
    rng: &mut R,
) -> Result<ComplexSequence> {
    budget.validate()?;
    let power = match stage {
        NoiseStage::Tx => budget.tx_noise_mw(),
        NoiseStage::Rx => budget.rx_noise_mw(),
    };
    Ok(add_white_noise(seq, power, rng))
}

/// Add CN(0, power) noise; zero power returns the input unchanged.
pub fn add_white_noise<R: Rng + ?Sized>(seq: &ComplexSequence, power: f64, rng: &mut R) -> ComplexSequence {
    if power == 0.0 {
        return seq.clone();
    }
    let sigma = power.sqrt();
    let noise = gaussian_samples(rng, seq.len());
    ComplexSequence::from_trusted(
        seq.samples()
            .iter()
            .zip(noise)
            .map(|(s, z)| s + z * sigma)
            .collect(),
    )
}

/// Image-leakage gains `(g1, g2)` with `|g1|^2 / |g2|^2 = IRR` and
/// `|g1|^2 + |g2|^2 = 1`.
pub fn iq_gains(irr_db: f64) -> (f64, f64) {
    if irr_db == f64::INFINITY {
        return (1.0, 0.0);
    }
    let r = db_to_lin(irr_db);
    ((r / (1.0 + r)).sqrt(), (1.0 / (1.0 + r)).sqrt())
}

/// `y = g1 x + g2 x*`.
pub fn apply_iq_imbalance(seq: &ComplexSequence, irr_db: f64) -> Result<ComplexSequence> {
    if !(irr_db > 0.0) {
        return Err(Error::InvalidConfig(format!("IRR must be positive, got {irr_db} dB")));
    }
    let (g1, g2) = iq_gains(irr_db);
    Ok(seq.map(|x| x * g1 + x.conj() * g2))
}

/// Dynamic range of a `b`-bit ADC, `6.02 b + 1.76` dB.
pub fn adc_dynamic_range_db(adc_bits: u32) -> f64 {
    6.02 * adc_bits as f64 + 1.76
}

/// Achievable D-SIC: `min(rho_r - rho_e, DR - PAPR)` in dB.
pub fn dsic_upper_bound(rho_r_dbm: f64, rho_e_dbm: f64, adc_bits: u32, papr_db: f64) -> f64 {
    (rho_r_dbm - rho_e_dbm).min(adc_dynamic_range_db(adc_bits) - papr_db)
}

/// Digital-unit PH coefficients from GLP coefficients, `c = L c~`.
pub fn glp_to_ph(glp: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = glp.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, g) in glp.iter().enumerate().skip(i) {
            *o += g * coeff_l(2 * j + 1, 2 * i + 1)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::signals::gen_gaussian_sequence;

    #[test]
    fn rapp_limits() {
        let p = RappParams::default();
        let tiny = Complex64::new(1e-6, 2e-6);
        let out = rapp_apply(tiny, &p);
        let lin = tiny * p.linear_gain();
        assert!((out - lin).norm() / lin.norm() < 1e-6);
        let huge = rapp_apply(Complex64::new(1e6, 0.0), &p);
        assert!((huge.norm() - p.sat_amplitude()).abs() / p.sat_amplitude() < 1e-9);
        assert_eq!(rapp_apply(Complex64::new(0.0, 0.0), &p), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rapp_is_monotone_and_bounded() {
        let p = RappParams::default();
        let mut prev = 0.0;
        for k in 1..2000 {
            let a = k as f64 * 0.005;
            let r = p.amplitude(a);
            assert!(r > prev);
            assert!(r <= p.sat_amplitude());
            prev = r;
        }
    }

    #[test]
    fn rapp_phase_rotation() {
        let p = RappParams::default();
        let a = 0.5;
        let out = rapp_apply(Complex64::new(a, 0.0), &p);
        let expected = p.phase_gain * a * a / (1.0 + (a / p.phase_sat).powi(2));
        assert!((out.arg() - expected).abs() < 1e-12);
    }

    #[test]
    fn fit_linear_regime() {
        let p = RappParams {
            smoothness: 50.0,
            phase_gain: 0.0,
            ..RappParams::default()
        };
        // Drive 40 dB below the input saturation point.
        let fit = fit_polynomial_pa(&p, 5, 20_000, -40.0, 1).unwrap();
        let c1 = fit.coefficients[0];
        assert!((c1.norm() - p.linear_gain()).abs() / p.linear_gain() < 1e-6);
        let c3 = fit.coefficients[1];
        assert!(c3.norm() / c1.norm() < 1e-3);
    }

    #[test]
    fn fit_residual_shrinks_with_order() {
        let p = RappParams::default();
        let residuals: Vec<f64> = [3, 5, 7, 9]
            .iter()
            .map(|&o| fit_polynomial_pa(&p, o, 50_000, -7.0, 3).unwrap().residual_power)
            .collect();
        assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
    }

    #[test]
    fn fit_c1_phase_matches_small_signal_rotation() {
        let p = RappParams::default();
        let a = 1e-3;
        let small = rapp_apply(Complex64::new(a, 0.0), &p).arg();
        let fit = fit_polynomial_pa(&p, 9, 100_000, -20.0, 5).unwrap();
        assert!((fit.coefficients[0].arg() - small).abs() < 1e-3);
    }

    #[test]
    fn fit_needs_enough_samples() {
        assert!(fit_polynomial_pa(&RappParams::default(), 5, 29, 0.0, 0).is_err());
    }

    #[test]
    fn glp_projection_matches_regression() {
        // Quadrature projection vs a large-sample LS fit on the GLP basis.
        let tx = Transmitter::rapp_at_output_power(RappParams::default(), 23.0);
        let quad = tx.glp_coefficients(7).unwrap();
        let fit = fit_polynomial_pa(&RappParams::default(), 7, 400_000, tx.drive_dbm, 9).unwrap();
        let d = tx.drive_amplitude();
        let digital_ph: Vec<Complex64> = fit
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * d.powi(2 * k as i32 + 1))
            .collect();
        let quad_ph = glp_to_ph(&quad).unwrap();
        let scale = quad[0].norm();
        for (a, b) in quad_ph.iter().zip(&digital_ph) {
            assert!((a - b).norm() / scale < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn polynomial_truth_projection_is_exact() {
        let coeffs = vec![Complex64::new(30.0, 1.0), Complex64::new(-4.0, 2.0)];
        let tx = Transmitter::new(PaModel::Polynomial { coefficients: coeffs.clone() }, -6.0);
        let glp = tx.glp_coefficients(5).unwrap();
        assert_eq!(glp.len(), 3);
        assert!(glp[2].norm() < 1e-14);
        let back = glp_to_ph(&glp[..2]).unwrap();
        let d = tx.drive_amplitude();
        assert!((back[0] - coeffs[0] * d).norm() < 1e-12 * coeffs[0].norm());
        assert!((back[1] - coeffs[1] * d.powi(3)).norm() < 1e-12 * coeffs[0].norm());
    }

    #[test]
    fn channel_identity_and_shift() {
        let seq = gen_gaussian_sequence(16, 1).unwrap();
        let id = ChannelModel::new(vec![Complex64::new(1.0, 0.0)], 0.0).unwrap();
        assert_eq!(apply_channel(&seq, &id).unwrap(), seq);
        let delay = ChannelModel::new(
            vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            0.0,
        )
        .unwrap();
        let out = apply_channel(&seq, &delay).unwrap();
        assert_eq!(out.samples(), &seq.samples()[..14]);
        assert!(ChannelModel::new(vec![], 0.0).is_err());
    }

    #[test]
    fn channel_is_linear() {
        let x = gen_gaussian_sequence(64, 2).unwrap();
        let y = gen_gaussian_sequence(64, 3).unwrap();
        let ch = gen_channel(5, 2.0, 30.0, -10.0, &mut seeded(4)).unwrap();
        let a = Complex64::new(0.7, -1.1);
        let b = Complex64::new(-2.0, 0.4);
        let lhs = apply_channel(&x.scaled(a).add(&y.scaled(b)).unwrap(), &ch).unwrap();
        let rhs = apply_channel(&x, &ch)
            .unwrap()
            .scaled(a)
            .add(&apply_channel(&y, &ch).unwrap().scaled(b))
            .unwrap();
        for (l, r) in lhs.samples().iter().zip(rhs.samples()) {
            assert!((l - r).norm() <= 1e-12 * l.norm().max(1e-30));
        }
    }

    #[test]
    fn channel_output_power_parseval() {
        let ch = gen_channel(8, 3.0, 0.0, 0.0, &mut seeded(5)).unwrap();
        let x = gen_gaussian_sequence(100_000, 6).unwrap();
        let y = apply_channel(&x, &ch).unwrap();
        assert!((y.nominal_power() / ch.energy() - 1.0).abs() < 0.02);
    }

    #[test]
    fn asic_budget() {
        let raw = gen_channel(8, 3.0, 0.0, -15.0, &mut seeded(7)).unwrap();
        assert!((raw.energy() - db_to_lin(-15.0)).abs() < 1e-9 * db_to_lin(-15.0));
        let same = apply_asic(&raw.taps, 0.0);
        for (a, b) in same.iter().zip(&raw.taps) {
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
        let residual = ChannelModel::new(apply_asic(&raw.taps, 60.0), 60.0).unwrap();
        let drop = 10.0 * (raw.energy() / residual.energy()).log10();
        assert!((drop - 60.0).abs() < 0.1);
        assert!((residual.energy() / (raw.energy() * 1e-6) - 1.0).abs() < 1e-9);
        // Short-delay taps are suppressed more than long-delay taps.
        let ratio = |l: usize| residual.taps[l].norm_sqr() / raw.taps[l].norm_sqr();
        assert!(ratio(1) < ratio(5));
    }

    #[test]
    fn delay_spread_is_monotone() {
        let median_spread = |tau: f64| {
            let mut v: Vec<f64> = (0..100)
                .map(|s| {
                    gen_channel(16, tau, 0.0, 0.0, &mut seeded(100 + s))
                        .unwrap()
                        .rms_delay_spread()
                })
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            0.5 * (v[49] + v[50])
        };
        let spreads: Vec<f64> = [0.5, 1.0, 2.0, 4.0].iter().map(|&t| median_spread(t)).collect();
        assert!(spreads.windows(2).all(|w| w[1] > w[0]), "{spreads:?}");
    }

    #[test]
    fn noise_power_and_infinite_snr() {
        let budget = LinkBudget {
            tx_snr_db: f64::INFINITY,
            ..LinkBudget::default()
        };
        let x = gen_gaussian_sequence(1000, 8).unwrap();
        let same = add_noise(&x, &budget, NoiseStage::Tx, &mut seeded(9)).unwrap();
        assert_eq!(same, x);

        let zero = ComplexSequence::new(vec![Complex64::new(0.0, 0.0); 1_000_000]).unwrap();
        let budget = LinkBudget::default();
        let rx = add_noise(&zero, &budget, NoiseStage::Rx, &mut seeded(10)).unwrap();
        assert!((rx.nominal_power() / budget.rx_noise_mw() - 1.0).abs() < 0.02);
        let tx = add_noise(&zero, &budget, NoiseStage::Tx, &mut seeded(11)).unwrap();
        assert!((tx.nominal_power() / budget.tx_noise_mw() - 1.0).abs() < 0.02);
    }

    #[test]
    fn equivalent_noise_composition() {
        // Tx noise through the channel plus Rx noise.
        let budget = LinkBudget {
            tx_power_dbm: 23.0,
            tx_snr_db: 40.0,
            rx_noise_dbm: -60.0,
            adc_bits: 12,
        };
        let ch = gen_channel(4, 2.0, 0.0, -20.0, &mut seeded(12)).unwrap();
        let zero = ComplexSequence::new(vec![Complex64::new(0.0, 0.0); 400_000]).unwrap();
        let zt = add_noise(&zero, &budget, NoiseStage::Tx, &mut seeded(13)).unwrap();
        let through = apply_channel(&zt, &ch).unwrap();
        let total = add_noise(&through, &budget, NoiseStage::Rx, &mut seeded(14)).unwrap();
        let expected = budget.equivalent_noise_mw(ch.energy());
        assert!((total.nominal_power() / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn iq_imbalance() {
        let x = gen_gaussian_sequence(64, 15).unwrap();
        assert_eq!(apply_iq_imbalance(&x, f64::INFINITY).unwrap(), x);
        let (g1, g2) = iq_gains(25.0);
        assert!((g1 * g1 + g2 * g2 - 1.0).abs() < 1e-15);
        assert!((10.0 * (g2 * g2 / (g1 * g1)).log10() + 25.0).abs() < 1e-12);
        let real = ComplexSequence::new(vec![Complex64::new(0.5, 0.0), Complex64::new(-2.0, 0.0)]).unwrap();
        let y = apply_iq_imbalance(&real, 25.0).unwrap();
        for (a, b) in real.samples().iter().zip(y.samples()) {
            assert!((b - a * (g1 + g2)).norm() < 1e-15);
        }
        let c = ComplexSequence::new(vec![Complex64::new(0.3, 0.8)]).unwrap();
        let yc = apply_iq_imbalance(&c, 25.0).unwrap();
        let direct = Complex64::new(0.3, 0.8) * g1 + Complex64::new(0.3, -0.8) * g2;
        assert!((yc.samples()[0] - direct).norm() < 1e-15);
        assert!(apply_iq_imbalance(&x, 0.0).is_err());
    }

    #[test]
    fn dsic_bound_examples() {
        assert!((adc_dynamic_range_db(12) - 74.0).abs() < 1e-12);
        assert!((dsic_upper_bound(0.0, -50.0, 12, 8.9) - 50.0).abs() < 1e-12);
        assert!((dsic_upper_bound(0.0, -80.0, 12, 8.9) - 65.1).abs() < 1e-9);
    }
}
