//! LS weight estimation, SI reconstruction and the residual power ledger.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{build_mimo_matrix, build_transform, BasisConfig, BasisKind, MeasurementMatrix};
use crate::error::{Error, Result};
use crate::linalg::LsSolver;
use crate::signals::ComplexSequence;
use crate::units::{lin_to_db, mw_to_dbm};

/// Canceller weights, one column per Rx antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    weights: DMatrix<Complex64>,
    pub basis: BasisConfig,
    /// LS residual norm per Rx antenna (zero for weights not obtained by LS).
    pub residual_norms: Vec<f64>,
    /// Condition estimate of the pilot matrix (1 if not estimated).
    pub condition: f64,
    /// Simulation run the weights belong to.
    pub run_id: u64,
}

impl WeightVector {
    /// Wrap a weight matrix with `basis.columns()` rows.
    pub fn new(weights: DMatrix<Complex64>, basis: BasisConfig) -> Result<Self> {
        basis.validate()?;
        if weights.nrows() != basis.columns() || weights.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: basis.columns(),
                found: weights.nrows(),
            });
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        let rx = weights.ncols();
        Ok(Self {
            weights,
            basis,
            residual_norms: vec![0.0; rx],
            condition: 1.0,
            run_id: 0,
        })
    }

    pub fn from_vector(weights: DVector<Complex64>, basis: BasisConfig) -> Result<Self> {
        let n = weights.len();
        Self::new(DMatrix::from_column_slice(n, 1, weights.as_slice()), basis)
    }

    pub fn zeros(basis: BasisConfig, rx_antennas: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(basis.columns(), rx_antennas.max(1)), basis)
    }

    pub fn with_run_id(mut self, run_id: u64) -> Self {
        self.run_id = run_id;
        self
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.weights
    }

    /// Weights feeding Rx antenna `rx`.
    pub fn column(&self, rx: usize) -> DVector<Complex64> {
        self.weights.column(rx).into_owned()
    }

    pub fn rx_antennas(&self) -> usize {
        self.weights.ncols()
    }

    /// Total number of weights, `L_w M^2` for a square MIMO system.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Re-express GLP weights in the PH basis, `w = T w~`.
    pub fn to_ph(&self) -> Result<Self> {
        match self.basis.kind {
            BasisKind::Ph => Ok(self.clone()),
            BasisKind::Glp => self.transformed(BasisKind::Ph, |t, v| t.apply(v)),
            BasisKind::PhIq => Err(Error::Unsupported("PH+IQ weights have no GLP form")),
        }
    }

    /// Re-express PH weights in the GLP basis, `w~ = T^{-1} w`.
    pub fn to_glp(&self) -> Result<Self> {
        match self.basis.kind {
            BasisKind::Glp => Ok(self.clone()),
            BasisKind::Ph => self.transformed(BasisKind::Glp, |t, v| t.solve(v)),
            BasisKind::PhIq => Err(Error::Unsupported("PH+IQ weights have no GLP form")),
        }
    }

    fn transformed(
        &self,
        kind: BasisKind,
        f: impl Fn(&crate::basis::TransformMatrix, &DVector<Complex64>) -> DVector<Complex64>,
    ) -> Result<Self> {
        let t = build_transform(&self.basis)?;
        let per = self.basis.weight_count();
        let mut out = self.weights.clone();
        for c in 0..out.ncols() {
            for m in 0..self.basis.antennas {
                let block = self.weights.rows(m * per, per).column(c).into_owned();
                out.view_mut((m * per, c), (per, 1)).copy_from(&f(&t, &block));
            }
        }
        Ok(Self {
            weights: out,
            basis: self.basis.with_kind(kind),
            ..self.clone()
        })
    }
}

/// Reusable LS estimator for a fixed pilot matrix.
#[derive(Clone, Debug)]
pub struct LsEstimator {
    solver: Arc<LsSolver>,
    pilot: Arc<DMatrix<Complex64>>,
    basis: BasisConfig,
}

impl LsEstimator {
    pub fn new(pilot: &MeasurementMatrix) -> Result<Self> {
        Ok(Self {
            solver: Arc::new(LsSolver::new(&pilot.entries)?),
            pilot: Arc::new(pilot.entries.clone()),
            basis: pilot.basis,
        })
    }

    pub fn solver(&self) -> &Arc<LsSolver> {
        &self.solver
    }

    pub fn basis(&self) -> BasisConfig {
        self.basis
    }

    /// The pilot matrix the estimator was built from.
    pub fn pilot_matrix(&self) -> &DMatrix<Complex64> {
        &self.pilot
    }

    pub fn estimate(&self, rx_pilot: &ComplexSequence) -> Result<WeightVector> {
        self.estimate_many(std::slice::from_ref(rx_pilot))
    }

    /// One LS solve per Rx antenna sequence.
    pub fn estimate_many(&self, rx_pilots: &[ComplexSequence]) -> Result<WeightVector> {
        let rows = self.solver.rows();
        if rx_pilots.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut rhs = DMatrix::zeros(rows, rx_pilots.len());
        for (c, r) in rx_pilots.iter().enumerate() {
            if r.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    found: r.len(),
                });
            }
            rhs.set_column(c, &DVector::from_column_slice(r.samples()));
        }
        let (x, residual_norms) = self.solver.solve_many(&rhs)?;
        let mut w = WeightVector::new(x, self.basis)?;
        w.residual_norms = residual_norms;
        w.condition = self.solver.condition();
        Ok(w)
    }
}

/// LS estimate of the canceller weights from a pilot matrix and the
/// received pilot (valid region).
pub fn ls_estimate(pilot: &MeasurementMatrix, rx_pilot: &ComplexSequence) -> Result<WeightVector> {
    LsEstimator::new(pilot)?.estimate(rx_pilot)
}

/// Reconstructed SI `Phi_d w` for Rx antenna `rx`.
pub fn reconstruct(data: &MeasurementMatrix, weights: &WeightVector, rx: usize) -> Result<DVector<Complex64>> {
    if data.basis != weights.basis {
        return Err(Error::InvalidConfig(format!(
            "data matrix basis {:?} does not match weight basis {:?}",
            data.basis, weights.basis
        )));
    }
    if rx >= weights.rx_antennas() {
        return Err(Error::DimensionMismatch {
            expected: weights.rx_antennas(),
            found: rx + 1,
        });
    }
    Ok(&data.entries * weights.weights.column(rx))
}

/// Residual `e_d = r_d - Phi_d w` for a single Rx antenna.
pub fn cancel(data: &MeasurementMatrix, weights: &WeightVector, rx_data: &ComplexSequence) -> Result<ComplexSequence> {
    if weights.rx_antennas() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: weights.rx_antennas(),
        });
    }
    cancel_antenna(data, weights, 0, rx_data)
}

/// Residual of every Rx antenna.
pub fn cancel_mimo(
    data: &MeasurementMatrix,
    weights: &WeightVector,
    rx_data: &[ComplexSequence],
) -> Result<Vec<ComplexSequence>> {
    if rx_data.len() != weights.rx_antennas() {
        return Err(Error::DimensionMismatch {
            expected: weights.rx_antennas(),
            found: rx_data.len(),
        });
    }
    rx_data
        .iter()
        .enumerate()
        .map(|(rx, r)| cancel_antenna(data, weights, rx, r))
        .collect()
}

fn cancel_antenna(
    data: &MeasurementMatrix,
    weights: &WeightVector,
    rx: usize,
    rx_data: &ComplexSequence,
) -> Result<ComplexSequence> {
    if rx_data.len() != data.rows() {
        return Err(Error::DimensionMismatch {
            expected: data.rows(),
            found: rx_data.len(),
        });
    }
    let y = reconstruct(data, weights, rx)?;
    Ok(ComplexSequence::from_trusted(
        rx_data.samples().iter().zip(y.iter()).map(|(r, s)| r - s).collect(),
    ))
}

/// `[Phi_1 ... Phi_M]` for the per-antenna Tx sequences.
pub fn build_mimo_system(sequences: &[ComplexSequence], config: &BasisConfig) -> Result<MeasurementMatrix> {
    let cfg = BasisConfig {
        antennas: sequences.len(),
        ..*config
    };
    build_mimo_matrix(sequences, &cfg)
}

/// Separable truth weights `w_{p,l} = c_p alpha_l` in matrix column order
/// (orders fastest, delays slowest).
pub fn separable_weights(coefficients: &[Complex64], taps: &[Complex64]) -> DVector<Complex64> {
    let b = coefficients.len();
    DVector::from_fn(b * taps.len(), |i, _| coefficients[i % b] * taps[i / b])
}

/// Per-sample MMSE floor for Gaussian data in an orthonormal basis: the
/// energy of the truth weights above order `order` plus the noise power.
/// `full` holds the truth weights for `full_config` in matrix column order.
pub fn mmse_floor(full: &DVector<Complex64>, full_config: &BasisConfig, order: usize, noise_mw: f64) -> f64 {
    let b = full_config.branches();
    let kept = order.div_ceil(2);
    let truncated: f64 = full
        .iter()
        .enumerate()
        .filter(|(i, _)| i % b >= kept)
        .map(|(_, w)| w.norm_sqr())
        .sum();
    truncated + noise_mw
}

/// Simulation-side oracle for one trial and one Rx antenna.
///
/// Only available in simulation: it needs the noiseless SI and the truth
/// weights, which real hardware never exposes.
#[derive(Clone, Debug)]
pub struct TruthBundle {
    pub run_id: u64,
    /// Truth weights `w~` up to the canceller order.
    pub weights: DVector<Complex64>,
    /// Factorization of the pilot matrix `Psi_p`.
    pub pilot_solver: Arc<LsSolver>,
    /// `Psi_d`.
    pub data_matrix: DMatrix<Complex64>,
    /// `eps~_p`, pilot SI outside the canceller model.
    pub trunc_pilot: DVector<Complex64>,
    /// `eps~_d`.
    pub trunc_data: DVector<Complex64>,
    /// Equivalent Rx noise power `rho_z~` (mW).
    pub noise_power: f64,
    /// The data noise realization `z~_d`, when known.
    pub data_noise: Option<DVector<Complex64>>,
    /// Precomputed `tr(G_p^{-1} G_d)`, shared by Rx antennas with the same
    /// pilot and data matrices.
    pub nire_trace: Option<f64>,
    /// Received data power `rho_r` (mW).
    pub rx_power: f64,
}

/// Per-trial RSI power ledger in dBm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsiReport {
    pub run_id: u64,
    /// Measured `rho_e = ||e_d||^2 / L~_d`.
    pub rsi_dbm: f64,
    pub truncation_dbm: f64,
    pub bire_dbm: f64,
    pub nire_dbm: f64,
    pub noise_dbm: f64,
    /// Exact conditional expectation of `rho_e` given pilot and data.
    pub analytic_expected_dbm: f64,
    /// Four-term upper bound `2 trunc + 2 BIRE + NIRE + noise`.
    pub bound_dbm: f64,
    /// `||e_d - z~_d||^2 / L~_d`, the part of the RSI above the noise.
    pub reconstruction_dbm: Option<f64>,
    /// `rho_r / rho_e` in dB.
    pub cancellation_db: f64,
}

impl RsiReport {
    pub const CSV_HEADER: [&'static str; 10] = [
        "run_id",
        "rsi_dbm",
        "truncation_dbm",
        "bire_dbm",
        "nire_dbm",
        "noise_dbm",
        "analytic_expected_dbm",
        "bound_dbm",
        "reconstruction_dbm",
        "cancellation_db",
    ];

    /// One CSV row per report, header first.
    pub fn write_csv<W: Write>(reports: &[RsiReport], writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        for r in reports {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear-domain (mW) RSI components of one trial and one Rx antenna.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsiPowers {
    pub rsi: f64,
    pub truncation: f64,
    pub bire: f64,
    pub nire: f64,
    pub noise: f64,
    pub analytic_expected: f64,
    pub bound: f64,
    pub reconstruction: Option<f64>,
    pub rx_power: f64,
}

impl RsiPowers {
    pub fn report(&self, run_id: u64) -> RsiReport {
        RsiReport {
            run_id,
            rsi_dbm: mw_to_dbm(self.rsi),
            truncation_dbm: mw_to_dbm(self.truncation),
            bire_dbm: mw_to_dbm(self.bire),
            nire_dbm: mw_to_dbm(self.nire),
            noise_dbm: mw_to_dbm(self.noise),
            analytic_expected_dbm: mw_to_dbm(self.analytic_expected),
            bound_dbm: mw_to_dbm(self.bound),
            reconstruction_dbm: self.reconstruction.map(mw_to_dbm),
            cancellation_db: lin_to_db(self.rx_power / self.rsi),
        }
    }
}

/// Split the measured residual into truncation, BIRE, NIRE and noise terms.
pub fn decompose_rsi(truth: &TruthBundle, weights: &WeightVector, residual: &ComplexSequence) -> Result<RsiReport> {
    Ok(decompose_rsi_powers(truth, weights, residual)?.report(truth.run_id))
}

/// [`decompose_rsi`] without the conversion to dBm.
pub fn decompose_rsi_powers(truth: &TruthBundle, weights: &WeightVector, residual: &ComplexSequence) -> Result<RsiPowers> {
    if truth.run_id != weights.run_id {
        return Err(Error::RunMismatch {
            expected: truth.run_id,
            found: weights.run_id,
        });
    }
    let rows = truth.data_matrix.nrows();
    if residual.len() != rows || truth.trunc_data.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: residual.len(),
        });
    }
    if truth.trunc_pilot.len() != truth.pilot_solver.rows() {
        return Err(Error::DimensionMismatch {
            expected: truth.pilot_solver.rows(),
            found: truth.trunc_pilot.len(),
        });
    }
    let ld = rows as f64;
    let (bias_coeffs, _) = truth.pilot_solver.solve(truth.trunc_pilot.as_slice())?;
    let bire_vec = &truth.data_matrix * bias_coeffs;
    let truncation = truth.trunc_data.norm_squared() / ld;
    let bire = bire_vec.norm_squared() / ld;
    let bias = (&truth.trunc_data - &bire_vec).norm_squared() / ld;
    let trace = match truth.nire_trace {
        Some(t) => t,
        None => truth.pilot_solver.trace_inverse_gram_with(&truth.data_matrix)?,
    };
    let nire = truth.noise_power * trace / ld;
    let noise = truth.noise_power;
    let reconstruction = match &truth.data_noise {
        Some(z) => Some(excess_power(residual, z)?),
        None => None,
    };
    Ok(RsiPowers {
        rsi: residual.nominal_power(),
        truncation,
        bire,
        nire,
        noise,
        analytic_expected: bias + nire + noise,
        bound: 2.0 * truncation + 2.0 * bire + nire + noise,
        reconstruction,
        rx_power: truth.rx_power,
    })
}

/// `||e - z||^2 / L`, the residual power left after removing the noise.
pub fn excess_power(residual: &ComplexSequence, noise: &DVector<Complex64>) -> Result<f64> {
    if noise.len() != residual.len() {
        return Err(Error::DimensionMismatch {
            expected: residual.len(),
            found: noise.len(),
        });
    }
    let e: f64 = residual
        .samples()
        .iter()
        .zip(noise.iter())
        .map(|(e, z)| (e - z).norm_sqr())
        .sum();
    Ok(e / residual.len() as f64)
}
