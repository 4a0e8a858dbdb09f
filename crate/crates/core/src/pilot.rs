//! Gram-spectrum diagnostics, Shannon rank and ensemble pilot selection.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_measurement_matrix, BasisConfig, BasisKind, MeasurementMatrix};
use crate::error::{Error, Result};
use crate::linalg::{gram, hermitian_eigenvalues};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::signals::{chisq_amplitude_sequence, gaussian_sequence, gen_multitone_pilot, stats, ComplexSequence};

/// Relative tolerance for negative round-off eigenvalues.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Fraction of frequency bins occupied by the multitone pilot.
pub const MULTITONE_OCCUPANCY: f64 = 0.875;

/// Hermitian PSD Gram matrix with its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct GramSpectrum {
    pub gram: DMatrix<Complex64>,
    /// Clamped eigenvalues, sorted descending.
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `inf` when singular.
    pub cond2: f64,
    pub shannon_rank: f64,
    /// `tr(G^{-1})`, `inf` when singular.
    pub tr_inverse: f64,
}

impl GramSpectrum {
    /// Spectrum of a Hermitian PSD matrix.
    pub fn from_gram(g: DMatrix<Complex64>) -> Result<Self> {
        if g.is_empty() || g.nrows() != g.ncols() {
            return Err(Error::DimensionMismatch {
                expected: g.nrows(),
                found: g.ncols(),
            });
        }
        if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("Gram matrix"));
        }
        let raw = hermitian_eigenvalues(&g);
        let eigenvalues = clamp_psd(&raw)?;
        let lambda_max = eigenvalues[0];
        let lambda_min = *eigenvalues.last().expect("non-empty");
        let trace = (0..g.nrows()).map(|i| g[(i, i)].re).sum();
        let (cond2, tr_inverse) = if lambda_min > 0.0 {
            (lambda_max / lambda_min, eigenvalues.iter().map(|l| 1.0 / l).sum())
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let shannon_rank = shannon_rank(&eigenvalues)?;
        Ok(Self {
            gram: g,
            eigenvalues,
            trace,
            lambda_min,
            lambda_max,
            cond2,
            shannon_rank,
            tr_inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn clamp_psd(raw: &[f64]) -> Result<Vec<f64>> {
    let lambda_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lambda_max > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    raw.iter()
        .map(|&l| {
            if l >= 0.0 {
                Ok(l)
            } else if l >= -PSD_TOLERANCE * lambda_max {
                Ok(0.0)
            } else {
                Err(Error::NotPsd { value: l, lambda_max })
            }
        })
        .collect()
}

/// `G = A^H A` and its spectrum.
pub fn gram_spectrum(matrix: &MeasurementMatrix) -> Result<GramSpectrum> {
    if matrix.entries.is_empty() {
        return Err(Error::EmptySequence);
    }
    if matrix.entries.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("measurement matrix"));
    }
    GramSpectrum::from_gram(gram(&matrix.entries))
}

/// `2^H` with `H` the entropy (bits) of the trace-normalized spectrum.
pub fn shannon_rank(eigenvalues: &[f64]) -> Result<f64> {
    let clamped = clamp_psd(eigenvalues)?;
    let total: f64 = clamped.iter().sum();
    let entropy: f64 = clamped
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| {
            let p = l / total;
            -p * p.log2()
        })
        .sum();
    Ok(entropy.exp2().clamp(1.0, clamped.len() as f64))
}

/// Selection criterion `rank_S * lambda_min`.
pub fn criterion(spectrum: &GramSpectrum) -> f64 {
    spectrum.shannon_rank * spectrum.lambda_min
}

/// Bounds on `tr(G^{-1})` from the trace and condition number:
/// `n^2 / tr(G) <= tr(G^{-1}) <= n^2 cond(G) / tr(G)`.
pub fn trace_inverse_bounds(spectrum: &GramSpectrum) -> (f64, f64) {
    let n2 = (spectrum.dim() * spectrum.dim()) as f64;
    (n2 / spectrum.trace, n2 * spectrum.cond2 / spectrum.trace)
}

fn require_nonsingular(spectrum: &GramSpectrum) -> Result<()> {
    if spectrum.lambda_min > 0.0 {
        Ok(())
    } else {
        Err(Error::Singular)
    }
}

/// Upper bound on the BIRE energy `||Psi_d Psi_p^+ eps_p||^2`:
/// `lambda_max(G_d) cond(G_p) / lambda_min(G_p) ||eps_p||^2`.
pub fn bire_bound(spectrum_p: &GramSpectrum, spectrum_d: &GramSpectrum, trunc_pilot_energy: f64) -> Result<f64> {
    require_nonsingular(spectrum_p)?;
    Ok(spectrum_d.lambda_max * spectrum_p.cond2 / spectrum_p.lambda_min * trunc_pilot_energy)
}

/// Lower and upper bounds on `tr(G_p^{-1} G_d)`.
pub fn nire_bounds(spectrum_p: &GramSpectrum, spectrum_d: &GramSpectrum) -> Result<(f64, f64)> {
    require_nonsingular(spectrum_p)?;
    if spectrum_p.dim() != spectrum_d.dim() {
        return Err(Error::DimensionMismatch {
            expected: spectrum_p.dim(),
            found: spectrum_d.dim(),
        });
    }
    let lower = (spectrum_d.lambda_min * spectrum_p.tr_inverse).max(spectrum_d.trace / spectrum_p.lambda_max);
    let upper = (spectrum_d.lambda_max * spectrum_p.tr_inverse).min(spectrum_d.trace / spectrum_p.lambda_min);
    Ok((lower, upper))
}

/// Pilot generator family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotDistribution {
    Gaussian,
    Chisq,
    Multitone,
}

impl PilotDistribution {
    /// Draw one unit-power pilot.
    pub fn generate(self, length: usize, rng: &mut SimRng) -> Result<ComplexSequence> {
        match self {
            Self::Gaussian => gaussian_sequence(rng, length),
            Self::Chisq => chisq_amplitude_sequence(rng, length),
            Self::Multitone => {
                let tones = ((length as f64 * MULTITONE_OCCUPANCY).round() as usize).clamp(1, length.max(1));
                gen_multitone_pilot(length, tones, rng.random())
            }
        }
    }
}

impl std::str::FromStr for PilotDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "chisq" => Ok(Self::Chisq),
            "multitone" => Ok(Self::Multitone),
            other => Err(Error::InvalidConfig(format!("unknown pilot distribution {other:?}"))),
        }
    }
}

/// An evaluated ensemble member.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotCandidate {
    pub sequence: ComplexSequence,
    pub spectrum: GramSpectrum,
    pub criterion_value: f64,
    pub papr_db: f64,
    pub ensemble_index: usize,
}

/// One row of the ensemble diagnostics export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostics {
    pub index: usize,
    pub criterion: f64,
    #[serde(rename = "rank_S")]
    pub rank_s: f64,
    pub lambda_min: f64,
    pub cond2: f64,
    pub papr_db: f64,
}

impl From<&PilotCandidate> for CandidateDiagnostics {
    fn from(c: &PilotCandidate) -> Self {
        Self {
            index: c.ensemble_index,
            criterion: c.criterion_value,
            rank_s: c.spectrum.shannon_rank,
            lambda_min: c.spectrum.lambda_min,
            cond2: c.spectrum.cond2,
            papr_db: c.papr_db,
        }
    }
}

/// Ensemble diagnostics as CSV (`index,criterion,rank_S,lambda_min,cond2,papr_db`).
pub fn write_ensemble_csv<W: Write>(rows: &[CandidateDiagnostics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["index", "criterion", "rank_S", "lambda_min", "cond2", "papr_db"])?;
    }
    w.flush()?;
    Ok(())
}

/// Basis used to score pilots: GLP for PH and GLP cancellers.
pub fn scoring_basis(basis: &BasisConfig) -> BasisConfig {
    match basis.kind {
        BasisKind::Ph | BasisKind::Glp => BasisConfig {
            antennas: 1,
            ..basis.with_kind(BasisKind::Glp)
        },
        BasisKind::PhIq => BasisConfig { antennas: 1, ..*basis },
    }
}

/// Score a single pilot sequence.
pub fn evaluate_candidate(sequence: ComplexSequence, basis: &BasisConfig, ensemble_index: usize) -> Result<PilotCandidate> {
    let cfg = scoring_basis(basis);
    let needed = cfg.weight_count() + cfg.memory;
    if sequence.len() < needed {
        return Err(Error::PilotTooShort {
            rows: sequence.len().saturating_sub(cfg.memory),
            columns: cfg.weight_count(),
        });
    }
    let matrix = build_measurement_matrix(&sequence, &cfg)?;
    let spectrum = gram_spectrum(&matrix)?;
    let papr_db = stats(&sequence)?.papr_db;
    Ok(PilotCandidate {
        criterion_value: criterion(&spectrum),
        sequence,
        spectrum,
        papr_db,
        ensemble_index,
    })
}

/// Candidate `index` of the ensemble defined by `(distribution, length, seed)`.
pub fn ensemble_member(distribution: PilotDistribution, length: usize, seed: u64, index: usize) -> Result<ComplexSequence> {
    distribution.generate(length, &mut stream_rng(seed, Stream::Ensemble, index as u64, 0))
}

/// Whether `a` beats `b`: higher criterion, then lower PAPR, then lower index.
fn better(a: &PilotCandidate, b: &PilotCandidate) -> bool {
    if a.criterion_value != b.criterion_value {
        return a.criterion_value > b.criterion_value;
    }
    if a.papr_db != b.papr_db {
        return a.papr_db < b.papr_db;
    }
    a.ensemble_index < b.ensemble_index
}

/// Best of a set of already evaluated candidates.
pub fn best_candidate(candidates: Vec<PilotCandidate>) -> Option<PilotCandidate> {
    candidates.into_iter().reduce(|best, c| if better(&c, &best) { c } else { best })
}

/// Draw `ensemble_size` pilots and keep the one with the largest criterion.
pub fn select_pilot(
    ensemble_size: usize,
    length: usize,
    distribution: PilotDistribution,
    basis: &BasisConfig,
    seed: u64,
) -> Result<PilotCandidate> {
    select_pilot_with_diagnostics(ensemble_size, length, distribution, basis, seed).map(|(c, _)| c)
}

/// [`select_pilot`] plus one diagnostics row per candidate.
pub fn select_pilot_with_diagnostics(
    ensemble_size: usize,
    length: usize,
    distribution: PilotDistribution,
    basis: &BasisConfig,
    seed: u64,
) -> Result<(PilotCandidate, Vec<CandidateDiagnostics>)> {
    if ensemble_size == 0 {
        return Err(Error::InvalidConfig("ensemble size must be >= 1".into()));
    }
    let cfg = scoring_basis(basis);
    if length < cfg.weight_count() + cfg.memory {
        return Err(Error::PilotTooShort {
            rows: length.saturating_sub(cfg.memory),
            columns: cfg.weight_count(),
        });
    }
    let mut best: Option<PilotCandidate> = None;
    let mut diagnostics = Vec::with_capacity(ensemble_size);
    for index in 0..ensemble_size {
        let seq = ensemble_member(distribution, length, seed, index)?;
        let cand = evaluate_candidate(seq, &cfg, index)?;
        diagnostics.push(CandidateDiagnostics::from(&cand));
        best = match best {
            Some(b) if !better(&cand, &b) => Some(b),
            _ => Some(cand),
        };
    }
    Ok((best.expect("ensemble is non-empty"), diagnostics))
}
