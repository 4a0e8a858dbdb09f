//! Complex baseband sequences: generation, normalization and PAPR statistics.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// A finite complex baseband sample vector.
///
/// `nominal_power` is the mean of `|x[n]|^2` and is kept in sync by every
/// constructor and transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSequence {
    samples: Vec<Complex64>,
    nominal_power: f64,
}

/// Peak/mean power summary of a sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceStats {
    pub papr_db: f64,
    pub peak_power: f64,
    pub mean_power: f64,
    pub length: usize,
}

fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

impl ComplexSequence {
    /// Wrap raw samples. Fails on NaN/Inf.
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::NonFinite("sequence samples"));
        }
        let nominal_power = mean_power(&samples);
        Ok(Self {
            samples,
            nominal_power,
        })
    }

    pub(crate) fn from_trusted(samples: Vec<Complex64>) -> Self {
        let nominal_power = mean_power(&samples);
        Self {
            samples,
            nominal_power,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal_power(&self) -> f64 {
        self.nominal_power
    }

    pub fn energy(&self) -> f64 {
        self.nominal_power * self.samples.len() as f64
    }

    /// Rescale to unit average power, `x * sqrt(L) / ||x||_2`.
    pub fn normalized(&self) -> Result<Self> {
        if self.samples.is_empty() {
            return Err(Error::EmptySequence);
        }
        if self.nominal_power <= 0.0 {
            return Err(Error::ZeroPower);
        }
        let g = self.nominal_power.sqrt().recip();
        Ok(Self::from_trusted(
            self.samples.iter().map(|s| s * g).collect(),
        ))
    }

    /// Multiply every sample by a complex gain.
    pub fn scaled(&self, gain: Complex64) -> Self {
        Self::from_trusted(self.samples.iter().map(|s| s * gain).collect())
    }

    /// Element-wise map.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_trusted(self.samples.iter().map(|&s| f(s)).collect())
    }

    /// Element-wise sum. Lengths must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(Self::from_trusted(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    /// Element-wise difference. Lengths must match.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    /// Samples `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::SequenceTooShort {
                len: self.len(),
                needed: start + len,
            });
        }
        Ok(Self::from_trusted(self.samples[start..start + len].to_vec()))
    }

    /// Write as CSV with a `re,im` header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["re", "im"])?;
        for s in &self.samples {
            w.write_record([format!("{:.17e}", s.re), format!("{:.17e}", s.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the format produced by [`ComplexSequence::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut samples = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("bad sequence CSV row: {record:?}")))
            };
            samples.push(Complex64::new(parse(0)?, parse(1)?));
        }
        Self::new(samples)
    }
}

/// Draw `length` i.i.d. CN(0, 1) samples without normalization.
pub fn gaussian_samples<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Vec<Complex64> {
    let sigma = std::f64::consts::FRAC_1_SQRT_2;
    (0..length)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * sigma, im * sigma)
        })
        .collect()
}

/// Circular Gaussian sequence normalized to unit average power.
pub fn gaussian_sequence<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Result<ComplexSequence> {
    if length == 0 {
        return Err(Error::EmptySequence);
    }
    ComplexSequence::from_trusted(gaussian_samples(rng, length)).normalized()
}

pub fn gen_gaussian_sequence(length: usize, seed: u64) -> Result<ComplexSequence> {
    gaussian_sequence(&mut rng::seeded(seed), length)
}

/// Raw amplitudes drawn from the chi-square law with 4 degrees of freedom,
/// `f(a) = a e^{-a/2} / 4`.
pub fn chisq_amplitudes<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Vec<f64> {
    let dist = ChiSquared::new(4.0).expect("4 degrees of freedom is valid");
    (0..length).map(|_| dist.sample(rng)).collect()
}

/// Uniform-phase sequence with chi-square(4) amplitudes, normalized to unit
/// average power. Heavier amplitude tail than the Gaussian pilot.
pub fn chisq_amplitude_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
) -> Result<ComplexSequence> {
    if length == 0 {
        return Err(Error::EmptySequence);
    }
    let amps = chisq_amplitudes(rng, length);
    let samples = amps
        .into_iter()
        .map(|a| {
            let phase: f64 = rng.random::<f64>() * 2.0 * PI;
            Complex64::from_polar(a, phase)
        })
        .collect();
    ComplexSequence::from_trusted(samples).normalized()
}

pub fn gen_chisq_amplitude_sequence(length: usize, seed: u64) -> Result<ComplexSequence> {
    chisq_amplitude_sequence(&mut rng::seeded(seed), length)
}

/// Equal-magnitude multitone with Newman phases `pi k^2 / K` on a contiguous
/// block of `num_tones` frequency bins.
///
/// The seed only picks a cyclic frequency offset for the block, which leaves
/// the envelope (and hence the PAPR) unchanged.
pub fn gen_multitone_pilot(length: usize, num_tones: usize, seed: u64) -> Result<ComplexSequence> {
    if length == 0 {
        return Err(Error::EmptySequence);
    }
    if num_tones == 0 || num_tones > length {
        return Err(Error::InvalidConfig(format!(
            "multitone pilot needs 1 <= num_tones <= length, got {num_tones} tones for {length} samples"
        )));
    }
    let offset = (rng::seeded(seed).random::<u64>() % length as u64) as i64;
    let k_count = num_tones as f64;
    let first = offset - (num_tones as i64) / 2;
    let mut samples = vec![Complex64::new(0.0, 0.0); length];
    for k in 0..num_tones {
        let freq = (first + k as i64).rem_euclid(length as i64) as f64;
        let phase0 = PI * (k as f64).powi(2) / k_count;
        for (n, s) in samples.iter_mut().enumerate() {
            // Reduce the phase argument modulo 2pi in integer arithmetic.
            let cyc = ((freq as u64 * n as u64) % length as u64) as f64;
            *s += Complex64::from_polar(1.0, 2.0 * PI * cyc / length as f64 + phase0);
        }
    }
    ComplexSequence::from_trusted(samples).normalized()
}

/// Peak power, mean power and PAPR.
pub fn stats(seq: &ComplexSequence) -> Result<SequenceStats> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mean = seq.nominal_power();
    if mean <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let peak = seq
        .samples()
        .iter()
        .map(|s| s.norm_sqr())
        .fold(0.0f64, f64::max);
    Ok(SequenceStats {
        papr_db: 10.0 * (peak / mean).log10(),
        peak_power: peak,
        mean_power: mean,
        length: seq.len(),
    })
}
