//! Polynomial basis functions and measurement matrices.
//!
//! Two equivalent bases span the odd-order memoryless nonlinearity used by
//! the canceller:
//!
//! * the parallel Hammerstein (PH) monomials `phi_p(x) = |x|^{p-1} x`, and
//! * the generalized Laguerre (GLP) functions
//!   `psi_p(x) = sqrt(2/(p+1)) L^1_{(p-1)/2}(|x|^2) x`, which are orthonormal
//!   when `x ~ CN(0, 1)`.
//!
//! They are related by an upper-triangular matrix of coefficients `l_{p,q}`,
//! `psi_p = sum_q l_{p,q} phi_q`. Measurement matrices lay out one column per
//! (delay, order) pair with orders varying fastest, so the full transform is
//! `T = I_{L_h+1} (x) L`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::ComplexSequence;

/// Largest Laguerre index evaluated with the explicit Horner sum.
const HORNER_MAX_INDEX: usize = 8;

/// Canceller basis family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Ph,
    Glp,
    /// PH extended with conjugate monomials `x^q (x*)^{p-q}`.
    PhIq,
}

/// Canceller structure: nonlinear order, memory and antenna count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisConfig {
    pub order: usize,
    /// Channel taps minus one.
    pub memory: usize,
    pub kind: BasisKind,
    pub antennas: usize,
}

impl BasisConfig {
    pub fn new(order: usize, memory: usize, kind: BasisKind) -> Result<Self> {
        Self::with_antennas(order, memory, kind, 1)
    }

    pub fn with_antennas(order: usize, memory: usize, kind: BasisKind, antennas: usize) -> Result<Self> {
        let cfg = Self {
            order,
            memory,
            kind,
            antennas,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.order)?;
        if self.antennas == 0 {
            return Err(Error::InvalidConfig("antenna count must be >= 1".into()));
        }
        Ok(())
    }

    /// Same structure with a different basis family.
    pub fn with_kind(self, kind: BasisKind) -> Self {
        Self { kind, ..self }
    }

    pub fn taps(&self) -> usize {
        self.memory + 1
    }

    /// Basis functions per delay.
    pub fn branches(&self) -> usize {
        match self.kind {
            BasisKind::Ph | BasisKind::Glp => self.order.div_ceil(2),
            BasisKind::PhIq => (self.order + 1) * (self.order + 3) / 4,
        }
    }

    /// Weights per antenna pair, `L_w`.
    pub fn weight_count(&self) -> usize {
        self.branches() * self.taps()
    }

    /// Columns of the (possibly multi-antenna) measurement matrix.
    pub fn columns(&self) -> usize {
        self.weight_count() * self.antennas
    }

    /// Odd orders `1, 3, ..., P`.
    pub fn orders(&self) -> impl Iterator<Item = usize> {
        (1..=self.order).step_by(2)
    }
}

fn check_order(p: usize) -> Result<()> {
    if p == 0 || p % 2 == 0 {
        Err(Error::InvalidOrder { order: p })
    } else {
        Ok(())
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn factorial(n: u64) -> u128 {
    (1..=n as u128).product()
}

/// PH basis function `|x|^{p-1} x`.
pub fn phi(x: Complex64, p: usize) -> Result<Complex64> {
    check_order(p)?;
    Ok(phi_unchecked(x, p))
}

#[inline]
fn phi_unchecked(x: Complex64, p: usize) -> Complex64 {
    x * x.norm_sqr().powi(((p - 1) / 2) as i32)
}

/// Coefficients of `L^1_i(t) = sum_k a_k t^k`, `a_k = (-1)^k C(i+1, k+1) / k!`.
fn laguerre_coefficients(i: usize) -> Vec<f64> {
    (0..=i as u64)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(i as u64 + 1, k + 1) as f64 / factorial(k) as f64
        })
        .collect()
}

/// Generalized Laguerre polynomial `L^1_i(t)`.
///
/// Horner on the explicit coefficients up to `i = 8`; the three-term
/// recurrence beyond that, where the alternating sum loses digits.
pub fn laguerre_l1(i: i64, t: f64) -> Result<f64> {
    if i < 0 {
        return Err(Error::InvalidConfig(format!("Laguerre index must be >= 0, got {i}")));
    }
    Ok(laguerre_l1_unchecked(i as usize, t))
}

fn laguerre_l1_unchecked(i: usize, t: f64) -> f64 {
    if i <= HORNER_MAX_INDEX {
        laguerre_coefficients(i)
            .iter()
            .rev()
            .fold(0.0, |acc, &a| acc * t + a)
    } else {
        laguerre_l1_recurrence(i, t)
    }
}

/// `(k+1) L_{k+1} = (2k + 2 - t) L_k - (k+1) L_{k-1}` for alpha = 1.
pub(crate) fn laguerre_l1_recurrence(i: usize, t: f64) -> f64 {
    let mut prev = 1.0;
    if i == 0 {
        return prev;
    }
    let mut cur = 2.0 - t;
    for k in 1..i {
        let kf = k as f64;
        let next = ((2.0 * kf + 2.0 - t) * cur - (kf + 1.0) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Expansion coefficient `l_{p,q}` of `psi_p` on `phi_q`.
pub fn coeff_l(p: usize, q: usize) -> Result<f64> {
    check_order(p)?;
    check_order(q)?;
    if q > p {
        return Err(Error::InvalidConfig(format!("l_(p,q) needs p >= q, got p={p} q={q}")));
    }
    Ok(coeff_l_unchecked(p, q))
}

fn coeff_l_unchecked(p: usize, q: usize) -> f64 {
    let k = ((q - 1) / 2) as u64;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let scale = (2.0 / (p as f64 + 1.0)).sqrt();
    scale * sign * binomial(p.div_ceil(2) as u64, k + 1) as f64 / factorial(k) as f64
}

/// GLP basis function `sqrt(2/(p+1)) L^1_{(p-1)/2}(|x|^2) x`.
pub fn psi(x: Complex64, p: usize) -> Result<Complex64> {
    check_order(p)?;
    Ok(psi_unchecked(x, p))
}

#[inline]
fn psi_unchecked(x: Complex64, p: usize) -> Complex64 {
    let scale = (2.0 / (p as f64 + 1.0)).sqrt();
    x * (scale * laguerre_l1_unchecked((p - 1) / 2, x.norm_sqr()))
}

/// `psi_p` through the monomial expansion `sum_k l_{p,2k+1} |x|^{2k} x`.
pub fn psi_via_monomials(x: Complex64, p: usize) -> Result<Complex64> {
    check_order(p)?;
    let t = x.norm_sqr();
    let mut acc = 0.0;
    let mut tk = 1.0;
    for q in (1..=p).step_by(2) {
        acc += coeff_l_unchecked(p, q) * tk;
        tk *= t;
    }
    Ok(x * acc)
}

/// PH+IQ monomial `x^q (x*)^{p-q}`.
pub fn iq_monomial(x: Complex64, p: usize, q: usize) -> Complex64 {
    x.powu(q as u32) * x.conj().powu((p - q) as u32)
}

/// The `L_w x L_w` matrix mapping PH regressors to GLP regressors,
/// `Psi = Phi T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformMatrix {
    block: DMatrix<f64>,
    taps: usize,
}

impl TransformMatrix {
    /// The `(P+1)/2` square upper-triangular block `L`.
    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn dim(&self) -> usize {
        self.block.nrows() * self.taps
    }

    /// Dense `I_{L_h+1} (x) L`.
    pub fn entries(&self) -> DMatrix<Complex64> {
        let b = self.block.nrows();
        let mut t = DMatrix::zeros(self.dim(), self.dim());
        for d in 0..self.taps {
            for i in 0..b {
                for j in 0..b {
                    t[(d * b + i, d * b + j)] = Complex64::new(self.block[(i, j)], 0.0);
                }
            }
        }
        t
    }

    /// `T v`, applied block by block (also valid for stacked antennas).
    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let b = self.block.nrows();
        assert_eq!(v.len() % b, 0, "vector length must be a multiple of the block size");
        let mut out = DVector::zeros(v.len());
        for (chunk_out, chunk_in) in out
            .as_mut_slice()
            .chunks_mut(b)
            .zip(v.as_slice().chunks(b))
        {
            for i in 0..b {
                chunk_out[i] = (i..b).map(|j| chunk_in[j] * self.block[(i, j)]).sum();
            }
        }
        out
    }

    /// `T^{-1} v` by block back substitution.
    pub fn solve(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let b = self.block.nrows();
        assert_eq!(v.len() % b, 0, "vector length must be a multiple of the block size");
        let mut out = DVector::zeros(v.len());
        for (chunk_out, chunk_in) in out
            .as_mut_slice()
            .chunks_mut(b)
            .zip(v.as_slice().chunks(b))
        {
            for i in (0..b).rev() {
                let tail: Complex64 = (i + 1..b).map(|j| chunk_out[j] * self.block[(i, j)]).sum();
                chunk_out[i] = (chunk_in[i] - tail) / self.block[(i, i)];
            }
        }
        out
    }
}

/// Build `T` for a PH/GLP configuration; `L[i][j] = l_{p_j, p_i}`.
pub fn build_transform(config: &BasisConfig) -> Result<TransformMatrix> {
    config.validate()?;
    if config.kind == BasisKind::PhIq {
        return Err(Error::Unsupported("no GLP analogue for the PH+IQ basis"));
    }
    let orders: Vec<usize> = config.orders().collect();
    let b = orders.len();
    let block = DMatrix::from_fn(b, b, |i, j| {
        if i <= j {
            coeff_l_unchecked(orders[j], orders[i])
        } else {
            0.0
        }
    });
    Ok(TransformMatrix {
        block,
        taps: config.taps(),
    })
}

/// Whether a matrix is built from a pilot or a data sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Pilot,
    Data,
}

/// Regression matrix with one row per time index `n = L_h, ..., L-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    pub entries: DMatrix<Complex64>,
    pub basis: BasisConfig,
    pub source: SourceKind,
}

impl MeasurementMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn columns(&self) -> usize {
        self.entries.ncols()
    }

    /// Tag as pilot or data.
    pub fn with_source(mut self, source: SourceKind) -> Self {
        self.source = source;
        self
    }
}

/// Per-sample basis values, `branches` entries per sample.
fn basis_table(samples: &[Complex64], config: &BasisConfig) -> Vec<Complex64> {
    let b = config.branches();
    let mut table = Vec::with_capacity(samples.len() * b);
    match config.kind {
        BasisKind::Ph => {
            for &x in samples {
                let t = x.norm_sqr();
                let mut v = x;
                for _ in 0..b {
                    table.push(v);
                    v *= t;
                }
            }
        }
        BasisKind::Glp => {
            // psi_p(x) = x * sum_k l_{p,2k+1} t^k with t = |x|^2.
            let polys: Vec<Vec<f64>> = config
                .orders()
                .map(|p| (1..=p).step_by(2).map(|q| coeff_l_unchecked(p, q)).collect())
                .collect();
            if config.order > 2 * HORNER_MAX_INDEX + 1 {
                let orders: Vec<usize> = config.orders().collect();
                for &x in samples {
                    table.extend(orders.iter().map(|&p| psi_unchecked(x, p)));
                }
            } else {
                for &x in samples {
                    let t = x.norm_sqr();
                    table.extend(
                        polys
                            .iter()
                            .map(|c| x * c.iter().rev().fold(0.0, |acc, &a| acc * t + a)),
                    );
                }
            }
        }
        BasisKind::PhIq => {
            for &x in samples {
                for p in config.orders() {
                    for q in 0..=p {
                        table.push(iq_monomial(x, p, q));
                    }
                }
            }
        }
    }
    table
}

fn fill_block(
    entries: &mut DMatrix<Complex64>,
    col_offset: usize,
    samples: &[Complex64],
    config: &BasisConfig,
) {
    let b = config.branches();
    let table = basis_table(samples, config);
    let rows = samples.len() - config.memory;
    for delay in 0..config.taps() {
        for branch in 0..b {
            let col = col_offset + delay * b + branch;
            let mut column = entries.column_mut(col);
            for r in 0..rows {
                let n = r + config.memory;
                column[r] = table[(n - delay) * b + branch];
            }
        }
    }
}

/// Measurement matrix of a single-antenna sequence.
pub fn build_measurement_matrix(
    seq: &ComplexSequence,
    config: &BasisConfig,
) -> Result<MeasurementMatrix> {
    build_mimo_matrix(std::slice::from_ref(seq), &BasisConfig { antennas: 1, ..*config })
}

/// Horizontal concatenation `[Phi_1 ... Phi_M]` of per-antenna matrices.
pub fn build_mimo_matrix(
    sequences: &[ComplexSequence],
    config: &BasisConfig,
) -> Result<MeasurementMatrix> {
    config.validate()?;
    if sequences.len() != config.antennas {
        return Err(Error::DimensionMismatch {
            expected: config.antennas,
            found: sequences.len(),
        });
    }
    let len = sequences[0].len();
    if let Some(bad) = sequences.iter().find(|s| s.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: bad.len(),
        });
    }
    if len < config.taps() {
        return Err(Error::SequenceTooShort {
            len,
            needed: config.taps(),
        });
    }
    let rows = len - config.memory;
    let per = config.weight_count();
    let mut entries = DMatrix::zeros(rows, per * config.antennas);
    for (m, seq) in sequences.iter().enumerate() {
        fill_block(&mut entries, m * per, seq.samples(), config);
    }
    Ok(MeasurementMatrix {
        entries,
        basis: *config,
        source: SourceKind::Data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::gen_gaussian_sequence;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn phi_examples() {
        let x = c(0.3, -1.2);
        assert_eq!(phi(x, 1).unwrap(), x);
        assert_eq!(phi(c(0.0, 0.0), 7).unwrap(), c(0.0, 0.0));
        assert_eq!(phi(c(1.0, 0.0), 3).unwrap(), c(1.0, 0.0));
        assert!(matches!(phi(x, 4), Err(Error::InvalidOrder { order: 4 })));
        assert!(matches!(phi(x, 0), Err(Error::InvalidOrder { order: 0 })));
    }

    #[test]
    fn laguerre_low_orders() {
        for &t in &[0.0, 0.3, 1.0, 7.5] {
            assert_eq!(laguerre_l1(0, t).unwrap(), 1.0);
            // Symbolic expansion: L_1^1(t) = C(2,1) - C(2,2) t.
            assert!((laguerre_l1(1, t).unwrap() - (2.0 - t)).abs() < 1e-15);
        }
        assert!(laguerre_l1(-1, 1.0).is_err());
    }

    #[test]
    fn horner_and_recurrence_agree() {
        for i in 0..=HORNER_MAX_INDEX {
            for &t in &[0.0, 0.5, 2.0, 5.0, 12.0] {
                let a = laguerre_l1_unchecked(i, t);
                let b = laguerre_l1_recurrence(i, t);
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "i={i} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn coeff_examples() {
        assert!((coeff_l(1, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((coeff_l(3, 1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((coeff_l(3, 3).unwrap() + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(coeff_l(3, 5).is_err());
        assert!(coeff_l(4, 1).is_err());
    }

    #[test]
    fn psi_examples() {
        let x = c(-0.4, 0.9);
        assert_eq!(psi(x, 1).unwrap(), x);
        let v = psi(c(1.0, 0.0), 3).unwrap();
        assert!((v.re - 1.0 / 2f64.sqrt()).abs() < 1e-15 && v.im == 0.0);
        assert!(psi(x, 2).is_err());
    }

    #[test]
    fn psi_forms_agree() {
        for p in (1..=11).step_by(2) {
            for k in 0..40 {
                let r = 4.0 * k as f64 / 39.0;
                let x = Complex64::from_polar(r, 0.37 * k as f64);
                let a = psi(x, p).unwrap();
                let b = psi_via_monomials(x, p).unwrap();
                assert!((a - b).norm() <= 1e-12 * a.norm().max(b.norm()).max(1e-300) + 1e-300,
                    "p={p} |x|={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn transform_examples() {
        let t1 = build_transform(&BasisConfig::new(1, 0, BasisKind::Ph).unwrap()).unwrap();
        assert_eq!(t1.block().as_slice(), &[1.0]);

        let t3 = build_transform(&BasisConfig::new(3, 0, BasisKind::Glp).unwrap()).unwrap();
        let b = t3.block();
        assert!((b[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((b[(0, 1)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(b[(1, 0)], 0.0);
        assert!((b[(1, 1)] + 1.0 / 2f64.sqrt()).abs() < 1e-15);

        let iq = BasisConfig::new(3, 0, BasisKind::PhIq).unwrap();
        assert!(matches!(build_transform(&iq), Err(Error::Unsupported(_))));
    }

    #[test]
    fn transform_is_block_diagonal_with_identical_blocks() {
        let cfg = BasisConfig::new(7, 3, BasisKind::Ph).unwrap();
        let t = build_transform(&cfg).unwrap();
        let dense = t.entries();
        let b = t.block().nrows();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                let expected = if i / b == j / b { t.block()[(i % b, j % b)] } else { 0.0 };
                assert_eq!(dense[(i, j)], Complex64::new(expected, 0.0));
            }
        }
        let v = DVector::from_fn(dense.ncols(), |i, _| c(i as f64, 1.0 - i as f64));
        let back = t.solve(&t.apply(&v));
        assert!((back - v).norm() < 1e-10);
    }

    #[test]
    fn ph_times_transform_equals_glp() {
        for &(p, lh) in &[(1, 0), (5, 2), (9, 4), (11, 8)] {
            let seq = gen_gaussian_sequence(200, (p * 31 + lh) as u64).unwrap();
            let ph = build_measurement_matrix(&seq, &BasisConfig::new(p, lh, BasisKind::Ph).unwrap())
                .unwrap();
            let glp = build_measurement_matrix(&seq, &BasisConfig::new(p, lh, BasisKind::Glp).unwrap())
                .unwrap();
            let t = build_transform(&ph.basis).unwrap().entries();
            let prod = &ph.entries * t;
            for j in 0..glp.columns() {
                let col = glp.entries.column(j);
                let err = (prod.column(j) - col).norm() / col.norm();
                assert!(err < 1e-10, "p={p} lh={lh} col {j}: {err}");
            }
        }
    }

    #[test]
    fn measurement_matrix_layout_and_dims() {
        let seq = gen_gaussian_sequence(40, 9).unwrap();
        let cfg = BasisConfig::new(5, 3, BasisKind::Ph).unwrap();
        let m = build_measurement_matrix(&seq, &cfg).unwrap();
        assert_eq!(m.rows(), 40 - 3);
        assert_eq!(m.columns(), (5 + 1) * (3 + 1) / 2);
        let x = seq.samples();
        for r in [0usize, 10, 36] {
            let n = r + 3;
            for delay in 0..=3 {
                for (bi, p) in [1usize, 3, 5].iter().enumerate() {
                    let expected = phi(x[n - delay], *p).unwrap();
                    let got = m.entries[(r, delay * 3 + bi)];
                    assert!((got - expected).norm() <= 1e-14 * expected.norm().max(1.0));
                }
            }
        }

        let zeros = ComplexSequence::new(vec![c(0.0, 0.0); 10]).unwrap();
        let z = build_measurement_matrix(&zeros, &cfg).unwrap();
        assert!(z.entries.iter().all(|v| *v == c(0.0, 0.0)));

        let short = gen_gaussian_sequence(3, 1).unwrap();
        assert!(matches!(
            build_measurement_matrix(&short, &cfg),
            Err(Error::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn iq_column_enumeration() {
        // Enumerate x^q (x*)^{p-q} for p in {1, 3}, q in 0..=p.
        let mut terms = Vec::new();
        for p in [1usize, 3] {
            for q in 0..=p {
                terms.push((p, q));
            }
        }
        assert_eq!(terms.len(), 6);
        let cfg = BasisConfig::new(3, 0, BasisKind::PhIq).unwrap();
        assert_eq!(cfg.weight_count(), 6);
        let seq = gen_gaussian_sequence(5, 4).unwrap();
        let m = build_measurement_matrix(&seq, &cfg).unwrap();
        assert_eq!(m.columns(), 6);
        let x = seq.samples()[2];
        for (j, (p, q)) in terms.iter().enumerate() {
            let direct = x.powu(*q as u32) * x.conj().powu((*p - *q) as u32);
            assert!((m.entries[(2, j)] - direct).norm() < 1e-14);
        }
        let cfg9 = BasisConfig::new(9, 8, BasisKind::PhIq).unwrap();
        assert_eq!(cfg9.weight_count(), 9 * 10 * 12 / 4);
    }

    #[test]
    fn mimo_matrix_concatenates() {
        let a = gen_gaussian_sequence(30, 1).unwrap();
        let b = gen_gaussian_sequence(30, 2).unwrap();
        let cfg = BasisConfig::with_antennas(3, 2, BasisKind::Glp, 2).unwrap();
        let m = build_mimo_matrix(&[a.clone(), b.clone()], &cfg).unwrap();
        assert_eq!(m.columns(), 2 * (3 + 1) * (2 + 1) / 2);
        let single = build_measurement_matrix(&b, &cfg).unwrap();
        let w = cfg.weight_count();
        assert_eq!(m.entries.columns(w, w), single.entries.columns(0, w));

        let short = gen_gaussian_sequence(29, 3).unwrap();
        assert!(build_mimo_matrix(&[a, short], &cfg).is_err());
    }
}
