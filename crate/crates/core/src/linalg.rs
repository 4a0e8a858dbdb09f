//! Dense complex least squares and Hermitian spectra.
//!
//! Least squares runs on a Householder QR of the column-equilibrated matrix,
//! `A D Pi = Q R`, so the normal equations (and their squared condition
//! number) are never formed. Column pivoting is used only when the unpivoted
//! factor looks nearly rank deficient.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition estimate above which a matrix is treated as rank deficient.
pub const RANK_DEFICIENT_CONDITION: f64 = 1e12;

/// Condition estimate above which the factorization is redone with pivoting.
const PIVOT_FALLBACK_CONDITION: f64 = 1e8;

/// A reusable least-squares factorization of a tall matrix.
#[derive(Clone, Debug)]
pub struct LsSolver {
    /// Householder vectors below the diagonal, `R` on and above it.
    factor: DMatrix<Complex64>,
    tau: Vec<Complex64>,
    /// Column scaling `D = diag(1 / ||a_j||)`.
    scale: Vec<f64>,
    /// Column `j` of `R` belongs to original column `perm[j]`.
    perm: Vec<usize>,
    pivoted: bool,
    condition: f64,
}

/// Householder QR in place (LAPACK `zgeqrf` convention,
/// `H = I - tau v v^H`, `H^H [alpha; x] = [beta; 0]`).
fn householder_qr(a: &mut DMatrix<Complex64>, pivot: bool) -> (Vec<Complex64>, Vec<usize>) {
    let (m, n) = a.shape();
    let mut tau = vec![Complex64::new(0.0, 0.0); n];
    let mut perm: Vec<usize> = (0..n).collect();
    let data = a.as_mut_slice();

    for k in 0..n {
        if pivot {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let col = &data[j * m + k..(j + 1) * m];
                let nrm: f64 = col.iter().map(|v| v.norm_sqr()).sum();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    data.swap(k * m + i, best * m + i);
                }
                perm.swap(k, best);
            }
        }

        let (head, tail) = data.split_at_mut((k + 1) * m);
        let col = &mut head[k * m + k..];
        let alpha = col[0];
        let xnorm2: f64 = col[1..].iter().map(|v| v.norm_sqr()).sum();
        if xnorm2 == 0.0 && alpha.im == 0.0 {
            tau[k] = Complex64::new(0.0, 0.0);
            continue;
        }
        let norm = (alpha.norm_sqr() + xnorm2).sqrt();
        let beta = if alpha.re >= 0.0 { -norm } else { norm };
        tau[k] = Complex64::new((beta - alpha.re) / beta, -alpha.im / beta);
        let inv = (alpha - beta).inv();
        for v in col[1..].iter_mut() {
            *v *= inv;
        }
        col[0] = Complex64::new(beta, 0.0);

        // Apply H^H to the trailing columns.
        let ctau = tau[k].conj();
        let v_tail = &col[1..];
        for j in 0..(n - k - 1) {
            let target = &mut tail[j * m + k..(j + 1) * m];
            let mut s = target[0];
            for (t, v) in target[1..].iter().zip(v_tail) {
                s += v.conj() * t;
            }
            let s = s * ctau;
            target[0] -= s;
            for (t, v) in target[1..].iter_mut().zip(v_tail) {
                *t -= s * v;
            }
        }
    }
    (tau, perm)
}

impl LsSolver {
    /// Factor a matrix with at least as many rows as columns.
    pub fn new(a: &DMatrix<Complex64>) -> Result<Self> {
        let (m, n) = a.shape();
        if n == 0 {
            return Err(Error::InvalidConfig("least squares needs at least one column".into()));
        }
        if m < n {
            return Err(Error::PilotTooShort { rows: m, columns: n });
        }
        if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("least-squares matrix"));
        }
        let scale: Vec<f64> = a
            .column_iter()
            .map(|c| {
                let nrm = c.norm();
                if nrm > 0.0 {
                    nrm.recip()
                } else {
                    0.0
                }
            })
            .collect();
        if scale.contains(&0.0) {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let mut scaled = a.clone();
        for (j, s) in scale.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }

        let mut solver = Self::factor(scaled.clone(), scale.clone(), false);
        if solver.condition > PIVOT_FALLBACK_CONDITION {
            solver = Self::factor(scaled, scale, true);
        }
        if !(solver.condition <= RANK_DEFICIENT_CONDITION) {
            return Err(Error::RankDeficient {
                condition: solver.condition,
            });
        }
        Ok(solver)
    }

    fn factor(mut scaled: DMatrix<Complex64>, scale: Vec<f64>, pivoted: bool) -> Self {
        let (tau, perm) = householder_qr(&mut scaled, pivoted);
        let n = scaled.ncols();
        let r = scaled.view((0, 0), (n, n)).upper_triangle();
        let sv = r.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        Self {
            factor: scaled,
            tau,
            scale,
            perm,
            pivoted,
            condition,
        }
    }

    pub fn rows(&self) -> usize {
        self.factor.nrows()
    }

    pub fn columns(&self) -> usize {
        self.factor.ncols()
    }

    /// 2-norm condition estimate of the equilibrated matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn pivoted(&self) -> bool {
        self.pivoted
    }

    /// `b <- Q^H b` for every column of `b`.
    fn apply_qh(&self, b: &mut DMatrix<Complex64>) {
        let (m, n) = self.factor.shape();
        let f = self.factor.as_slice();
        let cols = b.ncols();
        let data = b.as_mut_slice();
        for k in 0..n {
            let ctau = self.tau[k].conj();
            if ctau == Complex64::new(0.0, 0.0) {
                continue;
            }
            let v_tail = &f[k * m + k + 1..(k + 1) * m];
            for c in 0..cols {
                let target = &mut data[c * m + k..(c + 1) * m];
                let mut s = target[0];
                for (t, v) in target[1..].iter().zip(v_tail) {
                    s += v.conj() * t;
                }
                let s = s * ctau;
                target[0] -= s;
                for (t, v) in target[1..].iter_mut().zip(v_tail) {
                    *t -= s * v;
                }
            }
        }
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> Complex64 {
        self.factor[(i, j)]
    }

    /// Solve `min ||A x - b||` for every column of `b`; returns the solutions
    /// and the residual norm of each column.
    pub fn solve_many(&self, b: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
        let (m, n) = self.factor.shape();
        if b.nrows() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: b.nrows(),
            });
        }
        let mut work = b.clone();
        self.apply_qh(&mut work);
        let mut x = DMatrix::zeros(n, b.ncols());
        let mut residuals = Vec::with_capacity(b.ncols());
        for c in 0..b.ncols() {
            let col = work.column(c);
            residuals.push(col.rows(n, m - n).norm());
            let mut z = vec![Complex64::new(0.0, 0.0); n];
            for i in (0..n).rev() {
                let mut acc = col[i];
                for j in i + 1..n {
                    acc -= self.r(i, j) * z[j];
                }
                z[i] = acc / self.r(i, i);
            }
            for (j, zj) in z.into_iter().enumerate() {
                let orig = self.perm[j];
                x[(orig, c)] = zj * self.scale[orig];
            }
        }
        Ok((x, residuals))
    }

    /// Solve for a single right-hand side.
    pub fn solve(&self, b: &[Complex64]) -> Result<(DVector<Complex64>, f64)> {
        let rhs = DMatrix::from_column_slice(b.len(), 1, b);
        let (x, res) = self.solve_many(&rhs)?;
        Ok((DVector::from_column_slice(x.as_slice()), res[0]))
    }

    /// `B D Pi R^{-1}`, so that `||whiten(B)||_F^2 = tr((A^H A)^{-1} B^H B)`.
    pub fn whiten(&self, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let n = self.columns();
        if b.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.ncols(),
            });
        }
        let rows = b.nrows();
        let mut x = DMatrix::zeros(rows, n);
        for j in 0..n {
            let orig = self.perm[j];
            let mut col: DVector<Complex64> = b.column(orig) * Complex64::new(self.scale[orig], 0.0);
            for i in 0..j {
                let rij = self.r(i, j);
                if rij != Complex64::new(0.0, 0.0) {
                    col.axpy(-rij, &x.column(i), Complex64::new(1.0, 0.0));
                }
            }
            let inv = self.r(j, j).inv();
            col *= inv;
            x.set_column(j, &col);
        }
        Ok(x)
    }

    /// `tr((A^H A)^{-1} B^H B)`.
    pub fn trace_inverse_gram_with(&self, b: &DMatrix<Complex64>) -> Result<f64> {
        Ok(self.whiten(b)?.norm_squared())
    }

    /// `tr((A^H A)^{-1})`.
    pub fn trace_inverse_gram(&self) -> f64 {
        let n = self.columns();
        self.whiten(&DMatrix::identity(n, n))
            .map(|w| w.norm_squared())
            .unwrap_or(f64::INFINITY)
    }
}

/// Eigenvalues of a Hermitian matrix, sorted descending.
pub fn hermitian_eigenvalues(g: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = g.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Eigenpairs of a Hermitian matrix, sorted by descending eigenvalue.
pub fn hermitian_eigen(g: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(g.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(g.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `A^H A`, exploiting Hermitian symmetry.
pub fn gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.ncols();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        let cj = a.column(j);
        for i in 0..=j {
            let v = a.column(i).dotc(&cj);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}
