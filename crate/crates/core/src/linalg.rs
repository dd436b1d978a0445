//! Dense symmetric positive-definite linear algebra.
//!
//! Cholesky factors are kept in packed lower-triangular row storage so that
//! bordering a factor with one new row and column is an append: the leading
//! block is never touched, and the new row costs one forward substitution.

use crate::error::{check_dim, Error, Result};

/// First diagonal jitter tried, relative to the mean of the diagonal.
pub const JITTER_START: f64 = 1e-10;
/// Largest diagonal jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SpdMatrix {
    /// Builds a matrix from row-major entries, checking symmetry and a
    /// strictly positive diagonal.
    pub fn new(order: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim(order * order, entries.len())?;
        let m = SpdMatrix { order, entries };
        for i in 0..order {
            let d = m.get(i, i);
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
            for j in 0..i {
                let (a, b) = (m.get(i, j), m.get(j, i));
                let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: d });
                }
            }
        }
        Ok(m)
    }

    /// Builds a symmetric matrix from the lower triangle of `f(i, j)`.
    ///
    /// No validation is performed beyond what the generator guarantees.
    pub fn from_lower_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; order * order];
        for i in 0..order {
            for j in 0..=i {
                let v = f(i, j);
                entries[i * order + j] = v;
                entries[j * order + i] = v;
            }
        }
        SpdMatrix { order, entries }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_lower_fn(order, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn mean_diagonal(&self) -> f64 {
        if self.order == 0 {
            return 0.0;
        }
        (0..self.order).map(|i| self.get(i, i)).sum::<f64>() / self.order as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.order, x.len())?;
        Ok((0..self.order)
            .map(|i| {
                let row = &self.entries[i * self.order..(i + 1) * self.order];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect())
    }
}

/// Lower-triangular Cholesky factor `L` with `K + jitter·I = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    order: usize,
    /// Row `i` occupies `packed[i(i+1)/2 .. i(i+1)/2 + i + 1]`.
    packed: Vec<f64>,
    jitter: f64,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl CholeskyFactor {
    /// The factor of a 0×0 matrix. Appending to it yields a 1×1 factor.
    pub fn empty() -> Self {
        CholeskyFactor {
            order: 0,
            packed: Vec::new(),
            jitter: 0.0,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Diagonal jitter that was added to the source matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Row `i` up to and including the diagonal.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let s = row_start(i);
        &self.packed[s..s + i + 1]
    }

    /// Entry `(i, j)`; zero above the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[row_start(i) + j]
        }
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.order).map(move |i| self.packed[row_start(i) + i])
    }

    /// `log det(L·Lᵀ) = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diagonal().map(f64::ln).sum::<f64>()
    }

    /// Forms `L·Lᵀ`.
    pub fn reconstruct(&self) -> SpdMatrix {
        SpdMatrix::from_lower_fn(self.order, |i, j| {
            self.row(i)[..=j]
                .iter()
                .zip(&self.row(j)[..=j])
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Computes the last row of the factor of the bordered matrix
    /// `[[K, k_cross], [k_crossᵀ, k_self]]` without building it.
    ///
    /// Returns the off-diagonal part `L⁻¹ k_cross` and the new diagonal entry.
    pub fn bordered_row(&self, k_cross: &[f64], k_self: f64) -> Result<(Vec<f64>, f64)> {
        let row = solve_lower(self, k_cross)?;
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let pivot = k_self + self.jitter - sq;
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { row: self.order, pivot });
        }
        Ok((row, pivot.sqrt()))
    }

    /// Appends a precomputed bordered row in place.
    pub fn push_row(&mut self, row: &[f64], diag: f64) -> Result<()> {
        check_dim(self.order, row.len())?;
        self.packed.extend_from_slice(row);
        self.packed.push(diag);
        self.order += 1;
        Ok(())
    }
}

fn factor_once(k: &SpdMatrix, jitter: f64) -> Result<CholeskyFactor> {
    let n = k.order();
    let mut packed = vec![0.0; row_start(n)];
    for i in 0..n {
        let si = row_start(i);
        for j in 0..=i {
            let sj = row_start(j);
            let mut s = k.get(i, j);
            for p in 0..j {
                s -= packed[si + p] * packed[sj + p];
            }
            if i == j {
                s += jitter;
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                packed[si + i] = s.sqrt();
            } else {
                packed[si + j] = s / packed[sj + j];
            }
        }
    }
    Ok(CholeskyFactor {
        order: n,
        packed,
        jitter,
    })
}

/// Cholesky–Banachiewicz factorization with diagonal jitter escalation.
///
/// The plain factorization is tried first; on failure `1e-10·mean(diag)` is
/// added to the diagonal and multiplied by ten per retry up to
/// `1e-4·mean(diag)`.
pub fn cholesky(k: &SpdMatrix) -> Result<CholeskyFactor> {
    let first_err = match factor_once(k, 0.0) {
        Ok(f) => return Ok(f),
        Err(e) => e,
    };
    let base = k.mean_diagonal().abs();
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        if let Ok(f) = factor_once(k, rel * base) {
            log::debug!("cholesky succeeded with relative jitter {rel:e}");
            return Ok(f);
        }
        rel *= 10.0;
    }
    Err(first_err)
}

/// Forward substitution: solves `L·v = b` in O(n²).
pub fn solve_lower(l: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.order(), b.len())?;
    let mut v = Vec::with_capacity(b.len());
    for (i, &bi) in b.iter().enumerate() {
        let row = l.row(i);
        let s: f64 = row[..i].iter().zip(&v).map(|(a, b)| a * b).sum();
        v.push((bi - s) / row[i]);
    }
    Ok(v)
}

/// Back substitution: solves `Lᵀ·x = b` in O(n²).
pub fn solve_upper_transposed(l: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.order(), b.len())?;
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        x[i] /= l.get(i, i);
        let xi = x[i];
        for (j, lij) in l.row(i)[..i].iter().enumerate() {
            x[j] -= lij * xi;
        }
    }
    Ok(x)
}

/// Solves `(L·Lᵀ)·x = b`.
pub fn solve_spd(l: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    let v = solve_lower(l, b)?;
    solve_upper_transposed(l, &v)
}

/// Factor of the bordered matrix `[[K, k_cross], [k_crossᵀ, k_self]]` given
/// the factor of `K`. The leading block is copied unchanged.
pub fn chol_append(l: &CholeskyFactor, k_cross: &[f64], k_self: f64) -> Result<CholeskyFactor> {
    let (row, diag) = l.bordered_row(k_cross, k_self)?;
    let mut out = l.clone();
    out.push_row(&row, diag)?;
    Ok(out)
}
