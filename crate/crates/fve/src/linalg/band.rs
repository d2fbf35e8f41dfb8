//! Banded direct factorizations.
//!
//! All local Dirichlet blocks, the coarse Gram matrix and the global FEM
//! operator are banded under row-major grid numbering, so a band Cholesky
//! (symmetric positive definite case) and a band LU with partial pivoting
//! (general case) cover every direct solve in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("matrix not positive definite at row {row} (pivot {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix singular at column {col}")]
    Singular { col: usize },
}

/// Cholesky factorization A = L L^T of a banded SPD matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // L[i, j] for j in [i - bw, i] stored at l[i * (bw + 1) + (j + bw - i)].
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factors the banded matrix defined by `get(i, j)` (lower triangle is
    /// read, |i - j| <= bw assumed zero outside the band).
    pub fn factor(n: usize, bw: usize, get: impl Fn(usize, usize) -> f64) -> Result<Self, FactorError> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                l[i * w + (j + bw - i)] = get(i, j);
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let kmin = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in kmin..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j < i {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                } else {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(FactorError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[i * w + bw] = s.sqrt();
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = self.solve_lower(b);
        self.solve_upper(&y)
    }

    /// Solves L y = b (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let w = self.bw + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let mut s = y[i];
            for j in j0..i {
                s -= self.l[i * w + (j + self.bw - i)] * y[j];
            }
            y[i] = s / self.l[i * w + self.bw];
        }
        y
    }

    /// Solves L^T x = y (back substitution).
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n, "solve dimension mismatch");
        let w = self.bw + 1;
        let mut x = y.to_vec();
        for i in (0..self.n).rev() {
            let jmax = (i + self.bw).min(self.n - 1);
            let mut s = x[i];
            for j in i + 1..=jmax {
                // L[j, i] lives in row j at offset i + bw - j.
                s -= self.l[j * w + (i + self.bw - j)] * x[j];
            }
            x[i] = s / self.l[i * w + self.bw];
        }
        x
    }
}

/// LU factorization with partial pivoting of a banded matrix with equal
/// lower and upper bandwidth `bw`. Row interchanges widen U to `2 bw`
/// superdiagonals, as in LAPACK's general band factorization.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    // Column-major band storage: A[i, j] at ab[j * ldab + (kv + i - j)],
    // kv = 2 kl, ldab = 3 kl + 1.
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn factor(n: usize, bw: usize, get: impl Fn(usize, usize) -> f64) -> Result<Self, FactorError> {
        let kl = bw;
        let kv = 2 * kl;
        let ldab = 3 * kl + 1;
        let mut ab = vec![0.0; n * ldab];
        for j in 0..n {
            for i in j.saturating_sub(kl)..=(j + kl).min(n - 1) {
                ab[j * ldab + (kv + i - j)] = get(i, j);
            }
        }
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search in column j, rows j..=j+km.
            let mut p = 0;
            let mut best = ab[j * ldab + kv].abs();
            for i in 1..=km {
                let v = ab[j * ldab + kv + i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(FactorError::Singular { col: j });
            }
            pivots[j] = j + p;
            if p != 0 {
                for col in j..=(j + kv).min(n - 1) {
                    ab.swap(col * ldab + (kv + j + p - col), col * ldab + (kv + j - col));
                }
            }
            let piv = ab[j * ldab + kv];
            for i in 1..=km {
                ab[j * ldab + kv + i] /= piv;
            }
            for col in j + 1..=(j + kv).min(n - 1) {
                let f = ab[col * ldab + (kv + j - col)];
                if f != 0.0 {
                    for i in 1..=km {
                        ab[col * ldab + (kv + j - col) + i] -= ab[j * ldab + kv + i] * f;
                    }
                }
            }
        }
        Ok(Self { n, kl, ab, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let (kl, kv, ldab) = (self.kl, 2 * self.kl, 3 * self.kl + 1);
        let mut x = b.to_vec();
        // Forward: multipliers with interchanges.
        for j in 0..self.n {
            if self.pivots[j] != j {
                x.swap(j, self.pivots[j]);
            }
            let km = kl.min(self.n - 1 - j);
            for i in 1..=km {
                x[j + i] -= self.ab[j * ldab + kv + i] * x[j];
            }
        }
        // Back substitution with U (bandwidth kv).
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for col in j + 1..=(j + kv).min(self.n - 1) {
                s -= self.ab[col * ldab + (kv + j - col)] * x[col];
            }
            x[j] = s / self.ab[j * ldab + kv];
        }
        x
    }

    /// Solves A^T x = b.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let (kl, kv, ldab) = (self.kl, 2 * self.kl, 3 * self.kl + 1);
        let mut x = b.to_vec();
        // U^T y = b (forward; U^T has lower bandwidth kv).
        for j in 0..self.n {
            let mut s = x[j];
            for i in j.saturating_sub(kv)..j {
                // U[i, j] at ab[j * ldab + kv + i - j].
                s -= self.ab[j * ldab + (kv + i - j)] * x[i];
            }
            x[j] = s / self.ab[j * ldab + kv];
        }
        // L^T z = y with interchanges applied in reverse.
        for j in (0..self.n).rev() {
            let km = kl.min(self.n - 1 - j);
            let mut s = x[j];
            for i in 1..=km {
                s -= self.ab[j * ldab + kv + i] * x[j + i];
            }
            x[j] = s;
            if self.pivots[j] != j {
                x.swap(j, self.pivots[j]);
            }
        }
        x
    }
}
