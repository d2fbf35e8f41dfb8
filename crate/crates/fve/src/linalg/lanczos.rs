//! Lanczos and power iterations for extremal eigenvalues of operators that
//! are self-adjoint with respect to a (possibly weighted) inner product.
//!
//! The weight is an SPD sparse matrix `M`: inner(x, y) = y^T M x. With
//! `M = None` the plain l2 product is used. Full reorthogonalization is
//! applied (two classical Gram-Schmidt passes), which is affordable at the
//! problem sizes this crate targets and keeps the extremal Ritz values
//! trustworthy.

use super::sparse::SparseOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IterationError {
    #[error("eigenvalue iteration did not converge within {iterations} iterations (best estimate {best:e})")]
    NotConverged { iterations: usize, best: f64 },
}

/// Which end of the spectrum to resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationOptions {
    /// Relative stagnation tolerance on the Ritz value.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 400,
            seed: 0x5eed_f0e1,
        }
    }
}

fn weighted_image(metric: Option<&SparseOperator>, x: &[f64]) -> Vec<f64> {
    match metric {
        Some(m) => m.matvec(x),
        None => x.to_vec(),
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn seeded_start(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly
/// below `x`, by the Sturm sequence.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut prev = 1.0f64;
    for (i, &a) in diag.iter().enumerate() {
        let mut d = a - x;
        if i > 0 {
            let guarded = if prev == 0.0 { 1e-300 } else { prev };
            d -= off[i - 1] * off[i - 1] / guarded;
        }
        if d < 0.0 {
            count += 1;
        }
        prev = d;
    }
    count
}

/// Extremal eigenvalue of a symmetric tridiagonal matrix via bisection.
pub fn tridiag_extremal(diag: &[f64], off: &[f64], which: Extremal) -> f64 {
    let n = diag.len();
    assert!(n >= 1 && off.len() + 1 == n);
    if n == 1 {
        return diag[0];
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 }
            + if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    let want = match which {
        Extremal::Smallest => 1,
        Extremal::Largest => n,
    };
    let (mut a, mut b) = (lo - 1e-12 * scale, hi + 1e-12 * scale);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if sturm_count(diag, off, mid) >= want {
            b = mid;
        } else {
            a = mid;
        }
        if b - a <= 1e-15 * scale {
            break;
        }
    }
    0.5 * (a + b)
}

/// Extremal eigenvalue of `op`, self-adjoint in the `metric` inner product,
/// by Lanczos with full reorthogonalization.
pub fn lanczos_extremal(
    op: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    metric: Option<&SparseOperator>,
    which: Extremal,
    opts: IterationOptions,
) -> Result<f64, IterationError> {
    assert!(dim >= 1);
    let mut q = seeded_start(dim, opts.seed);
    let mq = weighted_image(metric, &q);
    let nrm = dot(&q, &mq).sqrt();
    q.iter_mut().for_each(|v| *v /= nrm);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev_ritz: Option<f64> = None;
    let mut stable = 0usize;
    let mut ritz = 0.0f64;
    let steps = opts.max_iter.min(dim);

    for k in 0..steps {
        let mut w = op(&basis[k]);
        let mw = weighted_image(metric, &w);
        let a_k = dot(&mw, &basis[k]);
        alpha.push(a_k);
        for i in 0..dim {
            w[i] -= a_k * basis[k][i];
            if k > 0 {
                w[i] -= beta[k - 1] * basis[k - 1][i];
            }
        }
        // Two classical Gram-Schmidt passes against the full basis.
        for _ in 0..2 {
            let mw = weighted_image(metric, &w);
            let coeffs: Vec<f64> = basis.iter().map(|q| dot(&mw, q)).collect();
            for (c, q) in coeffs.iter().zip(&basis) {
                for i in 0..dim {
                    w[i] -= c * q[i];
                }
            }
        }
        let mw = weighted_image(metric, &w);
        let b_k = dot(&mw, &w).max(0.0).sqrt();

        ritz = tridiag_extremal(&alpha, &beta, which);
        let scale = alpha
            .iter()
            .chain(beta.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        if let Some(prev) = prev_ritz {
            if (ritz - prev).abs() <= opts.tol * ritz.abs().max(1e-30) {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        prev_ritz = Some(ritz);
        // Invariant subspace captured or full space swept: value is exact.
        if b_k <= 1e-13 * scale || k + 1 == dim {
            return Ok(ritz);
        }
        if stable >= 3 {
            return Ok(ritz);
        }
        beta.push(b_k);
        basis.push(w.iter().map(|v| v / b_k).collect());
    }
    Err(IterationError::NotConverged {
        iterations: steps,
        best: ritz,
    })
}

/// Dominant eigenvalue of `op`, self-adjoint positive semidefinite in the
/// `metric` inner product, by power iteration on the Rayleigh quotient.
pub fn power_iteration(
    op: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    metric: Option<&SparseOperator>,
    opts: IterationOptions,
) -> Result<f64, IterationError> {
    assert!(dim >= 1);
    let mut v = seeded_start(dim, opts.seed);
    let mv = weighted_image(metric, &v);
    let nrm = dot(&v, &mv).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);

    let mut theta = 0.0f64;
    let mut prev: Option<f64> = None;
    let mut stable = 0usize;
    for k in 0..opts.max_iter {
        let w = op(&v);
        let mw = weighted_image(metric, &w);
        theta = dot(&mw, &v);
        let wnorm = dot(&mw, &w).max(0.0).sqrt();
        if wnorm <= 1e-300 {
            return Ok(0.0);
        }
        if let Some(p) = prev {
            if (theta - p).abs() <= opts.tol * theta.abs().max(1e-30) {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        prev = Some(theta);
        if stable >= 5 {
            return Ok(theta);
        }
        v = w.iter().map(|x| x / wnorm).collect();
        let _ = k;
    }
    Err(IterationError::NotConverged {
        iterations: opts.max_iter,
        best: theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::Symmetry;
    use nalgebra::DMatrix;

    fn diag_op(d: &[f64]) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |x: &[f64]| x.iter().zip(d).map(|(v, s)| v * s).collect()
    }

    #[test]
    fn tridiag_extremal_matches_dense() {
        let diag = [2.0, 3.0, -1.0, 0.5, 4.0];
        let off = [0.7, -0.2, 0.9, 0.1];
        let n = diag.len();
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = diag[i];
            if i + 1 < n {
                t[(i, i + 1)] = off[i];
                t[(i + 1, i)] = off[i];
            }
        }
        let eigs = t.symmetric_eigenvalues();
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((tridiag_extremal(&diag, &off, Extremal::Smallest) - min).abs() < 1e-10);
        assert!((tridiag_extremal(&diag, &off, Extremal::Largest) - max).abs() < 1e-10);
    }

    #[test]
    fn lanczos_finds_extremes_of_diagonal_operator() {
        let d: Vec<f64> = (1..=60).map(|i| 0.1 * i as f64).collect();
        let opts = IterationOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let lo = lanczos_extremal(diag_op(&d), d.len(), None, Extremal::Smallest, opts).unwrap();
        let hi = lanczos_extremal(diag_op(&d), d.len(), None, Extremal::Largest, opts).unwrap();
        assert!((lo - 0.1).abs() < 1e-8, "lo = {lo}");
        assert!((hi - 6.0).abs() < 1e-8, "hi = {hi}");
    }

    #[test]
    fn lanczos_with_metric_solves_generalized_problem() {
        // Operator B = M^{-1} C with C, M SPD: self-adjoint in the M inner
        // product; eigenvalues are those of the pencil (C, M).
        let n = 12;
        let m_mat = SparseOperator::from_triplets(
            n,
            n,
            &(0..n)
                .map(|i| (i, i, 1.0 + 0.1 * i as f64))
                .collect::<Vec<_>>(),
            Symmetry::AssertedSymmetric,
        )
        .unwrap();
        let c: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.3).sin()).collect();
        let op = |x: &[f64]| -> Vec<f64> {
            // M^{-1} diag(c) x for diagonal M.
            (0..n)
                .map(|i| c[i] * x[i] / (1.0 + 0.1 * i as f64))
                .collect()
        };
        let got = lanczos_extremal(op, n, Some(&m_mat), Extremal::Smallest, IterationOptions::default())
            .unwrap();
        let expect = (0..n)
            .map(|i| c[i] / (1.0 + 0.1 * i as f64))
            .fold(f64::INFINITY, f64::min);
        assert!((got - expect).abs() < 1e-9, "got {got}, expect {expect}");
    }

    #[test]
    fn power_iteration_dominant_eigenvalue() {
        let d = [0.5, 1.0, 2.0, 9.0];
        let got = power_iteration(diag_op(&d), 4, None, IterationOptions::default()).unwrap();
        assert!((got - 9.0).abs() < 1e-4, "got {got}");
    }
}
