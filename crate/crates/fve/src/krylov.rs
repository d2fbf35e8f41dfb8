//! GMRES in the energy inner product a(u, v) = v^T A u, with estimators
//! for the two quantities that drive its convergence bound: beta1, the
//! smallest eigenvalue of the a-symmetrized preconditioned operator, and
//! beta2, the a-operator norm.
//!
//! The Arnoldi basis is a-orthonormalized with modified Gram-Schmidt, the
//! least-squares problem is updated with Givens rotations, and the
//! recurrence tracks the a-norm of the residual exactly. The l2 residual
//! used by the stopping rule is reconstructed each step from the rotated
//! coordinates (r_i = V z_i), and one true residual evaluation at the end
//! guards the recurrence value.

use crate::linalg::band::BandCholesky;
use crate::linalg::lanczos::{
    lanczos_extremal, power_iteration, Extremal, IterationError, IterationOptions,
};
use crate::linalg::sparse::SparseOperator;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Iteration(#[from] IterationError),
    #[error("energy matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("bound check inapplicable: {0}")]
    Inapplicable(String),
}

/// Outcome of one GMRES run.
#[derive(Debug, Clone)]
pub struct IterationReport {
    /// Arnoldi steps taken until the stopping rule fired.
    pub iterations: usize,
    pub converged: bool,
    /// l2 norms of the preconditioned residual, entry 0 = initial.
    pub residual_history_l2: Vec<f64>,
    /// a-norms of the preconditioned residual from the Givens recurrence.
    pub residual_history_a: Vec<f64>,
    /// One true evaluation of |g - T u| in l2 at the final iterate.
    pub true_residual_l2: f64,
    /// Largest observed |<v_i, v_j>_a - delta_ij| over the Arnoldi basis.
    pub orthonormality_defect: f64,
    pub beta1_estimate: Option<f64>,
    pub beta2_estimate: Option<f64>,
}

/// Full (non-restarted) GMRES for T u = g with zero initial guess,
/// orthogonalizing in the inner product induced by the SPD matrix `a`.
/// Stops when the l2 norm of the residual drops below `tol` times the
/// initial one. Reaching `max_iter` yields a non-converged report;
/// an Arnoldi breakdown means the Krylov space contains the exact
/// solution and reports as converged.
pub fn gmres_a(
    op: impl Fn(&[f64]) -> Vec<f64>,
    g: &[f64],
    a: &SparseOperator,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, IterationReport) {
    let dim = g.len();
    assert_eq!(a.dim(), dim, "inner-product matrix dimension mismatch");
    assert!(tol > 0.0 && tol < 1.0, "tolerance must be in (0, 1)");

    let l2 = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let g_l2 = l2(g);
    let ag = a.matvec(g);
    let g_a = ag.iter().zip(g).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt();

    if g_l2 == 0.0 {
        return (
            vec![0.0; dim],
            IterationReport {
                iterations: 0,
                converged: true,
                residual_history_l2: vec![0.0],
                residual_history_a: vec![0.0],
                true_residual_l2: 0.0,
                orthonormality_defect: 0.0,
                beta1_estimate: None,
                beta2_estimate: None,
            },
        );
    }

    let mut basis: Vec<Vec<f64>> = vec![g.iter().map(|v| v / g_a).collect()];
    let mut a_basis: Vec<Vec<f64>> = vec![ag.iter().map(|v| v / g_a).collect()];
    // Rotated Hessenberg columns (upper triangular R) and rotation pairs.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    // Transformed right-hand side.
    let mut tau: Vec<f64> = vec![g_a];
    let mut hist_l2 = vec![g_l2];
    let mut hist_a = vec![g_a];
    let mut defect = 0.0f64;
    let mut converged = false;
    let mut steps = 0usize;

    for j in 0..max_iter {
        let mut w = op(&basis[j]);
        let mut h = vec![0.0; j + 2];
        // Modified Gram-Schmidt with one reorthogonalization pass; the
        // corrections are folded into the Hessenberg column.
        for _pass in 0..2 {
            for i in 0..=j {
                let hij: f64 = w.iter().zip(&a_basis[i]).map(|(p, q)| p * q).sum();
                h[i] += hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
        }
        let aw = a.matvec(&w);
        let wnorm = aw.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt();
        h[j + 1] = wnorm;
        let breakdown = wnorm <= 1e-13 * g_a;

        if !breakdown {
            let v_next: Vec<f64> = w.iter().map(|v| v / wnorm).collect();
            let av_next: Vec<f64> = aw.iter().map(|v| v / wnorm).collect();
            // Track the a-orthonormality of the basis.
            for q in &basis {
                let ip: f64 = q.iter().zip(&av_next).map(|(p, r)| p * r).sum();
                defect = defect.max(ip.abs());
            }
            let self_ip: f64 = v_next.iter().zip(&av_next).map(|(p, r)| p * r).sum();
            defect = defect.max((self_ip - 1.0).abs());
            basis.push(v_next);
            a_basis.push(av_next);
        }

        // Givens update of the new Hessenberg column.
        for (i, &(c, s)) in rot.iter().enumerate() {
            let t = c * h[i] + s * h[i + 1];
            h[i + 1] = -s * h[i] + c * h[i + 1];
            h[i] = t;
        }
        let r = (h[j] * h[j] + h[j + 1] * h[j + 1]).sqrt();
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (h[j] / r, h[j + 1] / r) };
        h[j] = r;
        h[j + 1] = 0.0;
        rot.push((c, s));
        let t_old = tau[j];
        tau[j] = c * t_old;
        tau.push(-s * t_old);
        r_cols.push(h[..=j].to_vec());

        let res_a = tau[j + 1].abs();
        hist_a.push(res_a);

        // l2 residual via r = V z, z = (G_j ... G_0)^T (0, ..., tau_{j+1}).
        let mut z = vec![0.0; j + 2];
        z[j + 1] = tau[j + 1];
        for (i, &(c, s)) in rot.iter().enumerate().rev() {
            let zi = c * z[i] - s * z[i + 1];
            let zi1 = s * z[i] + c * z[i + 1];
            z[i] = zi;
            z[i + 1] = zi1;
        }
        let mut r_vec = vec![0.0; dim];
        for (zi, v) in z.iter().zip(&basis) {
            for (rk, vk) in r_vec.iter_mut().zip(v) {
                *rk += zi * vk;
            }
        }
        let res_l2 = l2(&r_vec);
        hist_l2.push(res_l2);

        steps = j + 1;
        if res_l2 <= tol * g_l2 || breakdown {
            converged = true;
            break;
        }
    }

    // Solve the triangular system R y = tau.
    let m = steps;
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = tau[i];
        for k in i + 1..m {
            s -= r_cols[k][i] * y[k];
        }
        y[i] = s / r_cols[i][i];
    }
    let mut u = vec![0.0; dim];
    for (yi, v) in y.iter().zip(&basis) {
        for (uk, vk) in u.iter_mut().zip(v) {
            *uk += yi * vk;
        }
    }
    let residual: Vec<f64> = op(&u)
        .iter()
        .zip(g)
        .map(|(tu, gi)| gi - tu)
        .collect();
    let true_residual_l2 = l2(&residual);

    (
        u,
        IterationReport {
            iterations: steps,
            converged,
            residual_history_l2: hist_l2,
            residual_history_a: hist_a,
            true_residual_l2,
            orthonormality_defect: defect,
            beta1_estimate: None,
            beta2_estimate: None,
        },
    )
}

/// Eigenvalue estimation backends for [`estimate_beta1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSolver {
    /// Assemble the operator column by column and solve the generalized
    /// symmetric eigenproblem densely (dimensions up to 4096).
    Dense,
    /// Lanczos on the a-symmetrization, matrix-free.
    Lanczos,
}

/// Dense eigensolves are refused above this dimension and handed to
/// Lanczos instead.
pub const DENSE_EIG_LIMIT: usize = 4096;

/// Smallest eigenvalue of (T^t + T)/2 where T^t is the a-adjoint, i.e.
/// the generalized symmetric eigenproblem
/// (M^T A + A M)/2 x = lambda A x for the operator matrix M. This equals
/// inf a(Tu, u) / a(u, u).
pub fn estimate_beta1(
    op: impl Fn(&[f64]) -> Vec<f64>,
    op_transpose: impl Fn(&[f64]) -> Vec<f64>,
    a: &SparseOperator,
    a_chol: &BandCholesky,
    solver: EigenSolver,
    opts: IterationOptions,
) -> Result<f64, EstimateError> {
    let dim = a.dim();
    if solver == EigenSolver::Dense && dim <= DENSE_EIG_LIMIT {
        // K = A M, assembled by applying the operator to unit vectors.
        let mut k_mat = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            let col = a.matvec(&op(&e));
            e[j] = 0.0;
            for i in 0..dim {
                k_mat[(i, j)] = col[i];
            }
        }
        let c = (&k_mat + k_mat.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(a.to_dense())
            .ok_or(EstimateError::NotPositiveDefinite)?;
        let l = chol.l();
        let x = l
            .solve_lower_triangular(&c)
            .ok_or(EstimateError::NotPositiveDefinite)?;
        let w = l
            .solve_lower_triangular(&x.transpose())
            .ok_or(EstimateError::NotPositiveDefinite)?;
        let w = (&w + w.transpose()) * 0.5;
        let eigs = w.symmetric_eigenvalues();
        Ok(eigs.iter().copied().fold(f64::INFINITY, f64::min))
    } else {
        // (T + T*)/2 with T* = A^{-1} M^T A, one SPD solve per apply.
        let sym_op = |x: &[f64]| -> Vec<f64> {
            let tu = op(x);
            let tstar = a_chol.solve(&op_transpose(&a.matvec(x)));
            tu.iter().zip(tstar).map(|(p, q)| 0.5 * (p + q)).collect()
        };
        Ok(lanczos_extremal(sym_op, dim, Some(a), Extremal::Smallest, opts)?)
    }
}

/// a-operator norm sup |Tu|_a / |u|_a: square root of the dominant
/// eigenvalue of T* T, found by power iteration in the a inner product.
pub fn estimate_beta2(
    op: impl Fn(&[f64]) -> Vec<f64>,
    op_transpose: impl Fn(&[f64]) -> Vec<f64>,
    a: &SparseOperator,
    a_chol: &BandCholesky,
    opts: IterationOptions,
) -> Result<f64, EstimateError> {
    let dim = a.dim();
    let composite = |x: &[f64]| -> Vec<f64> {
        let tu = op(x);
        a_chol.solve(&op_transpose(&a.matvec(&tu)))
    };
    let theta = power_iteration(composite, dim, Some(a), opts)?;
    Ok(theta.max(0.0).sqrt())
}

/// Result of checking a residual history against the theoretical GMRES
/// envelope (1 - beta1^2/beta2^2)^{m/2}.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    pub pass: bool,
    /// Largest ratio residual / envelope over the run (<= 1 means pass).
    pub worst_margin: f64,
}

/// Verifies that the a-norm residual sequence stays below the envelope
/// computed from the measured beta1 and beta2.
pub fn gmres_bound_check(report: &IterationReport) -> Result<BoundCheck, EstimateError> {
    let beta1 = report
        .beta1_estimate
        .ok_or_else(|| EstimateError::Inapplicable("beta1 estimate missing".into()))?;
    let beta2 = report
        .beta2_estimate
        .ok_or_else(|| EstimateError::Inapplicable("beta2 estimate missing".into()))?;
    if beta1 <= 0.0 {
        return Err(EstimateError::Inapplicable(format!(
            "beta1 = {beta1:e} is not positive"
        )));
    }
    let rho = (1.0 - (beta1 * beta1) / (beta2 * beta2)).max(0.0);
    let r0 = report.residual_history_a[0];
    let mut worst = 0.0f64;
    for (m, &res) in report.residual_history_a.iter().enumerate().skip(1) {
        let envelope = rho.powf(m as f64 / 2.0) * r0;
        let ratio = if envelope > 0.0 {
            res / envelope
        } else if res <= 1e-12 * r0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(ratio);
    }
    Ok(BoundCheck {
        pass: worst <= 1.0 + 1e-9,
        worst_margin: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_fem;
    use crate::coefficient::smooth_field;
    use crate::linalg::band::BandCholesky;
    use crate::mesh::build_structured_mesh;

    fn spd_matrix(n: usize) -> SparseOperator {
        let mesh = build_structured_mesh(n).unwrap();
        assemble_fem(&mesh, &smooth_field(1)).unwrap()
    }

    #[test]
    fn identity_operator_converges_in_one_iteration() {
        let a = spd_matrix(4);
        let g: Vec<f64> = (0..a.dim()).map(|i| (i as f64 * 0.31).sin() + 0.2).collect();
        let (u, report) = gmres_a(|x| x.to_vec(), &g, &a, 1e-6, 50);
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for (ui, gi) in u.iter().zip(&g) {
            assert!((ui - gi).abs() < 1e-12);
        }
        assert!(report.true_residual_l2 < 1e-12);
    }

    #[test]
    fn zero_rhs_is_trivial() {
        let a = spd_matrix(4);
        let g = vec![0.0; a.dim()];
        let (u, report) = gmres_a(|x| x.to_vec(), &g, &a, 1e-6, 10);
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solves_spd_system_in_a_inner_product() {
        // Operator = A itself; solution of A u = g.
        let a = spd_matrix(6);
        let dim = a.dim();
        let g: Vec<f64> = (0..dim).map(|i| ((i * 13 % 7) as f64) - 2.0).collect();
        let op = |x: &[f64]| a.matvec(x);
        let (u, report) = gmres_a(op, &g, &a, 1e-10, 200);
        assert!(report.converged, "history {:?}", report.residual_history_l2);
        let res = a.matvec(&u);
        let err: f64 = res
            .iter()
            .zip(&g)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-9 * gn, "err {err}");
        assert!(report.orthonormality_defect < 1e-8);
        // GMRES minimizes the a-norm: the recurrence history must be
        // non-increasing.
        for w in report.residual_history_a.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn non_convergence_is_reported_not_thrown() {
        let a = spd_matrix(6);
        let dim = a.dim();
        let g: Vec<f64> = (0..dim).map(|i| 1.0 + (i % 3) as f64).collect();
        let (_, report) = gmres_a(|x| a.matvec(x), &g, &a, 1e-12, 2);
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
    }

    #[test]
    fn beta_estimates_for_identity_operator() {
        let a = spd_matrix(4);
        let chol = BandCholesky::factor(a.dim(), a.bandwidth(), |i, j| a.get(i, j)).unwrap();
        let id = |x: &[f64]| x.to_vec();
        let b1 = estimate_beta1(id, id, &a, &chol, EigenSolver::Dense, IterationOptions::default())
            .unwrap();
        assert!((b1 - 1.0).abs() < 1e-10, "beta1 {b1}");
        let b1l =
            estimate_beta1(id, id, &a, &chol, EigenSolver::Lanczos, IterationOptions::default())
                .unwrap();
        assert!((b1l - 1.0).abs() < 1e-8, "beta1 lanczos {b1l}");
        let b2 = estimate_beta2(id, id, &a, &chol, IterationOptions::default()).unwrap();
        assert!((b2 - 1.0).abs() < 1e-10, "beta2 {b2}");
    }

    #[test]
    fn dense_and_lanczos_beta1_agree_on_a_nontrivial_operator() {
        // Operator: A-preconditioned Jacobi sweep M = D^{-1} A, which is
        // a-self-adjoint-ish but not trivially so; both paths must agree.
        let a = spd_matrix(6);
        let dim = a.dim();
        let diag: Vec<f64> = (0..dim).map(|i| a.get(i, i)).collect();
        let op = |x: &[f64]| -> Vec<f64> {
            a.matvec(x).iter().zip(&diag).map(|(v, d)| v / d).collect()
        };
        let op_t = |x: &[f64]| -> Vec<f64> {
            let scaled: Vec<f64> = x.iter().zip(&diag).map(|(v, d)| v / d).collect();
            a.matvec_transpose(&scaled)
        };
        let chol = BandCholesky::factor(dim, a.bandwidth(), |i, j| a.get(i, j)).unwrap();
        let dense = estimate_beta1(&op, &op_t, &a, &chol, EigenSolver::Dense, IterationOptions::default())
            .unwrap();
        let lanczos =
            estimate_beta1(&op, &op_t, &a, &chol, EigenSolver::Lanczos, IterationOptions::default())
                .unwrap();
        assert!(
            (dense - lanczos).abs() <= 1e-3 * dense.abs().max(1e-3),
            "dense {dense} vs lanczos {lanczos}"
        );
    }

    #[test]
    fn bound_check_passes_for_identity_and_fails_for_inflated_beta1() {
        let a = spd_matrix(4);
        let g: Vec<f64> = (0..a.dim()).map(|i| 1.0 + i as f64).collect();
        let (_, mut report) = gmres_a(|x| x.to_vec(), &g, &a, 1e-6, 10);
        report.beta1_estimate = Some(1.0);
        report.beta2_estimate = Some(1.0);
        let check = gmres_bound_check(&report).unwrap();
        assert!(check.pass, "margin {}", check.worst_margin);

        // Some nontrivial run: operator A, then inflating beta1 to beta2
        // collapses the envelope and the check must fail.
        let (_, mut report) = gmres_a(|x| a.matvec(x), &g, &a, 1e-8, 100);
        report.beta1_estimate = Some(2.0);
        report.beta2_estimate = Some(2.0);
        if report.residual_history_a.len() > 2 {
            let check = gmres_bound_check(&report).unwrap();
            assert!(!check.pass);
        }

        report.beta1_estimate = Some(-1.0);
        assert!(matches!(
            gmres_bound_check(&report),
            Err(EstimateError::Inapplicable(_))
        ));
    }
}
