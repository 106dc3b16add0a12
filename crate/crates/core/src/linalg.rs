//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::Schur;

use crate::error::{dim_err, Error, Result};
use crate::{Mat, Vector};

/// Largest state dimension solved through the Kronecker-vectorized linear system.
/// Larger problems use the doubling iteration.
pub const KRONECKER_MAX_DIM: usize = 20;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 20_000;
const SCHUR_MAX_ITERS: usize = 10_000;
const DOUBLING_MAX_STEPS: usize = 64;

/// Maximum eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if !m.is_square() {
        return Err(dim_err(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITERS).ok_or(
        Error::NonConvergence {
            what: "schur decomposition",
            iterations: SCHUR_MAX_ITERS,
            residual: f64::NAN,
        },
    )?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Frobenius norm computed with scaling, so it does not overflow for entries
/// above `1e154`.
pub fn frobenius(m: &Mat) -> f64 {
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * (m / scale).norm()
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn min_symmetric_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric (to a relative `tol`) with eigenvalues `>= -tol * max(1, |M|)`.
pub fn is_symmetric_psd(m: &Mat, tol: f64) -> bool {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > tol * scale {
        return false;
    }
    min_symmetric_eigenvalue(m) >= -tol * scale
}

pub fn is_positive_definite(m: &Mat) -> bool {
    m.is_square()
        && m.iter().all(|v| v.is_finite())
        && (m - m.transpose()).norm() <= 1e-12 * m.norm().max(1.0)
        && symmetrize(m).cholesky().is_some()
}

/// Largest singular value, by power iteration on `MᵀM`.
pub fn operator_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    match dominant_eigenpair(&gram) {
        Some((_, v)) => (m * v).norm(),
        None => 0.0,
    }
}

/// Top singular value and a unit vector `u` maximizing `|uᵀM|`, by power
/// iteration on `MMᵀ`.
pub fn top_left_singular(m: &Mat) -> (f64, Vector) {
    let gram = m * m.transpose();
    match dominant_eigenpair(&gram) {
        Some((_, u)) => ((m.transpose() * &u).norm(), u),
        None => {
            let mut u = Vector::zeros(m.nrows());
            if m.nrows() > 0 {
                u[0] = 1.0;
            }
            (0.0, u)
        }
    }
}

// Power iteration for a symmetric PSD matrix. Returns None for the zero matrix.
fn dominant_eigenpair(h: &Mat) -> Option<(f64, Vector)> {
    // Start from the column with the largest norm: it is never orthogonal to the
    // dominant eigenspace of a nonzero PSD matrix.
    let start = (0..h.ncols()).max_by(|&i, &j| {
        h.column(i)
            .norm()
            .partial_cmp(&h.column(j).norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    })?;
    let mut v: Vector = h.column(start).into_owned();
    let n0 = v.norm();
    if n0 == 0.0 || !n0.is_finite() {
        return None;
    }
    v /= n0;
    let mut lambda = v.dot(&(h * &v));
    for _ in 0..POWER_MAX_ITERS {
        let hv = h * &v;
        let norm = hv.norm();
        if norm == 0.0 {
            return None;
        }
        let next = hv / norm;
        let next_lambda = next.dot(&(h * &next));
        let residual = (h * &next - &next * next_lambda).norm();
        v = next;
        let done = residual <= POWER_TOL * next_lambda.abs()
            || (next_lambda - lambda).abs() <= f64::EPSILON * next_lambda.abs();
        lambda = next_lambda;
        if done {
            break;
        }
    }
    Some((lambda, v))
}

/// Frobenius norm of `X - Q - A X Aᵀ`.
pub fn stein_residual(a: &Mat, q: &Mat, x: &Mat) -> f64 {
    (x - q - a * x * a.transpose()).norm()
}

/// Solves the discrete Lyapunov (Stein) equation `X = Q + A X Aᵀ` for a stable `A`
/// and symmetric `Q`. The returned `X` is symmetrized and satisfies
/// `|X - Q - A X Aᵀ|_F <= tol * max(1, |X|_F)`.
pub fn solve_stein(a: &Mat, q: &Mat, tol: f64) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(dim_err(format!(
            "lyapunov equation with A {}x{} and Q {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let x = if n <= KRONECKER_MAX_DIM {
        stein_kronecker(a, q)?
    } else {
        stein_doubling(a, q)?
    };
    let x = symmetrize(&x);
    let residual = stein_residual(a, q, &x);
    if !residual.is_finite() || residual > tol * x.norm().max(1.0) {
        return Err(Error::NonConvergence {
            what: "lyapunov solve",
            iterations: 0,
            residual,
        });
    }
    Ok(x)
}

fn stein_kronecker(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let system = Mat::identity(n * n, n * n) - a.kronecker(a);
    let lu = system.clone().lu();
    let rhs = Vector::from_column_slice(q.as_slice());
    let singular = || Error::NonConvergence {
        what: "lyapunov solve",
        iterations: 0,
        residual: f64::INFINITY,
    };
    let mut x = lu.solve(&rhs).ok_or_else(singular)?;
    // Two rounds of iterative refinement.
    for _ in 0..2 {
        let r = &rhs - &system * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(Mat::from_column_slice(n, n, x.as_slice()))
}

fn stein_doubling(a: &Mat, q: &Mat) -> Result<Mat> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for step in 0..DOUBLING_MAX_STEPS {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        ak = &ak * &ak;
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
        if inc.norm() <= f64::EPSILON * x.norm() && ak.norm() <= f64::EPSILON {
            return Ok(x);
        }
        if step + 1 == DOUBLING_MAX_STEPS {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "lyapunov doubling",
        iterations: DOUBLING_MAX_STEPS,
        residual: stein_residual(a, q, &x),
    })
}

pub(crate) fn check_square(m: &Mat, n: usize, name: &str) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(dim_err(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_shape(m: &Mat, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err(format!(
            "{name} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_radius_of_simple_matrices() {
        assert_eq!(spectral_radius(&Mat::zeros(3, 3)).unwrap(), 0.0);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -0.9]));
        assert_relative_eq!(spectral_radius(&d).unwrap(), 0.9, epsilon = 1e-14);
        let theta: f64 = 1.1;
        let rot = Mat::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        ) * 0.7;
        assert_relative_eq!(spectral_radius(&rot).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_rejects_rectangular() {
        assert!(matches!(
            spectral_radius(&Mat::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn operator_norm_matches_svd() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 4.0, -1.0]);
        let svd = m.clone().svd(false, false);
        let top = svd.singular_values.max();
        assert_relative_eq!(operator_norm(&m), top, max_relative = 1e-11);
        let (s, u) = top_left_singular(&m);
        assert_relative_eq!(s, top, max_relative = 1e-11);
        assert_relative_eq!(u.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(operator_norm(&Mat::zeros(2, 2)), 0.0);
    }

    #[test]
    fn stein_scalar_geometric_series() {
        let a = Mat::from_element(1, 1, 0.5);
        let q = Mat::from_element(1, 1, 1.0);
        let x = solve_stein(&a, &q, 1e-12).unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn stein_doubling_agrees_with_kronecker() {
        let n = KRONECKER_MAX_DIM + 2;
        let a = Mat::from_fn(n, n, |i, j| {
            if i == j {
                0.5
            } else if j == i + 1 {
                0.3
            } else {
                0.0
            }
        });
        let q = Mat::identity(n, n);
        let x = solve_stein(&a, &q, 1e-12).unwrap();
        assert!(stein_residual(&a, &q, &x) <= 1e-12 * x.norm());
        let small = a.view((0, 0), (5, 5)).into_owned();
        let xk = stein_kronecker(&small, &Mat::identity(5, 5)).unwrap();
        let xd = stein_doubling(&small, &Mat::identity(5, 5)).unwrap();
        assert!((xk - xd).norm() < 1e-12);
    }

    #[test]
    fn stein_unstable_reports_nonconvergence() {
        let a = Mat::from_element(1, 1, 1.0);
        let q = Mat::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_stein(&a, &q, 1e-10),
            Err(Error::NonConvergence { .. })
        ));
    }
}
