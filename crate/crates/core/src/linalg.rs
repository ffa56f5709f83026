//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = 1.0 + m.amax();
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Ascending eigenvalues of a symmetric matrix.
///
/// nalgebra's symmetric eigensolver reduces to tridiagonal form and runs
/// implicit QR sweeps on it.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky-based positive-definiteness test. A pivot must exceed
/// `1e-12 * trace` to count as positive.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    if !m.is_square() || !is_symmetric(m, SYMMETRY_TOL) {
        return false;
    }
    let n = m.nrows();
    let trace = m.trace();
    if !(trace > 0.0) {
        return false;
    }
    let threshold = 1e-12 * trace;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > threshold) {
            return false;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    true
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Solves `acᵀ X + X ac = c` by vectorisation. Intended for the small state
/// dimensions this crate deals with.
pub fn solve_lyapunov(ac: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = ac.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let act = ac.transpose();
    let op = eye.kronecker(&act) + act.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoStabilizingSolution("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(
        d,
        d,
        sol.as_slice(),
    )))
}

/// Matrix sign function by the scaled Newton iteration
/// `Z <- (c Z + (c Z)^-1) / 2`, `c = |det Z|^(-1/n)`.
///
/// Returns `None` when an iterate becomes singular, which happens when the
/// input has eigenvalues on (or numerically at) the imaginary axis.
pub fn matrix_sign(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        if !det.is_finite() || det == 0.0 {
            return None;
        }
        let inv = lu.try_inverse()?;
        let c = det.abs().powf(-1.0 / n);
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !scale.is_finite() {
            return None;
        }
        if delta <= 1e-13 * scale {
            break;
        }
    }
    Some(z)
}

/// Stacks agent vectors `x_i ∈ R^d` (rows of `states`) into one `N·d` vector.
pub fn stack_rows(states: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        states.nrows() * states.ncols(),
        (0..states.nrows()).flat_map(|i| (0..states.ncols()).map(move |j| states[(i, j)])),
    )
}
