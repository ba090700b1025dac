//! Dense linear algebra for the 2×2, 4×4 and 8×8 matrices used throughout.
//!
//! Storage is `nalgebra`'s stack-allocated `SMatrix`; this module is the only
//! place the rest of the crate goes for eigenvalues, determinants,
//! symplectic spectra and Lyapunov solves.

use nalgebra::{Complex, DMatrix, DVector, SMatrix};

use crate::{Error, Result};

pub type Mat<const N: usize> = SMatrix<f64, N, N>;
pub type Mat2 = Mat<2>;
pub type Mat4 = Mat<4>;
pub type Mat8 = Mat<8>;

pub type C64 = Complex<f64>;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// All eigenvalues of a real (generally nonsymmetric) matrix, with
/// multiplicity.
///
/// Complex pairs are emitted conjugate-adjacent in the order the real Schur
/// form produces them, which is deterministic for identical input.
pub fn eigenvalues<const N: usize>(m: &Mat<N>) -> Result<Vec<C64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenNoConvergence(m.iter().copied().collect()));
    }
    let dm = DMatrix::from_iterator(N, N, m.iter().copied());
    let schur = nalgebra::linalg::Schur::try_new(dm, SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenNoConvergence(m.iter().copied().collect()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa<const N: usize>(m: &Mat<N>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn det<const N: usize>(m: &Mat<N>) -> f64 {
    match N {
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => DMatrix::from_iterator(N, N, m.iter().copied()).lu().determinant(),
    }
}

pub fn inverse<const N: usize>(m: &Mat<N>) -> Option<Mat<N>> {
    m.try_inverse()
}

/// Max-norm of `m − mᵀ`.
pub fn asymmetry<const N: usize>(m: &Mat<N>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn symmetrize<const N: usize>(m: &Mat<N>) -> Mat<N> {
    (m + m.transpose()) * 0.5
}

/// Counter-clockwise rotation `[[cos φ, −sin φ], [sin φ, cos φ]]`.
pub fn rotation(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Eigen-decomposition of a symmetric 2×2 matrix.
///
/// Returns the eigenvalues in ascending order and the angle `θ ∈ [0, π)` such
/// that `R(θ) · diag(λ₁, λ₂) · R(θ)ᵀ = m`, i.e. the first column of `R(θ)`
/// is the eigenvector of the smaller eigenvalue.
pub fn sym_eig_2x2(m: &Mat2) -> Result<([f64; 2], f64)> {
    let asym = (m[(0, 1)] - m[(1, 0)]).abs();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let radius = half_diff.hypot(b);
    // angle of the larger-eigenvalue axis is 0.5·atan2(2b, a − d)
    let theta_max = 0.5 * b.atan2(half_diff);
    let theta = wrap_pi(theta_max + std::f64::consts::FRAC_PI_2);
    Ok(([mean - radius, mean + radius], theta))
}

/// Maps an angle to `[0, π)`.
pub fn wrap_pi(theta: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let r = theta.rem_euclid(pi);
    if r >= pi {
        0.0
    } else {
        r
    }
}

/// Block-diagonal symplectic form `⊕ [[0, 1], [−1, 0]]` in (q, p) ordering.
pub fn symplectic_form<const N: usize>() -> Mat<N> {
    let mut omega = Mat::<N>::zeros();
    for k in (0..N).step_by(2) {
        omega[(k, k + 1)] = 1.0;
        omega[(k + 1, k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues of a covariance matrix, ascending, one per mode.
///
/// Computed as the moduli of the eigenvalues of `Ω V`, which come in pairs
/// `±iν`.
pub fn symplectic_eigenvalues<const N: usize>(v: &Mat<N>) -> Result<Vec<f64>> {
    let ov = symplectic_form::<N>() * v;
    let mut moduli: Vec<f64> = eigenvalues(&ov)?.iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    Ok(moduli.into_iter().step_by(2).collect())
}

/// Solves the continuous Lyapunov equation `A X + X Aᵀ + Q = 0`.
///
/// Uses the vectorized form `(I ⊗ A + A ⊗ I) vec(X) = −vec(Q)`; returns `None`
/// when `A` and `−A` share an eigenvalue.
pub fn lyapunov_solve<const N: usize>(a: &Mat<N>, q: &Mat<N>) -> Option<Mat<N>> {
    let n2 = N * N;
    let mut k = DMatrix::<f64>::zeros(n2, n2);
    // vec is column-major: index(i, j) = i + N j
    for i in 0..N {
        for j in 0..N {
            let row = i + N * j;
            for l in 0..N {
                // (A X)_{ij} = Σ_l A_{il} X_{lj}
                k[(row, l + N * j)] += a[(i, l)];
                // (X Aᵀ)_{ij} = Σ_l X_{il} A_{jl}
                k[(row, i + N * l)] += a[(j, l)];
            }
        }
    }
    let rhs = DVector::from_iterator(n2, q.iter().map(|x| -x));
    let sol = k.lu().solve(&rhs)?;
    Some(symmetrize(&Mat::<N>::from_iterator(sol.iter().copied())))
}

/// Residual `‖A X + X Aᵀ + Q‖_max`.
pub fn lyapunov_residual<const N: usize>(a: &Mat<N>, x: &Mat<N>, q: &Mat<N>) -> f64 {
    (a * x + x * a.transpose() + q).amax()
}
