//! Small dense-matrix kernel: linear solves, norms, spectral radii, Perron
//! pairs, and Sylvester equations.
//!
//! Everything runs on `f64` with dynamically sized matrices. Problem sizes stay
//! at desk scale (tens of phases), so dense partial-pivot factorizations are
//! used throughout and the infinity norm is the default norm everywhere.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot threshold below which a factorization is declared singular.
pub const PIVOT_RTOL: f64 = 1e-14;

const POWER_ITER_CAP: usize = 20_000;

/// Maximum absolute row sum.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry difference between two equally sized matrices.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff on mismatched shapes");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn checked_lu(a: &Matrix) -> Result<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;
    for i in 0..u.nrows().min(u.ncols()) {
        let p = u[(i, i)].abs();
        if !p.is_finite() {
            return Err(Error::Singular("non-finite pivot".into()));
        }
        max_pivot = max_pivot.max(p);
        min_pivot = min_pivot.min(p);
    }
    if max_pivot == 0.0 || min_pivot < PIVOT_RTOL * max_pivot {
        return Err(Error::Singular(format!(
            "pivot {:.3e} below {:.0e} of largest pivot {:.3e}",
            min_pivot, PIVOT_RTOL, max_pivot
        )));
    }
    Ok(lu)
}

/// Solves `A X = B` by partial-pivot LU.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    assert!(a.is_square(), "solve_linear needs a square A");
    assert_eq!(a.nrows(), b.nrows(), "solve_linear dimension mismatch");
    let lu = checked_lu(a)?;
    lu.solve(b)
        .ok_or_else(|| Error::Singular("back substitution failed".into()))
}

/// Solves `X A = B` (right division) via the transposed system.
pub fn solve_right(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    Ok(solve_linear(&a.transpose(), &b.transpose())?.transpose())
}

/// Inverse through the same checked factorization as [`solve_linear`].
pub fn invert(a: &Matrix) -> Result<Matrix> {
    solve_linear(a, &Matrix::identity(a.nrows(), a.nrows()))
}

/// Spectral radius of an (entrywise) nonnegative matrix.
///
/// Power iteration from the all-ones vector — deterministic across runs — with
/// a dense Schur eigensolve as fallback when the iteration stagnates (periodic
/// or nearly defective inputs).
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    assert!(m.is_square(), "spectral_radius needs a square matrix");
    let n = m.nrows();
    if n == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let mut x = Vector::from_element(n, 1.0);
    let mut prev = f64::NAN;
    let mut stable = 0;
    for _ in 0..POWER_ITER_CAP {
        let y = m * &x;
        let estimate = y.amax();
        if estimate == 0.0 {
            // The all-ones cone collapsed: every row reachable from it is zero.
            return Ok(0.0);
        }
        x = y / estimate;
        if (estimate - prev).abs() <= 1e-13 * estimate.max(1.0) {
            stable += 1;
            if stable >= 3 {
                return Ok(estimate);
            }
        } else {
            stable = 0;
        }
        prev = estimate;
    }
    dense_spectral_radius(m)
}

fn dense_spectral_radius(m: &Matrix) -> Result<f64> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-13, 100_000)
        .ok_or_else(|| Error::NoConvergence("dense eigensolve did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Strong connectivity of the directed graph with an edge i→j whenever the
/// off-diagonal entry (i,j) is nonzero.
pub fn is_irreducible(m: &Matrix) -> bool {
    assert!(m.is_square());
    let n = m.nrows();
    if n <= 1 {
        return n == 1;
    }
    let edge = |i: usize, j: usize| i != j && m[(i, j)] != 0.0;
    let redge = |i: usize, j: usize| i != j && m[(j, i)] != 0.0;
    reaches_all(n, edge) && reaches_all(n, redge)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for (j, seen_j) in seen.iter_mut().enumerate() {
            if !*seen_j && edge(i, j) {
                *seen_j = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

/// Left Perron pair (γ, v) of an irreducible matrix with nonnegative
/// off-diagonals: `v M = γ v`, `v 𝟙 = 1`, `v > 0`.
///
/// The matrix is shifted to a nonnegative one, the Perron value comes from
/// [`spectral_radius`], and the vector from a few rounds of inverse iteration
/// with a Rayleigh-style refinement of γ.
pub fn perron_left_pair(m: &Matrix) -> Result<(f64, RowDVector<f64>)> {
    assert!(m.is_square());
    let n = m.nrows();
    if !is_irreducible(m) {
        return Err(Error::Reducible(
            "no strictly positive Perron vector".into(),
        ));
    }
    if n == 1 {
        return Ok((m[(0, 0)], RowDVector::from_element(1, 1.0)));
    }
    let shift = m.diagonal().iter().fold(0.0f64, |s, &d| s.max(-d));
    let shifted = m + Matrix::identity(n, n) * shift;
    let rho = spectral_radius(&shifted)?;
    let scale = rho.max(1.0);
    let transposed = m.transpose();
    let mut v = Vector::from_element(n, 1.0 / n as f64);
    let mut gamma = rho - shift;
    for _ in 0..6 {
        // Inverse iteration on Mᵀ with a slightly detuned shift keeps the
        // system nonsingular while amplifying the Perron direction.
        let sigma = gamma + 1e-10 * scale;
        let system = &transposed - Matrix::identity(n, n) * sigma;
        let rhs = Matrix::from_column_slice(n, 1, v.as_slice());
        let solved = match solve_linear(&system, &rhs) {
            Ok(s) => s,
            Err(_) => break, // shift landed on the eigenvalue; v is already good
        };
        let sum: f64 = solved.iter().sum();
        if sum == 0.0 || !sum.is_finite() {
            break;
        }
        v = Vector::from_column_slice(solved.as_slice()) / sum;
        gamma = (&transposed * &v).sum();
        let residual = (&transposed * &v - &v * gamma).amax();
        if residual <= 1e-13 * scale {
            break;
        }
    }
    Ok((gamma, v.transpose()))
}

/// Solves the Sylvester equation `A X + X D = RHS` by Kronecker vectorization.
pub fn solve_sylvester(a: &Matrix, d: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    SylvesterSolver::new(a, d)?.solve(rhs)
}

/// A factorized Sylvester operator `X ↦ A X + X D`, reusable across many
/// right-hand sides (the fixed-point Riccati oracle solves one per sweep).
pub struct SylvesterSolver {
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    p: usize,
    q: usize,
}

impl SylvesterSolver {
    pub fn new(a: &Matrix, d: &Matrix) -> Result<Self> {
        assert!(a.is_square() && d.is_square());
        let (p, q) = (a.nrows(), d.nrows());
        let kron = Matrix::identity(q, q).kronecker(a)
            + d.transpose().kronecker(&Matrix::identity(p, p));
        let lu = checked_lu(&kron)?;
        Ok(Self { lu, p, q })
    }

    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        assert_eq!(rhs.shape(), (self.p, self.q), "Sylvester RHS shape");
        let vec_rhs = Matrix::from_column_slice(self.p * self.q, 1, rhs.as_slice());
        let sol = self
            .lu
            .solve(&vec_rhs)
            .ok_or_else(|| Error::Singular("Sylvester back substitution failed".into()))?;
        Ok(Matrix::from_column_slice(self.p, self.q, sol.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solve_identity_returns_rhs() {
        let a = Matrix::identity(3, 3);
        let b = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = solve_linear(&a, &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn solve_two_by_two_inverse() {
        let a = Matrix::from_row_slice(2, 2, &[1.5, -1.0, -1.0, 3.0]);
        let x = solve_linear(&a, &Matrix::identity(2, 2)).unwrap();
        let expected =
            Matrix::from_row_slice(2, 2, &[3.0 / 3.5, 1.0 / 3.5, 1.0 / 3.5, 1.5 / 3.5]);
        assert!(max_abs_diff(&x, &expected) < 1e-14);
    }

    #[test]
    fn singular_rank_one_detected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            solve_linear(&a, &Matrix::identity(2, 2)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn solve_recovers_random_solution() {
        let a = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 0.3, 5.0, 1.0, 1.0, 0.2, 6.0]);
        let x0 = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, -1.5, 0.25]);
        let b = &a * &x0;
        let x = solve_linear(&a, &b).unwrap();
        assert!(max_abs_diff(&x, &x0) < 1e-9);
    }

    #[test]
    fn spectral_radius_scalar() {
        let m = Matrix::from_row_slice(1, 1, &[0.5]);
        assert_abs_diff_eq!(spectral_radius(&m).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn spectral_radius_permutation() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&m).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_transpose_invariant() {
        let m = Matrix::from_row_slice(3, 3, &[0.1, 0.7, 0.0, 0.4, 0.2, 0.3, 0.5, 0.0, 0.5]);
        let a = spectral_radius(&m).unwrap();
        let b = spectral_radius(&m.transpose()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn spectral_radius_stochastic_is_one() {
        let m = Matrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2]);
        assert_abs_diff_eq!(spectral_radius(&m).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_radius_zero_matrix() {
        let m = Matrix::zeros(3, 3);
        assert_eq!(spectral_radius(&m).unwrap(), 0.0);
    }

    #[test]
    fn perron_scalar_negative() {
        let m = Matrix::from_row_slice(1, 1, &[-1.0]);
        let (gamma, v) = perron_left_pair(&m).unwrap();
        assert_abs_diff_eq!(gamma, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn perron_scalar_zero() {
        let m = Matrix::from_row_slice(1, 1, &[0.0]);
        let (gamma, v) = perron_left_pair(&m).unwrap();
        assert_eq!(gamma, 0.0);
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn perron_stationary_vector_of_generator() {
        let t = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let (gamma, v) = perron_left_pair(&t).unwrap();
        assert!(gamma.abs() < 1e-10);
        assert_abs_diff_eq!(v[0], 2.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v[1], 1.0 / 3.0, epsilon = 1e-10);
        let residual = (&t.transpose() * &v.transpose() - &v.transpose() * gamma).amax();
        assert!(residual <= 1e-10);
    }

    #[test]
    fn perron_rejects_reducible() {
        let m = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        assert!(matches!(perron_left_pair(&m), Err(Error::Reducible(_))));
    }

    #[test]
    fn sylvester_scalar() {
        let a = Matrix::from_row_slice(1, 1, &[1.0]);
        let d = Matrix::from_row_slice(1, 1, &[2.0]);
        let rhs = Matrix::from_row_slice(1, 1, &[3.0]);
        let x = solve_sylvester(&a, &d, &rhs).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sylvester_identity_pair_halves() {
        let a = Matrix::identity(2, 2);
        let d = Matrix::identity(3, 3);
        let rhs = Matrix::from_row_slice(2, 3, &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
        let x = solve_sylvester(&a, &d, &rhs).unwrap();
        assert!(max_abs_diff(&x, &(rhs / 2.0)) < 1e-13);
    }

    #[test]
    fn sylvester_residual_small() {
        let a = Matrix::from_row_slice(3, 3, &[3.0, 0.5, 0.1, 0.2, 4.0, 0.3, 0.1, 0.1, 5.0]);
        let d = Matrix::from_row_slice(3, 3, &[2.0, 0.4, 0.0, 0.3, 3.0, 0.2, 0.1, 0.5, 4.0]);
        let rhs = Matrix::from_row_slice(3, 3, &[1.0, -1.0, 2.0, 0.5, 0.0, -2.0, 3.0, 1.0, 0.5]);
        let x = solve_sylvester(&a, &d, &rhs).unwrap();
        let residual = inf_norm(&(&a * &x + &x * &d - &rhs));
        assert!(residual <= 1e-10 * inf_norm(&rhs));
    }

    #[test]
    fn irreducibility_detects_one_way_chain() {
        let m = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert!(!is_irreducible(&m));
        let ring = Matrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 0.0, -1.0]);
        assert!(is_irreducible(&ring));
    }
}
