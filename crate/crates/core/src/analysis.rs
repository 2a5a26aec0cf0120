//! Derived matrices of a solved model (U, K, uniformized kernels, W, R₁),
//! Riccati residuals, Perron-root identities, and the recurrence classifier.

use crate::doubling::{self, DoublingParams, Variant};
use crate::error::{Error, Result};
use crate::model::FluidModel;
use crate::numerics::{
    inf_norm, is_irreducible, solve_linear, solve_right, spectral_radius, Matrix,
};

/// Perron roots with absolute value at or below this count as zero.
pub const CLASSIFICATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    PositiveRecurrent,
    NullRecurrent,
    Transient,
    Unknown,
}

impl Classification {
    pub fn tag(&self) -> &'static str {
        match self {
            Classification::PositiveRecurrent => "positive-recurrent",
            Classification::NullRecurrent => "null-recurrent",
            Classification::Transient => "transient",
            Classification::Unknown => "unknown",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Everything downstream of a solved Ψ for a unit-rate model: the censored
/// phase generators U and K, the uniformized kernels at rates λ and μ, the
/// weighted descent kernel W, its ascent counterpart, and R₁.
#[derive(Debug, Clone)]
pub struct DerivedMatrices {
    /// U = T₋₋ + T₋₊Ψ, generator of the phase seen at successive down-crossings.
    pub u: Matrix,
    /// K = T₊₊ + ΨT₋₊, generator of the record-height phase process.
    pub k: Matrix,
    /// P_λ = I + λ⁻¹T.
    pub p_lambda: Matrix,
    /// P_μ = I + μ⁻¹T.
    pub p_mu: Matrix,
    /// V_λ = I + λ⁻¹U.
    pub v_lambda: Matrix,
    /// V_μ = I + μ⁻¹U.
    pub v_mu: Matrix,
    /// W = (I + μ⁻¹U)(I − λ⁻¹U)⁻¹.
    pub w: Matrix,
    /// R₁ = (I − μ⁻¹K)⁻¹(I + λ⁻¹K).
    pub r1: Matrix,
    /// R₁ recomputed as E(I − ΨH)⁻¹ from the starting blocks at
    /// (α, β) = (μ⁻¹, λ⁻¹); `None` when that point falls outside the
    /// admissible parameter box.
    pub r1_from_blocks: Option<Matrix>,
    /// Q_W = (I − μ⁻¹T₊₊)⁻¹(I + λ⁻¹T₊₊).
    pub ascent: Matrix,
    pub lambda: f64,
    pub mu: f64,
}

impl DerivedMatrices {
    /// Entrywise gap between the two R₁ routes, when both are available.
    pub fn r1_route_deviation(&self) -> Option<f64> {
        self.r1_from_blocks
            .as_ref()
            .map(|b| crate::numerics::max_abs_diff(&self.r1, b))
    }
}

pub(crate) fn check_psi(model: &FluidModel, psi: &Matrix, what: &str) -> Result<()> {
    if psi.nrows() != model.n_plus() || psi.ncols() != model.n_minus() {
        return Err(Error::Dimension(format!(
            "{what} must be {}x{}, got {}x{}",
            model.n_plus(),
            model.n_minus(),
            psi.nrows(),
            psi.ncols()
        )));
    }
    for &x in psi.iter() {
        if !(-1e-10..=1.0 + 1e-10).contains(&x) {
            return Err(Error::BadPsi(format!(
                "{what} entry {x} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

pub fn derived_matrices(
    model: &FluidModel,
    psi: &Matrix,
    lambda: f64,
    mu: f64,
) -> Result<DerivedMatrices> {
    if !model.is_unit_rate() {
        return Err(Error::NonUnitRates(
            "derived matrices are defined for unit-rate models; rescale first".into(),
        ));
    }
    check_psi(model, psi, "psi")?;
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::BadParams(format!(
            "uniformization rates must be positive, got ({lambda}, {mu})"
        )));
    }

    let t = model.t_blocks();
    let n = model.n();
    let (np, nm) = (model.n_plus(), model.n_minus());
    let id_n = Matrix::identity(n, n);
    let id_p = Matrix::identity(np, np);
    let id_m = Matrix::identity(nm, nm);

    let u = &t.mm + &t.mp * psi;
    let k = &t.pp + psi * &t.mp;

    let p_lambda = &id_n + model.generator() / lambda;
    let p_mu = &id_n + model.generator() / mu;
    let v_lambda = &id_m + &u / lambda;
    let v_mu = &id_m + &u / mu;
    let w = solve_right(&(&id_m - &u / lambda), &v_mu)?;
    let ascent = solve_linear(&(&id_p - &t.pp / mu), &(&id_p + &t.pp / lambda))?;
    let r1 = solve_linear(&(&id_p - &k / mu), &(&id_p + &k / lambda))?;

    let (alpha_opt, beta_opt) = doubling::optimal_parameters(model)?;
    let (alpha, beta) = (1.0 / mu, 1.0 / lambda);
    let slack = 1e-12;
    let r1_from_blocks = if alpha <= alpha_opt * (1.0 + slack) + slack
        && beta <= beta_opt * (1.0 + slack) + slack
    {
        let start = doubling::initialize(
            model,
            &DoublingParams {
                alpha,
                beta,
                variant: Variant::Custom,
            },
        )?;
        Some(solve_right(&(&id_p - psi * &start.h), &start.e)?)
    } else {
        None
    };

    Ok(DerivedMatrices {
        u,
        k,
        p_lambda,
        p_mu,
        v_lambda,
        v_mu,
        w,
        r1,
        r1_from_blocks,
        ascent,
        lambda,
        mu,
    })
}

fn scale_rows(m: &Matrix, weights: &[f64]) -> Matrix {
    let mut out = m.clone();
    for (i, w) in weights.iter().enumerate() {
        for j in 0..out.ncols() {
            out[(i, j)] *= w;
        }
    }
    out
}

/// ‖C₊⁻¹T₊₋ + Ψ|C₋|⁻¹T₋₋ + C₊⁻¹T₊₊Ψ + Ψ|C₋|⁻¹T₋₊Ψ‖_∞ — zero exactly at the
/// solutions of the rate-scaled Riccati equation.
pub fn riccati_residual(model: &FluidModel, psi: &Matrix) -> f64 {
    let t = model.t_blocks();
    let wp: Vec<f64> = model.c_plus().iter().map(|c| 1.0 / c).collect();
    let wm: Vec<f64> = model.c_minus_abs().iter().map(|c| 1.0 / c).collect();
    let a = scale_rows(&t.pp, &wp);
    let b = scale_rows(&t.pm, &wp);
    let c = scale_rows(&t.mp, &wm);
    let d = scale_rows(&t.mm, &wm);
    inf_norm(&(b + psi * d + a * psi + psi * c * psi))
}

/// Residual of the level-reversed equation, with the roles of the two sides
/// swapped: ‖|C₋|⁻¹T₋₊ + Ψ̂C₊⁻¹T₊₊ + |C₋|⁻¹T₋₋Ψ̂ + Ψ̂C₊⁻¹T₊₋Ψ̂‖_∞.
pub fn dual_riccati_residual(model: &FluidModel, psi_hat: &Matrix) -> f64 {
    let t = model.t_blocks();
    let wp: Vec<f64> = model.c_plus().iter().map(|c| 1.0 / c).collect();
    let wm: Vec<f64> = model.c_minus_abs().iter().map(|c| 1.0 / c).collect();
    let a = scale_rows(&t.pp, &wp);
    let b = scale_rows(&t.pm, &wp);
    let c = scale_rows(&t.mp, &wm);
    let d = scale_rows(&t.mm, &wm);
    inf_norm(&(c + psi_hat * a + d * psi_hat + psi_hat * b * psi_hat))
}

/// Perron (rightmost) eigenvalue of a matrix with nonnegative off-diagonal
/// entries, by shifting it nonnegative and taking the spectral radius.
pub fn metzler_perron_root(m: &Matrix) -> Result<f64> {
    let n = m.nrows();
    let shift = m
        .diagonal()
        .iter()
        .fold(0.0f64, |acc, d| acc.max(-d));
    let shifted = m + Matrix::identity(n, n) * shift;
    Ok(spectral_radius(&shifted)? - shift)
}

fn rowsum_deficit(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        worst = worst.max(1.0 - m.row(i).iter().sum::<f64>());
    }
    worst
}

/// Sorts the queue into transient / positive recurrent / null recurrent from
/// the Perron roots γ of U and δ of K, cross-checking against the mean drift
/// and the completeness of the two return probabilities.
///
/// The convention: γ < 0 means the level escapes upward (transient); δ < 0
/// means record heights die out (positive recurrent); both zero is the null
/// boundary. Any other sign pattern, or a contradiction with the drift,
/// reports `Inconsistent` rather than guessing.
pub fn classify_recurrence(
    model: &FluidModel,
    psi: &Matrix,
    psi_hat: &Matrix,
) -> Result<Classification> {
    if !model.is_irreducible() {
        return Err(Error::Reducible(
            "recurrence classification needs an irreducible generator".into(),
        ));
    }
    if psi.nrows() != model.n_plus()
        || psi.ncols() != model.n_minus()
        || psi_hat.nrows() != model.n_minus()
        || psi_hat.ncols() != model.n_plus()
    {
        return Err(Error::Dimension(
            "psi must be n+ x n- and psi_hat must be n- x n+".into(),
        ));
    }

    let unit;
    let m = if model.is_unit_rate() {
        model
    } else {
        unit = model.rescale_to_unit_rates();
        &unit
    };
    let t = m.t_blocks();
    let gamma = metzler_perron_root(&(&t.mm + &t.mp * psi))?;
    let delta = metzler_perron_root(&(&t.pp + psi * &t.mp))?;

    let tol = CLASSIFICATION_TOL;
    let class = if gamma < -tol {
        Classification::Transient
    } else if delta < -tol {
        Classification::PositiveRecurrent
    } else if gamma.abs() <= tol && delta.abs() <= tol {
        Classification::NullRecurrent
    } else {
        return Err(Error::Inconsistent(format!(
            "Perron roots gamma={gamma:.3e}, delta={delta:.3e} match no recurrence class"
        )));
    };

    let drift = model.mean_drift()?;
    let drift_ok = match class {
        Classification::Transient => drift > -1e-8,
        Classification::PositiveRecurrent => drift < 1e-8,
        Classification::NullRecurrent => drift.abs() <= 1e-6,
        Classification::Unknown => unreachable!(),
    };
    if !drift_ok {
        return Err(Error::Inconsistent(format!(
            "classification {class} contradicts mean drift {drift:.3e}"
        )));
    }

    // Return from above is certain unless positive recurrent; return from
    // below is certain unless transient. A flagrant deficit means psi and
    // psi_hat do not belong to the same model.
    match class {
        Classification::Transient if rowsum_deficit(psi_hat) > 1e-3 => {
            Err(Error::Inconsistent(
                "transient queue but psi_hat is far from stochastic".into(),
            ))
        }
        Classification::PositiveRecurrent if rowsum_deficit(psi) > 1e-3 => {
            Err(Error::Inconsistent(
                "positive recurrent queue but psi is far from stochastic".into(),
            ))
        }
        _ => Ok(class),
    }
}

/// Both sides of the two Perron-root identities tying ρ(W) and ρ(R₁) to the
/// roots of U and K.
#[derive(Debug, Clone, Copy)]
pub struct PerronChecks {
    pub gamma: f64,
    pub delta: f64,
    pub rho_w: f64,
    pub rho_w_formula: f64,
    pub rho_r1: f64,
    pub rho_r1_formula: f64,
}

impl PerronChecks {
    pub fn max_deviation(&self) -> f64 {
        (self.rho_w - self.rho_w_formula)
            .abs()
            .max((self.rho_r1 - self.rho_r1_formula).abs())
    }
}

/// Verifies ρ(W) = (1+μ⁻¹γ)/(1−λ⁻¹γ) and ρ(R₁) = (1+λ⁻¹δ)/(1−μ⁻¹δ).
pub fn perron_identities(derived: &DerivedMatrices) -> Result<PerronChecks> {
    if !is_irreducible(&derived.u) || !is_irreducible(&derived.k) {
        return Err(Error::Reducible(
            "Perron identities need irreducible U and K".into(),
        ));
    }
    let gamma = metzler_perron_root(&derived.u)?;
    let delta = metzler_perron_root(&derived.k)?;
    let (lambda, mu) = (derived.lambda, derived.mu);
    Ok(PerronChecks {
        gamma,
        delta,
        rho_w: spectral_radius(&derived.w)?,
        rho_w_formula: (1.0 + gamma / mu) / (1.0 - gamma / lambda),
        rho_r1: spectral_radius(&derived.r1)?,
        rho_r1_formula: (1.0 + delta / lambda) / (1.0 - delta / mu),
    })
}

/// ρ(W) and ρ(R₁) tabulated over a rate grid, with a monotonicity verdict.
#[derive(Debug, Clone)]
pub struct MonotonicityTable {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    /// rho_w[(i, j)] = ρ(W) at (lambdas[i], mus[j]); same layout for rho_r1.
    pub rho_w: Matrix,
    pub rho_r1: Matrix,
    pub monotone: bool,
    pub max_violation: f64,
}

/// Tabulates ρ(W) and ρ(R₁) over ascending λ and μ grids and checks both are
/// nondecreasing along each axis (within 1e-10).
pub fn monotonicity_probe(
    model: &FluidModel,
    psi: &Matrix,
    lambdas: &[f64],
    mus: &[f64],
) -> Result<MonotonicityTable> {
    if !model.is_unit_rate() {
        return Err(Error::NonUnitRates(
            "the rate probe is defined for unit-rate models".into(),
        ));
    }
    check_psi(model, psi, "psi")?;
    for grid in [lambdas, mus] {
        if grid.is_empty() {
            return Err(Error::BadParams("rate grids must be non-empty".into()));
        }
        if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParams(
                "rate grids must be positive and strictly ascending".into(),
            ));
        }
    }

    let t = model.t_blocks();
    let u = &t.mm + &t.mp * psi;
    let k = &t.pp + psi * &t.mp;
    let id_m = Matrix::identity(model.n_minus(), model.n_minus());
    let id_p = Matrix::identity(model.n_plus(), model.n_plus());

    let mut rho_w = Matrix::zeros(lambdas.len(), mus.len());
    let mut rho_r1 = Matrix::zeros(lambdas.len(), mus.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        for (j, &mu) in mus.iter().enumerate() {
            let w = solve_right(&(&id_m - &u / lambda), &(&id_m + &u / mu))?;
            let r1 = solve_linear(&(&id_p - &k / mu), &(&id_p + &k / lambda))?;
            rho_w[(i, j)] = spectral_radius(&w)?;
            rho_r1[(i, j)] = spectral_radius(&r1)?;
        }
    }

    let mut max_violation = 0.0f64;
    for table in [&rho_w, &rho_r1] {
        for i in 0..table.nrows() {
            for j in 1..table.ncols() {
                max_violation = max_violation.max(table[(i, j - 1)] - table[(i, j)]);
            }
        }
        for j in 0..table.ncols() {
            for i in 1..table.nrows() {
                max_violation = max_violation.max(table[(i - 1, j)] - table[(i, j)]);
            }
        }
    }

    Ok(MonotonicityTable {
        lambdas: lambdas.to_vec(),
        mus: mus.to_vec(),
        rho_w,
        rho_r1,
        monotone: max_violation <= 1e-10,
        max_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_labels, validate_model};
    use approx::assert_abs_diff_eq;

    fn m1() -> FluidModel {
        validate_model(
            Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]),
            vec![1.0, -1.0],
            default_labels(2),
        )
        .unwrap()
    }

    fn scalar(x: f64) -> Matrix {
        Matrix::from_row_slice(1, 1, &[x])
    }

    #[test]
    fn m1_derived_golden() {
        let d = derived_matrices(&m1(), &scalar(0.5), 2.0, 2.0).unwrap();
        assert_abs_diff_eq!(d.u[(0, 0)], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.k[(0, 0)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.v_mu[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(d.w[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.ascent[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.r1[(0, 0)], 1.0, epsilon = 1e-14);
        let blocks = d.r1_from_blocks.as_ref().expect("inside parameter box");
        assert_abs_diff_eq!(blocks[(0, 0)], 1.0, epsilon = 1e-13);
        assert!(d.r1_route_deviation().unwrap() <= 1e-13);
        // P_λ at λ=2 mixes each phase halfway toward its jump distribution.
        assert_abs_diff_eq!(d.p_lambda[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.p_lambda[(0, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.p_lambda[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.p_lambda[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_psi_reduces_to_diagonal_blocks() {
        let d = derived_matrices(&m1(), &scalar(0.0), 2.0, 2.0).unwrap();
        assert_eq!(d.u[(0, 0)], -2.0);
        assert_eq!(d.k[(0, 0)], -1.0);
    }

    #[test]
    fn non_unit_rates_rejected() {
        let model = validate_model(
            Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]),
            vec![2.0, -1.0],
            default_labels(2),
        )
        .unwrap();
        assert!(matches!(
            derived_matrices(&model, &scalar(0.5), 2.0, 2.0),
            Err(Error::NonUnitRates(_))
        ));
    }

    #[test]
    fn psi_outside_unit_interval_rejected() {
        assert!(matches!(
            derived_matrices(&m1(), &scalar(1.5), 2.0, 2.0),
            Err(Error::BadPsi(_))
        ));
    }

    #[test]
    fn m1_riccati_residuals() {
        let model = m1();
        assert_abs_diff_eq!(riccati_residual(&model, &scalar(0.5)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(riccati_residual(&model, &scalar(1.0)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(riccati_residual(&model, &scalar(0.0)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            dual_riccati_residual(&model, &scalar(1.0)),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            dual_riccati_residual(&model, &scalar(0.0)),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn m1_is_transient() {
        let class = classify_recurrence(&m1(), &scalar(0.5), &scalar(1.0)).unwrap();
        assert_eq!(class, Classification::Transient);
    }

    #[test]
    fn symmetric_model_is_null_recurrent() {
        let sym = validate_model(
            Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
            vec![1.0, -1.0],
            default_labels(2),
        )
        .unwrap();
        let class = classify_recurrence(&sym, &scalar(1.0), &scalar(1.0)).unwrap();
        assert_eq!(class, Classification::NullRecurrent);
    }

    #[test]
    fn reversed_m1_is_positive_recurrent() {
        let reversed = m1().level_reversed();
        let class = classify_recurrence(&reversed, &scalar(1.0), &scalar(0.5)).unwrap();
        assert_eq!(class, Classification::PositiveRecurrent);
    }

    #[test]
    fn non_minimal_root_is_flagged() {
        // Ψ=1 also solves the Riccati equation for M1, but its K has a
        // positive Perron root: no recurrence class matches.
        assert!(matches!(
            classify_recurrence(&m1(), &scalar(1.0), &scalar(1.0)),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn mismatched_psi_hat_is_flagged() {
        assert!(matches!(
            classify_recurrence(&m1(), &scalar(0.5), &scalar(0.2)),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn m1_perron_identities() {
        let d = derived_matrices(&m1(), &scalar(0.5), 2.0, 2.0).unwrap();
        let checks = perron_identities(&d).unwrap();
        assert_abs_diff_eq!(checks.gamma, -1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(checks.delta, 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!(checks.rho_w, 1.0 / 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(checks.rho_r1, 1.0, epsilon = 1e-11);
        assert!(checks.max_deviation() <= 1e-9);
    }

    #[test]
    fn m1_rate_probe_golden() {
        let table = monotonicity_probe(&m1(), &scalar(0.5), &[2.0, 4.0, 8.0], &[2.0]).unwrap();
        assert_abs_diff_eq!(table.rho_w[(0, 0)], 1.0 / 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(table.rho_w[(1, 0)], 0.4, epsilon = 1e-11);
        assert_abs_diff_eq!(table.rho_w[(2, 0)], 4.0 / 9.0, epsilon = 1e-11);
        assert!(table.monotone, "violation {}", table.max_violation);
    }

    #[test]
    fn descending_grid_rejected() {
        assert!(matches!(
            monotonicity_probe(&m1(), &scalar(0.5), &[4.0, 2.0], &[2.0]),
            Err(Error::BadParams(_))
        ));
    }

    #[test]
    fn metzler_root_of_generator_is_zero() {
        let t = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        assert_abs_diff_eq!(metzler_perron_root(&t).unwrap(), 0.0, epsilon = 1e-11);
    }
}
