//! Independent routes to the return matrix: a Sylvester fixed point, four
//! series representations, and a Monte Carlo path simulator.
//!
//! None of these share code with the doubling solvers, so agreement between
//! them and `doubling::solve` is a meaningful cross-check rather than a
//! tautology.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis;
use crate::error::{Error, Result};
use crate::model::FluidModel;
use crate::numerics::{inf_norm, invert, solve_right, Matrix, SylvesterSolver};

/// Default residual target for the fixed-point iteration.
pub const DEFAULT_FP_TOL: f64 = 1e-13;
/// Default sweep cap for the fixed-point iteration. Convergence is linear,
/// so near-null models genuinely need tens of thousands of sweeps.
pub const DEFAULT_FP_MAX_ITER: usize = 200_000;
/// Default series truncation index.
pub const DEFAULT_SERIES_TERMS: usize = 64;
/// Series summation stops early once an increment falls below this norm.
pub const SERIES_EARLY_EXIT: f64 = 1e-14;
/// Default level at which a simulated path is abandoned as non-returning.
pub const DEFAULT_LEVEL_CAP: f64 = 1e4;
/// Default elapsed-time cap per simulated path.
pub const DEFAULT_TIME_CAP: f64 = 1e6;

/// Trials per replica; each replica has its own derived RNG stream, so
/// estimates are reproducible bit for bit and replicas merge by adding
/// integer counts.
const TRIALS_PER_REPLICA: u64 = 8192;

/// Outcome of the fixed-point iteration. When the sweep cap is reached the
/// best iterate is still returned, flagged via `converged`.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub psi: Matrix,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solves the return-matrix Riccati equation by the monotone fixed point
///
/// ```text
/// A X_{k+1} + X_{k+1} D = B + X_k Γ X_k,   X_0 = 0,
/// ```
///
/// with `A = −C₊⁻¹T₊₊`, `D = −|C₋|⁻¹T₋₋`, `B = C₊⁻¹T₊₋`, `Γ = |C₋|⁻¹T₋₊`.
/// The Sylvester operator on the left is factorized once and reused every
/// sweep. Iterates increase entrywise towards the minimal solution, which
/// makes this a slow but structurally independent oracle for the doubling
/// solvers.
pub fn riccati_fixed_point(
    model: &FluidModel,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if tol.is_nan() || tol <= 0.0 || max_iter == 0 {
        return Err(Error::BadParams(
            "fixed point needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let t = model.t_blocks();
    let c_plus = model.c_plus();
    let c_minus = model.c_minus_abs();
    let scale_plus = Matrix::from_diagonal(&c_plus.map(|c| 1.0 / c));
    let scale_minus = Matrix::from_diagonal(&c_minus.map(|c| 1.0 / c));

    let a = -(&scale_plus * &t.pp);
    let d = -(&scale_minus * &t.mm);
    let b = &scale_plus * &t.pm;
    let coupling = &scale_minus * &t.mp;

    let solver = SylvesterSolver::new(&a, &d)?;
    let mut psi = Matrix::zeros(model.n_plus(), model.n_minus());
    let mut residual = analysis::riccati_residual(model, &psi);
    for k in 1..=max_iter {
        let rhs = &b + &psi * &coupling * &psi;
        psi = solver.solve(&rhs)?;
        residual = analysis::riccati_residual(model, &psi);
        if residual <= tol {
            return Ok(FixedPointResult {
                psi,
                iterations: k,
                residual,
                converged: true,
            });
        }
    }
    Ok(FixedPointResult {
        psi,
        iterations: max_iter,
        residual,
        converged: false,
    })
}

/// Negative-binomial weight `C(k+n, n) λ^{k+1} μ^n / (λ+μ)^{k+n+1}`,
/// evaluated in log space so large indices neither overflow nor underflow
/// prematurely. For each `k` the weights over `n` sum to one.
pub fn gamma_weight(k: usize, n: usize, lambda: f64, mu: f64) -> f64 {
    assert!(lambda > 0.0 && mu > 0.0, "weights need positive rates");
    let mut log_binom = 0.0f64;
    for i in 1..=n {
        log_binom += ((k + i) as f64).ln() - (i as f64).ln();
    }
    let log_w = log_binom + (k as f64 + 1.0) * lambda.ln() + (n as f64) * mu.ln()
        - ((k + n) as f64 + 1.0) * (lambda + mu).ln();
    log_w.exp()
}

/// The four series representations of the return matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Double sum over up-jumps and down-jumps with negative-binomial weights.
    DoubleSum,
    /// Single sum obtained by resumming the down index.
    Sum1,
    /// Single sum obtained by resumming the up index.
    Sum2,
    /// Single sum over simultaneous censoring of both sides.
    Sum3,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::DoubleSum,
        Representation::Sum1,
        Representation::Sum2,
        Representation::Sum3,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Representation::DoubleSum => "doublesum",
            Representation::Sum1 => "sum1",
            Representation::Sum2 => "sum2",
            Representation::Sum3 => "sum3",
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A truncated series evaluation. `value` is entrywise nondecreasing in the
/// truncation index and bounded above by the exact return matrix.
#[derive(Debug, Clone)]
pub struct SeriesEstimate {
    pub value: Matrix,
    pub terms_used: usize,
    pub last_increment_norm: f64,
    pub representation: Representation,
}

fn check_nonnegative_factor(m: &Matrix, name: &str) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] < -1e-12 {
                return Err(Error::RateTooSmall(format!(
                    "stochastic factor {name} has negative entry {:.6} at ({i}, {j}); \
                     increase the uniformization rate",
                    m[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Evaluates one series representation of the return matrix for a unit-rate
/// model, truncated at index `k_max`, using `psi_ref` to build the censored
/// down-side generator `U = T₋₋ + T₋₊ Ψ`.
///
/// Every representation multiplies nonnegative factors, so partial sums grow
/// monotonically towards the exact value; summation stops early once an
/// increment drops below [`SERIES_EARLY_EXIT`].
pub fn series_psi(
    model: &FluidModel,
    psi_ref: &Matrix,
    lambda: f64,
    mu: f64,
    representation: Representation,
    k_max: usize,
) -> Result<SeriesEstimate> {
    if !model.is_unit_rate() {
        return Err(Error::NonUnitRates(
            "series representations assume unit fluid rates; rescale first".into(),
        ));
    }
    if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(Error::BadParams(format!(
            "uniformization rates must be positive and finite, got lambda = {lambda}, mu = {mu}"
        )));
    }
    analysis::check_psi(model, psi_ref, "series reference")?;

    let p = model.n_plus();
    let m = model.n_minus();
    let t = model.t_blocks();
    let u = &t.mm + &t.mp * psi_ref;
    let id_p = Matrix::identity(p, p);
    let id_m = Matrix::identity(m, m);

    let pl_pp = &id_p + &t.pp / lambda;
    let pl_pm = &t.pm / lambda;
    let pm_pm = &t.pm / mu;
    let v_mu = &id_m + &u / mu;

    use Representation::*;
    if matches!(representation, DoubleSum | Sum1 | Sum3) {
        check_nonnegative_factor(&pl_pp, "I + T₊₊/λ")?;
    }
    if matches!(representation, DoubleSum | Sum2 | Sum3) {
        check_nonnegative_factor(&v_mu, "I + U/μ")?;
    }

    let mut value = Matrix::zeros(p, m);
    let mut terms_used = 0usize;
    let mut last_increment_norm = 0.0f64;

    match representation {
        DoubleSum => {
            // Σ_{k,n} γ_{k,n} P_{λ,++}^k P_{λ,+-} V_μ^n over the square
            // [0, k_max]², row by row in k. Powers of V_μ are cached since
            // every row reuses all of them.
            let mut v_powers = Vec::with_capacity(k_max + 1);
            v_powers.push(id_m.clone());
            for n in 1..=k_max {
                let next = &v_powers[n - 1] * &v_mu;
                v_powers.push(next);
            }
            let mut lead = pl_pm.clone();
            for k in 0..=k_max {
                if k > 0 {
                    lead = &pl_pp * &lead;
                }
                let mut inner = Matrix::zeros(m, m);
                for (n, power) in v_powers.iter().enumerate() {
                    inner += power * gamma_weight(k, n, lambda, mu);
                }
                let row = &lead * inner;
                // One "term" per (k, n) pair even though a whole row lands
                // at once; the increment norm is the row's.
                value += &row;
                terms_used += k_max + 1;
                last_increment_norm = inf_norm(&row);
                if last_increment_norm < SERIES_EARLY_EXIT {
                    break;
                }
            }
        }
        Sum1 => {
            // Σ_k P_{λ,++}^k P_{λ,+-} (I − U/λ)^{-(k+1)}
            let slow_down = invert(&(&id_m - &u / lambda))?;
            let mut term = &pl_pm * &slow_down;
            for _ in 0..=k_max {
                value += &term;
                terms_used += 1;
                last_increment_norm = inf_norm(&term);
                if last_increment_norm < SERIES_EARLY_EXIT {
                    break;
                }
                term = &pl_pp * term * &slow_down;
            }
        }
        Sum2 => {
            // Σ_n (I − T₊₊/μ)^{-(n+1)} P_{μ,+-} V_μ^n
            let dwell = invert(&(&id_p - &t.pp / mu))?;
            let mut term = &dwell * &pm_pm;
            for _ in 0..=k_max {
                value += &term;
                terms_used += 1;
                last_increment_norm = inf_norm(&term);
                if last_increment_norm < SERIES_EARLY_EXIT {
                    break;
                }
                term = &dwell * term * &v_mu;
            }
        }
        Sum3 => {
            // Σ_m Q_W^m (I − T₊₊/μ)^{-1} (P_{λ,+-} W + P_{μ,+-}) W^m
            let dwell = invert(&(&id_p - &t.pp / mu))?;
            let ascent = &dwell * (&id_p + &t.pp / lambda);
            let w = solve_right(&(&id_m - &u / lambda), &v_mu)?;
            let mut term = &dwell * (&pl_pm * &w + &pm_pm);
            for _ in 0..=k_max {
                value += &term;
                terms_used += 1;
                last_increment_norm = inf_norm(&term);
                if last_increment_norm < SERIES_EARLY_EXIT {
                    break;
                }
                term = &ascent * term * &w;
            }
        }
    }

    Ok(SeriesEstimate {
        value,
        terms_used,
        last_increment_norm,
        representation,
    })
}

/// A Monte Carlo estimate of return probabilities. Row `i` of `mean` holds
/// the empirical distribution of the return phase for the `i`-th simulated
/// start phase; `halfwidth` holds the matching 95% normal-approximation
/// confidence half-widths.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: Matrix,
    pub halfwidth: Matrix,
    /// Trials per start phase.
    pub trials: u64,
    pub seed: u64,
    /// Paths truncated by the level or time cap, summed over start phases.
    /// Truncated paths count as non-returning.
    pub capped_paths: u64,
}

fn replica_rng(seed: u64, row: u64, replica: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&row.to_le_bytes());
    key[16..24].copy_from_slice(&replica.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Simulates one fluid path from level 0 in `phase` (a canonical up-phase
/// index) until it first returns to level 0, or until a cap truncates it.
/// Returns the down-phase column index at the return instant, or `None` for
/// a truncated path.
fn walk(model: &FluidModel, phase: usize, level_cap: f64, time_cap: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
    let t = model.generator();
    let c = model.rates();
    let n = model.n();
    let mut p = phase;
    let mut level = 0.0f64;
    let mut elapsed = 0.0f64;
    loop {
        let exit_rate = -t[(p, p)];
        // An absorbing phase holds forever: the path either drains to zero
        // (descending) or is truncated by a cap (ascending).
        let hold = if exit_rate > 0.0 {
            let u: f64 = rng.random();
            -(1.0 - u).ln() / exit_rate
        } else {
            f64::INFINITY
        };
        if c[p] < 0.0 {
            let drain = level / -c[p];
            if drain <= hold {
                if elapsed + drain > time_cap {
                    return None;
                }
                return Some(p - model.n_plus());
            }
        }
        elapsed += hold;
        level += c[p] * hold;
        if !(level <= level_cap && elapsed <= time_cap) {
            return None;
        }
        // Jump according to the off-diagonal row; the final candidate soaks
        // up any rounding slack in the cumulative sum.
        let target: f64 = rng.random::<f64>() * exit_rate;
        let mut cumulative = 0.0f64;
        let mut next = p;
        for j in 0..n {
            if j == p || t[(p, j)] <= 0.0 {
                continue;
            }
            next = j;
            cumulative += t[(p, j)];
            if target < cumulative {
                break;
            }
        }
        p = next;
    }
}

fn simulate_rows(
    model: &FluidModel,
    rows: &[usize],
    trials: u64,
    level_cap: f64,
    time_cap: f64,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::BadParams("simulation needs at least one trial".into()));
    }
    if !(level_cap > 0.0 && time_cap > 0.0) {
        return Err(Error::BadParams(
            "level and time caps must be positive".into(),
        ));
    }
    for &row in rows {
        if row >= model.n_plus() {
            return Err(Error::BadParams(format!(
                "start phase index {row} is not an ascending phase (have {})",
                model.n_plus()
            )));
        }
    }
    let m = model.n_minus();
    let mut mean = Matrix::zeros(rows.len(), m);
    let mut halfwidth = Matrix::zeros(rows.len(), m);
    let mut capped_total = 0u64;
    for (out, &row) in rows.iter().enumerate() {
        let mut counts = vec![0u64; m];
        let mut done = 0u64;
        let mut replica = 0u64;
        while done < trials {
            let batch = TRIALS_PER_REPLICA.min(trials - done);
            let mut rng = replica_rng(seed, row as u64, replica);
            for _ in 0..batch {
                match walk(model, row, level_cap, time_cap, &mut rng) {
                    Some(j) => counts[j] += 1,
                    None => capped_total += 1,
                }
            }
            done += batch;
            replica += 1;
        }
        for j in 0..m {
            let p_hat = counts[j] as f64 / trials as f64;
            mean[(out, j)] = p_hat;
            halfwidth[(out, j)] = 1.96 * (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
        }
    }
    Ok(McEstimate {
        mean,
        halfwidth,
        trials,
        seed,
        capped_paths: capped_total,
    })
}

/// Estimates one row of the return matrix by direct path simulation.
/// `start_phase` is a canonical up-phase index; the result has a single row.
///
/// Paths are simulated in replicas of fixed size with sub-seeds derived from
/// `(seed, start_phase, replica)`, so the same arguments always reproduce
/// the same counts bit for bit, and partial runs merge by adding counts.
pub fn simulate_return_probability(
    model: &FluidModel,
    start_phase: usize,
    trials: u64,
    level_cap: f64,
    time_cap: f64,
    seed: u64,
) -> Result<McEstimate> {
    simulate_rows(model, &[start_phase], trials, level_cap, time_cap, seed)
}

/// Estimates the whole return matrix by simulating every ascending phase.
/// Row `i` is bit-identical to `simulate_return_probability(model, i, ...)`
/// with the same seed.
pub fn simulate_all_phases(
    model: &FluidModel,
    trials: u64,
    level_cap: f64,
    time_cap: f64,
    seed: u64,
) -> Result<McEstimate> {
    let rows: Vec<usize> = (0..model.n_plus()).collect();
    simulate_rows(model, &rows, trials, level_cap, time_cap, seed)
}
