//! Shared fixtures for the integration suites: the two desk-checked models,
//! the symmetric boundary model, and a deterministic battery of random
//! irreducible fluid models with reference solutions from the fixed-point
//! oracle.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fluidq::model::{default_labels, validate_model, FluidModel};
use fluidq::numerics::Matrix;
use fluidq::oracles;

/// Two phases, `T = [[-1, 1], [2, -2]]`, rates `(1, -1)`: transient with
/// return probability 1/2 and dual 1.
pub fn m1() -> FluidModel {
    validate_model(
        Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]),
        vec![1.0, -1.0],
        default_labels(2),
    )
    .unwrap()
}

/// Four phases with mixed rates `(2, 1, -1, -3)`; no closed form, used for
/// cross-method agreement.
pub fn m2() -> FluidModel {
    validate_model(
        Matrix::from_row_slice(
            4,
            4,
            &[
                -3.0, 1.0, 1.0, 1.0, //
                1.0, -4.0, 2.0, 1.0, //
                1.0, 1.0, -3.0, 1.0, //
                1.0, 1.0, 1.0, -3.0,
            ],
        ),
        vec![2.0, 1.0, -1.0, -3.0],
        default_labels(4),
    )
    .unwrap()
}

/// The symmetric two-phase model with zero drift: exactly null recurrent,
/// the boundary case where doubling degrades to linear convergence.
pub fn symmetric_null() -> FluidModel {
    validate_model(
        Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
        vec![1.0, -1.0],
        default_labels(2),
    )
    .unwrap()
}

/// One battery entry: the model as generated, its unit-rate rescaling, and
/// reference return matrices from the fixed-point oracle (which shares no
/// code with the doubling solvers).
pub struct BatteryModel {
    pub model: FluidModel,
    pub unit: FluidModel,
    pub psi: Matrix,
    pub psi_hat: Matrix,
    /// Mean drift of the unit-rate model; sign decides recurrence.
    pub unit_drift: f64,
}

fn random_model(rng: &mut ChaCha8Rng, n: usize) -> FluidModel {
    loop {
        let mut generator = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    generator[(i, j)] = rng.random_range(0.1..1.1);
                }
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| generator[(i, j)]).sum();
            generator[(i, i)] = -off;
        }
        let mut rates: Vec<f64> = (0..n)
            .map(|_| {
                let magnitude = rng.random_range(0.3..2.0);
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        rates[0] = rates[0].abs();
        rates[n - 1] = -rates[n - 1].abs();
        if let Ok(model) = validate_model(generator, rates, default_labels(n)) {
            return model;
        }
    }
}

fn build_battery() -> Vec<BatteryModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f1d_5eed);
    let sizes = [2usize, 3, 4, 5, 6, 8, 10];
    let mut size_index = 0usize;
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    while positive.len() + negative.len() < 20 {
        let n = sizes[size_index % sizes.len()];
        size_index += 1;
        let model = random_model(&mut rng, n);
        let unit = model.rescale_to_unit_rates();
        let unit_drift = unit.mean_drift().unwrap();
        // Keep well away from the null-recurrent boundary so every solver
        // in the suite converges comfortably, and balance the two signs.
        if unit_drift.abs() < 0.08 {
            continue;
        }
        let bucket = if unit_drift > 0.0 {
            &mut positive
        } else {
            &mut negative
        };
        if bucket.len() >= 10 {
            continue;
        }
        let psi = oracles::riccati_fixed_point(&unit, 1e-12, oracles::DEFAULT_FP_MAX_ITER)
            .expect("battery oracle");
        let psi_hat = oracles::riccati_fixed_point(
            &unit.level_reversed(),
            1e-12,
            oracles::DEFAULT_FP_MAX_ITER,
        )
        .expect("battery dual oracle");
        assert!(psi.converged && psi_hat.converged, "battery oracle stalled");
        bucket.push(BatteryModel {
            model,
            unit,
            psi: psi.psi,
            psi_hat: psi_hat.psi,
            unit_drift,
        });
    }
    let mut all = positive;
    all.append(&mut negative);
    all
}

/// Twenty deterministic random irreducible models (n up to 10, both drift
/// signs, never near-null), with oracle references. Built once per test
/// binary.
pub fn battery() -> &'static [BatteryModel] {
    static BATTERY: OnceLock<Vec<BatteryModel>> = OnceLock::new();
    BATTERY.get_or_init(build_battery)
}

/// Default uniformization rate used throughout: twice the largest diagonal
/// magnitude, which satisfies every nonnegativity precondition.
pub fn default_rate(model: &FluidModel) -> f64 {
    2.0 * model.max_abs_diag()
}
