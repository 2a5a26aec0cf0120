//! Problem instances: a phase generator, signed fluid rates, and the
//! up/down partition.
//!
//! A [`FluidModel`] stores phases in canonical order — every up phase
//! (positive rate) before every down phase — and remembers the permutation
//! from the caller's ordering so output can be labelled the way the model was
//! written.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, inf_norm, Matrix, Vector};

/// A validated fluid-queue instance in canonical phase order.
#[derive(Debug, Clone)]
pub struct FluidModel {
    labels: Vec<String>,
    generator: Matrix,
    rates: Vec<f64>,
    n_plus: usize,
    n_minus: usize,
    /// `perm[k]` = position of canonical phase `k` in the caller's ordering.
    perm: Vec<usize>,
}

/// The four blocks of an n×n matrix split along the up/down partition.
#[derive(Debug, Clone)]
pub struct PartitionedMatrix {
    pub pp: Matrix,
    pub pm: Matrix,
    pub mp: Matrix,
    pub mm: Matrix,
}

impl PartitionedMatrix {
    pub fn split(m: &Matrix, n_plus: usize) -> Self {
        let n = m.nrows();
        assert!(m.is_square() && n_plus <= n);
        let n_minus = n - n_plus;
        PartitionedMatrix {
            pp: m.view((0, 0), (n_plus, n_plus)).into_owned(),
            pm: m.view((0, n_plus), (n_plus, n_minus)).into_owned(),
            mp: m.view((n_plus, 0), (n_minus, n_plus)).into_owned(),
            mm: m.view((n_plus, n_plus), (n_minus, n_minus)).into_owned(),
        }
    }

    pub fn assemble(&self) -> Matrix {
        let n_plus = self.pp.nrows();
        let n_minus = self.mm.nrows();
        let n = n_plus + n_minus;
        let mut out = Matrix::zeros(n, n);
        out.view_mut((0, 0), (n_plus, n_plus)).copy_from(&self.pp);
        out.view_mut((0, n_plus), (n_plus, n_minus))
            .copy_from(&self.pm);
        out.view_mut((n_plus, 0), (n_minus, n_plus))
            .copy_from(&self.mp);
        out.view_mut((n_plus, n_plus), (n_minus, n_minus))
            .copy_from(&self.mm);
        out
    }
}

/// Checks generator and rate constraints, then returns the canonical model
/// (up phases first, original relative order preserved within each side).
pub fn validate_model(generator: Matrix, rates: Vec<f64>, labels: Vec<String>) -> Result<FluidModel> {
    let n = generator.nrows();
    if !generator.is_square() {
        return Err(Error::Dimension(format!(
            "generator must be square, got {}x{}",
            generator.nrows(),
            generator.ncols()
        )));
    }
    if rates.len() != n {
        return Err(Error::Dimension(format!(
            "{} rates for {} phases",
            rates.len(),
            n
        )));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {} phases",
            labels.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("empty model".into()));
    }
    if generator.iter().any(|x| !x.is_finite()) || rates.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonGenerator("non-finite entry".into()));
    }

    let tol = 1e-12 * inf_norm(&generator).max(1.0);
    let mut t = generator;
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            row_sum += t[(i, j)];
            if i != j {
                if t[(i, j)] < -tol {
                    return Err(Error::NonGenerator(format!(
                        "negative off-diagonal entry ({}, {}) = {}",
                        i,
                        j,
                        t[(i, j)]
                    )));
                }
                // Forgive writing noise below the tolerance.
                if t[(i, j)] < 0.0 {
                    t[(i, j)] = 0.0;
                }
            }
        }
        if row_sum.abs() > tol {
            return Err(Error::NonGenerator(format!(
                "row {} sums to {:.3e}",
                i, row_sum
            )));
        }
    }

    for (i, &c) in rates.iter().enumerate() {
        if c.abs() < 1e-12 {
            return Err(Error::ZeroRate {
                index: i,
                label: labels[i].clone(),
            });
        }
    }

    let ups: Vec<usize> = (0..n).filter(|&i| rates[i] > 0.0).collect();
    let downs: Vec<usize> = (0..n).filter(|&i| rates[i] < 0.0).collect();
    if ups.is_empty() {
        return Err(Error::EmptySide("no up phase (positive rate)".into()));
    }
    if downs.is_empty() {
        return Err(Error::EmptySide("no down phase (negative rate)".into()));
    }

    let perm: Vec<usize> = ups.iter().chain(downs.iter()).copied().collect();
    let canon_t = Matrix::from_fn(n, n, |i, j| t[(perm[i], perm[j])]);
    let canon_rates: Vec<f64> = perm.iter().map(|&i| rates[i]).collect();
    let canon_labels: Vec<String> = perm.iter().map(|&i| labels[i].clone()).collect();

    Ok(FluidModel {
        labels: canon_labels,
        generator: canon_t,
        rates: canon_rates,
        n_plus: ups.len(),
        n_minus: downs.len(),
        perm,
    })
}

/// `"p0"`, `"p1"`, … — convenience for programmatic construction.
pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

impl FluidModel {
    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    /// Generator in canonical order.
    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    /// Rates in canonical order (positive first).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Labels in canonical order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn up_labels(&self) -> &[String] {
        &self.labels[..self.n_plus]
    }

    pub fn down_labels(&self) -> &[String] {
        &self.labels[self.n_plus..]
    }

    /// Canonical-to-original index map.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Generator blocks along the up/down partition.
    pub fn t_blocks(&self) -> PartitionedMatrix {
        PartitionedMatrix::split(&self.generator, self.n_plus)
    }

    /// Up-phase rates as a vector (all positive).
    pub fn c_plus(&self) -> Vector {
        Vector::from_iterator(self.n_plus, self.rates[..self.n_plus].iter().copied())
    }

    /// Absolute down-phase rates as a vector (all positive).
    pub fn c_minus_abs(&self) -> Vector {
        Vector::from_iterator(
            self.n_minus,
            self.rates[self.n_plus..].iter().map(|c| c.abs()),
        )
    }

    pub fn max_abs_diag(&self) -> f64 {
        self.generator
            .diagonal()
            .iter()
            .fold(0.0f64, |m, &d| m.max(d.abs()))
    }

    pub fn is_unit_rate(&self) -> bool {
        self.rates.iter().all(|c| (c.abs() - 1.0).abs() <= 1e-12)
    }

    pub fn is_irreducible(&self) -> bool {
        numerics::is_irreducible(&self.generator)
    }

    /// Time-rescaled copy with every rate ±1: row i of T divided by |c_i|.
    /// The first-return probability matrix is unchanged by this rescaling.
    pub fn rescale_to_unit_rates(&self) -> FluidModel {
        let n = self.n();
        let t = Matrix::from_fn(n, n, |i, j| self.generator[(i, j)] / self.rates[i].abs());
        let rates: Vec<f64> = self.rates.iter().map(|c| c.signum()).collect();
        FluidModel {
            labels: self.labels.clone(),
            generator: t,
            rates,
            n_plus: self.n_plus,
            n_minus: self.n_minus,
            perm: self.perm.clone(),
        }
    }

    /// The level-reversed model: all rates negated, so old down phases become
    /// up phases. Its return matrix is the dual of this model's.
    pub fn level_reversed(&self) -> FluidModel {
        let flipped: Vec<f64> = self.rates.iter().map(|c| -c).collect();
        validate_model(self.generator.clone(), flipped, self.labels.to_vec())
            .expect("negating rates of a valid model keeps it valid")
    }

    /// Stationary mean drift π·c of the phase process (πT = 0, π𝟙 = 1).
    pub fn mean_drift(&self) -> Result<f64> {
        let (_, pi) = numerics::perron_left_pair(&self.generator)?;
        Ok(pi
            .iter()
            .zip(self.rates.iter())
            .map(|(p, c)| p * c)
            .sum())
    }
}

/// On-disk model representation: phase order as written by the user.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub phases: Vec<String>,
    pub rates: Vec<f64>,
    pub generator: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<FluidModel> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        file.validate()
    }

    pub fn load(path: &std::path::Path) -> Result<FluidModel> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelFile(format!("{}: {}", path.display(), e)))?;
        Self::parse(&text)
    }

    pub fn validate(self) -> Result<FluidModel> {
        let n = self.generator.len();
        for row in &self.generator {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "generator row of length {} in a {}-row matrix",
                    row.len(),
                    n
                )));
            }
        }
        let flat: Vec<f64> = self.generator.iter().flatten().copied().collect();
        let t = Matrix::from_row_slice(n, n, &flat);
        validate_model(t, self.rates, self.phases)
    }
}

impl From<&FluidModel> for ModelFile {
    /// Restores the caller's original phase order.
    fn from(m: &FluidModel) -> Self {
        let n = m.n();
        let mut phases = vec![String::new(); n];
        let mut rates = vec![0.0; n];
        let mut generator = vec![vec![0.0; n]; n];
        for i in 0..n {
            phases[m.perm[i]] = m.labels[i].clone();
            rates[m.perm[i]] = m.rates[i];
            for j in 0..n {
                generator[m.perm[i]][m.perm[j]] = m.generator[(i, j)];
            }
        }
        ModelFile {
            phases,
            rates,
            generator,
        }
    }
}
