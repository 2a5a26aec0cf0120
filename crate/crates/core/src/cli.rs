//! Batch front door: parses model files, dispatches solves, verification
//! batteries, QBD construction, series evaluation, and simulation, and emits
//! either labeled tables or machine-readable JSON.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::doubling::{self, ParamChoice, Variant};
use crate::error::{Error, Result};
use crate::model::{FluidModel, ModelFile};
use crate::numerics::{max_abs_diff, spectral_radius, Matrix};
use crate::oracles::{self, Representation};
use crate::qbd::{self, QbdKind};

#[derive(Parser)]
#[command(
    name = "fluidq",
    version,
    about = "Return probabilities of Markov-modulated fluid queues"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the return matrices by a doubling iteration.
    Solve {
        /// Model description file (JSON).
        file: PathBuf,
        /// Parameter selection rule: adda, sda, or sda-ss.
        #[arg(long, default_value = "adda", conflicts_with_all = ["alpha", "beta"])]
        variant: String,
        /// Explicit descending-side parameter (requires --beta).
        #[arg(long, requires = "beta")]
        alpha: Option<f64>,
        /// Explicit ascending-side parameter (requires --alpha).
        #[arg(long, requires = "alpha")]
        beta: Option<f64>,
        /// Stopping threshold on the product of iterate norms.
        #[arg(long, default_value_t = doubling::DEFAULT_EPSILON)]
        eps: f64,
        /// Iteration cap.
        #[arg(long, default_value_t = doubling::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Emit a JSON report instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Run the full invariant battery against independent oracles.
    Verify {
        /// Model description file (JSON).
        file: PathBuf,
        /// Ascending uniformization rate (default 2·max|T_ii| after rescaling).
        #[arg(long)]
        lambda: Option<f64>,
        /// Descending uniformization rate (default 2·max|T_ii| after rescaling).
        #[arg(long)]
        mu: Option<f64>,
        /// Emit a JSON report instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Build one discrete-level chain and solve for its G matrix both ways.
    Qbd {
        /// Model description file (JSON).
        file: PathBuf,
        /// Chain kind: A, B, C, Aprime, Bprime, Cprime, Delta, Theta, or MidLevelD.
        #[arg(long)]
        kind: String,
        /// Ascending uniformization rate (default 2·max|T_ii| after rescaling).
        #[arg(long)]
        lambda: Option<f64>,
        /// Descending uniformization rate (default 2·max|T_ii| after rescaling).
        #[arg(long)]
        mu: Option<f64>,
        /// Keep going when blocks have negative entries (sub-uniformized rates).
        #[arg(long)]
        allow_signed: bool,
        /// Emit a JSON report instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate one series representation of the return matrix.
    Series {
        /// Model description file (JSON).
        file: PathBuf,
        /// Representation: doublesum, 1, 2, or 3.
        #[arg(long)]
        rep: String,
        /// Ascending uniformization rate (default 2·max|T_ii| after rescaling).
        #[arg(long)]
        lambda: Option<f64>,
        /// Descending uniformization rate (default 2·max|T_ii| after rescaling).
        #[arg(long)]
        mu: Option<f64>,
        /// Truncation index.
        #[arg(long, default_value_t = oracles::DEFAULT_SERIES_TERMS)]
        terms: usize,
        /// Emit a JSON report instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Estimate the return matrix by Monte Carlo path simulation.
    Simulate {
        /// Model description file (JSON).
        file: PathBuf,
        /// Trials per ascending phase.
        #[arg(long)]
        trials: u64,
        /// Base seed; identical seeds reproduce results bit for bit.
        #[arg(long)]
        seed: u64,
        /// Level at which a path counts as non-returning.
        #[arg(long, default_value_t = oracles::DEFAULT_LEVEL_CAP)]
        level_cap: f64,
        /// Elapsed-time cap per path.
        #[arg(long, default_value_t = oracles::DEFAULT_TIME_CAP)]
        time_cap: f64,
        /// Emit a JSON report instead of tables.
        #[arg(long)]
        json: bool,
    },
}

/// Entry point shared by `main` and the CLI tests. Returns the process exit
/// code: 0 on success/all-pass, 1 on any failed check or unconverged solve,
/// 2 on input or usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Solve {
            file,
            variant,
            alpha,
            beta,
            eps,
            max_iter,
            json,
        } => cmd_solve(&file, &variant, alpha, beta, eps, max_iter, json),
        Command::Verify {
            file,
            lambda,
            mu,
            json,
        } => cmd_verify(&file, lambda, mu, json),
        Command::Qbd {
            file,
            kind,
            lambda,
            mu,
            allow_signed,
            json,
        } => cmd_qbd(&file, &kind, lambda, mu, allow_signed, json),
        Command::Series {
            file,
            rep,
            lambda,
            mu,
            terms,
            json,
        } => cmd_series(&file, &rep, lambda, mu, terms, json),
        Command::Simulate {
            file,
            trials,
            seed,
            level_cap,
            time_cap,
            json,
        } => cmd_simulate(&file, trials, seed, level_cap, time_cap, json),
    }
}

fn parse_variant(tag: &str) -> Result<Variant> {
    match tag {
        "adda" => Ok(Variant::Adda),
        "sda" => Ok(Variant::Sda),
        "sda-ss" => Ok(Variant::SdaSs),
        other => Err(Error::BadParams(format!(
            "unknown --variant '{other}' (expected adda, sda, or sda-ss)"
        ))),
    }
}

fn parse_kind(tag: &str) -> Result<QbdKind> {
    let normalized = tag.to_ascii_lowercase().replace('\'', "prime");
    match normalized.as_str() {
        "a" => Ok(QbdKind::A),
        "b" => Ok(QbdKind::B),
        "c" => Ok(QbdKind::C),
        "aprime" => Ok(QbdKind::Aprime),
        "bprime" => Ok(QbdKind::Bprime),
        "cprime" => Ok(QbdKind::Cprime),
        "delta" => Ok(QbdKind::Delta),
        "theta" => Ok(QbdKind::Theta),
        "d" | "mid" | "midleveld" => Ok(QbdKind::MidLevelD),
        other => Err(Error::BadParams(format!(
            "unknown --kind '{other}' (expected A, B, C, Aprime, Bprime, Cprime, Delta, Theta, or MidLevelD)"
        ))),
    }
}

fn parse_representation(tag: &str) -> Result<Representation> {
    match tag.to_ascii_lowercase().as_str() {
        "doublesum" => Ok(Representation::DoubleSum),
        "1" | "sum1" => Ok(Representation::Sum1),
        "2" | "sum2" => Ok(Representation::Sum2),
        "3" | "sum3" => Ok(Representation::Sum3),
        other => Err(Error::BadParams(format!(
            "unknown --rep '{other}' (expected doublesum, 1, 2, or 3)"
        ))),
    }
}

fn load_model(path: &std::path::Path) -> Result<FluidModel> {
    ModelFile::load(path)
}

/// Rates default to twice the largest diagonal magnitude of the unit-rate
/// generator, which satisfies every nonnegativity precondition downstream.
fn default_rate(model: &FluidModel) -> f64 {
    2.0 * model.max_abs_diag()
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|row| row.iter().copied().collect())
        .collect()
}

fn print_labeled(title: &str, m: &Matrix, rows: &[String], cols: &[String]) {
    println!("{title}");
    print!("  {:>10}", "");
    for c in cols {
        print!("  {c:>10}");
    }
    println!();
    for (i, r) in rows.iter().enumerate() {
        print!("  {r:>10}");
        for j in 0..m.ncols() {
            print!("  {:>10.6}", m[(i, j)]);
        }
        println!();
    }
}

// --- solve -----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct JsonSolveReport {
    pub psi: Vec<Vec<f64>>,
    pub psi_hat: Vec<Vec<f64>>,
    pub residuals: JsonResiduals,
    pub iterations: usize,
    pub classification: String,
    pub history: Vec<JsonHistoryEntry>,
    pub params: JsonParams,
}

#[derive(Serialize, Deserialize)]
pub struct JsonResiduals {
    pub riccati: f64,
    pub dual: f64,
    pub dare: f64,
}

#[derive(Serialize, Deserialize)]
pub struct JsonHistoryEntry {
    pub k: usize,
    #[serde(rename = "normE")]
    pub norm_e: f64,
    #[serde(rename = "normF")]
    pub norm_f: f64,
}

#[derive(Serialize, Deserialize)]
pub struct JsonParams {
    pub alpha: f64,
    pub beta: f64,
    pub variant: String,
}

fn cmd_solve(
    file: &std::path::Path,
    variant: &str,
    alpha: Option<f64>,
    beta: Option<f64>,
    eps: f64,
    max_iter: usize,
    json: bool,
) -> Result<i32> {
    let model = load_model(file)?;
    let choice = match (alpha, beta) {
        (Some(alpha), Some(beta)) => ParamChoice::Custom { alpha, beta },
        _ => ParamChoice::Variant(parse_variant(variant)?),
    };
    let report = doubling::solve(&model, choice, eps, max_iter)?;

    if json {
        let out = JsonSolveReport {
            psi: matrix_rows(&report.psi),
            psi_hat: matrix_rows(&report.psi_hat),
            residuals: JsonResiduals {
                riccati: report.riccati_residual,
                dual: report.dual_residual,
                dare: report.dare_residual,
            },
            iterations: report.iterations,
            classification: report.classification.tag().to_string(),
            history: report
                .history
                .iter()
                .map(|h| JsonHistoryEntry {
                    k: h.k,
                    norm_e: h.norm_e,
                    norm_f: h.norm_f,
                })
                .collect(),
            params: JsonParams {
                alpha: report.params.alpha,
                beta: report.params.beta,
                variant: report.params.variant.tag().to_string(),
            },
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable report"));
    } else {
        println!(
            "model: {} ({} ascending, {} descending)",
            file.display(),
            model.n_plus(),
            model.n_minus()
        );
        println!(
            "variant: {} (alpha = {:.6}, beta = {:.6})",
            report.params.variant, report.params.alpha, report.params.beta
        );
        print_labeled(
            "psi (start ascending, return descending):",
            &report.psi,
            model.up_labels(),
            model.down_labels(),
        );
        print_labeled(
            "psi_hat (level-reversed dual):",
            &report.psi_hat,
            model.down_labels(),
            model.up_labels(),
        );
        println!("iterations: {}", report.iterations);
        println!("classification: {}", report.classification);
        println!(
            "residuals: riccati {:.3e}, dual {:.3e}, dare {:.3e}",
            report.riccati_residual, report.dual_residual, report.dare_residual
        );
        if !report.converged {
            println!(
                "warning: stopping threshold not reached within {} iterations",
                report.iterations
            );
        }
        if report.null_recurrent_suspected {
            println!("note: convergence pattern suggests a null-recurrent boundary model");
        }
    }
    Ok(if report.converged { 0 } else { 1 })
}

// --- verify ----------------------------------------------------------------

#[derive(Serialize)]
struct JsonCheck {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct JsonVerifyReport {
    checks: Vec<JsonCheck>,
    all_pass: bool,
}

struct CheckAccumulator {
    checks: Vec<JsonCheck>,
}

impl CheckAccumulator {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn add(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(JsonCheck {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    fn add_result(&mut self, name: &str, result: Result<(bool, String)>) {
        match result {
            Ok((pass, detail)) => self.add(name, pass, detail),
            Err(err) => self.add(name, false, format!("error: {err}")),
        }
    }

    fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn cmd_verify(
    file: &std::path::Path,
    lambda: Option<f64>,
    mu: Option<f64>,
    json: bool,
) -> Result<i32> {
    let model = load_model(file)?.rescale_to_unit_rates();
    let lambda = lambda.unwrap_or_else(|| default_rate(&model));
    let mu = mu.unwrap_or_else(|| default_rate(&model));
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::BadParams(
            "uniformization rates must be positive".into(),
        ));
    }

    let mut acc = CheckAccumulator::new();

    // The doubling solve and the structurally independent fixed point anchor
    // every later check.
    let report = doubling::solve(
        &model,
        ParamChoice::Variant(Variant::Adda),
        doubling::DEFAULT_EPSILON,
        doubling::DEFAULT_MAX_ITER,
    )?;
    let oracle = oracles::riccati_fixed_point(&model, 1e-13, oracles::DEFAULT_FP_MAX_ITER)?;

    acc.add_result("doubling-stochasticity", stochasticity_check(&model));

    let psi_diff = max_abs_diff(&report.psi, &oracle.psi);
    let pass = report.converged
        && oracle.converged
        && psi_diff <= 1e-10
        && report.riccati_residual <= 1e-12
        && report.dual_residual <= 1e-12;
    acc.add(
        "oracle-agreement",
        pass,
        format!(
            "psi diff {:.3e} (tol 1e-10); riccati {:.3e}, dual {:.3e} (tol 1e-12)",
            psi_diff, report.riccati_residual, report.dual_residual
        ),
    );

    acc.add_result(
        "g-equivalence",
        qbd::g_equivalence_check(&model, &oracle.psi, lambda, mu).map(|eq| {
            let worst = eq.max_deviation();
            (worst <= 1e-9, format!("worst of {} comparisons {:.3e} (tol 1e-9)", eq.checks.len(), worst))
        }),
    );

    acc.add_result(
        "perron-identities",
        perron_check(&model, &oracle.psi, lambda, mu),
    );

    acc.add(
        "dare-residual",
        report.dare_residual <= 1e-12,
        format!("{:.3e} (tol 1e-12)", report.dare_residual),
    );

    let all_pass = acc.all_pass();
    if json {
        let out = JsonVerifyReport {
            checks: acc.checks,
            all_pass,
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable report"));
    } else {
        println!(
            "verify {} (lambda = {lambda}, mu = {mu})",
            file.display()
        );
        for check in &acc.checks {
            let verdict = if check.pass { "pass" } else { "FAIL" };
            println!("  {:<24} {verdict}  ({})", check.name, check.detail);
        }
        println!("{}", if all_pass { "all checks passed" } else { "some checks FAILED" });
    }
    Ok(if all_pass { 0 } else { 1 })
}

/// Re-runs the doubling iteration step by step and measures how far the
/// assembled iterate matrix drifts from having unit row sums.
fn stochasticity_check(model: &FluidModel) -> Result<(bool, String)> {
    let (alpha_opt, beta_opt) = doubling::optimal_parameters(model)?;
    let params = doubling::variant_parameters(Variant::Adda, alpha_opt, beta_opt);
    let mut state = doubling::initialize(model, &params)?;
    let mut worst = state.stochasticity_defect();
    let mut steps = 0usize;
    while state.norm_e() * state.norm_f() > doubling::DEFAULT_EPSILON
        && steps < doubling::DEFAULT_MAX_ITER
    {
        state = doubling::step(state)?;
        worst = worst.max(state.stochasticity_defect());
        steps += 1;
    }
    Ok((worst <= 1e-9, format!("worst row-sum defect {worst:.3e} over {steps} steps (tol 1e-9)")))
}

fn perron_check(
    model: &FluidModel,
    psi: &Matrix,
    lambda: f64,
    mu: f64,
) -> Result<(bool, String)> {
    let derived = analysis::derived_matrices(model, psi, lambda, mu)?;
    let checks = analysis::perron_identities(&derived)?;
    let identity_dev = checks.max_deviation();
    let route_dev = derived.r1_route_deviation().unwrap_or(f64::NAN);

    // The C′ chain's rate matrix must share its spectral radius with R1.
    let built = qbd::build_qbd(model, QbdKind::Cprime, lambda, mu, None, false)?;
    let pair = qbd::solve_qbd(&built, qbd::GMethod::CyclicReduction, 1e-14, 64)?;
    let rho_r = spectral_radius(&pair.r)?;
    let rho_r1 = spectral_radius(&derived.r1)?;
    let radius_dev = (rho_r - rho_r1).abs();

    let pass = identity_dev <= 1e-9
        && route_dev.is_finite()
        && route_dev <= 1e-10
        && radius_dev <= 1e-9;
    Ok((
        pass,
        format!(
            "identity dev {identity_dev:.3e} (tol 1e-9); R1 routes {route_dev:.3e} (tol 1e-10); \
             rate-matrix radius dev {radius_dev:.3e} (tol 1e-9)"
        ),
    ))
}

// --- qbd -------------------------------------------------------------------

#[derive(Serialize)]
struct JsonQbdReport {
    kind: String,
    lambda: f64,
    mu: f64,
    down: Vec<Vec<f64>>,
    same: Vec<Vec<f64>>,
    up: Vec<Vec<f64>>,
    g_fixed_point: Option<Vec<Vec<f64>>>,
    g_cyclic_reduction: Option<Vec<Vec<f64>>>,
    method_difference: Option<f64>,
}

fn cmd_qbd(
    file: &std::path::Path,
    kind: &str,
    lambda: Option<f64>,
    mu: Option<f64>,
    allow_signed: bool,
    json: bool,
) -> Result<i32> {
    let kind = parse_kind(kind)?;
    let model = load_model(file)?.rescale_to_unit_rates();
    let lambda = lambda.unwrap_or_else(|| default_rate(&model));
    let mu = mu.unwrap_or_else(|| default_rate(&model));

    // Kinds that censor against the return record need a return matrix; the
    // fixed-point oracle supplies one without involving the doubling solver.
    let psi = if kind.needs_psi() {
        Some(oracles::riccati_fixed_point(&model, 1e-13, oracles::DEFAULT_FP_MAX_ITER)?.psi)
    } else {
        None
    };
    let built = qbd::build_qbd(&model, kind, lambda, mu, psi.as_ref(), allow_signed)?;

    let fp = qbd::solve_qbd(
        &built,
        qbd::GMethod::FixedPoint,
        qbd::DEFAULT_G_TOL,
        qbd::DEFAULT_G_MAX_ITER,
    );
    let cr = qbd::solve_qbd(
        &built,
        qbd::GMethod::CyclicReduction,
        1e-14,
        qbd::DEFAULT_CR_MAX_ITER,
    );
    let difference = match (&fp, &cr) {
        (Ok(a), Ok(b)) => Some(max_abs_diff(&a.g, &b.g)),
        _ => None,
    };

    let labels = model.labels();
    if json {
        let out = JsonQbdReport {
            kind: kind.tag().to_string(),
            lambda,
            mu,
            down: matrix_rows(&built.down),
            same: matrix_rows(&built.same),
            up: matrix_rows(&built.up),
            g_fixed_point: fp.as_ref().ok().map(|p| matrix_rows(&p.g)),
            g_cyclic_reduction: cr.as_ref().ok().map(|p| matrix_rows(&p.g)),
            method_difference: difference,
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable report"));
    } else {
        println!(
            "{} chain at lambda = {lambda}, mu = {mu} ({} phases)",
            kind,
            built.n()
        );
        print_labeled("down block:", &built.down, labels, labels);
        print_labeled("same-level block:", &built.same, labels, labels);
        print_labeled("up block:", &built.up, labels, labels);
        match &fp {
            Ok(pair) => print_labeled("G (fixed point):", &pair.g, labels, labels),
            Err(err) => println!("G (fixed point): failed: {err}"),
        }
        match &cr {
            Ok(pair) => {
                print_labeled("G (cyclic reduction):", &pair.g, labels, labels);
                print_labeled("R (expected upward visits):", &pair.r, labels, labels);
            }
            Err(err) => println!("G (cyclic reduction): failed: {err}"),
        }
        if let Some(diff) = difference {
            println!("method difference: {diff:.3e}");
        }
    }
    Ok(if fp.is_ok() && cr.is_ok() { 0 } else { 1 })
}

// --- series ----------------------------------------------------------------

#[derive(Serialize)]
struct JsonSeriesReport {
    representation: String,
    lambda: f64,
    mu: f64,
    terms_used: usize,
    last_increment_norm: f64,
    value: Vec<Vec<f64>>,
    reference_gap: f64,
}

fn cmd_series(
    file: &std::path::Path,
    rep: &str,
    lambda: Option<f64>,
    mu: Option<f64>,
    terms: usize,
    json: bool,
) -> Result<i32> {
    let representation = parse_representation(rep)?;
    let model = load_model(file)?.rescale_to_unit_rates();
    let lambda = lambda.unwrap_or_else(|| default_rate(&model));
    let mu = mu.unwrap_or_else(|| default_rate(&model));

    let oracle = oracles::riccati_fixed_point(&model, 1e-13, oracles::DEFAULT_FP_MAX_ITER)?;
    let estimate = oracles::series_psi(&model, &oracle.psi, lambda, mu, representation, terms)?;
    let gap = max_abs_diff(&estimate.value, &oracle.psi);

    if json {
        let out = JsonSeriesReport {
            representation: representation.tag().to_string(),
            lambda,
            mu,
            terms_used: estimate.terms_used,
            last_increment_norm: estimate.last_increment_norm,
            value: matrix_rows(&estimate.value),
            reference_gap: gap,
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable report"));
    } else {
        println!(
            "{} series at lambda = {lambda}, mu = {mu}, truncation {terms}",
            representation
        );
        print_labeled(
            "partial sum:",
            &estimate.value,
            model.up_labels(),
            model.down_labels(),
        );
        println!("terms used: {}", estimate.terms_used);
        println!("last increment norm: {:.3e}", estimate.last_increment_norm);
        println!("gap to fixed-point reference: {gap:.3e}");
    }
    Ok(0)
}

// --- simulate --------------------------------------------------------------

#[derive(Serialize)]
struct JsonSimulateReport {
    trials: u64,
    seed: u64,
    level_cap: f64,
    time_cap: f64,
    capped_paths: u64,
    mean: Vec<Vec<f64>>,
    halfwidth: Vec<Vec<f64>>,
}

fn cmd_simulate(
    file: &std::path::Path,
    trials: u64,
    seed: u64,
    level_cap: f64,
    time_cap: f64,
    json: bool,
) -> Result<i32> {
    let model = load_model(file)?;
    let estimate = oracles::simulate_all_phases(&model, trials, level_cap, time_cap, seed)?;

    if json {
        let out = JsonSimulateReport {
            trials: estimate.trials,
            seed: estimate.seed,
            level_cap,
            time_cap,
            capped_paths: estimate.capped_paths,
            mean: matrix_rows(&estimate.mean),
            halfwidth: matrix_rows(&estimate.halfwidth),
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable report"));
    } else {
        println!(
            "simulated {} trials per ascending phase (seed {seed}, caps {level_cap}/{time_cap})",
            estimate.trials
        );
        print_labeled(
            "estimated return probabilities:",
            &estimate.mean,
            model.up_labels(),
            model.down_labels(),
        );
        print_labeled(
            "95% halfwidths:",
            &estimate.halfwidth,
            model.up_labels(),
            model.down_labels(),
        );
        println!("capped (non-returning) paths: {}", estimate.capped_paths);
    }
    Ok(0)
}
