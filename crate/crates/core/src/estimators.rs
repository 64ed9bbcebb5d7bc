//! Constrained estimators over the measurement data: the entropy-objective
//! Dantzig estimator, the nuclear-norm Dantzig baseline, and a projected
//! least-squares baseline.
//!
//! The feasible set is
//! `Lambda(eps) = { S : || (1/n) sum_j (Y_j - <S, X_j>) X_j ||_inf <= eps }`,
//! intersected with the density matrices for the entropy objective. Both
//! Dantzig estimators are solved by an exact-penalty homotopy on
//! `F_mu(S) = objective(S) + mu * max(g(S) - eps, 0)`; the entropy variant
//! walks the spectrahedron with matrix exponentiated-gradient steps so
//! iterates stay unit-trace PSD throughout, the nuclear variant takes plain
//! Euclidean subgradient steps over Hermitian matrices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, symmetrize, CMatrix, CVector};
use crate::measure::MeasurementDataset;
use crate::pauli::{accumulate_sparse, to_sparse, PauliLabel, SparsePauli};
use crate::states::{
    matrix_from_rows, matrix_to_rows, mix_identity, project_spectrahedron, DensityMatrix,
    LAMBDA_FLOOR,
};

/// Epsilon used for noiseless data when the caller asks for "auto"
/// (exact zero leaves the relative stopping rule without slack).
pub const NOISELESS_EPSILON: f64 = 1e-10;

/// Per-distinct-label view of the dataset.
struct LabelTerm {
    sparse: SparsePauli,
    is_identity: bool,
    /// n_k / n.
    weight: f64,
    /// Mean response over the records carrying this label.
    y_mean: f64,
}

/// Affine residual map `S -> (1/n) sum_j (Y_j - <S, X_j>) X_j`, aggregated
/// over distinct labels so one evaluation costs O(d m) + O(m^2).
pub struct ResidualOperator {
    m: usize,
    qubits: usize,
    terms: Vec<LabelTerm>,
}

impl ResidualOperator {
    pub fn new(dataset: &MeasurementDataset) -> Result<ResidualOperator> {
        if dataset.n() == 0 {
            return Err(Error::InsufficientData("empty dataset".into()));
        }
        let n = dataset.n() as f64;
        let terms = dataset
            .aggregates()
            .into_iter()
            .map(|a| LabelTerm {
                sparse: to_sparse(&a.label),
                is_identity: a.label.is_identity(),
                weight: a.count as f64 / n,
                y_mean: a.y_mean,
            })
            .collect();
        Ok(ResidualOperator {
            m: dataset.m(),
            qubits: dataset.m().trailing_zeros() as usize,
            terms,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of distinct labels.
    pub fn distinct_labels(&self) -> usize {
        self.terms.len()
    }

    pub fn residual(&self, s: &CMatrix) -> Result<CMatrix> {
        if s.nrows() != self.m || s.ncols() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: s.nrows(),
            });
        }
        let mut coeffs = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let c = term.weight * (term.y_mean - term.sparse.inner(s)?);
            coeffs.push((&term.sparse, c));
        }
        accumulate_sparse(self.m, &coeffs)
    }

    /// Operator norm of the residual together with the extremal eigenpair.
    pub fn gap(&self, s: &CMatrix) -> Result<GapInfo> {
        let resid = self.residual(s)?;
        gap_of_residual(&resid)
    }

    /// Subgradient of `g(S) = ||R(S)||_inf` at the extremal eigenpair
    /// `(sign, u)`: `-sign * sum_k w_k <u u^H, E_k> E_k`.
    pub fn penalty_gradient(&self, u: &CVector, sign: f64) -> Result<CMatrix> {
        let mut coeffs = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let c = -sign * term.weight * term.sparse.quad_form(u);
            coeffs.push((&term.sparse, c));
        }
        accumulate_sparse(self.m, &coeffs)
    }

    /// Gradient Lipschitz constant of the quadratic data fit: the design
    /// second-moment operator is diagonal in the Pauli basis with entries
    /// n_k/n, so L = 2 max_k n_k/n.
    pub fn lipschitz(&self) -> f64 {
        2.0 * self
            .terms
            .iter()
            .map(|t| t.weight)
            .fold(0.0_f64, f64::max)
    }

    /// Unconstrained least-squares solution over all Hermitian matrices:
    /// `sum_k ybar_k E_k` on the sampled labels. The identity coefficient
    /// is pinned to its exact value `1/sqrt(m)`, which every unit-trace
    /// state shares.
    pub fn linear_inversion(&self) -> Result<CMatrix> {
        let sqrt_m = (self.m as f64).sqrt();
        let identity_label = PauliLabel::from_index(self.qubits, 1)?;
        let identity = to_sparse(&identity_label);
        let mut coeffs: Vec<(&SparsePauli, f64)> = Vec::with_capacity(self.terms.len() + 1);
        let mut saw_identity = false;
        for term in &self.terms {
            if term.is_identity {
                saw_identity = true;
                coeffs.push((&term.sparse, 1.0 / sqrt_m));
            } else {
                coeffs.push((&term.sparse, term.y_mean));
            }
        }
        if !saw_identity {
            coeffs.push((&identity, 1.0 / sqrt_m));
        }
        accumulate_sparse(self.m, &coeffs)
    }

    /// Reduced quadratic objective `sum_k w_k (ybar_k - <S, E_k>)^2`
    /// (the within-label variance is a constant offset).
    fn reduced_quadratic(&self, s: &CMatrix) -> Result<f64> {
        let mut acc = 0.0;
        for term in &self.terms {
            let d = term.y_mean - term.sparse.inner(s)?;
            acc += term.weight * d * d;
        }
        Ok(acc)
    }
}

/// Extremal information of a residual matrix.
pub struct GapInfo {
    /// `||R||_inf`.
    pub gap: f64,
    /// Sign of the extremal eigenvalue.
    pub sign: f64,
    /// Extremal eigenvector.
    pub eigenvector: CVector,
}

fn gap_of_residual(resid: &CMatrix) -> Result<GapInfo> {
    let eig = hermitian_eigen(resid)?;
    let idx = eig.extremal_index();
    let lambda = eig.values[idx];
    Ok(GapInfo {
        gap: lambda.abs(),
        sign: if lambda >= 0.0 { 1.0 } else { -1.0 },
        eigenvector: eig.vectors.column(idx).into_owned(),
    })
}

/// `(1/n) sum_j (Y_j - <S, X_j>) X_j` for a dataset and Hermitian `S`.
pub fn residual(dataset: &MeasurementDataset, s: &CMatrix) -> Result<CMatrix> {
    ResidualOperator::new(dataset)?.residual(s)
}

/// `||R(S)||_inf` with the extremal eigenpair, via the dense eigensolver.
pub fn constraint_gap(dataset: &MeasurementDataset, s: &CMatrix) -> Result<GapInfo> {
    ResidualOperator::new(dataset)?.gap(s)
}

/// Noise-level epsilon `(c1/m) sqrt((t + log 2m) / (nK))`.
pub fn default_epsilon(m: usize, n: usize, shots: u64, c1: f64, t: f64) -> f64 {
    c1 / m as f64 * ((t + (2.0 * m as f64).ln()) / (n as f64 * shots as f64)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonChoice {
    /// `default_epsilon` with the config's c1 and t (t defaults to
    /// log(2m)); noiseless data falls back to `NOISELESS_EPSILON`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Entropy,
    Nuclear,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Base step size; actual steps are eta0 / (max(1, |G|_F) sqrt(t)).
    pub eta0: f64,
    pub mu0: f64,
    pub mu_growth: f64,
    pub obj_tol: f64,
    pub lambda_floor: f64,
    /// Inner iterations without merit improvement before a stage stalls.
    pub patience: usize,
}

impl Default for SolverOptions {
    fn default() -> SolverOptions {
        SolverOptions {
            max_outer: 20,
            max_inner: 400,
            eta0: 2.0,
            mu0: 1.0,
            mu_growth: 4.0,
            obj_tol: 1e-7,
            lambda_floor: LAMBDA_FLOOR,
            patience: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorConfig {
    pub epsilon: EpsilonChoice,
    pub c1: f64,
    /// Tail parameter; `None` resolves to log(2m).
    pub t: Option<f64>,
    /// Relative feasibility slack: converged means g <= eps (1 + feas_tol).
    pub feas_tol: f64,
    pub solver: SolverOptions,
    pub objective: Objective,
}

impl Default for EstimatorConfig {
    fn default() -> EstimatorConfig {
        EstimatorConfig {
            epsilon: EpsilonChoice::Auto,
            c1: 4.0,
            t: None,
            feas_tol: 0.02,
            solver: SolverOptions::default(),
            objective: Objective::Entropy,
        }
    }
}

impl EstimatorConfig {
    pub fn resolve_epsilon(&self, m: usize, n: usize, shots: Option<u64>) -> Result<f64> {
        match self.epsilon {
            EpsilonChoice::Fixed(e) => {
                if !(e >= 0.0) {
                    Err(Error::InvalidArgument(format!("epsilon {e} must be >= 0")))
                } else {
                    Ok(e)
                }
            }
            EpsilonChoice::Auto => match shots {
                Some(k) => {
                    let t = self.t.unwrap_or_else(|| (2.0 * m as f64).ln());
                    Ok(default_epsilon(m, n, k, self.c1, t))
                }
                None => Ok(NOISELESS_EPSILON),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let s = &self.solver;
        let positive = [
            ("feas_tol", self.feas_tol),
            ("eta0", s.eta0),
            ("mu0", s.mu0),
            ("obj_tol", s.obj_tol),
            ("lambda_floor", s.lambda_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0")));
            }
        }
        if !(s.mu_growth > 1.0) {
            return Err(Error::InvalidArgument("mu_growth must be > 1".into()));
        }
        if s.max_outer == 0 || s.max_inner == 0 || s.patience == 0 {
            return Err(Error::InvalidArgument(
                "iteration budgets must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Estimate payload: the entropy and least-squares estimators return
/// density matrices, the nuclear baseline a raw Hermitian matrix.
#[derive(Clone, Debug)]
pub enum Estimate {
    Density(DensityMatrix),
    Hermitian(CMatrix),
}

impl Estimate {
    pub fn matrix(&self) -> &CMatrix {
        match self {
            Estimate::Density(d) => d.data(),
            Estimate::Hermitian(h) => h,
        }
    }

    pub fn as_density(&self) -> Option<&DensityMatrix> {
        match self {
            Estimate::Density(d) => Some(d),
            Estimate::Hermitian(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StageTrace {
    pub mu: f64,
    pub inner_iterations: usize,
    pub best_merit: f64,
    pub best_gap: f64,
}

#[derive(Clone, Debug)]
pub struct EstimatorSolution {
    pub estimate: Estimate,
    pub epsilon: f64,
    /// `g(estimate) - epsilon`, re-verified on the returned matrix.
    pub feasibility_gap: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stages: Vec<StageTrace>,
    /// Per-iteration objective (least squares only).
    pub objective_trace: Vec<f64>,
}

/// `tr(S log S)` over the floored spectrum.
fn entropy_objective(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&l| if l <= 0.0 { 0.0 } else { l * l.max(LAMBDA_FLOOR).ln() })
        .sum()
}

/// Normalized matrix exponential `exp(w) / tr exp(w)` together with the
/// recentering constant c such that `log of the result = w - c I`, and the
/// resulting spectrum.
pub(crate) fn exp_normalize(w: &CMatrix) -> Result<(CMatrix, f64, Vec<f64>)> {
    let eig = hermitian_eigen(w)?;
    let lmax = eig.values[0];
    let z: f64 = eig.values.iter().map(|l| (l - lmax).exp()).sum();
    let s = eig.reassemble(|l| (l - lmax).exp() / z);
    let spectrum: Vec<f64> = eig.values.iter().map(|l| (l - lmax).exp() / z).collect();
    Ok((symmetrize(&s), lmax + z.ln(), spectrum))
}

struct Champions {
    /// Lowest objective among iterates with gap <= threshold.
    feasible: Option<(f64, f64, CMatrix)>, // (objective, gap, state)
    /// Smallest gap seen anywhere.
    best_gap: (f64, f64, CMatrix), // (gap, objective, state)
}

impl Champions {
    fn new(objective: f64, gap: f64, state: CMatrix, threshold: f64) -> Champions {
        let feasible = if gap <= threshold {
            Some((objective, gap, state.clone()))
        } else {
            None
        };
        Champions {
            feasible,
            best_gap: (gap, objective, state),
        }
    }

    fn update(&mut self, objective: f64, gap: f64, state: &CMatrix, threshold: f64) {
        if gap <= threshold {
            let better = match &self.feasible {
                Some((best_obj, _, _)) => objective < *best_obj,
                None => true,
            };
            if better {
                self.feasible = Some((objective, gap, state.clone()));
            }
        }
        if gap < self.best_gap.0 {
            self.best_gap = (gap, objective, state.clone());
        }
    }
}

/// Entropy-objective Dantzig estimator: minimizes `tr(S log S)` over the
/// density matrices in `Lambda(eps)`.
///
/// Initialization is the spectrahedron projection of the linear inversion,
/// nudged off the boundary so the mirror map starts with a finite
/// logarithm. A budget exhausted while infeasible returns the closest
/// iterate with `converged = false`, never an error.
pub fn dantzig_entropy(
    dataset: &MeasurementDataset,
    config: &EstimatorConfig,
) -> Result<EstimatorSolution> {
    config.validate()?;
    let op = ResidualOperator::new(dataset)?;
    let eps = config.resolve_epsilon(dataset.m(), dataset.n(), dataset.meta().shots)?;
    let threshold = eps * (1.0 + config.feas_tol);
    let opts = &config.solver;
    let m = op.m();

    let start = mix_identity(&project_spectrahedron(&op.linear_inversion()?)?, 1e-9)?;
    let eig0 = hermitian_eigen(start.data())?;
    let mut w = eig0.reassemble(|l| l.max(opts.lambda_floor).ln());

    let mut champions: Option<Champions> = None;
    let mut stages = Vec::new();
    let mut mu = opts.mu0;
    let mut iterations = 0usize;
    let mut last_stage_stalled = false;

    'outer: for _stage in 0..opts.max_outer {
        let mut stage_best_merit = f64::INFINITY;
        let mut stage_best_gap = f64::INFINITY;
        let mut since_improvement = 0usize;
        let mut stage_iters = 0usize;
        let mut stalled = false;

        for t in 1..=opts.max_inner {
            let (s, center, spectrum) = exp_normalize(&w)?;
            let objective = entropy_objective(&spectrum);
            let info = op.gap(&s)?;
            iterations += 1;
            stage_iters += 1;

            match &mut champions {
                Some(c) => c.update(objective, info.gap, &s, threshold),
                None => champions = Some(Champions::new(objective, info.gap, s.clone(), threshold)),
            }
            if info.gap < stage_best_gap {
                stage_best_gap = info.gap;
            }

            let violation = (info.gap - eps).max(0.0);
            let merit = objective + mu * violation;
            let improved = !stage_best_merit.is_finite()
                || merit < stage_best_merit - opts.obj_tol * (1.0 + stage_best_merit.abs());
            if improved {
                stage_best_merit = merit;
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= opts.patience {
                    stalled = true;
                }
            }

            // Gradient of F_mu in the log-domain; multiples of the identity
            // cancel under trace normalization and are dropped.
            let w_centered = &w - CMatrix::identity(m, m).scale(center);
            let mut grad = w_centered.clone();
            if violation > 0.0 {
                grad += op.penalty_gradient(&info.eigenvector, info.sign)?.scale(mu);
            }
            let gnorm = grad.norm();
            let eta = opts.eta0 / (gnorm.max(1.0) * (t as f64).sqrt());
            w = w_centered - grad.scale(eta);

            if stalled {
                break;
            }
        }

        stages.push(StageTrace {
            mu,
            inner_iterations: stage_iters,
            best_merit: stage_best_merit,
            best_gap: stage_best_gap,
        });
        last_stage_stalled = stalled;

        let feasible_found = champions
            .as_ref()
            .map(|c| c.feasible.is_some())
            .unwrap_or(false);
        if feasible_found {
            if stalled {
                break 'outer;
            }
            // keep refining at the same penalty level
        } else {
            mu *= opts.mu_growth;
            // restart the log-domain iterate at the most feasible point
            let best = &champions.as_ref().expect("at least one iterate").best_gap.2;
            let eig = hermitian_eigen(best)?;
            w = eig.reassemble(|l| l.max(opts.lambda_floor).ln());
        }
    }

    let champions = champions.expect("at least one iterate");
    let (state, converged) = match &champions.feasible {
        Some((_, _, s)) => (s.clone(), last_stage_stalled),
        None => (champions.best_gap.2.clone(), false),
    };

    // post-hoc re-verification on the returned matrix
    let final_info = op.gap(&state)?;
    let final_eig = hermitian_eigen(&state)?;
    let objective_value = entropy_objective(&final_eig.values);
    debug_assert!(!converged || final_info.gap <= threshold + 1e-12);

    Ok(EstimatorSolution {
        estimate: Estimate::Density(DensityMatrix::new(state)?),
        epsilon: eps,
        feasibility_gap: final_info.gap - eps,
        objective_value,
        iterations,
        converged,
        stages,
        objective_trace: Vec::new(),
    })
}

/// Standard nuclear-norm Dantzig estimator over Hermitian matrices (no
/// trace or PSD constraint), warm-started at the entropy solution when one
/// is supplied.
pub fn dantzig_nuclear(
    dataset: &MeasurementDataset,
    config: &EstimatorConfig,
    warm_start: Option<&CMatrix>,
) -> Result<EstimatorSolution> {
    config.validate()?;
    let op = ResidualOperator::new(dataset)?;
    let eps = config.resolve_epsilon(dataset.m(), dataset.n(), dataset.meta().shots)?;
    let threshold = eps * (1.0 + config.feas_tol);
    let opts = &config.solver;
    let m = op.m();
    const HUBER_WIDTH: f64 = 1e-8;

    let mut s = match warm_start {
        Some(w) => {
            if w.nrows() != m || w.ncols() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: w.nrows(),
                });
            }
            symmetrize(w)
        }
        None => CMatrix::zeros(m, m),
    };

    let mut champions: Option<Champions> = None;
    let mut stages = Vec::new();
    let mut mu = opts.mu0;
    let mut iterations = 0usize;
    let mut last_stage_stalled = false;

    'outer: for _stage in 0..opts.max_outer {
        let mut stage_best_merit = f64::INFINITY;
        let mut stage_best_gap = f64::INFINITY;
        let mut since_improvement = 0usize;
        let mut stage_iters = 0usize;
        let mut stalled = false;

        for t in 1..=opts.max_inner {
            let eig = hermitian_eigen(&s)?;
            let objective: f64 = eig.values.iter().map(|l| l.abs()).sum();
            let info = op.gap(&s)?;
            iterations += 1;
            stage_iters += 1;

            match &mut champions {
                Some(c) => c.update(objective, info.gap, &s, threshold),
                None => champions = Some(Champions::new(objective, info.gap, s.clone(), threshold)),
            }
            if info.gap < stage_best_gap {
                stage_best_gap = info.gap;
            }

            let violation = (info.gap - eps).max(0.0);
            let merit = objective + mu * violation;
            let improved = !stage_best_merit.is_finite()
                || merit < stage_best_merit - opts.obj_tol * (1.0 + stage_best_merit.abs());
            if improved {
                stage_best_merit = merit;
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= opts.patience {
                    stalled = true;
                }
            }

            // Huber-smoothed sign spectrum plus the penalty subgradient.
            let mut grad = eig.reassemble(|l| {
                if l.abs() <= HUBER_WIDTH {
                    l / HUBER_WIDTH
                } else {
                    l.signum()
                }
            });
            if violation > 0.0 {
                grad += op.penalty_gradient(&info.eigenvector, info.sign)?.scale(mu);
            }
            let gnorm = grad.norm();
            let eta = opts.eta0 / (gnorm.max(1.0) * (t as f64).sqrt());
            s = symmetrize(&(&s - grad.scale(eta)));

            if stalled {
                break;
            }
        }

        stages.push(StageTrace {
            mu,
            inner_iterations: stage_iters,
            best_merit: stage_best_merit,
            best_gap: stage_best_gap,
        });
        last_stage_stalled = stalled;

        let feasible_found = champions
            .as_ref()
            .map(|c| c.feasible.is_some())
            .unwrap_or(false);
        if feasible_found {
            if stalled {
                break 'outer;
            }
        } else {
            mu *= opts.mu_growth;
            s = champions.as_ref().expect("at least one iterate").best_gap.2.clone();
        }
    }

    let champions = champions.expect("at least one iterate");
    let (state, converged) = match &champions.feasible {
        Some((_, _, s)) => (s.clone(), last_stage_stalled),
        None => (champions.best_gap.2.clone(), false),
    };

    let final_info = op.gap(&state)?;
    let final_eig = hermitian_eigen(&state)?;
    let objective_value: f64 = final_eig.values.iter().map(|l| l.abs()).sum();

    Ok(EstimatorSolution {
        estimate: Estimate::Hermitian(state),
        epsilon: eps,
        feasibility_gap: final_info.gap - eps,
        objective_value,
        iterations,
        converged,
        stages,
        objective_trace: Vec::new(),
    })
}

/// Projected-gradient least squares over the density matrices with a fixed
/// 1/L step; the objective trace is monotone non-increasing.
pub fn least_squares(
    dataset: &MeasurementDataset,
    config: &EstimatorConfig,
) -> Result<EstimatorSolution> {
    config.validate()?;
    let op = ResidualOperator::new(dataset)?;
    let eps = config.resolve_epsilon(dataset.m(), dataset.n(), dataset.meta().shots)?;
    let opts = &config.solver;

    // constant offset from the within-label spread of the responses
    let mean_sq: f64 =
        dataset.y().iter().map(|y| y * y).sum::<f64>() / dataset.n() as f64;
    let offset = mean_sq - {
        let mut acc = 0.0;
        for a in dataset.aggregates() {
            let w = a.count as f64 / dataset.n() as f64;
            acc += w * a.y_mean * a.y_mean;
        }
        acc
    };

    let mut s = project_spectrahedron(&op.linear_inversion()?)?;
    let step = 2.0 / op.lipschitz();
    let budget = opts.max_inner * opts.max_outer;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0usize;

    let mut objective = op.reduced_quadratic(s.data())? + offset;
    trace.push(objective);
    for _ in 0..budget {
        let resid = op.residual(s.data())?;
        let next = project_spectrahedron(&(s.data() + resid.scale(step)))?;
        let next_obj = op.reduced_quadratic(next.data())? + offset;
        iterations += 1;
        let improvement = objective - next_obj;
        s = next;
        objective = next_obj;
        trace.push(objective);
        if improvement.abs() <= opts.obj_tol * (1.0 + objective.abs()) {
            converged = true;
            break;
        }
    }

    let final_info = op.gap(s.data())?;
    Ok(EstimatorSolution {
        estimate: Estimate::Density(s),
        epsilon: eps,
        feasibility_gap: final_info.gap - eps,
        objective_value: objective,
        iterations,
        converged,
        stages: Vec::new(),
        objective_trace: trace,
    })
}

/// Dispatch on the configured objective.
pub fn solve_dantzig(
    dataset: &MeasurementDataset,
    config: &EstimatorConfig,
) -> Result<EstimatorSolution> {
    match config.objective {
        Objective::Entropy => dantzig_entropy(dataset, config),
        Objective::Nuclear => {
            let mut entropy_cfg = config.clone();
            entropy_cfg.objective = Objective::Entropy;
            let warm = dantzig_entropy(dataset, &entropy_cfg)?;
            dantzig_nuclear(dataset, config, Some(warm.estimate.matrix()))
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDiagnostics {
    pub epsilon: f64,
    pub feasibility_gap: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mu_trace: Vec<StageTrace>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub estimator: String,
    pub m: usize,
    pub density: bool,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    pub diagnostics: SolutionDiagnostics,
}

impl SolutionFile {
    pub fn from_solution(solution: &EstimatorSolution, estimator: &str) -> SolutionFile {
        let (re, im) = matrix_to_rows(solution.estimate.matrix());
        SolutionFile {
            schema_version: 1,
            estimator: estimator.to_string(),
            m: solution.estimate.matrix().nrows(),
            density: solution.estimate.as_density().is_some(),
            re,
            im,
            diagnostics: SolutionDiagnostics {
                epsilon: solution.epsilon,
                feasibility_gap: solution.feasibility_gap,
                objective: solution.objective_value,
                iterations: solution.iterations,
                converged: solution.converged,
                mu_trace: solution.stages.clone(),
            },
        }
    }

    pub fn matrix(&self) -> Result<CMatrix> {
        matrix_from_rows(self.m, &self.re, &self.im)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<SolutionFile> {
        let text = fs::read_to_string(path)?;
        let file: SolutionFile = serde_json::from_str(&text)?;
        if file.schema_version != 1 {
            return Err(Error::Format(format!(
                "solution: unsupported schema_version {}",
                file.schema_version
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hs_inner, random_hermitian, C64};
    use crate::measure::{noiseless_full_basis, noiseless_dataset, simulate_dataset, measure};
    use crate::pauli::{densify_kronecker, PauliLabel};
    use crate::states::{random_state, schatten_norm, DensityMatrix};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_residual(ds: &MeasurementDataset, s: &CMatrix) -> CMatrix {
        // per-record dense summation, independent of the aggregated path
        let m = ds.m();
        let mut acc = CMatrix::zeros(m, m);
        for (label, &y) in ds.labels().zip(ds.y().iter()) {
            let x = densify_kronecker(label);
            let mut tr = C64::new(0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    tr += s[(i, j)] * x[(j, i)];
                }
            }
            acc += x.scale(y - tr.re);
        }
        acc.unscale(ds.n() as f64)
    }

    #[test]
    fn residual_vanishes_at_truth_noiseless() {
        let rho = random_state(8, 2, 3).unwrap();
        let ds = noiseless_dataset(&rho, 60, 5).unwrap();
        let r = residual(&ds, rho.data()).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn residual_single_record_matches_scaled_label() {
        let rho = random_state(4, 2, 9).unwrap();
        let label = PauliLabel::from_index(2, 6).unwrap();
        let rec = measure(&rho, &label, 10, 4).unwrap();
        let ds = simulate_single(&rho, rec.clone());
        let zero = CMatrix::zeros(4, 4);
        let r = residual(&ds, &zero).unwrap();
        let expect = densify_kronecker(&label).scale(rec.y());
        assert!((r - expect).norm() < 1e-14);
    }

    fn simulate_single(
        rho: &DensityMatrix,
        rec: crate::measure::MeasurementRecord,
    ) -> MeasurementDataset {
        // one-record dataset via the jsonl path to stay on public APIs
        let text = format!(
            "{}\n{}\n",
            serde_json::json!({
                "schema_version": 1, "m": rho.m(), "n": 1, "K": rec.shots,
                "noiseless": false
            }),
            serde_json::json!({
                "label": rec.label.to_string(), "K": rec.shots, "k_plus": rec.k_plus
            })
        );
        MeasurementDataset::from_jsonl(&text).unwrap()
    }

    #[test]
    fn residual_matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for b in 1..=3usize {
            let m = 1 << b;
            let rho = random_state(m, 2.min(m), rng.random()).unwrap();
            let ds = simulate_dataset(&rho, 40, 8, rng.random()).unwrap();
            let s = random_hermitian(m, 0.5, &mut rng);
            let fast = residual(&ds, &s).unwrap();
            let slow = naive_residual(&ds, &s);
            assert!((&fast - &slow).norm() < 1e-12);
        }
    }

    #[test]
    fn constraint_gap_cases() {
        let rho = random_state(8, 2, 7).unwrap();
        let ds = noiseless_dataset(&rho, 60, 5).unwrap();
        let info = constraint_gap(&ds, rho.data()).unwrap();
        assert!(info.gap < 1e-14);

        // dense Pauli operator norm is 1/sqrt(m)
        let label = PauliLabel::from_index(3, 17).unwrap();
        let e = densify_kronecker(&label);
        let eig = hermitian_eigen(&e).unwrap();
        assert_relative_eq!(eig.op_norm(), 1.0 / 8f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn constraint_gap_extremal_pair_is_consistent() {
        // the reported gap is attained by the reported eigenvector and
        // dominates random Rayleigh quotients
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random_state(8, 2, 13).unwrap();
        let ds = simulate_dataset(&rho, 100, 10, 17).unwrap();
        let s = random_state(8, 3, 19).unwrap();
        let op = ResidualOperator::new(&ds).unwrap();
        let resid = op.residual(s.data()).unwrap();
        let info = op.gap(s.data()).unwrap();

        let quad = (info.eigenvector.adjoint() * &resid * &info.eigenvector)[(0, 0)];
        assert!((quad.re.abs() - info.gap).abs() < 1e-10);
        let image = &resid * &info.eigenvector;
        let expect = info.eigenvector.map(|x| x * C64::new(info.sign * info.gap, 0.0));
        assert!((image - expect).norm() < 1e-8);

        for _ in 0..200 {
            let v = crate::linalg::random_unit_vector(8, &mut rng);
            let q = (v.adjoint() * &resid * &v)[(0, 0)].re.abs();
            assert!(q <= info.gap + 1e-10);
        }
    }

    #[test]
    fn default_epsilon_formula() {
        assert_relative_eq!(
            default_epsilon(1, 1, 1, 1.0, 0.0),
            (2.0_f64).ln().sqrt(),
            epsilon = 1e-12
        );
        let base = default_epsilon(16, 256, 100, 4.0, (32.0_f64).ln());
        let doubled = default_epsilon(16, 512, 100, 4.0, (32.0_f64).ln());
        assert_relative_eq!(base / doubled, 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn true_state_feasible_at_auto_epsilon() {
        // calibration: rho in Lambda(eps) for >= 95% of 200 seeded trials
        let m = 16;
        let n = 256;
        let shots = 100;
        let t = (2.0 * m as f64).ln();
        let eps = default_epsilon(m, n, shots, 4.0, t);
        let mut hits = 0usize;
        let trials = 200usize;
        for seed in 0..trials as u64 {
            let rho = random_state(m, 2, seed).unwrap();
            let ds = simulate_dataset(&rho, n, shots, seed).unwrap();
            let info = constraint_gap(&ds, rho.data()).unwrap();
            if info.gap <= eps {
                hits += 1;
            }
        }
        assert!(
            hits as f64 >= 0.95 * trials as f64,
            "feasible in {hits}/{trials} trials"
        );
    }

    #[test]
    fn entropy_returns_maximally_mixed_when_feasible() {
        let m = 8;
        let rho = random_state(m, 2, 21).unwrap();
        let ds = simulate_dataset(&rho, 64, 20, 23).unwrap();
        let mixed = DensityMatrix::maximally_mixed(m).unwrap();
        let gap_at_mixed = constraint_gap(&ds, mixed.data()).unwrap().gap;

        let mut cfg = EstimatorConfig::default();
        cfg.epsilon = EpsilonChoice::Fixed(gap_at_mixed * 1.5);
        let sol = dantzig_entropy(&ds, &cfg).unwrap();
        assert!(sol.converged);
        let diff = (sol.estimate.matrix() - mixed.data()).norm();
        assert!(diff < 1e-4, "distance to I/m: {diff}");
        assert!(sol.feasibility_gap <= cfg.feas_tol * sol.epsilon);
    }

    #[test]
    fn entropy_exact_recovery_noiseless_full_basis() {
        let m = 8;
        let rho = random_state(m, 2, 25).unwrap();
        let ds = noiseless_full_basis(&rho).unwrap();
        let mut cfg = EstimatorConfig::default();
        cfg.epsilon = EpsilonChoice::Fixed(1e-10);
        let sol = dantzig_entropy(&ds, &cfg).unwrap();
        assert!(sol.converged);
        let err = schatten_norm(&(sol.estimate.matrix() - rho.data()), 2.0).unwrap();
        assert!(err <= 1e-6, "Frobenius error {err}");
    }

    #[test]
    fn entropy_error_tracks_noise_level() {
        // single mid-size configuration; the rate fits live in the
        // acceptance suite
        let m = 8;
        let rho = random_state(m, 2, 27).unwrap();
        let ds = simulate_dataset(&rho, 256, 200, 29).unwrap();
        let cfg = EstimatorConfig::default();
        let sol = dantzig_entropy(&ds, &cfg).unwrap();
        assert!(sol.converged);
        let err = schatten_norm(&(sol.estimate.matrix() - rho.data()), 2.0).unwrap();
        let bound = 2.0 * (m as f64) * sol.epsilon * (2.0_f64 * 2.0).sqrt() * (m as f64).sqrt();
        assert!(
            err * err <= bound * bound,
            "error {err} vs crude bound {bound}"
        );
    }

    #[test]
    fn nuclear_recovery_and_degenerate_cases() {
        let m = 4;
        let rho = random_state(m, 1, 31).unwrap();
        let ds = noiseless_full_basis(&rho).unwrap();
        let mut cfg = EstimatorConfig::default();
        cfg.epsilon = EpsilonChoice::Fixed(1e-10);
        cfg.objective = Objective::Nuclear;
        let warm = {
            let mut e = cfg.clone();
            e.objective = Objective::Entropy;
            dantzig_entropy(&ds, &e).unwrap()
        };
        let sol = dantzig_nuclear(&ds, &cfg, Some(warm.estimate.matrix())).unwrap();
        assert!(sol.converged);
        let err = schatten_norm(&(sol.estimate.matrix() - rho.data()), 2.0).unwrap();
        assert!(err <= 1e-6, "Frobenius error {err}");
        assert!(sol.feasibility_gap <= cfg.feas_tol * sol.epsilon + 1e-15);

        // huge epsilon: the zero matrix is optimal
        let noisy = simulate_dataset(&rho, 32, 5, 33).unwrap();
        let mut big = EstimatorConfig::default();
        big.epsilon = EpsilonChoice::Fixed(10.0);
        big.objective = Objective::Nuclear;
        let sol = dantzig_nuclear(&noisy, &big, None).unwrap();
        assert!(sol.converged);
        assert!(sol.estimate.matrix().norm() < 1e-9);
        assert!(sol.objective_value < 1e-9);
    }

    #[test]
    fn least_squares_cases() {
        // exact recovery on the noiseless full basis (single step)
        let m = 8;
        let rho = random_state(m, 3, 35).unwrap();
        let ds = noiseless_full_basis(&rho).unwrap();
        let cfg = EstimatorConfig::default();
        let sol = least_squares(&ds, &cfg).unwrap();
        assert!(sol.converged);
        let err = schatten_norm(&(sol.estimate.matrix() - rho.data()), 2.0).unwrap();
        assert!(err <= 1e-8, "error {err}");

        // monotone objective trace
        let noisy = simulate_dataset(&rho, 100, 10, 37).unwrap();
        let sol = least_squares(&noisy, &cfg).unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }

        // single identity record: every density matrix has zero loss
        let e1 = PauliLabel::from_index(2, 1).unwrap();
        let small = random_state(4, 1, 39).unwrap();
        let rec = measure(&small, &e1, 10, 4).unwrap();
        let ds = simulate_single(&small, rec);
        let sol = least_squares(&ds, &cfg).unwrap();
        assert!(sol.objective_value.abs() < 1e-12);
        assert!(sol.estimate.as_density().is_some());
    }

    #[test]
    fn mirror_map_identity_step() {
        // one exponentiated-gradient step from I/m with zero gradient
        let m = 8;
        let mixed = DensityMatrix::maximally_mixed(m).unwrap();
        let eig = hermitian_eigen(mixed.data()).unwrap();
        let w = eig.reassemble(|l| l.max(LAMBDA_FLOOR).ln());
        let (s, _, _) = exp_normalize(&w).unwrap();
        assert!((s - mixed.data()).norm() < 1e-14);
    }

    #[test]
    fn penalty_subgradient_directional_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rho = random_state(8, 2, 43).unwrap();
        let ds = simulate_dataset(&rho, 80, 10, 45).unwrap();
        let op = ResidualOperator::new(&ds).unwrap();
        for _ in 0..10 {
            let s = random_state(8, 4, rng.random()).unwrap();
            let d = random_hermitian(8, 1.0, &mut rng);
            let info = op.gap(s.data()).unwrap();
            let grad = op.penalty_gradient(&info.eigenvector, info.sign).unwrap();
            let directional = hs_inner(&grad, &d);
            for h in [1e-4, 1e-5] {
                let shifted = s.data() + d.scale(h);
                let g1 = op.gap(&shifted).unwrap().gap;
                let fd = (g1 - info.gap) / h;
                assert!(
                    (fd - directional).abs() <= 20.0 * h + 1e-7,
                    "h={h}: fd {fd} vs grad {directional}"
                );
            }
        }
    }

    #[test]
    fn linear_inversion_reconstructs_on_full_basis() {
        let rho = random_state(8, 2, 47).unwrap();
        let ds = noiseless_full_basis(&rho).unwrap();
        let op = ResidualOperator::new(&ds).unwrap();
        let inv = op.linear_inversion().unwrap();
        assert!((inv - rho.data()).norm() < 1e-12);
    }

    #[test]
    fn solution_file_round_trip() {
        let rho = random_state(4, 1, 49).unwrap();
        let ds = simulate_dataset(&rho, 64, 20, 51).unwrap();
        let sol = dantzig_entropy(&ds, &EstimatorConfig::default()).unwrap();
        let file = SolutionFile::from_solution(&sol, "entropy");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solution.json");
        file.write(&path).unwrap();
        let back = SolutionFile::read(&path).unwrap();
        assert_eq!(back.estimator, "entropy");
        assert!(back.density);
        assert_eq!(back.diagnostics.converged, sol.converged);
        assert!((back.matrix().unwrap() - sol.estimate.matrix()).norm() < 1e-15);
    }
}
