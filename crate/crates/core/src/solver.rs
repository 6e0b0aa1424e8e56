//! Dense Powell-dogleg trust-region solver for problems built from 2D
//! reprojection-style residual blocks.
//!
//! Minimizes `½ Σ ρ(‖rᵢ‖²)` where each `rᵢ` is a 2-vector depending on a few
//! parameter blocks. States live on a manifold: the problem supplies the
//! tangent dimension and a retraction, the solver works on tangent increments.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter blocks touched by one residual; every problem in this crate
/// couples at most three (pose, landmark, plane).
pub const MAX_BLOCKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianBlock {
    /// Column of the first tangent parameter of the block.
    pub offset: usize,
    /// Number of used columns in `values` (at most 3).
    pub cols: usize,
    pub values: Matrix2x3<f64>,
}

/// One 2-vector residual with its sparse Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBlock {
    pub residual: Vector2<f64>,
    jacobians: [JacobianBlock; MAX_BLOCKS],
    len: usize,
}

impl ResidualBlock {
    pub fn new(residual: Vector2<f64>) -> Self {
        let empty = JacobianBlock {
            offset: 0,
            cols: 0,
            values: Matrix2x3::zeros(),
        };
        Self {
            residual,
            jacobians: [empty; MAX_BLOCKS],
            len: 0,
        }
    }

    pub fn push(&mut self, offset: usize, cols: usize, values: Matrix2x3<f64>) {
        assert!(self.len < MAX_BLOCKS && cols <= 3);
        self.jacobians[self.len] = JacobianBlock {
            offset,
            cols,
            values,
        };
        self.len += 1;
    }

    pub fn jacobians(&self) -> &[JacobianBlock] {
        &self.jacobians[..self.len]
    }
}

/// A nonlinear least-squares problem over a manifold-valued state.
pub trait LeastSquaresProblem {
    type State: Clone;

    fn tangent_dim(&self) -> usize;

    /// Residual blocks at `state`, in a fixed order. Jacobians are only
    /// required when `jacobians` is true.
    fn linearize(&self, state: &Self::State, jacobians: bool) -> Result<Vec<ResidualBlock>>;

    /// `state ⊞ delta`.
    fn retract(&self, state: &Self::State, delta: &DVector<f64>) -> Self::State;

    /// Magnitude used by the relative parameter tolerance.
    fn state_norm(&self, state: &Self::State) -> f64;

    /// Tangent columns `[start, dim)` that split into independent blocks of
    /// the given size (no residual touches two of them), enabling Schur
    /// elimination.
    fn schur_split(&self) -> Option<SchurSplit> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchurSplit {
    pub start: usize,
    pub block: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobustLoss {
    #[default]
    None,
    /// Quadratic below `delta` pixels, linear above.
    Huber { delta: f64 },
}

impl RobustLoss {
    /// `(ρ(s), ρ'(s))` for a squared norm `s`.
    fn evaluate(&self, s: f64) -> (f64, f64) {
        match *self {
            RobustLoss::None => (s, 1.0),
            RobustLoss::Huber { delta } => {
                let d2 = delta * delta;
                if s <= d2 {
                    (s, 1.0)
                } else {
                    let r = s.sqrt();
                    (2.0 * delta * r - d2, delta / r)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub parameter_tolerance: f64,
    pub function_tolerance: f64,
    pub initial_trust_radius: f64,
    pub max_trust_radius: f64,
    /// Eliminate independent parameter blocks before solving the step.
    pub use_schur: bool,
    pub loss: RobustLoss,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            gradient_tolerance: 1e-10,
            parameter_tolerance: 1e-10,
            function_tolerance: 1e-8,
            initial_trust_radius: 1e4,
            max_trust_radius: 1e16,
            use_schur: false,
            loss: RobustLoss::None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tolerances = [
            self.gradient_tolerance,
            self.parameter_tolerance,
            self.function_tolerance,
            self.initial_trust_radius,
            self.max_trust_radius,
        ];
        if self.max_iterations < 1 || tolerances.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig(
                "solver needs max_iterations >= 1 and positive tolerances".into(),
            ));
        }
        if let RobustLoss::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return Err(Error::InvalidConfig("Huber delta must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ParameterTolerance,
    FunctionTolerance,
    TrustRegionCollapsed,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct SolverSummary<S> {
    pub state: S,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Step attempts, accepted or not.
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl<S> SolverSummary<S> {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

const MIN_DIAGONAL: f64 = 1e-6;
const MAX_DIAGONAL: f64 = 1e32;
const INITIAL_MU: f64 = 1e-8;
const MAX_MU: f64 = 1e8;
const MIN_RELATIVE_DECREASE: f64 = 1e-3;
const MIN_TRUST_RADIUS: f64 = 1e-32;

/// Weighted cost `½ Σ ρ(‖r‖²)`.
pub fn cost(blocks: &[ResidualBlock], loss: &RobustLoss) -> f64 {
    0.5 * blocks
        .iter()
        .map(|b| loss.evaluate(b.residual.norm_squared()).0)
        .sum::<f64>()
}

/// Stacked residual vector.
pub fn residual_vector(blocks: &[ResidualBlock]) -> DVector<f64> {
    DVector::from_iterator(
        blocks.len() * 2,
        blocks.iter().flat_map(|b| [b.residual.x, b.residual.y]),
    )
}

/// Dense Jacobian assembled from residual blocks.
pub fn dense_jacobian(blocks: &[ResidualBlock], dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(blocks.len() * 2, dim);
    for (row, b) in blocks.iter().enumerate() {
        for jb in b.jacobians() {
            for r in 0..2 {
                for c in 0..jb.cols {
                    j[(2 * row + r, jb.offset + c)] += jb.values[(r, c)];
                }
            }
        }
    }
    j
}

/// Gauss-Newton Hessian `JᵀWJ` and gradient `JᵀWr`.
fn normal_equations(blocks: &[ResidualBlock], dim: usize, loss: &RobustLoss) -> (DMatrix<f64>, DVector<f64>) {
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    for b in blocks {
        let (_, w) = loss.evaluate(b.residual.norm_squared());
        let jacs = b.jacobians();
        for ja in jacs {
            let jat = ja.values.transpose();
            let ga = jat * b.residual * w;
            for c in 0..ja.cols {
                g[ja.offset + c] += ga[c];
            }
            for jb in jacs {
                let block = jat * jb.values * w;
                for r in 0..ja.cols {
                    for c in 0..jb.cols {
                        h[(ja.offset + r, jb.offset + c)] += block[(r, c)];
                    }
                }
            }
        }
    }
    (h, g)
}

fn solve_dense(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    Cholesky::new(m).map(|c| c.solve(rhs))
}

/// Solves `m x = rhs` by eliminating the block-diagonal trailing part.
fn solve_schur(m: &DMatrix<f64>, rhs: &DVector<f64>, split: SchurSplit) -> Option<DVector<f64>> {
    let n = m.nrows();
    let s = split.start;
    let b = split.block;
    if b == 0 || !(n - s).is_multiple_of(b) {
        return solve_dense(m.clone(), rhs);
    }
    let mut reduced = m.view((0, 0), (s, s)).into_owned();
    let mut reduced_rhs = rhs.rows(0, s).into_owned();
    let mut inverses = Vec::with_capacity((n - s) / b);
    for start in (s..n).step_by(b) {
        let c = m.view((start, start), (b, b)).into_owned();
        let c_inv = Cholesky::new(c)?.inverse();
        let coupling = m.view((0, start), (s, b));
        let bc = coupling * &c_inv;
        reduced -= &bc * coupling.transpose();
        reduced_rhs -= &bc * rhs.rows(start, b);
        inverses.push(c_inv);
    }
    let head = solve_dense(reduced, &reduced_rhs)?;
    let mut x = DVector::zeros(n);
    x.rows_mut(0, s).copy_from(&head);
    for (k, start) in (s..n).step_by(b).enumerate() {
        let coupling = m.view((0, start), (s, b));
        let local = rhs.rows(start, b) - coupling.transpose() * &head;
        x.rows_mut(start, b).copy_from(&(&inverses[k] * local));
    }
    Some(x)
}

/// Regularized Gauss-Newton step `(H + μD) h = −g`.
fn gauss_newton_step(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    split: Option<SchurSplit>,
) -> Option<DVector<f64>> {
    let rhs = -g;
    let mut mu = INITIAL_MU;
    while mu <= MAX_MU {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += mu * h[(i, i)].clamp(MIN_DIAGONAL, MAX_DIAGONAL);
        }
        let step = match split {
            Some(split) => solve_schur(&m, &rhs, split),
            None => solve_dense(m, &rhs),
        };
        if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
            return Some(step);
        }
        mu *= 10.0;
    }
    None
}

/// Powell dogleg step inside a trust region of the given radius.
fn dogleg_step(
    gn: &DVector<f64>,
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    radius: f64,
) -> DVector<f64> {
    let gn_norm = gn.norm();
    if gn_norm <= radius {
        return gn.clone();
    }
    let g_norm = g.norm();
    let curvature = g.dot(&(h * g));
    let alpha = if curvature > 0.0 {
        g_norm * g_norm / curvature
    } else {
        f64::INFINITY
    };
    if alpha * g_norm >= radius {
        return g * (-radius / g_norm);
    }
    let sd = g * -alpha;
    let diff = gn - &sd;
    let a = diff.norm_squared();
    let c = sd.dot(&diff);
    let beta = (-c + (c * c + a * (radius * radius - sd.norm_squared())).max(0.0).sqrt()) / a;
    sd + diff * beta
}

/// Runs the trust-region iteration from `initial`.
pub fn solve<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::State,
    config: &SolverConfig,
) -> Result<SolverSummary<P::State>> {
    config.validate()?;
    let dim = problem.tangent_dim();
    let split = if config.use_schur {
        problem.schur_split().filter(|s| s.start > 0 && s.start < dim)
    } else {
        None
    };

    let mut state = initial;
    let mut blocks = problem.linearize(&state, true)?;
    let mut current = cost(&blocks, &config.loss);
    if !current.is_finite() {
        return Err(Error::SolverDiverged);
    }
    let initial_cost = current;
    let mut history = vec![current];
    let mut radius = config.initial_trust_radius;
    let mut iterations = 0;
    let mut accepted = 0;
    let mut termination = Termination::MaxIterations;
    let mut normal = normal_equations(&blocks, dim, &config.loss);

    while iterations < config.max_iterations {
        let (h, g) = &normal;
        if g.amax() <= config.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        let gn = gauss_newton_step(h, g, split).ok_or(Error::NumericalFailure(
            "normal equations could not be solved",
        ))?;
        let step = dogleg_step(&gn, g, h, radius);
        iterations += 1;

        let state_norm = problem.state_norm(&state);
        if step.norm() <= config.parameter_tolerance * (state_norm + config.parameter_tolerance) {
            termination = Termination::ParameterTolerance;
            break;
        }

        let predicted = -(g.dot(&step) + 0.5 * step.dot(&(h * &step)));
        let candidate = problem.retract(&state, &step);
        let candidate_blocks = problem.linearize(&candidate, true)?;
        let candidate_cost = cost(&candidate_blocks, &config.loss);
        let actual = current - candidate_cost;
        let ratio = if predicted > 0.0 { actual / predicted } else { -1.0 };

        if candidate_cost.is_finite() && ratio > MIN_RELATIVE_DECREASE {
            state = candidate;
            blocks = candidate_blocks;
            let previous = current;
            current = candidate_cost;
            history.push(current);
            accepted += 1;
            normal = normal_equations(&blocks, dim, &config.loss);
            if ratio > 0.75 {
                radius = radius.max(3.0 * step.norm()).min(config.max_trust_radius);
            } else if ratio < 0.25 {
                radius *= 0.5;
            }
            if actual <= config.function_tolerance * previous {
                termination = Termination::FunctionTolerance;
                break;
            }
        } else {
            radius = radius.min(step.norm()) * 0.5;
            if radius < MIN_TRUST_RADIUS {
                termination = Termination::TrustRegionCollapsed;
                break;
            }
        }
    }

    if !current.is_finite() {
        return Err(Error::SolverDiverged);
    }
    Ok(SolverSummary {
        state,
        initial_cost,
        final_cost: current,
        iterations,
        accepted_steps: accepted,
        termination,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Rosenbrock as two residuals `(10(y − x²), 1 − x)` in one block.
    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        type State = [f64; 2];

        fn tangent_dim(&self) -> usize {
            2
        }

        fn linearize(&self, s: &[f64; 2], _: bool) -> Result<Vec<ResidualBlock>> {
            let [x, y] = *s;
            let mut b = ResidualBlock::new(Vector2::new(10.0 * (y - x * x), 1.0 - x));
            b.push(0, 2, Matrix2x3::new(-20.0 * x, 10.0, 0.0, -1.0, 0.0, 0.0));
            Ok(vec![b])
        }

        fn retract(&self, s: &[f64; 2], d: &DVector<f64>) -> [f64; 2] {
            [s[0] + d[0], s[1] + d[1]]
        }

        fn state_norm(&self, s: &[f64; 2]) -> f64 {
            (s[0] * s[0] + s[1] * s[1]).sqrt()
        }
    }

    #[test]
    fn rosenbrock_converges_monotonically() {
        let config = SolverConfig {
            initial_trust_radius: 1.0,
            ..SolverConfig::default()
        };
        let summary = solve(&Rosenbrock, [-1.2, 1.0], &config).unwrap();
        assert!(summary.converged());
        assert_relative_eq!(summary.state[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(summary.state[1], 1.0, epsilon = 1e-8);
        assert!(summary.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    /// Linear problem with block-diagonal tail: a shared offset `a` plus
    /// per-group values `b_k`, residuals `(a + b_k − y_k, b_k − z_k)`.
    struct Grouped {
        targets: Vec<(f64, f64)>,
    }

    impl LeastSquaresProblem for Grouped {
        type State = DVector<f64>;

        fn tangent_dim(&self) -> usize {
            1 + self.targets.len()
        }

        fn linearize(&self, s: &DVector<f64>, _: bool) -> Result<Vec<ResidualBlock>> {
            Ok(self
                .targets
                .iter()
                .enumerate()
                .map(|(k, (y, z))| {
                    let mut b = ResidualBlock::new(Vector2::new(s[0] + s[1 + k] - y, s[1 + k] - z));
                    b.push(0, 1, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
                    b.push(1 + k, 1, Matrix2x3::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0));
                    b
                })
                .collect())
        }

        fn retract(&self, s: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
            s + d
        }

        fn state_norm(&self, s: &DVector<f64>) -> f64 {
            s.norm()
        }

        fn schur_split(&self) -> Option<SchurSplit> {
            Some(SchurSplit { start: 1, block: 1 })
        }
    }

    #[test]
    fn schur_matches_dense() {
        let problem = Grouped {
            targets: vec![(1.0, 0.2), (2.5, 1.0), (-0.5, -1.5), (0.3, 0.9)],
        };
        let x0 = DVector::zeros(5);
        let dense = solve(&problem, x0.clone(), &SolverConfig::default()).unwrap();
        let schur = solve(
            &problem,
            x0,
            &SolverConfig {
                use_schur: true,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!((dense.state - schur.state).amax() < 1e-9);
        assert_relative_eq!(dense.final_cost, schur.final_cost, epsilon = 1e-12);
    }

    #[test]
    fn huber_downweights_outlier() {
        let problem = Grouped {
            targets: vec![(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (50.0, 0.0)],
        };
        let plain = solve(&problem, DVector::zeros(5), &SolverConfig::default()).unwrap();
        let robust = solve(
            &problem,
            DVector::zeros(5),
            &SolverConfig {
                loss: RobustLoss::Huber { delta: 1.0 },
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(robust.final_cost.is_finite());
        // the shared offset is pulled less toward the outlier
        assert!(robust.state[0] < plain.state[0]);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let summary = solve(&Rosenbrock, [1.0, 1.0], &SolverConfig::default()).unwrap();
        assert_eq!(summary.iterations, 0);
        assert_eq!(summary.final_cost, 0.0);
        assert_eq!(summary.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        assert!(solve(&Rosenbrock, [0.0, 0.0], &bad).is_err());
    }
}
