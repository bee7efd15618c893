//! Weighted nonlinear least squares.
//!
//! A damped Gauss–Newton (Levenberg–Marquardt) iteration on parameters
//! divided by their scale hints, so problems mixing 1e-4 and 1e12 sized
//! parameters stay well conditioned. Damping is multiplied by 10 on a
//! rejected step and divided by 10 on an accepted one. Bounds are enforced by
//! projecting each trial point onto the box; a projected step that does not
//! lower the cost is rejected like any other.
//!
//! The Jacobian is taken by central differences with per-parameter step
//! `1e-7·scale` unless the problem supplies an analytic one. There is no
//! absolute floor: one of 1e-12 would swamp parameters such as α_D ~ 1e-24.

mod joint;

pub use joint::{joint_relax_fit, monte_carlo_joint_fits, pooled_records, JointFit, RELAX_PARAM_NAMES};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no convergence after {iterations} iterations (cost {:e})", history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence {
        best: Vec<f64>,
        history: Vec<f64>,
        iterations: usize,
    },
    #[error("normal equations singular: damping exhausted at cost {cost:e}")]
    SingularNormalEquations { best: Vec<f64>, cost: f64 },
    #[error("parameter {name} = {value:e} outside [{lower:e}, {upper:e}]")]
    BoundsViolation {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("residuals not finite at the initial point")]
    NonFiniteResidual,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
}

impl FitError {
    pub fn name(&self) -> &'static str {
        match self {
            FitError::NoConvergence { .. } => "NoConvergence",
            FitError::SingularNormalEquations { .. } => "SingularNormalEquations",
            FitError::BoundsViolation { .. } => "BoundsViolation",
            FitError::NonFiniteResidual => "NonFiniteResidual",
            FitError::InvalidProblem(_) => "InvalidProblem",
            FitError::InsufficientCoverage(_) => "InsufficientCoverage",
        }
    }
}

/// Parameter metadata: name, box bounds and a positive scale hint.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
}

impl ParamSpec {
    pub fn new(name: &str, scale: f64) -> Self {
        ParamSpec {
            name: name.to_string(),
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            scale,
        }
    }

    pub fn bounded(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }
}

type ResidualFn<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a>;
type JacobianFn<'a> = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Sync + 'a>;

/// A residual function `r(p) = (model − data)/σ` with parameter metadata.
pub struct FitProblem<'a> {
    residuals: ResidualFn<'a>,
    jacobian: Option<JacobianFn<'a>>,
    pub params: Vec<ParamSpec>,
    pub n_residuals: usize,
    pub description: String,
}

impl<'a> FitProblem<'a> {
    pub fn new<F>(params: Vec<ParamSpec>, n_residuals: usize, residuals: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync + 'a,
    {
        FitProblem {
            residuals: Box::new(residuals),
            jacobian: None,
            params,
            n_residuals,
            description: String::new(),
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Sync + 'a,
    {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    pub fn residuals(&self, p: &[f64]) -> Vec<f64> {
        (self.residuals)(p)
    }

    /// Analytic Jacobian if supplied, central differences otherwise.
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(p),
            None => self.numerical_jacobian(p),
        }
    }

    pub fn numerical_jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = p.len();
        let mut jac = DMatrix::zeros(self.n_residuals, n);
        let mut work = p.to_vec();
        for j in 0..n {
            let h = 1e-7 * self.params[j].scale;
            work[j] = p[j] + h;
            let plus = self.residuals(&work);
            work[j] = p[j] - h;
            let minus = self.residuals(&work);
            work[j] = p[j];
            for i in 0..self.n_residuals {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn validate(&self, init: &[f64]) -> Result<(), FitError> {
        if init.len() != self.params.len() {
            return Err(FitError::InvalidProblem(format!(
                "{} initial values for {} parameters",
                init.len(),
                self.params.len()
            )));
        }
        if self.n_residuals < self.params.len() {
            return Err(FitError::InvalidProblem(format!(
                "{} residuals for {} parameters",
                self.n_residuals,
                self.params.len()
            )));
        }
        for (spec, &v) in self.params.iter().zip(init) {
            if !(spec.lower < spec.upper) {
                return Err(FitError::InvalidProblem(format!(
                    "{}: lower bound not below upper bound",
                    spec.name
                )));
            }
            if !(spec.scale > 0.0) || !spec.scale.is_finite() {
                return Err(FitError::InvalidProblem(format!(
                    "{}: scale must be positive",
                    spec.name
                )));
            }
            if !(v >= spec.lower && v <= spec.upper) {
                return Err(FitError::BoundsViolation {
                    name: spec.name.clone(),
                    value: v,
                    lower: spec.lower,
                    upper: spec.upper,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative cost-decrease tolerance.
    pub ftol: f64,
    pub max_iter: usize,
    pub initial_damping: f64,
    pub max_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            xtol: 1e-10,
            ftol: 1e-12,
            max_iter: 500,
            initial_damping: 1e-3,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    /// Euclidean norm of the weighted residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost (sum of squares) after each accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

impl FitResult {
    /// Standard error over |value|; infinite for a zero estimate.
    pub fn relative_error(&self, k: usize) -> f64 {
        self.std_errors[k] / self.params[k].abs()
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn project(q: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((x, l), h) in q.iter_mut().zip(lo).zip(hi) {
        *x = x.clamp(*l, *h);
    }
}

/// Minimises `Σ r_i(p)²` from `init`.
pub fn least_squares(
    problem: &FitProblem<'_>,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    problem.validate(init)?;
    let n = init.len();
    let scale: Vec<f64> = problem.params.iter().map(|s| s.scale).collect();
    let lo: Vec<f64> = problem.params.iter().zip(&scale).map(|(s, k)| s.lower / k).collect();
    let hi: Vec<f64> = problem.params.iter().zip(&scale).map(|(s, k)| s.upper / k).collect();
    let to_p = |q: &[f64]| -> Vec<f64> { q.iter().zip(&scale).map(|(x, k)| x * k).collect() };

    let mut q: Vec<f64> = init.iter().zip(&scale).map(|(x, k)| x / k).collect();
    let mut r = problem.residuals(init);
    if r.len() != problem.n_residuals {
        return Err(FitError::InvalidProblem(format!(
            "residual function returned {} values, expected {}",
            r.len(),
            problem.n_residuals
        )));
    }
    if !r.iter().all(|x| x.is_finite()) {
        return Err(FitError::NonFiniteResidual);
    }
    let mut s = cost(&r);
    let mut history = vec![s];
    let mut lambda = opts.initial_damping;
    let abs_floor = 1e-28 * (problem.n_residuals as f64).max(1.0);
    let mut iterations = 0;
    let mut converged = s == 0.0;

    while !converged {
        if iterations >= opts.max_iter {
            return Err(FitError::NoConvergence {
                best: to_p(&q),
                history,
                iterations,
            });
        }
        iterations += 1;

        let p = to_p(&q);
        let mut jac = problem.jacobian(&p);
        for (j, k) in scale.iter().enumerate() {
            jac.column_mut(j).scale_mut(*k);
        }
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        if g.iter().all(|x| *x == 0.0) {
            converged = true;
            break;
        }
        let a = jac.tr_mul(&jac);
        let diag_floor = a.diagonal().max() * 1e-15 + f64::MIN_POSITIVE;

        loop {
            let mut damped = a.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * a[(j, j)].max(diag_floor);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            let Some(step) = step else {
                lambda *= 10.0;
                if lambda > opts.max_damping {
                    return Err(FitError::SingularNormalEquations { best: p, cost: s });
                }
                continue;
            };

            let mut trial: Vec<f64> = q.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            project(&mut trial, &lo, &hi);
            let dq: f64 = trial
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let qn: f64 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rel_step = dq / (qn + opts.xtol);

            let r_trial = problem.residuals(&to_p(&trial));
            let s_trial = if r_trial.iter().all(|x| x.is_finite()) {
                cost(&r_trial)
            } else {
                f64::INFINITY
            };

            if s_trial < s {
                let rel_dec = (s - s_trial) / s;
                q = trial;
                r = r_trial;
                s = s_trial;
                history.push(s);
                lambda = (lambda / 10.0).max(1e-15);
                if s == 0.0 || (rel_step < opts.xtol && (rel_dec < opts.ftol || s < abs_floor)) {
                    converged = true;
                }
                break;
            }

            if rel_step < opts.xtol {
                // no descent even for a step at working precision
                converged = true;
                break;
            }
            lambda *= 10.0;
            if lambda > opts.max_damping {
                return Err(FitError::SingularNormalEquations { best: p, cost: s });
            }
        }
    }

    let p = to_p(&q);
    let mut jac = problem.jacobian(&p);
    for (j, k) in scale.iter().enumerate() {
        jac.column_mut(j).scale_mut(*k);
    }
    let cov_q = covariance_from_jacobian(&jac);
    let mut covariance = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            covariance[(i, j)] = cov_q[(i, j)] * scale[i] * scale[j];
        }
    }
    let std_errors = (0..n).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    Ok(FitResult {
        params: p,
        covariance,
        std_errors,
        residual_norm: s.sqrt(),
        iterations,
        converged,
        history,
    })
}

/// (JᵀJ)⁻¹ through the SVD of J. Directions with a vanishing singular value
/// get a variance of 1/(ε·s_max)² rather than being dropped, so an
/// unconstrained parameter shows up as a huge standard error.
pub fn covariance_from_jacobian(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let n = jac.ncols();
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s_max = svd.singular_values.max();
    let floor = (f64::EPSILON * s_max).max(f64::MIN_POSITIVE);
    let mut cov = DMatrix::zeros(n, n);
    for k in 0..svd.singular_values.len() {
        let sk = svd.singular_values[k].max(floor);
        let w = 1.0 / (sk * sk);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += w * v_t[(k, i)] * v_t[(k, j)];
            }
        }
    }
    (&cov + cov.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_problem<'a>(bs: &'a [f64], ys: &'a [f64], sigma: f64) -> FitProblem<'a> {
        FitProblem::new(vec![ParamSpec::new("gamma2", 1e9)], bs.len(), move |p| {
            bs.iter().zip(ys).map(|(b, y)| (p[0] * b * b - y) / sigma).collect()
        })
    }

    #[test]
    fn recovers_quadratic_coefficient() {
        let bs: Vec<f64> = (0..=12).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = bs.iter().map(|b| 4.69e9 * b * b).collect();
        let pr = quadratic_problem(&bs, &ys, 1e8);
        let fit = least_squares(&pr, &[3.0e9], &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] / 4.69e9 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_model_from_truth_is_immediate() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let pr = FitProblem::new(
            vec![ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)],
            xs.len(),
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y).collect(),
        );
        let fit = least_squares(&pr, &[2.0, 1.0], &FitOptions::default()).unwrap();
        assert!(fit.iterations <= 2, "{} iterations", fit.iterations);
        let fit = least_squares(&pr, &[-5.0, 7.0], &FitOptions::default()).unwrap();
        assert!((fit.params[0] - 2.0).abs() < 1e-10 && (fit.params[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rosenbrock_valley() {
        let pr = FitProblem::new(
            vec![ParamSpec::new("x", 1.0), ParamSpec::new("y", 1.0)],
            2,
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
        );
        let fit = least_squares(&pr, &[-1.2, 1.0], &FitOptions::default()).unwrap();
        assert!((fit.params[0] - 1.0).abs() < 1e-8);
        assert!((fit.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bounds_are_respected() {
        // unconstrained minimum at x = -3
        let pr = FitProblem::new(
            vec![ParamSpec::new("x", 1.0).bounded(0.0, 10.0)],
            1,
            |p| vec![p[0] + 3.0],
        );
        let fit = least_squares(&pr, &[5.0], &FitOptions::default()).unwrap();
        assert_eq!(fit.params[0], 0.0);
        let err = least_squares(&pr, &[-1.0], &FitOptions::default()).unwrap_err();
        assert_eq!(err.name(), "BoundsViolation");
    }

    #[test]
    fn iteration_cap_reports_best_point() {
        let pr = FitProblem::new(
            vec![ParamSpec::new("x", 1.0), ParamSpec::new("y", 1.0)],
            2,
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
        );
        let opts = FitOptions { max_iter: 2, ..FitOptions::default() };
        match least_squares(&pr, &[-1.2, 1.0], &opts).unwrap_err() {
            FitError::NoConvergence { best, history, iterations } => {
                assert_eq!(iterations, 2);
                assert_eq!(best.len(), 2);
                assert!(!history.is_empty());
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn malformed_problems() {
        let pr = FitProblem::new(vec![ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)], 1, |p| vec![p[0]]);
        assert_eq!(least_squares(&pr, &[1.0, 1.0], &FitOptions::default()).unwrap_err().name(), "InvalidProblem");
        let pr = FitProblem::new(vec![ParamSpec::new("a", 0.0)], 2, |p| vec![p[0], 1.0]);
        assert_eq!(least_squares(&pr, &[1.0], &FitOptions::default()).unwrap_err().name(), "InvalidProblem");
        let pr = FitProblem::new(vec![ParamSpec::new("a", 1.0)], 2, |p| vec![p[0].ln(), 1.0]);
        assert_eq!(least_squares(&pr, &[-1.0], &FitOptions::default()).unwrap_err(), FitError::NonFiniteResidual);
    }

    #[test]
    fn covariance_for_straight_line() {
        // y = a x + b with unit σ: cov = (XᵀX)⁻¹
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.1, 0.9, 2.2, 2.9];
        let pr = FitProblem::new(
            vec![ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)],
            4,
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y).collect(),
        );
        let fit = least_squares(&pr, &[0.0, 0.0], &FitOptions::default()).unwrap();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sx: f64 = xs.iter().sum();
        let det = 4.0 * sxx - sx * sx;
        assert!((fit.covariance[(0, 0)] - 4.0 / det).abs() < 1e-9);
        assert!((fit.covariance[(1, 1)] - sxx / det).abs() < 1e-9);
        assert!((fit.covariance[(0, 1)] + sx / det).abs() < 1e-9);
        assert!((fit.std_errors[0] - (4.0 / det).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn sigma_scaling_invariance() {
        let bs: Vec<f64> = (1..=8).map(|i| i as f64 * 0.7).collect();
        let ys: Vec<f64> = bs
            .iter()
            .enumerate()
            .map(|(i, b)| 4.69e9 * b * b * (1.0 + 0.01 * ((i as f64) * 1.3).sin()))
            .collect();
        let f1 = least_squares(&quadratic_problem(&bs, &ys, 1e8), &[4e9], &FitOptions::default()).unwrap();
        let f2 = least_squares(&quadratic_problem(&bs, &ys, 3e8), &[4e9], &FitOptions::default()).unwrap();
        assert!((f1.params[0] / f2.params[0] - 1.0).abs() < 1e-9);
        assert!((f2.covariance[(0, 0)] / f1.covariance[(0, 0)] - 9.0).abs() < 1e-6);
    }

    #[test]
    fn unconstrained_direction_gets_large_error() {
        // residuals independent of b
        let pr = FitProblem::new(
            vec![ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)],
            3,
            |p| vec![p[0] - 1.0, p[0] - 1.1, p[0] - 0.9],
        );
        let fit = least_squares(&pr, &[0.0, 1.0], &FitOptions::default()).unwrap();
        assert!(fit.std_errors[1] > 1e6);
    }
}
