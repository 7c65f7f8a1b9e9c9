//! Box-constrained Levenberg-Marquardt.
//!
//! Variables sitting on a bound whose gradient points outward are frozen
//! for the iteration; the damped Gauss-Newton system is solved for the rest
//! and the trial point is projected back into the box. Damping uses
//! Marquardt's diagonal scaling with Nielsen's update rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A residual vector `r(x)` with its Jacobian.
pub trait LeastSquares {
    fn params(&self) -> usize;
    fn residuals(&self) -> usize;
    fn eval(&self, x: &[f64], r: &mut [f64]);
    fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// Bound on the cosine between the residual and any free Jacobian column.
    pub gradient_tol: f64,
    /// Bound on `||dx|| / (||x|| + step_tol)`.
    pub step_tol: f64,
    /// Bound on the relative cost decrease of an accepted step.
    pub cost_tol: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroResidual,
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// Damping grew without finding a decrease.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub fn minimize<P: LeastSquares>(
    problem: &P,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    s: &Settings,
) -> Result<Outcome> {
    let n = problem.params();
    let m = problem.residuals();
    debug_assert_eq!(x0.len(), n);

    let mut x: Vec<f64> = (0..n).map(|i| x0[i].clamp(lo[i], hi[i])).collect();
    let mut r = vec![0.0; m];
    problem.eval(&x, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::domain("cost is not finite at the starting point"));
    }
    let initial_cost = cost;
    let mut jac = DMatrix::zeros(m, n);
    problem.jacobian(&x, &mut jac);

    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut damping: Option<f64> = None;
    let mut nu = 2.0;
    let mut iterations = 0;
    // normal equations are only rebuilt after an accepted step
    let mut normal: Option<(DMatrix<f64>, DVector<f64>)> = None;

    let termination = loop {
        if cost == 0.0 {
            break Termination::ZeroResidual;
        }
        if iterations >= s.max_iterations {
            break Termination::MaxIterations;
        }
        let (a, g) = normal.get_or_insert_with(|| {
            let rv = DVector::from_column_slice(&r);
            (jac.tr_mul(&jac), jac.tr_mul(&rv))
        });

        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let rnorm = cost.sqrt();
        let cosine = free
            .iter()
            .filter(|&&i| a[(i, i)] > 0.0)
            .map(|&i| g[i].abs() / (a[(i, i)].sqrt() * rnorm))
            .fold(0.0, f64::max);
        if free.is_empty() || cosine <= s.gradient_tol {
            break Termination::Gradient;
        }

        let max_diag = free.iter().map(|&i| a[(i, i)]).fold(0.0, f64::max);
        let floor = if max_diag > 0.0 {
            1e-12 * max_diag
        } else {
            1.0
        };
        let lambda = *damping.get_or_insert(1e-3);
        iterations += 1;

        let k = free.len();
        let mut sys = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (p, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                sys[(p, q)] = a[(i, j)];
            }
            sys[(p, p)] += lambda * a[(i, i)].max(floor);
            rhs[p] = -g[i];
        }
        let Some(chol) = sys.cholesky() else {
            damping = Some(lambda * nu);
            nu *= 2.0;
            continue;
        };
        let delta = chol.solve(&rhs);

        trial.copy_from_slice(&x);
        for (p, &i) in free.iter().enumerate() {
            trial[i] = (x[i] + delta[p]).clamp(lo[i], hi[i]);
        }
        let step: Vec<f64> = trial.iter().zip(&x).map(|(t, xi)| t - xi).collect();
        let step_norm = sum_sq(&step).sqrt();
        let x_norm = sum_sq(&x).sqrt();
        if step_norm <= s.step_tol * (x_norm + s.step_tol) {
            break Termination::Step;
        }

        let jd = &jac * DVector::from_column_slice(&step);
        let predicted =
            -(2.0 * jd.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + jd.norm_squared());

        problem.eval(&trial, &mut r_trial);
        let trial_cost = sum_sq(&r_trial);

        if trial_cost.is_finite() && trial_cost < cost {
            let rho = (cost - trial_cost) / predicted.max(f64::MIN_POSITIVE);
            let factor = (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            damping = Some(lambda * factor);
            nu = 2.0;
            let relative_drop = (cost - trial_cost) / cost;
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut r, &mut r_trial);
            cost = trial_cost;
            problem.jacobian(&x, &mut jac);
            normal = None;
            if relative_drop <= s.cost_tol {
                break Termination::Cost;
            }
        } else {
            let next = lambda * nu;
            if !next.is_finite() || next > 1e300 {
                break Termination::Stalled;
            }
            damping = Some(next);
            nu *= 2.0;
        }
    };

    Ok(Outcome {
        x,
        residuals: r,
        cost,
        initial_cost,
        iterations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals (1 - x, 10 (y - x^2)).
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn params(&self) -> usize {
            2
        }
        fn residuals(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], r: &mut [f64]) {
            r[0] = 1.0 - x[0];
            r[1] = 10.0 * (x[1] - x[0] * x[0]);
        }
        fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
            jac[(0, 0)] = -1.0;
            jac[(0, 1)] = 0.0;
            jac[(1, 0)] = -20.0 * x[0];
            jac[(1, 1)] = 10.0;
        }
    }

    fn settings() -> Settings {
        Settings {
            gradient_tol: 1e-12,
            step_tol: 1e-14,
            cost_tol: 1e-16,
            max_iterations: 200,
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let inf = f64::INFINITY;
        let out = minimize(
            &Rosenbrock,
            &[-1.2, 1.0],
            &[-inf, -inf],
            &[inf, inf],
            &settings(),
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8, "{:?}", out);
        assert!((out.x[1] - 1.0).abs() < 1e-8);
        assert!(out.cost <= out.initial_cost);
    }

    #[test]
    fn stops_on_active_bound() {
        let inf = f64::INFINITY;
        let out = minimize(
            &Rosenbrock,
            &[0.0, 0.0],
            &[-inf, -inf],
            &[0.5, inf],
            &settings(),
        )
        .unwrap();
        assert_eq!(out.x[0], 0.5);
        assert!((out.x[1] - 0.25).abs() < 1e-8);
        assert!(matches!(
            out.termination,
            Termination::Gradient | Termination::Step | Termination::Cost
        ));
    }
}
