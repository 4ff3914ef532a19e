//! Limited-memory BFGS ascent with a backtracking line search.
//!
//! Used for every marginal-likelihood fit in the crate. The objective returns
//! its value and gradient; an `Err` from the objective during a line search is
//! treated as an infeasible trial point and the step is shortened.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop once the gradient infinity-norm falls below this.
    pub gradient_tolerance: f64,
    /// Number of correction pairs kept.
    pub history: usize,
    /// Cap on the infinity-norm of a single step.
    pub max_step: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            history: 10,
            max_step: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimStatus {
    Converged,
    MaxIterations,
    /// No step along the search direction improved the objective.
    LineSearchStalled,
    /// The objective became non-finite; the last finite iterate is kept.
    NonFinite,
    /// Optimization was switched off; the initial point is returned.
    Disabled,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: OptimStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Maximizes `objective` from `x0`.
///
/// Fails only when the objective cannot be evaluated at `x0`.
pub fn maximize<F>(mut objective: F, x0: Vec<f64>, settings: &OptimizerSettings) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (mut fx, mut gx) = objective(&x0)?;
    if !fx.is_finite() || gx.iter().any(|g| !g.is_finite()) {
        return Err(GpError::NonFinite { params: x0 });
    }
    let mut x = x0;
    let mut evaluations = 1;
    // Pairs (s, y, 1/(yᵀs)) for the minimization form: g_min = −g.
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut status = OptimStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        if inf_norm(&gx) < settings.gradient_tolerance {
            status = OptimStatus::Converged;
            break;
        }
        // Two-loop recursion on the descent problem (minimize −f).
        let mut q: Vec<f64> = gx.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match memory.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(&gx).max(1.0),
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        // Ascent direction.
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&gx, &dir);
        if !(slope > 0.0) {
            memory.clear();
            dir = gx.clone();
            slope = dot(&gx, &dir);
        }

        let mut step = 1.0;
        let dmax = inf_norm(&dir);
        if dmax * step > settings.max_step {
            step = settings.max_step / dmax;
        }

        let mut accepted = None;
        let mut saw_non_finite = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            evaluations += 1;
            match objective(&trial) {
                Ok((ft, gt)) if ft.is_finite() && gt.iter().all(|g| g.is_finite()) => {
                    if ft >= fx + 1e-4 * step * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                Ok(_) | Err(GpError::NonFinite { .. }) | Err(GpError::Factorization { .. }) => {
                    saw_non_finite = true;
                }
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        iterations += 1;

        let Some((xn, fnew, gnew)) = accepted else {
            status = if saw_non_finite {
                OptimStatus::NonFinite
            } else {
                OptimStatus::LineSearchStalled
            };
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Minimization-form gradient difference.
        let y: Vec<f64> = gnew.iter().zip(&gx).map(|(a, b)| -(a - b)).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if memory.len() == settings.history {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnew;
        gx = gnew;
    }
    if status == OptimStatus::MaxIterations && inf_norm(&gx) < settings.gradient_tolerance {
        status = OptimStatus::Converged;
    }

    Ok(OptimResult {
        x,
        value: fx,
        gradient: gx,
        iterations,
        evaluations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn concave_quadratic_converges() {
        let target = [1.0, -2.0, 3.0];
        let res = maximize(
            |x| {
                let v = -x.iter().zip(&target).map(|(a, b)| (a - b).powi(2) * 2.0).sum::<f64>();
                let g = x.iter().zip(&target).map(|(a, b)| -4.0 * (a - b)).collect();
                Ok((v, g))
            },
            vec![0.0; 3],
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        for (a, b) in res.x.iter().zip(&target) {
            assert_relative_eq!(a, b, epsilon = 1e-5);
        }
    }

    #[test]
    fn negative_rosenbrock() {
        let res = maximize(
            |x| {
                let (a, b) = (x[0], x[1]);
                let f = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
                let ga = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
                let gb = -(200.0 * (b - a * a));
                Ok((f, vec![ga, gb]))
            },
            vec![-1.2, 1.0],
            &OptimizerSettings {
                max_iterations: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(res.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn infeasible_region_is_backed_out_of() {
        // log-barrier style objective undefined for x ≤ 0.
        let res = maximize(
            |x| {
                if x[0] <= 0.0 {
                    return Err(GpError::NonFinite { params: x.to_vec() });
                }
                Ok((x[0].ln() - x[0], vec![1.0 / x[0] - 1.0]))
            },
            vec![0.05],
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(res.x[0], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn bad_start_is_an_error() {
        let r = maximize(|_| Ok((f64::NAN, vec![0.0])), vec![0.0], &OptimizerSettings::default());
        assert!(r.is_err());
    }
}
