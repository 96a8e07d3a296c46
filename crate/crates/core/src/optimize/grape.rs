//! Fixed-step gradient ascent.

use super::{l2_norm, Landscape, OptimizerConfig, Termination, Trace, TrajectoryPoint};
use crate::error::Result;

/// `x ← x + step · ∇J(x)` until `J ≥ 1 - I_err` or `max_iterations`
/// updates have been taken. The trajectory holds one entry per evaluated
/// point, starting at iteration 0.
pub fn grape<L: Landscape + ?Sized>(landscape: &L, config: &OptimizerConfig, x0: &[f64]) -> Result<Trace> {
    config.validate()?;
    let target = config.target();
    let mut x = x0.to_vec();
    let mut trajectory = Vec::new();
    let mut iteration = 0;
    loop {
        let (j, grad) = landscape.evaluate(&x)?;
        trajectory.push(TrajectoryPoint { iteration, objective: j, grad_norm: l2_norm(&grad) });
        let termination = if j >= target {
            Some(Termination::ObjectiveReached)
        } else if iteration >= config.max_iterations {
            Some(Termination::IterationCap)
        } else {
            None
        };
        if let Some(termination) = termination {
            return Ok(Trace {
                trajectory,
                final_point: x,
                final_objective: j,
                iterations_used: iteration,
                termination,
            });
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi += config.step * gi;
        }
        iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::Method;

    #[test]
    fn concave_quadratic_converges_geometrically() {
        // J = 1 - |x - a|^2, gradient -2 (x - a); step 0.25 halves the error
        let a = [0.3, -0.7, 1.1];
        let f = |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&a).map(|(x, a)| x - a).collect();
            Ok((1.0 - d.iter().map(|v| v * v).sum::<f64>(), d.iter().map(|v| -2.0 * v).collect()))
        };
        let cfg = OptimizerConfig {
            method: Method::Grape,
            step: 0.25,
            max_iterations: 100,
            objective_tolerance: 1e-12,
            grad_tol: 1e-6,
        };
        let trace = grape(&f, &cfg, &[0.0; 3]).unwrap();
        assert_eq!(trace.termination, Termination::ObjectiveReached);
        let err0: f64 = a.iter().map(|v| v * v).sum();
        // error after k steps is err0 / 4^k
        let expected_k = ((err0 / 1e-12).ln() / 4f64.ln()).ceil() as usize;
        assert_eq!(trace.iterations_used, expected_k);
    }
}
