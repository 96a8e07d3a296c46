//! Quasi-Newton ascent: BFGS on `-J` with a dense inverse-Hessian
//! approximation and a strong-Wolfe line search.

use super::line_search::{strong_wolfe, LineSearchParams};
use super::{dot, l2_norm, Landscape, OptimizerConfig, Termination, Trace, TrajectoryPoint};
use crate::error::Result;

/// Skip the update when `sᵀy` is below this fraction of `‖s‖‖y‖`.
const CURVATURE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsOutcome {
    pub trace: Trace,
    /// Final inverse-Hessian approximation of `-J`, row-major.
    pub inverse_hessian: Vec<f64>,
    pub skipped_updates: usize,
    pub resets: usize,
}

/// `H⁺ = (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / sᵀy`.
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = scale;
    }
    h
}

/// One iteration is one line search plus update; the trajectory holds the
/// starting point and every accepted iterate.
pub fn bfgs<L: Landscape + ?Sized>(landscape: &L, config: &OptimizerConfig, x0: &[f64]) -> Result<BfgsOutcome> {
    config.validate()?;
    let n = x0.len();
    let target = config.target();
    let params = LineSearchParams::default();

    let mut x = x0.to_vec();
    let (mut j, grad_j) = landscape.evaluate(&x)?;
    // minimize f = -J
    let mut g: Vec<f64> = grad_j.iter().map(|v| -v).collect();
    let mut h = identity(n, 1.0);
    let mut scaled = false;
    let mut skipped_updates = 0;
    let mut resets = 0;
    let mut trajectory = Vec::new();
    let mut iteration = 0;

    let termination = loop {
        trajectory.push(TrajectoryPoint { iteration, objective: j, grad_norm: l2_norm(&g) });
        if j >= target {
            break Termination::ObjectiveReached;
        }
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.grad_tol {
            break Termination::GradientStalled;
        }
        if iteration >= config.max_iterations {
            break Termination::IterationCap;
        }

        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope0 = dot(&g, &p);
        if !(slope0 < 0.0) {
            h = identity(n, 1.0);
            scaled = false;
            resets += 1;
            p = g.iter().map(|v| -v).collect();
            slope0 = dot(&g, &p);
        }

        let mut trial = vec![0.0; n];
        let found = strong_wolfe(
            |alpha| {
                for i in 0..n {
                    trial[i] = x[i] + alpha * p[i];
                }
                let (jt, gt) = landscape.evaluate(&trial)?;
                let gt: Vec<f64> = gt.iter().map(|v| -v).collect();
                Ok((-jt, dot(&gt, &p), gt))
            },
            -j,
            slope0,
            &params,
        )?;
        let Some(point) = found else {
            break Termination::GradientStalled;
        };

        let s: Vec<f64> = p.iter().map(|v| point.alpha * v).collect();
        let y: Vec<f64> = point.payload.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > CURVATURE_EPS * l2_norm(&s) * l2_norm(&y) {
            if !scaled {
                h = identity(n, sy / dot(&y, &y));
                scaled = true;
            }
            update_inverse_hessian(&mut h, &s, &y, sy);
        } else {
            skipped_updates += 1;
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        j = -point.value;
        g = point.payload;
        iteration += 1;
    };

    Ok(BfgsOutcome {
        trace: Trace { trajectory, final_point: x, final_objective: j, iterations_used: iteration, termination },
        inverse_hessian: h,
        skipped_updates,
        resets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::Method;
    use proptest::prelude::*;

    fn config(max_iterations: usize, tol: f64) -> OptimizerConfig {
        OptimizerConfig { method: Method::Bfgs, step: 0.1, max_iterations, objective_tolerance: tol, grad_tol: 1e-12 }
    }

    /// `J = 1 - ½ (x - a)ᵀ A (x - a)` with `A = diag(d)`.
    fn quadratic(d: Vec<f64>, a: Vec<f64>) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let r: Vec<f64> = x.iter().zip(&a).map(|(x, a)| x - a).collect();
            let q: f64 = r.iter().zip(&d).map(|(r, d)| d * r * r).sum();
            Ok((1.0 - 0.5 * q, r.iter().zip(&d).map(|(r, d)| -d * r).collect()))
        }
    }

    fn is_positive_definite(h: &[f64], n: usize) -> bool {
        // Cholesky
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                if i == j {
                    let d = h[i * n + i] - s;
                    if d <= 0.0 {
                        return false;
                    }
                    l[i * n + i] = d.sqrt();
                } else {
                    l[i * n + j] = (h[i * n + j] - s) / l[j * n + j];
                }
            }
        }
        true
    }

    #[test]
    fn update_satisfies_secant_condition() {
        let n = 4;
        let mut h = identity(n, 1.0);
        let s = [0.3, -0.2, 0.5, 0.1];
        let y = [0.6, -0.1, 0.9, 0.4];
        let sy = dot(&s, &y);
        update_inverse_hessian(&mut h, &s, &y, sy);
        let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
        for i in 0..n {
            assert!((hy[i] - s[i]).abs() < 1e-14);
        }
        assert!(is_positive_definite(&h, n));
    }

    #[test]
    fn quadratic_converges_within_dimension_plus_five() {
        let n = 200;
        let d: Vec<f64> = (0..n).map(|i| 0.5 + 3.0 * (i as f64 / n as f64)).collect();
        let a: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        let out = bfgs(&quadratic(d, a), &config(n + 5, 1e-12), &vec![0.0; n]).unwrap();
        assert_eq!(out.trace.termination, Termination::ObjectiveReached);
        assert!(out.trace.iterations_used <= n + 5, "{}", out.trace.iterations_used);
    }

    #[test]
    fn ill_conditioned_quadratic_recovers_hessian() {
        let d = vec![1e-2, 1.0, 30.0];
        let out = bfgs(&quadratic(d.clone(), vec![1.0, -2.0, 0.5]), &config(50, 1e-14), &[0.0; 3]).unwrap();
        assert_eq!(out.trace.termination, Termination::ObjectiveReached);
        assert!(out.trace.iterations_used <= 10);
    }

    #[test]
    fn zero_gradient_start_stalls() {
        let out = bfgs(&quadratic(vec![1.0; 3], vec![0.0; 3]), &config(10, 1e-12), &[0.0; 3]).unwrap();
        // J = 1 exactly, so success takes precedence
        assert_eq!(out.trace.termination, Termination::ObjectiveReached);
        let flat = |_: &[f64]| Ok((0.0, vec![0.0; 3]));
        let out = bfgs(&flat, &config(10, 0.1), &[1.0; 3]).unwrap();
        assert_eq!(out.trace.termination, Termination::GradientStalled);
        assert_eq!(out.trace.iterations_used, 0);
    }

    #[test]
    fn unbounded_direction_hits_cap_or_stalls() {
        // J = 0.5 sin(x): never reaches 1 - I_err for small I_err
        let f = |x: &[f64]| Ok((0.5 * x[0].sin(), vec![0.5 * x[0].cos()]));
        let out = bfgs(&f, &config(20, 1e-3), &[0.1]).unwrap();
        assert_ne!(out.trace.termination, Termination::ObjectiveReached);
        let last = out.trace.trajectory.last().unwrap();
        assert!((last.objective - 0.5).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn inverse_hessian_stays_positive_definite(
            d in proptest::collection::vec(0.1f64..10.0, 2..8),
            seed in proptest::collection::vec(-2.0f64..2.0, 8),
            k in 1usize..6,
        ) {
            let n = d.len();
            let a = seed[..n].to_vec();
            // quartic perturbation keeps the problem non-quadratic
            let f = move |x: &[f64]| {
                let (j, mut g) = quadratic(d.clone(), a.clone())(x)?;
                let q: f64 = x.iter().map(|v| v.powi(4)).sum();
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi -= 0.1 * xi.powi(3);
                }
                Ok((j - 0.025 * q, g))
            };
            let out = bfgs(&f, &config(k, 1e-14), &vec![0.0; n]).unwrap();
            prop_assert!(is_positive_definite(&out.inverse_hessian, n));
            for w in out.trace.trajectory.windows(2) {
                prop_assert!(w[1].objective >= w[0].objective);
            }
        }
    }
}
