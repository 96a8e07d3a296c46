//! Composite Gauss–Legendre quadrature over the ordered simplex
//! `0 ≤ tn ≤ … ≤ t1 ≤ T`, weighted by a piecewise-constant field.
//!
//! Panels are aligned with the field's segment boundaries so the field is
//! constant on every panel; the integrand itself only needs to be smooth.
//! This is the independent cross-check for the closed forms in
//! [`super::closed_form`].

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::dynamics::PiecewiseControl;
use crate::error::{Error, Result};

/// Successive estimates are compared until they agree: first a 6-point and
/// an 8-point rule on one panel per segment, then 8-point rules with the
/// panel count doubling.
const COARSE_ORDER: usize = 6;
const FINE_ORDER: usize = 8;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_BUDGET: usize = 1_000_000;

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss–Legendre rule on [-1, 1] by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn rule(order: usize) -> &'static Rule {
    static COARSE: OnceLock<Rule> = OnceLock::new();
    static FINE: OnceLock<Rule> = OnceLock::new();
    match order {
        COARSE_ORDER => COARSE.get_or_init(|| gauss_legendre(COARSE_ORDER)),
        FINE_ORDER => FINE.get_or_init(|| gauss_legendre(FINE_ORDER)),
        _ => unreachable!("only the two cached rules are used"),
    }
}

struct Nested<'a, F> {
    bounds: Vec<f64>,
    amplitudes: Vec<f64>,
    order: usize,
    panels: usize,
    rule: &'static Rule,
    integrand: &'a F,
    evaluations: usize,
    times: Vec<f64>,
}

impl<F: Fn(&[f64]) -> Complex64> Nested<'_, F> {
    fn level(&mut self, depth: usize, upper: f64) -> Complex64 {
        let rule = self.rule;
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..self.amplitudes.len() {
            let amp = self.amplitudes[k];
            let a = self.bounds[k];
            if a >= upper {
                break;
            }
            if amp == 0.0 {
                continue;
            }
            let b = self.bounds[k + 1].min(upper);
            let h = (b - a) / self.panels as f64;
            for p in 0..self.panels {
                let lo = a + p as f64 * h;
                let half = 0.5 * h;
                let mid = lo + half;
                let mut panel = Complex64::new(0.0, 0.0);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    let t = mid + half * x;
                    self.times.push(t);
                    let v = if depth + 1 == self.order {
                        self.evaluations += 1;
                        (self.integrand)(&self.times)
                    } else {
                        self.level(depth + 1, t)
                    };
                    self.times.pop();
                    panel += v * *w;
                }
                total += panel * (half * amp);
            }
        }
        total
    }
}

/// `∫_{0≤tn≤…≤t1≤T} Π_j δε(t_j) · f(t1, …, tn)` to absolute tolerance
/// `tol`, refining panels until two successive estimates agree or the
/// evaluation budget is exhausted.
pub fn ordered_quadrature<F>(
    control: &PiecewiseControl,
    order: usize,
    integrand: &F,
    tol: f64,
    budget: usize,
) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64,
{
    assert!(order >= 1, "quadrature order must be at least 1");
    let mut state = Nested {
        bounds: control.boundaries(),
        amplitudes: control.amplitudes(),
        order,
        panels: 1,
        rule: rule(COARSE_ORDER),
        integrand,
        evaluations: 0,
        times: Vec::with_capacity(order),
    };
    let upper = control.total_time();
    let mut previous = state.level(0, upper);
    loop {
        if state.rule.nodes.len() == COARSE_ORDER {
            state.rule = rule(FINE_ORDER);
        } else {
            state.panels *= 2;
        }
        let current = state.level(0, upper);
        let change = (current - previous).norm();
        if change <= tol {
            return Ok(current);
        }
        if state.evaluations > budget {
            return Err(Error::QuadratureBudgetExceeded { tol, budget, achieved: change });
        }
        previous = current;
    }
}
