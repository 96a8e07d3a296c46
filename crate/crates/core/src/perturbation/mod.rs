//! Dyson-series analysis of the `ε(t) = 0` critical point.
//!
//! Around zero field the evolution operator expands as
//!
//! ```text
//! U_T = e^{-iTH0} (I + Σ_n (-i)^n ∫…∫_{t1≥…≥tn} δε(t1)…δε(tn) V_t1 … V_tn)
//! ```
//!
//! with `V_t = e^{itH0} V e^{-itH0}`. The terms of `⟨3|U_T|1⟩` are
//! `A1, A2, A3` and the leading term of `⟨2|U_T|1⟩` is `B2`; the objective
//! change is then
//!
//! ```text
//! δJ = -λ|A1|² + |B2|² - 2λ Re(A1* A3) + O(δε⁶)
//! ```
//!
//! A field with no spectral weight at `ω1` kills `A1`, leaving the positive
//! quartic term `|B2|²`; [`escape_pulse`] builds the simplest such field.
//!
//! `A1`, `A3`, `B2` and the spectral amplitudes are evaluated in closed form
//! on each segment. `A2` is evaluated by nested quadrature of the actual
//! matrix element so its vanishing is observed rather than assumed.

pub mod closed_form;
pub mod quadrature;

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{LambdaSystem, PiecewiseControl, Segment, NUM_LEVELS};
use crate::error::{Error, Result};

pub use closed_form::ordered_integral;
pub use quadrature::ordered_quadrature;

/// Dyson terms of the two matrix elements that fix `J` near zero field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerms {
    pub a1: Complex64,
    pub a2: Complex64,
    pub a3: Complex64,
    pub b2: Complex64,
    pub delta_j_predicted: f64,
}

fn minus_i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

fn check_level(level: usize) -> Result<()> {
    if (1..=NUM_LEVELS).contains(&level) {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { level, dim: NUM_LEVELS })
    }
}

/// `(-i)^n e^{-iTε_f}`
fn prefactor(system: &LambdaSystem, control: &PiecewiseControl, target: usize, order: usize) -> Complex64 {
    let phase = Complex64::from_polar(1.0, -control.total_time() * system.energies()[target - 1]);
    minus_i_pow(order) * phase
}

/// Order-`n` Dyson term of `⟨target|U_T|initial⟩` in closed form.
///
/// The matrix element `⟨f|V_t1 … V_tn|i⟩` is expanded over intermediate
/// levels; each path contributes `Π V_{k(j-1) k(j)} e^{i t_j (ε_k(j-1) - ε_k(j))}`,
/// integrated exactly by [`ordered_integral`]. Paths through a zero
/// coupling entry are dropped.
pub fn dyson_term(system: &LambdaSystem, control: &PiecewiseControl, target: usize, order: usize) -> Result<Complex64> {
    check_level(target)?;
    if order == 0 {
        let delta = if target == system.initial_level() { 1.0 } else { 0.0 };
        return Ok(prefactor(system, control, target, 0) * delta);
    }
    let v = system.coupling();
    let e = system.energies();
    let initial = system.initial_level() - 1;
    let mut path = vec![0usize; order + 1];
    path[0] = target - 1;
    path[order] = initial;

    let mut sum = Complex64::new(0.0, 0.0);
    let intermediates = NUM_LEVELS.pow((order - 1) as u32);
    let mut freqs = vec![0.0; order];
    for code in 0..intermediates {
        let mut rest = code;
        for slot in path.iter_mut().take(order).skip(1) {
            *slot = rest % NUM_LEVELS;
            rest /= NUM_LEVELS;
        }
        let mut weight = Complex64::new(1.0, 0.0);
        for j in 0..order {
            weight *= v[(path[j], path[j + 1])];
            freqs[j] = e[path[j]] - e[path[j + 1]];
        }
        if weight == Complex64::new(0.0, 0.0) {
            continue;
        }
        sum += weight * ordered_integral(control, &freqs);
    }
    Ok(prefactor(system, control, target, order) * sum)
}

/// Same term as [`dyson_term`], by nested quadrature of the matrix element
/// `⟨target|V_t1 … V_tn|initial⟩` built from the interaction-picture
/// coupling matrices.
pub fn dyson_term_quadrature(
    system: &LambdaSystem,
    control: &PiecewiseControl,
    target: usize,
    order: usize,
    tol: f64,
    budget: usize,
) -> Result<Complex64> {
    check_level(target)?;
    assert!(order >= 1);
    let initial = system.initial_level() - 1;
    let v = system.coupling();
    let e = system.energies();
    let element = |times: &[f64]| {
        // row vector ⟨target| V_t1 V_t2 …, with (V_t)_jk = V_jk e^{it(ε_j - ε_k)}
        let mut row = [Complex64::new(0.0, 0.0); NUM_LEVELS];
        row[target - 1] = Complex64::new(1.0, 0.0);
        for &t in times {
            let phases = e.map(|x| Complex64::from_polar(1.0, t * x));
            let mut next = [Complex64::new(0.0, 0.0); NUM_LEVELS];
            for (k, slot) in next.iter_mut().enumerate() {
                *slot = (0..NUM_LEVELS).map(|j| row[j] * phases[j] * v[(j, k)]).sum::<Complex64>() * phases[k].conj();
            }
            row = next;
        }
        row[initial]
    };
    let integral = ordered_quadrature(control, order, &element, tol, budget)?;
    Ok(prefactor(system, control, target, order) * integral)
}

/// `A1 = -i V31 e^{-iTε3} ∫ δε(t) e^{iω1 t} dt`
pub fn dyson_a1(system: &LambdaSystem, control: &PiecewiseControl) -> Complex64 {
    dyson_term(system, control, 3, 1).expect("level 3 exists")
}

/// `A2`, by nested quadrature (absolute tolerance 1e-10). Identically zero
/// for a valid Λ-system since `⟨3|V_t1 V_t2|1⟩ = 0`.
pub fn dyson_a2(system: &LambdaSystem, control: &PiecewiseControl) -> Result<Complex64> {
    dyson_term_quadrature(system, control, 3, 2, quadrature::DEFAULT_TOL, quadrature::DEFAULT_BUDGET)
}

/// `A3 = i e^{-iTε3} ∫∫∫ δε δε δε ⟨3|V_t1 V_t2 V_t3|1⟩`
pub fn dyson_a3(system: &LambdaSystem, control: &PiecewiseControl) -> Complex64 {
    dyson_term(system, control, 3, 3).expect("level 3 exists")
}

/// `A3` by composite Gauss–Legendre quadrature.
pub fn dyson_a3_quadrature(system: &LambdaSystem, control: &PiecewiseControl) -> Result<Complex64> {
    dyson_term_quadrature(system, control, 3, 3, quadrature::DEFAULT_TOL, quadrature::DEFAULT_BUDGET)
}

/// `B2 = -e^{-iTε2} ∫∫ δε δε ⟨2|V_t1 V_t2|1⟩`
pub fn dyson_b2(system: &LambdaSystem, control: &PiecewiseControl) -> Complex64 {
    dyson_term(system, control, 2, 2).expect("level 2 exists")
}

/// Assembles the Dyson terms and the predicted objective change
/// `δJ = J(δε) - J(0)`, scaled back to the system's own observable.
pub fn predict_delta_j(system: &LambdaSystem, control: &PiecewiseControl) -> Result<PerturbationTerms> {
    let a1 = dyson_a1(system, control);
    let a2 = dyson_a2(system, control)?;
    let a3 = dyson_a3(system, control);
    let b2 = dyson_b2(system, control);
    let lambda = system.penalty();
    let [l1, l2, _] = system.observable();
    let normalized = -lambda * a1.norm_sqr() + b2.norm_sqr() - 2.0 * lambda * (a1.conj() * a3).re;
    Ok(PerturbationTerms { a1, a2, a3, b2, delta_j_predicted: (l2 - l1) * normalized })
}

/// `T' = 2π / ω1`
pub fn escape_switch_time(system: &LambdaSystem) -> f64 {
    TAU / system.transition_frequencies().0
}

/// `δε(t) = α χ_[0, T'](t)` on `[0, T]` with `T' = 2π/ω1`: a full period
/// of the 1→3 transition, so the first-order amplitude vanishes.
pub fn escape_pulse(system: &LambdaSystem, alpha: f64, horizon: f64) -> Result<PiecewiseControl> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidControl(format!("escape pulse amplitude must be > 0, got {alpha}")));
    }
    let switch_time = escape_switch_time(system);
    if horizon < switch_time {
        return Err(Error::HorizonTooShort { horizon, switch_time });
    }
    let mut segments = vec![Segment { duration: switch_time, amplitude: alpha }];
    let rest = horizon - switch_time;
    if rest > 0.0 {
        segments.push(Segment { duration: rest, amplitude: 0.0 });
    }
    PiecewiseControl::new(segments)
}

/// `∫_0^T e^{iωt} δε(t) dt`
pub fn first_order_amplitude(control: &PiecewiseControl, omega: f64) -> Complex64 {
    ordered_integral(control, &[omega])
}

/// `∫_0^T dt1 e^{iω1 t1} δε(t1) ∫_0^t1 dt2 e^{-iω2 t2} δε(t2)`
pub fn second_order_amplitude(control: &PiecewiseControl, omega1: f64, omega2: f64) -> Complex64 {
    ordered_integral(control, &[omega1, -omega2])
}
