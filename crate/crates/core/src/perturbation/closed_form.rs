//! Exact time-ordered integrals of complex exponentials against a
//! piecewise-constant field.
//!
//! [`ordered_integral`] evaluates
//!
//! ```text
//! ∫_0^T dt1 ∫_0^t1 dt2 … ∫_0^t(n-1) dtn  Π_j δε(t_j) e^{i a_j t_j}
//! ```
//!
//! by carrying the running inner integral on each segment as an
//! exponential polynomial `Σ c t^p e^{iβt}`. Resonant combinations
//! (`β = 0`) produce the polynomial parts.

use num_complex::Complex64;

use crate::dynamics::PiecewiseControl;

/// Frequencies smaller than this (relative to the largest |a_j|) are
/// treated as exactly resonant.
const RESONANCE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
struct Term {
    coef: Complex64,
    power: u32,
    freq: f64,
}

#[derive(Clone, Debug, Default)]
struct ExpPoly {
    terms: Vec<Term>,
}

impl ExpPoly {
    fn constant(c: Complex64) -> Self {
        Self { terms: vec![Term { coef: c, power: 0, freq: 0.0 }] }
    }

    fn eval(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|term| term.coef * t.powi(term.power as i32) * Complex64::from_polar(1.0, term.freq * t))
            .sum()
    }

    fn push(&mut self, term: Term, zero_freq: f64) {
        let freq = if term.freq.abs() <= zero_freq { 0.0 } else { term.freq };
        if let Some(existing) = self.terms.iter_mut().find(|t| t.power == term.power && t.freq == freq) {
            existing.coef += term.coef;
        } else {
            self.terms.push(Term { freq, ..term });
        }
    }

    /// Antiderivative of `e^{iat} · self(t)` (no constant).
    fn antiderivative_times_exp(&self, a: f64, zero_freq: f64) -> Self {
        let mut out = Self::default();
        for term in &self.terms {
            let beta = term.freq + a;
            let beta = if beta.abs() <= zero_freq { 0.0 } else { beta };
            let p = term.power;
            if beta == 0.0 {
                out.push(Term { coef: term.coef / (p + 1) as f64, power: p + 1, freq: 0.0 }, zero_freq);
            } else {
                // ∫ t^p e^{iβt} = e^{iβt} Σ_k (-1)^k p!/(p-k)! t^{p-k} / (iβ)^{k+1}
                let ib = Complex64::new(0.0, beta);
                let mut falling = 1.0;
                let mut denom = ib;
                for k in 0..=p {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    out.push(Term { coef: term.coef * sign * falling / denom, power: p - k, freq: beta }, zero_freq);
                    falling *= (p - k) as f64;
                    denom *= ib;
                }
            }
        }
        out
    }
}

/// Exact ordered integral; `freqs[0]` belongs to the outermost (latest)
/// time `t1`, `freqs[n-1]` to the innermost `tn`.
pub fn ordered_integral(control: &PiecewiseControl, freqs: &[f64]) -> Complex64 {
    if freqs.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let scale = freqs.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
    let zero_freq = RESONANCE_TOL * scale;
    let bounds = control.boundaries();
    let segs = control.segments();

    // inner[k]: the running integral of the next-inner level on segment k
    // (identically 1 below the innermost variable)
    let mut inner: Vec<ExpPoly> = vec![ExpPoly::constant(Complex64::new(1.0, 0.0)); segs.len()];
    let mut final_value = Complex64::new(0.0, 0.0);

    for &a in freqs.iter().rev() {
        let mut level = Vec::with_capacity(segs.len());
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, seg) in segs.iter().enumerate() {
            let start = bounds[k];
            let mut g = ExpPoly::constant(acc);
            if seg.amplitude != 0.0 {
                let anti = inner[k].antiderivative_times_exp(a, zero_freq);
                let offset = anti.eval(start);
                for term in &anti.terms {
                    g.push(Term { coef: term.coef * seg.amplitude, ..*term }, zero_freq);
                }
                g.push(Term { coef: -offset * seg.amplitude, power: 0, freq: 0.0 }, zero_freq);
            }
            acc = g.eval(bounds[k + 1]);
            level.push(g);
        }
        final_value = acc;
        inner = level;
    }
    final_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Segment;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_exponential() {
        let ctrl = PiecewiseControl::uniform(&[2.0], 3.0).unwrap();
        let got = ordered_integral(&ctrl, &[1.3]);
        let expect = 2.0 * (Complex64::from_polar(1.0, 1.3 * 3.0) - 1.0) / c(0.0, 1.3);
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn resonant_double_is_half_square() {
        // ∫∫_{t2<t1} 1 = T^2/2 with a constant field
        let ctrl = PiecewiseControl::uniform(&[1.5, 1.5, 1.5], 2.0).unwrap();
        let res = ordered_integral(&ctrl, &[0.0, 0.0]);
        assert!((res - c(1.5 * 1.5 * 2.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn symmetric_sum_is_product_of_first_order() {
        // X(a,b) + X(b,a) = F(a) F(b)
        let ctrl = PiecewiseControl::new(vec![
            Segment { duration: 0.7, amplitude: 0.3 },
            Segment { duration: 1.1, amplitude: -1.2 },
            Segment { duration: 0.4, amplitude: 0.9 },
        ])
        .unwrap();
        let (a, b) = (2.5, -1.5);
        let lhs = ordered_integral(&ctrl, &[a, b]) + ordered_integral(&ctrl, &[b, a]);
        let rhs = ordered_integral(&ctrl, &[a]) * ordered_integral(&ctrl, &[b]);
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn fully_symmetric_triple() {
        // Σ over the 3! orderings equals the product of first-order integrals
        let ctrl = PiecewiseControl::new(vec![
            Segment { duration: 0.5, amplitude: 1.0 },
            Segment { duration: 1.5, amplitude: -0.4 },
        ])
        .unwrap();
        let f = [2.5, -2.5, 1.0];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let sum: Complex64 = perms.iter().map(|p| ordered_integral(&ctrl, &[f[p[0]], f[p[1]], f[p[2]]])).sum();
        let prod: Complex64 = f.iter().map(|&a| ordered_integral(&ctrl, &[a])).product();
        assert!((sum - prod).norm() < 1e-12, "{}", (sum - prod).norm());
    }

    #[test]
    fn zero_field_gives_zero() {
        let ctrl = PiecewiseControl::zero(4, 1.0).unwrap();
        assert_eq!(ordered_integral(&ctrl, &[1.0, 2.0]), c(0.0, 0.0));
    }
}
