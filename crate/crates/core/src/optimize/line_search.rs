//! Strong-Wolfe line search (bracket, then zoom with safeguarded cubic
//! interpolation) for minimizing `φ(α) = f(x + α p)`.

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchParams {
    pub c1: f64,
    pub c2: f64,
    pub initial_step: f64,
    pub max_bracket: usize,
    pub max_zoom: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self { c1: 1e-4, c2: 0.9, initial_step: 1.0, max_bracket: 25, max_zoom: 40 }
    }
}

/// A trial step with `φ`, `φ'` and whatever payload the caller attached
/// (typically the full gradient).
#[derive(Clone, Debug, PartialEq)]
pub struct LinePoint<G> {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
    pub payload: G,
}

/// Minimizer of the cubic through `(x1, f1, g1)` and `(x2, f2, g2)`,
/// clamped to the interval; falls back to bisection when the cubic has no
/// real minimizer.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let sq = d1 * d1 - g1 * g2;
    if sq >= 0.0 {
        let d2 = sq.sqrt() * (x2 - x1).signum();
        let x = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
        if x.is_finite() {
            return x.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

/// Returns a step satisfying the strong Wolfe conditions, or `None` when
/// the search fails. `phi0` and `slope0 < 0` describe `α = 0`.
///
/// If zooming runs out of iterations, the best bracketed point is still
/// returned provided it gives sufficient decrease.
pub fn strong_wolfe<G, F>(
    mut eval: F,
    phi0: f64,
    slope0: f64,
    params: &LineSearchParams,
) -> Result<Option<LinePoint<G>>>
where
    F: FnMut(f64) -> Result<(f64, f64, G)>,
{
    if !(slope0 < 0.0) {
        return Ok(None);
    }
    let mut search = Search { eval: &mut eval, phi0, slope0, params };
    let origin = LinePoint { alpha: 0.0, value: phi0, slope: slope0, payload: None };

    let mut prev = origin;
    let mut alpha = params.initial_step;
    for i in 0..params.max_bracket {
        let cur = search.probe(alpha)?;
        if !cur.value.is_finite() || !cur.slope.is_finite() {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if !search.armijo(&cur) || (i > 0 && cur.value >= prev.value) {
            return search.zoom(prev, cur);
        }
        if search.curvature(&cur) {
            return Ok(cur.into_found());
        }
        if cur.slope >= 0.0 {
            return search.zoom(cur, prev);
        }
        alpha = 2.0 * cur.alpha;
        prev = cur;
    }
    Ok(prev.into_found())
}

impl<G> LinePoint<Option<G>> {
    fn into_found(self) -> Option<LinePoint<G>> {
        let LinePoint { alpha, value, slope, payload } = self;
        payload.map(|payload| LinePoint { alpha, value, slope, payload })
    }
}

struct Search<'a, F> {
    eval: &'a mut F,
    phi0: f64,
    slope0: f64,
    params: &'a LineSearchParams,
}

impl<F> Search<'_, F> {
    fn probe<G>(&mut self, alpha: f64) -> Result<LinePoint<Option<G>>>
    where
        F: FnMut(f64) -> Result<(f64, f64, G)>,
    {
        let (value, slope, payload) = (self.eval)(alpha)?;
        Ok(LinePoint { alpha, value, slope, payload: Some(payload) })
    }

    fn armijo<G>(&self, p: &LinePoint<G>) -> bool {
        p.value <= self.phi0 + self.params.c1 * p.alpha * self.slope0
    }

    fn curvature<G>(&self, p: &LinePoint<G>) -> bool {
        p.slope.abs() <= -self.params.c2 * self.slope0
    }

    /// `lo` has the lower value and satisfies Armijo; the minimizer lies
    /// between `lo` and `hi`.
    fn zoom<G>(&mut self, mut lo: LinePoint<Option<G>>, mut hi: LinePoint<Option<G>>) -> Result<Option<LinePoint<G>>>
    where
        F: FnMut(f64) -> Result<(f64, f64, G)>,
    {
        for _ in 0..self.params.max_zoom {
            let width = (hi.alpha - lo.alpha).abs();
            if width <= 1e-14 * lo.alpha.abs().max(hi.alpha.abs()).max(1e-300) {
                break;
            }
            let (a, b) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
            let mut alpha = if hi.value.is_finite() && hi.slope.is_finite() {
                cubic_interpolate(lo.alpha, lo.value, lo.slope, hi.alpha, hi.value, hi.slope)
            } else {
                0.5 * (a + b)
            };
            // keep the trial away from the ends of the bracket
            let margin = 0.1 * (b - a);
            if alpha < a + margin || alpha > b - margin {
                alpha = 0.5 * (a + b);
            }
            let cur = self.probe(alpha)?;
            if !cur.value.is_finite() || !self.armijo(&cur) || cur.value >= lo.value {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Ok(cur.into_found());
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        Ok(lo.into_found())
    }
}
