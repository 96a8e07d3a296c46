//! Λ-system model and piecewise-constant propagation.
//!
//! The system is `H(t) = H0 + ε(t) V` with `H0 = diag(ε1, ε2, ε3)`. For a
//! piecewise-constant field each segment contributes an exact propagator
//! `U_k = exp(-i (H0 + c_k V) Δt_k)`, and the prefixes `W_l = U_l ⋯ U_1`
//! are kept around for the gradient.
//!
//! Levels are 1-indexed throughout the public API (`|1⟩, |2⟩, |3⟩`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm_real_symmetric3, expm_unitary3, matmul3, ComplexMatrix, Matrix3, IDENTITY3};

pub const NUM_LEVELS: usize = 3;

/// Default level energies `diag(0, 1, 2.5)`.
pub const DEFAULT_ENERGIES: [f64; 3] = [0.0, 1.0, 2.5];
pub const DEFAULT_V13: f64 = 1.0;
pub const DEFAULT_V23: f64 = 1.7;

/// Maps a raw diagonal observable `(λ1, λ2, λ3)` with `λ2 > λ1 > λ3` onto
/// `(0, 1, -λ)` through `O' = (O - λ1 I) / (λ2 - λ1)`, returning the
/// normalized triple and `λ > 0`.
pub fn normalize_observable(raw: [f64; 3]) -> Result<([f64; 3], f64)> {
    let [l1, l2, l3] = raw;
    if !(l2 > l1 && l1 > l3) {
        return Err(Error::OrderingViolation(l1, l2, l3));
    }
    let span = l2 - l1;
    let lambda = (l1 - l3) / span;
    Ok(([0.0, 1.0, -lambda], lambda))
}

/// A three-level Λ-atom with diagonal observable and pure initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSystem {
    energies: [f64; 3],
    coupling: ComplexMatrix,
    initial_level: usize,
    observable: [f64; 3],
}

impl LambdaSystem {
    /// Real Λ coupling `V13 = V31 = v13`, `V23 = V32 = v23`, initial state
    /// `|1⟩` and observable `|2⟩⟨2| - λ|3⟩⟨3|`.
    pub fn new(energies: [f64; 3], v13: f64, v23: f64, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidSystem(format!("penalty λ must be finite and >= 0, got {lambda}")));
        }
        Self::from_parts(energies, lambda_coupling(v13, v23), 1, [0.0, 1.0, -lambda])
    }

    /// The reference system: `H0 = diag(0, 1, 2.5)`, `V13 = 1`, `V23 = 1.7`.
    pub fn reference(lambda: f64) -> Result<Self> {
        Self::new(DEFAULT_ENERGIES, DEFAULT_V13, DEFAULT_V23, lambda)
    }

    /// Builds a system from a raw observable, which is kept unnormalized.
    /// The ordering `λ2 > λ1 > λ3` is still enforced.
    pub fn with_raw_observable(energies: [f64; 3], v13: f64, v23: f64, raw: [f64; 3]) -> Result<Self> {
        normalize_observable(raw)?;
        Self::from_parts(energies, lambda_coupling(v13, v23), 1, raw)
    }

    /// Fully general constructor with validation of the Λ structure.
    pub fn from_parts(
        energies: [f64; 3],
        coupling: ComplexMatrix,
        initial_level: usize,
        observable: [f64; 3],
    ) -> Result<Self> {
        let sys = Self::from_parts_unchecked(energies, coupling, initial_level, observable);
        sys.validate()?;
        Ok(sys)
    }

    /// Skips every structural check except the matrix shape. Used to build
    /// deliberately broken systems (e.g. `V12 ≠ 0`) as negative controls.
    pub fn from_parts_unchecked(
        energies: [f64; 3],
        coupling: ComplexMatrix,
        initial_level: usize,
        observable: [f64; 3],
    ) -> Self {
        assert_eq!(coupling.dim(), NUM_LEVELS, "coupling must be 3x3");
        Self { energies, coupling, initial_level, observable }
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.coupling;
        let bad = |msg: String| Err(Error::InvalidSystem(msg));
        if self.energies.iter().any(|e| !e.is_finite()) {
            return bad("energies must be finite".into());
        }
        if !v.is_hermitian(crate::linalg::HERMITIAN_TOL) {
            return bad("coupling V must be Hermitian".into());
        }
        let zero = Complex64::new(0.0, 0.0);
        if v[(0, 1)] != zero || v[(1, 0)] != zero {
            return bad("Λ structure requires V12 = V21 = 0".into());
        }
        if (0..3).any(|k| v[(k, k)] != zero) {
            return bad("Λ structure requires a zero diagonal in V".into());
        }
        if v[(0, 2)] == zero || v[(1, 2)] == zero {
            return bad("controllability requires V13 != 0 and V23 != 0".into());
        }
        let (w1, w2) = self.transition_frequencies();
        if !(w1 > 0.0 && w2 > 0.0) {
            return bad(format!("need ω1 > 0 and ω2 > 0, got ω1 = {w1}, ω2 = {w2}"));
        }
        if w1 == w2 {
            return bad("non-degeneracy requires ω1 != ω2".into());
        }
        if !(1..=NUM_LEVELS).contains(&self.initial_level) {
            return Err(Error::IndexOutOfRange { level: self.initial_level, dim: NUM_LEVELS });
        }
        if self.observable.iter().any(|x| !x.is_finite()) {
            return bad("observable must be finite".into());
        }
        Ok(())
    }

    pub(crate) fn check_hermitian(&self) -> Result<()> {
        let defect = self.coupling.hermiticity_defect();
        if defect > crate::linalg::HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect });
        }
        Ok(())
    }

    pub fn energies(&self) -> [f64; 3] {
        self.energies
    }

    pub fn coupling(&self) -> &ComplexMatrix {
        &self.coupling
    }

    /// 1-indexed.
    pub fn initial_level(&self) -> usize {
        self.initial_level
    }

    pub fn observable(&self) -> [f64; 3] {
        self.observable
    }

    /// Penalty `λ` of the normalized observable `(0, 1, -λ)`.
    pub fn penalty(&self) -> f64 {
        let [l1, l2, l3] = self.observable;
        (l1 - l3) / (l2 - l1)
    }

    /// `(ω1, ω2) = (ε3 - ε1, ε3 - ε2)`
    pub fn transition_frequencies(&self) -> (f64, f64) {
        let [e1, e2, e3] = self.energies;
        (e3 - e1, e3 - e2)
    }

    /// Copy of the system with the observable mapped onto `(0, 1, -λ)`.
    pub fn normalized(&self) -> Result<Self> {
        let (obs, _) = normalize_observable(self.observable)?;
        Ok(Self { observable: obs, ..self.clone() })
    }

    pub fn free_hamiltonian(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.energies)
    }

    /// `H0 + c V`
    pub fn hamiltonian(&self, amplitude: f64) -> ComplexMatrix {
        self.free_hamiltonian().add_scaled(&self.coupling, amplitude)
    }

    /// Interaction-picture coupling `V_t = e^{itH0} V e^{-itH0}`.
    pub fn interaction_coupling(&self, t: f64) -> ComplexMatrix {
        let mut out = self.coupling.clone();
        for j in 0..NUM_LEVELS {
            for k in 0..NUM_LEVELS {
                out[(j, k)] *= Complex64::from_polar(1.0, t * (self.energies[j] - self.energies[k]));
            }
        }
        out
    }
}

fn lambda_coupling(v13: f64, v23: f64) -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 0.0, v13], &[0.0, 0.0, v23], &[v13, v23, 0.0]])
}

/// One constant piece of a control field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub amplitude: f64,
}

/// Piecewise-constant control `ε(t) = Σ c_k χ_[t_k, t_k+1](t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct PiecewiseControl {
    segments: Vec<Segment>,
}

impl PiecewiseControl {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidControl("at least one segment is required".into()));
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::InvalidControl(format!("segment {k} has non-positive duration {}", s.duration)));
            }
            if !s.amplitude.is_finite() {
                return Err(Error::InvalidControl(format!("segment {k} has non-finite amplitude")));
            }
        }
        Ok(Self { segments })
    }

    /// `M = amplitudes.len()` equal segments of length `T / M`.
    pub fn uniform(amplitudes: &[f64], total_time: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidControl("at least one segment is required".into()));
        }
        let dt = total_time / amplitudes.len() as f64;
        Self::new(amplitudes.iter().map(|&amplitude| Segment { duration: dt, amplitude }).collect())
    }

    pub fn zero(num_segments: usize, total_time: f64) -> Result<Self> {
        Self::uniform(&vec![0.0; num_segments], total_time)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.amplitude).collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.duration).collect()
    }

    /// Segment start times followed by the final time (`M + 1` values).
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// Same grid, new amplitudes. Panics on a length mismatch.
    pub fn with_amplitudes(&self, amplitudes: &[f64]) -> Self {
        assert_eq!(amplitudes.len(), self.segments.len());
        Self {
            segments: self
                .segments
                .iter()
                .zip(amplitudes)
                .map(|(s, &amplitude)| Segment { duration: s.duration, amplitude })
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let amps: Vec<f64> = self.segments.iter().map(|seg| seg.amplitude * s).collect();
        self.with_amplitudes(&amps)
    }

    /// Segment order reversed and amplitudes negated.
    pub fn reversed_negated(&self) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .rev()
                .map(|s| Segment { duration: s.duration, amplitude: -s.amplitude })
                .collect(),
        }
    }

    /// Field value at `t` (right-continuous; the final point belongs to the
    /// last segment). Zero outside `[0, T]`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let mut start = 0.0;
        for s in &self.segments {
            if t < start + s.duration {
                return s.amplitude;
            }
            start += s.duration;
        }
        if t <= start {
            self.segments.last().map_or(0.0, |s| s.amplitude)
        } else {
            0.0
        }
    }
}

impl TryFrom<Vec<Segment>> for PiecewiseControl {
    type Error = Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        Self::new(segments)
    }
}

impl From<PiecewiseControl> for Vec<Segment> {
    fn from(c: PiecewiseControl) -> Self {
        c.segments
    }
}

/// Output of [`propagate`].
#[derive(Clone, Debug)]
pub struct Propagation {
    /// `W_1, …, W_M`; the last entry is `U_T`.
    pub prefixes: Vec<ComplexMatrix>,
}

impl Propagation {
    pub fn final_unitary(&self) -> &ComplexMatrix {
        self.prefixes.last().expect("controls have at least one segment")
    }
}

fn segment_propagators<'a>(system: &LambdaSystem, control: &'a PiecewiseControl) -> impl Iterator<Item = Matrix3> + 'a {
    let e = system.energies();
    let v = system.coupling().to_matrix3();
    let real = v.iter().flatten().all(|z| z.im == 0.0);
    let v_re = v.map(|row| row.map(|z| z.re));
    control.segments().iter().map(move |seg| {
        if real {
            let mut h = v_re.map(|row| row.map(|x| x * seg.amplitude));
            for k in 0..NUM_LEVELS {
                h[k][k] += e[k];
            }
            expm_real_symmetric3(&h, seg.duration)
        } else {
            let mut h = v.map(|row| row.map(|z| z * seg.amplitude));
            for k in 0..NUM_LEVELS {
                h[k][k] += e[k];
            }
            expm_unitary3(&h, seg.duration)
        }
    })
}

fn prefixes3(system: &LambdaSystem, control: &PiecewiseControl) -> Vec<Matrix3> {
    let mut w = IDENTITY3;
    segment_propagators(system, control)
        .map(|u| {
            w = matmul3(&u, &w);
            w
        })
        .collect()
}

fn final_unitary3(system: &LambdaSystem, control: &PiecewiseControl) -> Matrix3 {
    segment_propagators(system, control).fold(IDENTITY3, |w, u| matmul3(&u, &w))
}

/// Propagates under the piecewise-constant field, caching every prefix
/// product `W_l = U_l ⋯ U_1`.
pub fn propagate(system: &LambdaSystem, control: &PiecewiseControl) -> Result<Propagation> {
    system.check_hermitian()?;
    let prefixes = prefixes3(system, control).iter().map(ComplexMatrix::from).collect();
    Ok(Propagation { prefixes })
}

/// `U_T` alone.
pub fn final_unitary(system: &LambdaSystem, control: &PiecewiseControl) -> Result<ComplexMatrix> {
    system.check_hermitian()?;
    Ok(ComplexMatrix::from(&final_unitary3(system, control)))
}

fn objective_from_unitary(system: &LambdaSystem, u: &Matrix3) -> f64 {
    let i = system.initial_level() - 1;
    system.observable().iter().enumerate().map(|(f, o)| o * u[f][i].norm_sqr()).sum()
}

/// `J = Tr[U_T ρ0 U_T† O]`; for the normalized observable this is
/// `P(1→2) - λ P(1→3)`.
pub fn objective(system: &LambdaSystem, control: &PiecewiseControl) -> Result<f64> {
    system.check_hermitian()?;
    Ok(objective_from_unitary(system, &final_unitary3(system, control)))
}

/// `|⟨f|U_T|i⟩|²` with 1-indexed levels.
pub fn transition_prob(
    system: &LambdaSystem,
    control: &PiecewiseControl,
    initial: usize,
    target: usize,
) -> Result<f64> {
    for level in [initial, target] {
        if !(1..=NUM_LEVELS).contains(&level) {
            return Err(Error::IndexOutOfRange { level, dim: NUM_LEVELS });
        }
    }
    let u = final_unitary(system, control)?;
    Ok(u[(target - 1, initial - 1)].norm_sqr())
}

/// Objective and analytic gradient from a single propagation.
///
/// `∂J/∂c_l = 2 Δt_l Im Tr[W_l† V W_l ρ0 U_T† O U_T]`. This is first order
/// in the segment length, so it departs from the exact derivative by a
/// relative `O(Δt)`.
pub fn objective_and_gradient(system: &LambdaSystem, control: &PiecewiseControl) -> Result<(f64, Vec<f64>)> {
    system.check_hermitian()?;
    let prefixes = prefixes3(system, control);
    let u = prefixes.last().expect("controls have at least one segment");
    let i = system.initial_level() - 1;
    let obs = system.observable();
    let v = system.coupling().to_matrix3();

    // Row i of X = U† O U: X_ij = Σ_f conj(U_fi) O_f U_fj
    let x_row: [Complex64; NUM_LEVELS] =
        std::array::from_fn(|j| (0..NUM_LEVELS).map(|f| u[f][i].conj() * obs[f] * u[f][j]).sum());

    let grad = prefixes
        .iter()
        .zip(control.segments())
        .map(|(w, seg)| {
            // Tr[W† V W ρ0 X] = Σ_j (W† V W)_ji X_ij
            let vw: [Complex64; NUM_LEVELS] = std::array::from_fn(|k| (0..NUM_LEVELS).map(|m| v[k][m] * w[m][i]).sum());
            let tr: Complex64 = (0..NUM_LEVELS)
                .map(|j| {
                    let wdag_vw: Complex64 = (0..NUM_LEVELS).map(|k| w[k][j].conj() * vw[k]).sum();
                    wdag_vw * x_row[j]
                })
                .sum();
            2.0 * seg.duration * tr.im
        })
        .collect();
    Ok((objective_from_unitary(system, u), grad))
}

pub fn gradient(system: &LambdaSystem, control: &PiecewiseControl) -> Result<Vec<f64>> {
    objective_and_gradient(system, control).map(|(_, g)| g)
}

/// Central differences `(J(c_l + h) - J(c_l - h)) / 2h` per segment.
pub fn finite_diff_gradient(system: &LambdaSystem, control: &PiecewiseControl, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidControl(format!("finite-difference step must be > 0, got {h}")));
    }
    let base = control.amplitudes();
    let mut amps = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for l in 0..base.len() {
        amps[l] = base[l] + h;
        let plus = objective(system, &control.with_amplitudes(&amps))?;
        amps[l] = base[l] - h;
        let minus = objective(system, &control.with_amplitudes(&amps))?;
        amps[l] = base[l];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm_unitary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_control(seed: u64, m: usize, t: f64, c0: f64) -> PiecewiseControl {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<f64> = (0..m).map(|_| rng.gen_range(-c0..=c0)).collect();
        PiecewiseControl::uniform(&amps, t).unwrap()
    }

    fn random_nonuniform(seed: u64, m: usize) -> PiecewiseControl {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PiecewiseControl::new(
            (0..m)
                .map(|_| Segment { duration: rng.gen_range(0.2..1.5), amplitude: rng.gen_range(-1.0..1.0) })
                .collect(),
        )
        .unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_observable([0.0, 1.0, -5.0]).unwrap(), ([0.0, 1.0, -5.0], 5.0));
        assert_eq!(normalize_observable([1.0, 3.0, -1.0]).unwrap(), ([0.0, 1.0, -1.0], 1.0));
        assert!(matches!(normalize_observable([0.0, 1.0, 0.0]), Err(Error::OrderingViolation(..))));
        assert!(matches!(normalize_observable([2.0, 1.0, 0.0]), Err(Error::OrderingViolation(..))));
    }

    #[test]
    fn lambda_structure_validation() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        assert_eq!(sys.transition_frequencies(), (2.5, 1.5));
        assert_eq!(sys.penalty(), 5.0);

        let mut v = sys.coupling().clone();
        v[(0, 1)] = Complex64::new(0.3, 0.0);
        v[(1, 0)] = Complex64::new(0.3, 0.0);
        assert!(LambdaSystem::from_parts(DEFAULT_ENERGIES, v.clone(), 1, [0.0, 1.0, -5.0]).is_err());
        // the bypass keeps it
        let broken = LambdaSystem::from_parts_unchecked(DEFAULT_ENERGIES, v, 1, [0.0, 1.0, -5.0]);
        assert!(broken.validate().is_err());

        assert!(LambdaSystem::new(DEFAULT_ENERGIES, 0.0, 1.7, 1.0).is_err());
        assert!(LambdaSystem::new(DEFAULT_ENERGIES, 1.0, 0.0, 1.0).is_err());
        // ω1 == ω2
        assert!(LambdaSystem::new([0.0, 0.0, 2.5], 1.0, 1.7, 1.0).is_err());
        // level 3 below level 2
        assert!(LambdaSystem::new([0.0, 3.0, 2.5], 1.0, 1.7, 1.0).is_err());
        assert!(LambdaSystem::new(DEFAULT_ENERGIES, 1.0, 1.7, -1.0).is_err());
    }

    #[test]
    fn control_validation() {
        assert!(PiecewiseControl::new(vec![]).is_err());
        assert!(PiecewiseControl::new(vec![Segment { duration: 0.0, amplitude: 1.0 }]).is_err());
        assert!(PiecewiseControl::new(vec![Segment { duration: -1.0, amplitude: 1.0 }]).is_err());
        let c = PiecewiseControl::zero(200, 10.0).unwrap();
        assert_eq!(c.len(), 200);
        assert!(c.durations().iter().all(|&d| d == 10.0 / 200.0));
        approx::assert_abs_diff_eq!(c.total_time(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_segment_list_rejected_on_conversion() {
        assert!(PiecewiseControl::try_from(Vec::<Segment>::new()).is_err());
    }

    #[test]
    fn free_evolution() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let c = PiecewiseControl::zero(17, 10.0).unwrap();
        let u = final_unitary(&sys, &c).unwrap();
        let expect = ComplexMatrix::from_diagonal(&[
            Complex64::from_polar(1.0, 0.0),
            Complex64::from_polar(1.0, -10.0),
            Complex64::from_polar(1.0, -25.0),
        ]);
        assert!(u.max_abs_diff(&expect) < 1e-12);
        assert_eq!(objective(&sys, &c).unwrap(), 0.0);
        assert_eq!(transition_prob(&sys, &c, 1, 1).unwrap(), 1.0);
        assert_eq!(transition_prob(&sys, &c, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn single_segment_is_one_exponential() {
        let sys = LambdaSystem::reference(0.0).unwrap();
        let c = PiecewiseControl::uniform(&[0.5], 1.0).unwrap();
        let u = final_unitary(&sys, &c).unwrap();
        let direct = expm_unitary(&sys.hamiltonian(0.5), 1.0).unwrap();
        assert!(u.max_abs_diff(&direct) < 1e-15);
    }

    #[test]
    fn refinement_oracle() {
        // Splitting a segment into sub-steps is exact for a constant generator.
        let sys = LambdaSystem::reference(5.0).unwrap();
        let coarse = random_nonuniform(11, 10);
        let fine = PiecewiseControl::new(
            coarse
                .segments()
                .iter()
                .flat_map(|s| std::iter::repeat_n(Segment { duration: s.duration / 64.0, amplitude: s.amplitude }, 64))
                .collect(),
        )
        .unwrap();
        let a = final_unitary(&sys, &coarse).unwrap();
        let b = final_unitary(&sys, &fine).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10, "{}", a.max_abs_diff(&b));
    }

    #[test]
    fn prefixes_are_unitary() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let c = random_control(5, 200, 10.0, 1.0);
        let prop = propagate(&sys, &c).unwrap();
        assert_eq!(prop.prefixes.len(), 200);
        for w in &prop.prefixes {
            assert!(w.is_unitary(1e-9));
        }
        assert_eq!(prop.final_unitary(), &final_unitary(&sys, &c).unwrap());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        for seed in 0..20 {
            let c = random_control(seed, 50, 10.0, 1.0);
            let total: f64 = (1..=3).map(|f| transition_prob(&sys, &c, 1, f).unwrap()).sum();
            approx::assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
        let c = random_control(0, 5, 1.0, 1.0);
        assert!(matches!(transition_prob(&sys, &c, 0, 2), Err(Error::IndexOutOfRange { level: 0, .. })));
        assert!(matches!(transition_prob(&sys, &c, 1, 4), Err(Error::IndexOutOfRange { level: 4, .. })));
    }

    #[test]
    fn unpenalized_objective_is_a_probability() {
        let sys = LambdaSystem::reference(0.0).unwrap();
        for seed in 0..20 {
            let c = random_control(seed, 40, 10.0, 1.0);
            let j = objective(&sys, &c).unwrap();
            assert!((0.0..=1.0).contains(&j));
            approx::assert_abs_diff_eq!(j, transition_prob(&sys, &c, 1, 2).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_exactly_at_zero_control() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let c = PiecewiseControl::zero(200, 10.0).unwrap();
        let g = gradient(&sys, &c).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        let fd = finite_diff_gradient(&sys, &c, 1e-5).unwrap();
        assert!(fd.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn gradient_matches_finite_differences_to_first_order() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let c200 = random_control(42, 200, 10.0, 1.0);
        let e200 = rel_l2(&gradient(&sys, &c200).unwrap(), &finite_diff_gradient(&sys, &c200, 1e-5).unwrap());
        // leading mismatch is about ω1 Δt / 2 = 0.0625 for weak fields
        assert!((0.03..0.07).contains(&e200), "{e200}");

        // same field on a grid twice as fine
        let amps: Vec<f64> = c200.amplitudes().iter().flat_map(|&a| [a, a]).collect();
        let c400 = PiecewiseControl::uniform(&amps, 10.0).unwrap();
        let e400 = rel_l2(&gradient(&sys, &c400).unwrap(), &finite_diff_gradient(&sys, &c400, 1e-5).unwrap());
        let ratio = e200 / e400;
        assert!((1.4..=2.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn central_difference_is_second_order_in_step() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let c = random_control(9, 8, 10.0, 1.0);
        let d = |h| finite_diff_gradient(&sys, &c, h).unwrap();
        let (g1, g2, g4) = (d(0.1), d(0.05), d(0.025));
        // Richardson limit from the two finest steps
        let limit: Vec<f64> = g2.iter().zip(&g4).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
        let err = |g: &[f64]| g.iter().zip(&limit).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let ratio = err(&g1) / err(&g2);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn affine_observable_invariance() {
        let raw = [1.0, 3.0, -1.0];
        let sys_raw = LambdaSystem::with_raw_observable(DEFAULT_ENERGIES, 1.0, 1.7, raw).unwrap();
        let sys_norm = sys_raw.normalized().unwrap();
        assert_eq!(sys_norm.observable(), [0.0, 1.0, -1.0]);
        for seed in 0..10 {
            let c = random_control(seed, 30, 10.0, 1.0);
            let jr = objective(&sys_raw, &c).unwrap();
            let jn = objective(&sys_norm, &c).unwrap();
            approx::assert_abs_diff_eq!(jr, (raw[1] - raw[0]) * jn + raw[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn time_reversal_without_drift() {
        let sys = LambdaSystem::from_parts(
            [0.0, 0.0, 0.0],
            LambdaSystem::reference(1.0).unwrap().coupling().clone(),
            1,
            [0.0, 1.0, -1.0],
        );
        // zero drift is degenerate (ω1 = ω2), so build it without validation
        assert!(sys.is_err());
        let sys = LambdaSystem::from_parts_unchecked(
            [0.0; 3],
            LambdaSystem::reference(1.0).unwrap().coupling().clone(),
            1,
            [0.0, 1.0, -1.0],
        );
        let c = random_nonuniform(21, 12);
        let there = final_unitary(&sys, &c).unwrap();
        let back = final_unitary(&sys, &c.reversed_negated()).unwrap();
        assert!(back.matmul(&there).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-9);
    }

    #[test]
    fn value_at_follows_segments() {
        let c = PiecewiseControl::new(vec![
            Segment { duration: 1.0, amplitude: 2.0 },
            Segment { duration: 2.0, amplitude: -1.0 },
        ])
        .unwrap();
        assert_eq!(c.value_at(0.0), 2.0);
        assert_eq!(c.value_at(0.999), 2.0);
        assert_eq!(c.value_at(1.0), -1.0);
        assert_eq!(c.value_at(3.0), -1.0);
        assert_eq!(c.value_at(3.5), 0.0);
        assert_eq!(c.boundaries(), vec![0.0, 1.0, 3.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn objective_within_bounds(seed in any::<u64>(), lambda in 0.0f64..10.0) {
                let sys = LambdaSystem::reference(lambda).unwrap();
                let c = random_control(seed, 20, 10.0, 2.0);
                let j = objective(&sys, &c).unwrap();
                prop_assert!(j >= -lambda - 1e-12 && j <= 1.0 + 1e-12);
            }
        }
    }
}
