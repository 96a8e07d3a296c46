use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max |M - M†| = {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("observable must satisfy λ2 > λ1 > λ3, got ({0}, {1}, {2})")]
    OrderingViolation(f64, f64, f64),

    #[error("level {level} outside 1..={dim}")]
    IndexOutOfRange { level: usize, dim: usize },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("horizon T = {horizon} is shorter than the switch time 2π/ω1 = {switch_time}")]
    HorizonTooShort { horizon: f64, switch_time: f64 },

    #[error("quadrature did not reach tolerance {tol:e} within {budget} nodes (last estimate change {achieved:e})")]
    QuadratureBudgetExceeded { tol: f64, budget: usize, achieved: f64 },

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
}
