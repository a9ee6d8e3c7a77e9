use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {z} is outside the admissible disc")]
    OutsideDisc { z: Complex64 },
    #[error("pole of the weight at {z}")]
    Pole { z: Complex64 },
    #[error("trace {name} = {value} is outside [-1, 1]")]
    InvalidTrace { name: &'static str, value: f64 },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("invalid measure ({count} violations)")]
    InvalidMeasure { count: usize },
    #[error("no root of 4z/(1+z)^2 = {w} inside the disc")]
    BranchFailure { w: Complex64 },
    #[error("square-root branch tracking failed near t = {t}")]
    BranchTracking { t: f64 },
    #[error("z = {z} is outside the real interval of the domain at t = {t}")]
    OutOfDomain { z: f64, t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("Herglotz positivity lost at t = {t} (Re w = {re_w})")]
    Positivity { t: f64, re_w: f64 },
    #[error("trajectory from {z0} left the disc before t = {t}")]
    Exited { z0: Complex64, t: f64 },
    #[error("Newton iteration did not converge (last iterate {last}, residual {residual:e})")]
    NonConvergence { last: Complex64, residual: f64 },
    #[error("exit predicate is not monotone along the ray at theta = {theta}")]
    NonMonotoneRay { theta: f64 },
    #[error("density value {value:e} at node {index} is negative beyond tolerance")]
    NegativeDensity { index: usize, value: f64 },
    #[error("too many inversion failures ({failed} of {total})")]
    InversionFailures { failed: usize, total: usize },
}
