use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("state outside the physical domain: {0}")]
    Domain(&'static str),
    #[error("steering angle undefined: p_v and p_omega/r both vanish")]
    SingularSteering,
    #[error("singular mass denominator: p_v0 = {0} must be below 1")]
    SingularDenominator(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("integration failed at t = {t}")]
    BlowUp { t: f64 },
    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),
    #[error("invalid normalizer range for feature {0}")]
    InvalidNormalizer(usize),
    #[error("training diverged at epoch {0}")]
    Divergence(usize),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn check_finite(value: f64, what: &'static str) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite(what))
        }
    }
}
