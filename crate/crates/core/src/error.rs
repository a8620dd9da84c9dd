use thiserror::Error;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("mode n = {n} is not resolved on a grid of {n_points} points")]
    Resolution { n: i64, n_points: usize },
    #[error("film height is non-positive ({min:e}) at theta = {theta:.6}")]
    Degenerate { min: f64, theta: f64 },
    #[error("data error: {0}")]
    Data(String),
    #[error("step size underflow at t = {t:e} (dt_min = {dt_min:e})")]
    Stiffness { t: f64, dt_min: f64 },
    #[error("touchdown at t = {t:e}: positivity lost even at dt_min")]
    Touchdown { t: f64 },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
