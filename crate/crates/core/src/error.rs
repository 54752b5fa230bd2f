use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("center index {index} out of range for {len} centers")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("time {time} outside the support [{start}, {end}] of a sampled trajectory")]
    OutsideSupport { time: f64, start: f64, end: f64 },

    #[error(
        "centers {first} and {second} are {distance} apart at t = {time}, below the declared separation {required}"
    )]
    SeparationViolation {
        first: usize,
        second: usize,
        time: f64,
        distance: f64,
        required: f64,
    },

    #[error("singular step system at step {step}")]
    SingularStep { step: usize },

    #[error("time {0} is not a node of the charge grid")]
    NotOnGrid(f64),

    #[error("wave field grids or times do not match")]
    GridMismatch,

    #[error("malformed wave field data: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
