use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// `offset` is the 1-based byte position of the offending input.
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("drift evaluated to a non-finite value {value} at x = {at}")]
    NonFiniteDrift { at: f64, value: f64 },

    #[error("trajectories are on different grids: {0}")]
    GridMismatch(String),

    #[error("grid of {cells} cells exceeds the memory budget of {budget} cells")]
    SizeOverflow { cells: u128, budget: u128 },

    #[error("window [{lo}, {hi}] does not contain the light cone [{need_lo}, {need_hi}]")]
    WindowTooSmall {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("scheme requires dt == dx (Courant number 1), got dt = {dt}, dx = {dx}")]
    CourantViolation { dt: f64, dx: f64 },

    #[error("forcing path covers [0, {covered}] but the solve needs [0, {needed}]")]
    ForcingTooShort { covered: f64, needed: f64 },

    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
