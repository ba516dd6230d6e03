use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("window too short: need more than {needed} cells, got {got}")]
    WindowTooShort { needed: usize, got: usize },
    #[error("window [{have_lo}, {have_hi}] does not cover required range [{need_lo}, {need_hi}]")]
    ConeNotCovered {
        need_lo: i64,
        need_hi: i64,
        have_lo: i64,
        have_hi: i64,
    },
    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: u128,
    },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("word has measure zero under {0}")]
    MeasureZero(String),
    #[error("degenerate observation window: {0}")]
    DegenerateWindow(String),
    #[error("invalid velocity: {0}")]
    InvalidVelocity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
