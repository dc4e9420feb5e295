use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A size limit (players, enumeration, permutations) was exceeded.
    #[error("{what}: {value} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        value: u64,
        cap: u64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("player {player} is already a member of coalition {coalition:#x}")]
    PlayerInCoalition { player: usize, coalition: u64 },

    #[error("sample budget of {given} is below the minimum of {required}")]
    BudgetTooSmall { given: u64, required: u64 },

    #[error("binomial coefficient C({n}, {k}) overflows 64 bits")]
    Overflow { n: u64, k: u64 },

    /// The LP for a coalition did not reach optimality. For this game class
    /// the problem is always feasible and bounded, so this indicates a bug.
    #[error("LP solve for coalition {coalition:#x} ended with status {status:?}")]
    Solver { coalition: u64, status: LpStatus },

    #[error("config: {0}")]
    Config(String),

    #[error("reports describe different games: {0}")]
    MismatchedGames(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the user's configuration or input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidInput(_)
                | Error::LengthMismatch { .. }
                | Error::BudgetTooSmall { .. }
        )
    }
}
