use thiserror::Error;

/// Errors produced by the distribution routines.
#[derive(Debug, Error)]
pub enum PmdError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("row {row} sums to {sum}, which deviates from 1 by more than {tol}")]
    RowSum { row: usize, sum: f64, tol: f64 },

    #[error("entry ({row}, {col}) = {value} is not a probability")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("outcome not in the support: {0}")]
    NotInSupport(String),

    #[error(
        "pmf grid needs {required} cells (n = {n}, m = {m}), not below the cap of {cap}; {}",
        advice(*.n, *.m)
    )]
    MemoryCap {
        required: u128,
        cap: u128,
        n: usize,
        m: usize,
    },

    #[error("enumeration needs {required} assignments, above the cap of {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid covariance matrix: {0}")]
    Covariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PmdError> = std::result::Result<T, E>;

/// Method recommendation for a PMD of size `n x m`.
///
/// The exact transform is the right tool while `m <= 5` and the
/// `(n + 1)^(m - 1)` grid fits in memory. Moderate category counts with few
/// trials are best served by simulation; large trial counts by the normal
/// approximation.
pub fn advice(n: usize, m: usize) -> &'static str {
    if (6..=20).contains(&m) && n <= 100 {
        "use SIM (m moderate, n small): simulate with b around 10^6 draws"
    } else if m <= 5 && n <= 100 {
        "use DFT-CF (m small, n not large) with a larger --mem-cap-cells, or SIM for single points"
    } else {
        "use NA (n large): the normal approximation is fast and accurate when n is large"
    }
}
