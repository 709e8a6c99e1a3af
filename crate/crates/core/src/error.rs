use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error(
        "degenerate covariance (eigenvalue {eigenvalue:e} below floor {floor:e}); \
         consider reducing the dimension first (e.g. --pca)"
    )]
    DegenerateCovariance { eigenvalue: f64, floor: f64 },

    #[error("singular matrix (pivot {pivot:e})")]
    SingularMatrix { pivot: f64 },

    #[error("component {0} has zero total weight")]
    EmptyComponent(usize),

    #[error("component {component} is dying (lambda = {lambda:e} for {iterations} consecutive iterations)")]
    DyingComponent {
        component: usize,
        lambda: f64,
        iterations: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{count} clusters exceed the brute-force matching limit of 8; use an assignment solver")]
    TooManyClusters { count: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the numbers rather than by the input shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure(_)
                | Error::DegenerateCovariance { .. }
                | Error::SingularMatrix { .. }
                | Error::EmptyComponent(_)
                | Error::DyingComponent { .. }
                | Error::Domain(_)
        )
    }
}
