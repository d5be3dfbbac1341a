use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cutoff mismatch: {left} vs {right}")]
    CutoffMismatch { left: usize, right: usize },

    #[error("operator is outside the quantizable symbol class: {0}")]
    UnsupportedSymbol(String),

    #[error("design matrix is rank deficient (condition {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("fit residual {residual:.3e} above threshold {threshold:.3e}")]
    FitResidual { residual: f64, threshold: f64 },

    #[error("tail bound {bound:.3e} above tolerance {tolerance:.3e} at cutoff {cutoff}")]
    TailTooLarge { bound: f64, tolerance: f64, cutoff: usize },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("value requested at a pole (residue {residue_re:.6e}{residue_im:+.6e}i)")]
    Pole { residue_re: f64, residue_im: f64 },

    #[error("lattice hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

