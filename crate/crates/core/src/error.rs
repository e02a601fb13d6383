use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported base: {0}")]
    UnsupportedBase(String),
    #[error("invalid input in `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("determinant floor violated: |det| = {det:e} < {floor:e} at {location}")]
    DetFloor { det: f64, floor: f64, location: String },
    #[error("no invariant splitting of index {index}: eigenvalue moduli tie")]
    NotSplittable { index: usize },
    #[error("cannot certify the finest splitting: index {index} is inconclusive")]
    InconclusiveSplitting { index: usize },
    #[error("continuation broken at t = {t}: {reason}")]
    ContinuationBroken { t: f64, reason: String },
    #[error("orientation: {0}")]
    Orientation(String),
    #[error("t-grid refinement required: {0}")]
    RefinementRequired(String),
    #[error("determinant mismatch: product |det| = {product:e}, targets give {targets:e}")]
    DetMismatch { product: f64, targets: f64 },
    #[error("rotation family spec too coarse: {0}")]
    SpecTooCoarse(String),
    #[error("face-sign pattern violated on face {face}{sign}")]
    PatternFailure { face: usize, sign: char },
    #[error("budget exhausted: best adjacent moduli ratio {best_gap}")]
    BudgetExhausted { best_gap: f64 },
    #[error("not dominated at index {index}")]
    NotDominated { index: usize },
    #[error("not in SL(2,R): det = {0}")]
    NotUnimodular(f64),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
