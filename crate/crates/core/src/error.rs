use thiserror::Error;

/// Errors raised across the crate.
///
/// Verification routines never raise on a failed check; they return a report.
/// Errors are reserved for ill-typed inputs and for constructions whose
/// preconditions do not hold.
#[derive(Debug, Error)]
pub enum Error {
    #[error("type mismatch in {context}: expected {expected:?}, found {found:?}")]
    TypeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("bad permutation {perm:?} for {len} factors")]
    BadPermutation { perm: Vec<usize>, len: usize },
    #[error("dimension mismatch: output factor has dim {out_dim}, input factor has dim {in_dim}")]
    DimensionMismatch { out_dim: usize, in_dim: usize },
    #[error("factor index {index} out of range for {len} factors")]
    FactorOutOfRange { index: usize, len: usize },
    #[error("matrix shape {rows}x{cols} does not match wire totals {cod_total}x{dom_total}")]
    Shape {
        rows: usize,
        cols: usize,
        cod_total: usize,
        dom_total: usize,
    },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("wire dimensions must be positive")]
    ZeroDimension,
    #[error("morphism is not unitary (defect {defect:e})")]
    NotUnitary { defect: f64 },
    #[error("path constraint does not hold (deviation {deviation:e})")]
    ConstraintFails { deviation: f64 },
    #[error("witness extraction unstable: reassembly residual {residual:e}")]
    ExtractionUnstable { residual: f64 },
    #[error("contraction would close a causal loop (signalling deviation {deviation:e})")]
    PathViolation { deviation: f64 },
    #[error("contracted morphism left the groupoid (unitarity defect {defect:e})")]
    NotClosed { defect: f64 },
    #[error("supermap action on the swap signals across the hole (deviation {deviation:e}); not a comb")]
    NotAComb { deviation: f64 },
    #[error("comb reassembly failed: action residual {residual:e}")]
    ReassemblyFail { residual: f64 },
    #[error("party evaluations disagree (max deviation {deviation:e})")]
    InconsistentBackend { deviation: f64 },
    #[error("terms {producer} and {consumer} are already connected; a second wire would form a loop")]
    AlreadyConnected { producer: u64, consumer: u64 },
    #[error("cannot compose term {0} with itself")]
    SelfComposition(u64),
    #[error("leg {leg} out of range ({len} legs)")]
    BadLeg { leg: usize, len: usize },
    #[error("invalid control: {0}")]
    BadControl(String),
    #[error("invalid orderings: {0}")]
    BadOrderings(String),
    #[error("invalid constraint: {0}")]
    BadConstraint(String),
    #[error("fixture digest mismatch for {path}: expected {expected}, got {actual}")]
    DigestMismatch {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
