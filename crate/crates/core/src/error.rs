use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..=8")]
    QubitCount(usize),
    #[error("invalid qubit index {index} for a {n_qubits}-qubit register")]
    QubitIndex { index: usize, n_qubits: usize },
    #[error("control and target must differ (both {0})")]
    SameQubit(usize),
    #[error("operation requires a density-matrix state")]
    RequiresNoisy,
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("brute-force oracle limited to 4 qubits, got {0}")]
    OracleScale(usize),

    #[error("value {0} outside the angle-encoding domain [-1, 1]")]
    EncodingDomain(f64),
    #[error("circuit plan has {actual} parameters, expected {expected}")]
    ParamBudget { expected: usize, actual: usize },
    #[error("invalid circuit plan: {0}")]
    Plan(String),
    #[error("parameter vector has length {actual}, circuit expects {expected}")]
    ParamLength { expected: usize, actual: usize },
    #[error("gate {0} is not generated by a Pauli operator")]
    NonPauliGate(String),

    #[error("training diverged at step {step}: non-finite loss")]
    Divergence { step: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("no threshold available")]
    MissingThreshold,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no valid rows in input")]
    NoValidRows,
    #[error("feature {0} has zero range; cannot scale")]
    DegenerateScale(usize),
    #[error("split ratio {0} outside (0, 1)")]
    SplitRatio(f64),
    #[error("both halves of the split contain only attack intervals")]
    AllAttacked,
    #[error("series of length {len} too short (need more than {needed})")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("singular regression design")]
    Singular,
    #[error("anomaly interval {start}..{end} outside series of length {len}")]
    IntervalRange { start: usize, end: usize, len: usize },
    #[error("invalid synthetic config: {0}")]
    Synth(String),

    #[error("model file: {0}")]
    ModelFormat(String),
}
