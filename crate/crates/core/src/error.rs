use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while reading SMILES text. `offset` is the byte position in the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("unclosed ring-closure digit {label} opened at byte {offset}")]
    UnclosedRing { label: u32, offset: usize },
    #[error("unbalanced {what} at byte {offset}")]
    Unbalanced { what: &'static str, offset: usize },
    #[error("unknown element symbol '{symbol}' at byte {offset}")]
    UnknownElement { symbol: String, offset: usize },
    #[error("valence overflow on {symbol} at byte {offset} (bond order sum {bonds})")]
    ValenceOverflow {
        symbol: String,
        bonds: u32,
        offset: usize,
    },
    #[error("unexpected character '{ch}' at byte {offset}")]
    Unexpected { ch: char, offset: usize },
    #[error("invalid ring bond at byte {offset}: {reason}")]
    RingBond { reason: &'static str, offset: usize },
}

/// Failures while reading MOL V2000 / SDF records. `line` is 1-based within the stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SdfError {
    #[error("line {line}: malformed counts line")]
    CountsLine { line: usize },
    #[error("line {line}: cannot parse {field}")]
    Field { line: usize, field: &'static str },
    #[error("line {line}: truncated record")]
    Truncated { line: usize },
    #[error("line {line}: unknown element symbol '{symbol}'")]
    UnknownElement { line: usize, symbol: String },
    #[error("line {line}: bond references atom {atom} out of range")]
    BondIndex { line: usize, atom: usize },
    #[error("line {line}: unsupported format {version}")]
    Version { line: usize, version: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Sdf(#[from] SdfError),
    #[error("unknown element Z={0}")]
    UnknownElement(u8),
    #[error("molecule is empty after standardization")]
    EmptyMolecule,
    #[error("molecule has no 3D coordinates")]
    MissingCoordinates,
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("segment id {id} out of range for {n} segments")]
    SegmentId { id: usize, n: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("invalid model spec: {0}")]
    ModelSpec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("all {0} tuning trials were pruned")]
    AllTrialsPruned(usize),
    #[error("fingerprint width mismatch: {0} vs {1}")]
    FingerprintWidth(usize, usize),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("feature manifest mismatch: expected {expected}, found {found}")]
    ManifestMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
