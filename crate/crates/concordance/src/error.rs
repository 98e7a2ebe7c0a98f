use std::fmt;

/// Errors from file formats, services and the command line, plus everything
/// the core can raise.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] concordance_core::Error),
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
    #[error("ragged rows: line {line} has {found} fields, expected {expected}")]
    RaggedRows { line: u64, expected: usize, found: usize },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse number '{0}'")]
    Number(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("{0}")]
    Rejected(Rejection),
}

/// A constraint refused because it lies outside the attainable interval of
/// its label given the other constraints.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rejection {
    pub label: Vec<usize>,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "κ{:?} = {} lies outside the attainable interval [{}, {}]",
            self.label, self.value, self.lower, self.upper
        )
    }
}

impl Error {
    /// Whether the error is a verdict that the input is not attainable, as
    /// opposed to a malformed input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Core(concordance_core::Error::NotAttainable { .. })
                | Error::Core(concordance_core::Error::Infeasible { .. })
                | Error::Rejected(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Machine-readable error body of the HTTP API.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: serde_json::Value,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>, detail: serde_json::Value) -> Self {
        Self { code: code.to_string(), message: message.into(), detail, status }
    }
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        use concordance_core::Error as C;
        use serde_json::{json, Value};
        let (status, code, detail) = match e {
            Error::Core(c) => match c {
                C::OutOfRange(_) => (400, "out_of_range", Value::Null),
                C::InvalidBits(_) => (400, "invalid_bits", Value::Null),
                C::DimensionTooLarge { d, max } => (413, "dimension_too_large", json!({ "d": d, "max": max })),
                C::InvalidSubset(_) => (400, "invalid_subset", Value::Null),
                C::InvalidLabelSet(_) => (400, "invalid_label_set", Value::Null),
                C::InvalidSignature(_) => (400, "invalid_signature", Value::Null),
                C::InvalidWeights(_) => (400, "invalid_weights", Value::Null),
                C::NotAttainable { k, weight } => (422, "not_attainable", json!({ "k": k, "weight": weight })),
                C::Infeasible { phase_one_objective } => {
                    (422, "infeasible", json!({ "phase_one_objective": phase_one_objective }))
                }
                C::NumericalFailure(_) => (500, "numerical_failure", Value::Null),
                C::EmptyTargets => (400, "empty_targets", Value::Null),
                C::InvalidMatrix(_) => (400, "invalid_matrix", Value::Null),
                C::DegenerateMargin(i) => (422, "degenerate_margin", json!({ "margin": i })),
                C::TiesPresent { column } => (422, "ties_present", json!({ "column": column })),
                C::TooFewRows { n, required } => (422, "too_few_rows", json!({ "n": n, "required": required })),
                C::NonPositivePrice { row, column, value } => {
                    (422, "non_positive_price", json!({ "row": row, "column": column, "value": value }))
                }
                C::ThetaOutOfRange(t) => (400, "theta_out_of_range", json!({ "theta": t })),
                C::Cancelled => (409, "cancelled", Value::Null),
            },
            Error::MalformedCsv { line, .. } => (400, "malformed_csv", json!({ "line": line })),
            Error::RaggedRows { line, expected, found } => {
                (400, "ragged_rows", json!({ "line": line, "expected": expected, "found": found }))
            }
            Error::Json(_) => (400, "malformed_json", Value::Null),
            Error::Io(_) => (500, "io", Value::Null),
            Error::Number(_) => (400, "invalid_number", Value::Null),
            Error::Invalid(_) => (400, "invalid_request", Value::Null),
            Error::UnknownSession(_) => (404, "unknown_session", Value::Null),
            Error::UnknownJob(_) => (404, "unknown_job", Value::Null),
            Error::Rejected(r) => (409, "constraint_rejected", serde_json::to_value(r).unwrap_or(Value::Null)),
        };
        ApiError::new(status, code, e.to_string(), detail)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::from(&e)
    }
}
