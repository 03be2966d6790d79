use serde_json::json;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Counts gathered before a parallel audit stopped on a failing trial.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct PartialResults {
    pub requested: u64,
    pub completed: u64,
    pub incoherent: u64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset has {0} records; the experiment needs an even count of at least 2")]
    OddDataset(usize),

    #[error("empty support: {0}")]
    EmptySupport(&'static str),

    #[error("prediction {value} lies outside [-1, 1]")]
    PredictionOutOfRange { value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Domain { name: &'static str, reason: String },

    #[error("theorem hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("delta {delta:e} exceeds the admissible ceiling {ceiling:e}")]
    DeltaAboveCeiling { delta: f64, ceiling: f64 },

    #[error("target gamma {target} is infeasible: {reason} (blocking term: {blocking})")]
    Infeasible {
        target: f64,
        blocking: String,
        reason: String,
    },

    #[error("oracle scope exceeded: {0}")]
    OracleScope(String),

    #[error("joint table is not normalized (total mass {0})")]
    NotNormalized(f64),

    #[error("feature `{feature}` holds a non-binary value")]
    NonBinaryFeature { feature: String },

    #[error("feature `{0}` has no declared finite domain")]
    UnboundedDomain(String),

    #[error("learner `{learner}` cannot consume a `{report}` report")]
    IncompatibleReport {
        learner: &'static str,
        report: &'static str,
    },

    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("audit aborted after {} of {} trials: {source}", .partial.completed, .partial.requested)]
    Aborted {
        partial: PartialResults,
        #[source]
        source: Box<Error>,
    },

    #[error("csv input is empty")]
    EmptyCsv,

    #[error("duplicate column name `{0}` in csv header")]
    DuplicateHeader(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("predicate parse error: {0}")]
    Predicate(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error object emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::OddDataset(_) => "odd-dataset",
            Error::EmptySupport(_) => "empty-support",
            Error::PredictionOutOfRange { .. } => "prediction-out-of-range",
            Error::Domain { .. } => "domain",
            Error::Hypothesis(_) => "hypothesis",
            Error::DeltaAboveCeiling { .. } => "delta-above-ceiling",
            Error::Infeasible { .. } => "infeasible",
            Error::OracleScope(_) => "oracle-scope",
            Error::NotNormalized(_) => "not-normalized",
            Error::NonBinaryFeature { .. } => "non-binary-feature",
            Error::UnboundedDomain(_) => "unbounded-domain",
            Error::IncompatibleReport { .. } => "incompatible-report",
            Error::Trial { .. } => "trial",
            Error::Aborted { .. } => "aborted",
            Error::EmptyCsv => "empty-csv",
            Error::DuplicateHeader(_) => "duplicate-header",
            Error::RaggedRow { .. } => "ragged-row",
            Error::Config(_) => "config",
            Error::Predicate(_) => "predicate",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }

    /// JSON error object: `{"error": {"kind", "message", ...details}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        let extra = match self {
            Error::DeltaAboveCeiling { delta, ceiling } => {
                json!({ "delta": delta, "ceiling": ceiling })
            }
            Error::Infeasible {
                target, blocking, ..
            } => json!({ "target_gamma": target, "blocking_term": blocking }),
            Error::RaggedRow { line, .. } => json!({ "line": line }),
            Error::Aborted { partial, .. } => json!({ "partial": partial }),
            Error::Trial { trial, .. } => json!({ "trial": trial }),
            _ => json!({}),
        };
        if let (Some(b), Some(e)) = (body.as_object_mut(), extra.as_object()) {
            b.extend(e.clone());
        }
        json!({ "error": body })
    }
}
