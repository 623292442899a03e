use thiserror::Error;

/// Structural violations of the domain invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("feature space must contain at least one feature")]
    EmptyFeatureSpace,
    #[error("feature #{0} has an empty name")]
    EmptyFeatureName(usize),
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(String),
    #[error("feature index {0} out of range")]
    UnknownFeatureIndex(usize),
    #[error("sensitive feature not private: `{0}` is in the open profile")]
    SensitiveNotPrivate(String),
    #[error("literal set would contain both polarities of feature {0}")]
    InconsistentLiterals(usize),
    #[error("label set is empty")]
    NoLabels,
    #[error("label set contains a duplicate")]
    DuplicateLabel,
    #[error("label {0} is not in the model's label set")]
    UnknownLabel(u32),
    #[error("formula models need exactly two labels, got {0}")]
    FormulaLabels(usize),
    #[error("`and`/`or` node without arguments")]
    EmptyConnective,
    #[error("feature {0} is tested twice on one root-to-leaf path")]
    RepeatedTest(usize),
    #[error("threshold network has no layers")]
    EmptyNetwork,
    #[error("layer {0} has no units")]
    EmptyLayer(usize),
    #[error("layer {layer} unit {unit}: expected {expected} weights, found {found}")]
    UnitArity {
        layer: usize,
        unit: usize,
        expected: usize,
        found: usize,
    },
    #[error("final layer has {units} units but {labels} labels need {} units", labels - 1)]
    OutputWidth { units: usize, labels: usize },
}

/// Interchange-document errors, each carrying the location it refers to.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("{location}: {source}")]
    Invalid {
        location: String,
        #[source]
        source: ModelError,
    },
    #[error("dangling feature reference `{name}` at {location}")]
    DanglingFeature { location: String, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("encoding needs {clauses} clauses, above the configured bound of {bound}")]
    Capacity { clauses: usize, bound: usize },
}

/// Failures of the satisfiability oracle. Never conflated with "no solution".
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("conflict budget of {0} exhausted before the query was decided")]
    BudgetExhausted(u64),
    #[error("query inconsistent with the encoding: {0}")]
    BadQuery(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("audit loop exceeded its iteration cap of {0}")]
    IterationCap(u64),
}

/// The brute-force oracle refuses instead of truncating.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("brute-force oracle refuses {features} features (budget {budget})")]
pub struct BudgetExceeded {
    pub features: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidShape(String),
    #[error("QBF syntax error at {line}:{column}: {message}")]
    QbfSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid QBF instance: {0}")]
    QbfInvalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
