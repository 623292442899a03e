//! Formal privacy-leakage auditing for Boolean decision processes.
//!
//! An observer sees the open features of individuals and the decisions they
//! receive. The auditor decides, with abductive explanations and SAT queries,
//! whether that observer can infer that some individual carries a protected
//! sensitive value, either for one individual ([`audit::Auditor::audit_individual`])
//! or for the whole decision process ([`audit::Auditor::audit_model`]).
//! Everything is cross-checked against the brute-force [`oracle`] at small
//! sizes.

pub mod audit;
pub mod cli;
pub mod error;
pub mod explain;
pub mod genbench;
pub mod interchange;
pub mod model;
pub mod oracle;
pub mod report;
pub mod sat;

pub use audit::{AuditConfig, Auditor, ExclusionMode, IndividualVerdict, ModelVerdict};
pub use error::{AuditError, EncodeError, ModelError, OracleError, ParseError};
pub use explain::{Explanation, ExplanationClass};
pub use interchange::{parse_model, serialize, Instance};
pub use model::{
    DecisionLabel, DecisionModel, FeatureSpace, Individual, Literal, LiteralSet, ProfilePartition,
};
pub use sat::{encode, CnfEncoding, SatOracle, SolverConfig};
