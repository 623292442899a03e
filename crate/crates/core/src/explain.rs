//! Subset-minimal abductive explanations and their open/private classification.

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::model::{
    DecisionLabel, DecisionModel, Individual, Literal, LiteralSet, ProfilePartition, Side,
};
use crate::sat::SatOracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplanationClass {
    /// Only open features (the empty explanation included).
    Open,
    /// Only private features.
    Private,
    /// Features from both profiles.
    Partial,
}

pub fn classify_explanation(xp: &LiteralSet, partition: &ProfilePartition) -> ExplanationClass {
    let mut open = false;
    let mut private = false;
    for l in xp.iter() {
        match partition.side(l.feature) {
            Side::Open => open = true,
            Side::Private => private = true,
        }
    }
    match (open, private) {
        (_, false) => ExplanationClass::Open,
        (false, true) => ExplanationClass::Private,
        (true, true) => ExplanationClass::Partial,
    }
}

/// A valid explanation of `decision`, minimal when produced by [`minimal_explanation`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Explanation {
    pub literals: LiteralSet,
    pub decision: DecisionLabel,
    pub minimal: bool,
    pub class: ExplanationClass,
}

/// Order in which the deletion pass tries to drop literals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeletionOrder {
    /// Ascending feature index.
    #[default]
    Ascending,
    /// Private literals first, then open ones; each group ascending. Biases
    /// the result toward open literals.
    PrivateFirst,
}

fn deletion_sequence(
    seed: &LiteralSet,
    partition: &ProfilePartition,
    order: DeletionOrder,
) -> Vec<Literal> {
    let mut lits: Vec<Literal> = seed.iter().collect();
    if order == DeletionOrder::PrivateFirst {
        lits.sort_by_key(|l| (partition.is_open(l.feature), l.feature));
    }
    lits
}

/// Deletion-based minimization: start from `x ∖ forbidden` and drop every
/// literal whose removal keeps the set valid for `d`. Returns `None` when the
/// seed itself is not valid.
pub fn minimal_explanation(
    oracle: &mut SatOracle,
    x: &Individual,
    d: DecisionLabel,
    forbidden: &LiteralSet,
    partition: &ProfilePartition,
    order: DeletionOrder,
) -> Result<Option<Explanation>, OracleError> {
    let mut current = LiteralSet::new();
    for l in x.literals().iter().filter(|&l| !forbidden.contains(l)) {
        current
            .insert(l)
            .expect("literals of one individual are consistent");
    }
    if !oracle.check_validity(&current, d)? {
        return Ok(None);
    }
    for l in deletion_sequence(&current.clone(), partition, order) {
        let candidate = current.without(l);
        if oracle.check_validity(&candidate, d)? {
            current = candidate;
        }
    }
    let class = classify_explanation(&current, partition);
    Ok(Some(Explanation {
        literals: current,
        decision: d,
        minimal: true,
        class,
    }))
}

/// Whether `x`'s decision admits an explanation built from open literals
/// only. That holds iff the whole open profile is valid; the witness is a
/// minimal explanation inside it.
pub fn is_fully_open(
    oracle: &mut SatOracle,
    model: &DecisionModel,
    x: &Individual,
    partition: &ProfilePartition,
) -> Result<Option<Explanation>, OracleError> {
    let d = model.evaluate(x);
    let private = x.restrict(Side::Private, partition);
    minimal_explanation(oracle, x, d, &private, partition, DeletionOrder::Ascending)
}

/// Re-checks validity and the per-literal minimality probe of an explanation.
pub fn certify(oracle: &mut SatOracle, e: &Explanation) -> Result<bool, OracleError> {
    if !oracle.check_validity(&e.literals, e.decision)? {
        return Ok(false);
    }
    if e.minimal {
        for l in e.literals.iter() {
            if oracle.check_validity(&e.literals.without(l), e.decision)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
