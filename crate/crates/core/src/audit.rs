//! Individual and model-level leakage audits.
//!
//! An individual `x` with `x[s] = ν` is protected iff some individual with the
//! same open profile, the opposite sensitive value and the same decision
//! exists (a shield). Any explanation of the shield's decision is then a
//! leakage-protected explanation (LPPAE) for `x`: its open part is satisfied
//! by `x`, it yields `x`'s decision and it cannot contain `s = ν`.
//!
//! The model audit repeatedly picks an uncovered sensitive individual, looks
//! for an LPPAE and, when one exists, blocks every individual that satisfies
//! its open literals and receives the same decision; all of those are
//! protected by the same explanation. The loop stops at the first individual
//! without an LPPAE or when no sensitive individual is left uncovered.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, OracleError};
use crate::explain::{minimal_explanation, DeletionOrder, Explanation};
use crate::model::{DecisionLabel, DecisionModel, Individual, LiteralSet, ProfilePartition};
use crate::sat::{BlockRecord, CnfEncoding, QueryConstraints, SatOracle, SolverConfig};

/// How the sensitive feature may appear in the explanation of a shield.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionMode {
    /// Only `s = ν` is excluded, which holds for any explanation of a shield.
    #[default]
    Theorem,
    /// The explanation may not mention `s` at all.
    Strict,
}

/// What a covered LPPAE blocks in the model audit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingRule {
    /// Individuals satisfying the open literals and receiving the same decision.
    #[default]
    OpenAndDecision,
    /// Individuals satisfying the open literals, whatever their decision. Not
    /// sound in general; kept for comparison against the oracle.
    OpenOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditConfig {
    pub mode: ExclusionMode,
    pub deletion_order: DeletionOrder,
    /// Extra shields tried in strict mode before falling back.
    pub strict_retries: usize,
    pub blocking: BlockingRule,
    /// Defaults to `2^|V_O| · |D| + 1`.
    pub iteration_cap: Option<u64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            mode: ExclusionMode::Theorem,
            deletion_order: DeletionOrder::Ascending,
            strict_retries: 8,
            blocking: BlockingRule::OpenAndDecision,
            iteration_cap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuditStats {
    pub oracle_calls: u64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Annotation {
    /// `x[s] ≠ ν`: outside the audited population.
    NotSensitive,
    /// Strict mode found no shield whose explanation avoids `s`; the verdict
    /// uses a theorem-mode explanation instead.
    StrictFallback { shields_tried: usize },
}

/// A successful LPPAE search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LppaeSearch {
    pub explanation: Explanation,
    pub shield: Individual,
    pub fallback: Option<Annotation>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndividualVerdict {
    pub subject: Individual,
    pub decision: DecisionLabel,
    /// Set for individuals with `x[s] ≠ ν`; they are never reported as leaking.
    pub exempt: bool,
    pub leaks: bool,
    pub lppae: Option<Explanation>,
    pub shield: Option<Individual>,
    pub annotations: Vec<Annotation>,
    pub stats: AuditStats,
}

/// One covered LPPAE-equivalence class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverRecord {
    /// The sensitive individual whose search produced the explanation.
    pub representative: Individual,
    pub shield: Individual,
    pub explanation: Explanation,
    pub block: BlockRecord,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelVerdict {
    pub leaks: bool,
    pub counterexample: Option<Individual>,
    pub counterexample_decision: Option<DecisionLabel>,
    pub cover: Vec<CoverRecord>,
    pub iterations: u64,
    pub iteration_cap: u64,
    pub annotations: Vec<Annotation>,
    pub stats: AuditStats,
}

/// Default iteration cap: the number of (open profile, decision) classes plus one.
pub fn default_iteration_cap(partition: &ProfilePartition, labels: usize) -> u64 {
    1u64.checked_shl(partition.open_count() as u32)
        .and_then(|p| p.checked_mul(labels as u64))
        .and_then(|p| p.checked_add(1))
        .unwrap_or(u64::MAX)
}

/// Runs audits of one model. Owns its solver contexts.
pub struct Auditor<'a> {
    model: &'a DecisionModel,
    partition: &'a ProfilePartition,
    encoding: Arc<CnfEncoding>,
    solver: SolverConfig,
    oracle: SatOracle,
    config: AuditConfig,
}

impl<'a> Auditor<'a> {
    pub fn new(
        model: &'a DecisionModel,
        partition: &'a ProfilePartition,
        encoding: Arc<CnfEncoding>,
        solver: SolverConfig,
        config: AuditConfig,
    ) -> Self {
        let oracle = SatOracle::new(encoding.clone(), solver);
        Auditor {
            model,
            partition,
            encoding,
            solver,
            oracle,
            config,
        }
    }

    pub fn config(&self) -> &AuditConfig {
        &self.config
    }

    pub fn oracle(&mut self) -> &mut SatOracle {
        &mut self.oracle
    }

    /// Looks for an LPPAE for `x`, which must satisfy `x[s] = ν`.
    pub fn search_lppae(&mut self, x: &Individual) -> Result<Option<LppaeSearch>, OracleError> {
        let d = self.model.evaluate(x);
        let s = self.partition.sensitive();
        let flipped = !self.partition.protected_literal();
        let mut q = QueryConstraints {
            fixed: x.open_profile(self.partition),
            required_label: Some(d),
            ..Default::default()
        };
        q.fixed
            .insert(flipped)
            .expect("sensitive feature is private");

        let order = self.config.deletion_order;
        match self.config.mode {
            ExclusionMode::Theorem => {
                let Some(shield) = self.oracle.find_individual(&q)? else {
                    return Ok(None);
                };
                let explanation = self.explain(&shield, d, &LiteralSet::new(), order)?;
                Ok(Some(LppaeSearch {
                    explanation,
                    shield,
                    fallback: None,
                }))
            }
            ExclusionMode::Strict => {
                let forbidden = LiteralSet::from_literals([flipped]).expect("single literal");
                let mut first = None;
                let mut tried = 0;
                while tried <= self.config.strict_retries {
                    let Some(shield) = self.oracle.find_individual(&q)? else {
                        break;
                    };
                    tried += 1;
                    if let Some(explanation) = minimal_explanation(
                        &mut self.oracle,
                        &shield,
                        d,
                        &forbidden,
                        self.partition,
                        order,
                    )? {
                        debug_assert!(!explanation.literals.mentions(s));
                        return Ok(Some(LppaeSearch {
                            explanation,
                            shield,
                            fallback: None,
                        }));
                    }
                    q.blocked.push(BlockRecord {
                        literals: shield.literals(),
                        label: None,
                    });
                    first.get_or_insert(shield);
                }
                let Some(shield) = first else {
                    return Ok(None);
                };
                let explanation = self.explain(&shield, d, &LiteralSet::new(), order)?;
                Ok(Some(LppaeSearch {
                    explanation,
                    shield,
                    fallback: Some(Annotation::StrictFallback {
                        shields_tried: tried,
                    }),
                }))
            }
        }
    }

    fn explain(
        &mut self,
        x: &Individual,
        d: DecisionLabel,
        forbidden: &LiteralSet,
        order: DeletionOrder,
    ) -> Result<Explanation, OracleError> {
        let e = minimal_explanation(&mut self.oracle, x, d, forbidden, self.partition, order)?;
        Ok(e.expect("the full assignment of an individual is always valid for its decision"))
    }

    pub fn audit_individual(&mut self, x: &Individual) -> Result<IndividualVerdict, OracleError> {
        let start = Instant::now();
        let calls = self.oracle.calls();
        let decision = self.model.evaluate(x);
        let mut verdict = IndividualVerdict {
            subject: x.clone(),
            decision,
            exempt: false,
            leaks: false,
            lppae: None,
            shield: None,
            annotations: Vec::new(),
            stats: AuditStats::default(),
        };
        if !self.partition.is_sensitive(x) {
            verdict.exempt = true;
            verdict.annotations.push(Annotation::NotSensitive);
        } else {
            match self.search_lppae(x)? {
                None => verdict.leaks = true,
                Some(found) => {
                    verdict.lppae = Some(found.explanation);
                    verdict.shield = Some(found.shield);
                    verdict.annotations.extend(found.fallback);
                }
            }
        }
        verdict.stats = AuditStats {
            oracle_calls: self.oracle.calls() - calls,
            elapsed: start.elapsed(),
        };
        Ok(verdict)
    }

    pub fn audit_model(&mut self) -> Result<ModelVerdict, AuditError> {
        let start = Instant::now();
        let calls = self.oracle.calls();
        let cap = self
            .config
            .iteration_cap
            .unwrap_or_else(|| default_iteration_cap(self.partition, self.model.labels().len()));

        // Candidates come from a second context where blocks are permanent.
        let mut candidates = SatOracle::new(self.encoding.clone(), self.solver);
        let mut sensitive = LiteralSet::new();
        sensitive
            .insert(self.partition.protected_literal())
            .expect("single literal");
        let q = QueryConstraints {
            fixed: sensitive,
            ..Default::default()
        };

        let mut verdict = ModelVerdict {
            leaks: false,
            counterexample: None,
            counterexample_decision: None,
            cover: Vec::new(),
            iterations: 0,
            iteration_cap: cap,
            annotations: Vec::new(),
            stats: AuditStats::default(),
        };
        while let Some(x) = candidates.find_individual(&q)? {
            if verdict.iterations >= cap {
                return Err(AuditError::IterationCap(cap));
            }
            verdict.iterations += 1;
            let d = self.model.evaluate(&x);
            match self.search_lppae(&x)? {
                None => {
                    verdict.leaks = true;
                    verdict.counterexample = Some(x);
                    verdict.counterexample_decision = Some(d);
                    break;
                }
                Some(found) => {
                    let block = BlockRecord {
                        literals: found.explanation.literals.open_part(self.partition),
                        label: match self.config.blocking {
                            BlockingRule::OpenAndDecision => Some(d),
                            BlockingRule::OpenOnly => None,
                        },
                    };
                    candidates.add_block(&block)?;
                    verdict.annotations.extend(found.fallback);
                    verdict.cover.push(CoverRecord {
                        representative: x,
                        shield: found.shield,
                        explanation: found.explanation,
                        block,
                    });
                }
            }
        }
        verdict.stats = AuditStats {
            oracle_calls: self.oracle.calls() - calls + candidates.calls(),
            elapsed: start.elapsed(),
        };
        Ok(verdict)
    }

    /// Checks that `e` is an LPPAE for `x`: valid for `x`'s decision, open
    /// part inside `x`'s open profile, and free of the protected literal.
    pub fn is_lppae_for(&mut self, e: &Explanation, x: &Individual) -> Result<bool, OracleError> {
        let protected = self.partition.protected_literal();
        Ok(!e.literals.contains(protected)
            && e.decision == self.model.evaluate(x)
            && e.literals
                .open_part(self.partition)
                .is_subset(&x.open_profile(self.partition))
            && self.oracle.check_validity(&e.literals, e.decision)?)
    }
}
