//! Audit reports: a versioned structured record plus a text rendering.
//!
//! Private-profile literals of audited individuals (subjects, counterexamples,
//! cover representatives, shields) are redacted unless the report is built
//! with `reveal_private`. Explanations are printed as found; an explanation
//! of the subject's own decision has its private literals redacted too.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::audit::{Annotation, ExclusionMode, IndividualVerdict, ModelVerdict};
use crate::explain::{DeletionOrder, Explanation, ExplanationClass};
use crate::model::{DecisionLabel, FeatureSpace, Individual, ProfilePartition, Side};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub report_version: u32,
    pub command: String,
    pub config_echo: ConfigEcho,
    pub verdict: Verdict,
    pub witnesses: Witnesses,
    pub stats: Stats,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub model: String,
    pub mode: ExclusionMode,
    pub deterministic: bool,
    pub oracle_budget: u64,
    pub conflict_budget: Option<u64>,
    pub seed: u64,
    pub deletion_order: DeletionOrder,
    pub reveal_private: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Leaks,
    NoLeak,
    Exempt,
    Explained,
    NoExplanation,
    Agree,
    Disagree,
}

impl Outcome {
    pub fn banner(self) -> &'static str {
        match self {
            Outcome::Leaks => "LEAKS",
            Outcome::NoLeak => "NO LEAK",
            Outcome::Exempt => "EXEMPT",
            Outcome::Explained => "EXPLAINED",
            Outcome::NoExplanation => "NO EXPLANATION",
            Outcome::Agree => "AGREE",
            Outcome::Disagree => "DISAGREE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Which individuals the verdict speaks about.
    pub scope: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fully_open: Option<bool>,
}

/// An individual as printed. `private` is `None` when redacted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualRecord {
    pub open: String,
    pub private: Option<String>,
    pub decision: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationRecord {
    pub literals: String,
    pub open_part: String,
    pub class: ExplanationClass,
    pub decision: String,
    pub minimal: bool,
    /// Other explanations with the same guarantees may exist.
    pub non_unique: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub redacted_literals: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverEntry {
    /// Blocked class: these open literals together with this decision.
    pub open_literals: String,
    pub decision: String,
    pub explanation: ExplanationRecord,
    pub representative: IndividualRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementRecord {
    pub model_sat: bool,
    pub model_brute_force: bool,
    pub individuals_checked: u64,
    pub disagreements: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Witnesses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<IndividualRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lppae: Option<ExplanationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shield: Option<IndividualRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<ExplanationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<IndividualRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cover: Vec<CoverEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stats {
    pub oracle_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration_cap: Option<u64>,
    pub cnf_vars: u64,
    pub cnf_clauses: u64,
    /// Wall time in microseconds; omitted in deterministic runs.
    pub elapsed_us: Option<u64>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Renders individuals and explanations under the redaction policy.
pub struct Redactor<'a> {
    pub space: &'a FeatureSpace,
    pub partition: &'a ProfilePartition,
    pub reveal_private: bool,
}

impl<'a> Redactor<'a> {
    pub fn scope(&self) -> String {
        let s = self.partition.sensitive();
        format!(
            "individuals with {} = {}; others are exempt",
            self.space.name(s),
            self.partition.protected_value() as u8
        )
    }

    pub fn individual(&self, x: &Individual, d: DecisionLabel) -> IndividualRecord {
        IndividualRecord {
            open: x.open_profile(self.partition).render(self.space),
            private: self
                .reveal_private
                .then(|| x.restrict(Side::Private, self.partition).render(self.space)),
            decision: d.to_string(),
        }
    }

    /// An explanation of some other individual's decision, printed in full.
    pub fn explanation(&self, e: &Explanation, non_unique: bool) -> ExplanationRecord {
        ExplanationRecord {
            literals: e.literals.render(self.space),
            open_part: e.literals.open_part(self.partition).render(self.space),
            class: e.class,
            decision: e.decision.to_string(),
            minimal: e.minimal,
            non_unique,
            redacted_literals: 0,
        }
    }

    /// An explanation built from the subject's own literals.
    pub fn own_explanation(&self, e: &Explanation) -> ExplanationRecord {
        let mut r = self.explanation(e, true);
        if !self.reveal_private {
            let hidden = e.literals.private_part(self.partition).len();
            if hidden > 0 {
                r.literals = r.open_part.clone();
                r.redacted_literals = hidden;
            }
        }
        r
    }

    pub fn individual_report(&self, v: &IndividualVerdict) -> (Verdict, Witnesses) {
        let outcome = if v.exempt {
            Outcome::Exempt
        } else if v.leaks {
            Outcome::Leaks
        } else {
            Outcome::NoLeak
        };
        let verdict = Verdict {
            outcome,
            scope: self.scope(),
            decision: Some(v.decision.to_string()),
            fully_open: None,
        };
        let w = Witnesses {
            subject: Some(self.individual(&v.subject, v.decision)),
            lppae: v.lppae.as_ref().map(|e| self.explanation(e, true)),
            shield: v.shield.as_ref().map(|s| self.individual(s, v.decision)),
            annotations: v.annotations.clone(),
            ..Witnesses::default()
        };
        (verdict, w)
    }

    pub fn model_report(&self, v: &ModelVerdict) -> (Verdict, Witnesses) {
        let verdict = Verdict {
            outcome: if v.leaks {
                Outcome::Leaks
            } else {
                Outcome::NoLeak
            },
            scope: self.scope(),
            decision: v.counterexample_decision.map(|d| d.to_string()),
            fully_open: None,
        };
        let cover = v
            .cover
            .iter()
            .map(|c| CoverEntry {
                open_literals: c.block.literals.render(self.space),
                decision: c
                    .block
                    .label
                    .map(|d| d.to_string())
                    .unwrap_or_else(|| "*".into()),
                explanation: self.explanation(&c.explanation, true),
                representative: self.individual(&c.representative, c.explanation.decision),
            })
            .collect();
        let counterexample = match (&v.counterexample, v.counterexample_decision) {
            (Some(x), Some(d)) => Some(self.individual(x, d)),
            _ => None,
        };
        let w = Witnesses {
            counterexample,
            cover,
            annotations: v.annotations.clone(),
            ..Witnesses::default()
        };
        (verdict, w)
    }
}

pub fn to_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Report, serde_json::Error> {
    serde_json::from_str(text)
}

fn individual_line(r: &IndividualRecord) -> String {
    let private = r.private.as_deref().unwrap_or("[private redacted]");
    format!(
        "open {} | private {} | decision {}",
        r.open, private, r.decision
    )
}

fn explanation_line(r: &ExplanationRecord) -> String {
    let mut s = r.literals.clone();
    if r.redacted_literals > 0 {
        let hidden = format!("[{} private literal(s) redacted]", r.redacted_literals);
        s = if r.open_part.is_empty() || r.open_part == "⊤" {
            hidden
        } else {
            format!("{s} ∧ {hidden}")
        };
    }
    let _ = write!(s, "  ({}, decision {}", r.class_name(), r.decision);
    if r.minimal {
        s.push_str(", minimal");
    }
    if r.non_unique {
        s.push_str(", not necessarily unique");
    }
    s.push(')');
    s
}

impl ExplanationRecord {
    fn class_name(&self) -> &'static str {
        match self.class {
            ExplanationClass::Open => "open",
            ExplanationClass::Private => "private",
            ExplanationClass::Partial => "partial",
        }
    }
}

fn annotation_line(a: &Annotation) -> String {
    match a {
        Annotation::NotSensitive => "subject does not carry the protected value; outside the audited population".into(),
        Annotation::StrictFallback { shields_tried } => format!(
            "strict mode: no explanation avoiding the sensitive feature after {shields_tried} shield(s); theorem-mode explanation reported"
        ),
    }
}

pub fn to_text(r: &Report) -> String {
    let mut s = String::new();
    let c = &r.config_echo;
    let _ = writeln!(s, "leakaudit {} ({})", r.command, c.model);
    let _ = writeln!(s, "verdict: {}", r.verdict.outcome.banner());
    let _ = writeln!(s, "scope: {}", r.verdict.scope);
    if let Some(d) = &r.verdict.decision {
        let _ = writeln!(s, "decision: {d}");
    }
    if let Some(f) = r.verdict.fully_open {
        let _ = writeln!(s, "fully open: {}", if f { "yes" } else { "no" });
    }
    let w = &r.witnesses;
    if let Some(x) = &w.subject {
        let _ = writeln!(s, "subject: {}", individual_line(x));
    }
    if let Some(e) = &w.lppae {
        let _ = writeln!(s, "lppae: {}", explanation_line(e));
    }
    if let Some(x) = &w.shield {
        let _ = writeln!(s, "shield: {}", individual_line(x));
    }
    if let Some(e) = &w.explanation {
        let _ = writeln!(s, "explanation: {}", explanation_line(e));
    }
    if let Some(x) = &w.counterexample {
        let _ = writeln!(s, "counterexample: {}", individual_line(x));
    }
    if !w.cover.is_empty() {
        let _ = writeln!(s, "cover ({} class(es)):", w.cover.len());
        for (i, e) in w.cover.iter().enumerate() {
            let _ = writeln!(
                s,
                "  [{}] blocked {} with decision {}",
                i + 1,
                e.open_literals,
                e.decision
            );
            let _ = writeln!(s, "      lppae: {}", explanation_line(&e.explanation));
            let _ = writeln!(
                s,
                "      representative: {}",
                individual_line(&e.representative)
            );
        }
    }
    if let Some(a) = &w.agreement {
        let _ = writeln!(
            s,
            "model: sat {} / brute force {}",
            leak_word(a.model_sat),
            leak_word(a.model_brute_force)
        );
        let _ = writeln!(s, "individuals checked: {}", a.individuals_checked);
        for d in &a.disagreements {
            let _ = writeln!(s, "  disagreement: {d}");
        }
    }
    for a in &w.annotations {
        let _ = writeln!(s, "note: {}", annotation_line(a));
    }
    let st = &r.stats;
    let _ = writeln!(s, "mode: {}", mode_name(c.mode));
    let _ = writeln!(s, "oracle calls: {}", st.oracle_calls);
    if let Some(i) = st.iterations {
        match st.iteration_cap {
            Some(cap) => {
                let _ = writeln!(s, "iterations: {i} (cap {cap})");
            }
            None => {
                let _ = writeln!(s, "iterations: {i}");
            }
        }
    }
    let _ = writeln!(s, "cnf: {} vars, {} clauses", st.cnf_vars, st.cnf_clauses);
    if let Some(us) = st.elapsed_us {
        let _ = writeln!(s, "elapsed: {}.{:03} ms", us / 1000, us % 1000);
    }
    s
}

fn leak_word(leaks: bool) -> &'static str {
    if leaks {
        "leaks"
    } else {
        "no leak"
    }
}

pub fn mode_name(mode: ExclusionMode) -> &'static str {
    match mode {
        ExclusionMode::Theorem => "theorem",
        ExclusionMode::Strict => "strict",
    }
}
