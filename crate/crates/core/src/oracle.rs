//! Brute-force ground truth by enumeration of all `2^n` individuals.
//!
//! Nothing here touches the SAT path; it exists to validate it. Enumeration
//! order is lexicographic over the feature vector (feature 0 most
//! significant, `false < true`), so reported witnesses are deterministic.

use std::collections::{BTreeSet, HashSet};

use crate::error::BudgetExceeded;
use crate::model::{
    DecisionLabel, DecisionModel, Individual, Literal, LiteralSet, ProfilePartition,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_features: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_features: 16 }
    }
}

impl OracleBudget {
    pub fn check(&self, n: usize) -> Result<(), BudgetExceeded> {
        if n > self.max_features || n >= 63 {
            Err(BudgetExceeded {
                features: n,
                budget: self.max_features,
            })
        } else {
            Ok(())
        }
    }
}

/// Feature `f` is bit `f` of the returned mask.
fn mask_of(x: &Individual) -> u64 {
    x.values()
        .iter()
        .enumerate()
        .fold(0, |m, (f, &b)| m | (b as u64) << f)
}

/// The `i`-th individual in lexicographic order.
pub fn lex_individual(i: u64, n: usize) -> Individual {
    Individual::new((0..n).map(|f| i >> (n - 1 - f) & 1 == 1).collect())
}

/// Labels of every individual, indexed by bit mask (feature `f` = bit `f`).
pub fn label_table(
    model: &DecisionModel,
    budget: OracleBudget,
) -> Result<Vec<DecisionLabel>, BudgetExceeded> {
    let n = model.n_features();
    budget.check(n)?;
    let mut values = vec![false; n];
    Ok((0..1u64 << n)
        .map(|m| {
            for (f, v) in values.iter_mut().enumerate() {
                *v = m >> f & 1 == 1;
            }
            model.evaluate_values(&values)
        })
        .collect())
}

/// Whether no individual shares `x`'s open profile and decision while
/// differing on the sensitive feature. Enumerates every completion of the
/// open profile of `x`.
pub fn bf_individual_leaks(
    model: &DecisionModel,
    partition: &ProfilePartition,
    x: &Individual,
    budget: OracleBudget,
) -> Result<bool, BudgetExceeded> {
    let n = model.n_features();
    budget.check(n)?;
    let d = model.evaluate(x);
    let s = partition.sensitive();
    let private: Vec<usize> = partition.private_features().collect();
    let mut y = x.clone();
    for m in 0..1u64 << private.len() {
        for (i, &f) in private.iter().enumerate() {
            y.set(f, m >> i & 1 == 1);
        }
        if y.value(s) != x.value(s) && model.evaluate(&y) == d {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per-individual leakage for every individual with `x[s] = ν`, in
/// lexicographic order.
pub fn bf_leak_table(
    model: &DecisionModel,
    partition: &ProfilePartition,
    budget: OracleBudget,
) -> Result<Vec<(Individual, bool)>, BudgetExceeded> {
    let n = model.n_features();
    let labels = label_table(model, budget)?;
    let open_mask: u64 = partition.open_features().fold(0, |m, f| m | 1 << f);
    let s = partition.sensitive();
    let nu = partition.protected_value();
    // (open bits, label) pairs realised by some individual with x[s] ≠ ν.
    let shields: HashSet<(u64, DecisionLabel)> = (0..1u64 << n)
        .filter(|m| (m >> s & 1 == 1) != nu)
        .map(|m| (m & open_mask, labels[m as usize]))
        .collect();
    Ok((0..1u64 << n)
        .map(|i| lex_individual(i, n))
        .filter(|x| partition.is_sensitive(x))
        .map(|x| {
            let m = mask_of(&x);
            let leaks = !shields.contains(&(m & open_mask, labels[m as usize]));
            (x, leaks)
        })
        .collect())
}

/// The first leaking individual in lexicographic order, if any.
pub fn bf_model_leaks(
    model: &DecisionModel,
    partition: &ProfilePartition,
    budget: OracleBudget,
) -> Result<Option<Individual>, BudgetExceeded> {
    Ok(bf_leak_table(model, partition, budget)?
        .into_iter()
        .find(|(_, leaks)| *leaks)
        .map(|(x, _)| x))
}

/// Whether every completion of `xp` receives `d`.
pub fn bf_is_valid(
    model: &DecisionModel,
    xp: &LiteralSet,
    d: DecisionLabel,
    budget: OracleBudget,
) -> Result<bool, BudgetExceeded> {
    let n = model.n_features();
    budget.check(n)?;
    let free: Vec<usize> = (0..n).filter(|&f| !xp.mentions(f)).collect();
    let mut y = Individual::new(vec![false; n]);
    for l in xp.iter() {
        y.set(l.feature, l.value);
    }
    for m in 0..1u64 << free.len() {
        for (i, &f) in free.iter().enumerate() {
            y.set(f, m >> i & 1 == 1);
        }
        if model.evaluate(&y) != d {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All subset-minimal valid subsets of `x`'s literals for `x`'s decision.
pub fn bf_enumerate_min_explanations(
    model: &DecisionModel,
    x: &Individual,
    budget: OracleBudget,
) -> Result<BTreeSet<LiteralSet>, BudgetExceeded> {
    let labels = label_table(model, budget)?;
    Ok(min_explanations_from_table(&labels, model.n_features(), x))
}

/// As [`bf_enumerate_min_explanations`], reusing a precomputed label table.
pub fn min_explanations_from_table(
    labels: &[DecisionLabel],
    n: usize,
    x: &Individual,
) -> BTreeSet<LiteralSet> {
    let full = (1u64 << n) - 1;
    let xm = mask_of(x);
    let d = labels[xm as usize];
    // valid[k]: fixing the features in k to x's values forces d.
    let valid: Vec<bool> = (0..=full)
        .map(|kept| {
            let free = full & !kept;
            let base = xm & kept;
            let mut sub = free;
            loop {
                if labels[(base | sub) as usize] != d {
                    return false;
                }
                if sub == 0 {
                    return true;
                }
                sub = (sub - 1) & free;
            }
        })
        .collect();
    (0..=full)
        .filter(|&k| valid[k as usize])
        .filter(|&k| (0..n).all(|f| k >> f & 1 == 0 || !valid[(k & !(1 << f)) as usize]))
        .map(|k| {
            LiteralSet::from_literals(
                (0..n)
                    .filter(|f| k >> f & 1 == 1)
                    .map(|f| Literal::new(f, x.value(f))),
            )
            .expect("subset of one individual")
        })
        .collect()
}

/// Enumerative restatement of the LPPAE characterisation: some individual
/// with `x`'s decision has a minimal explanation whose open part `x`
/// satisfies and which avoids `s = ν`.
pub fn bf_lppae_exists(
    model: &DecisionModel,
    partition: &ProfilePartition,
    x: &Individual,
    budget: OracleBudget,
) -> Result<bool, BudgetExceeded> {
    let n = model.n_features();
    let labels = label_table(model, budget)?;
    let d = model.evaluate(x);
    let protected = partition.protected_literal();
    let open = x.open_profile(partition);
    for m in 0..1u64 << n {
        if labels[m as usize] != d {
            continue;
        }
        let y = Individual::from_bits(m, n);
        let found = min_explanations_from_table(&labels, n, &y)
            .iter()
            .any(|xp| !xp.contains(protected) && xp.open_part(partition).is_subset(&open));
        if found {
            return Ok(true);
        }
    }
    Ok(false)
}
