//! CNF compilation of decision models and the incremental satisfiability oracle.
//!
//! [`encode`] turns a [`DecisionModel`] into clauses over DIMACS-style
//! variables: one input variable per feature and one indicator per label.
//! Every definition is a full equivalence, so any total assignment of the
//! inputs propagates to exactly one true label indicator, the one matching
//! [`DecisionModel::evaluate`].
//!
//! [`SatOracle`] owns one solver context loaded with an encoding and answers
//! the two query shapes the audit needs: finding an individual under fixed
//! literals, label constraints and blocking records, and deciding whether a
//! literal set is a valid explanation for a label. Blocking records are added
//! once as clauses guarded by a selector variable and switched on per query
//! through assumptions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use batsat::{lbool, Callbacks, ClauseKind, Lit, SolverInterface, SolverOpts};
use serde::{Deserialize, Serialize};

use crate::error::{EncodeError, OracleError};
use crate::model::{
    DecisionLabel, DecisionModel, FeatureSpace, Formula, Individual, Literal, LiteralSet,
    ModelKind, ThresholdUnit,
};

/// A DIMACS literal: positive or negative 1-based variable index.
pub type CnfLit = i32;

/// Limits applied while encoding.
#[derive(Clone, Copy, Debug)]
pub struct EncodeOptions {
    pub max_clauses: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            max_clauses: 20_000_000,
        }
    }
}

/// Clauses plus the variable maps of an encoded model. Immutable once built.
#[derive(Clone, Debug)]
pub struct CnfEncoding {
    clauses: Vec<Vec<CnfLit>>,
    input_vars: Vec<u32>,
    label_vars: Vec<(DecisionLabel, u32)>,
    num_vars: u32,
}

impl CnfEncoding {
    pub fn clauses(&self) -> &[Vec<CnfLit>] {
        &self.clauses
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn n_features(&self) -> usize {
        self.input_vars.len()
    }

    pub fn input_var(&self, feature: usize) -> u32 {
        self.input_vars[feature]
    }

    pub fn labels(&self) -> impl Iterator<Item = DecisionLabel> + '_ {
        self.label_vars.iter().map(|&(d, _)| d)
    }

    pub fn label_var(&self, d: DecisionLabel) -> Option<u32> {
        self.label_vars
            .iter()
            .find(|&&(l, _)| l == d)
            .map(|&(_, v)| v)
    }

    /// Variables that are neither inputs nor label indicators.
    pub fn aux_count(&self) -> usize {
        self.num_vars as usize - self.input_vars.len() - self.label_vars.len()
    }

    pub fn literal(&self, l: Literal) -> CnfLit {
        let v = self.input_vars[l.feature] as CnfLit;
        if l.value {
            v
        } else {
            -v
        }
    }

    /// DIMACS CNF text of the encoding.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "c leakaudit encoding");
        let _ = writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(out, "{l} ");
            }
            out.push_str("0\n");
        }
        out
    }

    /// Sidecar mapping feature names and labels to DIMACS variables.
    pub fn variable_map(&self, space: &FeatureSpace) -> VariableMap {
        VariableMap {
            features: space
                .names()
                .iter()
                .zip(&self.input_vars)
                .map(|(n, &v)| (n.clone(), v))
                .collect(),
            labels: self.label_vars.iter().map(|&(d, v)| (d.0, v)).collect(),
            num_vars: self.num_vars,
            num_clauses: self.clauses.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMap {
    pub features: Vec<(String, u32)>,
    pub labels: Vec<(u32, u32)>,
    pub num_vars: u32,
    pub num_clauses: usize,
}

/// A signal in the circuit being built: a known constant or a CNF literal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sig {
    Const(bool),
    Lit(CnfLit),
}

impl std::ops::Not for Sig {
    type Output = Sig;
    fn not(self) -> Sig {
        match self {
            Sig::Const(b) => Sig::Const(!b),
            Sig::Lit(l) => Sig::Lit(-l),
        }
    }
}

struct Builder {
    clauses: Vec<Vec<CnfLit>>,
    num_vars: u32,
    max_clauses: usize,
}

impl Builder {
    fn fresh(&mut self) -> CnfLit {
        self.num_vars += 1;
        self.num_vars as CnfLit
    }

    fn add(&mut self, clause: Vec<CnfLit>) -> Result<(), EncodeError> {
        if self.clauses.len() >= self.max_clauses {
            return Err(EncodeError::Capacity {
                clauses: self.clauses.len() + 1,
                bound: self.max_clauses,
            });
        }
        self.clauses.push(clause);
        Ok(())
    }

    /// Fresh variable `v` with `v ⇔ ∧ inputs`.
    fn and(&mut self, inputs: &[Sig]) -> Result<Sig, EncodeError> {
        let mut lits = Vec::with_capacity(inputs.len());
        for &s in inputs {
            match s {
                Sig::Const(false) => return Ok(Sig::Const(false)),
                Sig::Const(true) => {}
                Sig::Lit(l) => lits.push(l),
            }
        }
        lits.sort_unstable();
        lits.dedup();
        if has_complement(&lits) {
            return Ok(Sig::Const(false));
        }
        match lits.len() {
            0 => Ok(Sig::Const(true)),
            1 => Ok(Sig::Lit(lits[0])),
            _ => {
                let v = self.fresh();
                let mut long = vec![v];
                for &l in &lits {
                    self.add(vec![-v, l])?;
                    long.push(-l);
                }
                self.add(long)?;
                Ok(Sig::Lit(v))
            }
        }
    }

    fn or(&mut self, inputs: &[Sig]) -> Result<Sig, EncodeError> {
        let negated: Vec<Sig> = inputs.iter().map(|&s| !s).collect();
        Ok(!self.and(&negated)?)
    }

    /// Binds a fresh indicator variable to a signal.
    fn indicator(&mut self, s: Sig) -> Result<u32, EncodeError> {
        let v = self.fresh();
        match s {
            Sig::Const(true) => self.add(vec![v])?,
            Sig::Const(false) => self.add(vec![-v])?,
            Sig::Lit(l) => {
                self.add(vec![-v, l])?;
                self.add(vec![v, -l])?;
            }
        }
        Ok(v as u32)
    }

    fn formula(&mut self, f: &Formula, inputs: &[Sig]) -> Result<Sig, EncodeError> {
        match f {
            Formula::Const(b) => Ok(Sig::Const(*b)),
            Formula::Var(i) => Ok(inputs[*i]),
            Formula::Not(inner) => Ok(!self.formula(inner, inputs)?),
            Formula::And(args) | Formula::Or(args) => {
                let sigs = args
                    .iter()
                    .map(|a| self.formula(a, inputs))
                    .collect::<Result<Vec<_>, _>>()?;
                if matches!(f, Formula::And(_)) {
                    self.and(&sigs)
                } else {
                    self.or(&sigs)
                }
            }
        }
    }

    /// Sequential weight counter over positive weights: returns signals
    /// `c[j-1] ⇔ Σ weights·inputs ≥ j` for `j = 1..=cap`. Weights above `cap`
    /// are clipped, which leaves every returned comparison unchanged.
    fn counter(&mut self, terms: &[(Sig, u64)], cap: u64) -> Result<Vec<Sig>, EncodeError> {
        let cap = cap as usize;
        let mut row = vec![Sig::Const(false); cap];
        for &(x, w) in terms {
            let w = (w as usize).min(cap);
            if w == 0 {
                continue;
            }
            let mut next = Vec::with_capacity(cap);
            for j in 1..=cap {
                let keep = row[j - 1];
                let via = if j <= w {
                    x
                } else {
                    self.and(&[x, row[j - w - 1]])?
                };
                next.push(self.or(&[keep, via])?);
            }
            row = next;
        }
        Ok(row)
    }

    /// Signal for `Σ weights·inputs ≥ bias` over arbitrary integer weights.
    fn threshold(&mut self, unit: &ThresholdUnit, inputs: &[Sig]) -> Result<Sig, EncodeError> {
        // w·x = |w|·¬x + w for negative w.
        let mut bound = unit.bias as i128;
        let mut terms: Vec<(Sig, u64)> = Vec::new();
        for (&w, &x) in unit.weights.iter().zip(inputs) {
            match w.cmp(&0) {
                std::cmp::Ordering::Equal => {}
                std::cmp::Ordering::Greater => terms.push((x, w as u64)),
                std::cmp::Ordering::Less => {
                    bound -= w as i128;
                    terms.push((!x, w.unsigned_abs()));
                }
            }
        }
        // Fold constants into the bound.
        let mut live = Vec::with_capacity(terms.len());
        for (x, w) in terms {
            match x {
                Sig::Const(true) => bound -= w as i128,
                Sig::Const(false) => {}
                Sig::Lit(_) => live.push((x, w)),
            }
        }
        let total: i128 = live.iter().map(|&(_, w)| w as i128).sum();
        if bound <= 0 {
            return Ok(Sig::Const(true));
        }
        if bound > total {
            return Ok(Sig::Const(false));
        }
        let g = live.iter().fold(0u64, |g, &(_, w)| gcd(g, w));
        let g = g.max(1) as i128;
        let bound = (bound + g - 1) / g;
        let scaled: Vec<(Sig, u64)> = live
            .iter()
            .map(|&(x, w)| (x, (w as i128 / g) as u64))
            .collect();
        let row = self.counter(&scaled, bound as u64)?;
        Ok(row[bound as usize - 1])
    }
}

fn has_complement(sorted: &[CnfLit]) -> bool {
    sorted
        .iter()
        .any(|&l| l < 0 && sorted.binary_search(&-l).is_ok())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn encode(model: &DecisionModel) -> Result<CnfEncoding, EncodeError> {
    encode_with(model, EncodeOptions::default())
}

pub fn encode_with(model: &DecisionModel, opts: EncodeOptions) -> Result<CnfEncoding, EncodeError> {
    let n = model.n_features();
    let mut b = Builder {
        clauses: Vec::new(),
        num_vars: n as u32,
        max_clauses: opts.max_clauses,
    };
    let input_vars: Vec<u32> = (1..=n as u32).collect();
    let inputs: Vec<Sig> = input_vars.iter().map(|&v| Sig::Lit(v as CnfLit)).collect();
    let labels = model.labels();

    let label_vars = match model.kind() {
        ModelKind::Formula(f) => {
            let out = b.formula(f, &inputs)?;
            vec![
                (labels[0], b.indicator(!out)?),
                (labels[1], b.indicator(out)?),
            ]
        }
        ModelKind::Tree(t) => {
            let vars: Vec<(DecisionLabel, u32)> = labels
                .iter()
                .map(|&d| {
                    b.num_vars += 1;
                    (d, b.num_vars)
                })
                .collect();
            let mut paths = Vec::new();
            t.for_each_path(&mut |path, d| paths.push((path.to_vec(), d)));
            for (path, d) in paths {
                let v = vars
                    .iter()
                    .find(|&&(l, _)| l == d)
                    .map(|&(_, v)| v)
                    .expect("validated leaf");
                let mut clause: Vec<CnfLit> = path
                    .iter()
                    .map(|l| {
                        if l.value {
                            -(input_vars[l.feature] as CnfLit)
                        } else {
                            input_vars[l.feature] as CnfLit
                        }
                    })
                    .collect();
                clause.push(v as CnfLit);
                b.add(clause)?;
            }
            b.add(vars.iter().map(|&(_, v)| v as CnfLit).collect())?;
            for i in 0..vars.len() {
                for j in i + 1..vars.len() {
                    b.add(vec![-(vars[i].1 as CnfLit), -(vars[j].1 as CnfLit)])?;
                }
            }
            vars
        }
        ModelKind::Threshold(net) => {
            let mut current = inputs.clone();
            for layer in &net.layers {
                let mut next = Vec::with_capacity(layer.len());
                for unit in layer {
                    next.push(b.threshold(unit, &current)?);
                }
                current = next;
            }
            let m = current.len();
            let unit_terms: Vec<(Sig, u64)> = current.iter().map(|&s| (s, 1)).collect();
            let at_least = b.counter(&unit_terms, m as u64)?;
            let ge = |j: usize| -> Sig {
                if j == 0 {
                    Sig::Const(true)
                } else if j > m {
                    Sig::Const(false)
                } else {
                    at_least[j - 1]
                }
            };
            let mut vars = Vec::with_capacity(labels.len());
            for (j, &d) in labels.iter().enumerate() {
                let exactly = b.and(&[ge(j), !ge(j + 1)])?;
                vars.push((d, b.indicator(exactly)?));
            }
            vars
        }
    };

    Ok(CnfEncoding {
        clauses: b.clauses,
        input_vars,
        label_vars,
        num_vars: b.num_vars,
    })
}

/// Excludes every individual that satisfies `literals` and, when set,
/// receives `label`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockRecord {
    pub literals: LiteralSet,
    pub label: Option<DecisionLabel>,
}

impl BlockRecord {
    pub fn blocks(&self, x: &Individual, model: &DecisionModel) -> bool {
        x.satisfies(&self.literals) && self.label.is_none_or(|d| model.evaluate(x) == d)
    }
}

/// The constraint store of a `find_individual` query.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryConstraints {
    pub fixed: LiteralSet,
    pub required_label: Option<DecisionLabel>,
    pub forbidden_label: Option<DecisionLabel>,
    pub blocked: Vec<BlockRecord>,
}

impl QueryConstraints {
    /// Post-hoc check of a candidate against every constraint by direct evaluation.
    pub fn admits(&self, x: &Individual, model: &DecisionModel) -> bool {
        let d = model.evaluate(x);
        x.satisfies(&self.fixed)
            && self.required_label.is_none_or(|r| r == d)
            && self.forbidden_label.is_none_or(|f| f != d)
            && !self.blocked.iter().any(|b| b.blocks(x, model))
    }
}

/// Solver behaviour knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Conflicts allowed per query; `None` means unbounded.
    pub conflict_budget: Option<u64>,
    pub seed: u64,
    pub random_var_freq: f64,
    /// Preferred decision value for feature variables; `None` leaves it to
    /// the solver's phase saving.
    pub feature_phase: Option<bool>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            conflict_budget: None,
            seed: 91_648_253,
            random_var_freq: 0.0,
            feature_phase: Some(true),
        }
    }
}

/// Counts conflicts of the current `solve` call and stops at the budget.
#[derive(Default)]
struct Budget {
    limit: Option<u64>,
    conflicts: u64,
}

impl Callbacks for Budget {
    fn on_start(&mut self) {
        self.conflicts = 0;
    }

    fn on_new_clause(&mut self, _c: &[Lit], src: ClauseKind) {
        if matches!(src, ClauseKind::Learnt) {
            self.conflicts += 1;
        }
    }

    fn stop(&self) -> bool {
        self.limit.is_some_and(|l| self.conflicts >= l)
    }
}

/// One solver context loaded with an encoding. Single owner; create one per
/// thread from a shared `Arc<CnfEncoding>`.
pub struct SatOracle {
    enc: Arc<CnfEncoding>,
    solver: batsat::Solver<Budget>,
    vars: Vec<batsat::Var>,
    selectors: HashMap<BlockRecord, Lit>,
    calls: u64,
    budget: Option<u64>,
}

impl SatOracle {
    pub fn new(enc: Arc<CnfEncoding>, config: SolverConfig) -> Self {
        let opts = SolverOpts {
            random_seed: (config.seed % 2_147_483_646 + 1) as f64,
            random_var_freq: config.random_var_freq,
            ..SolverOpts::default()
        };
        let mut solver = batsat::Solver::new(
            opts,
            Budget {
                limit: config.conflict_budget,
                conflicts: 0,
            },
        );
        let mut upol = vec![lbool::UNDEF; enc.num_vars as usize];
        if let Some(phase) = config.feature_phase {
            for &v in &enc.input_vars {
                upol[v as usize - 1] = lbool::from(phase);
            }
        }
        let vars: Vec<batsat::Var> = upol.iter().map(|&p| solver.new_var(p, true)).collect();
        let mut oracle = SatOracle {
            enc,
            solver,
            vars,
            selectors: HashMap::new(),
            calls: 0,
            budget: config.conflict_budget,
        };
        let clauses = oracle.enc.clauses.clone();
        for c in clauses {
            let mut lits: Vec<Lit> = c.iter().map(|&l| oracle.lit(l)).collect();
            oracle.solver.add_clause_reuse(&mut lits);
        }
        oracle
    }

    pub fn encoding(&self) -> &CnfEncoding {
        &self.enc
    }

    /// Number of satisfiability calls issued so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    fn lit(&self, l: CnfLit) -> Lit {
        Lit::new(self.vars[l.unsigned_abs() as usize - 1], l > 0)
    }

    fn label_lit(&self, d: DecisionLabel) -> Result<Lit, OracleError> {
        self.enc
            .label_var(d)
            .map(|v| self.lit(v as CnfLit))
            .ok_or_else(|| OracleError::BadQuery(format!("label {d} not in the model")))
    }

    fn feature_lit(&self, l: Literal) -> Result<Lit, OracleError> {
        if l.feature >= self.enc.n_features() {
            return Err(OracleError::BadQuery(format!(
                "feature {} out of range",
                l.feature
            )));
        }
        Ok(self.lit(self.enc.literal(l)))
    }

    fn selector(&mut self, record: &BlockRecord) -> Result<Lit, OracleError> {
        if let Some(&s) = self.selectors.get(record) {
            return Ok(s);
        }
        let mut clause = Vec::with_capacity(record.literals.len() + 2);
        for l in record.literals.iter() {
            clause.push(!self.feature_lit(l)?);
        }
        if let Some(d) = record.label {
            clause.push(!self.label_lit(d)?);
        }
        let s = Lit::new(self.solver.new_var_default(), true);
        clause.push(!s);
        self.solver.add_clause_reuse(&mut clause);
        self.selectors.insert(record.clone(), s);
        Ok(s)
    }

    /// Adds a blocking record as a permanent clause of this context. Later
    /// queries can never see individuals it excludes.
    pub fn add_block(&mut self, record: &BlockRecord) -> Result<(), OracleError> {
        let mut clause = Vec::with_capacity(record.literals.len() + 1);
        for l in record.literals.iter() {
            clause.push(!self.feature_lit(l)?);
        }
        if let Some(d) = record.label {
            clause.push(!self.label_lit(d)?);
        }
        self.solver.add_clause_reuse(&mut clause);
        Ok(())
    }

    fn solve(&mut self, assumptions: &[Lit]) -> Result<bool, OracleError> {
        self.calls += 1;
        let r = self.solver.solve_limited(assumptions);
        if r == lbool::TRUE {
            Ok(true)
        } else if r == lbool::FALSE {
            Ok(false)
        } else {
            Err(OracleError::BudgetExhausted(self.budget.unwrap_or(0)))
        }
    }

    /// An individual satisfying `q`, or `None` when provably none exists.
    pub fn find_individual(
        &mut self,
        q: &QueryConstraints,
    ) -> Result<Option<Individual>, OracleError> {
        if q.required_label.is_some() && q.required_label == q.forbidden_label {
            return Err(OracleError::BadQuery(
                "label both required and forbidden".into(),
            ));
        }
        let mut assumptions = Vec::new();
        for l in q.fixed.iter() {
            assumptions.push(self.feature_lit(l)?);
        }
        if let Some(d) = q.required_label {
            assumptions.push(self.label_lit(d)?);
        }
        if let Some(d) = q.forbidden_label {
            assumptions.push(!self.label_lit(d)?);
        }
        for record in &q.blocked {
            assumptions.push(self.selector(record)?);
        }
        if !self.solve(&assumptions)? {
            return Ok(None);
        }
        let values = (0..self.enc.n_features())
            .map(|f| {
                self.solver
                    .value_var(self.vars[self.enc.input_vars[f] as usize - 1])
                    == lbool::TRUE
            })
            .collect();
        Ok(Some(Individual::new(values)))
    }

    /// Whether every completion of `xp` receives label `d`, decided by the
    /// unsatisfiability of `xp ∧ label ≠ d`.
    pub fn check_validity(
        &mut self,
        xp: &LiteralSet,
        d: DecisionLabel,
    ) -> Result<bool, OracleError> {
        let mut assumptions = Vec::with_capacity(xp.len() + 1);
        for l in xp.iter() {
            assumptions.push(self.feature_lit(l)?);
        }
        assumptions.push(!self.label_lit(d)?);
        Ok(!self.solve(&assumptions)?)
    }
}
