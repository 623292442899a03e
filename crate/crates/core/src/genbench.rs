//! Instance generation: seeded random models, and leakage instances built
//! from `∃Y ∀Z φ` problems.
//!
//! For a QBF `∃Y ∀Z φ(Y, Z)` the reduction uses features `Y ∪ Z ∪ {s}` with
//! `Y` open, `Z ∪ {s}` private, protected literal `s = true` and
//! `Δ(x) = x[s] ∨ ¬φ(x)`. The model leaks iff the QBF is true.
//!
//! QBF text format:
//!
//! ```text
//! # comment
//! exists y1 y2; forall z1 z2;
//! (y1 | z1) & !(y2 & z2)
//! ```
//!
//! The prefix is `exists <names>;` followed by `forall <names>;` (either list
//! may be empty). The matrix uses `!`, `&`, `|`, parentheses, `true`,
//! `false` and variable names (`[A-Za-z_][A-Za-z0-9_]*`); `!` binds tightest,
//! then `&`, then `|`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::GenError;
use crate::interchange::Instance;
use crate::model::{
    DecisionLabel, DecisionModel, FeatureSpace, Formula, ModelKind, ProfilePartition,
    ThresholdNetwork, ThresholdUnit, Tree,
};
use crate::oracle::OracleBudget;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GenKind {
    Formula,
    Tree,
    Threshold,
}

impl GenKind {
    pub const ALL: [GenKind; 3] = [GenKind::Formula, GenKind::Tree, GenKind::Threshold];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeParams {
    pub formula_depth: u32,
    pub tree_depth: u32,
    /// Threshold weights are drawn from `[-max_weight, max_weight]`.
    pub max_weight: i64,
    /// Hidden threshold units; 0 gives a single-layer network.
    pub hidden_units: usize,
    /// Label count for trees and threshold networks (formulas are binary).
    pub labels: usize,
    /// Attempts at drawing a non-constant model.
    pub retries: usize,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            formula_depth: 3,
            tree_depth: 4,
            max_weight: 4,
            hidden_units: 0,
            labels: 2,
            retries: 64,
        }
    }
}

impl ShapeParams {
    fn validate(&self, kind: GenKind) -> Result<(), GenError> {
        if self.max_weight < 1 {
            return Err(GenError::InvalidShape(
                "max_weight must be at least 1".into(),
            ));
        }
        if self.labels < 2 {
            return Err(GenError::InvalidShape(
                "at least two labels are needed".into(),
            ));
        }
        if kind == GenKind::Formula && self.labels != 2 {
            return Err(GenError::InvalidShape("formula models are binary".into()));
        }
        if self.retries == 0 {
            return Err(GenError::InvalidShape("retries must be positive".into()));
        }
        Ok(())
    }
}

/// A reproducible random instance. The same arguments always give the same
/// instance; the random stream is ChaCha8 seeded from `seed`.
pub fn random_model(
    seed: u64,
    n_features: usize,
    kind: GenKind,
    shape: ShapeParams,
) -> Result<Instance, GenError> {
    if n_features < 2 {
        return Err(GenError::InvalidShape(
            "need at least two features: one open and one sensitive".into(),
        ));
    }
    shape.validate(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = FeatureSpace::new((0..n_features).map(|i| format!("x{i}")))?;

    let mut order: Vec<usize> = (0..n_features).collect();
    order.shuffle(&mut rng);
    let n_open = rng.gen_range(1..n_features);
    let mut open = order[..n_open].to_vec();
    open.sort_unstable();
    let sensitive = order[rng.gen_range(n_open..n_features)];
    let partition = ProfilePartition::new(&space, &open, sensitive, rng.gen_bool(0.5))?;

    let labels: Vec<DecisionLabel> = (0..shape.labels as u32).map(DecisionLabel).collect();
    let mut last = None;
    for _ in 0..shape.retries {
        let kind = match kind {
            GenKind::Formula => {
                ModelKind::Formula(random_formula(&mut rng, n_features, shape.formula_depth))
            }
            GenKind::Tree => {
                let mut used = vec![false; n_features];
                ModelKind::Tree(random_tree(
                    &mut rng,
                    &mut used,
                    shape.tree_depth,
                    shape.labels,
                    true,
                ))
            }
            GenKind::Threshold => ModelKind::Threshold(random_network(&mut rng, n_features, shape)),
        };
        let model = DecisionModel::new(&space, kind, labels.clone())?;
        if !looks_constant(&model, &mut rng) {
            return Ok(Instance::new(space, partition, model));
        }
        last = Some(model);
    }
    // Bounded retries exhausted; a constant model is still a valid instance.
    Ok(Instance::new(space, partition, last.expect("retries > 0")))
}

fn looks_constant(model: &DecisionModel, rng: &mut ChaCha8Rng) -> bool {
    let n = model.n_features();
    let first = model.evaluate_values(&vec![false; n]);
    let mut values = vec![false; n];
    if n <= 16 {
        !(0..1u64 << n).any(|m| {
            for (f, v) in values.iter_mut().enumerate() {
                *v = m >> f & 1 == 1;
            }
            model.evaluate_values(&values) != first
        })
    } else {
        !(0..4096).any(|_| {
            values.iter_mut().for_each(|v| *v = rng.gen());
            model.evaluate_values(&values) != first
        })
    }
}

fn random_literal(rng: &mut ChaCha8Rng, n: usize) -> Formula {
    let v = Formula::Var(rng.gen_range(0..n));
    if rng.gen_bool(0.3) {
        Formula::not(v)
    } else {
        v
    }
}

fn random_formula(rng: &mut ChaCha8Rng, n: usize, depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        return random_literal(rng, n);
    }
    let arity = rng.gen_range(2..=3);
    let args = (0..arity)
        .map(|_| random_formula(rng, n, depth - 1))
        .collect();
    match rng.gen_range(0..10) {
        0 => Formula::not(Formula::And(args)),
        1..=4 => Formula::And(args),
        _ => Formula::Or(args),
    }
}

fn random_tree(
    rng: &mut ChaCha8Rng,
    used: &mut [bool],
    depth: u32,
    labels: usize,
    root: bool,
) -> Tree {
    let free: Vec<usize> = (0..used.len()).filter(|&f| !used[f]).collect();
    if depth == 0 || free.is_empty() || (!root && rng.gen_bool(0.25)) {
        return Tree::Leaf(DecisionLabel(rng.gen_range(0..labels as u32)));
    }
    let test = free[rng.gen_range(0..free.len())];
    used[test] = true;
    let t = random_tree(rng, used, depth - 1, labels, false);
    let f = random_tree(rng, used, depth - 1, labels, false);
    used[test] = false;
    Tree::node(test, t, f)
}

fn random_unit(rng: &mut ChaCha8Rng, inputs: usize, max_weight: i64) -> ThresholdUnit {
    let weights: Vec<i64> = (0..inputs)
        .map(|_| rng.gen_range(-max_weight..=max_weight))
        .collect();
    let lo: i64 = weights.iter().filter(|&&w| w < 0).sum();
    let hi: i64 = weights.iter().filter(|&&w| w > 0).sum();
    // lo < bias <= hi makes the unit itself non-constant when possible.
    let bias = if lo < hi {
        rng.gen_range(lo + 1..=hi)
    } else {
        1
    };
    ThresholdUnit { weights, bias }
}

fn random_network(rng: &mut ChaCha8Rng, n: usize, shape: ShapeParams) -> ThresholdNetwork {
    let mut layers = Vec::new();
    let mut width = n;
    if shape.hidden_units > 0 {
        layers.push(
            (0..shape.hidden_units)
                .map(|_| random_unit(rng, n, shape.max_weight))
                .collect(),
        );
        width = shape.hidden_units;
    }
    layers.push(
        (0..shape.labels - 1)
            .map(|_| random_unit(rng, width, shape.max_weight))
            .collect(),
    );
    ThresholdNetwork { layers }
}

/// `∃ exists ∀ forall. matrix`; matrix variables index `exists ++ forall`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QbfInstance {
    pub exists: Vec<String>,
    pub forall: Vec<String>,
    pub matrix: Formula,
}

impl QbfInstance {
    pub fn new(
        exists: Vec<String>,
        forall: Vec<String>,
        matrix: Formula,
    ) -> Result<Self, GenError> {
        let mut seen = std::collections::BTreeSet::new();
        for name in exists.iter().chain(&forall) {
            if !seen.insert(name.as_str()) {
                return Err(GenError::QbfInvalid(format!(
                    "variable `{name}` bound twice"
                )));
            }
        }
        let mut used = std::collections::BTreeSet::new();
        matrix.features(&mut used);
        if let Some(&bad) = used.iter().find(|&&v| v >= exists.len() + forall.len()) {
            return Err(GenError::QbfInvalid(format!(
                "matrix references unbound variable #{bad}"
            )));
        }
        Ok(QbfInstance {
            exists,
            forall,
            matrix,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.exists.len() + self.forall.len()
    }

    /// Truth of the QBF by exhaustive evaluation.
    pub fn brute_force_truth(&self) -> bool {
        let ny = self.exists.len();
        let nz = self.forall.len();
        let mut values = vec![false; ny + nz];
        (0..1u64 << ny).any(|y| {
            for (i, v) in values[..ny].iter_mut().enumerate() {
                *v = y >> i & 1 == 1;
            }
            (0..1u64 << nz).all(|z| {
                for (i, v) in values[ny..].iter_mut().enumerate() {
                    *v = z >> i & 1 == 1;
                }
                self.matrix.eval(&values)
            })
        })
    }

    /// Renders the instance in the QBF text format.
    pub fn to_text(&self) -> String {
        let names: Vec<&str> = self
            .exists
            .iter()
            .chain(&self.forall)
            .map(String::as_str)
            .collect();
        format!(
            "exists {}; forall {};\n{}\n",
            self.exists.join(" "),
            self.forall.join(" "),
            render_formula(&self.matrix, &names)
        )
    }
}

fn render_formula(f: &Formula, names: &[&str]) -> String {
    match f {
        Formula::Const(b) => b.to_string(),
        Formula::Var(i) => names[*i].to_string(),
        Formula::Not(inner) => format!("!{}", render_formula(inner, names)),
        Formula::And(args) => format!(
            "({})",
            args.iter()
                .map(|a| render_formula(a, names))
                .collect::<Vec<_>>()
                .join(" & ")
        ),
        Formula::Or(args) => format!(
            "({})",
            args.iter()
                .map(|a| render_formula(a, names))
                .collect::<Vec<_>>()
                .join(" | ")
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Semi,
    Not,
    And,
    Or,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize, usize)>, GenError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line_no = li + 1;
        let trimmed = line.trim_start();
        if trimmed.starts_with('#') {
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let tok = match c {
                c if c.is_whitespace() => {
                    i += 1;
                    continue;
                }
                ';' => Tok::Semi,
                '!' => Tok::Not,
                '&' => Tok::And,
                '|' => Tok::Or,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    out.push((Tok::Ident(chars[start..i].iter().collect()), line_no, col));
                    continue;
                }
                other => {
                    return Err(GenError::QbfSyntax {
                        line: line_no,
                        column: col,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            };
            out.push((tok, line_no, col));
            i += 1;
        }
    }
    Ok(out)
}

struct QbfParser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    names: Vec<String>,
}

impl QbfParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn error(&self, message: impl Into<String>) -> GenError {
        let (line, column) = self
            .toks
            .get(self.pos)
            .or(self.toks.last())
            .map_or((1, 1), |&(_, l, c)| (l, c));
        GenError::QbfSyntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn keyword_block(&mut self, keyword: &str) -> Result<Vec<String>, GenError> {
        match self.peek() {
            Some(Tok::Ident(k)) if k == keyword => self.pos += 1,
            _ => return Err(self.error(format!("expected `{keyword}`"))),
        }
        let mut names = Vec::new();
        loop {
            match self.peek().cloned() {
                Some(Tok::Semi) => {
                    self.pos += 1;
                    return Ok(names);
                }
                Some(Tok::Ident(name)) => {
                    self.pos += 1;
                    names.push(name);
                }
                _ => return Err(self.error("expected a variable name or `;`")),
            }
        }
    }

    fn or(&mut self) -> Result<Formula, GenError> {
        let mut args = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            args.push(self.and()?);
        }
        Ok(if args.len() == 1 {
            args.pop().unwrap()
        } else {
            Formula::Or(args)
        })
    }

    fn and(&mut self) -> Result<Formula, GenError> {
        let mut args = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            args.push(self.unary()?);
        }
        Ok(if args.len() == 1 {
            args.pop().unwrap()
        } else {
            Formula::And(args)
        })
    }

    fn unary(&mut self) -> Result<Formula, GenError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "true" => Ok(Formula::Const(true)),
                    "false" => Ok(Formula::Const(false)),
                    _ => match self.names.iter().position(|n| *n == name) {
                        Some(i) => Ok(Formula::Var(i)),
                        None => {
                            self.pos -= 1;
                            Err(self.error(format!("unbound variable `{name}`")))
                        }
                    },
                }
            }
            _ => Err(self.error("expected a literal, `!` or `(`")),
        }
    }
}

pub fn parse_qbf(text: &str) -> Result<QbfInstance, GenError> {
    let mut p = QbfParser {
        toks: tokenize(text)?,
        pos: 0,
        names: Vec::new(),
    };
    let exists = p.keyword_block("exists")?;
    let forall = p.keyword_block("forall")?;
    for reserved in ["true", "false", "exists", "forall"] {
        if exists.iter().chain(&forall).any(|n| n == reserved) {
            return Err(GenError::QbfInvalid(format!(
                "`{reserved}` cannot be a variable"
            )));
        }
    }
    p.names = exists.iter().chain(&forall).cloned().collect();
    let matrix = p.or()?;
    if p.pos != p.toks.len() {
        return Err(p.error("trailing input after the matrix"));
    }
    QbfInstance::new(exists, forall, matrix)
}

/// A leakage instance from a QBF, plus the QBF's truth when the variable
/// count fits `budget` (`None` otherwise).
pub fn from_qbf(
    q: &QbfInstance,
    budget: OracleBudget,
) -> Result<(Instance, Option<bool>), GenError> {
    let mut s_name = "s".to_string();
    while q.exists.iter().chain(&q.forall).any(|n| *n == s_name) {
        s_name.push('_');
    }
    let names: Vec<String> = q
        .exists
        .iter()
        .chain(&q.forall)
        .cloned()
        .chain([s_name])
        .collect();
    let space = FeatureSpace::new(names)?;
    let s = q.n_vars();
    let open: Vec<usize> = (0..q.exists.len()).collect();
    let partition = ProfilePartition::new(&space, &open, s, true)?;
    let delta = Formula::Or(vec![Formula::Var(s), Formula::not(q.matrix.clone())]);
    let model = DecisionModel::new(
        &space,
        ModelKind::Formula(delta),
        vec![DecisionLabel(0), DecisionLabel(1)],
    )?;
    let expected = budget
        .check(q.n_vars())
        .is_ok()
        .then(|| q.brute_force_truth());
    Ok((Instance::new(space, partition, model), expected))
}

/// A random QBF with a CNF matrix of 1 to 6 clauses over `ny + nz` variables.
pub fn random_qbf(seed: u64, ny: usize, nz: usize) -> Result<QbfInstance, GenError> {
    let n = ny + nz;
    if n == 0 {
        return Err(GenError::InvalidShape(
            "a QBF needs at least one variable".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clauses = rng.gen_range(1..=6);
    let matrix = Formula::And(
        (0..clauses)
            .map(|_| {
                let width = rng.gen_range(1..=3);
                Formula::Or((0..width).map(|_| random_literal(&mut rng, n)).collect())
            })
            .collect(),
    );
    QbfInstance::new(
        (0..ny).map(|i| format!("y{i}")).collect(),
        (0..nz).map(|i| format!("z{i}")).collect(),
        matrix,
    )
}
