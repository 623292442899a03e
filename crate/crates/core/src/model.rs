//! Feature spaces, individuals, literal sets and the decision models that are audited.
//!
//! Every feature is Boolean. An [`Individual`] is a total assignment over a
//! [`FeatureSpace`]; a [`LiteralSet`] is a partial, consistent conjunction of
//! literals (properties and explanations). The [`ProfilePartition`] splits the
//! features into the open profile (visible to an observer) and the private
//! profile, and singles out the sensitive feature together with the value
//! that must not be inferable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::ModelError;

/// Ordered, uniquely named Boolean features with dense indices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSpace {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl FeatureSpace {
    pub fn new<I, S>(names: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ModelError::EmptyFeatureSpace);
        }
        let mut index = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(ModelError::EmptyFeatureName(i));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(ModelError::DuplicateFeature(name.clone()));
            }
        }
        Ok(FeatureSpace { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// Always false; a feature space holds at least one feature.
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, feature: usize) -> &str {
        &self.names[feature]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// Which side of the partition a feature (or literal) lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Open,
    Private,
}

/// Split of the features into open and private profiles, plus the protected
/// sensitive literal `s = ν`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProfilePartition {
    side: Vec<Side>,
    sensitive: usize,
    protected_value: bool,
}

impl ProfilePartition {
    pub fn new(
        space: &FeatureSpace,
        open: &[usize],
        sensitive: usize,
        protected_value: bool,
    ) -> Result<Self, ModelError> {
        let n = space.len();
        let mut side = vec![Side::Private; n];
        for &f in open {
            if f >= n {
                return Err(ModelError::UnknownFeatureIndex(f));
            }
            if side[f] == Side::Open {
                return Err(ModelError::DuplicateFeature(space.name(f).to_string()));
            }
            side[f] = Side::Open;
        }
        if sensitive >= n {
            return Err(ModelError::UnknownFeatureIndex(sensitive));
        }
        if side[sensitive] == Side::Open {
            return Err(ModelError::SensitiveNotPrivate(
                space.name(sensitive).to_string(),
            ));
        }
        Ok(ProfilePartition {
            side,
            sensitive,
            protected_value,
        })
    }

    pub fn len(&self) -> usize {
        self.side.len()
    }

    pub fn is_empty(&self) -> bool {
        self.side.is_empty()
    }

    pub fn side(&self, feature: usize) -> Side {
        self.side[feature]
    }

    pub fn is_open(&self, feature: usize) -> bool {
        self.side[feature] == Side::Open
    }

    pub fn open_features(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.side.len()).filter(move |&f| self.is_open(f))
    }

    pub fn private_features(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.side.len()).filter(move |&f| !self.is_open(f))
    }

    pub fn open_count(&self) -> usize {
        self.open_features().count()
    }

    pub fn sensitive(&self) -> usize {
        self.sensitive
    }

    pub fn protected_value(&self) -> bool {
        self.protected_value
    }

    /// The literal `s = ν` whose possession must stay hidden.
    pub fn protected_literal(&self) -> Literal {
        Literal::new(self.sensitive, self.protected_value)
    }

    /// Whether `x[s] = ν`.
    pub fn is_sensitive(&self, x: &Individual) -> bool {
        x.value(self.sensitive) == self.protected_value
    }
}

/// A single feature literal: `feature` when `value` is true, `¬feature` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub feature: usize,
    pub value: bool,
}

impl Literal {
    pub fn new(feature: usize, value: bool) -> Self {
        Literal { feature, value }
    }

    pub fn negated(self) -> Self {
        Literal::new(self.feature, !self.value)
    }
}

impl std::ops::Not for Literal {
    type Output = Literal;

    fn not(self) -> Literal {
        self.negated()
    }
}

/// A total Boolean assignment over a feature space.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Individual(Vec<bool>);

impl Individual {
    pub fn new(values: Vec<bool>) -> Self {
        Individual(values)
    }

    /// Bit `i` of `bits` gives feature `i`. Only meaningful for `n <= 64`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        Individual((0..n).map(|i| bits >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self, feature: usize) -> bool {
        self.0[feature]
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn set(&mut self, feature: usize, value: bool) {
        self.0[feature] = value;
    }

    pub fn literal(&self, feature: usize) -> Literal {
        Literal::new(feature, self.0[feature])
    }

    /// The individual as a conjunction of its `n` literals.
    pub fn literals(&self) -> LiteralSet {
        LiteralSet(self.0.iter().copied().enumerate().collect())
    }

    pub fn satisfies(&self, set: &LiteralSet) -> bool {
        set.iter().all(|l| self.0[l.feature] == l.value)
    }

    /// Open (or private) profile of the individual.
    pub fn restrict(&self, side: Side, partition: &ProfilePartition) -> LiteralSet {
        LiteralSet(
            self.0
                .iter()
                .copied()
                .enumerate()
                .filter(|&(f, _)| partition.side(f) == side)
                .collect(),
        )
    }

    pub fn open_profile(&self, partition: &ProfilePartition) -> LiteralSet {
        self.restrict(Side::Open, partition)
    }
}

/// A consistent partial conjunction of literals, keyed by feature index.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiteralSet(BTreeMap<usize, bool>);

impl LiteralSet {
    pub fn new() -> Self {
        LiteralSet(BTreeMap::new())
    }

    /// Builds a set from literals, rejecting complementary pairs.
    pub fn from_literals<I>(literals: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = Literal>,
    {
        let mut set = LiteralSet::new();
        for l in literals {
            set.insert(l)?;
        }
        Ok(set)
    }

    /// Adds a literal. Re-adding the same literal is a no-op; adding its
    /// complement is an error.
    pub fn insert(&mut self, l: Literal) -> Result<(), ModelError> {
        match self.0.insert(l.feature, l.value) {
            Some(prev) if prev != l.value => {
                self.0.insert(l.feature, prev);
                Err(ModelError::InconsistentLiterals(l.feature))
            }
            _ => Ok(()),
        }
    }

    pub fn remove(&mut self, feature: usize) -> Option<bool> {
        self.0.remove(&feature)
    }

    pub fn get(&self, feature: usize) -> Option<bool> {
        self.0.get(&feature).copied()
    }

    pub fn contains(&self, l: Literal) -> bool {
        self.get(l.feature) == Some(l.value)
    }

    pub fn mentions(&self, feature: usize) -> bool {
        self.0.contains_key(&feature)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Literal> + '_ {
        self.0.iter().map(|(&f, &v)| Literal::new(f, v))
    }

    /// The features mentioned by the set (`vars(XP)`).
    pub fn features(&self) -> BTreeSet<usize> {
        self.0.keys().copied().collect()
    }

    pub fn is_subset(&self, other: &LiteralSet) -> bool {
        self.iter().all(|l| other.contains(l))
    }

    pub fn restrict(&self, side: Side, partition: &ProfilePartition) -> LiteralSet {
        LiteralSet(
            self.0
                .iter()
                .filter(|(&f, _)| partition.side(f) == side)
                .map(|(&f, &v)| (f, v))
                .collect(),
        )
    }

    pub fn open_part(&self, partition: &ProfilePartition) -> LiteralSet {
        self.restrict(Side::Open, partition)
    }

    pub fn private_part(&self, partition: &ProfilePartition) -> LiteralSet {
        self.restrict(Side::Private, partition)
    }

    /// Union of two sets known to be consistent with each other.
    pub fn union(&self, other: &LiteralSet) -> Result<LiteralSet, ModelError> {
        let mut out = self.clone();
        for l in other.iter() {
            out.insert(l)?;
        }
        Ok(out)
    }

    pub fn without(&self, l: Literal) -> LiteralSet {
        let mut out = self.clone();
        if out.contains(l) {
            out.remove(l.feature);
        }
        out
    }

    /// Renders the conjunction with feature names, e.g. `D ∧ ¬H`; `⊤` when empty.
    pub fn render(&self, space: &FeatureSpace) -> String {
        if self.is_empty() {
            return "⊤".to_string();
        }
        self.iter()
            .map(|l| render_literal(l, space))
            .collect::<Vec<_>>()
            .join(" ∧ ")
    }
}

pub fn render_literal(l: Literal, space: &FeatureSpace) -> String {
    if l.value {
        space.name(l.feature).to_string()
    } else {
        format!("¬{}", space.name(l.feature))
    }
}

/// A decision label; the decision domain is a small set of non-negative integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecisionLabel(pub u32);

impl fmt::Display for DecisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Boolean formula over features.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Const(bool),
    Var(usize),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn var(f: usize) -> Self {
        Formula::Var(f)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn eval(&self, x: &[bool]) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Var(f) => x[*f],
            Formula::Not(inner) => !inner.eval(x),
            Formula::And(args) => args.iter().all(|a| a.eval(x)),
            Formula::Or(args) => args.iter().any(|a| a.eval(x)),
        }
    }

    /// Feature indices referenced anywhere in the formula.
    pub fn features(&self, out: &mut BTreeSet<usize>) {
        match self {
            Formula::Const(_) => {}
            Formula::Var(f) => {
                out.insert(*f);
            }
            Formula::Not(inner) => inner.features(out),
            Formula::And(args) | Formula::Or(args) => args.iter().for_each(|a| a.features(out)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Const(_) | Formula::Var(_) => 1,
            Formula::Not(inner) => 1 + inner.size(),
            Formula::And(args) | Formula::Or(args) => {
                1 + args.iter().map(Formula::size).sum::<usize>()
            }
        }
    }
}

/// Decision tree: internal nodes test one feature, leaves carry a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Leaf(DecisionLabel),
    Node {
        test: usize,
        if_true: Box<Tree>,
        if_false: Box<Tree>,
    },
}

impl Tree {
    pub fn node(test: usize, if_true: Tree, if_false: Tree) -> Self {
        Tree::Node {
            test,
            if_true: Box::new(if_true),
            if_false: Box::new(if_false),
        }
    }

    pub fn eval(&self, x: &[bool]) -> DecisionLabel {
        let mut node = self;
        loop {
            match node {
                Tree::Leaf(d) => return *d,
                Tree::Node {
                    test,
                    if_true,
                    if_false,
                } => node = if x[*test] { if_true } else { if_false },
            }
        }
    }

    /// Visits every root-to-leaf path as `(tested literals, leaf label)`.
    pub fn for_each_path<F: FnMut(&[Literal], DecisionLabel)>(&self, f: &mut F) {
        fn walk<F: FnMut(&[Literal], DecisionLabel)>(t: &Tree, path: &mut Vec<Literal>, f: &mut F) {
            match t {
                Tree::Leaf(d) => f(path, *d),
                Tree::Node {
                    test,
                    if_true,
                    if_false,
                } => {
                    path.push(Literal::new(*test, true));
                    walk(if_true, path, f);
                    path.pop();
                    path.push(Literal::new(*test, false));
                    walk(if_false, path, f);
                    path.pop();
                }
            }
        }
        walk(self, &mut Vec::new(), f)
    }
}

/// One threshold unit: fires iff `Σ weights[i]·input[i] ≥ bias`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdUnit {
    pub weights: Vec<i64>,
    pub bias: i64,
}

impl ThresholdUnit {
    pub fn fires(&self, inputs: &[bool]) -> bool {
        let sum: i64 = self
            .weights
            .iter()
            .zip(inputs)
            .filter(|(_, &x)| x)
            .map(|(w, _)| *w)
            .sum();
        sum >= self.bias
    }
}

/// Layered network of threshold units. Layer 0 reads the features; every
/// later layer reads the outputs of the previous one. The decision is the
/// label whose index equals the number of firing units in the final layer,
/// so a binary network ends in a single unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdNetwork {
    pub layers: Vec<Vec<ThresholdUnit>>,
}

impl ThresholdNetwork {
    pub fn output_count(&self, x: &[bool]) -> usize {
        let mut current: Vec<bool> = x.to_vec();
        for layer in &self.layers {
            current = layer.iter().map(|u| u.fires(&current)).collect();
        }
        current.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// A formula maps `false` to `labels[0]` and `true` to `labels[1]`.
    Formula(Formula),
    Tree(Tree),
    Threshold(ThresholdNetwork),
}

/// An evaluable decision function `Δ : X → D` with its label set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionModel {
    kind: ModelKind,
    labels: Vec<DecisionLabel>,
    n_features: usize,
}

impl DecisionModel {
    /// Validates the model against `space`.
    pub fn new(
        space: &FeatureSpace,
        kind: ModelKind,
        labels: Vec<DecisionLabel>,
    ) -> Result<Self, ModelError> {
        let n = space.len();
        if labels.is_empty() {
            return Err(ModelError::NoLabels);
        }
        let distinct: BTreeSet<_> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(ModelError::DuplicateLabel);
        }
        match &kind {
            ModelKind::Formula(f) => {
                if labels.len() != 2 {
                    return Err(ModelError::FormulaLabels(labels.len()));
                }
                let mut used = BTreeSet::new();
                f.features(&mut used);
                if let Some(&bad) = used.iter().find(|&&i| i >= n) {
                    return Err(ModelError::UnknownFeatureIndex(bad));
                }
                validate_formula_arity(f)?;
            }
            ModelKind::Tree(t) => validate_tree(t, n, &labels, &mut vec![false; n])?,
            ModelKind::Threshold(net) => {
                if net.layers.is_empty() {
                    return Err(ModelError::EmptyNetwork);
                }
                let mut width = n;
                for (li, layer) in net.layers.iter().enumerate() {
                    if layer.is_empty() {
                        return Err(ModelError::EmptyLayer(li));
                    }
                    for (ui, unit) in layer.iter().enumerate() {
                        if unit.weights.len() != width {
                            return Err(ModelError::UnitArity {
                                layer: li,
                                unit: ui,
                                expected: width,
                                found: unit.weights.len(),
                            });
                        }
                    }
                    width = layer.len();
                }
                if width + 1 != labels.len() {
                    return Err(ModelError::OutputWidth {
                        units: width,
                        labels: labels.len(),
                    });
                }
            }
        }
        Ok(DecisionModel {
            kind,
            labels,
            n_features: n,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn labels(&self) -> &[DecisionLabel] {
        &self.labels
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn label_index(&self, d: DecisionLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == d)
    }

    pub fn evaluate(&self, x: &Individual) -> DecisionLabel {
        self.evaluate_values(x.values())
    }

    pub fn evaluate_values(&self, x: &[bool]) -> DecisionLabel {
        debug_assert_eq!(x.len(), self.n_features);
        match &self.kind {
            ModelKind::Formula(f) => self.labels[f.eval(x) as usize],
            ModelKind::Tree(t) => t.eval(x),
            ModelKind::Threshold(net) => self.labels[net.output_count(x)],
        }
    }
}

fn validate_formula_arity(f: &Formula) -> Result<(), ModelError> {
    match f {
        Formula::Const(_) | Formula::Var(_) => Ok(()),
        Formula::Not(inner) => validate_formula_arity(inner),
        Formula::And(args) | Formula::Or(args) => {
            if args.is_empty() {
                return Err(ModelError::EmptyConnective);
            }
            args.iter().try_for_each(validate_formula_arity)
        }
    }
}

fn validate_tree(
    t: &Tree,
    n: usize,
    labels: &[DecisionLabel],
    on_path: &mut Vec<bool>,
) -> Result<(), ModelError> {
    match t {
        Tree::Leaf(d) => {
            if labels.contains(d) {
                Ok(())
            } else {
                Err(ModelError::UnknownLabel(d.0))
            }
        }
        Tree::Node {
            test,
            if_true,
            if_false,
        } => {
            if *test >= n {
                return Err(ModelError::UnknownFeatureIndex(*test));
            }
            if on_path[*test] {
                return Err(ModelError::RepeatedTest(*test));
            }
            on_path[*test] = true;
            let r = validate_tree(if_true, n, labels, on_path)
                .and_then(|_| validate_tree(if_false, n, labels, on_path));
            on_path[*test] = false;
            r
        }
    }
}

/// The tutoring-supplement example: features `E, D, S, H`, open profile
/// `{E, D}`, sensitive literal `S`, and `Δ = (D ∧ (E ∨ H)) ∨ S`.
pub fn tutor_example() -> (FeatureSpace, ProfilePartition, DecisionModel) {
    let space = FeatureSpace::new(["E", "D", "S", "H"]).expect("static names");
    let partition = ProfilePartition::new(&space, &[0, 1], 2, true).expect("static partition");
    let formula = Formula::Or(vec![
        Formula::And(vec![
            Formula::var(1),
            Formula::Or(vec![Formula::var(0), Formula::var(3)]),
        ]),
        Formula::var(2),
    ]);
    let model = DecisionModel::new(
        &space,
        ModelKind::Formula(formula),
        vec![DecisionLabel(0), DecisionLabel(1)],
    )
    .expect("static model");
    (space, partition, model)
}
