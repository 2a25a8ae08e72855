//! The staged QIP(FD) intermediate representation.
//!
//! A model holds finite-domain integer variables, linear Eq/Le constraints,
//! pairwise product constraints and a minimize objective. Transformations
//! never mutate in place semantically: eliminated variables are recorded in
//! the substitution forest so QUBO solutions decode back to the original
//! variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::rat::{is_integer, rat, to_i64, Rat};
use num::Zero;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Interval(i64, i64),
    /// Sorted, distinct values.
    ValueSet(Vec<i64>),
}

impl Domain {
    pub fn set(mut values: Vec<i64>) -> Domain {
        values.sort_unstable();
        values.dedup();
        assert!(!values.is_empty(), "empty domain");
        Domain::ValueSet(values)
    }

    pub fn min(&self) -> i64 {
        match self {
            Domain::Interval(lo, _) => *lo,
            Domain::ValueSet(vs) => vs[0],
        }
    }

    pub fn max(&self) -> i64 {
        match self {
            Domain::Interval(_, hi) => *hi,
            Domain::ValueSet(vs) => *vs.last().unwrap(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Domain::Interval(lo, hi) => (hi - lo + 1) as usize,
            Domain::ValueSet(vs) => vs.len(),
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        match self {
            Domain::Interval(lo, hi) => *lo <= v && v <= *hi,
            Domain::ValueSet(vs) => vs.binary_search(&v).is_ok(),
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.size() == 1
    }

    pub fn is_binary(&self) -> bool {
        self.min() >= 0 && self.max() <= 1
    }

    /// A ValueSet with no holes is interchangeable with an interval.
    pub fn is_contiguous(&self) -> bool {
        match self {
            Domain::Interval(..) => true,
            Domain::ValueSet(vs) => (vs.len() as i64) == vs[vs.len() - 1] - vs[0] + 1,
        }
    }

    pub fn values(&self) -> Vec<i64> {
        match self {
            Domain::Interval(lo, hi) => (*lo..=*hi).collect(),
            Domain::ValueSet(vs) => vs.clone(),
        }
    }

    pub fn shifted(&self, offset: i64) -> Domain {
        match self {
            Domain::Interval(lo, hi) => Domain::Interval(lo + offset, hi + offset),
            Domain::ValueSet(vs) => Domain::ValueSet(vs.iter().map(|v| v + offset).collect()),
        }
    }

    /// Restrict to `[lo, hi]`; `None` when the result is empty.
    pub fn clamp(&self, lo: i64, hi: i64) -> Option<Domain> {
        match self {
            Domain::Interval(a, b) => {
                let (a, b) = ((*a).max(lo), (*b).min(hi));
                (a <= b).then_some(Domain::Interval(a, b))
            }
            Domain::ValueSet(vs) => {
                let vs: Vec<i64> = vs.iter().copied().filter(|v| lo <= *v && *v <= hi).collect();
                (!vs.is_empty()).then_some(Domain::ValueSet(vs))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarKind {
    Original,
    ProductResult,
    Slack,
    Shifted,
    EncodingBit,
    Intermediate,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub domain: Domain,
    pub kind: VarKind,
}

/// Σ coeff·var + constant with exact rational coefficients.
/// Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffineExpr {
    pub terms: BTreeMap<VarId, Rat>,
    pub constant: Rat,
}

impl AffineExpr {
    pub fn constant(c: Rat) -> AffineExpr {
        AffineExpr { terms: BTreeMap::new(), constant: c }
    }

    pub fn var(v: VarId) -> AffineExpr {
        let mut e = AffineExpr::default();
        e.add_term(v, rat(1));
        e
    }

    pub fn add_term(&mut self, v: VarId, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(v).or_insert_with(Rat::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&v);
        }
    }

    pub fn add_expr(&mut self, other: &AffineExpr) {
        for (v, c) in &other.terms {
            self.add_term(*v, c.clone());
        }
        self.constant += &other.constant;
    }

    pub fn scaled(&self, k: &Rat) -> AffineExpr {
        let mut e = AffineExpr::constant(&self.constant * k);
        for (v, c) in &self.terms {
            e.add_term(*v, c * k);
        }
        e
    }

    pub fn coeff(&self, v: VarId) -> Rat {
        self.terms.get(&v).cloned().unwrap_or_else(Rat::zero)
    }

    /// Replaces every occurrence of `var` by `replacement`.
    pub fn substitute(&mut self, var: VarId, replacement: &AffineExpr) {
        if let Some(c) = self.terms.remove(&var) {
            let scaled = replacement.scaled(&c);
            self.add_expr(&scaled);
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

pub fn eval_affine(
    expr: &AffineExpr,
    assignment: &BTreeMap<VarId, i64>,
) -> Result<Rat, ModelError> {
    let mut acc = expr.constant.clone();
    for (v, c) in &expr.terms {
        let val = assignment
            .get(v)
            .ok_or(ModelError::UnassignedVariable(*v))?;
        acc += c * rat(*val);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    EqZero,
    LeZero,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub expr: AffineExpr,
    pub relation: Relation,
}

/// result = lhs · rhs, all variables by id. Factors must precede the result
/// in the product ordering (the chain is acyclic).
#[derive(Debug, Clone, Copy)]
pub struct ProductConstraint {
    pub result: VarId,
    pub lhs: VarId,
    pub rhs: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
    Satisfy,
}

#[derive(Debug, Clone)]
pub struct Objective {
    /// Always a minimization; `sense` records the original form for reporting.
    pub expr: AffineExpr,
    pub sense: Sense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Raw,
    NoInequalities,
    Canonical,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Substitution {
    pub target: VarId,
    pub expr: AffineExpr,
}

/// Ordered, acyclic set of affine definitions for eliminated variables.
#[derive(Debug, Clone, Default)]
pub struct SubstitutionForest {
    subs: Vec<Substitution>,
    targets: BTreeSet<VarId>,
}

impl SubstitutionForest {
    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Substitution> {
        self.subs.iter()
    }

    pub fn is_target(&self, v: VarId) -> bool {
        self.targets.contains(&v)
    }

    pub fn add(&mut self, target: VarId, expr: AffineExpr) -> Result<(), ModelError> {
        if self.targets.contains(&target) {
            return Err(ModelError::DuplicateSubstitution(target));
        }
        if self.would_cycle(target, &expr) {
            return Err(ModelError::SubstitutionCycle(target));
        }
        self.subs.push(Substitution { target, expr });
        self.targets.insert(target);
        Ok(())
    }

    /// True iff `target` is reachable from the variables of `expr` through
    /// existing definitions (including the trivial self-reference).
    fn would_cycle(&self, target: VarId, expr: &AffineExpr) -> bool {
        let by_target: BTreeMap<VarId, &AffineExpr> =
            self.subs.iter().map(|s| (s.target, &s.expr)).collect();
        let mut stack: Vec<VarId> = expr.terms.keys().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if v == target {
                return true;
            }
            if !seen.insert(v) {
                continue;
            }
            if let Some(e) = by_target.get(&v) {
                stack.extend(e.terms.keys().copied());
            }
        }
        false
    }

    /// Topologically evaluates every substitution from the leaf values.
    /// Values of substituted variables must come out as exact integers.
    pub fn resolve_assignment(
        &self,
        leaf_values: &BTreeMap<VarId, i64>,
    ) -> Result<BTreeMap<VarId, i64>, ModelError> {
        let mut assignment = leaf_values.clone();
        let mut pending: Vec<&Substitution> = self.subs.iter().collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|s| {
                if s.expr.terms.keys().all(|v| assignment.contains_key(v)) {
                    let value = eval_affine(&s.expr, &assignment).expect("vars checked");
                    if let Some(i) = to_i64(&value) {
                        assignment.insert(s.target, i);
                        false
                    } else {
                        true // leave pending; reported below
                    }
                } else {
                    true
                }
            });
            if pending.len() == before {
                let s = pending[0];
                if s.expr.terms.keys().all(|v| assignment.contains_key(v)) {
                    let value = eval_affine(&s.expr, &assignment).expect("vars checked");
                    debug_assert!(!is_integer(&value));
                    return Err(ModelError::NonIntegerSubstitution(s.target));
                }
                let missing = s
                    .expr
                    .terms
                    .keys()
                    .find(|v| !assignment.contains_key(v))
                    .copied()
                    .unwrap();
                return Err(ModelError::UnassignedVariable(missing));
            }
        }
        Ok(assignment)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("variable {0} has no assigned value")]
    UnassignedVariable(VarId),
    #[error("substitution target {0} is already defined")]
    DuplicateSubstitution(VarId),
    #[error("substitution for {0} would create a cycle")]
    SubstitutionCycle(VarId),
    #[error("substitution for {0} evaluated to a non-integer")]
    NonIntegerSubstitution(VarId),
}

/// Inconsistency detected by a transformation; carries a human-readable cause.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("inconsistent: {0}")]
pub struct Inconsistent(pub String);

#[derive(Debug, Clone)]
pub struct QipModel {
    pub vars: Vec<Variable>,
    pub linear: Vec<LinearConstraint>,
    pub products: Vec<ProductConstraint>,
    pub objective: Objective,
    pub outputs: BTreeSet<VarId>,
    pub forest: SubstitutionForest,
    pub stage: Stage,
}

impl QipModel {
    pub fn new() -> QipModel {
        QipModel {
            vars: Vec::new(),
            linear: Vec::new(),
            products: Vec::new(),
            objective: Objective { expr: AffineExpr::default(), sense: Sense::Satisfy },
            outputs: BTreeSet::new(),
            forest: SubstitutionForest::default(),
            stage: Stage::Raw,
        }
    }

    pub fn new_var(&mut self, name: impl Into<String>, domain: Domain, kind: VarKind) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable { id, name: name.into(), domain, kind });
        id
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn domain(&self, id: VarId) -> &Domain {
        &self.vars[id.0].domain
    }

    pub fn set_domain(&mut self, id: VarId, d: Domain) {
        self.vars[id.0].domain = d;
    }

    /// Variables still part of the model (not eliminated via substitutions).
    pub fn live_vars(&self) -> impl Iterator<Item = &Variable> {
        self.vars.iter().filter(|v| !self.forest.is_target(v.id))
    }

    pub fn is_live(&self, id: VarId) -> bool {
        !self.forest.is_target(id)
    }

    pub fn is_product_result(&self, id: VarId) -> bool {
        self.products.iter().any(|p| p.result == id)
    }

    pub fn is_product_factor(&self, id: VarId) -> bool {
        self.products.iter().any(|p| p.lhs == id || p.rhs == id)
    }

    /// Adds a linear constraint, resolving 0-term constraints eagerly:
    /// a constant-only expression is either trivially true (dropped) or an
    /// inconsistency.
    pub fn push_linear(&mut self, expr: AffineExpr, relation: Relation) -> Result<(), Inconsistent> {
        if expr.is_constant() {
            let c = &expr.constant;
            let ok = match relation {
                Relation::EqZero => c.is_zero(),
                Relation::LeZero => *c <= rat(0),
            };
            return if ok {
                Ok(())
            } else {
                Err(Inconsistent(format!(
                    "constant constraint {} {} 0 is false",
                    crate::rat::format_rat(c),
                    if relation == Relation::EqZero { "=" } else { "<=" }
                )))
            };
        }
        self.linear.push(LinearConstraint { expr, relation });
        Ok(())
    }

    /// Verifies the type invariants plus stage-tag consistency.
    pub fn check_model(&self) -> Vec<String> {
        let mut diags = Vec::new();
        for (i, v) in self.vars.iter().enumerate() {
            if v.id.0 != i {
                diags.push(format!("variable id {} not dense at slot {}", v.id, i));
            }
            if let Domain::ValueSet(vs) = &v.domain {
                if vs.is_empty() {
                    diags.push(format!("{}: empty domain", v.name));
                }
                if vs.windows(2).any(|w| w[0] >= w[1]) {
                    diags.push(format!("{}: value set not sorted/distinct", v.name));
                }
            }
            if let Domain::Interval(lo, hi) = v.domain {
                if lo > hi {
                    diags.push(format!("{}: empty interval", v.name));
                }
            }
            if v.kind == VarKind::EncodingBit && !(v.domain == Domain::Interval(0, 1)) {
                diags.push(format!("{}: encoding bit with non-binary domain", v.name));
            }
        }
        for (ci, c) in self.linear.iter().enumerate() {
            if c.expr.terms.is_empty() {
                diags.push(format!("linear constraint {ci} has no terms"));
            }
            if c.expr.terms.values().any(|c| c.is_zero()) {
                diags.push(format!("linear constraint {ci} stores a zero coefficient"));
            }
            for v in c.expr.terms.keys() {
                if !self.is_live(*v) {
                    diags.push(format!("linear constraint {ci} references eliminated {v}"));
                }
            }
            if self.stage >= Stage::NoInequalities && c.relation == Relation::LeZero {
                diags.push(format!("stage violation: LeZero constraint {ci} at stage {:?}", self.stage));
            }
        }
        // product chain ordering: factors must be defined before the result
        let mut result_pos: BTreeMap<VarId, usize> = BTreeMap::new();
        for (k, p) in self.products.iter().enumerate() {
            result_pos.insert(p.result, k);
        }
        for (k, p) in self.products.iter().enumerate() {
            for f in [p.lhs, p.rhs] {
                if let Some(pos) = result_pos.get(&f) {
                    if *pos >= k {
                        diags.push(format!("product ordering violation: factor {f} of product {k} defined at {pos}"));
                    }
                }
            }
            for v in [p.result, p.lhs, p.rhs] {
                if !self.is_live(v) {
                    diags.push(format!("product {k} references eliminated {v}"));
                }
            }
        }
        for v in self.objective.expr.terms.keys() {
            if !self.is_live(*v) {
                diags.push(format!("objective references eliminated {v}"));
            }
        }
        if self.stage >= Stage::Canonical {
            for v in self.live_vars() {
                // non-contiguous value sets are exempt from shifting (one-hot
                // handles holes); product results over such sets can keep a
                // positive minimum until binarize demotes them
                if v.domain.is_contiguous() && v.domain.min() != 0 && !self.is_product_result(v.id)
                {
                    diags.push(format!("stage violation: {} has min {} at stage {:?}", v.name, v.domain.min(), self.stage));
                }
            }
        }
        if self.stage >= Stage::Binary {
            for v in self.live_vars() {
                if !v.domain.is_binary() {
                    diags.push(format!("stage violation: {} non-binary at binary stage", v.name));
                }
            }
        }
        diags
    }
}

impl Default for QipModel {
    fn default() -> Self {
        QipModel::new()
    }
}
