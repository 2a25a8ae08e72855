//! Turns a binary QIP(FD) into a normalized QUBO: integer scaling, the
//! common penalty factor, equation penalties with the skip-squaring rule,
//! Rosenberg quadratization of products, and matrix assembly.

use std::collections::BTreeMap;

use crate::deinequalify::line_bounds;
use crate::ir::{AffineExpr, Inconsistent, QipModel, Relation, Stage, VarId};
use crate::rat::{is_integer, lcm_big, rat, Rat};
use num::{BigInt, One, Signed, Zero};

/// Normalized upper-triangular QUBO. `entries` keys satisfy i ≤ j with the
/// diagonal holding the linear weights; the constant energy lives in
/// `offset`, and `scale` converts energy units back to original-objective
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct Qubo {
    pub n: usize,
    pub entries: BTreeMap<(usize, usize), Rat>,
    pub offset: Rat,
    pub scale: Rat,
}

impl Qubo {
    /// Folds raw entries into normalized form: (i,j) with i > j mirrored to
    /// (j,i), duplicates summed, zero entries dropped. Diagonal quadratic
    /// weights are linear weights by bit idempotence, so they share a cell.
    pub fn normalize(
        n: usize,
        raw: impl IntoIterator<Item = ((usize, usize), Rat)>,
        offset: Rat,
        scale: Rat,
    ) -> Qubo {
        let mut entries: BTreeMap<(usize, usize), Rat> = BTreeMap::new();
        for ((i, j), w) in raw {
            let key = if i <= j { (i, j) } else { (j, i) };
            let cell = entries.entry(key).or_insert_with(Rat::zero);
            *cell += w;
        }
        entries.retain(|_, w| !w.is_zero());
        Qubo { n, entries, offset, scale }
    }
}

/// Linear + quadratic + constant over binary variables. Pair keys hold
/// distinct variables; squares are folded into the linear part.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadExpr {
    pub linear: BTreeMap<VarId, Rat>,
    pub quad: BTreeMap<(VarId, VarId), Rat>,
    pub constant: Rat,
}

impl QuadExpr {
    pub fn add_linear(&mut self, v: VarId, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let cell = self.linear.entry(v).or_insert_with(Rat::zero);
        *cell += coeff;
        if cell.is_zero() {
            self.linear.remove(&v);
        }
    }

    pub fn add_quad(&mut self, a: VarId, b: VarId, coeff: Rat) {
        if a == b {
            self.add_linear(a, coeff); // x² = x on binaries
            return;
        }
        if coeff.is_zero() {
            return;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        let cell = self.quad.entry(key).or_insert_with(Rat::zero);
        *cell += coeff;
        if cell.is_zero() {
            self.quad.remove(&key);
        }
    }

    pub fn add_scaled(&mut self, other: &QuadExpr, k: &Rat) {
        for (v, c) in &other.linear {
            self.add_linear(*v, c * k);
        }
        for ((a, b), c) in &other.quad {
            self.add_quad(*a, *b, c * k);
        }
        self.constant += &other.constant * k;
    }

    pub fn from_affine(expr: &AffineExpr) -> QuadExpr {
        let mut q = QuadExpr { constant: expr.constant.clone(), ..Default::default() };
        for (v, c) in &expr.terms {
            q.add_linear(*v, c.clone());
        }
        q
    }

    /// Exact value at a binary assignment.
    pub fn eval(&self, bits: &BTreeMap<VarId, i64>) -> Rat {
        let mut acc = self.constant.clone();
        for (v, c) in &self.linear {
            acc += c * rat(bits[v]);
        }
        for ((a, b), c) in &self.quad {
            acc += c * rat(bits[a] * bits[b]);
        }
        acc
    }
}

fn denominator_lcm(expr: &AffineExpr) -> BigInt {
    let mut l = expr.constant.denom().clone();
    for c in expr.terms.values() {
        l = lcm_big(&l, c.denom());
    }
    l
}

/// Multiplies every constraint by the LCM of its denominators so all
/// coefficients are integers, and the objective by one global factor whose
/// reciprocal is returned as the scale.
pub fn integer_scale(model: &QipModel) -> (QipModel, Rat) {
    assert_eq!(model.stage, Stage::Binary, "integer_scale expects a binary model");
    let mut m = model.clone();
    for c in &mut m.linear {
        let l = denominator_lcm(&c.expr);
        if !l.is_one() {
            c.expr = c.expr.scaled(&Rat::from_integer(l));
        }
    }
    let l = denominator_lcm(&m.objective.expr);
    let scale = Rat::new(BigInt::one(), l.clone());
    if !l.is_one() {
        m.objective.expr = m.objective.expr.scaled(&Rat::from_integer(l));
    }
    (m, scale)
}

/// Attainable bounds of the objective's variable part Σ gᵢxᵢ.
pub fn objective_span(objective: &AffineExpr, model: &QipModel) -> (Rat, Rat) {
    let mut body = objective.clone();
    body.constant = Rat::zero();
    line_bounds(&body, model)
}

/// Common penalty factor C = (hi − lo)/ε + 1; with ε = 1 after integer
/// scaling every violated penalty term costs at least ε, so any violation is
/// worse than the whole objective span.
pub fn penalty_factor(lo: &Rat, hi: &Rat, epsilon: &Rat) -> Rat {
    assert!(epsilon.is_positive());
    (hi - lo) / epsilon + rat(1)
}

/// Penalty term of one equation over binary variables. Skip-squaring: when
/// the line cannot go below zero the affine expression itself is the penalty.
pub fn equation_penalty(eq: &AffineExpr, model: &QipModel) -> Result<QuadExpr, Inconsistent> {
    let (l, _u) = line_bounds(eq, model);
    if l > rat(0) {
        return Err(Inconsistent(format!(
            "equation with lower bound {} > 0 cannot be satisfied",
            crate::rat::format_rat(&l)
        )));
    }
    if l >= rat(0) {
        return Ok(QuadExpr::from_affine(eq));
    }
    // (Σ aᵢbᵢ + c)² expanded with bit² = bit
    let mut q = QuadExpr { constant: &eq.constant * &eq.constant, ..Default::default() };
    let terms: Vec<(VarId, Rat)> = eq.terms.iter().map(|(v, c)| (*v, c.clone())).collect();
    for (i, (v, a)) in terms.iter().enumerate() {
        q.add_linear(*v, rat(2) * &eq.constant * a + a * a);
        for (w, b) in terms.iter().skip(i + 1) {
            q.add_quad(*v, *w, rat(2) * a * b);
        }
    }
    Ok(q)
}

/// Rosenberg quadratization of z = x·y:
/// x·y − 2xz − 2yz + 3z, nonnegative and zero exactly when z = x·y.
pub fn quadratize_product(x: VarId, y: VarId, z: VarId) -> QuadExpr {
    let mut q = QuadExpr::default();
    q.add_quad(x, y, rat(1));
    q.add_quad(x, z, rat(-2));
    q.add_quad(y, z, rat(-2));
    q.add_linear(z, rat(3));
    q
}

/// Result of assembling a binary QIP(FD).
pub struct Assembled {
    pub qubo: Qubo,
    /// QUBO index → variable id; inverse of the variable's matrix position.
    pub index_map: Vec<VarId>,
    pub penalty_c: Rat,
}

/// Builds the full QUBO objective
/// Σ gᵢxᵢ + C·(Σ equation penalties + Σ product penalties)
/// over the live binary variables, normalized upper-triangular.
pub fn assemble(model: &QipModel, scale: Rat, penalty_override: Option<Rat>) -> Result<Assembled, Inconsistent> {
    assert_eq!(model.stage, Stage::Binary);
    debug_assert!(
        model
            .linear
            .iter()
            .all(|c| c.expr.terms.values().all(is_integer) && is_integer(&c.expr.constant)),
        "assemble expects integer-scaled constraints"
    );
    let (lo, hi) = objective_span(&model.objective.expr, model);
    let c_factor = match penalty_override {
        Some(c) => c,
        None => penalty_factor(&lo, &hi, &rat(1)),
    };

    let mut total = QuadExpr::from_affine(&model.objective.expr);
    for c in &model.linear {
        debug_assert_eq!(c.relation, Relation::EqZero);
        let penalty = equation_penalty(&c.expr, model)?;
        total.add_scaled(&penalty, &c_factor);
    }
    for p in &model.products {
        let penalty = quadratize_product(p.lhs, p.rhs, p.result);
        total.add_scaled(&penalty, &c_factor);
    }
    // bits whose domain is a single value (pinned product results and their
    // shifted remnants) must not float free; penalize the excluded value:
    // x for {0}, 1 - x for {1}
    for v in model.live_vars() {
        if v.domain.is_singleton() {
            let val = v.domain.min();
            debug_assert!(val == 0 || val == 1);
            let mut pin = AffineExpr::var(v.id);
            if val == 1 {
                pin = pin.scaled(&rat(-1));
                pin.constant += rat(1);
            }
            total.add_scaled(&QuadExpr::from_affine(&pin), &c_factor);
        }
    }

    let index_map: Vec<VarId> = model.live_vars().map(|v| v.id).collect();
    let pos: BTreeMap<VarId, usize> =
        index_map.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let raw = total
        .linear
        .iter()
        .map(|(v, c)| ((pos[v], pos[v]), c.clone()))
        .chain(total.quad.iter().map(|((a, b), c)| ((pos[a], pos[b]), c.clone())));
    let qubo = Qubo::normalize(index_map.len(), raw, total.constant.clone(), scale);
    Ok(Assembled { qubo, index_map, penalty_c: c_factor })
}
