//! Bounds-consistency propagation on interval hulls, singleton elimination
//! and early inconsistency detection.
//!
//! Propagation prunes by interval endpoints only, also for value-set domains
//! (values outside the hull are removed, holes are kept). It is an
//! optimization, not required for correctness; the fixpoint loop carries an
//! iteration cap and reports when it is hit.

use crate::fzn::interval_product;
use crate::ir::{
    AffineExpr, Domain, Inconsistent, LinearConstraint, ProductConstraint, QipModel, Relation,
};
use crate::rat::{ceil_i64, floor_i64, rat, Rat};
use num::Signed;

/// Outcome of one propagation step.
#[derive(Debug, PartialEq, Eq)]
pub enum Pruned {
    Changed,
    Unchanged,
}

fn narrow(model: &mut QipModel, v: crate::ir::VarId, lo: i64, hi: i64) -> Result<Pruned, Inconsistent> {
    let dom = model.domain(v);
    if dom.min() >= lo && dom.max() <= hi {
        return Ok(Pruned::Unchanged);
    }
    match dom.clamp(lo, hi) {
        Some(d) => {
            model.set_domain(v, d);
            Ok(Pruned::Changed)
        }
        None => Err(Inconsistent(format!(
            "domain of '{}' emptied by propagation",
            model.var(v).name
        ))),
    }
}

/// Interval of a·x over D(x).
fn term_bounds(coeff: &Rat, dom: &Domain) -> (Rat, Rat) {
    let lo = coeff * rat(dom.min());
    let hi = coeff * rat(dom.max());
    if coeff.is_negative() {
        (hi, lo)
    } else {
        (lo, hi)
    }
}

/// Prunes variable bounds of one linear constraint. For Σaᵢxᵢ + c = 0 both
/// sides of every variable are pruned; for ≤ 0 only the upper side.
pub fn prune_linear(
    constraint: &LinearConstraint,
    model: &mut QipModel,
) -> Result<Pruned, Inconsistent> {
    let mut sum_lo = constraint.expr.constant.clone();
    let mut sum_hi = constraint.expr.constant.clone();
    for (v, coeff) in &constraint.expr.terms {
        let (lo, hi) = term_bounds(coeff, model.domain(*v));
        sum_lo += lo;
        sum_hi += hi;
    }
    // feasibility of the line itself
    match constraint.relation {
        Relation::EqZero => {
            if sum_lo > rat(0) || sum_hi < rat(0) {
                return Err(Inconsistent(format!(
                    "equation with line bounds [{}, {}] cannot reach 0",
                    crate::rat::format_rat(&sum_lo),
                    crate::rat::format_rat(&sum_hi)
                )));
            }
        }
        Relation::LeZero => {
            if sum_lo > rat(0) {
                return Err(Inconsistent(
                    "inequality lower bound is positive".to_string(),
                ));
            }
        }
    }
    let mut changed = Pruned::Unchanged;
    for (v, coeff) in &constraint.expr.terms {
        let (t_lo, t_hi) = term_bounds(coeff, model.domain(*v));
        // residual bounds of a·x: what the rest of the line leaves room for
        let rest_lo = &sum_lo - &t_lo;
        let rest_hi = &sum_hi - &t_hi;
        // a·x ∈ [-rest_hi, -rest_lo] for equations; a·x ≤ -rest_lo for ≤ 0
        let ax_hi = -rest_lo;
        let (mut lo, mut hi) = (i64::MIN, i64::MAX);
        if coeff.is_positive() {
            hi = floor_i64(&(&ax_hi / coeff));
        } else {
            lo = ceil_i64(&(&ax_hi / coeff));
        }
        if constraint.relation == Relation::EqZero {
            let ax_lo = -rest_hi;
            if coeff.is_positive() {
                lo = ceil_i64(&(&ax_lo / coeff));
            } else {
                hi = floor_i64(&(&ax_lo / coeff));
            }
        }
        if narrow(model, *v, lo, hi)? == Pruned::Changed {
            changed = Pruned::Changed;
        }
    }
    Ok(changed)
}

/// Prunes the result by the corner-product hull of the factors, and factors
/// by division bounds when the cofactor interval excludes zero.
pub fn prune_product(
    product: &ProductConstraint,
    model: &mut QipModel,
) -> Result<Pruned, Inconsistent> {
    let mut changed = Pruned::Unchanged;
    let (lo, hi) = interval_product(model.domain(product.lhs), model.domain(product.rhs));
    if narrow(model, product.result, lo, hi)? == Pruned::Changed {
        changed = Pruned::Changed;
    }
    for (factor, cofactor) in [(product.lhs, product.rhs), (product.rhs, product.lhs)] {
        if factor == cofactor {
            continue; // squared products: hull pruning of the result only
        }
        let co = model.domain(cofactor);
        if co.min() <= 0 && co.max() >= 0 {
            continue; // quotient interval unbounded through zero
        }
        let res = model.domain(product.result);
        let corners = [
            rat(res.min()) / rat(co.min()),
            rat(res.min()) / rat(co.max()),
            rat(res.max()) / rat(co.min()),
            rat(res.max()) / rat(co.max()),
        ];
        let q_lo = corners.iter().min().unwrap();
        let q_hi = corners.iter().max().unwrap();
        if narrow(model, factor, ceil_i64(q_lo), floor_i64(q_hi))? == Pruned::Changed {
            changed = Pruned::Changed;
        }
    }
    Ok(changed)
}

/// Result of running the propagation loop.
pub struct FixpointReport {
    pub model: QipModel,
    pub cap_hit: bool,
    pub rounds: usize,
}

/// Applies all pruning rules until no domain changes or the iteration cap
/// (10·|constraints|·|vars|) is reached.
pub fn fixpoint(model: &QipModel) -> Result<FixpointReport, Inconsistent> {
    let mut m = model.clone();
    let n_constraints = m.linear.len() + m.products.len();
    let cap = 10usize.saturating_mul(n_constraints.max(1)).saturating_mul(m.vars.len().max(1));
    let mut rounds = 0usize;
    loop {
        if rounds >= cap {
            return Ok(FixpointReport { model: m, cap_hit: true, rounds });
        }
        rounds += 1;
        let mut changed = false;
        let linear = m.linear.clone();
        for c in &linear {
            if prune_linear(c, &mut m)? == Pruned::Changed {
                changed = true;
            }
        }
        let products = m.products.clone();
        for p in &products {
            if prune_product(p, &mut m)? == Pruned::Changed {
                changed = true;
            }
        }
        if !changed {
            return Ok(FixpointReport { model: m, cap_hit: false, rounds });
        }
    }
}

/// Removes every variable whose domain is a single value, folding the value
/// into constraint and objective constants and recording `x := v` in the
/// substitution forest. Products with a singleton factor degrade to linear
/// constraints.
pub fn eliminate_singletons(model: &QipModel) -> Result<QipModel, Inconsistent> {
    let mut m = model.clone();
    loop {
        // product results stay: x·y = v is a genuine quadratic constraint,
        // enforced later by the product penalty plus a pin on the result
        let singleton = m
            .live_vars()
            .find(|v| v.domain.is_singleton() && !m.is_product_result(v.id))
            .map(|v| (v.id, v.domain.min()));
        let Some((id, value)) = singleton else {
            return Ok(m);
        };
        let replacement = AffineExpr::constant(rat(value));

        // products first: they may demote to linear constraints
        let products = std::mem::take(&mut m.products);
        let mut new_linear: Vec<(AffineExpr, Relation)> = Vec::new();
        for p in products {
            if p.lhs == id || p.rhs == id {
                // y = v·z (or y = v·v): now linear
                let mut expr = AffineExpr::var(p.result);
                if p.lhs == id && p.rhs == id {
                    expr.constant = rat(-(value * value));
                } else {
                    let other = if p.lhs == id { p.rhs } else { p.lhs };
                    expr.add_term(other, rat(-value));
                }
                new_linear.push((expr, Relation::EqZero));
            } else {
                m.products.push(p);
            }
        }

        let mut old_linear = std::mem::take(&mut m.linear);
        for c in old_linear.drain(..) {
            let mut expr = c.expr;
            expr.substitute(id, &replacement);
            m.push_linear(expr, c.relation)?;
        }
        for (expr, rel) in new_linear {
            let mut expr = expr;
            expr.substitute(id, &replacement);
            m.push_linear(expr, rel)?;
        }
        m.objective.expr.substitute(id, &replacement);
        m.forest
            .add(id, replacement)
            .map_err(|e| Inconsistent(e.to_string()))?;
    }
}
