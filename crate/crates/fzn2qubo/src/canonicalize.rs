//! Shifts variable domains so every minimum is zero.
//!
//! Linear occurrences of a shifted variable fold the offset into constants.
//! Products are never rewritten on their result variable: shifting a factor
//! replaces the product by a fresh result over the shifted factor plus one
//! linear equation, so product-result minima become zero without a direct
//! substitution.
//!
//! Non-contiguous value sets are left alone: one-hot encoding is the only
//! encoding that handles holes and it works on arbitrary value sets, so
//! shifting them buys nothing.

use crate::ir::{
    AffineExpr, Domain, Inconsistent, ProductConstraint, QipModel, Relation, Stage, VarId, VarKind,
};
use crate::fzn::interval_product;
use crate::rat::rat;

#[derive(Debug, thiserror::Error)]
pub enum ShiftError {
    #[error("'{0}' already has a canonical domain")]
    AlreadyCanonical(String),
    #[error("'{0}' is a product result; shift its factors instead")]
    IsProductResult(String),
    #[error(transparent)]
    Inconsistent(#[from] Inconsistent),
}

/// Replaces `var` by a fresh variable with domain shifted to start at zero,
/// rewriting every linear and product occurrence. Returns the fresh id.
pub fn shift_variable(model: &mut QipModel, var: VarId) -> Result<VarId, ShiftError> {
    let offset = model.domain(var).min();
    if offset == 0 {
        return Err(ShiftError::AlreadyCanonical(model.var(var).name.clone()));
    }
    if model.is_product_result(var) {
        return Err(ShiftError::IsProductResult(model.var(var).name.clone()));
    }
    let shifted_dom = model.domain(var).shifted(-offset);
    let name = format!("{}'", model.var(var).name);
    let fresh = model.new_var(name, shifted_dom, VarKind::Shifted);

    // x := x' + min(D)
    let mut subst = AffineExpr::constant(rat(offset));
    subst.add_term(fresh, rat(1));

    for c in &mut model.linear {
        c.expr.substitute(var, &subst);
    }
    model.objective.expr.substitute(var, &subst);

    let products = std::mem::take(&mut model.products);
    for p in products {
        if p.lhs != var && p.rhs != var {
            model.products.push(p);
            continue;
        }
        let result = p.result;
        if p.lhs == var && p.rhs == var {
            // y = x·x becomes y' = x'·x' with y - y' - 2m·x' - m² = 0,
            // the expansion of (x' + m)²
            let (lo, hi) = interval_product(model.domain(fresh), model.domain(fresh));
            let y2 = model.new_var(
                format!("{}~sq", model.var(result).name),
                Domain::Interval(lo, hi),
                VarKind::ProductResult,
            );
            model.products.push(ProductConstraint { result: y2, lhs: fresh, rhs: fresh });
            let mut link = AffineExpr::constant(rat(-(offset * offset)));
            link.add_term(result, rat(1));
            link.add_term(y2, rat(-1));
            link.add_term(fresh, rat(-2 * offset));
            model.push_linear(link, Relation::EqZero)?;
        } else {
            // y = x·w becomes y' = x'·w with y - y' - m·w = 0
            let w = if p.lhs == var { p.rhs } else { p.lhs };
            let (lo, hi) = interval_product(model.domain(fresh), model.domain(w));
            let y2 = model.new_var(
                format!("{}~", model.var(result).name),
                Domain::Interval(lo, hi),
                VarKind::ProductResult,
            );
            model.products.push(ProductConstraint { result: y2, lhs: fresh, rhs: w });
            let mut link = AffineExpr::default();
            link.add_term(result, rat(1));
            link.add_term(y2, rat(-1));
            link.add_term(w, rat(-offset));
            model.push_linear(link, Relation::EqZero)?;
        }
    }

    model
        .forest
        .add(var, subst)
        .map_err(|e| Inconsistent(e.to_string()))?;
    Ok(fresh)
}

/// Demotes a product whose result has a non-canonical domain: the product is
/// re-targeted at a fresh hull-domain result tied to the old one by a linear
/// equation, after which the old result is an ordinary shiftable variable.
fn retarget_product(model: &mut QipModel, index: usize) -> Result<(), Inconsistent> {
    let p = model.products[index];
    let (lo, hi) = interval_product(model.domain(p.lhs), model.domain(p.rhs));
    let fresh = model.new_var(
        format!("{}~", model.var(p.result).name),
        Domain::Interval(lo, hi),
        VarKind::ProductResult,
    );
    model.products[index] = ProductConstraint { result: fresh, lhs: p.lhs, rhs: p.rhs };
    let mut link = AffineExpr::default();
    link.add_term(p.result, rat(1));
    link.add_term(fresh, rat(-1));
    model.push_linear(link, Relation::EqZero)
}

fn needs_shift(d: &Domain) -> bool {
    d.is_contiguous() && d.min() != 0
}

/// Shifts until every contiguous domain starts at zero. Product factors are
/// handled before product results. Stage no-inequalities → canonical.
pub fn canonicalize_all(model: &QipModel) -> Result<QipModel, ShiftError> {
    assert_eq!(
        model.stage,
        Stage::NoInequalities,
        "canonicalize_all expects a model without inequalities"
    );
    let mut m = model.clone();
    // contiguous value sets are plain intervals
    for i in 0..m.vars.len() {
        if let Domain::ValueSet(vs) = &m.vars[i].domain {
            if m.vars[i].domain.is_contiguous() {
                m.vars[i].domain = Domain::Interval(vs[0], *vs.last().unwrap());
            }
        }
    }
    let cap = 4 * (m.vars.len() + m.products.len()) + 16;
    for _ in 0..cap {
        // 1. factors of products, ascending id
        let factor = m
            .live_vars()
            .filter(|v| needs_shift(&v.domain))
            .filter(|v| m.is_product_factor(v.id) && !m.is_product_result(v.id))
            .map(|v| v.id)
            .next();
        if let Some(v) = factor {
            shift_variable(&mut m, v)?;
            continue;
        }
        // 2. products whose result still has a non-canonical domain while the
        //    factors are canonical (declared result domains can start above
        //    the hull minimum)
        let prod = (0..m.products.len()).find(|k| {
            let p = &m.products[*k];
            needs_shift(m.domain(p.result))
                && interval_product(m.domain(p.lhs), m.domain(p.rhs)).0 == 0
        });
        if let Some(k) = prod {
            retarget_product(&mut m, k)?;
            continue;
        }
        // 3. remaining linear-only variables
        let plain = m
            .live_vars()
            .filter(|v| needs_shift(&v.domain) && !m.is_product_result(v.id))
            .map(|v| v.id)
            .next();
        if let Some(v) = plain {
            shift_variable(&mut m, v)?;
            continue;
        }
        // product results over holey factor sets can keep a positive minimum
        // here; binarize demotes and shifts them after the factor encodings
        let leftover = m
            .live_vars()
            .any(|v| needs_shift(&v.domain) && !m.is_product_result(v.id));
        assert!(!leftover, "canonicalize_all failed to converge");
        m.stage = Stage::Canonical;
        return Ok(m);
    }
    panic!("canonicalize_all exceeded its step cap");
}
