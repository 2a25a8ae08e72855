//! Replaces every ≤-0 constraint by an equation with a fresh slack variable.
//!
//! A constraint whose line can never exceed zero is dropped; one whose line
//! is always positive makes the model inconsistent. Slack domains start at
//! zero, so they are already canonical.

use crate::ir::{
    AffineExpr, Domain, Inconsistent, LinearConstraint, QipModel, Relation, Stage, VarKind,
};
use crate::rat::{ceil_i64, rat, Rat};
use num::Signed;

/// Lower and upper bounds of the constraint's left-hand side over the
/// current domains.
pub fn line_bounds(expr: &AffineExpr, model: &QipModel) -> (Rat, Rat) {
    let mut lo = expr.constant.clone();
    let mut hi = expr.constant.clone();
    for (v, coeff) in &expr.terms {
        let d = model.domain(*v);
        if coeff.is_negative() {
            lo += coeff * rat(d.max());
            hi += coeff * rat(d.min());
        } else {
            lo += coeff * rat(d.min());
            hi += coeff * rat(d.max());
        }
    }
    (lo, hi)
}

/// Converts the model into one without inequalities. Stage raw → no-inequalities.
pub fn eliminate_inequalities(model: &QipModel) -> Result<QipModel, Inconsistent> {
    assert_eq!(model.stage, Stage::Raw, "eliminate_inequalities expects a raw model");
    let mut m = model.clone();
    let constraints = std::mem::take(&mut m.linear);
    let mut slack_no = 0usize;
    for c in constraints {
        match c.relation {
            Relation::EqZero => m.linear.push(c),
            Relation::LeZero => {
                // an integer slack can only absorb integer values, so first
                // clear denominators (a positive factor keeps the relation)
                let mut denom_lcm = num::BigInt::from(1);
                for coeff in c.expr.terms.values().chain([&c.expr.constant]) {
                    denom_lcm = crate::rat::lcm_big(&denom_lcm, coeff.denom());
                }
                let c = LinearConstraint {
                    expr: c.expr.scaled(&Rat::from_integer(denom_lcm)),
                    relation: c.relation,
                };
                let (l, u) = line_bounds(&c.expr, &m);
                if l > rat(0) {
                    return Err(Inconsistent(format!(
                        "inequality with lower bound {} > 0 cannot be satisfied",
                        crate::rat::format_rat(&l)
                    )));
                }
                if u <= rat(0) {
                    continue; // always satisfied
                }
                let mut expr = c.expr;
                if l < rat(0) {
                    // expr + s = 0 with s in [0, -ceil(l)]
                    let hi = -ceil_i64(&l);
                    let s = m.new_var(
                        format!("%s{slack_no}"),
                        Domain::Interval(0, hi),
                        VarKind::Slack,
                    );
                    slack_no += 1;
                    expr.add_term(s, rat(1));
                }
                // l = 0 < u: the slack domain would be the singleton {0};
                // emit the bare equality instead
                m.linear.push(LinearConstraint { expr, relation: Relation::EqZero });
            }
        }
    }
    m.stage = Stage::NoInequalities;
    Ok(m)
}
