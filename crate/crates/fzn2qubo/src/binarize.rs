//! Replaces every non-binary integer variable by binary variables.
//!
//! Two encodings: one-hot (handles arbitrary finite value sets, recommended
//! for small domains) and self-bounding binary (canonical intervals [0, M],
//! recommended for large domains). Products with an encoded factor are
//! rewritten onto per-bit product variables; bit squares fold to the bit
//! itself.

use crate::canonicalize::shift_variable;
use crate::fzn::interval_product;
use crate::ir::{
    AffineExpr, Domain, Inconsistent, ProductConstraint, QipModel, Relation, Stage, VarId, VarKind,
};
use crate::rat::rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Auto,
    Onehot,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryRule {
    /// Rule 2: recurse on the remainder; coefficients may repeat.
    Recursive,
    /// Rule 2': single closing coefficient M - 2^r + 1.
    Coefficient,
}

#[derive(Debug, Clone, Copy)]
pub struct EncodingConfig {
    pub strategy: Strategy,
    pub onehot_threshold: usize,
    pub binary_rule: BinaryRule,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { strategy: Strategy::Auto, onehot_threshold: 4, binary_rule: BinaryRule::Coefficient }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("binary encoding needs max(D) >= 2, got {0}")]
    DomainTooSmall(i64),
    #[error("binary encoding requested for the non-contiguous domain of '{0}'")]
    NonContiguousBinary(String),
    #[error("'{0}' is a product result and cannot be encoded directly")]
    IsProductResult(String),
    #[error("one-hot encoding needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error(transparent)]
    Inconsistent(#[from] Inconsistent),
    #[error("shift during binarize failed: {0}")]
    Shift(String),
}

/// Coefficients v_0..v_r whose subset sums are exactly {0, ..., M}.
pub fn binary_encode_coeffs(max: i64, rule: BinaryRule) -> Result<Vec<i64>, EncodeError> {
    if max < 2 {
        return Err(EncodeError::DomainTooSmall(max));
    }
    Ok(coeffs_rec(max, rule))
}

fn coeffs_rec(max: i64, rule: BinaryRule) -> Vec<i64> {
    debug_assert!(max >= 1);
    if max == 1 {
        return vec![1];
    }
    let r = 63 - max.leading_zeros() as i64; // floor(log2 max)
    if max == (1i64 << (r + 1)) - 1 {
        // rule 1: plain powers of two
        return (0..=r).map(|s| 1i64 << s).collect();
    }
    let mut v: Vec<i64> = (0..r).map(|s| 1i64 << s).collect();
    let remainder = max - ((1i64 << r) - 1);
    match rule {
        BinaryRule::Coefficient => v.push(remainder),
        BinaryRule::Recursive => v.extend(coeffs_rec(remainder, rule)),
    }
    v
}

/// Substitutes `var := constant + Σ coeff_s · bit_s` through the whole
/// model: linear occurrences, the objective, products with `var` as factor
/// (mixed and squared), and the substitution forest.
fn apply_encoding(
    model: &mut QipModel,
    var: VarId,
    bits: &[VarId],
    coeffs: &[i64],
    constant: i64,
) -> Result<(), EncodeError> {
    debug_assert_eq!(bits.len(), coeffs.len());
    let mut subst = AffineExpr::constant(rat(constant));
    for (b, c) in bits.iter().zip(coeffs) {
        subst.add_term(*b, rat(*c));
    }
    for c in &mut model.linear {
        c.expr.substitute(var, &subst);
    }
    model.objective.expr.substitute(var, &subst);

    let products = std::mem::take(&mut model.products);
    let base = model.var(var).name.clone();
    for p in products {
        if p.lhs != var && p.rhs != var {
            model.products.push(p);
            continue;
        }
        if p.lhs == var && p.rhs == var {
            // squared: (c0 + Σ v_s b_s)² with bit² = bit folded into the
            // linear part, cross terms on fresh bit-product variables
            let mut link = AffineExpr::constant(rat(-(constant * constant)));
            link.add_term(p.result, rat(1));
            for (s, (b, v)) in bits.iter().zip(coeffs).enumerate() {
                link.add_term(*b, rat(-(2 * constant * v + v * v)));
                for (t, (b2, v2)) in bits.iter().zip(coeffs).enumerate().skip(s + 1) {
                    if v * v2 == 0 {
                        continue;
                    }
                    let q = model.new_var(
                        format!("%{base}_q{s}_{t}"),
                        Domain::Interval(0, 1),
                        VarKind::ProductResult,
                    );
                    model.products.push(ProductConstraint { result: q, lhs: *b, rhs: *b2 });
                    link.add_term(q, rat(-2 * v * v2));
                }
            }
            model.push_linear(link, Relation::EqZero)?;
        } else {
            // mixed y = var·w: y - c0·w - Σ v_s·(b_s·w) = 0
            let w = if p.lhs == var { p.rhs } else { p.lhs };
            let mut link = AffineExpr::default();
            link.add_term(p.result, rat(1));
            link.add_term(w, rat(-constant));
            for (s, (b, v)) in bits.iter().zip(coeffs).enumerate() {
                if *v == 0 {
                    continue;
                }
                let (lo, hi) = interval_product(model.domain(*b), model.domain(w));
                let pv = model.new_var(
                    format!("%{base}_p{s}"),
                    Domain::Interval(lo, hi),
                    VarKind::ProductResult,
                );
                model.products.push(ProductConstraint { result: pv, lhs: *b, rhs: w });
                link.add_term(pv, rat(-v));
            }
            model.push_linear(link, Relation::EqZero)?;
        }
    }
    model
        .forest
        .add(var, subst)
        .map_err(|e| Inconsistent(e.to_string()))?;
    Ok(())
}

fn encode_guard(model: &QipModel, var: VarId) -> Result<(), EncodeError> {
    if model.is_product_result(var) {
        return Err(EncodeError::IsProductResult(model.var(var).name.clone()));
    }
    Ok(())
}

/// One-hot: h fresh bits, Σ bits = 1, `var := Σ d_p · bit_p`. Works for any
/// finite value set with h ≥ 3; h = 2 uses the single-bit affine form
/// `var := d_1 + (d_2 - d_1)·bit` without a sum constraint.
pub fn onehot_encode(model: &mut QipModel, var: VarId) -> Result<(), EncodeError> {
    encode_guard(model, var)?;
    let values = model.domain(var).values();
    let name = model.var(var).name.clone();
    match values.len() {
        0 | 1 => Err(EncodeError::TooFewValues(values.len())),
        2 => {
            let bit = model.new_var(format!("%{name}_b"), Domain::Interval(0, 1), VarKind::EncodingBit);
            apply_encoding(model, var, &[bit], &[values[1] - values[0]], values[0])
        }
        h => {
            let bits: Vec<VarId> = (0..h)
                .map(|p| {
                    model.new_var(format!("%{name}_oh{p}"), Domain::Interval(0, 1), VarKind::EncodingBit)
                })
                .collect();
            let mut sum_to_one = AffineExpr::constant(rat(-1));
            for b in &bits {
                sum_to_one.add_term(*b, rat(1));
            }
            model.push_linear(sum_to_one, Relation::EqZero)?;
            apply_encoding(model, var, &bits, &values, 0)
        }
    }
}

/// Self-bounding binary encoding of a canonical interval [0, M], M ≥ 2.
pub fn binary_encode(model: &mut QipModel, var: VarId, rule: BinaryRule) -> Result<(), EncodeError> {
    encode_guard(model, var)?;
    let dom = model.domain(var);
    if !dom.is_contiguous() {
        return Err(EncodeError::NonContiguousBinary(model.var(var).name.clone()));
    }
    assert_eq!(dom.min(), 0, "binary_encode expects a canonical domain");
    let coeffs = binary_encode_coeffs(dom.max(), rule)?;
    let name = model.var(var).name.clone();
    let bits: Vec<VarId> = (0..coeffs.len())
        .map(|s| model.new_var(format!("%{name}_b{s}"), Domain::Interval(0, 1), VarKind::EncodingBit))
        .collect();
    apply_encoding(model, var, &bits, &coeffs, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chosen {
    Onehot,
    Binary,
}

/// Picks the encoding for a variable that needs one.
pub fn choose_strategy(domain: &Domain, config: &EncodingConfig) -> Result<Chosen, EncodeError> {
    match config.strategy {
        Strategy::Onehot => Ok(Chosen::Onehot),
        // a domain with holes has no contiguous [0, M] image; one-hot is the
        // only sound choice regardless of the requested strategy
        Strategy::Binary => {
            if domain.is_contiguous() {
                Ok(Chosen::Binary)
            } else {
                Ok(Chosen::Onehot)
            }
        }
        Strategy::Auto => {
            if !domain.is_contiguous() || domain.size() <= config.onehot_threshold {
                Ok(Chosen::Onehot)
            } else {
                Ok(Chosen::Binary)
            }
        }
    }
}

/// Drives encodings until every live variable is binary. Stage
/// canonical → binary.
pub fn binarize_all(model: &QipModel, config: &EncodingConfig) -> Result<QipModel, EncodeError> {
    assert_eq!(model.stage, Stage::Canonical, "binarize_all expects a canonical model");
    assert!(config.onehot_threshold >= 2);
    let mut m = model.clone();
    let cap = 64 * (m.vars.len() + m.products.len() + 1);
    for _ in 0..cap {
        // bit squares: y = b·b over a binary b is just y := b
        if let Some(k) = m.products.iter().position(|p| {
            p.lhs == p.rhs && m.domain(p.lhs).is_binary()
        }) {
            let p = m.products.remove(k);
            let b = AffineExpr::var(p.lhs);
            for c in &mut m.linear {
                c.expr.substitute(p.result, &b);
            }
            m.objective.expr.substitute(p.result, &b);
            for q in &mut m.products {
                if q.lhs == p.result {
                    q.lhs = p.lhs;
                }
                if q.rhs == p.result {
                    q.rhs = p.lhs;
                }
            }
            m.forest
                .add(p.result, b)
                .map_err(|e| Inconsistent(e.to_string()))?;
            continue;
        }
        // demoted product results and slacks can sit on non-canonical
        // intervals; shift before encoding
        let to_shift = m
            .live_vars()
            .filter(|v| {
                v.domain.is_contiguous() && v.domain.min() != 0 && !m.is_product_result(v.id)
            })
            .map(|v| v.id)
            .next();
        if let Some(v) = to_shift {
            shift_variable(&mut m, v).map_err(|e| EncodeError::Shift(e.to_string()))?;
            continue;
        }
        let target = m
            .live_vars()
            .filter(|v| !v.domain.is_binary() && !m.is_product_result(v.id))
            .map(|v| v.id)
            .next();
        let Some(var) = target else {
            if m.live_vars().all(|v| v.domain.is_binary()) {
                m.stage = Stage::Binary;
                return Ok(m);
            }
            // remaining non-binary vars are product results; their factors
            // must still be non-binary, handled in the next rounds — but if
            // no factor qualifies the chain is stuck, which is a bug
            unreachable!("binarize_all stuck with non-binary product results");
        };
        let dom = m.domain(var).clone();
        if dom.size() == 2 && !dom.is_binary() {
            onehot_encode(&mut m, var)?; // degenerate single-bit affine form
            continue;
        }
        match choose_strategy(&dom, config)? {
            Chosen::Onehot => onehot_encode(&mut m, var)?,
            Chosen::Binary => binary_encode(&mut m, var, config.binary_rule)?,
        }
    }
    panic!("binarize_all exceeded its step cap");
}
