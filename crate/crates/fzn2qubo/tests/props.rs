//! Property tests for the exact-arithmetic and normalization invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use fzn2qubo::binarize::{binary_encode_coeffs, BinaryRule};
use fzn2qubo::deinequalify::line_bounds;
use fzn2qubo::format::{read_qubo, write_qubo};
use fzn2qubo::ir::{eval_affine, AffineExpr, Domain, QipModel, VarId, VarKind};
use fzn2qubo::qubofy::Qubo;
use fzn2qubo::rat::{format_rat, parse_rat, rat, rat_frac, Rat};
use fzn2qubo::solve::{energy, exhaustive_qubo};

fn arb_rat() -> impl Strategy<Value = Rat> {
    (-1000i64..1000, 1i64..50).prop_map(|(n, d)| rat_frac(n, d))
}

fn arb_affine(nvars: usize) -> impl Strategy<Value = AffineExpr> {
    (
        proptest::collection::vec((0..nvars, arb_rat()), 0..5),
        arb_rat(),
    )
        .prop_map(|(terms, c)| {
            let mut e = AffineExpr::constant(c);
            for (v, coeff) in terms {
                e.add_term(VarId(v), coeff);
            }
            e
        })
}

fn arb_qubo() -> impl Strategy<Value = Qubo> {
    (1usize..8, proptest::collection::vec((0usize..8, 0usize..8, arb_rat()), 0..12), arb_rat())
        .prop_map(|(n, raw, offset)| {
            let entries: Vec<_> = raw
                .into_iter()
                .map(|(i, j, w)| ((i % n, j % n), w))
                .collect();
            Qubo::normalize(n, entries, offset, rat(1))
        })
}

proptest! {
    #[test]
    fn rational_text_roundtrip(r in arb_rat()) {
        prop_assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
    }

    #[test]
    fn affine_add_then_subtract_is_identity(a in arb_affine(4), b in arb_affine(4)) {
        let mut sum = a.clone();
        sum.add_expr(&b);
        let neg = b.scaled(&rat(-1));
        sum.add_expr(&neg);
        prop_assert_eq!(sum, a);
    }

    #[test]
    fn qubo_file_roundtrip(q in arb_qubo()) {
        let text = write_qubo(&q);
        let q2 = read_qubo(&text).unwrap();
        prop_assert_eq!(&text, &write_qubo(&q2));
        prop_assert_eq!(q.entries, q2.entries);
        prop_assert_eq!(q.offset, q2.offset);
    }

    #[test]
    fn normalized_matrix_is_upper_triangular_nonzero(q in arb_qubo()) {
        for ((i, j), w) in &q.entries {
            prop_assert!(i <= j);
            prop_assert!(*j < q.n);
            prop_assert!(!num::Zero::is_zero(w));
        }
    }

    #[test]
    fn line_bounds_contain_all_evaluations(
        expr in arb_affine(3),
        doms in proptest::collection::vec((-5i64..5, 0i64..6), 3),
    ) {
        let mut m = QipModel::new();
        for (i, (lo, size)) in doms.iter().enumerate() {
            m.new_var(format!("x{i}"), Domain::Interval(*lo, lo + size), VarKind::Original);
        }
        let (l, u) = line_bounds(&expr, &m);
        // every corner of the domain box stays inside [l, u]
        for mask in 0u32..8 {
            let asg: BTreeMap<VarId, i64> = (0..3)
                .map(|i| {
                    let d = m.var(VarId(i)).domain.clone();
                    (VarId(i), if mask >> i & 1 == 1 { d.max() } else { d.min() })
                })
                .collect();
            let v = eval_affine(&expr, &asg).unwrap();
            prop_assert!(l <= v && v <= u, "{} not in [{}, {}]", v, l, u);
        }
    }

    #[test]
    fn binary_encoding_image_is_exact_range(m in 2i64..200, coeff_rule in 0..2usize) {
        let rule = [BinaryRule::Recursive, BinaryRule::Coefficient][coeff_rule];
        let coeffs = binary_encode_coeffs(m, rule).unwrap();
        let mut sums = std::collections::BTreeSet::from([0i64]);
        for c in &coeffs {
            let add: Vec<i64> = sums.iter().map(|s| s + c).collect();
            sums.extend(add);
        }
        let want: std::collections::BTreeSet<i64> = (0..=m).collect();
        prop_assert_eq!(sums, want);
    }

    #[test]
    fn exhaustive_matches_naive_scan(q in arb_qubo()) {
        let r = exhaustive_qubo(&q).unwrap();
        let mut best: Option<Rat> = None;
        let mut count = 0u64;
        for mask in 0u64..1 << q.n {
            let bits: Vec<u8> = (0..q.n).map(|i| (mask >> i & 1) as u8).collect();
            let e = energy(&q, &bits).unwrap();
            match &best {
                Some(b) if e > *b => {}
                Some(b) if e == *b => count += 1,
                _ => {
                    best = Some(e);
                    count = 1;
                }
            }
        }
        prop_assert_eq!(r.energy, best.unwrap());
        prop_assert_eq!(r.count, count);
    }
}
