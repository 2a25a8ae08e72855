//! Bundled QUBO solvers (exhaustive and simulated annealing), a brute-force
//! QIP(FD) oracle, and the end-to-end roundtrip checker.

use std::collections::BTreeMap;

use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binarize::EncodingConfig;
use crate::ir::{eval_affine, QipModel, Relation, Sense, VarId};
use crate::pipeline::{convert, Artifact, ConvertOutcome, PipelineError, StageStats};
use crate::qubofy::Qubo;
use crate::rat::{to_f64, to_i64, Rat};

pub const EXHAUSTIVE_MAX_BITS: usize = 25;
pub const ORACLE_MAX_POINTS: u128 = 10_000_000;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("assignment has {got} bits, QUBO has {want}")]
    BitCount { got: usize, want: usize },
    #[error("exhaustive search supports at most {EXHAUSTIVE_MAX_BITS} bits, got {0}; use the annealer")]
    TooManyBits(usize),
    #[error("oracle search space has more than {ORACLE_MAX_POINTS} points")]
    OracleTooLarge,
    #[error("conversion failed: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("decode failed: {0}")]
    Decode(String),
}

/// Exact energy b'Qb + offset. Bits are 0/1, index order matches the QUBO.
pub fn energy(q: &Qubo, bits: &[u8]) -> Result<Rat, SolveError> {
    if bits.len() != q.n {
        return Err(SolveError::BitCount { got: bits.len(), want: q.n });
    }
    let mut acc = q.offset.clone();
    for ((i, j), w) in &q.entries {
        if bits[*i] == 1 && bits[*j] == 1 {
            acc += w;
        }
    }
    Ok(acc)
}

/// Symmetric neighbor lists: `rows[i]` holds `(j, w)` for every off-diagonal
/// entry touching `i`; `diag[i]` is the linear weight.
fn adjacency(q: &Qubo) -> (Vec<Rat>, Vec<Vec<(usize, Rat)>>) {
    let mut diag = vec![Rat::zero(); q.n];
    let mut rows = vec![Vec::new(); q.n];
    for ((i, j), w) in &q.entries {
        if i == j {
            diag[*i] = w.clone();
        } else {
            rows[*i].push((*j, w.clone()));
            rows[*j].push((*i, w.clone()));
        }
    }
    (diag, rows)
}

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub energy: Rat,
    /// The minimizer with the smallest numeric value when the bit string is
    /// read as an integer with index 0 as the least significant bit.
    pub argmin: Vec<u8>,
    /// Number of distinct minimizers.
    pub count: u64,
}

/// Enumerates all 2^n assignments with a Gray-code walk so each step updates
/// the energy by one local field evaluation.
pub fn exhaustive_qubo(q: &Qubo) -> Result<ExhaustiveResult, SolveError> {
    if q.n > EXHAUSTIVE_MAX_BITS {
        return Err(SolveError::TooManyBits(q.n));
    }
    if q.n == 0 {
        return Ok(ExhaustiveResult { energy: q.offset.clone(), argmin: vec![], count: 1 });
    }
    let integral = q.entries.values().all(crate::rat::is_integer);
    let (best_mask, count) = if integral {
        let diag: Vec<i128> = {
            let (d, _) = adjacency(q);
            d.iter().map(|w| to_i64(w).unwrap() as i128).collect()
        };
        let rows: Vec<Vec<(usize, i128)>> = {
            let (_, r) = adjacency(q);
            r.into_iter()
                .map(|row| row.into_iter().map(|(j, w)| (j, to_i64(&w).unwrap() as i128)).collect())
                .collect()
        };
        let (m, c, _) = gray_walk(q.n, 0i128, |mask, k| {
            let mut f = diag[k];
            for (j, w) in &rows[k] {
                if mask >> j & 1 == 1 {
                    f += w;
                }
            }
            f
        });
        (m, c)
    } else {
        let (diag, rows) = adjacency(q);
        let (m, c, _) = gray_walk(q.n, Rat::zero(), |mask, k| {
            let mut f = diag[k].clone();
            for (j, w) in &rows[k] {
                if mask >> j & 1 == 1 {
                    f += w;
                }
            }
            f
        });
        (m, c)
    };
    let argmin: Vec<u8> = (0..q.n).map(|i| (best_mask >> i & 1) as u8).collect();
    let best = energy(q, &argmin)?;
    Ok(ExhaustiveResult { energy: best, argmin, count })
}

/// Walks all masks in Gray-code order. `field(mask, k)` must return the
/// energy change of setting bit `k` given the other bits in `mask` (the
/// caller negates it for a clear). Returns the lowest-energy mask, the
/// number of minimizers, and the minimum energy relative to mask 0.
fn gray_walk<T>(n: usize, zero: T, field: impl Fn(u32, usize) -> T) -> (u32, u64, T)
where
    T: Clone + Ord + std::ops::AddAssign + std::ops::SubAssign,
{
    let mut mask: u32 = 0;
    let mut e = zero;
    let mut best = e.clone();
    let mut best_mask = 0u32;
    let mut count = 1u64;
    for step in 1u64..1u64 << n {
        let k = step.trailing_zeros() as usize;
        if mask >> k & 1 == 0 {
            mask |= 1 << k;
            e += field(mask, k);
        } else {
            let f = field(mask, k);
            mask &= !(1 << k);
            e -= f;
        }
        if e < best {
            best = e.clone();
            best_mask = mask;
            count = 1;
        } else if e == best {
            count += 1;
            // tie-break: keep the numerically smallest bit string
            if mask < best_mask {
                best_mask = mask;
            }
        }
    }
    (best_mask, count, best)
}

#[derive(Debug, Clone)]
pub struct AnnealParams {
    pub seed: u64,
    pub sweeps: usize,
    pub restarts: usize,
    /// Starting temperature; `None` picks 10x the largest |entry|.
    pub t_initial: Option<f64>,
    pub t_final: f64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams { seed: 1, sweeps: 2000, restarts: 8, t_initial: None, t_final: 0.01 }
    }
}

/// Single-bit-flip Metropolis annealing with geometric cooling. Restarts are
/// independent and merged deterministically, so results depend only on the
/// seed regardless of the `parallel` feature.
pub fn anneal_qubo(q: &Qubo, params: &AnnealParams) -> Result<(Rat, Vec<u8>), SolveError> {
    if q.n == 0 {
        return Ok((q.offset.clone(), vec![]));
    }
    let (diag, rows) = adjacency(q);
    let diag: Vec<f64> = diag.iter().map(to_f64).collect();
    let rows: Vec<Vec<(usize, f64)>> = rows
        .into_iter()
        .map(|row| row.into_iter().map(|(j, w)| (j, to_f64(&w))).collect())
        .collect();
    let t0 = params.t_initial.unwrap_or_else(|| {
        let m = q.entries.values().map(|w| to_f64(w).abs()).fold(0.0, f64::max);
        10.0 * m.max(1.0)
    });
    let tf = params.t_final.max(1e-9);
    let sweeps = params.sweeps.max(1);
    let cool = (tf / t0).powf(1.0 / sweeps as f64);

    let run = |restart: usize| -> (f64, Vec<u8>) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(params.seed ^ (restart as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut bits: Vec<u8> = (0..q.n).map(|_| rng.gen_range(0..=1u8)).collect();
        let mut e = energy_f64(&diag, &rows, &bits);
        let mut best = e;
        let mut best_bits = bits.clone();
        let mut t = t0;
        for _ in 0..sweeps {
            for k in 0..q.n {
                let mut field = diag[k];
                for (j, w) in &rows[k] {
                    field += f64::from(bits[*j]) * w;
                }
                let delta = if bits[k] == 0 { field } else { -field };
                if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
                    bits[k] ^= 1;
                    e += delta;
                    if e < best {
                        best = e;
                        best_bits.copy_from_slice(&bits);
                    }
                }
            }
            t *= cool;
        }
        debug_assert!((e - energy_f64(&diag, &rows, &bits)).abs() < 1e-6 * (1.0 + e.abs()));
        (best, best_bits)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<(f64, Vec<u8>)> = {
        use rayon::prelude::*;
        (0..params.restarts.max(1)).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(f64, Vec<u8>)> = (0..params.restarts.max(1)).map(run).collect();

    // deterministic merge: lowest energy, earliest restart wins ties
    let mut winner = 0;
    for i in 1..results.len() {
        if results[i].0 < results[winner].0 {
            winner = i;
        }
    }
    let bits = results[winner].1.clone();
    let exact = energy(q, &bits)?;
    Ok((exact, bits))
}

fn energy_f64(diag: &[f64], rows: &[Vec<(usize, f64)>], bits: &[u8]) -> f64 {
    let mut acc = 0.0;
    for i in 0..bits.len() {
        if bits[i] == 1 {
            acc += diag[i];
            for (j, w) in &rows[i] {
                if *j > i && bits[*j] == 1 {
                    acc += w;
                }
            }
        }
    }
    acc
}

/// Outcome of the independent brute-force search over the original model.
#[derive(Debug, Clone)]
pub enum Oracle {
    Optimal { assignment: BTreeMap<VarId, i64>, objective: Rat },
    Infeasible,
}

/// Enumerates the Cartesian product of the free variable domains directly on
/// the raw model. Shares no code with the transformation pipeline.
pub fn brute_force_qip(model: &QipModel) -> Result<Oracle, SolveError> {
    let free: Vec<&crate::ir::Variable> = model
        .live_vars()
        .filter(|v| !model.is_product_result(v.id))
        .collect();
    let mut points: u128 = 1;
    for v in &free {
        points = points.saturating_mul(v.domain.size() as u128);
        if points > ORACLE_MAX_POINTS {
            return Err(SolveError::OracleTooLarge);
        }
    }
    let domains: Vec<Vec<i64>> = free.iter().map(|v| v.domain.values()).collect();
    let mut idx = vec![0usize; free.len()];
    let mut best: Option<(Rat, BTreeMap<VarId, i64>)> = None;
    loop {
        let mut asg: BTreeMap<VarId, i64> = BTreeMap::new();
        for (pos, v) in free.iter().enumerate() {
            asg.insert(v.id, domains[pos][idx[pos]]);
        }
        if extend_with_products(model, &mut asg) && linear_ok(model, &asg) {
            let obj = eval_affine(&model.objective.expr, &asg)
                .map_err(|e| SolveError::Decode(e.to_string()))?;
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, asg));
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(match best {
                    Some((objective, assignment)) => Oracle::Optimal { assignment, objective },
                    None => Oracle::Infeasible,
                });
            }
            idx[pos] += 1;
            if idx[pos] < domains[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Computes product results in chain order; false if any lands outside its
/// domain or overflows i64.
fn extend_with_products(model: &QipModel, asg: &mut BTreeMap<VarId, i64>) -> bool {
    for p in &model.products {
        let (Some(&a), Some(&b)) = (asg.get(&p.lhs), asg.get(&p.rhs)) else {
            return false;
        };
        let v = (a as i128) * (b as i128);
        let Ok(v) = i64::try_from(v) else { return false };
        if !model.var(p.result).domain.contains(v) {
            return false;
        }
        asg.insert(p.result, v);
    }
    true
}

fn linear_ok(model: &QipModel, asg: &BTreeMap<VarId, i64>) -> bool {
    model.linear.iter().all(|c| match eval_affine(&c.expr, asg) {
        Ok(v) => match c.relation {
            Relation::EqZero => v.is_zero(),
            Relation::LeZero => !v.is_positive(),
        },
        Err(_) => false,
    })
}

/// True iff the assignment covers every live variable, respects every
/// domain, and satisfies every constraint of `model`.
pub fn is_feasible(model: &QipModel, asg: &BTreeMap<VarId, i64>) -> bool {
    for v in model.live_vars() {
        match asg.get(&v.id) {
            Some(&x) if v.domain.contains(x) => {}
            _ => return false,
        }
    }
    let products_ok = model.products.iter().all(|p| {
        match (asg.get(&p.lhs), asg.get(&p.rhs), asg.get(&p.result)) {
            (Some(&a), Some(&b), Some(&r)) => (a as i128) * (b as i128) == r as i128,
            _ => false,
        }
    });
    products_ok && linear_ok(model, asg)
}

/// Decodes a QUBO bit string back to values of the artifact's variables.
pub fn decode_bits(artifact: &Artifact, bits: &[u8]) -> Result<BTreeMap<VarId, i64>, SolveError> {
    if bits.len() != artifact.index_map.len() {
        return Err(SolveError::BitCount { got: bits.len(), want: artifact.index_map.len() });
    }
    let leaves: BTreeMap<VarId, i64> = artifact
        .index_map
        .iter()
        .zip(bits)
        .map(|(&v, &b)| (v, i64::from(b)))
        .collect();
    artifact
        .forest
        .resolve_assignment(&leaves)
        .map_err(|e| SolveError::Decode(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct DecodedPoint {
    /// Values for the original model's variables only.
    pub assignment: BTreeMap<VarId, i64>,
    pub objective: Rat,
    pub feasible: bool,
    pub energy: Rat,
}

#[derive(Debug)]
pub struct RoundtripReport {
    pub oracle_objective: Option<Rat>,
    pub pipeline_inconsistent: Option<String>,
    pub decoded: Option<DecodedPoint>,
    pub qubo_bits: usize,
    pub stats: Vec<StageStats>,
    pub pass: bool,
}

/// Converts the model, solves the QUBO exhaustively, decodes the minimizer,
/// and compares against the brute-force oracle.
pub fn roundtrip_check(
    model: &QipModel,
    config: &EncodingConfig,
) -> Result<RoundtripReport, SolveError> {
    let oracle = brute_force_qip(model)?;
    let artifact = match convert(model, config, None)? {
        ConvertOutcome::Converted(a) => a,
        ConvertOutcome::Inconsistent(msg) => {
            let pass = matches!(oracle, Oracle::Infeasible);
            return Ok(RoundtripReport {
                oracle_objective: oracle_objective(&oracle),
                pipeline_inconsistent: Some(msg),
                decoded: None,
                qubo_bits: 0,
                stats: vec![],
                pass,
            });
        }
    };
    let solved = exhaustive_qubo(&artifact.qubo)?;
    let full = decode_bits(&artifact, &solved.argmin)?;
    let original: BTreeMap<VarId, i64> = (0..model.vars.len())
        .filter(|&i| model.is_live(VarId(i)))
        .filter_map(|i| full.get(&VarId(i)).map(|&v| (VarId(i), v)))
        .collect();
    let feasible = is_feasible(model, &original);
    let objective = eval_affine(&model.objective.expr, &original)
        .map_err(|e| SolveError::Decode(e.to_string()))?;
    let decoded = DecodedPoint {
        assignment: original,
        objective: objective.clone(),
        feasible,
        energy: solved.energy.clone(),
    };
    let pass = match &oracle {
        Oracle::Infeasible => !feasible,
        Oracle::Optimal { objective: opt, .. } => {
            feasible
                && objective == *opt
                // feasible minimizers score exactly the scaled objective
                && solved.energy.clone() * artifact.qubo.scale.clone() == objective
        }
    };
    Ok(RoundtripReport {
        oracle_objective: oracle_objective(&oracle),
        pipeline_inconsistent: None,
        decoded: Some(decoded),
        qubo_bits: artifact.qubo.n,
        stats: artifact.stats,
        pass,
    })
}

fn oracle_objective(o: &Oracle) -> Option<Rat> {
    match o {
        Oracle::Optimal { objective, .. } => Some(objective.clone()),
        Oracle::Infeasible => None,
    }
}

/// Converts a minimized energy back to the original objective value,
/// flipping sign for maximization problems.
pub fn reported_objective(energy: &Rat, scale: &Rat, sense: Sense) -> Rat {
    let v = energy.clone() * scale.clone();
    match sense {
        Sense::Max => -v,
        _ => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fzn::{lower_to_qip, parse_model};
    use crate::rat::{parse_rat, rat};

    fn qubo(n: usize, entries: &[(usize, usize, i64)], offset: i64) -> Qubo {
        let raw: Vec<_> = entries.iter().map(|&(i, j, w)| ((i, j), rat(w))).collect();
        Qubo::normalize(n, raw, rat(offset), rat(1))
    }

    #[test]
    fn energy_matches_direct_sum() {
        let q = qubo(3, &[(0, 0, -1), (1, 1, 2), (0, 1, -3), (2, 2, 5)], 7);
        assert_eq!(energy(&q, &[1, 1, 0]).unwrap(), rat(-1 + 2 - 3 + 7));
        assert_eq!(energy(&q, &[0, 0, 0]).unwrap(), rat(7));
        assert!(energy(&q, &[0, 0]).is_err());
    }

    #[test]
    fn exhaustive_finds_unique_minimum() {
        // b0 + b1 - 1 = 0 squared: minimum 0 at exactly (1,0) and (0,1)
        let q = qubo(2, &[(0, 0, -1), (1, 1, -1), (0, 1, 2)], 1);
        let r = exhaustive_qubo(&q).unwrap();
        assert_eq!(r.energy, rat(0));
        assert_eq!(r.count, 2);
        assert_eq!(r.argmin, vec![1, 0]); // value 1 < value 2
    }

    #[test]
    fn exhaustive_agrees_with_naive_scan() {
        let q = qubo(
            5,
            &[(0, 0, 3), (1, 1, -2), (2, 3, 4), (0, 4, -5), (1, 2, 1), (4, 4, -1)],
            2,
        );
        let mut naive = None;
        for mask in 0u32..32 {
            let bits: Vec<u8> = (0..5).map(|i| (mask >> i & 1) as u8).collect();
            let e = energy(&q, &bits).unwrap();
            if naive.as_ref().is_none_or(|(b, _)| e < *b) {
                naive = Some((e, bits));
            }
        }
        let (be, bb) = naive.unwrap();
        let r = exhaustive_qubo(&q).unwrap();
        assert_eq!(r.energy, be);
        assert_eq!(r.argmin, bb);
    }

    #[test]
    fn exhaustive_handles_rational_weights() {
        let raw = vec![((0, 0), parse_rat("-1/2").unwrap()), ((0, 1), parse_rat("1/3").unwrap())];
        let q = Qubo::normalize(2, raw, rat(0), rat(1));
        let r = exhaustive_qubo(&q).unwrap();
        assert_eq!(r.energy, parse_rat("-1/2").unwrap());
        assert_eq!(r.argmin, vec![1, 0]);
    }

    #[test]
    fn exhaustive_rejects_large_instances() {
        let q = qubo(26, &[], 0);
        assert!(matches!(exhaustive_qubo(&q), Err(SolveError::TooManyBits(26))));
    }

    #[test]
    fn annealer_is_deterministic_and_finds_small_optimum() {
        let q = qubo(4, &[(0, 0, -2), (1, 1, -2), (0, 1, 5), (2, 2, 1), (3, 3, -1)], 0);
        let p = AnnealParams { seed: 42, sweeps: 300, restarts: 4, ..Default::default() };
        let (e1, b1) = anneal_qubo(&q, &p).unwrap();
        let (e2, b2) = anneal_qubo(&q, &p).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(b1, b2);
        assert_eq!(e1, exhaustive_qubo(&q).unwrap().energy);
    }

    fn lower(src: &str) -> QipModel {
        lower_to_qip(&parse_model(src).unwrap()).unwrap()
    }

    #[test]
    fn oracle_solves_linear_program() {
        let m = lower(
            "var 0..5: x; var 0..5: y; constraint int_lin_le([-1,-1],[x,y],-4); \
             solve minimize x;",
        );
        let Oracle::Optimal { objective, assignment } = brute_force_qip(&m).unwrap() else {
            panic!("expected optimum")
        };
        assert_eq!(objective, rat(0));
        assert_eq!(assignment[&VarId(1)], 4);
    }

    #[test]
    fn oracle_detects_infeasibility() {
        let m = lower("var 0..2: x; constraint int_lin_eq([1],[x],9); solve satisfy;");
        assert!(matches!(brute_force_qip(&m).unwrap(), Oracle::Infeasible));
    }

    #[test]
    fn oracle_handles_products() {
        let m = lower(
            "var 1..4: x; var 1..4: y; var 0..20: z; constraint int_times(x,y,z); \
             constraint int_lin_eq([1],[z],12); solve minimize x;",
        );
        let Oracle::Optimal { objective, .. } = brute_force_qip(&m).unwrap() else {
            panic!("expected optimum")
        };
        assert_eq!(objective, rat(3));
    }

    #[test]
    fn roundtrip_linear_model() {
        let m = lower(
            "var 0..3: x; var 0..3: y; constraint int_lin_le([-1,-1],[x,y],-3); \
             solve minimize y;",
        );
        let r = roundtrip_check(&m, &EncodingConfig::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.oracle_objective, Some(rat(0)));
    }

    #[test]
    fn roundtrip_product_model() {
        let m = lower(
            "var 0..3: x; var 0..3: y; var 0..9: z; constraint int_times(x,y,z); \
             constraint int_lin_le([-1],[z],-4); solve minimize x;",
        );
        let cfg = EncodingConfig {
            strategy: crate::binarize::Strategy::Binary,
            ..Default::default()
        };
        let r = roundtrip_check(&m, &cfg).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.oracle_objective, Some(rat(2)));
    }

    #[test]
    fn roundtrip_infeasible_model() {
        let m = lower("var 0..2: x; constraint int_lin_le([-1],[x],-5); solve satisfy;");
        let r = roundtrip_check(&m, &EncodingConfig::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.pipeline_inconsistent.is_some() || !r.decoded.unwrap().feasible);
    }

    #[test]
    fn roundtrip_maximize_model() {
        let m = lower("var 0..6: x; constraint int_lin_le([1],[x],5); solve maximize x;");
        let r = roundtrip_check(&m, &EncodingConfig::default()).unwrap();
        assert!(r.pass, "{r:?}");
        // internal objective is -x, so the optimum reads -5
        assert_eq!(r.oracle_objective, Some(rat(-5)));
    }
}
