//! The five-stage conversion pipeline: slack variables, bounds consistency,
//! canonical domains, binary encoding, QUBO assembly.

use std::collections::BTreeSet;

use crate::binarize::{binarize_all, EncodeError, EncodingConfig};
use crate::canonicalize::{canonicalize_all, ShiftError};
use crate::deinequalify::eliminate_inequalities;
use crate::ir::{QipModel, Sense, SubstitutionForest, VarId, Variable};
use crate::propagate::{eliminate_singletons, fixpoint};
use crate::qubofy::{assemble, integer_scale, Qubo};
use crate::rat::Rat;

#[derive(Debug, Clone)]
pub struct StageStats {
    pub stage: &'static str,
    pub live_vars: usize,
    pub binary_vars: usize,
    pub linear_constraints: usize,
    pub products: usize,
}

impl StageStats {
    fn of(stage: &'static str, m: &QipModel) -> StageStats {
        StageStats {
            stage,
            live_vars: m.live_vars().count(),
            binary_vars: m.live_vars().filter(|v| v.domain.is_binary()).count(),
            linear_constraints: m.linear.len(),
            products: m.products.len(),
        }
    }
}

/// Everything produced by a successful conversion: the QUBO plus the
/// metadata needed to decode its solutions.
pub struct Artifact {
    pub qubo: Qubo,
    /// QUBO index → variable id.
    pub index_map: Vec<VarId>,
    pub penalty_c: Rat,
    /// Final variable table; ids extend the input model's id space.
    pub vars: Vec<Variable>,
    pub forest: SubstitutionForest,
    pub outputs: BTreeSet<VarId>,
    pub sense: Sense,
    pub stats: Vec<StageStats>,
    pub propagation_cap_hit: bool,
    /// The fully binarized, integer-scaled model the QUBO was built from;
    /// feasibility of a bit string can be checked against it directly.
    pub binary_model: QipModel,
}

pub enum ConvertOutcome {
    Converted(Box<Artifact>),
    /// The model provably has no solution; the message names the cause.
    Inconsistent(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("encoding failed: {0}")]
    Encode(String),
    #[error("internal pipeline error: {0}")]
    Internal(String),
}

/// Runs the full conversion on a raw QIP(FD) model.
pub fn convert(
    model: &QipModel,
    config: &EncodingConfig,
    penalty_override: Option<Rat>,
) -> Result<ConvertOutcome, PipelineError> {
    let mut stats = vec![StageStats::of("parsed", model)];

    let m = match eliminate_inequalities(model) {
        Ok(m) => m,
        Err(inc) => return Ok(ConvertOutcome::Inconsistent(inc.0)),
    };
    stats.push(StageStats::of("no-inequalities", &m));

    // bounds consistency and singleton elimination to a joint fixpoint
    let mut m = m;
    let mut cap_hit = false;
    loop {
        let report = match fixpoint(&m) {
            Ok(r) => r,
            Err(inc) => return Ok(ConvertOutcome::Inconsistent(inc.0)),
        };
        cap_hit |= report.cap_hit;
        let before = report.model.forest.len();
        m = match eliminate_singletons(&report.model) {
            Ok(m) => m,
            Err(inc) => return Ok(ConvertOutcome::Inconsistent(inc.0)),
        };
        if m.forest.len() == before {
            break;
        }
    }
    stats.push(StageStats::of("propagated", &m));

    let m = match canonicalize_all(&m) {
        Ok(m) => m,
        Err(ShiftError::Inconsistent(inc)) => return Ok(ConvertOutcome::Inconsistent(inc.0)),
        Err(e) => return Err(PipelineError::Internal(e.to_string())),
    };
    stats.push(StageStats::of("canonical", &m));

    let m = match binarize_all(&m, config) {
        Ok(m) => m,
        Err(EncodeError::Inconsistent(inc)) => return Ok(ConvertOutcome::Inconsistent(inc.0)),
        Err(e @ EncodeError::NonContiguousBinary(_)) => {
            return Err(PipelineError::Encode(e.to_string()))
        }
        Err(e) => return Err(PipelineError::Internal(e.to_string())),
    };
    stats.push(StageStats::of("binary", &m));

    debug_assert!(m.check_model().is_empty(), "{:?}", m.check_model());

    let (m, scale) = integer_scale(&m);
    let assembled = match assemble(&m, scale, penalty_override) {
        Ok(a) => a,
        Err(inc) => return Ok(ConvertOutcome::Inconsistent(inc.0)),
    };

    Ok(ConvertOutcome::Converted(Box::new(Artifact {
        qubo: assembled.qubo,
        index_map: assembled.index_map,
        penalty_c: assembled.penalty_c,
        vars: m.vars.clone(),
        forest: m.forest.clone(),
        outputs: m.outputs.clone(),
        sense: m.objective.sense,
        stats,
        propagation_cap_hit: cap_hit,
        binary_model: m,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fzn::{lower_to_qip, parse_model};
    use crate::rat::rat;

    fn convert_src(src: &str) -> ConvertOutcome {
        let fzn = parse_model(src).unwrap();
        let qip = lower_to_qip(&fzn).unwrap();
        convert(&qip, &EncodingConfig::default(), None).unwrap()
    }

    #[test]
    fn running_example_converts() {
        let out = convert_src(
            "var 0..1: x; var 0..2: y; constraint int_lin_le([3,-2],[x,y],0); solve minimize x;",
        );
        let ConvertOutcome::Converted(a) = out else {
            panic!("expected conversion")
        };
        assert!(a.qubo.n >= 2);
        assert_eq!(a.qubo.scale, rat(1));
        // slack introduced with domain [0,4]
        let slack = a
            .vars
            .iter()
            .find(|v| v.kind == crate::ir::VarKind::Slack)
            .expect("slack variable");
        assert_eq!(slack.domain, crate::ir::Domain::Interval(0, 4));
    }

    #[test]
    fn inconsistent_model_detected() {
        let out = convert_src(
            "var 0..3: x; constraint int_lin_le([1],[x],-1000); solve satisfy;",
        );
        assert!(matches!(out, ConvertOutcome::Inconsistent(_)));
    }

    #[test]
    fn all_singleton_model_gives_empty_qubo() {
        let out = convert_src("var 2..2: x; solve minimize x;");
        let ConvertOutcome::Converted(a) = out else {
            panic!("expected conversion")
        };
        assert_eq!(a.qubo.n, 0);
        assert_eq!(a.forest.len(), 1);
    }
}
