//! On-disk artifact formats: the `.qubo` text matrix, the `.sub.json`
//! decoding sidecar, and the solution listing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ir::{AffineExpr, Domain, ModelError, Sense, SubstitutionForest, VarId, VarKind, Variable};
use crate::pipeline::Artifact;
use crate::qubofy::Qubo;
use crate::rat::{format_rat, parse_rat, Rat};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sidecar: {0}")]
    Sidecar(String),
}

fn bad(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Malformed { line, msg: msg.into() }
}

/// Serializes a QUBO. The output is canonical: writing what `read_qubo`
/// parsed reproduces the bytes (comments excepted).
pub fn write_qubo(q: &Qubo) -> String {
    let mut out = String::new();
    writeln!(out, "QUBO {} {}", q.n, q.entries.len()).unwrap();
    writeln!(out, "OFFSET {}", format_rat(&q.offset)).unwrap();
    writeln!(out, "SCALE {}", format_rat(&q.scale)).unwrap();
    for ((i, j), w) in &q.entries {
        writeln!(out, "{} {} {}", i, j, format_rat(w)).unwrap();
    }
    out
}

/// Parses and validates a `.qubo` file: header shape, index bounds, the
/// upper-triangular property, sort order, no duplicates, no zero weights.
pub fn read_qubo(text: &str) -> Result<Qubo, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, header) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
    let mut it = header.split_whitespace();
    if it.next() != Some("QUBO") {
        return Err(bad(ln, "expected 'QUBO <n> <m>'"));
    }
    let n: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(ln, "bad variable count"))?;
    let m: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(ln, "bad entry count"))?;
    if it.next().is_some() {
        return Err(bad(ln, "trailing tokens in header"));
    }

    let mut field = |name: &str| -> Result<Rat, FormatError> {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| bad(0, format!("missing {name} line")))?;
        let rest = line
            .strip_prefix(name)
            .ok_or_else(|| bad(ln, format!("expected '{name} <rational>'")))?;
        parse_rat(rest.trim()).ok_or_else(|| bad(ln, "bad rational"))
    };
    let offset = field("OFFSET")?;
    let scale = field("SCALE")?;
    if scale <= Rat::from_integer(0.into()) {
        return Err(bad(3, "scale must be positive"));
    }

    let mut entries: BTreeMap<(usize, usize), Rat> = BTreeMap::new();
    let mut prev: Option<(usize, usize)> = None;
    for (ln, line) in lines {
        let mut it = line.split_whitespace();
        let msg = "expected '<i> <j> <rational>'";
        let i: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(ln, msg))?;
        let j: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(ln, msg))?;
        let w = parse_rat(it.next().ok_or_else(|| bad(ln, msg))?)
            .ok_or_else(|| bad(ln, "bad rational"))?;
        if it.next().is_some() {
            return Err(bad(ln, "trailing tokens"));
        }
        if i > j {
            return Err(bad(ln, format!("entry ({i},{j}) below the diagonal")));
        }
        if j >= n {
            return Err(bad(ln, format!("index {j} out of range for n={n}")));
        }
        if w == Rat::from_integer(0.into()) {
            return Err(bad(ln, "explicit zero weight"));
        }
        if let Some(p) = prev {
            if (i, j) <= p {
                return Err(bad(ln, format!("entry ({i},{j}) out of order or duplicated")));
            }
        }
        prev = Some((i, j));
        entries.insert((i, j), w);
    }
    if entries.len() != m {
        return Err(bad(1, format!("header says {m} entries, found {}", entries.len())));
    }
    Ok(Qubo { n, entries, offset, scale })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SidecarVar {
    pub id: usize,
    pub name: String,
    pub kind: VarKind,
    pub domain: Domain,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SidecarTerm {
    pub var: usize,
    pub coeff: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SidecarSub {
    pub target: usize,
    pub terms: Vec<SidecarTerm>,
    pub constant: String,
}

/// Everything needed to decode a QUBO solution back to model variables.
#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub variables: Vec<SidecarVar>,
    /// Position k holds the variable id behind QUBO index k.
    pub qubo_index: Vec<usize>,
    pub substitutions: Vec<SidecarSub>,
    pub outputs: Vec<usize>,
    pub objective_sense: Sense,
    pub penalty_c: String,
}

impl Sidecar {
    pub fn from_artifact(a: &Artifact) -> Sidecar {
        Sidecar {
            variables: a
                .vars
                .iter()
                .map(|v| SidecarVar {
                    id: v.id.0,
                    name: v.name.clone(),
                    kind: v.kind,
                    domain: v.domain.clone(),
                })
                .collect(),
            qubo_index: a.index_map.iter().map(|v| v.0).collect(),
            substitutions: a
                .forest
                .iter()
                .map(|s| SidecarSub {
                    target: s.target.0,
                    terms: s
                        .expr
                        .terms
                        .iter()
                        .map(|(v, c)| SidecarTerm { var: v.0, coeff: format_rat(c) })
                        .collect(),
                    constant: format_rat(&s.expr.constant),
                })
                .collect(),
            outputs: a.outputs.iter().map(|v| v.0).collect(),
            objective_sense: a.sense,
            penalty_c: format_rat(&a.penalty_c),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sidecar serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Sidecar, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuilds the pieces `decode` needs: variable table, index map, forest.
    pub fn into_parts(
        &self,
    ) -> Result<(Vec<Variable>, Vec<VarId>, SubstitutionForest, BTreeSet<VarId>), FormatError> {
        let vars: Vec<Variable> = self
            .variables
            .iter()
            .map(|v| Variable {
                id: VarId(v.id),
                name: v.name.clone(),
                domain: v.domain.clone(),
                kind: v.kind,
            })
            .collect();
        for (i, v) in vars.iter().enumerate() {
            if v.id.0 != i {
                return Err(FormatError::Sidecar(format!(
                    "variable ids must be dense, found {} at position {i}",
                    v.id.0
                )));
            }
        }
        let index_map: Vec<VarId> = self.qubo_index.iter().map(|&i| VarId(i)).collect();
        for v in &index_map {
            if v.0 >= vars.len() {
                return Err(FormatError::Sidecar(format!("qubo_index references unknown {v}")));
            }
        }
        let mut forest = SubstitutionForest::default();
        for s in &self.substitutions {
            let rational = |txt: &str| {
                parse_rat(txt).ok_or_else(|| FormatError::Sidecar(format!("bad rational {txt:?}")))
            };
            let mut expr = AffineExpr::constant(rational(&s.constant)?);
            for t in &s.terms {
                expr.add_term(VarId(t.var), rational(&t.coeff)?);
            }
            forest
                .add(VarId(s.target), expr)
                .map_err(|e: ModelError| FormatError::Sidecar(e.to_string()))?;
        }
        let outputs = self.outputs.iter().map(|&i| VarId(i)).collect();
        Ok((vars, index_map, forest, outputs))
    }
}

/// Solution listing: one `name = value;` line per output variable in
/// declaration order, then the energy as a `%` comment.
pub fn write_solution(
    vars: &[Variable],
    outputs: &BTreeSet<VarId>,
    assignment: &BTreeMap<VarId, i64>,
    energy: &Rat,
) -> String {
    let mut out = String::new();
    for v in outputs {
        if let Some(x) = assignment.get(v) {
            writeln!(out, "{} = {};", vars[v.0].name, x).unwrap();
        }
    }
    writeln!(out, "% energy = {}", format_rat(energy)).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::EncodingConfig;
    use crate::fzn::{lower_to_qip, parse_model};
    use crate::pipeline::{convert, ConvertOutcome};
    use crate::rat::rat;

    fn sample_qubo() -> Qubo {
        let raw: Vec<_> = vec![
            ((0, 0), rat(-1)),
            ((1, 1), parse_rat("-7/2").unwrap()),
            ((0, 1), rat(2)),
        ];
        Qubo::normalize(2, raw, rat(1), parse_rat("1/4").unwrap())
    }

    #[test]
    fn qubo_write_read_write_is_identity() {
        let q = sample_qubo();
        let text = write_qubo(&q);
        let q2 = read_qubo(&text).unwrap();
        assert_eq!(text, write_qubo(&q2));
        assert_eq!(q.entries, q2.entries);
        assert_eq!(q.offset, q2.offset);
        assert_eq!(q.scale, q2.scale);
    }

    #[test]
    fn qubo_reader_accepts_comments_and_blanks() {
        let text = "# header comment\nQUBO 2 1\nOFFSET 0\nSCALE 1\n\n# entry\n0 1 3/2\n";
        let q = read_qubo(text).unwrap();
        assert_eq!(q.entries[&(0, 1)], parse_rat("3/2").unwrap());
    }

    #[test]
    fn qubo_reader_rejects_bad_files() {
        let cases = [
            ("QUBO 2 1\nOFFSET 0\nSCALE 1\n1 0 1\n", "below the diagonal"),
            ("QUBO 2 1\nOFFSET 0\nSCALE 1\n0 2 1\n", "out of range"),
            ("QUBO 2 2\nOFFSET 0\nSCALE 1\n0 1 1\n0 1 1\n", "out of order"),
            ("QUBO 2 2\nOFFSET 0\nSCALE 1\n0 1 1\n", "found 1"),
            ("QUBO 2 1\nOFFSET 0\nSCALE 0\n0 1 1\n", "positive"),
            ("QUBO 2 1\nOFFSET 0\nSCALE 1\n0 1 0\n", "zero weight"),
            ("QUBO 2 1\nOFFSET x\nSCALE 1\n0 1 1\n", "bad rational"),
            ("QUBO 2 1\nSCALE 1\nOFFSET 0\n0 1 1\n", "OFFSET"),
        ];
        for (text, needle) in cases {
            let err = read_qubo(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} gave {err:?}");
        }
    }

    #[test]
    fn sidecar_roundtrips_bytes_and_semantics() {
        let fzn = parse_model(
            "var 0..1: x; var 0..2: y :: output_var; \
             constraint int_lin_le([3,-2],[x,y],0); solve minimize x;",
        )
        .unwrap();
        let qip = lower_to_qip(&fzn).unwrap();
        let ConvertOutcome::Converted(a) = convert(&qip, &EncodingConfig::default(), None).unwrap()
        else {
            panic!("expected conversion")
        };
        let sc = Sidecar::from_artifact(&a);
        let json = sc.to_json();
        let sc2 = Sidecar::from_json(&json).unwrap();
        assert_eq!(json, sc2.to_json());

        let (vars, index_map, forest, outputs) = sc2.into_parts().unwrap();
        assert_eq!(vars.len(), a.vars.len());
        assert_eq!(index_map, a.index_map);
        assert_eq!(forest.len(), a.forest.len());
        assert_eq!(outputs, a.outputs);
    }

    #[test]
    fn solution_listing_shape() {
        let vars = vec![
            Variable { id: VarId(0), name: "x".into(), domain: Domain::Interval(0, 3), kind: VarKind::Original },
            Variable { id: VarId(1), name: "y".into(), domain: Domain::Interval(0, 3), kind: VarKind::Original },
        ];
        let outputs: BTreeSet<VarId> = [VarId(0), VarId(1)].into();
        let asg: BTreeMap<VarId, i64> = [(VarId(0), 2), (VarId(1), 0)].into();
        let text = write_solution(&vars, &outputs, &asg, &rat(-5));
        assert_eq!(text, "x = 2;\ny = 0;\n% energy = -5\n");
    }
}
