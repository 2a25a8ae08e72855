//! Command-line driver: convert FlatZinc to QUBO, solve, roundtrip, check.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fzn2qubo::binarize::{BinaryRule, EncodingConfig, Strategy};
use fzn2qubo::format::{read_qubo, write_qubo, write_solution, Sidecar};
use fzn2qubo::fzn::{lower_to_qip, parse_model, validate_subset};
use fzn2qubo::ir::{QipModel, Sense, VarId};
use fzn2qubo::pipeline::{convert, Artifact, ConvertOutcome};
use fzn2qubo::qubofy::Qubo;
use fzn2qubo::rat::{format_rat, parse_rat};
use fzn2qubo::solve::{
    anneal_qubo, exhaustive_qubo, roundtrip_check, AnnealParams, SolveError,
    EXHAUSTIVE_MAX_BITS,
};

#[derive(Parser)]
#[command(name = "fzn2qubo", version, about = "FlatZinc-to-QUBO converter with bundled solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a FlatZinc model to a .qubo matrix and .sub.json sidecar
    Convert(ConvertArgs),
    /// Minimize a .qubo file with the exhaustive or annealing solver
    Solve(SolveArgs),
    /// Convert, solve exhaustively, decode, and compare with a brute-force
    /// search on the original model
    Roundtrip(RoundtripArgs),
    /// Validate the normalization invariants of a .qubo file
    Check { qubo: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Auto,
    Onehot,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Recursive,
    Coefficient,
}

#[derive(Args)]
struct EncodingFlags {
    /// Integer-to-bit encoding strategy
    #[arg(long, value_enum, default_value = "auto")]
    encoding: EncodingArg,
    /// Max domain size that auto mode still encodes one-hot
    #[arg(long, default_value_t = 4)]
    onehot_threshold: usize,
    /// Coefficient rule for the self-bounding binary encoding
    #[arg(long, value_enum, default_value = "coefficient")]
    binary_rule: RuleArg,
}

impl EncodingFlags {
    fn config(&self) -> EncodingConfig {
        EncodingConfig {
            strategy: match self.encoding {
                EncodingArg::Auto => Strategy::Auto,
                EncodingArg::Onehot => Strategy::Onehot,
                EncodingArg::Binary => Strategy::Binary,
            },
            onehot_threshold: self.onehot_threshold,
            binary_rule: match self.binary_rule {
                RuleArg::Recursive => BinaryRule::Recursive,
                RuleArg::Coefficient => BinaryRule::Coefficient,
            },
        }
    }
}

#[derive(Args)]
struct ConvertArgs {
    /// Input FlatZinc file
    input: PathBuf,
    /// Output .qubo path (default: input with .qubo extension)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Override the computed penalty factor C (rational, e.g. 7 or 7/2)
    #[arg(long)]
    penalty: Option<String>,
    #[command(flatten)]
    enc: EncodingFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exhaustive,
    Anneal,
}

#[derive(Args)]
struct SolveArgs {
    /// Input .qubo file
    qubo: PathBuf,
    #[arg(long, value_enum, default_value = "exhaustive")]
    method: Method,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    sweeps: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Decode to original variables via the .sub.json sidecar
    #[arg(long)]
    decode: bool,
}

#[derive(Args)]
struct RoundtripArgs {
    /// Input FlatZinc file
    input: PathBuf,
    /// Emit the report as JSON
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    enc: EncodingFlags,
}

const EXIT_USAGE: u8 = 1;
const EXIT_INCONSISTENT: u8 = 2;
const EXIT_GUARD: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 by default; usage errors are exit 1 here
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let code = match cli.command {
        Command::Convert(a) => cmd_convert(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Roundtrip(a) => cmd_roundtrip(&a),
        Command::Check { qubo } => cmd_check(&qubo),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_model(path: &Path) -> Result<QipModel, String> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let fzn = parse_model(&src).map_err(|e| e.to_string())?;
    let issues = validate_subset(&fzn);
    if !issues.is_empty() {
        return Err(issues.join("; "));
    }
    lower_to_qip(&fzn).map_err(|e| e.to_string())
}

fn density(q: &Qubo) -> f64 {
    if q.n == 0 {
        return 0.0;
    }
    let cells = q.n * (q.n + 1) / 2;
    q.entries.len() as f64 / cells as f64
}

fn print_stats(a: &Artifact) {
    for s in &a.stats {
        println!(
            "stage {:<16} vars={:<4} binary={:<4} linear={:<4} products={}",
            s.stage, s.live_vars, s.binary_vars, s.linear_constraints, s.products
        );
    }
    println!(
        "qubo bits={} entries={} density={:.3} C={} scale={}",
        a.qubo.n,
        a.qubo.entries.len(),
        density(&a.qubo),
        format_rat(&a.penalty_c),
        format_rat(&a.qubo.scale),
    );
}

fn cmd_convert(args: &ConvertArgs) -> Result<u8, String> {
    let model = load_model(&args.input)?;
    let penalty = match &args.penalty {
        Some(s) => Some(parse_rat(s).ok_or_else(|| format!("bad penalty {s:?}"))?),
        None => None,
    };
    let outcome =
        convert(&model, &args.enc.config(), penalty).map_err(|e| e.to_string())?;
    let artifact = match outcome {
        ConvertOutcome::Converted(a) => a,
        ConvertOutcome::Inconsistent(msg) => {
            eprintln!("inconsistent: {msg}");
            return Ok(EXIT_INCONSISTENT);
        }
    };
    let qubo_path = args
        .output
        .clone()
        .unwrap_or_else(|| args.input.with_extension("qubo"));
    let sidecar_path = sidecar_path(&qubo_path);
    std::fs::write(&qubo_path, write_qubo(&artifact.qubo))
        .map_err(|e| format!("cannot write {}: {e}", qubo_path.display()))?;
    std::fs::write(&sidecar_path, Sidecar::from_artifact(&artifact).to_json())
        .map_err(|e| format!("cannot write {}: {e}", sidecar_path.display()))?;
    print_stats(&artifact);
    println!("wrote {} and {}", qubo_path.display(), sidecar_path.display());
    Ok(0)
}

fn sidecar_path(qubo_path: &Path) -> PathBuf {
    qubo_path.with_extension("sub.json")
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, String> {
    let text = std::fs::read_to_string(&args.qubo)
        .map_err(|e| format!("cannot read {}: {e}", args.qubo.display()))?;
    let q = read_qubo(&text).map_err(|e| e.to_string())?;
    let (energy, bits) = match args.method {
        Method::Exhaustive => {
            let r = exhaustive_qubo(&q).map_err(|e| match e {
                SolveError::TooManyBits(n) => format!(
                    "{n} bits exceed the exhaustive limit of {EXHAUSTIVE_MAX_BITS}; \
                     try --method anneal"
                ),
                other => other.to_string(),
            })?;
            println!("minimizers: {}", r.count);
            (r.energy, r.argmin)
        }
        Method::Anneal => {
            let params = AnnealParams {
                seed: args.seed,
                sweeps: args.sweeps,
                restarts: args.restarts,
                ..Default::default()
            };
            anneal_qubo(&q, &params).map_err(|e| e.to_string())?
        }
    };
    let bit_str: String = bits.iter().map(|b| char::from(b'0' + b)).collect();
    println!("energy = {}", format_rat(&energy));
    println!("bits = {bit_str}");

    if args.decode {
        let sc_path = sidecar_path(&args.qubo);
        let sc_text = std::fs::read_to_string(&sc_path)
            .map_err(|e| format!("--decode needs {}: {e}", sc_path.display()))?;
        let sc = Sidecar::from_json(&sc_text).map_err(|e| e.to_string())?;
        let (vars, index_map, forest, outputs) = sc.into_parts().map_err(|e| e.to_string())?;
        if index_map.len() != bits.len() {
            return Err(format!(
                "sidecar maps {} bits, QUBO has {}",
                index_map.len(),
                bits.len()
            ));
        }
        let leaves: BTreeMap<VarId, i64> = index_map
            .iter()
            .zip(&bits)
            .map(|(&v, &b)| (v, i64::from(b)))
            .collect();
        let full = forest.resolve_assignment(&leaves).map_err(|e| e.to_string())?;
        let objective = fzn2qubo::solve::reported_objective(
            &energy,
            &q.scale,
            sc.objective_sense,
        );
        print!("{}", write_solution(&vars, &outputs, &full, &energy));
        if sc.objective_sense != Sense::Satisfy {
            println!("% objective = {}", format_rat(&objective));
        }
    }
    Ok(0)
}

fn cmd_roundtrip(args: &RoundtripArgs) -> Result<u8, String> {
    let model = load_model(&args.input)?;
    let report = match roundtrip_check(&model, &args.enc.config()) {
        Ok(r) => r,
        Err(SolveError::TooManyBits(_) | SolveError::OracleTooLarge) => {
            eprintln!("model too large for the roundtrip guard");
            return Ok(EXIT_GUARD);
        }
        Err(e) => return Err(e.to_string()),
    };
    if args.json {
        println!("{}", report_json(&report, &model));
    } else {
        match &report.pipeline_inconsistent {
            Some(msg) => println!("pipeline: inconsistent ({msg})"),
            None => println!("pipeline: {} bits", report.qubo_bits),
        }
        match &report.oracle_objective {
            Some(obj) => println!("oracle: optimum {}", format_rat(obj)),
            None => println!("oracle: infeasible"),
        }
        if let Some(d) = &report.decoded {
            println!(
                "decoded: objective {} ({})",
                format_rat(&d.objective),
                if d.feasible { "feasible" } else { "infeasible" }
            );
        }
        println!("roundtrip: {}", if report.pass { "PASS" } else { "FAIL" });
    }
    Ok(if report.pass { 0 } else { EXIT_USAGE })
}

fn report_json(report: &fzn2qubo::solve::RoundtripReport, model: &QipModel) -> String {
    let decoded = report.decoded.as_ref().map(|d| {
        let assignment: BTreeMap<String, i64> = d
            .assignment
            .iter()
            .map(|(v, x)| (model.var(*v).name.clone(), *x))
            .collect();
        serde_json::json!({
            "assignment": assignment,
            "objective": format_rat(&d.objective),
            "feasible": d.feasible,
            "energy": format_rat(&d.energy),
        })
    });
    serde_json::json!({
        "pass": report.pass,
        "qubo_bits": report.qubo_bits,
        "oracle_objective": report.oracle_objective.as_ref().map(format_rat),
        "pipeline_inconsistent": report.pipeline_inconsistent,
        "decoded": decoded,
    })
    .to_string()
}

fn cmd_check(path: &Path) -> Result<u8, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    match read_qubo(&text) {
        Ok(q) => {
            println!(
                "ok: {} bits, {} entries, offset {}, scale {}",
                q.n,
                q.entries.len(),
                format_rat(&q.offset),
                format_rat(&q.scale)
            );
            Ok(0)
        }
        Err(e) => {
            eprintln!("invalid: {e}");
            Ok(EXIT_USAGE)
        }
    }
}
