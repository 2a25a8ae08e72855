//! FlatZinc frontend: parser, subset validation and lowering to QIP(FD).
//!
//! Only the plain-integer FlatZinc subset is accepted:
//! `int_lin_eq`, `int_lin_le`, `int_eq`, `int_le`, `int_times`, with bool
//! variables lowered to 0..1 integers. Everything else is reported by
//! [`validate_subset`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ir::{
    AffineExpr, Domain, Inconsistent, QipModel, Relation, Sense, VarId, VarKind,
};
use crate::rat::rat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Param {
    Int(i64),
    IntArray(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FznDomain {
    Range(i64, i64),
    Set(Vec<i64>),
    Bool,
}

#[derive(Debug, Clone)]
pub struct FznVar {
    pub name: String,
    pub domain: FznDomain,
    pub output: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Int(i64),
    Bool(bool),
    Id(String),
    Array(Vec<Arg>),
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub pred: String,
    pub args: Vec<Arg>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveGoal {
    Satisfy,
    Minimize(Arg),
    Maximize(Arg),
}

#[derive(Debug, Clone)]
pub struct FznModel {
    pub params: Vec<(String, Param)>,
    pub vars: Vec<FznVar>,
    pub constraints: Vec<Constraint>,
    pub solve: SolveGoal,
}

impl FznModel {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

// ---------------------------------------------------------------- tokens

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Colon,
    DoubleColon,
    Semi,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    DotDot,
    Eq,
    Minus,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Int(v) => write!(f, "'{v}'"),
            Tok::Colon => write!(f, "':'"),
            Tok::DoubleColon => write!(f, "'::'"),
            Tok::Semi => write!(f, "';'"),
            Tok::Comma => write!(f, "','"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::LBracket => write!(f, "'['"),
            Tok::RBracket => write!(f, "']'"),
            Tok::LBrace => write!(f, "'{{'"),
            Tok::RBrace => write!(f, "'}}'"),
            Tok::DotDot => write!(f, "'..'"),
            Tok::Eq => write!(f, "'='"),
            Tok::Minus => write!(f, "'-'"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }

    fn next_tok(&mut self) -> Result<(Tok, usize, usize), ParseError> {
        loop {
            match self.peek() {
                Some(b'%') => {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let tok = match self.peek() {
            None => Tok::Eof,
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.bump();
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Tok::Int(text.parse().map_err(|_| self.err("integer literal out of range"))?)
            }
            Some(b':') => {
                self.bump();
                if self.peek() == Some(b':') {
                    self.bump();
                    Tok::DoubleColon
                } else {
                    Tok::Colon
                }
            }
            Some(b'.') => {
                self.bump();
                if self.peek() == Some(b'.') {
                    self.bump();
                    Tok::DotDot
                } else {
                    return Err(self.err("expected '..'"));
                }
            }
            Some(b';') => {
                self.bump();
                Tok::Semi
            }
            Some(b',') => {
                self.bump();
                Tok::Comma
            }
            Some(b'(') => {
                self.bump();
                Tok::LParen
            }
            Some(b')') => {
                self.bump();
                Tok::RParen
            }
            Some(b'[') => {
                self.bump();
                Tok::LBracket
            }
            Some(b']') => {
                self.bump();
                Tok::RBracket
            }
            Some(b'{') => {
                self.bump();
                Tok::LBrace
            }
            Some(b'}') => {
                self.bump();
                Tok::RBrace
            }
            Some(b'=') => {
                self.bump();
                Tok::Eq
            }
            Some(b'-') => {
                self.bump();
                Tok::Minus
            }
            Some(c) => return Err(self.err(format!("unexpected character '{}'", c as char))),
        };
        Ok((tok, line, col))
    }
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn cur(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn loc(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.1, t.2)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.loc();
        ParseError { line, col, msg: msg.into() }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.cur() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {want}, found {}", self.cur())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.cur().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err(format!("expected identifier, found {other}"))),
        }
    }

    fn int_lit(&mut self) -> Result<i64, ParseError> {
        let neg = if *self.cur() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.cur().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => Err(self.err(format!("expected integer, found {other}"))),
        }
    }
}

pub fn parse_model(text: &str) -> Result<FznModel, ParseError> {
    let mut lx = Lexer::new(text);
    let mut toks = Vec::new();
    loop {
        let t = lx.next_tok()?;
        let end = t.0 == Tok::Eof;
        toks.push(t);
        if end {
            break;
        }
    }
    let mut p = Parser { toks, pos: 0 };
    let mut model = FznModel {
        params: Vec::new(),
        vars: Vec::new(),
        constraints: Vec::new(),
        solve: SolveGoal::Satisfy,
    };
    let mut seen_solve = false;

    while *p.cur() != Tok::Eof {
        let (line, _col) = p.loc();
        match p.cur().clone() {
            Tok::Ident(kw) if kw == "predicate" => {
                // user-declared predicate signatures carry no information we use
                while *p.cur() != Tok::Semi && *p.cur() != Tok::Eof {
                    p.bump();
                }
                p.expect(Tok::Semi)?;
            }
            Tok::Ident(kw) if kw == "var" => {
                p.bump();
                let dom = parse_domain(&mut p)?;
                p.expect(Tok::Colon)?;
                let name = p.ident()?;
                check_fresh(&model, &name, &p)?;
                let mut output = false;
                while *p.cur() == Tok::DoubleColon {
                    p.bump();
                    let ann = p.ident()?;
                    if ann == "output_var" {
                        output = true;
                    }
                    skip_annotation_args(&mut p)?;
                }
                p.expect(Tok::Semi)?;
                model.vars.push(FznVar { name, domain: dom, output });
            }
            Tok::Ident(kw) if kw == "int" || kw == "bool" || kw == "array" => {
                parse_param(&mut p, &mut model)?;
            }
            Tok::Ident(kw) if kw == "constraint" => {
                p.bump();
                let pred = p.ident()?;
                p.expect(Tok::LParen)?;
                let mut args = Vec::new();
                if *p.cur() != Tok::RParen {
                    loop {
                        args.push(parse_arg(&mut p, &model)?);
                        if *p.cur() == Tok::Comma {
                            p.bump();
                        } else {
                            break;
                        }
                    }
                }
                p.expect(Tok::RParen)?;
                while *p.cur() == Tok::DoubleColon {
                    p.bump();
                    p.ident()?;
                    skip_annotation_args(&mut p)?;
                }
                p.expect(Tok::Semi)?;
                model.constraints.push(Constraint { pred, args, line });
            }
            Tok::Ident(kw) if kw == "solve" => {
                p.bump();
                while *p.cur() == Tok::DoubleColon {
                    p.bump();
                    p.ident()?;
                    skip_annotation_args(&mut p)?;
                }
                let goal = p.ident()?;
                model.solve = match goal.as_str() {
                    "satisfy" => SolveGoal::Satisfy,
                    "minimize" => SolveGoal::Minimize(parse_arg(&mut p, &model)?),
                    "maximize" => SolveGoal::Maximize(parse_arg(&mut p, &model)?),
                    other => return Err(p.err(format!("expected solve goal, found '{other}'"))),
                };
                p.expect(Tok::Semi)?;
                seen_solve = true;
            }
            other => return Err(p.err(format!("expected item, found {other}"))),
        }
    }
    if !seen_solve {
        return Err(p.err("missing solve item"));
    }
    Ok(model)
}

fn check_fresh(model: &FznModel, name: &str, p: &Parser) -> Result<(), ParseError> {
    if model.var_index(name).is_some() || model.param(name).is_some() {
        Err(p.err(format!("duplicate declaration of '{name}'")))
    } else {
        Ok(())
    }
}

fn parse_domain(p: &mut Parser) -> Result<FznDomain, ParseError> {
    match p.cur().clone() {
        Tok::Ident(kw) if kw == "bool" => {
            p.bump();
            Ok(FznDomain::Bool)
        }
        Tok::Ident(kw) if kw == "int" => {
            Err(p.err("unbounded 'var int' is not supported; give a finite domain"))
        }
        Tok::LBrace => {
            p.bump();
            let mut vals = Vec::new();
            loop {
                vals.push(p.int_lit()?);
                if *p.cur() == Tok::Comma {
                    p.bump();
                } else {
                    break;
                }
            }
            p.expect(Tok::RBrace)?;
            vals.sort_unstable();
            vals.dedup();
            if vals.is_empty() {
                return Err(p.err("empty set domain"));
            }
            Ok(FznDomain::Set(vals))
        }
        _ => {
            let lo = p.int_lit()?;
            p.expect(Tok::DotDot)?;
            let hi = p.int_lit()?;
            if lo > hi {
                return Err(p.err(format!("empty range domain {lo}..{hi}")));
            }
            Ok(FznDomain::Range(lo, hi))
        }
    }
}

fn skip_annotation_args(p: &mut Parser) -> Result<(), ParseError> {
    if *p.cur() != Tok::LParen {
        return Ok(());
    }
    let mut depth = 0usize;
    loop {
        match p.cur() {
            Tok::LParen | Tok::LBracket | Tok::LBrace => depth += 1,
            Tok::RParen | Tok::RBracket | Tok::RBrace => depth -= 1,
            Tok::Eof => return Err(p.err("unterminated annotation")),
            _ => {}
        }
        p.bump();
        if depth == 0 {
            return Ok(());
        }
    }
}

fn parse_param(p: &mut Parser, model: &mut FznModel) -> Result<(), ParseError> {
    match p.cur().clone() {
        Tok::Ident(kw) if kw == "int" => {
            p.bump();
            p.expect(Tok::Colon)?;
            let name = p.ident()?;
            check_fresh(model, &name, p)?;
            p.expect(Tok::Eq)?;
            let v = p.int_lit()?;
            p.expect(Tok::Semi)?;
            model.params.push((name, Param::Int(v)));
        }
        Tok::Ident(kw) if kw == "bool" => {
            p.bump();
            p.expect(Tok::Colon)?;
            let name = p.ident()?;
            check_fresh(model, &name, p)?;
            p.expect(Tok::Eq)?;
            let id = p.ident()?;
            let v = match id.as_str() {
                "true" => 1,
                "false" => 0,
                other => return Err(p.err(format!("expected bool literal, found '{other}'"))),
            };
            p.expect(Tok::Semi)?;
            model.params.push((name, Param::Int(v)));
        }
        Tok::Ident(kw) if kw == "array" => {
            p.bump();
            p.expect(Tok::LBracket)?;
            let _lo = p.int_lit()?;
            p.expect(Tok::DotDot)?;
            let _hi = p.int_lit()?;
            p.expect(Tok::RBracket)?;
            let of = p.ident()?;
            if of != "of" {
                return Err(p.err("expected 'of'"));
            }
            let elem = p.ident()?;
            if elem == "var" {
                return Err(p.err("arrays of variables are not supported; reference variables directly"));
            }
            if elem != "int" {
                return Err(p.err(format!("unsupported array element type '{elem}'")));
            }
            p.expect(Tok::Colon)?;
            let name = p.ident()?;
            check_fresh(model, &name, p)?;
            p.expect(Tok::Eq)?;
            p.expect(Tok::LBracket)?;
            let mut vals = Vec::new();
            if *p.cur() != Tok::RBracket {
                loop {
                    vals.push(p.int_lit()?);
                    if *p.cur() == Tok::Comma {
                        p.bump();
                    } else {
                        break;
                    }
                }
            }
            p.expect(Tok::RBracket)?;
            p.expect(Tok::Semi)?;
            model.params.push((name, Param::IntArray(vals)));
        }
        other => return Err(p.err(format!("expected parameter declaration, found {other}"))),
    }
    Ok(())
}

fn parse_arg(p: &mut Parser, model: &FznModel) -> Result<Arg, ParseError> {
    match p.cur().clone() {
        Tok::Minus | Tok::Int(_) => Ok(Arg::Int(p.int_lit()?)),
        Tok::Ident(s) if s == "true" => {
            p.bump();
            Ok(Arg::Bool(true))
        }
        Tok::Ident(s) if s == "false" => {
            p.bump();
            Ok(Arg::Bool(false))
        }
        Tok::Ident(s) => {
            p.bump();
            if model.var_index(&s).is_none() && model.param(&s).is_none() {
                return Err(p.err(format!("undeclared identifier '{s}'")));
            }
            Ok(Arg::Id(s))
        }
        Tok::LBracket => {
            p.bump();
            let mut items = Vec::new();
            if *p.cur() != Tok::RBracket {
                loop {
                    items.push(parse_arg(p, model)?);
                    if *p.cur() == Tok::Comma {
                        p.bump();
                    } else {
                        break;
                    }
                }
            }
            p.expect(Tok::RBracket)?;
            Ok(Arg::Array(items))
        }
        other => Err(p.err(format!("expected argument, found {other}"))),
    }
}

// ---------------------------------------------------------------- printer

/// Canonical re-print of a parsed model. `parse ∘ print` is the identity on
/// the printed form.
pub fn print_model(model: &FznModel) -> String {
    let mut out = String::new();
    for (name, param) in &model.params {
        match param {
            Param::Int(v) => writeln!(out, "int: {name} = {v};").unwrap(),
            Param::IntArray(vs) => {
                let body: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                writeln!(out, "array [1..{}] of int: {name} = [{}];", vs.len(), body.join(", "))
                    .unwrap()
            }
        }
    }
    for v in &model.vars {
        let dom = match &v.domain {
            FznDomain::Range(lo, hi) => format!("{lo}..{hi}"),
            FznDomain::Set(vs) => {
                let body: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                format!("{{{}}}", body.join(", "))
            }
            FznDomain::Bool => "bool".to_string(),
        };
        let ann = if v.output { " :: output_var" } else { "" };
        writeln!(out, "var {dom}: {}{ann};", v.name).unwrap();
    }
    for c in &model.constraints {
        let args: Vec<String> = c.args.iter().map(print_arg).collect();
        writeln!(out, "constraint {}({});", c.pred, args.join(", ")).unwrap();
    }
    match &model.solve {
        SolveGoal::Satisfy => writeln!(out, "solve satisfy;").unwrap(),
        SolveGoal::Minimize(a) => writeln!(out, "solve minimize {};", print_arg(a)).unwrap(),
        SolveGoal::Maximize(a) => writeln!(out, "solve maximize {};", print_arg(a)).unwrap(),
    }
    out
}

fn print_arg(a: &Arg) -> String {
    match a {
        Arg::Int(v) => v.to_string(),
        Arg::Bool(b) => b.to_string(),
        Arg::Id(s) => s.clone(),
        Arg::Array(items) => {
            let body: Vec<String> = items.iter().map(print_arg).collect();
            format!("[{}]", body.join(", "))
        }
    }
}

// ---------------------------------------------------------------- validation

pub const SUPPORTED_PREDICATES: &[&str] =
    &["int_lin_eq", "int_lin_le", "int_eq", "int_le", "int_times"];

/// Empty list iff every constraint uses a supported predicate.
pub fn validate_subset(model: &FznModel) -> Vec<String> {
    let mut diags = Vec::new();
    for c in &model.constraints {
        if SUPPORTED_PREDICATES.contains(&c.pred.as_str()) {
            continue;
        }
        if c.pred.ends_with("_reif") {
            diags.push(format!(
                "line {}: reified constraints are not supported: {}",
                c.line, c.pred
            ));
        } else {
            diags.push(format!("line {}: unsupported predicate {}", c.line, c.pred));
        }
    }
    diags
}

// ---------------------------------------------------------------- lowering

#[derive(Debug, Clone, thiserror::Error)]
pub enum LowerError {
    #[error("constraint at line {line}: {msg}")]
    BadConstraint { line: usize, msg: String },
    #[error(transparent)]
    Inconsistent(#[from] Inconsistent),
    #[error("cyclic product definition involving '{0}'")]
    CyclicProduct(String),
    #[error("objective must be a declared variable or integer literal")]
    BadObjective,
}

struct Lowerer<'a> {
    fzn: &'a FznModel,
    model: QipModel,
    var_ids: BTreeMap<String, VarId>,
}

impl<'a> Lowerer<'a> {
    fn bad(&self, c: &Constraint, msg: impl Into<String>) -> LowerError {
        LowerError::BadConstraint { line: c.line, msg: msg.into() }
    }

    /// Value of an argument that must be a plain integer (literal or parameter).
    fn const_arg(&self, c: &Constraint, a: &Arg) -> Result<i64, LowerError> {
        match a {
            Arg::Int(v) => Ok(*v),
            Arg::Bool(b) => Ok(*b as i64),
            Arg::Id(name) => match self.fzn.param(name) {
                Some(Param::Int(v)) => Ok(*v),
                _ => Err(self.bad(c, format!("expected integer constant, found '{name}'"))),
            },
            Arg::Array(_) => Err(self.bad(c, "expected integer constant, found array")),
        }
    }

    fn const_array(&self, c: &Constraint, a: &Arg) -> Result<Vec<i64>, LowerError> {
        match a {
            Arg::Array(items) => items.iter().map(|i| self.const_arg(c, i)).collect(),
            Arg::Id(name) => match self.fzn.param(name) {
                Some(Param::IntArray(vs)) => Ok(vs.clone()),
                _ => Err(self.bad(c, format!("expected integer array, found '{name}'"))),
            },
            _ => Err(self.bad(c, "expected integer array")),
        }
    }

    /// An argument in variable position: a declared variable, or a literal
    /// folded into the affine expression as coeff·literal.
    fn add_scaled_arg(
        &mut self,
        c: &Constraint,
        expr: &mut AffineExpr,
        coeff: i64,
        a: &Arg,
    ) -> Result<(), LowerError> {
        match a {
            Arg::Id(name) if self.var_ids.contains_key(name) => {
                expr.add_term(self.var_ids[name], rat(coeff));
                Ok(())
            }
            _ => {
                let v = self.const_arg(c, a)?;
                expr.constant += rat(coeff * v);
                Ok(())
            }
        }
    }

    /// Variable id for a product operand; literals get a fresh singleton
    /// variable which singleton elimination removes later.
    fn var_arg(&mut self, c: &Constraint, a: &Arg) -> Result<VarId, LowerError> {
        match a {
            Arg::Id(name) if self.var_ids.contains_key(name) => Ok(self.var_ids[name]),
            _ => {
                let v = self.const_arg(c, a)?;
                Ok(self.model.new_var(
                    format!("%lit{v}_{}", self.model.vars.len()),
                    Domain::Interval(v, v),
                    VarKind::Intermediate,
                ))
            }
        }
    }
}

/// Lowers a validated FlatZinc model into the raw QIP(FD) IR.
pub fn lower_to_qip(fzn: &FznModel) -> Result<QipModel, LowerError> {
    let mut lw = Lowerer { fzn, model: QipModel::new(), var_ids: BTreeMap::new() };
    for v in &fzn.vars {
        let dom = match &v.domain {
            FznDomain::Range(lo, hi) => Domain::Interval(*lo, *hi),
            FznDomain::Set(vs) => Domain::set(vs.clone()),
            FznDomain::Bool => Domain::Interval(0, 1),
        };
        let id = lw.model.new_var(v.name.clone(), dom, VarKind::Original);
        lw.var_ids.insert(v.name.clone(), id);
        if v.output {
            lw.model.outputs.insert(id);
        }
    }

    // products are collected first so the chain can be ordered factor-first
    let mut raw_products: Vec<(String, VarId, VarId, VarId)> = Vec::new();

    for c in &fzn.constraints {
        match c.pred.as_str() {
            "int_lin_eq" | "int_lin_le" => {
                if c.args.len() != 3 {
                    return Err(lw.bad(c, format!("{} expects 3 arguments", c.pred)));
                }
                let coeffs = lw.const_array(c, &c.args[0])?;
                let vars = match &c.args[1] {
                    Arg::Array(items) => items.clone(),
                    other => vec![other.clone()],
                };
                if coeffs.len() != vars.len() {
                    return Err(lw.bad(c, "coefficient and variable arrays differ in length"));
                }
                let d = lw.const_arg(c, &c.args[2])?;
                let mut expr = AffineExpr::constant(rat(-d));
                for (coeff, v) in coeffs.iter().zip(&vars) {
                    lw.add_scaled_arg(c, &mut expr, *coeff, v)?;
                }
                let rel = if c.pred == "int_lin_eq" { Relation::EqZero } else { Relation::LeZero };
                lw.model.push_linear(expr, rel)?;
            }
            "int_eq" | "int_le" => {
                if c.args.len() != 2 {
                    return Err(lw.bad(c, format!("{} expects 2 arguments", c.pred)));
                }
                let mut expr = AffineExpr::default();
                lw.add_scaled_arg(c, &mut expr, 1, &c.args[0])?;
                lw.add_scaled_arg(c, &mut expr, -1, &c.args[1])?;
                let rel = if c.pred == "int_eq" { Relation::EqZero } else { Relation::LeZero };
                lw.model.push_linear(expr, rel)?;
            }
            "int_times" => {
                if c.args.len() != 3 {
                    return Err(lw.bad(c, "int_times expects 3 arguments"));
                }
                let lhs = lw.var_arg(c, &c.args[0])?;
                let rhs = lw.var_arg(c, &c.args[1])?;
                let result = lw.var_arg(c, &c.args[2])?;
                let name = lw.model.var(result).name.clone();
                raw_products.push((name, result, lhs, rhs));
            }
            other => return Err(lw.bad(c, format!("unsupported predicate {other}"))),
        }
    }

    order_products(&mut lw.model, raw_products)?;

    // narrow each product-result domain by the interval product of its factors
    for k in 0..lw.model.products.len() {
        let p = lw.model.products[k];
        let (lo, hi) = interval_product(lw.model.domain(p.lhs), lw.model.domain(p.rhs));
        let name = lw.model.var(p.result).name.clone();
        match lw.model.domain(p.result).clamp(lo, hi) {
            Some(d) => lw.model.set_domain(p.result, d),
            None => {
                return Err(LowerError::Inconsistent(Inconsistent(format!(
                    "product result '{name}' domain excludes every attainable product value"
                ))))
            }
        }
    }

    let (expr, sense) = match &fzn.solve {
        SolveGoal::Satisfy => (AffineExpr::default(), Sense::Satisfy),
        SolveGoal::Minimize(a) => (objective_expr(&lw, a)?, Sense::Min),
        SolveGoal::Maximize(a) => (objective_expr(&lw, a)?.scaled(&rat(-1)), Sense::Max),
    };
    lw.model.objective = crate::ir::Objective { expr, sense };
    Ok(lw.model)
}

fn objective_expr(lw: &Lowerer<'_>, a: &Arg) -> Result<AffineExpr, LowerError> {
    match a {
        Arg::Id(name) if lw.var_ids.contains_key(name) => {
            Ok(AffineExpr::var(lw.var_ids[name]))
        }
        Arg::Int(v) => Ok(AffineExpr::constant(rat(*v))),
        Arg::Id(name) => match lw.fzn.param(name) {
            Some(Param::Int(v)) => Ok(AffineExpr::constant(rat(*v))),
            _ => Err(LowerError::BadObjective),
        },
        _ => Err(LowerError::BadObjective),
    }
}

/// Orders the product constraints so every factor that is itself a product
/// result comes earlier in the chain (Kahn's algorithm).
fn order_products(
    model: &mut QipModel,
    mut raw: Vec<(String, VarId, VarId, VarId)>,
) -> Result<(), LowerError> {
    let results: std::collections::BTreeSet<VarId> = raw.iter().map(|(_, r, _, _)| *r).collect();
    if results.len() != raw.len() {
        let mut seen = std::collections::BTreeSet::new();
        for (name, r, _, _) in &raw {
            if !seen.insert(*r) {
                return Err(LowerError::CyclicProduct(format!(
                    "'{name}' is the result of two products"
                )));
            }
        }
    }
    let mut placed: std::collections::BTreeSet<VarId> = std::collections::BTreeSet::new();
    while !raw.is_empty() {
        let idx = raw.iter().position(|(_, r, l, h)| {
            *l != *r
                && *h != *r
                && [l, h].iter().all(|f| !results.contains(f) || placed.contains(f))
        });
        match idx {
            Some(i) => {
                let (_, result, lhs, rhs) = raw.remove(i);
                placed.insert(result);
                model.products.push(crate::ir::ProductConstraint { result, lhs, rhs });
            }
            None => return Err(LowerError::CyclicProduct(raw[0].0.clone())),
        }
    }
    Ok(())
}

/// Corner-product interval hull of two domains.
pub fn interval_product(a: &Domain, b: &Domain) -> (i64, i64) {
    let corners = [
        a.min() as i128 * b.min() as i128,
        a.min() as i128 * b.max() as i128,
        a.max() as i128 * b.min() as i128,
        a.max() as i128 * b.max() as i128,
    ];
    let lo = *corners.iter().min().unwrap();
    let hi = *corners.iter().max().unwrap();
    (
        lo.clamp(i64::MIN as i128, i64::MAX as i128) as i64,
        hi.clamp(i64::MIN as i128, i64::MAX as i128) as i64,
    )
}
