//! Declarative checks over a report CSV.
//!
//! One assertion per line; `#` starts a comment.
//!
//! ```text
//! traffic FTP                                   # default traffic for later lines
//! throughput(DWC,32) >= throughput(DWC,1024)
//! forall size: plr(DWC,size) <= plr(BDSIIT,size)
//! forall size, next: eed(DSTM,size) < eed(DSTM,next)
//! forall size in {256,512}: eed@FTP(DWC,size) > eed@CBR(DWC,size)
//! forall size: throughput(DSTM,size) >= 70
//! ```
//!
//! Grammar:
//!
//! ```text
//! line       = directive | assertion
//! directive  = "traffic" TRAFFIC
//! assertion  = [ "forall" VAR [ "," VAR ] [ "in" "{" INT { "," INT } "}" ] ":" ] term OP term
//! term       = NUMBER | METRIC [ "@" TRAFFIC ] "(" MECH "," ( INT | VAR ) ")"
//! METRIC     = throughput | throughput_bps | eed | plr
//! OP         = "<=" | ">=" | "<" | ">"
//! ```
//!
//! `throughput` is the percentage column, `eed` the mean delay in ms and
//! `plr` the loss percentage. A term without `@` uses the traffic of the
//! latest `traffic` directive (FTP before any).
//!
//! The first variable ranges over the sizes; the second, if present, is
//! bound to the next larger size in the same range. Without `in {...}` the
//! range is every size for which all series named in the line have a row.
//! An assertion fails if any instance is false, if a value is missing or
//! `NA`, or if its range is empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::gateway::GatewayKind;
use crate::metrics::MetricsReport;
use crate::scenario::Traffic;

#[derive(Debug, Error)]
pub enum ExpectError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Throughput,
    ThroughputBps,
    Eed,
    Plr,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Throughput => "throughput",
            Metric::ThroughputBps => "throughput_bps",
            Metric::Eed => "eed",
            Metric::Plr => "plr",
        }
    }

    fn of(self, r: &MetricsReport) -> Option<f64> {
        match self {
            Metric::Throughput => r.throughput_pct,
            Metric::ThroughputBps => r.throughput_bps,
            Metric::Eed => r.mean_eed_ms,
            Metric::Plr => r.plr_pct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeRef {
    Literal(u32),
    /// Index into the assertion's variables.
    Var(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Number(f64),
    Series {
        metric: Metric,
        traffic: Traffic,
        mechanism: GatewayKind,
        size: SizeRef,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Le,
    Ge,
    Lt,
    Gt,
}

impl Op {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Le => a <= b,
            Op::Ge => a >= b,
            Op::Lt => a < b,
            Op::Gt => a > b,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Op::Le => "<=",
            Op::Ge => ">=",
            Op::Lt => "<",
            Op::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub line: usize,
    pub text: String,
    pub vars: Vec<String>,
    pub range: Option<Vec<u32>>,
    pub lhs: Term,
    pub op: Op,
    pub rhs: Term,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(f64),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
        }
    }
}

fn lex(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two: String = cs[i..(i + 2).min(cs.len())].iter().collect();
        let sym = match (two.as_str(), c) {
            ("<=", _) | (_, '≤') => Some(("<=", if c == '≤' { 1 } else { 2 })),
            (">=", _) | (_, '≥') => Some((">=", if c == '≥' { 1 } else { 2 })),
            (_, '<') => Some(("<", 1)),
            (_, '>') => Some((">", 1)),
            (_, '(') => Some(("(", 1)),
            (_, ')') => Some((")", 1)),
            (_, '{') => Some(("{", 1)),
            (_, '}') => Some(("}", 1)),
            (_, ',') => Some((",", 1)),
            (_, ':') => Some((":", 1)),
            (_, '@') => Some(("@", 1)),
            _ => None,
        };
        if let Some((s, n)) = sym {
            out.push(Tok::Sym(s));
            i += n;
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '.' || cs[i] == '-' || cs[i] == '+') {
                i += 1;
            }
            let t: String = cs[start..i].iter().collect();
            out.push(Tok::Num(t.parse().map_err(|_| format!("bad number `{t}`"))?));
        } else if c.is_alphabetic() || c == '_' || c == '&' || c == '-' {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || matches!(cs[i], '_' | '&' | '-')) {
                i += 1;
            }
            out.push(Tok::Word(cs[start..i].iter().collect()));
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    traffic: Traffic,
    vars: Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<Tok, String> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| format!("expected {what}, found end of line"))?;
        self.pos += 1;
        Ok(t)
    }

    fn sym(&mut self, s: &'static str) -> Result<(), String> {
        match self.next(&format!("`{s}`"))? {
            Tok::Sym(x) if x == s => Ok(()),
            t => Err(format!("expected `{s}`, found {t}")),
        }
    }

    fn eat(&mut self, s: &'static str) -> bool {
        if self.peek() == Some(&Tok::Sym(s)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self, what: &str) -> Result<String, String> {
        match self.next(what)? {
            Tok::Word(w) => Ok(w),
            t => Err(format!("expected {what}, found {t}")),
        }
    }

    fn int(&mut self) -> Result<u32, String> {
        match self.next("a packet size")? {
            Tok::Num(n) if n.fract() == 0.0 && n >= 0.0 && n <= f64::from(u32::MAX) => Ok(n as u32),
            t => Err(format!("expected a packet size, found {t}")),
        }
    }

    fn term(&mut self) -> Result<Term, String> {
        let name = match self.next("a term")? {
            Tok::Num(n) => return Ok(Term::Number(n)),
            Tok::Word(w) => w,
            t => return Err(format!("expected a term, found {t}")),
        };
        let metric = match name.as_str() {
            "throughput" => Metric::Throughput,
            "throughput_bps" => Metric::ThroughputBps,
            "eed" => Metric::Eed,
            "plr" => Metric::Plr,
            _ => return Err(format!("unknown metric `{name}`")),
        };
        let traffic = if self.eat("@") {
            self.word("a traffic")?.parse()?
        } else {
            self.traffic
        };
        self.sym("(")?;
        let mechanism = self.word("a mechanism")?.parse().map_err(|e| format!("{e}"))?;
        self.sym(",")?;
        let size = match self.next("a size or variable")? {
            Tok::Num(n) if n.fract() == 0.0 && n >= 0.0 => SizeRef::Literal(n as u32),
            Tok::Word(w) => match self.vars.iter().position(|v| *v == w) {
                Some(i) => SizeRef::Var(i),
                None => return Err(format!("unknown variable `{w}`")),
            },
            t => return Err(format!("expected a size or variable, found {t}")),
        };
        self.sym(")")?;
        Ok(Term::Series {
            metric,
            traffic,
            mechanism,
            size,
        })
    }

    fn op(&mut self) -> Result<Op, String> {
        match self.next("a comparison")? {
            Tok::Sym("<=") => Ok(Op::Le),
            Tok::Sym(">=") => Ok(Op::Ge),
            Tok::Sym("<") => Ok(Op::Lt),
            Tok::Sym(">") => Ok(Op::Gt),
            t => Err(format!("expected one of <= >= < >, found {t}")),
        }
    }
}

impl Expectations {
    pub fn parse(text: &str) -> Result<Self, ExpectError> {
        let mut traffic = Traffic::Ftp;
        let mut assertions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| ExpectError::Syntax { line, message };
            let toks = lex(body).map_err(err)?;
            if toks.first() == Some(&Tok::Word("traffic".into())) {
                match &toks[1..] {
                    [Tok::Word(t)] => traffic = t.parse().map_err(err)?,
                    _ => return Err(err("expected `traffic FTP|CBR|MIXED`".into())),
                }
                continue;
            }
            let mut p = Parser {
                toks: &toks,
                pos: 0,
                traffic,
                vars: Vec::new(),
            };
            let assertion = (|| {
                let mut range = None;
                if p.peek() == Some(&Tok::Word("forall".into())) {
                    p.pos += 1;
                    let v = p.word("a variable")?;
                    p.vars.push(v);
                    if p.eat(",") {
                        let v = p.word("a variable")?;
                        if p.vars.contains(&v) {
                            return Err(format!("variable `{v}` bound twice"));
                        }
                        p.vars.push(v);
                    }
                    if p.peek() == Some(&Tok::Word("in".into())) {
                        p.pos += 1;
                        p.sym("{")?;
                        let mut sizes = vec![p.int()?];
                        while p.eat(",") {
                            sizes.push(p.int()?);
                        }
                        p.sym("}")?;
                        range = Some(sizes);
                    }
                    p.sym(":")?;
                }
                let lhs = p.term()?;
                let op = p.op()?;
                let rhs = p.term()?;
                if let Some(t) = p.peek() {
                    return Err(format!("unexpected {t} after the comparison"));
                }
                Ok(Assertion {
                    line,
                    text: body.to_string(),
                    vars: p.vars.clone(),
                    range,
                    lhs,
                    op,
                    rhs,
                })
            })()
            .map_err(err)?;
            assertions.push(assertion);
        }
        Ok(Self { assertions })
    }

    pub fn load(path: &Path) -> Result<Self, ExpectError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExpectError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn check(&self, rows: &[MetricsReport]) -> Vec<CheckResult> {
        let index: BTreeMap<_, _> = rows.iter().map(|r| (r.key(), r)).collect();
        self.assertions.iter().map(|a| a.check(&index)).collect()
    }
}

type Index<'a> = BTreeMap<(GatewayKind, u32, Traffic), &'a MetricsReport>;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub line: usize,
    pub text: String,
    /// Instances evaluated.
    pub checked: usize,
    pub violations: Vec<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Term {
    fn describe(&self, bound: &[u32]) -> String {
        match self {
            Term::Number(n) => format!("{n}"),
            Term::Series {
                metric,
                traffic,
                mechanism,
                size,
            } => format!("{}@{traffic}({mechanism},{})", metric.name(), resolve(*size, bound)),
        }
    }

    fn eval(&self, index: &Index, bound: &[u32]) -> Option<f64> {
        match self {
            Term::Number(n) => Some(*n),
            Term::Series {
                metric,
                traffic,
                mechanism,
                size,
            } => index
                .get(&(*mechanism, resolve(*size, bound), *traffic))
                .and_then(|r| metric.of(r)),
        }
    }

    fn series(&self) -> Option<(GatewayKind, Traffic, SizeRef)> {
        match self {
            Term::Number(_) => None,
            Term::Series {
                traffic,
                mechanism,
                size,
                ..
            } => Some((*mechanism, *traffic, *size)),
        }
    }
}

fn resolve(s: SizeRef, bound: &[u32]) -> u32 {
    match s {
        SizeRef::Literal(n) => n,
        SizeRef::Var(i) => bound[i],
    }
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "missing".into(),
    }
}

impl Assertion {
    /// Sizes the first variable ranges over.
    fn domain(&self, index: &Index) -> Vec<u32> {
        if let Some(r) = &self.range {
            let set: BTreeSet<u32> = r.iter().copied().collect();
            return set.into_iter().collect();
        }
        let sized: Vec<(GatewayKind, Traffic)> = [&self.lhs, &self.rhs]
            .iter()
            .filter_map(|t| t.series())
            .filter(|(_, _, s)| matches!(s, SizeRef::Var(_)))
            .map(|(m, t, _)| (m, t))
            .collect();
        let all: BTreeSet<u32> = index.keys().map(|k| k.1).collect();
        all.into_iter()
            .filter(|&s| sized.iter().all(|&(m, t)| index.contains_key(&(m, s, t))))
            .collect()
    }

    fn instances(&self, index: &Index) -> Vec<Vec<u32>> {
        match self.vars.len() {
            0 => vec![vec![]],
            1 => self.domain(index).into_iter().map(|s| vec![s]).collect(),
            _ => self.domain(index).windows(2).map(|w| vec![w[0], w[1]]).collect(),
        }
    }

    fn check(&self, index: &Index) -> CheckResult {
        let instances = self.instances(index);
        let mut violations = Vec::new();
        if instances.is_empty() {
            violations.push("no sizes to check".to_string());
        }
        for bound in &instances {
            let (a, b) = (self.lhs.eval(index, bound), self.rhs.eval(index, bound));
            let ok = matches!((a, b), (Some(a), Some(b)) if self.op.holds(a, b));
            if !ok {
                let vars: Vec<String> = self.vars.iter().zip(bound).map(|(v, s)| format!("{v}={s}")).collect();
                let prefix = if vars.is_empty() { String::new() } else { format!("{}: ", vars.join(", ")) };
                violations.push(format!(
                    "{prefix}{} = {} {} {} = {}",
                    self.lhs.describe(bound),
                    fmt_value(a),
                    self.op.as_str(),
                    self.rhs.describe(bound),
                    fmt_value(b)
                ));
            }
        }
        CheckResult {
            line: self.line,
            text: self.text.clone(),
            checked: instances.len(),
            violations,
        }
    }
}
