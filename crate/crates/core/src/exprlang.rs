//! A small arithmetic expression language for user-supplied scalar fields.
//!
//! Grammar, in precedence order from loosest to tightest:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom ("^" unary)?          (right associative)
//! atom   := number | "pi" | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Functions: `sin cos exp log sqrt abs` (one argument), `min max` (two arguments).
//! Variables must be declared up front through a [`VarSet`]; several names may share
//! one slot (e.g. `x` and `x1`).

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at offset {offset}")]
    UndeclaredVariable { name: String, offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("`{func}` takes {expected} argument(s), got {found} (offset {offset})")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("expression nested deeper than {MAX_DEPTH} levels at offset {offset}")]
    TooDeep { offset: usize },
    #[error("domain fault in `{snippet}` (bytes {start}..{end}): {message}")]
    DomainFault {
        start: usize,
        end: usize,
        snippet: String,
        message: String,
    },
    #[error("no binding for variable `{name}`")]
    MissingBinding { name: String },
}

/// Declared variable names and the evaluation slot each one reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarSet {
    names: Vec<(String, usize)>,
}

impl VarSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `names` in order, one slot each.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let mut set = Self::new();
        for (slot, name) in names.iter().enumerate() {
            set.declare(name.as_ref(), slot);
        }
        set
    }

    pub fn declare(&mut self, name: &str, slot: usize) -> &mut Self {
        self.names.retain(|(n, _)| n != name);
        self.names.push((name.to_string(), slot));
        self
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn slot_count(&self) -> usize {
        self.names.iter().map(|(_, s)| s + 1).max().unwrap_or(0)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|(n, _)| n.as_str())
    }
}

/// Variable name to value map.
pub type Bindings = HashMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Num(f64),
    Pi,
    Var { name: String, slot: usize },
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone)]
struct Node {
    kind: Kind,
    start: usize,
    end: usize,
}

impl PartialEq for Node {
    // Structural equality; spans are ignored so that reparsed printouts compare equal.
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (Kind::Num(a), Kind::Num(b)) => a == b,
            (Kind::Pi, Kind::Pi) => true,
            (Kind::Var { slot: a, .. }, Kind::Var { slot: b, .. }) => a == b,
            (Kind::Neg(a), Kind::Neg(b)) => a == b,
            (Kind::Bin(o1, l1, r1), Kind::Bin(o2, l2, r2)) => o1 == o2 && l1 == l2 && r1 == r2,
            (Kind::Call(f1, a1), Kind::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

/// A parsed expression bound to a [`VarSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
    vars: VarSet,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize, usize)>, ExprError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, s, e) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, s, e));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize, usize), ExprError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if start >= bytes.len() {
            return Ok((Tok::End, start, start));
        }
        let c = bytes[start];
        if c.is_ascii_digit() || c == b'.' {
            let mut i = start;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &self.src[start..i];
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("number `{text}` overflows"),
                });
            }
            self.pos = i;
            return Ok((Tok::Num(value), start, i));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut i = start;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            self.pos = i;
            return Ok((Tok::Ident(self.src[start..i].to_string()), start, i));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Sym(c as char), start, start + 1));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ExprError::Syntax {
            offset: start,
            message: format!("unexpected character `{ch}`"),
        })
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize, usize)>,
    idx: usize,
    vars: &'a VarSet,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &(Tok, usize, usize) {
        &self.toks[self.idx]
    }

    fn bump(&mut self) -> (Tok, usize, usize) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn enter(&mut self, offset: usize) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ExprError::TooDeep { offset });
        }
        Ok(())
    }

    fn unexpected(&self) -> ExprError {
        let (tok, offset, _) = self.peek();
        let message = match tok {
            Tok::End => "unexpected end of input".to_string(),
            Tok::Num(v) => format!("unexpected number {v}"),
            Tok::Ident(s) => format!("unexpected identifier `{s}`"),
            Tok::Sym(c) => format!("unexpected `{c}`"),
        };
        ExprError::Syntax {
            offset: *offset,
            message,
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let (Tok::Sym(c @ ('+' | '-')), _, _) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.bump();
            let rhs = self.term()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let (Tok::Sym(c @ ('*' | '/')), _, _) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.bump();
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        let (tok, start, _) = self.peek().clone();
        self.enter(start)?;
        let node = if tok == Tok::Sym('-') {
            self.bump();
            let inner = self.unary()?;
            let end = inner.end;
            Node {
                kind: Kind::Neg(Box::new(inner)),
                start,
                end,
            }
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(node)
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if let (Tok::Sym('^'), _, _) = self.peek() {
            self.bump();
            let exponent = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let (tok, start, end) = self.peek().clone();
        match tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Node {
                    kind: Kind::Num(v),
                    start,
                    end,
                })
            }
            Tok::Sym('(') => {
                self.bump();
                self.enter(start)?;
                let inner = self.expr()?;
                self.depth -= 1;
                match self.peek().clone() {
                    (Tok::Sym(')'), _, close) => {
                        self.bump();
                        Ok(Node {
                            kind: inner.kind,
                            start,
                            end: close,
                        })
                    }
                    _ => Err(self.unexpected()),
                }
            }
            Tok::Ident(name) => {
                self.bump();
                if let (Tok::Sym('('), _, _) = self.peek() {
                    return self.call(name, start);
                }
                if name == "pi" {
                    return Ok(Node {
                        kind: Kind::Pi,
                        start,
                        end,
                    });
                }
                match self.vars.slot(&name) {
                    Some(slot) => Ok(Node {
                        kind: Kind::Var { name, slot },
                        start,
                        end,
                    }),
                    None if Func::lookup(&name).is_some() => Err(ExprError::Syntax {
                        offset: end,
                        message: format!("function `{name}` needs parenthesised arguments"),
                    }),
                    None => Err(ExprError::UndeclaredVariable {
                        name,
                        offset: start,
                    }),
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn call(&mut self, name: String, start: usize) -> Result<Node, ExprError> {
        let func = Func::lookup(&name).ok_or_else(|| ExprError::UnknownFunction {
            name: name.clone(),
            offset: start,
        })?;
        self.bump(); // '('
        self.enter(start)?;
        let mut args = vec![self.expr()?];
        while let (Tok::Sym(','), _, _) = self.peek() {
            self.bump();
            args.push(self.expr()?);
        }
        self.depth -= 1;
        let end = match self.peek() {
            (Tok::Sym(')'), _, e) => *e,
            _ => return Err(self.unexpected()),
        };
        self.bump();
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                func: name,
                expected: func.arity(),
                found: args.len(),
                offset: start,
            });
        }
        Ok(Node {
            kind: Kind::Call(func, args),
            start,
            end,
        })
    }
}

fn binary(op: BinOp, lhs: Node, rhs: Node) -> Node {
    let (start, end) = (lhs.start, rhs.end);
    Node {
        kind: Kind::Bin(op, Box::new(lhs), Box::new(rhs)),
        start,
        end,
    }
}

/// Parses `text` against the declared variables.
pub fn parse(text: &str, vars: &VarSet) -> Result<Expr, ExprError> {
    let toks = Lexer::tokenize(text)?;
    let mut p = Parser {
        toks,
        idx: 0,
        vars,
        depth: 0,
    };
    let root = p.expr()?;
    if p.peek().0 != Tok::End {
        return Err(p.unexpected());
    }
    Ok(Expr {
        root,
        source: text.to_string(),
        vars: vars.clone(),
    })
}

impl Expr {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    /// Evaluates with values indexed by slot.
    pub fn eval_slots(&self, values: &[f64]) -> Result<f64, ExprError> {
        self.eval_node(&self.root, values)
    }

    /// Evaluates against named bindings; every variable the expression reads must be bound.
    pub fn eval(&self, bindings: &Bindings) -> Result<f64, ExprError> {
        let mut slots = vec![f64::NAN; self.vars.slot_count()];
        let mut bound = vec![false; slots.len()];
        for name in self.vars.names() {
            if let Some(v) = bindings.get(name) {
                let s = self.vars.slot(name).unwrap();
                slots[s] = *v;
                bound[s] = true;
            }
        }
        let mut missing = None;
        self.visit_vars(&self.root, &mut |name, slot| {
            if !bound[slot] && missing.is_none() {
                missing = Some(name.to_string());
            }
        });
        if let Some(name) = missing {
            return Err(ExprError::MissingBinding { name });
        }
        self.eval_slots(&slots)
    }

    fn visit_vars(&self, node: &Node, f: &mut impl FnMut(&str, usize)) {
        match &node.kind {
            Kind::Var { name, slot } => f(name, *slot),
            Kind::Neg(a) => self.visit_vars(a, f),
            Kind::Bin(_, a, b) => {
                self.visit_vars(a, f);
                self.visit_vars(b, f);
            }
            Kind::Call(_, args) => args.iter().for_each(|a| self.visit_vars(a, f)),
            Kind::Num(_) | Kind::Pi => {}
        }
    }

    fn fault(&self, node: &Node, message: impl Into<String>) -> ExprError {
        ExprError::DomainFault {
            start: node.start,
            end: node.end,
            snippet: self.source.get(node.start..node.end).unwrap_or("").to_string(),
            message: message.into(),
        }
    }

    fn eval_node(&self, node: &Node, vals: &[f64]) -> Result<f64, ExprError> {
        let v = match &node.kind {
            Kind::Num(v) => *v,
            Kind::Pi => std::f64::consts::PI,
            Kind::Var { slot, .. } => vals[*slot],
            Kind::Neg(a) => -self.eval_node(a, vals)?,
            Kind::Bin(op, a, b) => {
                let x = self.eval_node(a, vals)?;
                let y = self.eval_node(b, vals)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(self.fault(node, "division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x == 0.0 && y < 0.0 {
                            return Err(self.fault(node, "zero raised to a negative power"));
                        }
                        if x < 0.0 && y.fract() != 0.0 {
                            return Err(self.fault(node, "negative base with fractional exponent"));
                        }
                        if y.fract() == 0.0 && y.abs() <= 16.0 {
                            x.powi(y as i32)
                        } else {
                            x.powf(y)
                        }
                    }
                }
            }
            Kind::Call(func, args) => {
                let a = self.eval_node(&args[0], vals)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.fault(node, format!("log of non-positive {a}")));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.fault(node, format!("sqrt of negative {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(self.eval_node(&args[1], vals)?),
                    Func::Max => a.max(self.eval_node(&args[1], vals)?),
                }
            }
        };
        if !v.is_finite() {
            return Err(self.fault(node, format!("non-finite result {v}")));
        }
        Ok(v)
    }

    /// Central-difference gradient with respect to `vars`, step `h * max(1, |value|)`.
    pub fn grad(&self, vars: &[&str], bindings: &Bindings, h: f64) -> Result<Vec<f64>, ExprError> {
        let mut b = bindings.clone();
        vars.iter()
            .map(|name| {
                let x0 = *bindings.get(*name).ok_or_else(|| ExprError::MissingBinding {
                    name: name.to_string(),
                })?;
                let step = h * x0.abs().max(1.0);
                b.insert(name.to_string(), x0 + step);
                let fp = self.eval(&b)?;
                b.insert(name.to_string(), x0 - step);
                let fm = self.eval(&b)?;
                b.insert(name.to_string(), x0);
                Ok((fp - fm) / (2.0 * step))
            })
            .collect()
    }

    /// Slot-indexed variant of [`Expr::grad`] for hot loops.
    pub fn grad_slots(&self, slots: &[usize], values: &[f64], h: f64) -> Result<Vec<f64>, ExprError> {
        let mut v = values.to_vec();
        slots
            .iter()
            .map(|&s| {
                let x0 = values[s];
                let step = h * x0.abs().max(1.0);
                v[s] = x0 + step;
                let fp = self.eval_slots(&v)?;
                v[s] = x0 - step;
                let fm = self.eval_slots(&v)?;
                v[s] = x0;
                Ok((fp - fm) / (2.0 * step))
            })
            .collect()
    }
}

impl fmt::Display for Expr {
    /// Canonical fully parenthesised form; reparses to an equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match &node.kind {
        Kind::Num(v) => write!(f, "{v:?}"),
        Kind::Pi => write!(f, "pi"),
        Kind::Var { name, .. } => write!(f, "{name}"),
        Kind::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Kind::Bin(op, a, b) => {
            write!(f, "(")?;
            write_node(a, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(b, f)?;
            write!(f, ")")
        }
        Kind::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_node(a, f)?;
            }
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> VarSet {
        let mut v = VarSet::from_names(&["x", "y", "p1", "p2"]);
        v.declare("x1", 0).declare("x2", 1);
        v
    }

    fn eval_at(text: &str, pairs: &[(&str, f64)]) -> Result<f64, ExprError> {
        let e = parse(text, &vars())?;
        let b: Bindings = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        e.eval(&b)
    }

    #[test]
    fn precedence() {
        assert_eq!(eval_at("1+2*3", &[]).unwrap(), 7.0);
        assert_eq!(eval_at("2^3^2", &[]).unwrap(), 512.0);
        assert_eq!(eval_at("-2^2", &[]).unwrap(), -4.0);
        assert_eq!(eval_at("2^-1", &[]).unwrap(), 0.5);
        assert_eq!(eval_at(" 8 / 4 / 2 ", &[]).unwrap(), 1.0);
        assert_eq!(eval_at("1 - 2 - 3", &[]).unwrap(), -4.0);
        assert!((eval_at("sin(pi/2)", &[]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn variables_and_aliases() {
        let v = eval_at("1 + 0.3*sin(2*pi*y)", &[("y", 0.25)]).unwrap();
        assert!((v - 1.3).abs() < 1e-15);
        assert_eq!(eval_at("sqrt(p1^2+p2^2)", &[("p1", 3.0), ("p2", 4.0)]).unwrap(), 5.0);
        assert_eq!(eval_at("x1 + x", &[("x", 2.0)]).unwrap(), 4.0);
        assert_eq!(eval_at("max(x, min(y, 3))", &[("x", 1.0), ("y", 7.0)]).unwrap(), 3.0);
        assert_eq!(eval_at("1e-3*1E3", &[]).unwrap(), 1.0);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x^^2", &vars()) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("(1+2", &vars()), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("1 $ 2", &vars()), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("", &vars()), Err(ExprError::Syntax { offset: 0, .. })));
        assert!(matches!(parse("1 2", &vars()), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(
            parse("z + 1", &vars()),
            Err(ExprError::UndeclaredVariable { offset: 0, .. })
        ));
        assert!(matches!(
            parse("min(1)", &vars()),
            Err(ExprError::Arity { expected: 2, found: 1, .. })
        ));
        assert!(matches!(parse("tan(1)", &vars()), Err(ExprError::UnknownFunction { .. })));
    }

    #[test]
    fn depth_limit() {
        let deep = format!("{}1{}", "(".repeat(70), ")".repeat(70));
        assert!(matches!(parse(&deep, &vars()), Err(ExprError::TooDeep { .. })));
        let ok = format!("{}1{}", "(".repeat(30), ")".repeat(30));
        assert!(parse(&ok, &vars()).is_ok());
        assert!(matches!(parse(&"-".repeat(80), &vars()), Err(ExprError::TooDeep { .. })));
    }

    #[test]
    fn domain_faults() {
        match eval_at("2 + log(x)", &[("x", -1.0)]) {
            Err(ExprError::DomainFault { start, end, snippet, .. }) => {
                assert_eq!((start, end), (4, 10));
                assert_eq!(snippet, "log(x)");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(eval_at("1/(x-x)", &[("x", 1.0)]), Err(ExprError::DomainFault { .. })));
        assert!(matches!(eval_at("sqrt(-1)", &[]), Err(ExprError::DomainFault { .. })));
        assert!(matches!(eval_at("(-8)^(1/3)", &[]), Err(ExprError::DomainFault { .. })));
        assert!(matches!(eval_at("exp(1000)", &[]), Err(ExprError::DomainFault { .. })));
        assert!(matches!(eval_at("x + y", &[("x", 1.0)]), Err(ExprError::MissingBinding { .. })));
    }

    #[test]
    fn gradients() {
        let e = parse("x^2", &vars()).unwrap();
        let b: Bindings = [("x".to_string(), 2.0)].into();
        assert!((e.grad(&["x"], &b, 1e-6).unwrap()[0] - 4.0).abs() < 1e-8);
        let e = parse("sin(x)", &vars()).unwrap();
        let b: Bindings = [("x".to_string(), 0.0)].into();
        assert!((e.grad(&["x"], &b, 1e-6).unwrap()[0] - 1.0).abs() < 1e-8);
        let e = parse("3", &vars()).unwrap();
        let b: Bindings = [("x".to_string(), 0.3), ("y".to_string(), 0.1)].into();
        assert_eq!(e.grad(&["x", "y"], &b, 1e-6).unwrap(), vec![0.0, 0.0]);
        let e = parse("log(x)", &vars()).unwrap();
        let b: Bindings = [("x".to_string(), 1e-9)].into();
        assert!(e.grad(&["x"], &b, 1e-6).is_err());
    }

    #[test]
    fn printed_form_reparses() {
        for text in ["1+2*3", "-x^2^y", "max(x,-y)/(1-p1)", "2^-1*pi", "sqrt(p1^2+p2^2)*1e-7"] {
            let e = parse(text, &vars()).unwrap();
            let printed = e.to_string();
            let again = parse(&printed, &vars()).unwrap();
            assert_eq!(e.root, again.root, "{text} -> {printed}");
            assert_eq!(printed, again.to_string());
        }
    }
}
