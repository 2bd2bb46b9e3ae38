//! A small arithmetic expression language for delays, coefficients, forcing
//! terms and right-hand sides.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("`{name}` takes {expected} argument(s), got {got} (offset {offset})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        offset: usize,
    },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("math domain error: {0}")]
    MathDomain(String),
}

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
    Floor,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Floor,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Floor => "floor",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, a: &[f64]) -> Result<f64, ExprError> {
        let x = a[0];
        let v = match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log if x <= 0.0 => {
                return Err(ExprError::MathDomain(format!(
                    "log of nonpositive value {x}"
                )))
            }
            Func::Log => x.ln(),
            Func::Sqrt if x < 0.0 => {
                return Err(ExprError::MathDomain(format!("sqrt of negative value {x}")))
            }
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
            Func::Floor => x.floor(),
            Func::Min => x.min(a[1]),
            Func::Max => x.max(a[1]),
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

fn finite(v: f64, what: impl FnOnce() -> String) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::MathDomain(format!("{} is not finite", what())))
    }
}

fn binary(op: BinOp, a: f64, b: f64) -> Result<f64, ExprError> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div if b == 0.0 => {
            return Err(ExprError::MathDomain(format!("division of {a} by zero")))
        }
        BinOp::Div => a / b,
        BinOp::Pow => a.powf(b),
    };
    finite(v, || format!("{a} {} {b}", op.symbol()))
}

impl Expr {
    /// Evaluates with variables resolved by `lookup`.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => lookup(name).ok_or_else(|| ExprError::UnboundVariable(name.clone())),
            Expr::Neg(e) => Ok(-e.eval(lookup)?),
            Expr::Bin(op, a, b) => binary(*op, a.eval(lookup)?, b.eval(lookup)?),
            Expr::Call(f, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(lookup))
                    .collect::<Result<Vec<_>, _>>()?;
                finite(f.apply(&vals)?, || format!("{}(...)", f.name()))
            }
        }
    }

    /// Names of the free variables, in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Num(_) => {}
                Expr::Var(v) => {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                Expr::Neg(a) => walk(a, out),
                Expr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Resolves variable names to positions in `names` for repeated evaluation.
    pub fn compile(&self, names: &[&str]) -> Result<Compiled, ExprError> {
        let node = match self {
            Expr::Num(v) => Node::Num(*v),
            Expr::Var(name) => Node::Slot(
                names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| ExprError::UnboundVariable(name.clone()))?,
            ),
            Expr::Neg(e) => Node::Neg(Box::new(e.compile(names)?.0)),
            Expr::Bin(op, a, b) => Node::Bin(
                *op,
                Box::new(a.compile(names)?.0),
                Box::new(b.compile(names)?.0),
            ),
            Expr::Call(f, args) => Node::Call(
                *f,
                args.iter()
                    .map(|a| a.compile(names).map(|c| c.0))
                    .collect::<Result<_, _>>()?,
            ),
        };
        Ok(Compiled(node))
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized; reparsing gives back the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Slot(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// An expression with variables bound to slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled(Node);

impl Compiled {
    pub fn eval(&self, slots: &[f64]) -> Result<f64, ExprError> {
        fn go(n: &Node, s: &[f64]) -> Result<f64, ExprError> {
            match n {
                Node::Num(v) => Ok(*v),
                Node::Slot(i) => Ok(s[*i]),
                Node::Neg(a) => Ok(-go(a, s)?),
                Node::Bin(op, a, b) => binary(*op, go(a, s)?, go(b, s)?),
                Node::Call(f, args) => {
                    let mut vals = [0.0; 2];
                    for (v, a) in vals.iter_mut().zip(args) {
                        *v = go(a, s)?;
                    }
                    finite(f.apply(&vals[..args.len()])?, || {
                        format!("{}(...)", f.name())
                    })
                }
            }
        }
        go(&self.0, slots)
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text, pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected input"));
    }
    Ok(e)
}

/// Evaluates `e` with the given variable bindings.
pub fn eval_expression(e: &Expr, bindings: &[(&str, f64)]) -> Result<f64, ExprError> {
    e.eval(&|name| bindings.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        let found = match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".to_string(),
        };
        ExprError::Syntax {
            offset: self.pos,
            message: format!("{message}, found {found}"),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    /// Consumes `c` after optional whitespace.
    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if !self.eat('(') {
                    return Ok(Expr::Var(name.to_string()));
                }
                let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownFunction {
                    name: name.to_string(),
                    offset: start,
                })?;
                let mut args = vec![self.expr()?];
                while self.eat(',') {
                    args.push(self.expr()?);
                }
                if !self.eat(')') {
                    return Err(self.error("expected `,` or `)`"));
                }
                if args.len() != func.arity() {
                    return Err(ExprError::Arity {
                        name: name.to_string(),
                        expected: func.arity(),
                        got: args.len(),
                        offset: start,
                    });
                }
                Ok(Expr::Call(func, args))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            _ => Err(self.error("expected a number, variable, call or `(`")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut p = self.pos;
        let mut n = digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            n += digits(&mut p);
        }
        if n == 0 {
            return Err(self.error("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) > 0 {
                p = q;
            }
        }
        self.pos = p;
        self.src[start..p]
            .parse()
            .map(Expr::Num)
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: "malformed number".into(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    fn var(v: &str) -> Box<Expr> {
        Box::new(Expr::Var(v.into()))
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse_expression("2*t + sin(t)").unwrap(),
            Expr::Bin(
                BinOp::Add,
                Box::new(Expr::Bin(BinOp::Mul, num(2.0), var("t"))),
                Box::new(Expr::Call(Func::Sin, vec![Expr::Var("t".into())]))
            )
        );
        assert_eq!(
            parse_expression("t - 1").unwrap(),
            Expr::Bin(BinOp::Sub, var("t"), num(1.0))
        );
        let e = parse_expression("-2^2").unwrap();
        assert_eq!(eval_expression(&e, &[]).unwrap(), -4.0);
        let e = parse_expression("2^3^2").unwrap();
        assert_eq!(eval_expression(&e, &[]).unwrap(), 512.0);
        let e = parse_expression("8 - 3 - 2").unwrap();
        assert_eq!(eval_expression(&e, &[]).unwrap(), 3.0);
        let e = parse_expression("2^-1 * 4").unwrap();
        assert_eq!(eval_expression(&e, &[]).unwrap(), 2.0);
        let e = parse_expression("1.5e1 + .5 + 2E-1").unwrap();
        assert_eq!(eval_expression(&e, &[]).unwrap(), 15.7);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert!(matches!(
            parse_expression("2*^t"),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse_expression("(t"),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse_expression("t t"),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse_expression(""),
            Err(ExprError::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("tan(t)"),
            Err(ExprError::UnknownFunction { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("1 + max(t)"),
            Err(ExprError::Arity {
                expected: 2,
                got: 1,
                offset: 4,
                ..
            })
        ));
    }

    #[test]
    fn evaluation() {
        let e = parse_expression("2*t + sin(t)").unwrap();
        assert_eq!(eval_expression(&e, &[("t", 0.0)]).unwrap(), 0.0);
        let e = parse_expression("t^2").unwrap();
        assert_eq!(eval_expression(&e, &[("t", 3.0)]).unwrap(), 9.0);
        let e = parse_expression("log(t)").unwrap();
        assert!(matches!(
            eval_expression(&e, &[("t", 0.0)]),
            Err(ExprError::MathDomain(_))
        ));
        assert!(matches!(
            eval_expression(&e, &[]),
            Err(ExprError::UnboundVariable(_))
        ));
        let e = parse_expression("1/(t-1)").unwrap();
        assert!(matches!(
            eval_expression(&e, &[("t", 1.0)]),
            Err(ExprError::MathDomain(_))
        ));
        let e =
            parse_expression("floor(t/2) + min(t, 1) + max(abs(-t), sqrt(4)) + exp(0) + cos(0)")
                .unwrap();
        assert_eq!(
            eval_expression(&e, &[("t", 5.0)]).unwrap(),
            2.0 + 1.0 + 5.0 + 1.0 + 1.0
        );
    }

    #[test]
    fn compiled_matches_interpreted() {
        let e = parse_expression("u1 * t - max(u2, 0.5)^2").unwrap();
        assert_eq!(e.variables(), vec!["u1", "t", "u2"]);
        let c = e.compile(&["t", "u1", "u2"]).unwrap();
        let direct = eval_expression(&e, &[("t", 2.0), ("u1", 3.0), ("u2", 1.5)]).unwrap();
        assert_eq!(c.eval(&[2.0, 3.0, 1.5]).unwrap(), direct);
        assert!(matches!(
            e.compile(&["t"]),
            Err(ExprError::UnboundVariable(_))
        ));
    }

    #[test]
    fn display_round_trips() {
        for text in ["2*t + sin(t)", "-(t - 1)^-2", "min(t, 1e-7) / 3", "--t"] {
            let e = parse_expression(text).unwrap();
            assert_eq!(parse_expression(&e.to_string()).unwrap(), e);
        }
    }
}
