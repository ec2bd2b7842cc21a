//! A small arithmetic language for densities and coefficients.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := sum (cmp sum)?          cmp ∈ { <, <=, >, >=, ==, != }
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?    right associative
//! primary := number | x | pi | e | func '(' args ')' | '(' expr ')'
//! ```
//!
//! Functions: `ln exp sin cos sqrt abs min max` and `if(cond, a, b)`.
//! Comparisons evaluate to 1 or 0, so `if(x<1, 1, x^-3)` builds piecewise
//! densities. `-x^2` parses as `-(x^2)` and `x^-1.5` is accepted.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("at column {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("`{expr}` evaluates to {value} at x = {x}")]
    Eval { expr: String, x: f64, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Ln,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "ln" => Func::Ln,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, at: 0 };
        let e = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(ExprError::Parse {
                pos: t.pos,
                message: format!("unexpected {}", t.tok.describe()),
            });
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Bin(op, a, b) => apply_bin(*op, a.eval(x), b.eval(x)),
            Expr::Cmp(op, a, b) => apply_cmp(*op, a.eval(x), b.eval(x)),
            Expr::Call(f, args) => match args.as_slice() {
                [a] => apply_unary(*f, a.eval(x)),
                [a, b] => apply_binary_fn(*f, a.eval(x), b.eval(x)),
                _ => f64::NAN,
            },
            Expr::If(c, a, b) => {
                if c.eval(x) != 0.0 {
                    a.eval(x)
                } else {
                    b.eval(x)
                }
            }
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::X => true,
            Expr::Neg(a) => a.depends_on_x(),
            Expr::Bin(_, a, b) | Expr::Cmp(_, a, b) => a.depends_on_x() || b.depends_on_x(),
            Expr::Call(_, args) => args.iter().any(Expr::depends_on_x),
            Expr::If(c, a, b) => c.depends_on_x() || a.depends_on_x() || b.depends_on_x(),
        }
    }

    /// Replaces constant subtrees by their value. Evaluation order of the
    /// remaining operations is unchanged, so results are bit-identical.
    pub fn fold(self) -> Expr {
        let folded = match self {
            Expr::Neg(a) => Expr::Neg(Box::new(a.fold())),
            Expr::Bin(op, a, b) => Expr::Bin(op, Box::new(a.fold()), Box::new(b.fold())),
            Expr::Cmp(op, a, b) => Expr::Cmp(op, Box::new(a.fold()), Box::new(b.fold())),
            Expr::Call(f, args) => Expr::Call(f, args.into_iter().map(Expr::fold).collect()),
            Expr::If(c, a, b) => {
                let c = c.fold();
                let (a, b) = (a.fold(), b.fold());
                match c {
                    Expr::Num(v) if v != 0.0 => return a,
                    Expr::Num(_) => return b,
                    c => Expr::If(Box::new(c), Box::new(a), Box::new(b)),
                }
            }
            e => e,
        };
        if !matches!(folded, Expr::Num(_) | Expr::X) && !folded.depends_on_x() {
            Expr::Num(folded.eval(0.0))
        } else {
            folded
        }
    }

    /// Replaces every occurrence of `x` with `replacement`.
    pub fn substitute(&self, replacement: &Expr) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::X => replacement.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(replacement))),
            Expr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(a.substitute(replacement)),
                Box::new(b.substitute(replacement)),
            ),
            Expr::Cmp(op, a, b) => Expr::Cmp(
                *op,
                Box::new(a.substitute(replacement)),
                Box::new(b.substitute(replacement)),
            ),
            Expr::Call(f, args) => {
                Expr::Call(*f, args.iter().map(|a| a.substitute(replacement)).collect())
            }
            Expr::If(c, a, b) => Expr::If(
                Box::new(c.substitute(replacement)),
                Box::new(a.substitute(replacement)),
                Box::new(b.substitute(replacement)),
            ),
        }
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }
}

fn apply_bin(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => a.powf(b),
    }
}

fn apply_cmp(op: CmpOp, a: f64, b: f64) -> f64 {
    let r = match op {
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
    };
    if r {
        1.0
    } else {
        0.0
    }
}

fn apply_unary(f: Func, a: f64) -> f64 {
    match f {
        Func::Ln => a.ln(),
        Func::Exp => a.exp(),
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Sqrt => a.sqrt(),
        Func::Abs => a.abs(),
        Func::Min | Func::Max => f64::NAN,
    }
}

fn apply_binary_fn(f: Func, a: f64, b: f64) -> f64 {
    match f {
        Func::Min => a.min(b),
        Func::Max => a.max(b),
        _ => f64::NAN,
    }
}

// Rendering is fully parenthesized so that parse(render(e)) == e.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "(-{:?})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{s}{b})")
            }
            Expr::Cmp(op, a, b) => {
                let s = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    CmpOp::Ge => ">=",
                    CmpOp::Eq => "==",
                    CmpOp::Ne => "!=",
                };
                write!(f, "({a}{s}{b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::If(c, a, b) => write!(f, "if({c},{a},{b})"),
        }
    }
}

/// A parsed density: finite and nonnegative wherever it is used.
#[derive(Debug, Clone)]
pub struct DensityExpr {
    source: Arc<str>,
    ast: Arc<Expr>,
}

impl DensityExpr {
    pub fn parse(src: &str) -> Result<DensityExpr, ExprError> {
        let ast = Expr::parse(src)?.fold();
        Ok(DensityExpr {
            source: src.into(),
            ast: Arc::new(ast),
        })
    }

    pub fn from_expr(ast: Expr) -> DensityExpr {
        let ast = ast.fold();
        DensityExpr {
            source: ast.to_string().into(),
            ast: Arc::new(ast),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.ast.eval(x)
    }

    /// Evaluates and rejects non-finite or negative results.
    pub fn density_at(&self, x: f64) -> Result<f64, ExprError> {
        let v = self.ast.eval(x);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(ExprError::Eval {
                expr: self.source.to_string(),
                x,
                value: v,
            })
        }
    }
}

impl PartialEq for DensityExpr {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

// ---------------------------------------------------------------------------
// lexer / parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Cmp(_) => "comparison".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E+4
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ExprError::Parse {
                pos,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Spanned { tok: Tok::Num(v), pos });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Spanned {
                tok: Tok::Ident(text),
                pos,
            });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
            ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
            ('=', Some('=')) => (Tok::Cmp(CmpOp::Eq), 2),
            ('!', Some('=')) => (Tok::Cmp(CmpOp::Ne), 2),
            ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
            ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('^', _) => (Tok::Caret, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            _ => {
                return Err(ExprError::Parse {
                    pos,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push(Spanned { tok, pos });
        i += len;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Spanned>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.at)
    }

    fn end_pos(&self) -> usize {
        self.tokens.last().map(|t| t.pos + 1).unwrap_or(1)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ExprError> {
        if self.eat(&tok) {
            return Ok(());
        }
        let (pos, found) = match self.peek() {
            Some(t) => (t.pos, t.tok.describe()),
            None => (self.end_pos(), "end of input".to_string()),
        };
        Err(ExprError::Parse {
            pos,
            message: format!("expected {}, found {found}", tok.describe()),
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.sum()?;
        if let Some(Spanned {
            tok: Tok::Cmp(op), ..
        }) = self.peek().cloned()
        {
            self.at += 1;
            let rhs = self.sum()?;
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.product()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(&Tok::Minus) {
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let Some(t) = self.peek().cloned() else {
            return Err(ExprError::Parse {
                pos: self.end_pos(),
                message: "unexpected end of input".into(),
            });
        };
        self.at += 1;
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                "if" => {
                    self.expect(Tok::LParen)?;
                    let c = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)))
                }
                _ => {
                    let f = Func::from_name(&name).ok_or_else(|| ExprError::Parse {
                        pos: t.pos,
                        message: format!("unknown identifier `{name}`"),
                    })?;
                    self.expect(Tok::LParen)?;
                    let mut args = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != f.arity() {
                        return Err(ExprError::Parse {
                            pos: t.pos,
                            message: format!(
                                "`{name}` takes {} argument(s), got {}",
                                f.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::Call(f, args))
                }
            },
            other => Err(ExprError::Parse {
                pos: t.pos,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1+2*3", 0.0), 7.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("x^-1.5", 4.0), 0.125);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("2*-x", 3.0), -6.0);
    }

    #[test]
    fn functions_and_piecewise() {
        assert_eq!(ev("if(x<1, 1, x^-3)", 0.5), 1.0);
        assert_eq!(ev("if(x<1, 1, x^-3)", 2.0), 0.125);
        assert_eq!(ev("max(x, 2)", 1.0), 2.0);
        assert!((ev("x^-2*ln(1/x)^-3", 0.01) - 1e4 / 4.605170185988091f64.powi(3)).abs() < 1e-9);
        assert!((ev("sin(pi/2)", 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("1e-3*x", 2.0), 2e-3);
    }

    #[test]
    fn errors_carry_positions() {
        match Expr::parse("1 + * 2") {
            Err(ExprError::Parse { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("{other:?}"),
        }
        match Expr::parse("foo(x)") {
            Err(ExprError::Parse { pos, message }) => {
                assert_eq!(pos, 1);
                assert!(message.contains("foo"));
            }
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("(x").is_err());
        assert!(Expr::parse("min(x)").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("x $ 2").is_err());
    }

    #[test]
    fn folding_keeps_values() {
        let e = Expr::parse("2*3 + x*(4-1)").unwrap();
        let f = e.clone().fold();
        assert_eq!(e.eval(1.7), f.eval(1.7));
        match f {
            Expr::Bin(BinOp::Add, a, _) => assert_eq!(*a, Expr::Num(6.0)),
            other => panic!("{other:?}"),
        }
        assert_eq!(Expr::parse("if(1<2, x, 0)").unwrap().fold(), Expr::X);
    }

    #[test]
    fn display_round_trips() {
        for s in ["x^-1.5", "if(x<=1, sqrt(x), exp(-x))", "-(x+2)*3", "min(x,-2)"] {
            let e = Expr::parse(s).unwrap();
            let back = Expr::parse(&e.to_string()).unwrap();
            assert_eq!(e, back, "{s} -> {e}");
        }
    }

    #[test]
    fn density_rejects_negative_values() {
        let d = DensityExpr::parse("x - 1").unwrap();
        assert!(d.density_at(2.0).is_ok());
        assert!(d.density_at(0.5).is_err());
        let d = DensityExpr::parse("1/x").unwrap();
        assert!(d.density_at(0.0).is_err());
    }
}
