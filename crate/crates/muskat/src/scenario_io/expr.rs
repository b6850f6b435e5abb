//! Closed-form expression language for scenario data: arithmetic over the
//! variables `t`, `x`, `y` with `+ - * / ^`, the functions `sin cos exp
//! sqrt abs min max step`, and the constant `pi`. `step(z)` is 1 for
//! `z > 0` and 0 otherwise, giving piecewise definitions.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
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
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
    Step,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Step => "step",
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
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(e) => -e.eval(t, x, y),
            Expr::Bin(op, a, b) => {
                let a = a.eval(t, x, y);
                let b = b.eval(t, x, y);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(t, x, y);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(t, x, y)),
                    Func::Max => a.max(args[1].eval(t, x, y)),
                    Func::Step => {
                        if a > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
        }
    }

    /// Canonical text form: fully parenthesized, numbers at 17 significant
    /// digits, so printing and reparsing reproduce the same tree.
    pub fn to_text(&self) -> String {
        match self {
            Expr::Num(v) => super::fmt17(*v),
            Expr::Var(Var::T) => "t".to_string(),
            Expr::Var(Var::X) => "x".to_string(),
            Expr::Var(Var::Y) => "y".to_string(),
            Expr::Neg(e) => format!("(-{})", e.to_text()),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                format!("({} {} {})", a.to_text(), sym, b.to_text())
            }
            Expr::Call(f, args) => {
                let parts: Vec<String> = args.iter().map(|a| a.to_text()).collect();
                format!("{}({})", f.name(), parts.join(", "))
            }
        }
    }
}

impl crate::fields::Sampler for Expr {
    fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        Expr::eval(self, t, x, y)
    }
}

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
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Lexer<'a> {
    fn error(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col0 + at + 1,
            message: message.into(),
        }
    }

    fn tokens(&mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out = Vec::new();
        let s = self.src;
        let mut i = 0;
        while i < s.len() {
            let c = s[i] as char;
            match c {
                ' ' | '\t' => i += 1,
                '+' => {
                    out.push((i, Tok::Plus));
                    i += 1;
                }
                '-' => {
                    out.push((i, Tok::Minus));
                    i += 1;
                }
                '*' => {
                    out.push((i, Tok::Star));
                    i += 1;
                }
                '/' => {
                    out.push((i, Tok::Slash));
                    i += 1;
                }
                '^' => {
                    out.push((i, Tok::Caret));
                    i += 1;
                }
                '(' => {
                    out.push((i, Tok::LParen));
                    i += 1;
                }
                ')' => {
                    out.push((i, Tok::RParen));
                    i += 1;
                }
                ',' => {
                    out.push((i, Tok::Comma));
                    i += 1;
                }
                '0'..='9' | '.' => {
                    let start = i;
                    while i < s.len() && matches!(s[i] as char, '0'..='9' | '.') {
                        i += 1;
                    }
                    // exponent part
                    if i < s.len() && matches!(s[i] as char, 'e' | 'E') {
                        let mut j = i + 1;
                        if j < s.len() && matches!(s[j] as char, '+' | '-') {
                            j += 1;
                        }
                        if j < s.len() && (s[j] as char).is_ascii_digit() {
                            i = j;
                            while i < s.len() && (s[i] as char).is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let text = std::str::from_utf8(&s[start..i]).unwrap();
                    let v: f64 = text
                        .parse()
                        .map_err(|_| self.error(start, format!("bad number literal '{text}'")))?;
                    out.push((start, Tok::Num(v)));
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let start = i;
                    while i < s.len()
                        && matches!(s[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                    {
                        i += 1;
                    }
                    let text = std::str::from_utf8(&s[start..i]).unwrap().to_string();
                    out.push((start, Tok::Ident(text)));
                }
                other => return Err(self.error(i, format!("unexpected character '{other}'"))),
            }
        }
        Ok(out)
    }
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    line: usize,
    col0: usize,
    src_len: usize,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl<'a> Parser<'a> {
    fn error_at(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col0 + at + 1,
            message: message.into(),
        }
    }

    fn error_here(&self, message: impl Into<String>) -> Error {
        let at = self
            .toks
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.src_len);
        self.error_at(at, message)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error_here(format!("expected {what}")))
            }
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            // right associative
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self
            .toks
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.src_len);
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing ')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                let func = match name.as_str() {
                    "t" => return Ok(Expr::Var(Var::T)),
                    "x" => return Ok(Expr::Var(Var::X)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    "min" => Func::Min,
                    "max" => Func::Max,
                    "step" => Func::Step,
                    other => {
                        return Err(self.error_at(at, format!("unknown identifier '{other}'")))
                    }
                };
                self.expect(Tok::LParen, &format!("'(' after {}", func.name()))?;
                let mut args = vec![self.expr()?];
                while let Some(Tok::Comma) = self.peek() {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "closing ')'")?;
                if args.len() != func.arity() {
                    return Err(self.error_at(
                        at,
                        format!(
                            "{} takes {} argument(s), got {}",
                            func.name(),
                            func.arity(),
                            args.len()
                        ),
                    ));
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.error_at(at, "expected a number, variable or function")),
        }
    }
}

/// Parse an expression from the text of one scenario value. `line` and
/// `col0` locate the value inside the scenario file for error reporting
/// (`col0` = zero-based column of the first character).
pub fn parse_expr(text: &str, line: usize, col0: usize) -> Result<Expr> {
    let mut lexer = Lexer {
        src: text.as_bytes(),
        pos: 0,
        line,
        col0,
    };
    let toks = lexer.tokens()?;
    if toks.is_empty() {
        return Err(Error::Parse {
            line,
            column: col0 + 1,
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        line,
        col0,
        src_len: text.len(),
        _marker: std::marker::PhantomData,
    };
    let e = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(parser.error_here("trailing input after expression"));
    }
    Ok(e)
}
