//! Small arithmetic language for rate expressions.
//!
//! Grammar (usual precedence, `^` binds tightest and is right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! var   := t | duration | x | x1 .. xd
//! func  := exp | log | sqrt | abs | min | max
//! ```
//!
//! Besides point evaluation, expressions can be bounded over a box of
//! `(t, duration)` values by interval arithmetic, which yields the
//! majorants used for thinning.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Var {
    Time,
    Duration,
    /// Zero-based covariate index.
    Covariate(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Closed interval `[lo, hi]`; bounds may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    const ALL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    fn from_candidates(c: &[f64]) -> Self {
        if c.iter().any(|v| v.is_nan()) {
            return Self::ALL;
        }
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval { lo, hi }
    }

    fn mul(self, o: Interval) -> Self {
        Self::from_candidates(&[self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi])
    }

    fn div(self, o: Interval) -> Self {
        if o.lo <= 0.0 && o.hi >= 0.0 {
            return Self::ALL;
        }
        self.mul(Interval::new(1.0 / o.hi, 1.0 / o.lo))
    }

    fn monotone(self, f: impl Fn(f64) -> f64) -> Self {
        Interval::new(f(self.lo), f(self.hi))
    }

    fn is_integer_point(self) -> Option<i32> {
        (self.lo == self.hi && self.lo.fract() == 0.0 && self.lo.abs() < 1e6).then_some(self.lo as i32)
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n < 0 {
            return Interval::point(1.0).div(self.powi(-n));
        }
        let a = self.lo.powi(n);
        let b = self.hi.powi(n);
        if n % 2 == 0 && self.lo < 0.0 && self.hi > 0.0 {
            Interval::new(0.0, a.max(b))
        } else {
            Self::from_candidates(&[a, b])
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("unexpected trailing input in '{src}'")));
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64, duration: f64, x: &[f64]) -> f64 {
        use Expr::*;
        match self {
            Num(v) => *v,
            Var(v) => match v {
                self::Var::Time => t,
                self::Var::Duration => duration,
                self::Var::Covariate(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            },
            Neg(a) => -a.eval(t, duration, x),
            Add(a, b) => a.eval(t, duration, x) + b.eval(t, duration, x),
            Sub(a, b) => a.eval(t, duration, x) - b.eval(t, duration, x),
            Mul(a, b) => a.eval(t, duration, x) * b.eval(t, duration, x),
            Div(a, b) => a.eval(t, duration, x) / b.eval(t, duration, x),
            Pow(a, b) => a.eval(t, duration, x).powf(b.eval(t, duration, x)),
            Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|a| a.eval(t, duration, x)).collect();
                match f {
                    Func::Exp => v[0].exp(),
                    Func::Log => v[0].ln(),
                    Func::Sqrt => v[0].sqrt(),
                    Func::Abs => v[0].abs(),
                    Func::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            }
        }
    }

    /// Enclosure of the expression over `t ∈ time`, `duration ∈ dur`.
    pub fn bound(&self, time: Interval, dur: Interval, x: &[f64]) -> Interval {
        use Expr::*;
        match self {
            Num(v) => Interval::point(*v),
            Var(v) => match v {
                self::Var::Time => time,
                self::Var::Duration => dur,
                self::Var::Covariate(i) => Interval::point(x.get(*i).copied().unwrap_or(f64::NAN)),
            },
            Neg(a) => {
                let i = a.bound(time, dur, x);
                Interval::new(-i.hi, -i.lo)
            }
            Add(a, b) => {
                let (p, q) = (a.bound(time, dur, x), b.bound(time, dur, x));
                Interval::new(p.lo + q.lo, p.hi + q.hi)
            }
            Sub(a, b) => {
                let (p, q) = (a.bound(time, dur, x), b.bound(time, dur, x));
                Interval::new(p.lo - q.hi, p.hi - q.lo)
            }
            Mul(a, b) => a.bound(time, dur, x).mul(b.bound(time, dur, x)),
            Div(a, b) => a.bound(time, dur, x).div(b.bound(time, dur, x)),
            Pow(a, b) => {
                let base = a.bound(time, dur, x);
                let exp = b.bound(time, dur, x);
                if let Some(n) = exp.is_integer_point() {
                    base.powi(n)
                } else if base.lo > 0.0 {
                    exp.mul(base.monotone(f64::ln)).monotone(f64::exp)
                } else {
                    Interval::ALL
                }
            }
            Call(f, args) => {
                let v: Vec<Interval> = args.iter().map(|a| a.bound(time, dur, x)).collect();
                match f {
                    Func::Exp => v[0].monotone(f64::exp),
                    Func::Log => Interval::new(
                        if v[0].lo <= 0.0 { f64::NEG_INFINITY } else { v[0].lo.ln() },
                        v[0].hi.ln(),
                    ),
                    Func::Sqrt => Interval::new(v[0].lo.max(0.0).sqrt(), v[0].hi.sqrt()),
                    Func::Abs => {
                        let i = v[0];
                        if i.lo >= 0.0 {
                            i
                        } else if i.hi <= 0.0 {
                            Interval::new(-i.hi, -i.lo)
                        } else {
                            Interval::new(0.0, (-i.lo).max(i.hi))
                        }
                    }
                    Func::Min => Interval::new(
                        v.iter().map(|i| i.lo).fold(f64::INFINITY, f64::min),
                        v.iter().map(|i| i.hi).fold(f64::INFINITY, f64::min),
                    ),
                    Func::Max => Interval::new(
                        v.iter().map(|i| i.lo).fold(f64::NEG_INFINITY, f64::max),
                        v.iter().map(|i| i.hi).fold(f64::NEG_INFINITY, f64::max),
                    ),
                }
            }
        }
    }

    pub fn uses(&self, var: &dyn Fn(Var) -> bool) -> bool {
        use Expr::*;
        match self {
            Num(_) => false,
            Var(v) => var(*v),
            Neg(a) => a.uses(var),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.uses(var) || b.uses(var),
            Call(_, args) => args.iter().any(|a| a.uses(var)),
        }
    }

    pub fn uses_time(&self) -> bool {
        self.uses(&|v| v == Var::Time)
    }

    pub fn uses_duration(&self) -> bool {
        self.uses(&|v| v == Var::Duration)
    }

    /// Largest covariate index referenced, plus one.
    pub fn covariate_dim(&self) -> usize {
        let mut max = 0;
        for i in 0..64 {
            if self.uses(&|v| v == Var::Covariate(i)) {
                max = i + 1;
            }
        }
        max
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number '{s}'")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{c}' in '{src}'")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self, op: char) -> bool {
        matches!(self.tokens.get(self.pos), Some(Token::Op(c)) if *c == op)
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.peek_op(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!("expected '{op}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.peek_op('+') {
                self.pos += 1;
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.peek_op('-') {
                self.pos += 1;
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.peek_op('*') {
                self.pos += 1;
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.peek_op('/') {
                self.pos += 1;
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.peek_op('^') {
            self.pos += 1;
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Token::Ident(name) => {
                if self.peek_op('(') {
                    self.pos += 1;
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "log" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        "min" => Func::Min,
                        "max" => Func::Max,
                        other => return Err(Error::Expr(format!("unknown function '{other}'"))),
                    };
                    let mut args = vec![self.expr()?];
                    while self.peek_op(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect_op(')')?;
                    let arity_ok = match func {
                        Func::Min | Func::Max => args.len() >= 2,
                        _ => args.len() == 1,
                    };
                    if !arity_ok {
                        return Err(Error::Expr(format!("wrong number of arguments to '{name}'")));
                    }
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::Time)),
                    "duration" => Ok(Expr::Var(Var::Duration)),
                    "x" => Ok(Expr::Var(Var::Covariate(0))),
                    other => match other.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
                        Some(k) if k >= 1 => Ok(Expr::Var(Var::Covariate(k - 1))),
                        _ => Err(Error::Expr(format!("unknown variable '{other}'"))),
                    },
                }
            }
            Token::Op(c) => Err(Error::Expr(format!("unexpected '{c}'"))),
        }
    }
}
