//! Expressions over `t`: `+ - * / ^`, comparisons, `sin cos exp`, `pi` and
//! `piecewise(c1, e1, c2, e2, ..., default)`.

use std::fmt;
use std::sync::Arc;

use chebtrack::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.position)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Piecewise(Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Neg(e) => -e.eval(t),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(t), b.eval(t));
                let truth = |c: bool| if c { 1.0 } else { 0.0 };
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => pow(x, y),
                    BinOp::Lt => truth(x < y),
                    BinOp::Le => truth(x <= y),
                    BinOp::Gt => truth(x > y),
                    BinOp::Ge => truth(x >= y),
                    BinOp::Eq => truth(x == y),
                    BinOp::Ne => truth(x != y),
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(t);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                }
            }
            Expr::Piecewise(args) => {
                for pair in args.chunks(2) {
                    match pair {
                        [cond, value] if cond.eval(t) != 0.0 => return value.eval(t),
                        [default] => return default.eval(t),
                        _ => {}
                    }
                }
                f64::NAN
            }
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Time => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on_time(),
            Expr::Bin(_, a, b) => a.depends_on_time() || b.depends_on_time(),
            Expr::Piecewise(args) => args.iter().any(Expr::depends_on_time),
        }
    }

    /// Constant expressions collapse to `Scalar::Const` so fast paths apply.
    pub fn into_scalar(self) -> Scalar {
        if self.depends_on_time() {
            let e = Arc::new(self);
            Scalar::func(move |t| e.eval(t))
        } else {
            Scalar::Const(self.eval(0.0))
        }
    }
}

fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: String| Err(ExprError { position, message });
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().map(|p| p.1).collect();
            match text.parse::<f64>() {
                Ok(v) => out.push((pos, Tok::Num(v))),
                Err(_) => return err(pos, format!("bad number '{text}'")),
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|p| p.1).collect();
            out.push((pos, Tok::Ident(text)));
            continue;
        }
        let next = chars.get(i + 1).map(|p| p.1);
        let (tok, len) = match (c, next) {
            ('<', Some('=')) => (Tok::Op("<="), 2),
            ('>', Some('=')) => (Tok::Op(">="), 2),
            ('=', Some('=')) => (Tok::Op("=="), 2),
            ('!', Some('=')) => (Tok::Op("!="), 2),
            ('<', _) => (Tok::Op("<"), 1),
            ('>', _) => (Tok::Op(">"), 1),
            ('+', _) => (Tok::Op("+"), 1),
            ('-', _) | ('\u{2212}', _) => (Tok::Op("-"), 1),
            ('*', _) => (Tok::Op("*"), 1),
            ('/', _) => (Tok::Op("/"), 1),
            ('^', _) => (Tok::Op("^"), 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            _ => return err(pos, format!("unexpected character '{c}'")),
        };
        out.push((pos, tok));
        i += len;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|p| &p.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |p| p.0)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { position: self.offset(), message: message.into() })
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        if let Some(Tok::Op(o)) = self.peek() {
            if let Some(found) = ops.iter().find(|x| *x == o) {
                self.pos += 1;
                return Some(found);
            }
        }
        None
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn comparison(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.additive()?;
        let op = match self.eat_op(&["<=", ">=", "==", "!=", "<", ">"]) {
            Some(o) => o,
            None => return Ok(lhs),
        };
        let rhs = self.additive()?;
        let op = match op {
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            _ => BinOp::Ne,
        };
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(o) = self.eat_op(&["+", "-"]) {
            let rhs = self.term()?;
            let op = if o == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(o) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if o == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.eat_op(&["-", "+"]) {
            Some("-") => Ok(Expr::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    // right associative; binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat_op(&["^"]).is_some() {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.comparison()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.pos += 1;
                match name.as_str() {
                    "t" => Ok(Expr::Time),
                    "pi" | "π" => Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" | "cos" | "exp" => {
                        let mut args = self.arguments()?;
                        if args.len() != 1 {
                            return Err(ExprError { position: at, message: format!("{name} takes one argument") });
                        }
                        let f = match name.as_str() {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            _ => Func::Exp,
                        };
                        Ok(Expr::Call(f, Box::new(args.remove(0))))
                    }
                    "piecewise" => {
                        let args = self.arguments()?;
                        if args.len() % 2 == 0 {
                            return Err(ExprError {
                                position: at,
                                message: "piecewise needs condition/value pairs and a default".into(),
                            });
                        }
                        Ok(Expr::Piecewise(args))
                    }
                    _ => Err(ExprError { position: at, message: format!("unknown identifier '{name}'") }),
                }
            }
            _ => self.fail("expected a value"),
        }
    }

    fn arguments(&mut self) -> Result<Vec<Expr>, ExprError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = vec![self.comparison()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            args.push(self.comparison()?);
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(args)
    }
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, end: src.len() };
    let e = p.comparison()?;
    if p.pos != p.toks.len() {
        return p.fail("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, t: f64) -> f64 {
        parse(s).unwrap().eval(t)
    }

    #[test]
    fn precedence_and_minus() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("-2^2", 0.0), -4.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("\u{2212}0.1*t^2", 2.0), -0.4);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert!((ev("1.5e-3*2", 0.0) - 3e-3).abs() < 1e-18);
    }

    #[test]
    fn functions_and_piecewise() {
        assert!((ev("cos(t) + exp(-t)", 0.0) - 2.0).abs() < 1e-15);
        assert!((ev("sin(pi/2)", 0.0) - 1.0).abs() < 1e-15);
        let s = "piecewise(t < 1, cos(2*pi*t), t < 2, 0.5*t^2*(1-t), 0.5*cos(4*pi*t)+1)";
        assert!((ev(s, 0.0) - 1.0).abs() < 1e-15);
        assert!((ev(s, 1.5) + 0.5625).abs() < 1e-15);
        assert!((ev(s, 2.5) - 1.5).abs() < 1e-12);
        assert_eq!(ev("piecewise(t >= 1, 1, 0)", 1.0), 1.0);
    }

    #[test]
    fn constants_fold() {
        assert!(matches!(parse("2*cos(0)").unwrap().into_scalar(), Scalar::Const(v) if v == 2.0));
        assert!(matches!(parse("t").unwrap().into_scalar(), Scalar::Func(_)));
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(parse("1 + ").unwrap_err().position, 4);
        assert!(parse("foo(t)").is_err());
        assert!(parse("(1").is_err());
        assert!(parse("1 2").is_err());
        assert!(parse("piecewise(t < 1, 2)").is_err());
        assert!(parse("1 $ 2").is_err());
    }
}
