//! Small arithmetic expression evaluator used by config files and custom
//! problem definitions (nonlinearities, densities, volatilities, targets).
//!
//! Supported: `+ - * /`, `^` (right associative) or `pow(a, b)`, the unary
//! functions `exp log sqrt abs sign`, parentheses, numeric literals, the
//! constants `e` and `pi`, and at most one free variable whose name is
//! whatever identifier the expression uses (`t`, `s`, `x`, ...).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    ConstE,
    ConstPi,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    Sqrt(Box<Node>),
    Abs(Box<Node>),
    Sign(Box<Node>),
}

/// A parsed expression of one real variable. Equality and display use the
/// original source text, so configs round-trip byte for byte.
#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    root: Node,
    var: Option<String>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.src)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            var: None,
        };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input in '{src}'"
            )));
        }
        Ok(Expr {
            src: src.trim().to_string(),
            root,
            var: p.var,
        })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    /// Name of the free variable, if the expression uses one.
    pub fn var_name(&self) -> Option<&str> {
        self.var.as_deref()
    }

    pub fn is_constant(&self) -> bool {
        self.var.is_none()
    }

    pub fn eval<S: Scalar>(&self, x: S) -> S {
        eval_node(&self.root, x)
    }
}

fn eval_node<S: Scalar>(n: &Node, x: S) -> S {
    match n {
        Node::Num(v) => S::of(*v),
        Node::Var => x,
        Node::ConstE => S::of(std::f64::consts::E),
        Node::ConstPi => S::of(std::f64::consts::PI),
        Node::Neg(a) => -eval_node(a, x),
        Node::Add(a, b) => eval_node(a, x) + eval_node(b, x),
        Node::Sub(a, b) => eval_node(a, x) - eval_node(b, x),
        Node::Mul(a, b) => eval_node(a, x) * eval_node(b, x),
        Node::Div(a, b) => eval_node(a, x) / eval_node(b, x),
        Node::Pow(a, b) => eval_node(a, x).powf(eval_node(b, x)),
        Node::Exp(a) => eval_node(a, x).exp(),
        Node::Log(a) => eval_node(a, x).ln(),
        Node::Sqrt(a) => eval_node(a, x).sqrt(),
        Node::Abs(a) => eval_node(a, x).abs(),
        Node::Sign(a) => {
            let v = eval_node(a, x);
            if v > S::zero() {
                S::one()
            } else if v < S::zero() {
                -S::one()
            } else {
                S::zero()
            }
        }
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

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E')
                {
                    // exponent sign: only directly after e/E
                    if (bytes[i] == 'e' || bytes[i] == 'E')
                        && i + 1 < bytes.len()
                        && (bytes[i + 1] == '+' || bytes[i + 1] == '-')
                        && i + 2 < bytes.len()
                        && bytes[i + 2].is_ascii_digit()
                    {
                        i += 2;
                    }
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                // "2e" would otherwise parse as a malformed float; treat a
                // trailing bare e/E as the constant e following a number,
                // which is never intended, so reject.
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Expr(format!("bad number literal '{text}'")))?;
                out.push(Tok::Num(v));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(bytes[start..i].iter().collect()));
            }
            _ => return Err(Error::Expr(format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    var: Option<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::Expr(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // Unary minus binds looser than '^': -2^2 == -(2^2).
    fn unary(&mut self) -> Result<Node> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            // right associative; exponent may carry its own unary minus
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => self.ident(name),
            other => Err(Error::Expr(format!("expected value, found {other:?}"))),
        }
    }

    fn ident(&mut self, name: String) -> Result<Node> {
        let calls = matches!(self.peek(), Some(Tok::LParen));
        if calls {
            self.pos += 1; // consume '('
            match name.as_str() {
                "pow" => {
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Node::Pow(Box::new(a), Box::new(b)));
                }
                "exp" | "log" | "sqrt" | "abs" | "sign" => {
                    let a = self.expr()?;
                    self.expect(Tok::RParen)?;
                    let inner = Box::new(a);
                    return Ok(match name.as_str() {
                        "exp" => Node::Exp(inner),
                        "log" => Node::Log(inner),
                        "sqrt" => Node::Sqrt(inner),
                        "abs" => Node::Abs(inner),
                        _ => Node::Sign(inner),
                    });
                }
                _ => {
                    return Err(Error::Expr(format!("unknown function '{name}'")));
                }
            }
        }
        match name.as_str() {
            "e" => Ok(Node::ConstE),
            "pi" => Ok(Node::ConstPi),
            _ => {
                match &self.var {
                    Some(v) if *v != name => {
                        return Err(Error::Expr(format!(
                            "expression uses two variables: '{v}' and '{name}'"
                        )));
                    }
                    Some(_) => {}
                    None => self.var = Some(name),
                }
                Ok(Node::Var)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1 + 2*3", 0.0), 7.0);
        assert_eq!(ev("(1 + 2)*3", 0.0), 9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0); // right associative
        assert_eq!(ev("-2^2", 0.0), -4.0);
        assert_eq!(ev("6/3/2", 0.0), 1.0); // left associative
        assert_eq!(ev("2^-1", 0.0), 0.5);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("exp(1)", 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert!((ev("log(e)", 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("sqrt(49)", 0.0), 7.0);
        assert_eq!(ev("abs(-3.5)", 0.0), 3.5);
        assert_eq!(ev("sign(-3)", 0.0), -1.0);
        assert_eq!(ev("sign(0)", 0.0), 0.0);
        assert_eq!(ev("pow(2, 10)", 0.0), 1024.0);
        assert!((ev("pi", 0.0) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn variable_binding() {
        assert_eq!(ev("sign(x)*abs(x)^0.5", 9.0), 3.0);
        assert_eq!(ev("2.618*(t/2)^2", 4.0), 2.618 * 4.0);
        let c = Expr::parse("3 + e").unwrap();
        assert!(c.is_constant());
        let v = Expr::parse("t^2").unwrap();
        assert_eq!(v.var_name(), Some("t"));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(ev("1e-3", 0.0), 1e-3);
        assert_eq!(ev("2.5E+2", 0.0), 250.0);
        // 'e' directly after a number without digits is the constant; that
        // parse is rejected rather than silently multiplied.
        assert!(Expr::parse("2e").is_err());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(3)").is_err());
        assert!(Expr::parse("x + y").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("pow(1)").is_err());
    }

    #[test]
    fn round_trip_source() {
        let e = Expr::parse("  exp(sqrt(2*(t+1))) - e ").unwrap();
        assert_eq!(e.source(), "exp(sqrt(2*(t+1))) - e");
        assert_eq!(e, Expr::parse(e.source()).unwrap());
    }

    #[test]
    fn f32_instantiation() {
        let e = Expr::parse("sqrt(x) + 1").unwrap();
        let y: f32 = e.eval(4.0f32);
        assert!((y - 3.0).abs() < 1e-6);
    }
}
