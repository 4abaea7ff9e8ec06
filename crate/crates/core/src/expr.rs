//! Integer expressions used for call arguments, range bounds, and paddings.
//!
//! Grammar: integer literals, identifiers, unary minus, `+ - * /` with the
//! usual precedence (left associative), and parentheses. Division must be
//! exact. `Display` prints a canonical form that parses back to the same tree.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("inexact division {0} / {1}")]
    InexactDivision(i64, i64),
    #[error("integer overflow")]
    Overflow,
}

/// Variable bindings for evaluation.
pub type Bindings = HashMap<String, i64>;

impl Expr {
    pub fn lit(v: i64) -> Self {
        Expr::Lit(v)
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            len: text.len(),
        };
        let e = p.sum()?;
        if p.pos < p.tokens.len() {
            return Err(ExprError::Syntax {
                pos: p.tokens[p.pos].0,
                msg: "unexpected trailing input".into(),
            });
        }
        Ok(e)
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<i64, ExprError> {
        self.eval_with(&|name| bindings.get(name).copied())
    }

    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Result<i64, ExprError> {
        match self {
            Expr::Lit(v) => Ok(*v),
            Expr::Var(name) => lookup(name).ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Neg(inner) => inner
                .eval_with(lookup)?
                .checked_neg()
                .ok_or(ExprError::Overflow),
            Expr::Bin(op, l, r) => {
                let a = l.eval_with(lookup)?;
                let b = r.eval_with(lookup)?;
                match op {
                    BinOp::Add => a.checked_add(b).ok_or(ExprError::Overflow),
                    BinOp::Sub => a.checked_sub(b).ok_or(ExprError::Overflow),
                    BinOp::Mul => a.checked_mul(b).ok_or(ExprError::Overflow),
                    BinOp::Div => {
                        if b == 0 || a % b != 0 {
                            Err(ExprError::InexactDivision(a, b))
                        } else {
                            Ok(a / b)
                        }
                    }
                }
            }
        }
    }

    /// Names of all variables referenced by the expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Lit(_) | Expr::Var(_) => 4,
        }
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::Lit(v)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(inner) => {
                // `-5` parses as a negative literal, so a negated literal
                // keeps its parentheses.
                if inner.precedence() < 3 || matches!(**inner, Expr::Lit(v) if v >= 0) {
                    write!(f, "-({inner})")
                } else {
                    write!(f, "-{inner}")
                }
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, "{}", op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = text[start..i]
                .parse::<i64>()
                .map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: "integer literal out of range".into(),
                })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if "+-*/".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::RParen));
            i += 1;
        } else {
            return Err(ExprError::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |(p, _)| *p)
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            if let Some(Tok::Num(v)) = self.peek() {
                let v = *v;
                self.pos += 1;
                return Ok(Expr::Lit(-v));
            }
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.here();
        match self.tokens.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Lit(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Expr::Var(name))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.sum()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(ExprError::Syntax {
                        pos: self.here(),
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Some(_) => Err(ExprError::Syntax {
                pos,
                msg: "expected operand".into(),
            }),
            None => Err(ExprError::Syntax {
                pos,
                msg: "unexpected end of expression".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str, vars: &[(&str, i64)]) -> Result<i64, ExprError> {
        let b: Bindings = vars.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Expr::parse(text)?.eval(&b)
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(eval("1000-nb", &[("nb", 100)]), Ok(900));
        assert_eq!(eval("2*n*n*n", &[("n", 10)]), Ok(2000));
        assert_eq!(
            eval("n/3", &[("n", 10)]),
            Err(ExprError::InexactDivision(10, 3))
        );
        assert_eq!(eval("(1000-nb)", &[("nb", 20)]), Ok(980));
        assert_eq!(eval("2+3*4", &[]), Ok(14));
        assert_eq!(eval("10-4-3", &[]), Ok(3));
        assert_eq!(eval("-n+1", &[("n", 5)]), Ok(-4));
        assert_eq!(eval("12/4/3", &[]), Ok(1));
    }

    #[test]
    fn errors() {
        assert_eq!(eval("k", &[]), Err(ExprError::Unbound("k".into())));
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("(1"), Err(ExprError::Syntax { .. })));
        assert!(matches!(
            Expr::parse("1 $ 2"),
            Err(ExprError::Syntax { pos: 2, .. })
        ));
        assert!(matches!(Expr::parse("1 2"), Err(ExprError::Syntax { .. })));
        assert_eq!(
            eval("n/0", &[("n", 4)]),
            Err(ExprError::InexactDivision(4, 0))
        );
    }

    #[test]
    fn canonical_printing() {
        for (src, canon) in [
            ("1000 - nb", "1000-nb"),
            ("(a-b)-c", "a-b-c"),
            ("a-(b-c)", "a-(b-c)"),
            ("(a+b)*c", "(a+b)*c"),
            ("-(5)", "-(5)"),
            ("-5", "-5"),
            ("-(a+b)", "-(a+b)"),
        ] {
            assert_eq!(Expr::parse(src).unwrap().to_string(), canon);
        }
        assert_eq!(
            Expr::parse("-(5)").unwrap(),
            Expr::Neg(Box::new(Expr::Lit(5)))
        );
        assert_eq!(Expr::parse("-5").unwrap(), Expr::Lit(-5));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-50i64..50).prop_map(Expr::Lit),
            prop::sample::select(vec!["n", "nb", "j"]).prop_map(Expr::var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]),
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, l, r)| Expr::Bin(op, Box::new(l), Box::new(r))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(e in arb_expr()) {
            let text = e.to_string();
            prop_assert_eq!(Expr::parse(&text).unwrap(), e);
        }
    }
}
