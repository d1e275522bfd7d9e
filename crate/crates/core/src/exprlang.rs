//! A small arithmetic expression language in one variable `u`.
//!
//! Model documents describe decision-dependent characteristics on interval
//! decision spaces as expression strings; this module parses and evaluates
//! them. The grammar, precedence low to high:
//!
//! ```text
//! additive       := multiplicative (('+' | '-') multiplicative)*
//! multiplicative := unary (('*' | '/') unary)*
//! unary          := '-' unary | power
//! power          := atom ('^' unary)?          // right-associative
//! atom           := number | 'u' | call | '(' additive ')'
//! call           := ('exp'|'log'|'sqrt'|'abs') '(' additive ')'
//!                 | ('min'|'max') '(' additive ',' additive ')'
//! ```
//!
//! Evaluation is over the reals; anything that leaves the reals (division by
//! zero, `log`/`sqrt` of a negative, a non-finite intermediate, a negative
//! base raised to a fractional power) is a [`EvalError`] carrying the
//! offending sub-expression.

use std::fmt;

use thiserror::Error;

/// Binary operators, in source notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Built-in functions. `Min` and `Max` are binary, the rest unary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
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

/// Abstract syntax tree of an expression in the variable `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// The single variable `u`.
    Var,
    Neg(Box<Expr>),
    Bin {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
    },
}

/// Parse failure with the byte offset of the offending token.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at offset {offset}: expected {expected}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
}

/// Evaluation left the reals; `subexpr` is the canonical print of the node
/// that produced the bad value.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("domain error in `{subexpr}`: {kind}")]
pub struct EvalError {
    pub kind: DomainErrorKind,
    pub subexpr: String,
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum DomainErrorKind {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive value")]
    LogNonPositive,
    #[error("square root of a negative value")]
    SqrtNegative,
    #[error("negative base with fractional exponent")]
    FractionalPowerOfNegative,
    #[error("non-finite result")]
    NonFinite,
}

// ── Parser ─────────────────────────────────────────────────────────────────

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Parse an expression string into its syntax tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let expr = p.additive()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("end of input"));
    }
    Ok(expr)
}

impl<'a> Parser<'a> {
    fn err(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn accept(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, byte: u8, what: &str) -> Result<(), ParseError> {
        if self.accept(byte) {
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.accept(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.accept(b'^') {
            // Right-associative; the exponent may carry its own unary minus.
            let exponent = self.unary()?;
            Ok(Expr::Bin {
                op: BinOp::Pow,
                lhs: Box::new(base),
                rhs: Box::new(exponent),
            })
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.additive()?;
                self.expect(b')', "closing parenthesis")?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let ident = self.ident();
                if ident == "u" {
                    return Ok(Expr::Var);
                }
                let func = match ident.as_str() {
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    "min" => Func::Min,
                    "max" => Func::Max,
                    _ => {
                        self.pos -= ident.len();
                        return Err(self.err("`u` or a function name"));
                    }
                };
                self.expect(b'(', "opening parenthesis")?;
                let mut args = vec![self.additive()?];
                while self.accept(b',') {
                    args.push(self.additive()?);
                }
                self.expect(b')', "closing parenthesis")?;
                if args.len() != func.arity() {
                    return Err(self.err(&format!(
                        "{} argument(s) to {}",
                        func.arity(),
                        func.name()
                    )));
                }
                Ok(Expr::Call { func, args })
            }
            _ => Err(self.err("a number, `u`, a function call, or `(`")),
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.src.get(self.pos), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while matches!(self.src.get(self.pos), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if matches!(self.src.get(self.pos), Some(c) if c.is_ascii_digit()) {
                while matches!(self.src.get(self.pos), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `1e` followed by a non-digit is the number `1` and then junk.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => {
                self.pos = start;
                Err(self.err("a finite number"))
            }
        }
    }
}

// ── Canonical printer ──────────────────────────────────────────────────────

// Precedence levels used by the printer; must agree with the grammar.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Num(_) | Expr::Var | Expr::Call { .. } => PREC_ATOM,
        Expr::Neg(_) => PREC_NEG,
        Expr::Bin { op: BinOp::Pow, .. } => PREC_POW,
        Expr::Bin {
            op: BinOp::Mul | BinOp::Div,
            ..
        } => PREC_MUL,
        Expr::Bin {
            op: BinOp::Add | BinOp::Sub,
            ..
        } => PREC_ADD,
    }
}

fn write_prec(e: &Expr, min_prec: u8, out: &mut String) {
    let needs_parens = precedence(e) < min_prec;
    if needs_parens {
        out.push('(');
    }
    match e {
        Expr::Num(v) => out.push_str(&format!("{v:?}")),
        Expr::Var => out.push('u'),
        Expr::Neg(inner) => {
            out.push('-');
            write_prec(inner, PREC_NEG, out);
        }
        Expr::Bin { op, lhs, rhs } => {
            let (sym, left_min, right_min) = match op {
                BinOp::Add => (" + ", PREC_ADD, PREC_ADD + 1),
                BinOp::Sub => (" - ", PREC_ADD, PREC_ADD + 1),
                BinOp::Mul => (" * ", PREC_MUL, PREC_MUL + 1),
                BinOp::Div => (" / ", PREC_MUL, PREC_MUL + 1),
                // Base must be an atom; exponent may be unary/power (right-assoc).
                BinOp::Pow => ("^", PREC_ATOM, PREC_NEG),
            };
            write_prec(lhs, left_min, out);
            out.push_str(sym);
            write_prec(rhs, right_min, out);
        }
        Expr::Call { func, args } => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_prec(a, PREC_ADD, out);
            }
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_prec(self, 0, &mut s);
        f.write_str(&s)
    }
}

// ── Evaluator ──────────────────────────────────────────────────────────────

impl Expr {
    /// Evaluate at the decision value `u`.
    pub fn eval(&self, u: f64) -> Result<f64, EvalError> {
        let err = |kind| EvalError {
            kind,
            subexpr: self.to_string(),
        };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var => u,
            Expr::Neg(inner) => -inner.eval(u)?,
            Expr::Bin { op, lhs, rhs } => {
                let a = lhs.eval(u)?;
                let b = rhs.eval(u)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(err(DomainErrorKind::DivisionByZero));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(err(DomainErrorKind::FractionalPowerOfNegative));
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call { func, args } => {
                let a = args[0].eval(u)?;
                match func {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(err(DomainErrorKind::LogNonPositive));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(err(DomainErrorKind::SqrtNegative));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(u)?),
                    Func::Max => a.max(args[1].eval(u)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(DomainErrorKind::NonFinite))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin {
            op,
            lhs: Box::new(l),
            rhs: Box::new(r),
        }
    }

    #[test]
    fn grammar_forced_shape() {
        let e = parse("1/(1+u)").unwrap();
        assert_eq!(
            e,
            bin(BinOp::Div, num(1.0), bin(BinOp::Add, num(1.0), Expr::Var))
        );
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), 512.0);
        assert_eq!(
            e,
            bin(BinOp::Pow, num(2.0), bin(BinOp::Pow, num(3.0), num(2.0)))
        );
    }

    #[test]
    fn unary_minus_binds_between_mul_and_pow() {
        // -2^2 = -(2^2); -2*3 = (-2)*3
        assert_eq!(parse("-2^2").unwrap().eval(0.0).unwrap(), -4.0);
        assert_eq!(parse("-2*3").unwrap().eval(0.0).unwrap(), -6.0);
        assert_eq!(parse("2^-1").unwrap().eval(0.0).unwrap(), 0.5);
    }

    #[test]
    fn unterminated_call_errors_at_offset() {
        let err = parse("exp(").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        let err = parse("1 + 2 )").unwrap_err();
        assert_eq!(err.offset, 6);
    }

    #[test]
    fn unknown_identifier_errors_at_its_start() {
        let err = parse("2 * foo(1)").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn wrong_arity_rejected() {
        assert!(parse("min(1)").is_err());
        assert!(parse("exp(1, 2)").is_err());
    }

    #[test]
    fn eval_basics() {
        assert_eq!(parse("exp(0)").unwrap().eval(7.0).unwrap(), 1.0);
        assert_eq!(parse("1/(1+u)").unwrap().eval(1.0).unwrap(), 0.5);
        assert_eq!(parse("min(u, 2)").unwrap().eval(5.0).unwrap(), 2.0);
        assert_eq!(parse("max(u, 2)").unwrap().eval(5.0).unwrap(), 5.0);
        assert_eq!(parse("abs(-3)").unwrap().eval(0.0).unwrap(), 3.0);
    }

    #[test]
    fn domain_errors() {
        let log0 = parse("log(u)").unwrap().eval(0.0).unwrap_err();
        assert_eq!(log0.kind, DomainErrorKind::LogNonPositive);
        assert_eq!(log0.subexpr, "log(u)");

        let div0 = parse("1/u").unwrap().eval(0.0).unwrap_err();
        assert_eq!(div0.kind, DomainErrorKind::DivisionByZero);

        let sqrtneg = parse("sqrt(u - 2)").unwrap().eval(0.0).unwrap_err();
        assert_eq!(sqrtneg.kind, DomainErrorKind::SqrtNegative);

        let fracpow = parse("(-2)^0.5").unwrap().eval(0.0).unwrap_err();
        assert_eq!(fracpow.kind, DomainErrorKind::FractionalPowerOfNegative);

        let overflow = parse("exp(1000)").unwrap().eval(0.0).unwrap_err();
        assert_eq!(overflow.kind, DomainErrorKind::NonFinite);
    }

    #[test]
    fn negative_integer_power_of_negative_base_is_fine() {
        assert_eq!(parse("(-2)^3").unwrap().eval(0.0).unwrap(), -8.0);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1e-3").unwrap().eval(0.0).unwrap(), 1e-3);
        assert_eq!(parse("2.5E2").unwrap().eval(0.0).unwrap(), 250.0);
    }

    // Random finite trees for the round-trip property. Literals are kept
    // non-negative so `-x` prints only from an explicit Neg node.
    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0..1e6f64).prop_map(Expr::Num),
            Just(Expr::Var),
            Just(Expr::Num(0.0)),
        ];
        leaf.prop_recursive(6, 64, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| bin(op, l, r)),
                (
                    prop_oneof![
                        Just(Func::Exp),
                        Just(Func::Log),
                        Just(Func::Sqrt),
                        Just(Func::Abs)
                    ],
                    inner.clone()
                )
                    .prop_map(|(func, a)| Expr::Call {
                        func,
                        args: vec![a]
                    }),
                (
                    prop_oneof![Just(Func::Min), Just(Func::Max)],
                    inner.clone(),
                    inner
                )
                    .prop_map(|(func, a, b)| Expr::Call {
                        func,
                        args: vec![a, b]
                    }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn eval_is_deterministic(e in arb_expr(), u in -10.0..10.0f64) {
            let a = e.eval(u);
            let b = e.eval(u);
            match (a, b) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                _ => prop_assert!(false, "one run errored, the other did not"),
            }
        }
    }
}
