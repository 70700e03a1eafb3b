//! Recursive-descent parser for the expression grammar (see `docs/grammar.md`).

use super::error::{Result, SymError};
use super::expr::Expr;
use super::poly::Rational;
use super::symbol::{
    argument_symbol, coefficient_default_args, is_parameter, is_variable, unary_default_arg,
    Symbol, MAX_JET_ORDER, NONLINEARITY,
};
use num_bigint::BigInt;
use num_traits::One;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Rational),
    Ident {
        name: String,
        suffix: Option<String>,
    },
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            let (tok, pos) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, pos));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit()
            || (c == b'.' && self.src.get(start + 1).is_some_and(u8::is_ascii_digit))
        {
            return Ok((Tok::Num(self.number()?), start));
        }
        if c.is_ascii_alphabetic() {
            let name = self.word();
            let mut suffix = None;
            if self.peek() == Some(b'_') {
                self.pos += 1;
                let s = self.word();
                if s.is_empty() {
                    return Err(SymError::Syntax {
                        pos: self.pos,
                        msg: "expected derivative suffix after `_`".into(),
                    });
                }
                suffix = Some(s);
            }
            return Ok((Tok::Ident { name, suffix }, start));
        }
        self.pos += 1;
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                return Err(SymError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", c as char),
                })
            }
        };
        Ok((tok, start))
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    /// Decimal literal, read exactly: `1.25e-3` is `1/800`.
    fn number(&mut self) -> Result<Rational> {
        let start = self.pos;
        let mut digits = String::new();
        let mut scale: i64 = 0;
        while let Some(c) = self.peek().filter(u8::is_ascii_digit) {
            digits.push(c as char);
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while let Some(c) = self.peek().filter(u8::is_ascii_digit) {
                digits.push(c as char);
                scale -= 1;
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            let mut sign = 1;
            if let Some(s @ (b'+' | b'-')) = self.peek() {
                sign = if s == b'-' { -1 } else { 1 };
                self.pos += 1;
            }
            let exp_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == exp_start {
                // `2e` is not an exponent; leave `e` for the identifier lexer.
                self.pos = save;
            } else {
                let text = std::str::from_utf8(&self.src[exp_start..self.pos]).unwrap();
                let e: i64 = text.parse().map_err(|_| SymError::Syntax {
                    pos: start,
                    msg: "exponent out of range".into(),
                })?;
                scale += sign * e;
            }
        }
        let mantissa: BigInt = digits.parse().map_err(|_| SymError::Syntax {
            pos: start,
            msg: "malformed number".into(),
        })?;
        let ten = Rational::from_integer(BigInt::from(10));
        let factor = if scale >= 0 {
            num_traits::pow(ten, scale as usize)
        } else {
            num_traits::pow(ten.recip(), (-scale) as usize)
        };
        Ok(Rational::from_integer(mantissa) * factor)
    }
}

/// Named sub-expressions the caller makes available to the parser.
pub type Macros = BTreeMap<String, Expr>;

struct Parser<'m> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    macros: &'m Macros,
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr> {
    parse_with(text, &Macros::new())
}

/// Parses with additional named sub-expressions.
pub fn parse_with(text: &str, macros: &Macros) -> Result<Expr> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, i: 0, macros };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        _ => Err(p.error("unexpected trailing input")),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn error(&self, msg: &str) -> SymError {
        SymError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Op('-') => {
                    self.bump();
                    terms.push(self.term()?.negated());
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    factors.push(self.unary()?);
                }
                Tok::Op('/') => {
                    self.bump();
                    let d = self.unary()?;
                    factors.push(Expr::Pow(Box::new(d), Box::new(Expr::int(-1))));
                }
                _ => break,
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::Product(factors)
        })
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Int(n) => Expr::Int(-n),
                Expr::Rational(r) => Expr::Rational(-r),
                other => other.negated(),
            });
        }
        if *self.peek() == Tok::Op('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let (base, is_e) = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            if is_e {
                return Ok(Expr::Exp(Box::new(exponent)));
            }
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    /// Returns the primary and whether it was the bare constant `e`.
    fn primary(&mut self) -> Result<(Expr, bool)> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(r) => Ok((
                if r.is_integer() {
                    Expr::Int(r.to_integer())
                } else {
                    Expr::Rational(r)
                },
                false,
            )),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok((e, false))
            }
            Tok::Ident { name, suffix } => {
                if name == "e" && suffix.is_none() && *self.peek() != Tok::LParen {
                    return Ok((Expr::Exp(Box::new(Expr::int(1))), true));
                }
                Ok((self.identifier(&name, suffix.as_deref(), pos)?, false))
            }
            Tok::End => Err(SymError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            other => Err(SymError::Syntax {
                pos,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn call_args(&mut self) -> Result<Option<Vec<Expr>>> {
        if *self.peek() != Tok::LParen {
            return Ok(None);
        }
        self.bump();
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)` after arguments")?;
        Ok(Some(args))
    }

    fn single_arg(&mut self, name: &str, pos: usize) -> Result<Expr> {
        match self.call_args()? {
            Some(mut a) if a.len() == 1 => Ok(a.pop().unwrap()),
            Some(_) => Err(SymError::Syntax {
                pos,
                msg: format!("`{name}` takes one argument"),
            }),
            None => Err(SymError::Syntax {
                pos,
                msg: format!("`{name}` requires an argument"),
            }),
        }
    }

    fn identifier(&mut self, name: &str, suffix: Option<&str>, pos: usize) -> Result<Expr> {
        let unknown = || SymError::UnknownIdentifier {
            name: match suffix {
                Some(s) => format!("{name}_{s}"),
                None => name.to_string(),
            },
            pos,
        };
        if suffix.is_none() {
            match name {
                "exp" => return Ok(Expr::Exp(Box::new(self.single_arg(name, pos)?))),
                "ln" | "log" => return Ok(Expr::Ln(Box::new(self.single_arg(name, pos)?))),
                "abs" => return Ok(Expr::Abs(Box::new(self.single_arg(name, pos)?))),
                "sqrt" => {
                    let a = self.single_arg(name, pos)?;
                    let half = Rational::new(BigInt::one(), BigInt::from(2));
                    return Ok(Expr::Pow(Box::new(a), Box::new(Expr::Rational(half))));
                }
                _ => {}
            }
            if name == NONLINEARITY {
                return Ok(match self.call_args()? {
                    Some(args) => {
                        if args.len() != 1 {
                            return Err(SymError::Syntax {
                                pos,
                                msg: "`f` takes one argument".into(),
                            });
                        }
                        Expr::Apply {
                            func: Arc::from(NONLINEARITY),
                            derivs: vec![0],
                            args,
                        }
                    }
                    None => Expr::Sym(Symbol::var(NONLINEARITY)),
                });
            }
            if let Some(order) = name.strip_prefix("df").and_then(|d| d.parse::<u32>().ok()) {
                if order == 0 {
                    return Err(unknown());
                }
                let arg = self.single_arg(name, pos)?;
                return Ok(Expr::Apply {
                    func: Arc::from(NONLINEARITY),
                    derivs: vec![order],
                    args: vec![arg],
                });
            }
            if let Some(e) = self.macros.get(name) {
                return Ok(e.clone());
            }
        }
        if name == "u" {
            let (mut t, mut x) = (0u32, 0u32);
            for ch in suffix.unwrap_or("").chars() {
                match ch {
                    't' => t += 1,
                    'x' => x += 1,
                    _ => return Err(unknown()),
                }
            }
            if t + x > MAX_JET_ORDER {
                return Err(SymError::DerivativeOrder {
                    func: "u".into(),
                    order: t + x,
                    max: MAX_JET_ORDER,
                });
            }
            return Ok(Expr::Sym(Symbol::jet(t, x)));
        }
        if let Some(var) = unary_default_arg(name) {
            let order = match suffix {
                None => 0,
                Some(s) if s.chars().all(|c| c.is_ascii_digit()) => {
                    s.parse().map_err(|_| unknown())?
                }
                Some(s) => repetitions(s, var).ok_or_else(unknown)?,
            };
            let arg = match self.call_args()? {
                None => Expr::Sym(argument_symbol(var)),
                Some(mut a) if a.len() == 1 => a.pop().unwrap(),
                Some(_) => {
                    return Err(SymError::Syntax {
                        pos,
                        msg: format!("`{name}` takes one argument"),
                    })
                }
            };
            return Ok(Expr::Apply {
                func: Arc::from(name),
                derivs: vec![order],
                args: vec![arg],
            });
        }
        if let Some(names) = coefficient_default_args(name) {
            let mut derivs = vec![0u32; names.len()];
            for ch in suffix.unwrap_or("").chars() {
                let k = names
                    .iter()
                    .position(|n| n.len() == 1 && n.starts_with(ch))
                    .ok_or_else(unknown)?;
                derivs[k] += 1;
            }
            let args = match self.call_args()? {
                None => names
                    .iter()
                    .map(|n| Expr::Sym(argument_symbol(n)))
                    .collect(),
                Some(a) if a.len() == names.len() => a,
                Some(_) => {
                    return Err(SymError::Syntax {
                        pos,
                        msg: format!("`{name}` takes {} arguments", names.len()),
                    })
                }
            };
            return Ok(Expr::Apply {
                func: Arc::from(name),
                derivs,
                args,
            });
        }
        if suffix.is_some() {
            return Err(unknown());
        }
        if is_parameter(name) {
            return Ok(Expr::Sym(Symbol::param(name)));
        }
        if is_variable(name) {
            return Ok(Expr::Sym(Symbol::var(name)));
        }
        Err(unknown())
    }
}

/// Number of times `unit` repeats to form `s`, if it does.
fn repetitions(s: &str, unit: &str) -> Option<u32> {
    if unit.is_empty() || !s.len().is_multiple_of(unit.len()) {
        return None;
    }
    let n = s.len() / unit.len();
    (s == unit.repeat(n)).then_some(n as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    #[test]
    fn decimal_literals_are_exact() {
        let e = parse("1.25e-3").unwrap();
        assert_eq!(
            e,
            Expr::Rational(Rational::new(BigInt::one(), BigInt::from(800)))
        );
        assert!(!matches!(parse("0").unwrap(), Expr::Int(ref n) if !n.is_zero()));
    }

    #[test]
    fn unknown_identifier_reports_position() {
        match parse("u + zeta") {
            Err(SymError::UnknownIdentifier { name, pos }) => {
                assert_eq!(name, "zeta");
                assert_eq!(pos, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse("(u + 1") {
            Err(SymError::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("u $ 2"),
            Err(SymError::Syntax { pos: 2, .. })
        ));
    }

    #[test]
    fn jet_suffixes() {
        assert_eq!(parse("u_xxxxx").unwrap(), Expr::Sym(Symbol::jet(0, 5)));
        assert_eq!(parse("u_tx").unwrap(), Expr::Sym(Symbol::jet(1, 1)));
        assert!(matches!(
            parse("u_xxxxxxxx"),
            Err(SymError::DerivativeOrder { .. })
        ));
        assert!(matches!(
            parse("u_xy"),
            Err(SymError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn unary_function_suffixes_agree() {
        assert_eq!(parse("v_yyy").unwrap(), parse("v_3(y)").unwrap());
        assert_eq!(parse("u1_x1x1").unwrap(), parse("u1_2(x1)").unwrap());
        assert_eq!(
            parse("phi_xxu").unwrap(),
            parse("phi_xxu(t, x, u)").unwrap()
        );
    }
}
