//! Field inputs: linear combinations of spherical harmonics written as text,
//! or coefficient snapshots stored as JSON.
//!
//! Expressions are in units of `r₀` and accept numbers, `Y(l, m)`, `+`, `-`,
//! `*`, `/` and parentheses, e.g. `0.01 + 0.02*Y(1,0) - 1e-3*Y(2,-1)`.
//! Products are allowed only when one factor is a plain number.

use std::collections::BTreeMap;
use std::sync::Arc;

use motsdn::sphere::{FieldSnapshot, SphereField, SphereGrid};

/// Parsed expression: `constant + Σ c_lm Y_lm`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Combination {
    pub constant: f64,
    pub modes: BTreeMap<(usize, i64), f64>,
}

impl Combination {
    fn number(x: f64) -> Self {
        Combination { constant: x, modes: BTreeMap::new() }
    }

    fn is_number(&self) -> bool {
        self.modes.is_empty()
    }

    fn scale(mut self, a: f64) -> Self {
        self.constant *= a;
        for c in self.modes.values_mut() {
            *c *= a;
        }
        self
    }

    fn add(mut self, other: Combination, sign: f64) -> Self {
        self.constant += sign * other.constant;
        for (k, c) in other.modes {
            *self.modes.entry(k).or_insert(0.0) += sign * c;
        }
        self
    }

    /// Highest degree present.
    pub fn degree(&self) -> usize {
        self.modes.keys().map(|k| k.0).max().unwrap_or(0)
    }

    /// The field `r₀ · (constant + Σ c_lm Y_lm)` on `grid`.
    pub fn build(&self, grid: &Arc<SphereGrid<f64>>, r0: f64) -> Result<SphereField<f64>, String> {
        if self.degree() > grid.l_max() {
            return Err(format!("Y({}, ·) exceeds the band limit {}", self.degree(), grid.l_max()));
        }
        let mut f = SphereField::constant(grid, self.constant * r0);
        for (&(l, m), &c) in &self.modes {
            f = f.add(&SphereField::ylm(grid, l, m, c * r0));
        }
        Ok(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Y,
    Plus,
    Minus,
    Star,
    Slash,
    Open,
    Close,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1
            }
            '-' => {
                out.push(Token::Minus);
                i += 1
            }
            '*' => {
                out.push(Token::Star);
                i += 1
            }
            '/' => {
                out.push(Token::Slash);
                i += 1
            }
            '(' => {
                out.push(Token::Open);
                i += 1
            }
            ')' => {
                out.push(Token::Close);
                i += 1
            }
            ',' => {
                out.push(Token::Comma);
                i += 1
            }
            'Y' => {
                out.push(Token::Y);
                i += 1
            }
            c if c.is_ascii_digit() || c == '.' => {
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
                let text: String = chars[start..i].iter().collect();
                let x = text.parse::<f64>().map_err(|_| format!("malformed number {text:?}"))?;
                out.push(Token::Num(x));
            }
            other => return Err(format!("unexpected character {other:?} at position {i}")),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Token) -> Result<(), String> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            got => Err(format!("expected {t:?}, found {got:?}")),
        }
    }

    fn expr(&mut self) -> Result<Combination, String> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    acc = acc.add(self.term()?, 1.0);
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    acc = acc.add(self.term()?, -1.0);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Combination, String> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = if acc.is_number() {
                        rhs.scale(acc.constant)
                    } else if rhs.is_number() {
                        acc.scale(rhs.constant)
                    } else {
                        return Err("products of harmonics are not linear combinations".into());
                    };
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    if !rhs.is_number() || rhs.constant == 0.0 {
                        return Err("division is only allowed by a non-zero number".into());
                    }
                    acc = acc.scale(rhs.constant.recip());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn integer(&mut self) -> Result<i64, String> {
        let sign = if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            -1
        } else {
            1
        };
        match self.next() {
            Some(Token::Num(x)) if x.fract() == 0.0 && x.abs() < 1e6 => Ok(sign * x as i64),
            got => Err(format!("expected an integer, found {got:?}")),
        }
    }

    fn factor(&mut self) -> Result<Combination, String> {
        match self.next() {
            Some(Token::Num(x)) => Ok(Combination::number(x)),
            Some(Token::Minus) => Ok(self.factor()?.scale(-1.0)),
            Some(Token::Plus) => self.factor(),
            Some(Token::Open) => {
                let e = self.expr()?;
                self.expect(Token::Close)?;
                Ok(e)
            }
            Some(Token::Y) => {
                self.expect(Token::Open)?;
                let l = self.integer()?;
                self.expect(Token::Comma)?;
                let m = self.integer()?;
                self.expect(Token::Close)?;
                if l < 0 || m.abs() > l {
                    return Err(format!("Y({l}, {m}) needs 0 ≤ |m| ≤ l"));
                }
                let mut modes = BTreeMap::new();
                modes.insert((l as usize, m), 1.0);
                Ok(Combination { constant: 0.0, modes })
            }
            got => Err(format!("unexpected token {got:?}")),
        }
    }
}

/// Parses an expression into a combination of harmonics.
pub fn parse_expression(src: &str) -> Result<Combination, String> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err("empty field expression".into());
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(format!("trailing input after position {}", p.pos));
    }
    if !e.constant.is_finite() || e.modes.values().any(|c| !c.is_finite()) {
        return Err("non-finite coefficient".into());
    }
    Ok(e)
}

/// Field from a snapshot, resampled to `grid`'s band limit. Snapshot
/// coefficients are absolute lengths.
pub fn from_snapshot(grid: &Arc<SphereGrid<f64>>, snap: &FieldSnapshot) -> Result<SphereField<f64>, String> {
    SphereField::from_snapshot(grid, snap).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sums_and_products() {
        let e = parse_expression("0.01 + 0.02*Y(1,0) - 1e-3*Y(2,-1) + Y(1,0)/2").unwrap();
        assert_eq!(e.constant, 0.01);
        assert_eq!(e.modes[&(1, 0)], 0.52);
        assert_eq!(e.modes[&(2, -1)], -1e-3);
        assert_eq!(e.degree(), 2);
        let e = parse_expression("-(0.5 - Y(3,3)) * 2e-2").unwrap();
        assert_eq!(e.constant, -0.01);
        assert_eq!(e.modes[&(3, 3)], 0.02);
        assert_eq!(parse_expression("1.5E+1").unwrap().constant, 15.0);
    }

    #[test]
    fn rejects_malformed_expressions() {
        for bad in ["", "Y(1,2)", "Y(1,0)*Y(1,0)", "1/0", "0.1 +", "Y(1.5,0)", "x", "(1", "1 2"] {
            assert!(parse_expression(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn builds_fields_in_units_of_r0() {
        let grid = SphereGrid::<f64>::new(4);
        let f = parse_expression("0.1 + 0.2*Y(2,1)").unwrap().build(&grid, 2.0).unwrap();
        assert!((f.mean() - 0.2).abs() < 1e-14);
        assert!((f.coeff(2, 1) - 0.4).abs() < 1e-14);
        assert!(parse_expression("Y(5,0)").unwrap().build(&grid, 2.0).is_err());
    }

    #[test]
    fn snapshots_resample() {
        let grid = SphereGrid::<f64>::new(6);
        let f = SphereField::ylm(&grid, 3, 2, 0.25);
        let back = from_snapshot(&SphereGrid::new(8), &f.snapshot()).unwrap();
        assert_eq!(back.coeff(3, 2), 0.25);
    }
}
