//! Text grammar for level-set specifications.
//!
//! ```text
//! # comment
//! k 2
//! class yes: p2 - p1 <= 0
//! class no:  p2 - p1 > 0
//! ```
//!
//! One `k <K>` line fixes the alphabet bound, then each `class` line
//! names a label and the conjunction of inequalities (joined with `&`)
//! carving out its region. Terms are rational multiples of proportion
//! variables `p1..pK` — `p1`, `-p1`, `2*p1`, `3/4*p2`, with `*` optional —
//! compared by `<=`, `<`, `>=`, or `>` against a rational. Rationals are
//! written without spaces (`3/4`). Repeating a label unions its regions.

use num::rational::Rational64;
use num::Zero;
use thiserror::Error;

use super::{Clause, LevelSetSpec, RationalInequality};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Num(i64, i64),
    PVar(usize),
    Plus,
    Minus,
    Star,
    Le,
    Lt,
    Ge,
    Gt,
}

fn lex(s: &str, line: usize) -> Result<Vec<Tok>, ParseError> {
    let b = s.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let number = |i: &mut usize| -> i64 {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        s[start..*i].parse().unwrap_or(i64::MAX)
    };
    while i < b.len() {
        match b[i] {
            b' ' | b'\t' => i += 1,
            b'+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            b'-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            b'*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            b'<' | b'>' => {
                let ge = b[i] == b'>';
                let eq = i + 1 < b.len() && b[i + 1] == b'=';
                toks.push(match (ge, eq) {
                    (false, true) => Tok::Le,
                    (false, false) => Tok::Lt,
                    (true, true) => Tok::Ge,
                    (true, false) => Tok::Gt,
                });
                i += if eq { 2 } else { 1 };
            }
            b'p' => {
                i += 1;
                if i >= b.len() || !b[i].is_ascii_digit() {
                    return err(line, "'p' must be followed by a variable index");
                }
                toks.push(Tok::PVar(number(&mut i) as usize));
            }
            b'0'..=b'9' => {
                let numer = number(&mut i);
                let denom = if i < b.len() && b[i] == b'/' {
                    i += 1;
                    if i >= b.len() || !b[i].is_ascii_digit() {
                        return err(line, "'/' must be followed by a denominator");
                    }
                    number(&mut i)
                } else {
                    1
                };
                if denom == 0 {
                    return err(line, "zero denominator");
                }
                toks.push(Tok::Num(numer, denom));
            }
            c => return err(line, format!("unexpected character '{}'", c as char)),
        }
    }
    Ok(toks)
}

fn parse_inequality(text: &str, k: usize, line: usize) -> Result<RationalInequality, ParseError> {
    let toks = lex(text, line)?;
    let mut pos = 0;
    let mut coefficients = vec![Rational64::zero(); k];
    let mut first = true;
    loop {
        let mut negative = false;
        let mut saw_sign = false;
        while let Some(&t @ (Tok::Plus | Tok::Minus)) = toks.get(pos) {
            saw_sign = true;
            negative ^= t == Tok::Minus;
            pos += 1;
        }
        if !first && !saw_sign {
            break;
        }
        let mut coef = match toks.get(pos) {
            Some(&Tok::Num(n, d)) => {
                pos += 1;
                if toks.get(pos) == Some(&Tok::Star) {
                    pos += 1;
                }
                Rational64::new(n, d)
            }
            _ => Rational64::new(1, 1),
        };
        if negative {
            coef = -coef;
        }
        let Some(&Tok::PVar(idx)) = toks.get(pos) else {
            return err(line, "expected a proportion variable");
        };
        pos += 1;
        if idx == 0 || idx > k {
            return err(line, format!("p{idx} is out of range; the alphabet bound is {k}"));
        }
        coefficients[idx - 1] += coef;
        first = false;
    }
    let rel = match toks.get(pos) {
        Some(&t @ (Tok::Le | Tok::Lt | Tok::Ge | Tok::Gt)) => {
            pos += 1;
            t
        }
        _ => return err(line, "expected a comparison operator"),
    };
    let mut negative = false;
    while let Some(&t @ (Tok::Plus | Tok::Minus)) = toks.get(pos) {
        negative ^= t == Tok::Minus;
        pos += 1;
    }
    let Some(&Tok::Num(n, d)) = toks.get(pos) else {
        return err(line, "expected a rational threshold");
    };
    pos += 1;
    if pos != toks.len() {
        return err(line, "trailing tokens after the threshold");
    }
    let mut threshold = Rational64::new(n, d);
    if negative {
        threshold = -threshold;
    }
    Ok(match rel {
        Tok::Le => RationalInequality::le(coefficients, threshold),
        Tok::Lt => RationalInequality::lt(coefficients, threshold),
        Tok::Ge => RationalInequality::ge(coefficients, threshold),
        Tok::Gt => RationalInequality::gt(coefficients, threshold),
        _ => unreachable!(),
    })
}

pub fn parse_spec(text: &str) -> Result<LevelSetSpec, ParseError> {
    let mut alphabet_max: Option<u32> = None;
    let mut labels: Vec<String> = Vec::new();
    let mut clauses: Vec<Clause> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("k ").or(if body == "k" { Some("") } else { None }) {
            if alphabet_max.is_some() {
                return err(line, "duplicate 'k' line");
            }
            match rest.trim().parse::<u32>() {
                Ok(k) if k >= 1 => alphabet_max = Some(k),
                _ => return err(line, "'k' needs a positive integer alphabet bound"),
            }
        } else if let Some(rest) = body.strip_prefix("class") {
            let Some(k) = alphabet_max else {
                return err(line, "'k' must come before any class");
            };
            let Some((head, tail)) = rest.split_once(':') else {
                return err(line, "class line needs a ':' after the label");
            };
            let label = head.trim();
            if label.is_empty() || label.contains(char::is_whitespace) {
                return err(line, "label must be one non-empty word");
            }
            let label_idx = match labels.iter().position(|l| l == label) {
                Some(i) => i,
                None => {
                    labels.push(label.to_string());
                    labels.len() - 1
                }
            };
            let mut conjunction = Vec::new();
            if !tail.trim().is_empty() {
                for segment in tail.split('&') {
                    if segment.trim().is_empty() {
                        return err(line, "empty conjunct");
                    }
                    conjunction.push(parse_inequality(segment, k as usize, line)?);
                }
            }
            clauses.push(Clause { label: label_idx, conjunction });
        } else {
            return err(line, "expected a 'k' or 'class' line");
        }
    }
    let Some(alphabet_max) = alphabet_max else {
        return err(text.lines().count() + 1, "missing 'k' line");
    };
    if clauses.is_empty() {
        return err(text.lines().count() + 1, "no classes defined");
    }
    Ok(LevelSetSpec { alphabet_max, labels, clauses })
}
