//! Filter expression grammar.
//!
//! ```text
//! expr    = or ;
//! or      = and { "|" and } ;
//! and     = unary { "&" unary } ;
//! unary   = "!" unary | primary ;
//! primary = "(" expr ")" | call ;
//! call    = "face" "(" who [ "," number ] ")"
//!         | "eye" "(" who [ "," number ] ")"
//!         | "face_score" "(" who ")"
//!         | "eye_score" "(" who ")"
//!         | "au" "(" who "," AU "," ( "c" | "r" ) [ "," number ] ")"
//!         | "emotion" "(" who "," ident ")"
//!         | "mutual" "(" expr "," expr ")"
//!         | "smooth" "(" expr [ "," int [ "," int ] ] ")" ;
//! who     = ident ;                      (* "A", "B" or a participant id *)
//! AU      = "AU" digits ;                (* e.g. AU06, AU12 *)
//! ```
//!
//! `face_score` and `eye_score` are continuous in [0, 1]; everything else is
//! boolean. `&` over a continuous operand takes the pointwise minimum and
//! yields a continuous signal. `|`, `!`, `mutual` and `smooth` need boolean
//! operands.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SignalKind;

pub const DEFAULT_SMOOTH_GAP: usize = 2;
pub const DEFAULT_SMOOTH_MIN: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("type error at position {pos}: {message}")]
    Type { pos: usize, message: String },
}

impl ExprError {
    pub fn pos(&self) -> usize {
        match self {
            ExprError::Syntax { pos, .. } | ExprError::Type { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuMode {
    /// `c`: the detector's 0/1 presence output.
    Presence,
    /// `r`: intensity on the 0-5 scale, compared against a threshold.
    Intensity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterExpr {
    Face { who: String, threshold: Option<f64> },
    Eye { who: String, threshold: Option<f64> },
    FaceScore { who: String },
    EyeScore { who: String },
    Au { who: String, au: u8, mode: AuMode, threshold: Option<f64> },
    Emotion { who: String, name: String },
    Not(Box<FilterExpr>),
    And(Box<FilterExpr>, Box<FilterExpr>),
    Or(Box<FilterExpr>, Box<FilterExpr>),
    Mutual(Box<FilterExpr>, Box<FilterExpr>),
    Smooth { inner: Box<FilterExpr>, gap: usize, min: usize },
}

impl FilterExpr {
    pub fn kind(&self) -> SignalKind {
        match self {
            FilterExpr::FaceScore { .. } | FilterExpr::EyeScore { .. } => SignalKind::Continuous,
            FilterExpr::And(a, b) => {
                if a.kind() == SignalKind::Boolean && b.kind() == SignalKind::Boolean {
                    SignalKind::Boolean
                } else {
                    SignalKind::Continuous
                }
            }
            _ => SignalKind::Boolean,
        }
    }

    /// Canonical text; equal for expressions that differ only in whitespace or redundant parentheses.
    pub fn normalized(&self) -> String {
        self.to_string()
    }

    fn precedence(&self) -> u8 {
        match self {
            FilterExpr::Or(..) => 1,
            FilterExpr::And(..) => 2,
            FilterExpr::Not(..) => 3,
            _ => 4,
        }
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &FilterExpr, min_prec: u8| {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            FilterExpr::Face { who, threshold: None } => write!(f, "face({who})"),
            FilterExpr::Face { who, threshold: Some(t) } => write!(f, "face({who}, {})", fmt_num(*t)),
            FilterExpr::Eye { who, threshold: None } => write!(f, "eye({who})"),
            FilterExpr::Eye { who, threshold: Some(t) } => write!(f, "eye({who}, {})", fmt_num(*t)),
            FilterExpr::FaceScore { who } => write!(f, "face_score({who})"),
            FilterExpr::EyeScore { who } => write!(f, "eye_score({who})"),
            FilterExpr::Au { who, au, mode, threshold } => {
                let m = match mode {
                    AuMode::Presence => "c",
                    AuMode::Intensity => "r",
                };
                write!(f, "au({who}, AU{au:02}, {m}")?;
                if let Some(t) = threshold {
                    write!(f, ", {}", fmt_num(*t))?;
                }
                write!(f, ")")
            }
            FilterExpr::Emotion { who, name } => write!(f, "emotion({who}, {name})"),
            FilterExpr::Not(e) => {
                write!(f, "!")?;
                child(f, e, 3)
            }
            FilterExpr::And(a, b) => {
                child(f, a, 2)?;
                write!(f, " & ")?;
                child(f, b, 3)
            }
            FilterExpr::Or(a, b) => {
                child(f, a, 1)?;
                write!(f, " | ")?;
                child(f, b, 2)
            }
            FilterExpr::Mutual(a, b) => write!(f, "mutual({a}, {b})"),
            FilterExpr::Smooth { inner, gap, min } => write!(f, "smooth({inner}, {gap}, {min})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Not,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(n) => format!("number {n}"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::And => "`&`".into(),
        Tok::Or => "`|`".into(),
        Tok::Not => "`!`".into(),
        Tok::End => "end of input".into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'&' => Tok::And,
            b'|' => Tok::Or,
            b'!' => Tok::Not,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            c if c.is_ascii_digit() || c == b'.' || c == b'-' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit() || matches!(bytes[i], b'.' | b'e' | b'E'))
                {
                    i += 1;
                }
                let lit = &text[start..i];
                let n = lit.parse::<f64>().map_err(|_| ExprError::Syntax {
                    pos: start,
                    message: format!("bad number `{lit}`"),
                })?;
                out.push((Tok::Num(n), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

/// A parsed call argument: either a nested expression or a bare token.
enum Arg {
    Expr(FilterExpr, usize),
    Ident(String, usize),
    Num(f64, usize),
}

impl Arg {
    fn pos(&self) -> usize {
        match self {
            Arg::Expr(_, p) | Arg::Ident(_, p) | Arg::Num(_, p) => *p,
        }
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected {}", describe(&want))))
        }
    }

    fn unexpected(&self, what: &str) -> ExprError {
        ExprError::Syntax {
            pos: self.pos(),
            message: format!("{what}, found {}", describe(self.peek())),
        }
    }

    fn expr(&mut self) -> Result<(FilterExpr, usize), ExprError> {
        let (mut lhs, pos) = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let (rhs, rpos) = self.and()?;
            need_bool(&lhs, pos, "`|`")?;
            need_bool(&rhs, rpos, "`|`")?;
            lhs = FilterExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, pos))
    }

    fn and(&mut self) -> Result<(FilterExpr, usize), ExprError> {
        let (mut lhs, pos) = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let (rhs, _) = self.unary()?;
            lhs = FilterExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, pos))
    }

    fn unary(&mut self) -> Result<(FilterExpr, usize), ExprError> {
        if *self.peek() == Tok::Not {
            let pos = self.bump().1;
            let (inner, ipos) = self.unary()?;
            need_bool(&inner, ipos, "`!`")?;
            return Ok((FilterExpr::Not(Box::new(inner)), pos));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<(FilterExpr, usize), ExprError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let (e, _) = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok((e, pos))
            }
            Tok::Ident(name) => {
                self.bump();
                let args = self.call_args(&name)?;
                Ok((build_call(&name, pos, args)?, pos))
            }
            _ => Err(self.unexpected("expected a filter")),
        }
    }

    fn call_args(&mut self, name: &str) -> Result<Vec<Arg>, ExprError> {
        if *self.peek() != Tok::LParen {
            return Err(ExprError::Syntax {
                pos: self.pos(),
                message: format!("expected `(` after `{name}`"),
            });
        }
        self.bump();
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.arg()?);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.unexpected("expected `,` or `)`")),
            }
        }
    }

    fn arg(&mut self) -> Result<Arg, ExprError> {
        let pos = self.pos();
        let (next, next_pos) = self
            .toks
            .get(self.at + 1)
            .cloned()
            .unwrap_or((Tok::End, pos));
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Arg::Num(n, pos))
            }
            Tok::Ident(s) if matches!(next, Tok::Comma | Tok::RParen) => {
                self.bump();
                Ok(Arg::Ident(s, pos))
            }
            Tok::Ident(s) if next != Tok::LParen => Err(ExprError::Syntax {
                pos: next_pos,
                message: format!("unexpected {} after `{s}`", describe(&next)),
            }),
            _ => {
                let (e, p) = self.expr()?;
                Ok(Arg::Expr(e, p))
            }
        }
    }
}

fn need_bool(e: &FilterExpr, pos: usize, op: &str) -> Result<(), ExprError> {
    if e.kind() == SignalKind::Boolean {
        Ok(())
    } else {
        Err(ExprError::Type {
            pos,
            message: format!("{op} needs a boolean operand, `{e}` is continuous"),
        })
    }
}

fn arity(name: &str, pos: usize, args: &[Arg], range: std::ops::RangeInclusive<usize>) -> Result<(), ExprError> {
    if range.contains(&args.len()) {
        return Ok(());
    }
    let want = if range.start() == range.end() {
        format!("{}", range.start())
    } else {
        format!("{} to {}", range.start(), range.end())
    };
    Err(ExprError::Type {
        pos,
        message: format!("`{name}` takes {want} arguments, got {}", args.len()),
    })
}

fn ident(arg: &Arg, what: &str) -> Result<String, ExprError> {
    match arg {
        Arg::Ident(s, _) => Ok(s.clone()),
        other => Err(ExprError::Type {
            pos: other.pos(),
            message: format!("expected {what}"),
        }),
    }
}

fn number(arg: &Arg, what: &str, range: std::ops::RangeInclusive<f64>) -> Result<f64, ExprError> {
    match arg {
        Arg::Num(n, _) if range.contains(n) => Ok(*n),
        Arg::Num(n, pos) => Err(ExprError::Type {
            pos: *pos,
            message: format!("{what} {n} outside [{}, {}]", range.start(), range.end()),
        }),
        other => Err(ExprError::Type {
            pos: other.pos(),
            message: format!("expected {what}"),
        }),
    }
}

fn count(arg: &Arg, what: &str) -> Result<usize, ExprError> {
    match arg {
        Arg::Num(n, _) if *n >= 0.0 && n.fract() == 0.0 && *n <= u32::MAX as f64 => Ok(*n as usize),
        other => Err(ExprError::Type {
            pos: other.pos(),
            message: format!("expected {what} as a non-negative integer"),
        }),
    }
}

fn operand(arg: Arg, what: &str) -> Result<(FilterExpr, usize), ExprError> {
    match arg {
        Arg::Expr(e, p) => Ok((e, p)),
        other => Err(ExprError::Type {
            pos: other.pos(),
            message: format!("expected {what}"),
        }),
    }
}

fn build_call(name: &str, pos: usize, args: Vec<Arg>) -> Result<FilterExpr, ExprError> {
    match name {
        "face" | "eye" => {
            arity(name, pos, &args, 1..=2)?;
            let who = ident(&args[0], "a participant")?;
            let threshold = args
                .get(1)
                .map(|a| number(a, "threshold", 0.0..=1.0))
                .transpose()?;
            Ok(if name == "face" {
                FilterExpr::Face { who, threshold }
            } else {
                FilterExpr::Eye { who, threshold }
            })
        }
        "face_score" | "eye_score" => {
            arity(name, pos, &args, 1..=1)?;
            let who = ident(&args[0], "a participant")?;
            Ok(if name == "face_score" {
                FilterExpr::FaceScore { who }
            } else {
                FilterExpr::EyeScore { who }
            })
        }
        "au" => {
            arity(name, pos, &args, 3..=4)?;
            let who = ident(&args[0], "a participant")?;
            let au_tok = ident(&args[1], "an action unit like AU12")?;
            let au = au_tok
                .strip_prefix("AU")
                .and_then(|d| d.parse::<u8>().ok())
                .ok_or_else(|| ExprError::Type {
                    pos: args[1].pos(),
                    message: format!("`{au_tok}` is not an action unit like AU12"),
                })?;
            let mode = match ident(&args[2], "`c` or `r`")?.as_str() {
                "c" => AuMode::Presence,
                "r" => AuMode::Intensity,
                _ => {
                    return Err(ExprError::Type {
                        pos: args[2].pos(),
                        message: "expected `c` (presence) or `r` (intensity)".into(),
                    })
                }
            };
            let threshold = match args.get(3) {
                None => None,
                Some(a) if mode == AuMode::Presence => {
                    return Err(ExprError::Type {
                        pos: a.pos(),
                        message: "presence mode takes no threshold".into(),
                    })
                }
                Some(a) => Some(number(a, "intensity threshold", 0.0..=5.0)?),
            };
            Ok(FilterExpr::Au { who, au, mode, threshold })
        }
        "emotion" => {
            arity(name, pos, &args, 2..=2)?;
            Ok(FilterExpr::Emotion {
                who: ident(&args[0], "a participant")?,
                name: ident(&args[1], "an emotion name")?,
            })
        }
        "mutual" => {
            arity(name, pos, &args, 2..=2)?;
            let mut it = args.into_iter();
            let (a, pa) = operand(it.next().expect("arity checked"), "a filter")?;
            let (b, pb) = operand(it.next().expect("arity checked"), "a filter")?;
            need_bool(&a, pa, "`mutual`")?;
            need_bool(&b, pb, "`mutual`")?;
            Ok(FilterExpr::Mutual(Box::new(a), Box::new(b)))
        }
        "smooth" => {
            arity(name, pos, &args, 1..=3)?;
            let gap = args.get(1).map(|a| count(a, "merge gap")).transpose()?;
            let min = args.get(2).map(|a| count(a, "minimum duration")).transpose()?;
            let (inner, ip) = operand(args.into_iter().next().expect("arity checked"), "a filter")?;
            need_bool(&inner, ip, "`smooth`")?;
            let min = min.unwrap_or(DEFAULT_SMOOTH_MIN);
            if min == 0 {
                return Err(ExprError::Type {
                    pos,
                    message: "minimum duration must be at least 1 frame".into(),
                });
            }
            Ok(FilterExpr::Smooth {
                inner: Box::new(inner),
                gap: gap.unwrap_or(DEFAULT_SMOOTH_GAP),
                min,
            })
        }
        other => Err(ExprError::Syntax {
            pos,
            message: format!("unknown filter `{other}`"),
        }),
    }
}

pub fn parse_filter_expr(text: &str) -> Result<FilterExpr, ExprError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let (e, _) = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("expected end of expression"));
    }
    Ok(e)
}

impl std::str::FromStr for FilterExpr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_filter_expr(s)
    }
}
