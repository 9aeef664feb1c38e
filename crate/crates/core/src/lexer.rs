//! Tokenizer shared by the protocol, flow, invariant and lemma formats.

use crate::ast::Span;
use crate::diag::Diagnostics;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Number(u32),
    Str(String),
    Colon,
    Semi,
    Comma,
    Dot,
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Assign,
    Eq,
    Ne,
    And,
    Or,
    Bang,
    Arrow,
    Fire,
    Lt,
    Minus,
    Plus,
    Star,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Assign => ":=",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::And => "&",
            Tok::Or => "|",
            Tok::Bang => "!",
            Tok::Arrow => "->",
            Tok::Fire => "==>",
            Tok::Lt => "<",
            Tok::Minus => "-",
            Tok::Plus => "+",
            Tok::Star => "*",
            _ => "?",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostics> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;
    while pos < bytes.len() {
        let c = bytes[pos];
        if c == b'\n' {
            pos += 1;
            line += 1;
            line_start = pos;
            continue;
        }
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if c == b'-' && bytes.get(pos + 1) == Some(&b'-') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        let col = (start - line_start) as u32 + 1;
        let span_to = |end: usize| Span {
            start,
            end,
            line,
            col,
        };
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            Tok::Ident(src[start..pos].to_string())
        } else if c.is_ascii_digit() {
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            let text = &src[start..pos];
            match text.parse::<u32>() {
                Ok(n) => Tok::Number(n),
                Err(_) => {
                    return Err(Diagnostics::single(
                        format!("integer literal `{text}` out of range"),
                        span_to(pos),
                    ))
                }
            }
        } else if c == b'"' {
            pos += 1;
            while pos < bytes.len() && bytes[pos] != b'"' && bytes[pos] != b'\n' {
                pos += 1;
            }
            if pos >= bytes.len() || bytes[pos] != b'"' {
                return Err(Diagnostics::single(
                    "unterminated string literal",
                    span_to(pos),
                ));
            }
            pos += 1;
            Tok::Str(src[start + 1..pos - 1].to_string())
        } else {
            let next = bytes.get(pos + 1).copied();
            let next2 = bytes.get(pos + 2).copied();
            let (t, len) = match (c, next, next2) {
                (b':', Some(b'='), _) => (Tok::Assign, 2),
                (b'=', Some(b'='), Some(b'>')) => (Tok::Fire, 3),
                (b'!', Some(b'='), _) => (Tok::Ne, 2),
                (b'-', Some(b'>'), _) => (Tok::Arrow, 2),
                (b':', _, _) => (Tok::Colon, 1),
                (b';', _, _) => (Tok::Semi, 1),
                (b',', _, _) => (Tok::Comma, 1),
                (b'.', _, _) => (Tok::Dot, 1),
                (b'[', _, _) => (Tok::LBracket, 1),
                (b']', _, _) => (Tok::RBracket, 1),
                (b'(', _, _) => (Tok::LParen, 1),
                (b')', _, _) => (Tok::RParen, 1),
                (b'{', _, _) => (Tok::LBrace, 1),
                (b'}', _, _) => (Tok::RBrace, 1),
                (b'=', _, _) => (Tok::Eq, 1),
                (b'&', _, _) => (Tok::And, 1),
                (b'|', _, _) => (Tok::Or, 1),
                (b'!', _, _) => (Tok::Bang, 1),
                (b'<', _, _) => (Tok::Lt, 1),
                (b'-', _, _) => (Tok::Minus, 1),
                (b'+', _, _) => (Tok::Plus, 1),
                (b'*', _, _) => (Tok::Star, 1),
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(Diagnostics::single(
                        format!("unexpected character `{ch}`"),
                        span_to(start + ch.len_utf8()),
                    ));
                }
            };
            pos += len;
            t
        };
        out.push(Token {
            tok,
            span: span_to(pos),
        });
    }
    let col = (pos - line_start) as u32 + 1;
    out.push(Token {
        tok: Tok::Eof,
        span: Span {
            start: pos,
            end: pos,
            line,
            col,
        },
    });
    Ok(out)
}
