//! Tokenizer shared by the descriptor and statement parsers.
//!
//! Newlines are tokens because the descriptor format is line oriented; the
//! statement parser skips them.

use std::fmt;

use super::diag::{Diagnostic, DiagnosticKind, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Numeric literal text, kept verbatim so a leading minus can be folded in.
    Int(String),
    Real(String),
    Str(String),
    Assign,
    Arrow,
    Dot,
    Comma,
    Semi,
    Colon,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Newline,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(s) | Tok::Real(s) => write!(f, "number `{s}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Percent => f.write_str("`%`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Ne => f.write_str("`<>`"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
    /// True when no whitespace separates this token from the previous one.
    pub glued: bool,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let mut glued = false;

    macro_rules! adv {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            out.push(Token { tok: Tok::Newline, pos, glued });
            adv!();
            glued = false;
            continue;
        }
        if c.is_whitespace() {
            adv!();
            glued = false;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                adv!();
            }
            glued = false;
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            adv!();
            adv!();
            loop {
                if i + 1 >= chars.len() {
                    return Err(Diagnostic::new(DiagnosticKind::Syntax, pos, "unterminated comment"));
                }
                if chars[i] == '*' && chars[i + 1] == ')' {
                    adv!();
                    adv!();
                    break;
                }
                adv!();
            }
            glued = false;
            continue;
        }

        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                adv!();
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            let start = i;
            let mut real = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                adv!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                real = true;
                adv!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    adv!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = (i, line, col);
                adv!();
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    adv!();
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    real = true;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        adv!();
                    }
                } else {
                    (i, line, col) = save;
                }
            }
            let text: String = chars[start..i].iter().collect();
            if real {
                Tok::Real(text)
            } else {
                Tok::Int(text)
            }
        } else if c == '\'' {
            adv!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Syntax,
                            pos,
                            "unterminated string literal",
                        ))
                    }
                    Some('\'') => {
                        adv!();
                        break;
                    }
                    Some('$') => {
                        adv!();
                        match chars.get(i) {
                            Some('\'') => s.push('\''),
                            Some('$') => s.push('$'),
                            Some('N') | Some('n') => s.push('\n'),
                            _ => {
                                return Err(Diagnostic::new(
                                    DiagnosticKind::Syntax,
                                    Pos { line, col },
                                    "bad escape in string literal",
                                ))
                            }
                        }
                        adv!();
                    }
                    Some(&ch) => {
                        s.push(ch);
                        adv!();
                    }
                }
            }
            Tok::Str(s)
        } else {
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                (':', Some('=')) => (Tok::Assign, 2),
                ('-', Some('>')) => (Tok::Arrow, 2),
                ('<', Some('=')) => (Tok::Le, 2),
                ('<', Some('>')) => (Tok::Ne, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('.', _) => (Tok::Dot, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                (':', _) => (Tok::Colon, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('%', _) => (Tok::Percent, 1),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                ('=', _) => (Tok::Eq, 1),
                _ => {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Syntax,
                        pos,
                        format!("unexpected character `{c}`"),
                    ))
                }
            };
            for _ in 0..len {
                adv!();
            }
            tok
        };
        out.push(Token { tok, pos, glued });
        glued = true;
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col }, glued: false });
    Ok(out)
}
