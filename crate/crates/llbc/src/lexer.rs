//! Hand-rolled lexer for the textual LLBC syntax.

use std::fmt;

use crate::ast::Pos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `'a`, `'_`
    Lifetime(String),
    Int(u64),
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Lt,
    Gt,
    Le,
    Ge,
    Comma,
    Semi,
    Colon,
    Eq,
    EqEq,
    NotEq,
    Dot,
    Star,
    Amp,
    Bang,
    Plus,
    Minus,
    Percent,
    Arrow,
    FatArrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Lifetime(s) => write!(f, "'{s}"),
            Tok::Int(n) => write!(f, "{n}"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::Lt => write!(f, "<"),
            Tok::Gt => write!(f, ">"),
            Tok::Le => write!(f, "<="),
            Tok::Ge => write!(f, ">="),
            Tok::Comma => write!(f, ","),
            Tok::Semi => write!(f, ";"),
            Tok::Colon => write!(f, ":"),
            Tok::Eq => write!(f, "="),
            Tok::EqEq => write!(f, "=="),
            Tok::NotEq => write!(f, "!="),
            Tok::Dot => write!(f, "."),
            Tok::Star => write!(f, "*"),
            Tok::Amp => write!(f, "&"),
            Tok::Bang => write!(f, "!"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Percent => write!(f, "%"),
            Tok::Arrow => write!(f, "->"),
            Tok::FatArrow => write!(f, "=>"),
            Tok::Eof => write!(f, "<eof>"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lexed {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

pub fn lex(src: &str) -> Result<Vec<Lexed>, LexError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(c) = c {
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    loop {
        let pos = Pos { line, col };
        let Some(&c) = chars.peek() else {
            out.push(Lexed { tok: Tok::Eof, pos });
            return Ok(out);
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                match chars.peek() {
                    Some('/') => {
                        while let Some(&c2) = chars.peek() {
                            if c2 == '\n' {
                                break;
                            }
                            bump!();
                        }
                    }
                    _ => {
                        return Err(LexError { pos, message: "unexpected `/`".into() });
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c2) = chars.peek() {
                    if c2.is_ascii_alphanumeric() || c2 == '_' {
                        s.push(c2);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(Lexed { tok: Tok::Ident(s), pos });
            }
            c if c.is_ascii_digit() => {
                let mut n: u64 = 0;
                while let Some(&c2) = chars.peek() {
                    if c2.is_ascii_digit() {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(c2 as u64 - '0' as u64))
                            .ok_or_else(|| LexError {
                                pos,
                                message: "integer literal too large".into(),
                            })?;
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push(Lexed { tok: Tok::Int(n), pos });
                // A width suffix (i32/u32) lexes as a separate Ident; the
                // parser joins them.
            }
            '\'' => {
                bump!();
                let mut s = String::new();
                while let Some(&c2) = chars.peek() {
                    if c2.is_ascii_alphanumeric() || c2 == '_' {
                        s.push(c2);
                        bump!();
                    } else {
                        break;
                    }
                }
                if s.is_empty() {
                    return Err(LexError { pos, message: "expected lifetime name after `'`".into() });
                }
                out.push(Lexed { tok: Tok::Lifetime(s), pos });
            }
            _ => {
                bump!();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    '.' => Tok::Dot,
                    '*' => Tok::Star,
                    '&' => Tok::Amp,
                    '+' => Tok::Plus,
                    '%' => Tok::Percent,
                    '<' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    '=' => match chars.peek() {
                        Some('=') => {
                            bump!();
                            Tok::EqEq
                        }
                        Some('>') => {
                            bump!();
                            Tok::FatArrow
                        }
                        _ => Tok::Eq,
                    },
                    '!' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::NotEq
                        } else {
                            Tok::Bang
                        }
                    }
                    '-' => {
                        if chars.peek() == Some(&'>') {
                            bump!();
                            Tok::Arrow
                        } else {
                            Tok::Minus
                        }
                    }
                    other => {
                        return Err(LexError {
                            pos,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                };
                out.push(Lexed { tok, pos });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|l| l.tok).collect()
    }

    #[test]
    fn lexes_symbols_and_idents() {
        assert_eq!(
            toks("fn f<'a>() -> (r: i32) { r = 0i32; }"),
            vec![
                Tok::Ident("fn".into()),
                Tok::Ident("f".into()),
                Tok::Lt,
                Tok::Lifetime("a".into()),
                Tok::Gt,
                Tok::LParen,
                Tok::RParen,
                Tok::Arrow,
                Tok::LParen,
                Tok::Ident("r".into()),
                Tok::Colon,
                Tok::Ident("i32".into()),
                Tok::RParen,
                Tok::LBrace,
                Tok::Ident("r".into()),
                Tok::Eq,
                Tok::Int(0),
                Tok::Ident("i32".into()),
                Tok::Semi,
                Tok::RBrace,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn distinguishes_compound_operators() {
        assert_eq!(
            toks("== = => -> - != ! <= <"),
            vec![
                Tok::EqEq,
                Tok::Eq,
                Tok::FatArrow,
                Tok::Arrow,
                Tok::Minus,
                Tok::NotEq,
                Tok::Bang,
                Tok::Le,
                Tok::Lt,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn tracks_positions_across_lines() {
        let ls = lex("fn\n  x").unwrap();
        assert_eq!(ls[0].pos, Pos { line: 1, col: 1 });
        assert_eq!(ls[1].pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(toks("a // b c\n d"), vec![Tok::Ident("a".into()), Tok::Ident("d".into()), Tok::Eof]);
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(lex("a $ b").is_err());
    }
}
