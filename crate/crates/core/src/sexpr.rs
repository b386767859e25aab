//! S-expression reader with source positions.

use std::fmt;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SexpKind {
    Int(i64),
    Str(Rc<str>),
    Bool(bool),
    Symbol(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub pos: Pos,
}

impl Sexp {
    pub fn as_symbol(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(items) => Some(items),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            chars: src.chars().peekable(),
            pos: Pos { line: 1, col: 1 },
        }
    }

    fn err<T>(&self, pos: Pos, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            pos,
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<Sexp>, SyntaxError> {
        self.skip_ws();
        let pos = self.pos;
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' | '[' => {
                self.bump();
                let close = if c == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        None => return self.err(pos, "unbalanced parenthesis"),
                        Some(&c) if c == close => {
                            self.bump();
                            break;
                        }
                        Some(&c) if c == ')' || c == ']' => return self.err(self.pos, format!("mismatched `{c}`")),
                        Some(_) => {
                            let item = self.read()?.expect("peeked a character");
                            items.push(item);
                        }
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::List(items),
                    pos,
                }))
            }
            ')' | ']' => self.err(pos, format!("unexpected `{c}`")),
            '\'' => {
                self.bump();
                let Some(quoted) = self.read()? else {
                    return self.err(pos, "quote at end of input");
                };
                let q = Sexp {
                    kind: SexpKind::Symbol("quote".into()),
                    pos,
                };
                Ok(Some(Sexp {
                    kind: SexpKind::List(vec![q, quoted]),
                    pos,
                }))
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return self.err(pos, "unterminated string"),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c @ ('\\' | '"')) => s.push(c),
                            Some(c) => return self.err(self.pos, format!("unknown escape `\\{c}`")),
                            None => return self.err(pos, "unterminated string"),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Str(s.into()),
                    pos,
                }))
            }
            _ => {
                let mut tok = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | '\'' | '"' | ';') {
                        break;
                    }
                    tok.push(c);
                    self.bump();
                }
                Ok(Some(Sexp {
                    kind: atom_kind(&tok, pos)?,
                    pos,
                }))
            }
        }
    }
}

fn atom_kind(tok: &str, pos: Pos) -> Result<SexpKind, SyntaxError> {
    match tok {
        "#t" | "#true" => return Ok(SexpKind::Bool(true)),
        "#f" | "#false" => return Ok(SexpKind::Bool(false)),
        _ => {}
    }
    let digits = tok.strip_prefix(['-', '+']).unwrap_or(tok);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return tok.parse().map(SexpKind::Int).map_err(|_| SyntaxError {
            pos,
            message: format!("integer literal `{tok}` out of range"),
        });
    }
    if tok.starts_with('#') {
        return Err(SyntaxError {
            pos,
            message: format!("unsupported token `{tok}`"),
        });
    }
    Ok(SexpKind::Symbol(tok.to_string()))
}

/// Reads every top-level S-expression in `src`.
pub fn read_all(src: &str) -> Result<Vec<Sexp>, SyntaxError> {
    let mut reader = Reader::new(src);
    let mut out = Vec::new();
    while let Some(s) = reader.read()? {
        out.push(s);
    }
    Ok(out)
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SexpKind::Int(n) => write!(f, "{n}"),
            SexpKind::Str(s) => write!(f, "{s:?}"),
            SexpKind::Bool(true) => write!(f, "#t"),
            SexpKind::Bool(false) => write!(f, "#f"),
            SexpKind::Symbol(s) => write!(f, "{s}"),
            SexpKind::List(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
        }
    }
}
