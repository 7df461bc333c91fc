//! Tokenizer for the command language (language v1).
//!
//! Keywords are case-sensitive upper-case except `this`, `true`, `false`.
//! `--` starts a comment to end of line. OID literals are `#` followed by a
//! decimal >= 1.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kw {
    Create,
    Class,
    Role,
    Extends,
    For,
    Progress,
    To,
    New,
    Set,
    Call,
    Select,
    From,
    Where,
    Alter,
    Add,
    Replace,
    Method,
    Attribute,
    Constructor,
    Destroy,
    And,
    Or,
    Not,
    Null,
    Ref,
    Int,
    Float,
    String,
    Bool,
    This,
}

fn keyword(text: &str) -> Option<Kw> {
    Some(match text {
        "CREATE" => Kw::Create,
        "CLASS" => Kw::Class,
        "ROLE" => Kw::Role,
        "EXTENDS" => Kw::Extends,
        "FOR" => Kw::For,
        "PROGRESS" => Kw::Progress,
        "TO" => Kw::To,
        "NEW" => Kw::New,
        "SET" => Kw::Set,
        "CALL" => Kw::Call,
        "SELECT" => Kw::Select,
        "FROM" => Kw::From,
        "WHERE" => Kw::Where,
        "ALTER" => Kw::Alter,
        "ADD" => Kw::Add,
        "REPLACE" => Kw::Replace,
        "METHOD" => Kw::Method,
        "ATTRIBUTE" => Kw::Attribute,
        "CONSTRUCTOR" => Kw::Constructor,
        "DESTROY" => Kw::Destroy,
        "AND" => Kw::And,
        "OR" => Kw::Or,
        "NOT" => Kw::Not,
        "NULL" => Kw::Null,
        "REF" => Kw::Ref,
        "INT" => Kw::Int,
        "FLOAT" => Kw::Float,
        "STRING" => Kw::String,
        "BOOL" => Kw::Bool,
        "this" => Kw::This,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Punct {
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Dot,
    Colon,
    /// `:=` (constructor assignment)
    Assign,
    Eq,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
}

impl fmt::Display for Punct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Punct::LBrace => "{",
            Punct::RBrace => "}",
            Punct::LParen => "(",
            Punct::RParen => ")",
            Punct::Semi => ";",
            Punct::Comma => ",",
            Punct::Dot => ".",
            Punct::Colon => ":",
            Punct::Assign => ":=",
            Punct::Eq => "=",
            Punct::EqEq => "==",
            Punct::Ne => "!=",
            Punct::Lt => "<",
            Punct::Le => "<=",
            Punct::Gt => ">",
            Punct::Ge => ">=",
            Punct::Plus => "+",
            Punct::Minus => "-",
            Punct::Star => "*",
            Punct::Slash => "/",
            Punct::Percent => "%",
        };
        f.write_str(s)
    }
}

/// Largest magnitude an integer literal may carry: |i64::MIN|. The parser
/// applies the sign, so `-9223372036854775808` stays representable.
pub const MAX_INT_MAGNITUDE: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Kw(Kw),
    Ident,
    /// Unsigned magnitude; unary minus is folded in by the parser.
    Int(u64),
    Float(f64),
    Str(String),
    Bool(bool),
    OidLit(u64),
    Punct(Punct),
    /// Statement separator candidate; filtered out of `tokenize` output.
    Newline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Raw source slice (escapes undecoded for strings).
    pub text: String,
    pub line: u32,
    pub col: u32,
    /// Byte offsets into the source.
    pub offset: usize,
    pub end: usize,
}

impl Token {
    pub fn is_punct(&self, p: Punct) -> bool {
        self.kind == TokenKind::Punct(p)
    }

    pub fn is_kw(&self, k: Kw) -> bool {
        self.kind == TokenKind::Kw(k)
    }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, line: u32, col: u32, msg: impl Into<String>) -> Error {
        Error::parse(line, col, msg)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.bytes.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.src[self.pos..].chars().next()?;
        self.pos += ch.len_utf8();
        if ch == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(ch)
    }

    fn run(&mut self) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        loop {
            // Skip horizontal whitespace and comments.
            loop {
                match self.peek() {
                    Some(b' ') | Some(b'\t') | Some(b'\r') => {
                        self.bump();
                    }
                    Some(b'-') if self.peek2() == Some(b'-') => {
                        while let Some(c) = self.peek() {
                            if c == b'\n' {
                                break;
                            }
                            self.bump();
                        }
                    }
                    _ => break,
                }
            }
            let (line, col, start) = (self.line, self.col, self.pos);
            let Some(c) = self.peek() else { break };
            let kind = match c {
                b'\n' => {
                    self.bump();
                    TokenKind::Newline
                }
                b'"' => self.string(line, col)?,
                b'#' => self.oid(line, col)?,
                b'0'..=b'9' => self.number(line, col)?,
                b'A'..=b'Z' | b'a'..=b'z' | b'_' => self.word(),
                _ => self.punct(line, col)?,
            };
            let end = self.pos;
            out.push(Token {
                kind,
                text: self.src[start..end].to_string(),
                line,
                col,
                offset: start,
                end,
            });
        }
        Ok(out)
    }

    fn string(&mut self, line: u32, col: u32) -> Result<TokenKind> {
        self.bump(); // opening quote
        let mut value = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err(line, col, "unterminated string literal")),
                Some(b'\n') => {
                    return Err(self.err(line, col, "unterminated string literal (raw newline)"))
                }
                Some(b'"') => {
                    self.bump();
                    return Ok(TokenKind::Str(value));
                }
                Some(b'\\') => {
                    self.bump();
                    let (el, ec) = (self.line, self.col);
                    match self.bump() {
                        Some('\\') => value.push('\\'),
                        Some('"') => value.push('"'),
                        Some('n') => value.push('\n'),
                        Some('t') => value.push('\t'),
                        Some(other) => {
                            return Err(self.err(el, ec, format!("invalid escape `\\{other}`")))
                        }
                        None => return Err(self.err(el, ec, "unterminated string literal")),
                    }
                }
                Some(_) => {
                    let ch = self.bump().unwrap();
                    value.push(ch);
                }
            }
        }
    }

    fn oid(&mut self, line: u32, col: u32) -> Result<TokenKind> {
        self.bump(); // '#'
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.bump();
        }
        let digits = &self.src[start..self.pos];
        if digits.is_empty() {
            return Err(self.err(line, col, "`#` must be followed by decimal digits"));
        }
        let n: u64 = digits
            .parse()
            .map_err(|_| self.err(line, col, "oid literal out of range"))?;
        if n == 0 {
            return Err(self.err(line, col, "oid literal must be >= 1"));
        }
        Ok(TokenKind::OidLit(n))
    }

    fn number(&mut self, line: u32, col: u32) -> Result<TokenKind> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.bump();
        }
        let mut is_float = false;
        // Fractional part only when a digit follows the dot, so `5.x` lexes
        // as INT DOT IDENT.
        if self.peek() == Some(b'.') && matches!(self.peek2(), Some(b'0'..=b'9')) {
            is_float = true;
            self.bump();
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mut la = self.pos + 1;
            if matches!(self.bytes.get(la), Some(b'+') | Some(b'-')) {
                la += 1;
            }
            if matches!(self.bytes.get(la), Some(b'0'..=b'9')) {
                is_float = true;
                self.bump();
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.bump();
                }
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.bump();
                }
            }
        }
        let text = &self.src[start..self.pos];
        if is_float {
            let x: f64 = text
                .parse()
                .map_err(|_| self.err(line, col, "malformed float literal"))?;
            if !x.is_finite() {
                return Err(self.err(line, col, "float literal out of range"));
            }
            Ok(TokenKind::Float(x))
        } else {
            let n: u64 = text
                .parse()
                .map_err(|_| self.err(line, col, "integer literal out of range"))?;
            if n > MAX_INT_MAGNITUDE {
                return Err(self.err(line, col, "integer literal out of range"));
            }
            Ok(TokenKind::Int(n))
        }
    }

    fn word(&mut self) -> TokenKind {
        let start = self.pos;
        while matches!(self.peek(), Some(b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_')) {
            self.bump();
        }
        let text = &self.src[start..self.pos];
        match text {
            "true" => TokenKind::Bool(true),
            "false" => TokenKind::Bool(false),
            _ => match keyword(text) {
                Some(k) => TokenKind::Kw(k),
                None => TokenKind::Ident,
            },
        }
    }

    fn punct(&mut self, line: u32, col: u32) -> Result<TokenKind> {
        let c = self.bump().unwrap();
        let two = |lex: &mut Self, second: u8, yes: Punct, no: Punct| {
            if lex.peek() == Some(second) {
                lex.bump();
                yes
            } else {
                no
            }
        };
        let p = match c {
            '{' => Punct::LBrace,
            '}' => Punct::RBrace,
            '(' => Punct::LParen,
            ')' => Punct::RParen,
            ';' => Punct::Semi,
            ',' => Punct::Comma,
            '.' => Punct::Dot,
            ':' => two(self, b'=', Punct::Assign, Punct::Colon),
            '=' => two(self, b'=', Punct::EqEq, Punct::Eq),
            '<' => two(self, b'=', Punct::Le, Punct::Lt),
            '>' => two(self, b'=', Punct::Ge, Punct::Gt),
            '+' => Punct::Plus,
            '-' => Punct::Minus,
            '*' => Punct::Star,
            '/' => Punct::Slash,
            '%' => Punct::Percent,
            '!' => {
                if self.peek() == Some(b'=') {
                    self.bump();
                    Punct::Ne
                } else {
                    return Err(self.err(line, col, "illegal character `!`"));
                }
            }
            other => return Err(self.err(line, col, format!("illegal character `{other}`"))),
        };
        Ok(TokenKind::Punct(p))
    }
}

/// Tokenize with newline markers kept (used by script parsing).
pub fn tokenize_raw(src: &str) -> Result<Vec<Token>> {
    Lexer::new(src).run()
}

/// Tokenize a source text. Newlines and comments are discarded.
pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    Ok(tokenize_raw(src)?
        .into_iter()
        .filter(|t| t.kind != TokenKind::Newline)
        .collect())
}
