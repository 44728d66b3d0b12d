use thiserror::Error;

use super::{BinOp, Coord, Func, Node, NodeKind, Span};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty potential expression")]
    Empty,
    #[error("syntax error at byte {offset}: found {found}, expected one of [{}]", expected.join(", "))]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{name}` at byte {offset}; declared parameters: [{}]", declared.join(", "))]
    UnknownIdentifier {
        name: String,
        offset: usize,
        declared: Vec<String>,
    },
    #[error("parameter name `{0}` collides with a coordinate or function name")]
    ReservedParameter(String),
    #[error("invalid numeric literal `{text}` at byte {offset}")]
    BadNumber { text: String, offset: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: Span,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match b {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            i += 1;
            out.push(Token {
                tok,
                span: Span::new(start, i),
            });
            continue;
        }
        if b.is_ascii_digit() || b == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::BadNumber {
                text: text.to_owned(),
                offset: start,
            })?;
            if !value.is_finite() {
                return Err(ParseError::BadNumber {
                    text: text.to_owned(),
                    offset: start,
                });
            }
            out.push(Token {
                tok: Tok::Num(value),
                span: Span::new(start, i),
            });
            continue;
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_owned()),
                span: Span::new(start, i),
            });
            continue;
        }
        // Non-ASCII or stray punctuation.
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(ParseError::Syntax {
            offset: start,
            found: format!("character `{ch}`"),
            expected: expected(&["number", "identifier", "`(`", "`-`"]),
        });
    }
    out.push(Token {
        tok: Tok::End,
        span: Span::new(src.len(), src.len()),
    });
    Ok(out)
}

fn expected(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    declared: &'a [String],
}

/// Grammar (lowest to highest precedence):
///
/// ```text
/// expr    := term (("+" | "-") term)*
/// term    := unary (("*" | "/") unary)*
/// unary   := "-" unary | power
/// power   := primary ("^" unary)?
/// primary := number | ident | func "(" expr ")" | "(" expr ")"
/// ```
pub(super) fn parse(src: &str, declared: &[String]) -> Result<Node, ParseError> {
    for name in declared {
        if Coord::from_name(name).is_some() || Func::from_name(name).is_some() {
            return Err(ParseError::ReservedParameter(name.clone()));
        }
    }
    let tokens = lex(src)?;
    if tokens.len() == 1 {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        declared,
    };
    let node = p.expr()?;
    match p.peek() {
        Tok::End => Ok(node),
        _ => Err(p.unexpected(&["`+`", "`-`", "`*`", "`/`", "`^`", "end of input"])),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, want: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.span().start,
            found: self.peek().describe(),
            expected: expected(want),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            let span = lhs.span.join(rhs.span);
            lhs = Node::new(NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            let span = lhs.span.join(rhs.span);
            lhs = Node::new(NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Minus {
            let start = self.bump().span;
            let inner = self.unary()?;
            let span = start.join(inner.span);
            return Ok(Node::new(NodeKind::Neg(Box::new(inner)), span));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let exponent = self.unary()?;
        let span = base.span.join(exponent.span);
        Ok(Node::new(
            NodeKind::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)),
            span,
        ))
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::new(NodeKind::Const(v), span))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected(&["`)`", "`+`", "`-`", "`*`", "`/`", "`^`"]));
                }
                let close = self.bump().span;
                // Keep the inner node but widen its span to cover the parentheses.
                Ok(Node::new(inner.kind, span.join(close)))
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected(&["`(`"]));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected(&["`)`", "`+`", "`-`", "`*`", "`/`", "`^`"]));
                    }
                    let close = self.bump().span;
                    return Ok(Node::new(
                        NodeKind::Call(func, Box::new(arg)),
                        span.join(close),
                    ));
                }
                if let Some(coord) = Coord::from_name(&name) {
                    return Ok(Node::new(NodeKind::Var(coord), span));
                }
                if self.declared.iter().any(|d| *d == name) {
                    return Ok(Node::new(NodeKind::Param(name), span));
                }
                Err(ParseError::UnknownIdentifier {
                    name,
                    offset: span.start,
                    declared: self.declared.to_vec(),
                })
            }
            _ => Err(self.unexpected(&["number", "identifier", "`(`", "`-`"])),
        }
    }
}
