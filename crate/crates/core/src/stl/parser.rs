//! Recursive-descent parser for the ASCII STL surface syntax.
//!
//! ```text
//! formula  := implies
//! implies  := or ("->" implies)?
//! or       := and ("|" and)*
//! and      := until ("&" until)*
//! until    := unary ("U" interval unary)?
//! unary    := "!" unary | "G" interval unary | "F" interval unary | "X" unary
//!           | "(" formula ")" | IDENT
//! interval := "[" INT "," INT "]"
//! ```
//!
//! `G`, `F`, `X` and `U` are reserved, as are `true` and `false`. `U` does not
//! chain: `a U[0,1] b U[0,1] c` is rejected and must be parenthesised.

use thiserror::Error;

use super::ast::{Formula, Interval};
use super::predicate::Bindings;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("malformed interval at {line}:{column}: {message}")]
    MalformedInterval {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unbound predicate {name:?} at {line}:{column}")]
    UnboundPredicate {
        name: String,
        line: usize,
        column: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Minus,
    Globally,
    Eventually,
    Next,
    Until,
    True,
    False,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Eof => "end of input".into(),
            other => format!("{other:?}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, SpecError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '!' => Some(Tok::Bang),
            '&' => Some(Tok::Amp),
            '|' => Some(Tok::Pipe),
            _ => None,
        };
        let (tok, len) = if let Some(t) = single {
            (t, 1)
        } else if c == '-' {
            if chars.get(i + 1) == Some(&'>') {
                (Tok::Arrow, 2)
            } else {
                (Tok::Minus, 1)
            }
        } else if c.is_ascii_digit() {
            let start = i;
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let digits: String = chars[start..j].iter().collect();
            let n = digits
                .parse::<u64>()
                .map_err(|_| SpecError::MalformedInterval {
                    line: tline,
                    column: tcol,
                    message: format!("integer {digits} out of range"),
                })?;
            (Tok::Int(n), j - start)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[start..j].iter().collect();
            let tok = match word.as_str() {
                "G" => Tok::Globally,
                "F" => Tok::Eventually,
                "X" => Tok::Next,
                "U" => Tok::Until,
                "true" => Tok::True,
                "false" => Tok::False,
                _ => Tok::Ident(word),
            };
            (tok, j - start)
        } else {
            return Err(SpecError::Syntax {
                line: tline,
                column: tcol,
                message: format!("unexpected character {c:?}"),
            });
        };
        out.push(Token {
            tok,
            line: tline,
            column: tcol,
        });
        i += len;
        col += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'b> {
    tokens: Vec<Token>,
    pos: usize,
    bindings: Option<&'b Bindings>,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, SpecError> {
        let t = self.peek();
        Err(SpecError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SpecError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            let found = self.peek().tok.describe();
            self.syntax(format!("expected {what}, found {found}"))
        }
    }

    fn formula(&mut self) -> Result<Formula, SpecError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Formula, SpecError> {
        let lhs = self.or()?;
        if self.peek().tok == Tok::Arrow {
            self.bump();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, SpecError> {
        let mut lhs = self.and()?;
        while self.peek().tok == Tok::Pipe {
            self.bump();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, SpecError> {
        let mut lhs = self.until()?;
        while self.peek().tok == Tok::Amp {
            self.bump();
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, SpecError> {
        let lhs = self.unary()?;
        if self.peek().tok == Tok::Until {
            self.bump();
            let i = self.interval()?;
            let rhs = self.unary()?;
            if self.peek().tok == Tok::Until {
                return self.syntax("U is not associative; add parentheses");
            }
            return Ok(Formula::until(i, lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, SpecError> {
        let t = self.bump();
        match t.tok {
            Tok::Bang => Ok(Formula::not(self.unary()?)),
            Tok::Next => Ok(Formula::next(self.unary()?)),
            Tok::Globally => {
                let i = self.interval()?;
                Ok(Formula::globally(i, self.unary()?))
            }
            Tok::Eventually => {
                let i = self.interval()?;
                Ok(Formula::eventually(i, self.unary()?))
            }
            Tok::LParen => {
                let f = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::False),
            Tok::Ident(name) => {
                if let Some(b) = self.bindings {
                    if !b.contains(&name) {
                        return Err(SpecError::UnboundPredicate {
                            name,
                            line: t.line,
                            column: t.column,
                        });
                    }
                }
                Ok(Formula::Predicate(name))
            }
            other => Err(SpecError::Syntax {
                line: t.line,
                column: t.column,
                message: format!("expected a formula, found {}", other.describe()),
            }),
        }
    }

    fn interval(&mut self) -> Result<Interval, SpecError> {
        let open = self.peek().clone();
        self.expect(Tok::LBracket, "'[' to open an interval")?;
        let a = self.bound(&open)?;
        self.expect(Tok::Comma, "',' in interval")?;
        let b = self.bound(&open)?;
        self.expect(Tok::RBracket, "']' to close an interval")?;
        Interval::new(a, b).ok_or_else(|| SpecError::MalformedInterval {
            line: open.line,
            column: open.column,
            message: format!("start {a} exceeds end {b}"),
        })
    }

    fn bound(&mut self, open: &Token) -> Result<usize, SpecError> {
        match self.peek().tok.clone() {
            Tok::Int(n) => {
                self.bump();
                usize::try_from(n).map_err(|_| SpecError::MalformedInterval {
                    line: open.line,
                    column: open.column,
                    message: format!("bound {n} out of range"),
                })
            }
            Tok::Minus => Err(SpecError::MalformedInterval {
                line: open.line,
                column: open.column,
                message: "interval bounds must be non-negative".into(),
            }),
            other => self.syntax(format!(
                "expected an integer bound, found {}",
                other.describe()
            )),
        }
    }
}

fn parse_with(text: &str, bindings: Option<&Bindings>) -> Result<Formula, SpecError> {
    let mut p = Parser {
        tokens: lex(text)?,
        pos: 0,
        bindings,
    };
    let f = p.formula()?;
    if p.peek().tok != Tok::Eof {
        let found = p.peek().tok.describe();
        return p.syntax(format!("unexpected {found} after formula"));
    }
    Ok(f)
}

/// Parses `text` and checks that every predicate is bound.
pub fn parse_spec(text: &str, bindings: &Bindings) -> Result<Formula, SpecError> {
    parse_with(text, Some(bindings))
}

/// Parses `text` without resolving predicate names.
pub fn parse_formula(text: &str) -> Result<Formula, SpecError> {
    parse_with(text, None)
}
