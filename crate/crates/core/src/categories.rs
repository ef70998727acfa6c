//! CCG lexical categories: parsing, printing, and arity.
//!
//! A category is either an atom (`N`, `NP`, `S[dcl]`, `conj`, `,`, …) or a
//! functor `X/Y` (takes `Y` to its right) / `X\Y` (takes `Y` to its left).
//! Unparenthesized slash chains associate left, following CCGBank:
//! `S\NP/NP` means `(S\NP)/NP`. Printing emits the minimal-parenthesis form,
//! so parentheses appear only around functor-shaped arguments.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A CCG category tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    Atom {
        name: String,
        feature: Option<String>,
    },
    /// `X/Y`: result X, argument Y expected to the right.
    Forward(Box<Category>, Box<Category>),
    /// `X\Y`: result X, argument Y expected to the left.
    Backward(Box<Category>, Box<Category>),
}

impl Category {
    pub fn atom(name: &str) -> Category {
        Category::Atom {
            name: name.to_string(),
            feature: None,
        }
    }

    pub fn atom_feat(name: &str, feature: &str) -> Category {
        Category::Atom {
            name: name.to_string(),
            feature: Some(feature.to_string()),
        }
    }

    pub fn forward(result: Category, argument: Category) -> Category {
        Category::Forward(Box::new(result), Box::new(argument))
    }

    pub fn backward(result: Category, argument: Category) -> Category {
        Category::Backward(Box::new(result), Box::new(argument))
    }

    fn is_functor(&self) -> bool {
        !matches!(self, Category::Atom { .. })
    }
}

/// Characters permitted in atom names and features. CCGBank needs the
/// punctuation tags (`,` `.` `:` `;`) as plain atoms.
fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b',' | b':' | b';')
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::CategoryParse {
            offset,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// cat := term (('/'|'\') term)*, folded left.
    fn parse_chain(&mut self) -> Result<Category> {
        let mut cat = self.parse_term()?;
        while let Some(op) = self.peek() {
            if op != b'/' && op != b'\\' {
                break;
            }
            self.pos += 1;
            let arg = self.parse_term()?;
            cat = match op {
                b'/' => Category::forward(cat, arg),
                _ => Category::backward(cat, arg),
            };
        }
        Ok(cat)
    }

    /// term := atom | '(' cat ')'
    fn parse_term(&mut self) -> Result<Category> {
        match self.peek() {
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                let inner = self.parse_chain()?;
                match self.peek() {
                    Some(b')') => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => self.err(open, "unbalanced parenthesis: '(' never closed"),
                }
            }
            Some(b) if is_name_byte(b) => self.parse_atom(),
            Some(b'/') | Some(b'\\') => self.err(self.pos, "empty argument before slash"),
            Some(b) => self.err(self.pos, format!("illegal character {:?}", b as char)),
            None => self.err(self.pos, "expected a category, found end of input"),
        }
    }

    fn parse_atom(&mut self) -> Result<Category> {
        let start = self.pos;
        while self.peek().is_some_and(is_name_byte) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("name bytes are ASCII")
            .to_string();

        let feature = if self.peek() == Some(b'[') {
            let open = self.pos;
            self.pos += 1;
            let fstart = self.pos;
            while self.peek().is_some_and(is_name_byte) {
                self.pos += 1;
            }
            if self.pos == fstart {
                return self.err(fstart, "empty feature");
            }
            if self.peek() != Some(b']') {
                return self.err(open, "unterminated feature: '[' never closed");
            }
            let f = std::str::from_utf8(&self.bytes[fstart..self.pos])
                .expect("feature bytes are ASCII")
                .to_string();
            self.pos += 1;
            Some(f)
        } else {
            None
        };

        Ok(Category::Atom { name, feature })
    }
}

/// Parses a category string. Errors carry the byte offset of the first
/// offending position.
pub fn parse_category(text: &str) -> Result<Category> {
    if !text.is_ascii() {
        let offset = text
            .as_bytes()
            .iter()
            .position(|b| !b.is_ascii())
            .unwrap_or(0);
        return Err(Error::CategoryParse {
            offset,
            message: "non-ASCII byte in category".to_string(),
        });
    }
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let cat = p.parse_chain()?;
    if p.pos != p.bytes.len() {
        return p.err(
            p.pos,
            format!("trailing input {:?}", p.bytes[p.pos] as char),
        );
    }
    Ok(cat)
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Category> {
        parse_category(s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Atom { name, feature } => {
                write!(f, "{name}")?;
                if let Some(feat) = feature {
                    write!(f, "[{feat}]")?;
                }
                Ok(())
            }
            Category::Forward(res, arg) => write_functor(f, res, '/', arg),
            Category::Backward(res, arg) => write_functor(f, res, '\\', arg),
        }
    }
}

fn write_functor(
    f: &mut fmt::Formatter<'_>,
    res: &Category,
    slash: char,
    arg: &Category,
) -> fmt::Result {
    // Left associativity makes result-position parens redundant; only a
    // functor-shaped argument needs them.
    write!(f, "{res}{slash}")?;
    if arg.is_functor() {
        write!(f, "({arg})")
    } else {
        write!(f, "{arg}")
    }
}

/// Minimal-parenthesis canonical string; `parse_category` inverts it.
pub fn print_category(cat: &Category) -> String {
    cat.to_string()
}

/// Number of outermost argument slots: the length of the functor spine from
/// the root toward the final result.
pub fn category_arity(cat: &Category) -> usize {
    match cat {
        Category::Atom { .. } => 0,
        Category::Forward(res, _) | Category::Backward(res, _) => 1 + category_arity(res),
    }
}

/// Outcome of validating a list of tag strings.
#[derive(Debug)]
pub struct TagsetValidation {
    pub total: usize,
    /// (index, offending string, error) for every tag that failed to parse.
    pub failures: Vec<(usize, String, Error)>,
}

impl TagsetValidation {
    pub fn all_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Parses every tag string, collecting failures instead of stopping at the
/// first one.
pub fn validate_tags<'a>(tags: impl IntoIterator<Item = &'a str>) -> TagsetValidation {
    let mut total = 0;
    let mut failures = Vec::new();
    for (i, tag) in tags.into_iter().enumerate() {
        total += 1;
        if let Err(e) = parse_category(tag) {
            failures.push((i, tag.to_string(), e));
        }
    }
    TagsetValidation { total, failures }
}
