//! C/C++ function lexer producing sequences over a fixed, minimal vocabulary.
//!
//! Comments and preprocessor lines are dropped. Identifiers and string,
//! character and float literals collapse to placeholders. Integer literals
//! are spelled out one decimal digit per token, with hexadecimal, octal and
//! binary literals converted to their decimal value first. Common library
//! types and calls map to a handful of generic tokens.

mod table;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use table::{
    build_token_table, Category, TokenEntry, TokenId, TokenTable, CHAR_LIT, FLOAT_LIT, IDENT, PAD,
    STR_LIT, VOCAB_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LexErrorKind {
    UnexpectedByte(u8),
    UnterminatedComment,
    UnterminatedString,
    UnterminatedChar,
    MalformedNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("lex error at byte {offset}: {kind:?}")]
pub struct LexError {
    pub offset: usize,
    pub kind: LexErrorKind,
}

/// Digest of a token sequence; the deduplication key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceHash(pub u64);

impl SourceHash {
    /// First 8 bytes (big-endian) of SHA-256 over the token id bytes.
    pub fn of(tokens: &[TokenId]) -> Self {
        let mut hasher = Sha256::new();
        for t in tokens {
            hasher.update([t.get()]);
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        SourceHash(u64::from_be_bytes(head))
    }
}

impl fmt::Display for SourceHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexedFunction {
    tokens: Vec<TokenId>,
    hash: SourceHash,
}

impl LexedFunction {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        let hash = SourceHash::of(&tokens);
        Self { tokens, hash }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn hash(&self) -> SourceHash {
        self.hash
    }
}

/// Space-separated symbolic names.
pub fn render(lexed: &LexedFunction) -> String {
    let table = build_token_table();
    let names: Vec<&str> = lexed.tokens().iter().map(|&t| table.name(t)).collect();
    names.join(" ")
}

/// One line of the lexed-output file: `<id>\t<space-separated token ids>`.
pub fn format_lexed_line(id: &str, lexed: &LexedFunction) -> String {
    let ids: Vec<String> = lexed.tokens().iter().map(|t| t.to_string()).collect();
    format!("{id}\t{}", ids.join(" "))
}

/// Inverse of [`format_lexed_line`]. Returns `None` on malformed input.
pub fn parse_lexed_line(line: &str) -> Option<(String, LexedFunction)> {
    let (id, rest) = line.split_once('\t')?;
    let tokens = rest
        .split_ascii_whitespace()
        .map(|s| s.parse::<u8>().ok().and_then(TokenId::new))
        .collect::<Option<Vec<_>>>()?;
    Some((id.to_string(), LexedFunction::new(tokens)))
}

pub fn lex(source: &str) -> Result<LexedFunction, LexError> {
    Lexer::new(source).run().map(LexedFunction::new)
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line_start: bool,
    table: &'static TokenTable,
    out: Vec<TokenId>,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c)
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Self {
        Self {
            src: source.as_bytes(),
            pos: 0,
            line_start: true,
            table: build_token_table(),
            out: Vec::new(),
        }
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn err(&self, offset: usize, kind: LexErrorKind) -> LexError {
        LexError { offset, kind }
    }

    /// Length of a backslash-newline at `at`, or 0.
    fn continuation_len(&self, at: usize) -> usize {
        match (self.src.get(at), self.src.get(at + 1), self.src.get(at + 2)) {
            (Some(b'\\'), Some(b'\n'), _) => 2,
            (Some(b'\\'), Some(b'\r'), Some(b'\n')) => 3,
            _ => 0,
        }
    }

    fn run(mut self) -> Result<Vec<TokenId>, LexError> {
        while let Some(b) = self.peek(0) {
            if is_space(b) {
                if b == b'\n' {
                    self.line_start = true;
                }
                self.pos += 1;
                continue;
            }
            let cont = self.continuation_len(self.pos);
            if cont > 0 {
                self.pos += cont;
                continue;
            }
            match b {
                b'#' if self.line_start => self.skip_line(),
                b'/' if self.peek(1) == Some(b'/') => self.skip_line(),
                b'/' if self.peek(1) == Some(b'*') => self.skip_block_comment()?,
                _ => {
                    self.line_start = false;
                    self.token(b)?;
                }
            }
        }
        Ok(self.out)
    }

    /// Skips to the end of the logical line, honouring backslash continuations.
    fn skip_line(&mut self) {
        while let Some(b) = self.peek(0) {
            let cont = self.continuation_len(self.pos);
            if cont > 0 {
                self.pos += cont;
                continue;
            }
            if b == b'\n' {
                return;
            }
            self.pos += 1;
        }
    }

    fn skip_block_comment(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 2;
        while self.pos + 1 < self.src.len() {
            if self.src[self.pos] == b'*' && self.src[self.pos + 1] == b'/' {
                self.pos += 2;
                return Ok(());
            }
            self.pos += 1;
        }
        Err(self.err(start, LexErrorKind::UnterminatedComment))
    }

    fn token(&mut self, b: u8) -> Result<(), LexError> {
        if is_ident_start(b) {
            return self.word();
        }
        if b.is_ascii_digit() || (b == b'.' && self.peek(1).is_some_and(|c| c.is_ascii_digit())) {
            return self.number();
        }
        match b {
            b'"' => {
                self.quoted(b'"')?;
                self.out.push(self.table.str_lit());
                Ok(())
            }
            b'\'' => {
                self.quoted(b'\'')?;
                self.out.push(self.table.char_lit());
                Ok(())
            }
            _ => self.punct(),
        }
    }

    fn word(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        while self.peek(0).is_some_and(is_ident_continue) {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match (word, self.peek(0)) {
            ("L" | "u" | "U" | "u8", Some(q @ (b'"' | b'\''))) => {
                self.quoted(q)?;
                let tok = if q == b'"' {
                    self.table.str_lit()
                } else {
                    self.table.char_lit()
                };
                self.out.push(tok);
            }
            ("R" | "LR" | "uR" | "UR" | "u8R", Some(b'"')) => {
                self.raw_string(start)?;
                self.out.push(self.table.str_lit());
            }
            _ => {
                let tok = self.table.word(word).unwrap_or(self.table.ident());
                self.out.push(tok);
            }
        }
        Ok(())
    }

    /// Consumes a quoted literal starting at the opening quote.
    fn quoted(&mut self, quote: u8) -> Result<(), LexError> {
        let start = self.pos;
        let kind = if quote == b'"' {
            LexErrorKind::UnterminatedString
        } else {
            LexErrorKind::UnterminatedChar
        };
        self.pos += 1;
        loop {
            match self.peek(0) {
                None | Some(b'\n') => return Err(self.err(start, kind)),
                Some(b'\\') => {
                    // an escaped newline is a line continuation inside the literal
                    if self.peek(1).is_none() {
                        return Err(self.err(start, kind));
                    }
                    self.pos += 2;
                }
                Some(c) if c == quote => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    /// `R"delim( ... )delim"`; `self.pos` is at the opening quote.
    fn raw_string(&mut self, start: usize) -> Result<(), LexError> {
        let unterminated = self.err(start, LexErrorKind::UnterminatedString);
        let open = self.pos + 1;
        let paren = self.src[open..]
            .iter()
            .take(17)
            .position(|&c| c == b'(')
            .ok_or(unterminated)?;
        let delim = &self.src[open..open + paren];
        let mut closing = Vec::with_capacity(delim.len() + 2);
        closing.push(b')');
        closing.extend_from_slice(delim);
        closing.push(b'"');
        let body = open + paren + 1;
        let end = self.src[body..]
            .windows(closing.len())
            .position(|w| w == closing.as_slice())
            .ok_or(unterminated)?;
        self.pos = body + end + closing.len();
        Ok(())
    }

    fn number(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let malformed = self.err(start, LexErrorKind::MalformedNumber);
        let radix_prefix = match (self.peek(0), self.peek(1)) {
            (Some(b'0'), Some(b'x' | b'X')) => Some(16),
            (Some(b'0'), Some(b'b' | b'B')) => Some(2),
            _ => None,
        };

        if let Some(radix) = radix_prefix {
            self.pos += 2;
            let digits = self.take_digits(radix);
            let is_hex_float = radix == 16 && matches!(self.peek(0), Some(b'.' | b'p' | b'P'));
            if is_hex_float {
                self.pos += 1;
                self.take_digits(16);
                self.exponent(b'p');
                self.suffix();
                self.out.push(self.table.float_lit());
                return Ok(());
            }
            if digits.is_empty() {
                return Err(malformed);
            }
            self.suffix();
            self.push_decimal(&to_decimal(&digits, radix));
            return Ok(());
        }

        let digits = self.take_digits(10);
        let mut is_float = false;
        if self.peek(0) == Some(b'.') && self.peek(1) != Some(b'.') {
            is_float = true;
            self.pos += 1;
            self.take_digits(10);
        }
        if self.exponent(b'e') {
            is_float = true;
        }
        self.suffix();
        if is_float {
            self.out.push(self.table.float_lit());
            return Ok(());
        }
        if digits.len() > 1 && digits[0] == 0 {
            if digits.iter().any(|&d| d >= 8) {
                return Err(malformed);
            }
            self.push_decimal(&to_decimal(&digits, 8));
        } else {
            self.push_decimal(&digits);
        }
        Ok(())
    }

    /// Reads digits of `radix`, skipping C++14 `'` separators.
    fn take_digits(&mut self, radix: u32) -> Vec<u8> {
        let mut digits = Vec::new();
        while let Some(c) = self.peek(0) {
            if let Some(d) = (c as char).to_digit(radix) {
                digits.push(d as u8);
                self.pos += 1;
            } else if c == b'\'' && self.peek(1).is_some_and(|n| (n as char).is_digit(radix)) {
                self.pos += 1;
            } else {
                break;
            }
        }
        digits
    }

    /// Consumes `e[+-]ddd` (or `p...` for hex floats) if present.
    fn exponent(&mut self, marker: u8) -> bool {
        let Some(c) = self.peek(0) else { return false };
        if c.to_ascii_lowercase() != marker {
            return false;
        }
        let sign = usize::from(matches!(self.peek(1), Some(b'+' | b'-')));
        if !self.peek(1 + sign).is_some_and(|d| d.is_ascii_digit()) {
            return false;
        }
        self.pos += 1 + sign;
        self.take_digits(10);
        true
    }

    /// Integer/float suffixes (`u`, `ll`, `f`, `i64`, ...) carry no token.
    fn suffix(&mut self) {
        while self.peek(0).is_some_and(is_ident_continue) {
            self.pos += 1;
        }
    }

    fn push_decimal(&mut self, digits: &[u8]) {
        for &d in digits {
            self.out.push(self.table.digit(d));
        }
    }

    fn punct(&mut self) -> Result<(), LexError> {
        for len in (1..=3).rev() {
            let Some(bytes) = self.src.get(self.pos..self.pos + len) else {
                continue;
            };
            let Ok(spelling) = std::str::from_utf8(bytes) else {
                continue;
            };
            if let Some(tok) = self.table.punct(spelling) {
                self.out.push(tok);
                self.pos += len;
                return Ok(());
            }
        }
        let b = self.src[self.pos];
        Err(self.err(self.pos, LexErrorKind::UnexpectedByte(b)))
    }
}

/// Converts big-endian `digits` in `radix` to decimal digits without overflow.
fn to_decimal(digits: &[u8], radix: u32) -> Vec<u8> {
    // little-endian base-10 accumulator
    let mut acc: Vec<u32> = vec![0];
    for &d in digits {
        let mut carry = d as u32;
        for slot in acc.iter_mut() {
            let v = *slot * radix + carry;
            *slot = v % 10;
            carry = v / 10;
        }
        while carry > 0 {
            acc.push(carry % 10);
            carry /= 10;
        }
    }
    while acc.len() > 1 && *acc.last().unwrap() == 0 {
        acc.pop();
    }
    acc.iter().rev().map(|&d| d as u8).collect()
}
