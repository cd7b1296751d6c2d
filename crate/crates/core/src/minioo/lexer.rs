use super::ast::Span;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Doc(String),
    /// One- or two-character operator / punctuation.
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug)]
pub struct LexError {
    pub line: usize,
    pub message: String,
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", "<", ">", ",", ";", ":", ".", "=", "+", "-", "*",
    "/", "%", "!",
];

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let start_line = line;
        if c == b'\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            let is_doc = src[i..].starts_with("/**") && !src[i..].starts_with("/**/");
            let Some(end) = src[i + 2..].find("*/") else {
                return Err(LexError { line, message: "unterminated comment".into() });
            };
            let stop = i + 2 + end + 2;
            line += src[i..stop].matches('\n').count();
            if is_doc {
                out.push(Token {
                    tok: Tok::Doc(src[i..stop].to_string()),
                    span: Span { start, end: stop, line: start_line },
                });
            }
            i = stop;
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            if is_float {
                Tok::Float(
                    text.parse().map_err(|_| LexError { line, message: format!("invalid float literal `{text}`") })?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| LexError { line, message: format!("integer literal `{text}` out of range") })?,
                )
            }
        } else if c == b'"' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = src[i..].chars().next() else {
                    return Err(LexError { line: start_line, message: "unterminated string literal".into() });
                };
                i += ch.len_utf8();
                match ch {
                    '"' => break,
                    '\n' => return Err(LexError { line: start_line, message: "unterminated string literal".into() }),
                    '\\' => {
                        let esc = src[i..].chars().next();
                        i += esc.map_or(0, char::len_utf8);
                        s.push(match esc {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            other => {
                                return Err(LexError {
                                    line,
                                    message: format!("unknown escape `\\{}`", other.unwrap_or(' ')),
                                })
                            }
                        });
                    }
                    other => s.push(other),
                }
            }
            Tok::Str(s)
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += sym.len();
            Tok::Sym(sym)
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(LexError { line, message: format!("unexpected character `{ch}`") });
        };
        out.push(Token { tok, span: Span { start, end: i, line: start_line } });
    }
    out.push(Token { tok: Tok::Eof, span: Span { start: src.len(), end: src.len(), line } });
    Ok(out)
}
