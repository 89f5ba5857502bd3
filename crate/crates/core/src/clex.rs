//! Hand-written C/C++ lexer.
//!
//! Comments and non-ASCII bytes never reach the token stream. Preprocessor
//! directives become a single whole-line `Punctuation` token so later stages
//! can skip them without expanding anything.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Operator,
    Punctuation,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    CharLiteral,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        self.text == text
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Identifier
    }

    /// Whole-line preprocessor directive.
    pub fn is_directive(&self) -> bool {
        self.kind == TokenKind::Punctuation && self.text.starts_with('#')
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum LexError {
    #[error("{path}:{line}: unterminated comment")]
    UnterminatedComment { path: String, line: u32 },
    #[error("{path}:{line}: unterminated string or character literal")]
    UnterminatedStringLiteral { path: String, line: u32 },
    #[error("{path}:{line}: digraphs and trigraphs are not supported")]
    UnsupportedDigraph { path: String, line: u32 },
}

impl LexError {
    pub fn line(&self) -> u32 {
        match self {
            LexError::UnterminatedComment { line, .. }
            | LexError::UnterminatedStringLiteral { line, .. }
            | LexError::UnsupportedDigraph { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub lines: Vec<String>,
    pub tokens: Vec<Token>,
    /// Recoverable problems; the offending line was skipped.
    pub errors: Vec<LexError>,
}

const KEYWORDS: &[&str] = &[
    // C89
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "int", "long", "register", "return",
    "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned",
    "void", "volatile", "while",
    // C99
    "inline", "restrict", "_Bool", "_Complex", "_Imaginary",
    // C++ subset
    "bool", "true", "false", "class", "public", "private", "protected", "virtual", "template",
    "typename", "namespace", "using", "new", "delete", "this", "operator", "friend", "throw",
    "try", "catch", "nullptr", "explicit", "mutable", "static_cast", "dynamic_cast",
    "const_cast", "reinterpret_cast", "wchar_t", "constexpr", "noexcept", "override",
];

const OPERATORS: &[&str] = &[
    "<<=", ">>=", "...", "->*", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::", ".*", "+", "-", "*", "/", "%",
    "=", "<", ">", "!", "~", "&", "|", "^", "?", ":", ".", "#", "@", "$", "\\",
];

const DIGRAPHS: &[&str] = &["<:", ":>", "<%", "%>", "%:"];

pub fn is_keyword(text: &str) -> bool {
    KEYWORDS.contains(&text)
}

struct Lexer<'a> {
    src: Vec<u8>,
    /// Original line/column for every byte of `src`.
    pos: Vec<(u32, u32)>,
    i: usize,
    path: &'a str,
    tokens: Vec<Token>,
    errors: Vec<LexError>,
}

impl<'a> Lexer<'a> {
    fn new(raw: &str, path: &'a str) -> Self {
        let mut src = Vec::with_capacity(raw.len());
        let mut pos = Vec::with_capacity(raw.len());
        for (ln, line) in raw.split('\n').enumerate() {
            if ln > 0 {
                src.push(b'\n');
                pos.push((ln as u32, 0));
            }
            let mut col = 1u32;
            for b in line.bytes() {
                if b.is_ascii() {
                    src.push(b);
                    pos.push((ln as u32 + 1, col));
                    col += 1;
                }
            }
        }
        Lexer { src, pos, i: 0, path, tokens: Vec::new(), errors: Vec::new() }
    }

    fn peek(&self, off: usize) -> u8 {
        self.src.get(self.i + off).copied().unwrap_or(0)
    }

    fn line_at(&self, i: usize) -> u32 {
        self.pos.get(i).map(|p| p.0).unwrap_or_else(|| self.pos.last().map(|p| p.0).unwrap_or(1))
    }

    fn skip_to_next_line(&mut self) {
        while self.i < self.src.len() && self.src[self.i] != b'\n' {
            self.i += 1;
        }
    }

    fn at_line_start(&self) -> bool {
        let mut j = self.i;
        while j > 0 {
            j -= 1;
            match self.src[j] {
                b'\n' => return true,
                b' ' | b'\t' | b'\r' => continue,
                _ => return false,
            }
        }
        true
    }

    fn push(&mut self, start: usize, end: usize, kind: TokenKind) {
        let text = String::from_utf8_lossy(&self.src[start..end]).into_owned();
        let (line, column) = self.pos[start];
        self.tokens.push(Token { text, kind, line, column });
    }

    fn run(mut self) -> (Vec<Token>, Vec<LexError>) {
        while self.i < self.src.len() {
            let c = self.peek(0);
            match c {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.i += 1,
                b'\\' if self.peek(1) == b'\n' || (self.peek(1) == b'\r' && self.peek(2) == b'\n') => {
                    self.i += 2;
                }
                b'/' if self.peek(1) == b'/' => self.skip_to_next_line(),
                b'/' if self.peek(1) == b'*' => self.block_comment(),
                b'#' if self.at_line_start() => self.directive(),
                b'"' | b'\'' => self.quoted(self.i, c),
                b'?' if self.peek(1) == b'?' && b"=/'()!<>-".contains(&self.peek(2)) => {
                    self.digraph_error();
                }
                c if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
                c if c.is_ascii_digit() => self.number(),
                b'.' if self.peek(1).is_ascii_digit() => self.number(),
                _ => self.punct(),
            }
        }
        (self.tokens, self.errors)
    }

    fn digraph_error(&mut self) {
        let line = self.line_at(self.i);
        self.errors.push(LexError::UnsupportedDigraph { path: self.path.to_string(), line });
        self.skip_to_next_line();
    }

    fn block_comment(&mut self) {
        let start = self.i;
        self.i += 2;
        while self.i + 1 < self.src.len() {
            if self.src[self.i] == b'*' && self.src[self.i + 1] == b'/' {
                self.i += 2;
                return;
            }
            self.i += 1;
        }
        let line = self.line_at(start);
        self.errors.push(LexError::UnterminatedComment { path: self.path.to_string(), line });
        // Resume on the line after the comment opener.
        self.i = start;
        self.skip_to_next_line();
    }

    fn directive(&mut self) {
        let start = self.i;
        let mut text = String::new();
        while self.i < self.src.len() {
            let c = self.src[self.i];
            if c == b'\n' {
                break;
            }
            if c == b'\\' && self.peek(1) == b'\n' {
                self.i += 2;
                text.push(' ');
                continue;
            }
            if c == b'/' && self.peek(1) == b'/' {
                self.skip_to_next_line();
                break;
            }
            if c == b'/' && self.peek(1) == b'*' {
                let before = self.errors.len();
                self.block_comment();
                if self.errors.len() > before {
                    break;
                }
                text.push(' ');
                continue;
            }
            text.push(c as char);
            self.i += 1;
        }
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let (line, column) = self.pos[start];
        self.tokens.push(Token { text, kind: TokenKind::Punctuation, line, column });
    }

    fn quoted(&mut self, start: usize, quote: u8) {
        self.i += 1;
        while self.i < self.src.len() {
            match self.src[self.i] {
                b'\\' => self.i += 2,
                b'\n' => break,
                c if c == quote => {
                    self.i += 1;
                    let kind =
                        if quote == b'"' { TokenKind::StringLiteral } else { TokenKind::CharLiteral };
                    self.push(start, self.i, kind);
                    return;
                }
                _ => self.i += 1,
            }
        }
        let line = self.line_at(start);
        self.errors.push(LexError::UnterminatedStringLiteral { path: self.path.to_string(), line });
        self.i = start;
        self.skip_to_next_line();
    }

    fn identifier(&mut self) {
        let start = self.i;
        while self.peek(0).is_ascii_alphanumeric() || self.peek(0) == b'_' {
            self.i += 1;
        }
        let word = &self.src[start..self.i];
        // Encoding prefixes glue onto the following literal.
        if matches!(word, b"L" | b"u" | b"U" | b"u8") && matches!(self.peek(0), b'"' | b'\'') {
            let q = self.peek(0);
            self.quoted(start, q);
            return;
        }
        let text = std::str::from_utf8(word).unwrap_or_default();
        let kind = if is_keyword(text) { TokenKind::Keyword } else { TokenKind::Identifier };
        self.push(start, self.i, kind);
    }

    fn number(&mut self) {
        let start = self.i;
        let mut float = false;
        if self.peek(0) == b'0' && matches!(self.peek(1), b'x' | b'X') {
            self.i += 2;
            while self.peek(0).is_ascii_hexdigit() {
                self.i += 1;
            }
        } else {
            while self.peek(0).is_ascii_digit() {
                self.i += 1;
            }
            if self.peek(0) == b'.' {
                float = true;
                self.i += 1;
                while self.peek(0).is_ascii_digit() {
                    self.i += 1;
                }
            }
            if matches!(self.peek(0), b'e' | b'E')
                && (self.peek(1).is_ascii_digit()
                    || (matches!(self.peek(1), b'+' | b'-') && self.peek(2).is_ascii_digit()))
            {
                float = true;
                self.i += 2;
                while self.peek(0).is_ascii_digit() {
                    self.i += 1;
                }
            }
        }
        while matches!(self.peek(0), b'u' | b'U' | b'l' | b'L' | b'f' | b'F') {
            if matches!(self.peek(0), b'f' | b'F') {
                float = true;
            }
            self.i += 1;
        }
        let kind = if float { TokenKind::FloatLiteral } else { TokenKind::IntLiteral };
        self.push(start, self.i, kind);
    }

    fn punct(&mut self) {
        let start = self.i;
        let c = self.peek(0);
        if matches!(c, b'(' | b')' | b'[' | b']' | b'{' | b'}' | b',' | b';') {
            self.i += 1;
            self.push(start, self.i, TokenKind::Punctuation);
            return;
        }
        let rest = &self.src[self.i..];
        if DIGRAPHS.iter().any(|d| rest.starts_with(d.as_bytes())) && !rest.starts_with(b"<::") {
            self.digraph_error();
            return;
        }
        for op in OPERATORS {
            if rest.starts_with(op.as_bytes()) {
                self.i += op.len();
                self.push(start, self.i, TokenKind::Operator);
                return;
            }
        }
        // Stray control byte or backtick: drop it.
        self.i += 1;
    }
}

/// Lex a whole file. Never fails; recoverable problems land in `errors`.
pub fn lex_file(raw_text: &str, path: &str) -> SourceFile {
    let (tokens, errors) = Lexer::new(raw_text, path).run();
    let lines = if raw_text.is_empty() {
        Vec::new()
    } else {
        raw_text.lines().map(str::to_string).collect()
    };
    SourceFile { path: path.to_string(), lines, tokens, errors }
}

/// Lex a single snippet and return only its tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    Lexer::new(text, "<snippet>").run().0
}

/// Space-joined token text. Re-lexing the result reproduces the same texts.
pub fn join_tokens<'t>(tokens: impl IntoIterator<Item = &'t Token>) -> String {
    tokens.into_iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        tokenize(src).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn seven_tokens_for_symbolic_strcpy() {
        assert_eq!(texts("strcpy(VAR5, VAR2);"), ["strcpy", "(", "VAR5", ",", "VAR2", ")", ";"]);
    }

    #[test]
    fn empty_input() {
        let f = lex_file("", "e.c");
        assert!(f.tokens.is_empty());
        assert!(f.lines.is_empty());
        assert!(f.errors.is_empty());
    }

    #[test]
    fn block_comment_removed() {
        // int | x | = | 5 | ; | x | ++ | ;
        assert_eq!(texts("int x = 5; /* c */ x++;"), ["int", "x", "=", "5", ";", "x", "++", ";"]);
    }

    #[test]
    fn kinds() {
        let toks = tokenize("while (n >= 0x1F) s = \"a\\\"b\" + 'c' + 1.5e3;");
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        use TokenKind::*;
        assert_eq!(
            kinds,
            [
                Keyword, Punctuation, Identifier, Operator, IntLiteral, Punctuation, Identifier,
                Operator, StringLiteral, Operator, CharLiteral, Operator, FloatLiteral, Punctuation
            ]
        );
        assert_eq!(toks[8].text, "\"a\\\"b\"");
    }

    #[test]
    fn keyword_table() {
        assert!(is_keyword("while"));
        assert!(!is_keyword("strcpy"));
        assert!(!is_keyword("VAR1"));
    }

    #[test]
    fn non_ascii_dropped() {
        let f = lex_file("char *s = \"h\u{e9}llo\"; // caf\u{e9}\nint \u{3bb};", "u.c");
        let t: Vec<_> = f.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(t, ["char", "*", "s", "=", "\"hllo\"", ";", "int", ";"]);
        assert!(f.tokens.iter().all(|t| t.text.is_ascii()));
    }

    #[test]
    fn directive_is_one_token() {
        let f = lex_file("#include <stdio.h>\n#define M(a) \\\n  (a+1)\nint x;", "d.c");
        assert_eq!(f.tokens[0].text, "#include <stdio.h>");
        assert_eq!(f.tokens[1].text, "#define M(a) (a+1)");
        assert!(f.tokens[1].is_directive());
        assert_eq!(f.tokens[2].line, 4);
    }

    #[test]
    fn unterminated_comment_recovers_next_line() {
        let f = lex_file("int a; /* open\nint b;", "c.c");
        assert_eq!(f.errors, vec![LexError::UnterminatedComment { path: "c.c".into(), line: 1 }]);
        let t: Vec<_> = f.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(t, ["int", "a", ";", "int", "b", ";"]);
    }

    #[test]
    fn unterminated_string_recovers_next_line() {
        let f = lex_file("puts(\"abc);\nx = 1;", "s.c");
        assert_eq!(f.errors.len(), 1);
        assert_eq!(f.errors[0].line(), 1);
        let t: Vec<_> = f.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(t, ["puts", "(", "x", "=", "1", ";"]);
    }

    #[test]
    fn digraph_rejected() {
        let f = lex_file("int a<:3:>;\nint b;", "g.c");
        assert!(matches!(f.errors[0], LexError::UnsupportedDigraph { line: 1, .. }));
        assert_eq!(f.tokens.last().unwrap().line, 2);
    }

    #[test]
    fn positions_strictly_increase() {
        let f = lex_file("a+=b->c;\n  x[i]++ ;", "p.c");
        for w in f.tokens.windows(2) {
            assert!((w[0].line, w[0].column) < (w[1].line, w[1].column));
        }
        assert_eq!((f.tokens[5].line, f.tokens[5].column), (1, 8));
    }

    #[test]
    fn wide_literal_prefix() {
        assert_eq!(texts("wcscpy(d, L\"ab\");"), ["wcscpy", "(", "d", ",", "L\"ab\"", ")", ";"]);
    }
}
