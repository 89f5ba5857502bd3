//! Brace-matching structure recovery: top-level functions and globals, and a
//! light statement tree for each function body. No full C grammar is needed;
//! only the control constructs that shape reaching definitions.

use crate::clex::{is_keyword, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnitKind {
    Simple,
    /// Condition of `if`/`while`/`switch`, or the parenthesised `for` header.
    Header,
    For,
    FunctionHeader,
    Return,
    Case,
    Jump,
}

#[derive(Debug, Clone)]
pub(crate) struct Unit {
    pub tokens: Vec<Token>,
    pub kind: UnitKind,
    /// Enclosing mutually exclusive arms: (construct id, arm index).
    pub arms: Vec<(u32, u16)>,
}

impl Unit {
    pub fn line(&self) -> u32 {
        self.tokens.first().map(|t| t.line).unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Unit(usize),
    Block(Vec<Node>),
    If { header: usize, then: Box<Node>, els: Option<Box<Node>> },
    Loop { header: usize, body: Box<Node>, test_after: bool },
    Switch { header: usize, items: Vec<Node> },
    Case(usize),
    Return(usize),
    Break(Option<usize>),
    Continue(Option<usize>),
}

#[derive(Debug, Clone)]
pub(crate) struct ParsedFunction {
    pub name: String,
    pub name_line: u32,
    pub params: Vec<String>,
    pub header: usize,
    pub body: Node,
}

#[derive(Debug, Default)]
pub(crate) struct ParsedFile {
    pub units: Vec<Unit>,
    pub globals: Vec<usize>,
    pub functions: Vec<ParsedFunction>,
}

/// Index of the bracket matching `toks[open]`, if any.
pub(crate) fn matching(toks: &[Token], open: usize) -> Option<usize> {
    let (o, c) = match toks[open].text.as_str() {
        "(" => ("(", ")"),
        "[" => ("[", "]"),
        "{" => ("{", "}"),
        _ => return None,
    };
    let mut depth = 0usize;
    for (j, t) in toks.iter().enumerate().skip(open) {
        if t.is(o) {
            depth += 1;
        } else if t.is(c) {
            depth -= 1;
            if depth == 0 {
                return Some(j);
            }
        }
    }
    None
}

/// First unbalanced brace (line of the offending token), ignoring directives.
pub(crate) fn brace_imbalance(toks: &[Token]) -> Option<u32> {
    let mut stack = Vec::new();
    for t in toks {
        if t.is("{") {
            stack.push(t.line);
        } else if t.is("}") && stack.pop().is_none() {
            return Some(t.line);
        }
    }
    stack.pop()
}

const FN_QUALIFIERS: &[&str] = &["const", "noexcept", "override", "final", "volatile"];

/// If `chunk` (tokens since the last top-level `;`/`}`) is a function
/// signature, return (name index, open paren, close paren).
fn function_signature(chunk: &[Token]) -> Option<(usize, usize, usize)> {
    if chunk.iter().any(|t| t.is("=") || t.is("typedef")) {
        return None;
    }
    let mut i = 0;
    while i < chunk.len() {
        if chunk[i].is("(") && i > 0 && chunk[i - 1].is_ident() {
            let close = matching(chunk, i)?;
            let mut k = close + 1;
            while k < chunk.len() && FN_QUALIFIERS.contains(&chunk[k].text.as_str()) {
                k += 1;
            }
            // Constructor initialiser list or trailing return type.
            let tail_ok = k == chunk.len()
                || chunk[k].is(":")
                || chunk[k].is("->")
                || (chunk[k].is("throw") && chunk.get(k + 1).is_some_and(|t| t.is("(")));
            return tail_ok.then_some((i - 1, i, close));
        }
        if chunk[i].is("(") {
            i = matching(chunk, i)? + 1;
        } else {
            i += 1;
        }
    }
    None
}

/// Split `toks` on `sep` at bracket depth zero.
pub(crate) fn split_top(toks: &[Token], sep: &str) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (j, t) in toks.iter().enumerate() {
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            s if s == sep && depth == 0 => {
                out.push(start..j);
                start = j + 1;
            }
            _ => {}
        }
    }
    out.push(start..toks.len());
    out
}

fn param_name(p: &[Token]) -> Option<String> {
    // Default argument.
    let p = match p.iter().position(|t| t.is("=")) {
        Some(e) => &p[..e],
        None => p,
    };
    let mut depth = 0;
    let mut last = None;
    for t in p {
        match t.text.as_str() {
            "(" | "[" => depth += 1,
            ")" | "]" => depth -= 1,
            _ if depth == 0 && t.is_ident() => last = Some(t.text.clone()),
            _ => {}
        }
    }
    if last.is_none() {
        // Function-pointer parameter: `int (*cb)(int)`.
        for w in p.windows(2) {
            if (w[0].is("*") || w[0].is("&")) && w[1].is_ident() {
                return Some(w[1].text.clone());
            }
        }
    }
    // A lone type name such as `size_t` is not a parameter name.
    let named = p.iter().filter(|t| t.is_ident() || is_keyword(&t.text)).count() >= 2
        || p.iter().any(|t| t.is("*") || t.is("&") || t.is("["));
    last.filter(|_| named)
}

pub(crate) fn parse_params(inner: &[Token]) -> Vec<String> {
    if inner.is_empty() || (inner.len() == 1 && inner[0].is("void")) {
        return Vec::new();
    }
    split_top(inner, ",")
        .into_iter()
        .filter_map(|r| param_name(&inner[r]))
        .collect()
}

pub(crate) fn parse_file(tokens: &[Token]) -> ParsedFile {
    let toks: Vec<Token> = tokens.iter().filter(|t| !t.is_directive()).cloned().collect();
    let mut out = ParsedFile::default();
    let mut arm_counter = 0u32;
    let mut i = 0;
    let mut chunk_start = 0;
    while i < toks.len() {
        let t = &toks[i];
        if t.is(";") {
            if i > chunk_start {
                out.units.push(Unit {
                    tokens: toks[chunk_start..=i].to_vec(),
                    kind: UnitKind::Simple,
                    arms: Vec::new(),
                });
                out.globals.push(out.units.len() - 1);
            }
            i += 1;
            chunk_start = i;
        } else if t.is("{") {
            let chunk = &toks[chunk_start..i];
            let close = matching(&toks, i).unwrap_or(toks.len() - 1);
            if let Some((name_i, open, cl)) = function_signature(chunk) {
                let params = parse_params(&chunk[open + 1..cl]);
                out.units.push(Unit {
                    tokens: chunk[..=cl].to_vec(),
                    kind: UnitKind::FunctionHeader,
                    arms: Vec::new(),
                });
                let header = out.units.len() - 1;
                let body_toks = &toks[i + 1..close];
                let mut p = BodyParser { toks: body_toks, i: 0, units: &mut out.units, arms: &mut arm_counter };
                let items = p.block_items(&[]);
                out.functions.push(ParsedFunction {
                    name: chunk[name_i].text.clone(),
                    name_line: chunk[name_i].line,
                    params,
                    header,
                    body: Node::Block(items),
                });
                i = close + 1;
                chunk_start = i;
            } else if chunk.iter().any(|t| t.is("namespace"))
                || (chunk.len() == 2 && chunk[0].is("extern"))
            {
                // Transparent scope; its closing brace is skipped below.
                i += 1;
                chunk_start = i;
            } else {
                // Aggregate body or initialiser: part of the current chunk.
                i = close + 1;
            }
        } else if t.is("}") {
            i += 1;
            chunk_start = i;
        } else {
            i += 1;
        }
    }
    out
}

struct BodyParser<'a> {
    toks: &'a [Token],
    i: usize,
    units: &'a mut Vec<Unit>,
    arms: &'a mut u32,
}

impl BodyParser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.i)
    }

    fn push(&mut self, tokens: Vec<Token>, kind: UnitKind, arms: &[(u32, u16)]) -> usize {
        self.units.push(Unit { tokens, kind, arms: arms.to_vec() });
        self.units.len() - 1
    }

    fn block_items(&mut self, arms: &[(u32, u16)]) -> Vec<Node> {
        let mut items = Vec::new();
        while self.i < self.toks.len() {
            if self.toks[self.i].is("}") {
                self.i += 1;
                break;
            }
            if let Some(n) = self.statement(arms) {
                items.push(n);
            }
        }
        items
    }

    /// Parenthesised group starting at the cursor (inclusive).
    fn paren_group(&mut self) -> Vec<Token> {
        if !self.peek().is_some_and(|t| t.is("(")) {
            return Vec::new();
        }
        let close = matching(self.toks, self.i).unwrap_or(self.toks.len() - 1);
        let g = self.toks[self.i..=close].to_vec();
        self.i = close + 1;
        g
    }

    /// Tokens up to and including the terminating `;` at depth zero.
    fn simple_tokens(&mut self) -> Vec<Token> {
        let start = self.i;
        let mut depth = 0i32;
        let mut saw_assign = false;
        while self.i < self.toks.len() {
            let t = &self.toks[self.i];
            match t.text.as_str() {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "=" => saw_assign = true,
                "{" if depth == 0 && !saw_assign => break,
                "{" => {
                    self.i = matching(self.toks, self.i).unwrap_or(self.toks.len() - 1) + 1;
                    continue;
                }
                "}" if depth <= 0 => break,
                ";" if depth <= 0 => {
                    self.i += 1;
                    break;
                }
                _ => {}
            }
            self.i += 1;
        }
        self.toks[start..self.i].to_vec()
    }

    fn next_arm(&mut self) -> u32 {
        *self.arms += 1;
        *self.arms
    }

    fn statement(&mut self, arms: &[(u32, u16)]) -> Option<Node> {
        let t = self.peek()?.clone();
        match t.text.as_str() {
            ";" => {
                self.i += 1;
                None
            }
            "{" => {
                self.i += 1;
                Some(Node::Block(self.block_items(arms)))
            }
            "if" => {
                let mut head = vec![t];
                self.i += 1;
                head.extend(self.paren_group());
                let header = self.push(head, UnitKind::Header, arms);
                let id = self.next_arm();
                let mut then_arms = arms.to_vec();
                then_arms.push((id, 0));
                let then = self.statement(&then_arms).unwrap_or(Node::Block(Vec::new()));
                let els = if self.peek().is_some_and(|t| t.is("else")) {
                    self.i += 1;
                    let mut else_arms = arms.to_vec();
                    else_arms.push((id, 1));
                    self.statement(&else_arms).map(Box::new)
                } else {
                    None
                };
                Some(Node::If { header, then: Box::new(then), els })
            }
            "while" | "for" => {
                let mut head = vec![t.clone()];
                self.i += 1;
                head.extend(self.paren_group());
                let kind = if t.is("for") { UnitKind::For } else { UnitKind::Header };
                let header = self.push(head, kind, arms);
                let body = self.statement(arms).unwrap_or(Node::Block(Vec::new()));
                Some(Node::Loop { header, body: Box::new(body), test_after: false })
            }
            "do" => {
                self.i += 1;
                let body = self.statement(arms).unwrap_or(Node::Block(Vec::new()));
                let mut head = Vec::new();
                if self.peek().is_some_and(|t| t.is("while")) {
                    head.push(self.toks[self.i].clone());
                    self.i += 1;
                    head.extend(self.paren_group());
                    if self.peek().is_some_and(|t| t.is(";")) {
                        head.push(self.toks[self.i].clone());
                        self.i += 1;
                    }
                }
                let header = self.push(head, UnitKind::Header, arms);
                Some(Node::Loop { header, body: Box::new(body), test_after: true })
            }
            "switch" => {
                let mut head = vec![t];
                self.i += 1;
                head.extend(self.paren_group());
                let header = self.push(head, UnitKind::Header, arms);
                let id = self.next_arm();
                let mut items = Vec::new();
                if self.peek().is_some_and(|t| t.is("{")) {
                    self.i += 1;
                    let mut arm = 0u16;
                    let mut started = false;
                    while self.i < self.toks.len() && !self.toks[self.i].is("}") {
                        let at_case = self.peek().is_some_and(|t| t.is("case") || t.is("default"));
                        if at_case && started {
                            arm += 1;
                        }
                        started |= at_case;
                        let mut a = arms.to_vec();
                        a.push((id, arm));
                        if let Some(n) = self.statement(&a) {
                            items.push(n);
                        }
                    }
                    self.i += 1;
                } else if let Some(n) = self.statement(arms) {
                    items.push(n);
                }
                Some(Node::Switch { header, items })
            }
            "case" | "default" => {
                let start = self.i;
                let mut depth = 0;
                while self.i < self.toks.len() {
                    let s = self.toks[self.i].text.as_str();
                    match s {
                        "(" | "[" => depth += 1,
                        ")" | "]" => depth -= 1,
                        ":" if depth == 0 => break,
                        _ => {}
                    }
                    self.i += 1;
                }
                self.i = (self.i + 1).min(self.toks.len());
                let u = self.push(self.toks[start..self.i].to_vec(), UnitKind::Case, arms);
                Some(Node::Case(u))
            }
            "return" => {
                let toks = self.simple_tokens();
                Some(Node::Return(self.push(toks, UnitKind::Return, arms)))
            }
            "break" | "continue" | "goto" => {
                let toks = self.simple_tokens();
                let u = self.push(toks, UnitKind::Jump, arms);
                Some(match t.text.as_str() {
                    "break" => Node::Break(Some(u)),
                    "continue" => Node::Continue(Some(u)),
                    _ => Node::Unit(u),
                })
            }
            "else" => {
                // Dangling else: parse what follows as a plain statement.
                self.i += 1;
                self.statement(arms)
            }
            "try" => {
                self.i += 1;
                self.statement(arms)
            }
            "catch" => {
                let mut head = vec![t];
                self.i += 1;
                head.extend(self.paren_group());
                let header = self.push(head, UnitKind::Header, arms);
                let body = self.statement(arms).unwrap_or(Node::Block(Vec::new()));
                Some(Node::Block(vec![Node::Unit(header), body]))
            }
            _ if t.is_ident() && self.toks.get(self.i + 1).is_some_and(|n| n.is(":")) => {
                // Label.
                self.i += 2;
                None
            }
            _ => {
                let toks = self.simple_tokens();
                if toks.is_empty() {
                    // Stray closing token; step over it.
                    self.i += 1;
                    return None;
                }
                Some(Node::Unit(self.push(toks, UnitKind::Simple, arms)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clex::tokenize;

    #[test]
    fn finds_functions_and_params() {
        let toks = tokenize(
            "static int g = 1;\nint proto(int a);\nvoid\ntest(char *str, int n[], void (*cb)(int))\n{ return; }\nint main(void) { return 0; }",
        );
        let f = parse_file(&toks);
        assert_eq!(f.functions.len(), 2);
        assert_eq!(f.functions[0].name, "test");
        assert_eq!(f.functions[0].name_line, 4);
        assert_eq!(f.functions[0].params, ["str", "n", "cb"]);
        assert!(f.functions[1].params.is_empty());
        assert_eq!(f.globals.len(), 2);
    }

    #[test]
    fn struct_bodies_are_globals() {
        let toks = tokenize("struct s { int a; char b[4]; } inst;\nint f() { return 1; }");
        let f = parse_file(&toks);
        assert_eq!(f.globals.len(), 1);
        assert_eq!(f.functions.len(), 1);
    }

    #[test]
    fn if_else_arms() {
        let toks = tokenize("void f(int c) { if (c) x = 1; else { y = 2; } z = 3; }");
        let f = parse_file(&toks);
        let arms: Vec<_> = f.units.iter().map(|u| (u.tokens[0].text.clone(), u.arms.clone())).collect();
        assert_eq!(arms[2], ("x".to_string(), vec![(1, 0)]));
        assert_eq!(arms[3], ("y".to_string(), vec![(1, 1)]));
        assert_eq!(arms[4], ("z".to_string(), vec![]));
    }

    #[test]
    fn switch_cases_are_arms() {
        let toks = tokenize("void f(int c) { switch (c) { case 1: a = 1; break; default: a = 2; } }");
        let f = parse_file(&toks);
        let a: Vec<_> = f.units.iter().filter(|u| u.tokens[0].is("a")).map(|u| u.arms.clone()).collect();
        assert_eq!(a, vec![vec![(1, 0)], vec![(1, 1)]]);
    }

    #[test]
    fn imbalance() {
        assert_eq!(brace_imbalance(&tokenize("int f() {\n if (x) {\n}")), Some(1));
        assert_eq!(brace_imbalance(&tokenize("}")), Some(1));
        assert_eq!(brace_imbalance(&tokenize("{}")), None);
    }
}
