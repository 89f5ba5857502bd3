//! Definitions, uses and calls of one statement unit.
//!
//! Aliasing is collapsed to the base identifier: `*p = v`, `p->f = v` and
//! `a[i] = v` all define `p`/`a`, but only weakly (prior definitions still
//! reach). A declaration without initialiser defines nothing; it is kept as
//! the anchor of later definitions of the same variable.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::parse::{matching, split_top, UnitKind};
use crate::calltable::{destination_arg, CallTable, Direction};
use crate::clex::{is_keyword, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgExpr {
    pub text: String,
    /// Identifiers and callee names occurring in the argument.
    pub names: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallExpr {
    pub callee: String,
    /// `obj.m(...)` or `obj->m(...)`.
    pub member: bool,
    pub args: Vec<ArgExpr>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct UnitFacts {
    pub strong: BTreeSet<String>,
    pub weak: BTreeSet<String>,
    pub declared: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub calls: Vec<CallExpr>,
}

impl UnitFacts {
    fn merge(&mut self, o: UnitFacts) {
        self.strong.extend(o.strong);
        self.weak.extend(o.weak);
        self.declared.extend(o.declared);
        self.uses.extend(o.uses);
        self.calls.extend(o.calls);
    }

    pub fn defs(&self) -> impl Iterator<Item = &String> {
        self.strong.iter().chain(&self.weak)
    }
}

const TYPE_KEYWORDS: &[&str] = &[
    "int", "char", "short", "long", "float", "double", "void", "bool", "_Bool", "wchar_t",
    "signed", "unsigned", "auto", "_Complex",
];
const QUALIFIERS: &[&str] = &[
    "static", "extern", "const", "volatile", "register", "inline", "typename", "constexpr",
    "mutable", "restrict",
];
const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Use,
    Skip,
}

/// Length of the leading type specifier if `toks` is a declaration.
fn declaration_type_len(toks: &[Token]) -> Option<usize> {
    let mut k = 0;
    while k < toks.len() && QUALIFIERS.contains(&toks[k].text.as_str()) {
        k += 1;
    }
    let start = k;
    if k < toks.len() && TYPE_KEYWORDS.contains(&toks[k].text.as_str()) {
        while k < toks.len()
            && (TYPE_KEYWORDS.contains(&toks[k].text.as_str())
                || QUALIFIERS.contains(&toks[k].text.as_str()))
        {
            k += 1;
        }
    } else if k + 1 < toks.len()
        && matches!(toks[k].text.as_str(), "struct" | "union" | "enum" | "class")
        && toks[k + 1].is_ident()
    {
        k += 2;
    } else if k < toks.len() && toks[k].is_ident() {
        k += 1;
        // Qualified and templated type names.
        loop {
            if k + 1 < toks.len() && toks[k].is("::") && toks[k + 1].is_ident() {
                k += 2;
            } else if k < toks.len() && toks[k].is("<") {
                let mut depth = 0;
                let mut j = k;
                while j < toks.len() {
                    match toks[j].text.as_str() {
                        "<" => depth += 1,
                        ">" => depth -= 1,
                        ">>" => depth -= 2,
                        ";" | "=" | "(" => return None,
                        _ => {}
                    }
                    j += 1;
                    if depth <= 0 {
                        break;
                    }
                }
                k = j;
            } else {
                break;
            }
        }
        // Must be followed by a declarator name.
        let mut j = k;
        while j < toks.len() && (toks[j].is("*") || toks[j].is("&") || toks[j].is("const")) {
            j += 1;
        }
        let next_ok = toks.get(j).is_some_and(|t| t.is_ident())
            && toks
                .get(j + 1)
                .is_none_or(|t| matches!(t.text.as_str(), "=" | ";" | "," | "[" | "(" | ")"));
        if !next_ok {
            return None;
        }
    } else {
        return None;
    }
    while k < toks.len() && QUALIFIERS.contains(&toks[k].text.as_str()) {
        k += 1;
    }
    (k > start && k < toks.len()).then_some(k)
}

/// Base identifier of an lvalue-ish token range, and whether it is a plain
/// variable (a strong definition).
fn lvalue_base(toks: &[Token], r: Range<usize>) -> Option<(usize, bool)> {
    let s = &toks[r.clone()];
    let plain: Vec<&Token> = s.iter().filter(|t| !t.is("(") && !t.is(")")).collect();
    let strong = plain.len() == 1 && plain[0].is_ident();
    for (j, t) in s.iter().enumerate() {
        if t.is_ident() {
            let after_member = j > 0 && (s[j - 1].is(".") || s[j - 1].is("->"));
            let is_cast = s.get(j + 1).is_some_and(|n| n.is(")")) && j > 0 && s[j - 1].is("(")
                && s.get(j + 2).is_some_and(|n| n.is_ident() || n.is("("));
            if !after_member && !is_cast {
                return Some((r.start + j, strong));
            }
        }
    }
    None
}

/// Start index of the operand ending just before `end` (exclusive).
fn operand_start(toks: &[Token], lo: usize, end: usize) -> usize {
    let mut depth = 0i32;
    let mut j = end;
    while j > lo {
        let t = &toks[j - 1];
        match t.text.as_str() {
            ")" | "]" => depth += 1,
            "(" | "[" => {
                if depth == 0 {
                    return j;
                }
                depth -= 1;
            }
            "," | ";" | "?" | ":" | "{" | "&&" | "||" | "return" if depth == 0 => return j,
            s if depth == 0 && ASSIGN_OPS.contains(&s) => return j,
            _ => {}
        }
        j -= 1;
    }
    lo
}

struct Analyzer<'a> {
    toks: &'a [Token],
    roles: Vec<Role>,
    facts: UnitFacts,
    table: &'a CallTable,
    global_scope: bool,
}

impl<'a> Analyzer<'a> {
    fn new(toks: &'a [Token], table: &'a CallTable, global_scope: bool) -> Self {
        let roles = toks
            .iter()
            .map(|t| if t.kind == TokenKind::Identifier { Role::Use } else { Role::Skip })
            .collect();
        Analyzer { toks, roles, facts: UnitFacts::default(), table, global_scope }
    }

    fn names_in(&self, r: Range<usize>) -> BTreeSet<String> {
        self.toks[r]
            .iter()
            .filter(|t| t.is_ident())
            .map(|t| t.text.clone())
            .collect()
    }

    fn weak_def_arg(&mut self, r: Range<usize>) {
        let r = trim_address(self.toks, r);
        if let Some((b, _)) = lvalue_base(self.toks, r) {
            self.facts.weak.insert(self.toks[b].text.clone());
        }
    }

    fn run(mut self, range: Range<usize>) -> UnitFacts {
        let toks = self.toks;
        let mut body = range.clone();
        if let Some(tl) = declaration_type_len(&toks[range.clone()]) {
            for j in range.start..range.start + tl {
                self.roles[j] = Role::Skip;
            }
            body = range.start + tl..range.end;
            self.declaration(body.clone());
        }
        self.member_and_call_names(range.clone());
        self.assignments(range.clone());
        self.increments(range.clone());
        self.calls(range.clone());
        self.stream_reads(range.clone());
        for j in range {
            if self.roles[j] == Role::Use && !is_keyword(&toks[j].text) {
                self.facts.uses.insert(toks[j].text.clone());
            }
        }
        let _ = body;
        self.facts
    }

    fn declaration(&mut self, r: Range<usize>) {
        let toks = self.toks;
        let inner = &toks[r.clone()];
        let end = inner.iter().position(|t| t.is(";")).unwrap_or(inner.len());
        for d in split_top(&inner[..end], ",") {
            let d = r.start + d.start..r.start + d.end;
            let mut k = d.start;
            while k < d.end && matches!(toks[k].text.as_str(), "*" | "&" | "const" | "(") {
                k += 1;
            }
            if k >= d.end || !toks[k].is_ident() {
                continue;
            }
            let name = toks[k].text.clone();
            self.roles[k] = Role::Skip;
            let mut j = k + 1;
            while j < d.end && toks[j].is(")") {
                j += 1;
            }
            let mut initialised = false;
            while j < d.end {
                match toks[j].text.as_str() {
                    "[" => j = matching(toks, j).map_or(d.end, |m| m + 1),
                    "(" => {
                        let close = matching(toks, j).unwrap_or(d.end - 1);
                        let fn_ptr = k > d.start && toks[k - 1].is("*") && toks[d.start].is("(");
                        if self.global_scope || fn_ptr {
                            // Prototype or function-pointer parameter list.
                            for x in j..=close.min(d.end - 1) {
                                self.roles[x] = Role::Skip;
                            }
                        } else {
                            initialised = true;
                        }
                        j = close + 1;
                    }
                    "=" => {
                        initialised = true;
                        break;
                    }
                    _ => j += 1,
                }
            }
            let proto = self.global_scope && toks.get(k + 1).is_some_and(|t| t.is("("));
            if proto {
                continue;
            }
            if initialised {
                self.facts.strong.insert(name.clone());
            }
            self.facts.declared.insert(name);
        }
    }

    fn member_and_call_names(&mut self, r: Range<usize>) {
        let toks = self.toks;
        for j in r.clone() {
            if !toks[j].is_ident() {
                continue;
            }
            let after_member = j > r.start && (toks[j - 1].is(".") || toks[j - 1].is("->") || toks[j - 1].is("::"));
            let is_call = toks.get(j + 1).is_some_and(|t| t.is("("));
            let is_label = toks.get(j + 1).is_some_and(|t| t.is("::"));
            if after_member || is_call || is_label {
                self.roles[j] = Role::Skip;
            }
        }
    }

    fn assignments(&mut self, r: Range<usize>) {
        let toks = self.toks;
        for j in r.clone() {
            let op = toks[j].text.as_str();
            if toks[j].kind != TokenKind::Operator || !ASSIGN_OPS.contains(&op) {
                continue;
            }
            let lo = operand_start(toks, r.start, j);
            if let Some((b, strong)) = lvalue_base(toks, lo..j) {
                if self.facts.declared.contains(&toks[b].text) && op == "=" && j > 0 && b + 1 == j {
                    // Declarator initialiser; already recorded.
                    continue;
                }
                let name = toks[b].text.clone();
                if strong {
                    self.facts.strong.insert(name);
                } else {
                    self.facts.weak.insert(name);
                }
                if op == "=" {
                    self.roles[b] = Role::Skip;
                }
            }
        }
    }

    fn increments(&mut self, r: Range<usize>) {
        let toks = self.toks;
        for j in r.clone() {
            if !(toks[j].is("++") || toks[j].is("--")) {
                continue;
            }
            // Prefix form.
            if j + 1 < r.end && toks[j + 1].is_ident() && !toks.get(j + 2).is_some_and(|t| t.is("(")) {
                let strong = !toks.get(j + 2).is_some_and(|t| matches!(t.text.as_str(), "[" | "." | "->"));
                let name = toks[j + 1].text.clone();
                if strong {
                    self.facts.strong.insert(name);
                } else {
                    self.facts.weak.insert(name);
                }
                continue;
            }
            if j > r.start && (toks[j - 1].is_ident() || toks[j - 1].is("]") || toks[j - 1].is(")")) {
                let lo = operand_start(toks, r.start, j);
                if let Some((b, strong)) = lvalue_base(toks, lo..j) {
                    let name = toks[b].text.clone();
                    if strong {
                        self.facts.strong.insert(name);
                    } else {
                        self.facts.weak.insert(name);
                    }
                }
            }
        }
    }

    fn calls(&mut self, r: Range<usize>) {
        let toks = self.toks;
        for j in r.clone() {
            let t = &toks[j];
            let is_new_delete = t.is("new") || t.is("delete");
            let is_call = t.is_ident() && toks.get(j + 1).is_some_and(|n| n.is("(")) && self.roles_call_ok(j);
            if !is_call && !is_new_delete {
                continue;
            }
            let member = j > r.start && (toks[j - 1].is(".") || toks[j - 1].is("->"));
            let arg_ranges: Vec<Range<usize>> = if is_call {
                let close = matching(toks, j + 1).unwrap_or(r.end - 1).min(r.end - 1);
                split_top(&toks[j + 2..close], ",")
                    .into_iter()
                    .map(|a| j + 2 + a.start..j + 2 + a.end)
                    .filter(|a| !a.is_empty())
                    .collect()
            } else {
                let mut e = j + 1;
                if toks.get(e).is_some_and(|t| t.is("[")) {
                    e = matching(toks, e).map_or(e, |m| m + 1);
                }
                let end = (e..r.end)
                    .find(|&x| matches!(toks[x].text.as_str(), ";" | ","))
                    .unwrap_or(r.end);
                std::iter::once(e..end).collect()
            };
            let args = arg_ranges
                .iter()
                .map(|a| ArgExpr {
                    text: crate::clex::join_tokens(&toks[a.clone()]),
                    names: self.names_in(a.clone()),
                })
                .collect();
            let callee = t.text.clone();
            let entry = self.table.lookup(&callee, member).map(|e| e.direction);
            match entry {
                Some(Direction::Forward) => {
                    for a in &arg_ranges {
                        self.weak_def_arg(a.clone());
                    }
                }
                _ => {
                    if let Some(k) = destination_arg(&callee).filter(|_| !member) {
                        if let Some(a) = arg_ranges.get(k) {
                            self.weak_def_arg(a.clone());
                        }
                    }
                    for a in &arg_ranges {
                        if toks[a.start].is("&") {
                            self.weak_def_arg(a.clone());
                        }
                    }
                }
            }
            self.facts.calls.push(CallExpr { callee, member, args });
        }
    }

    fn roles_call_ok(&self, j: usize) -> bool {
        // Declarator names with constructor arguments are not calls.
        !(self.facts.declared.contains(&self.toks[j].text)
            && j > 0
            && (self.toks[j - 1].is_ident() || self.toks[j - 1].kind == TokenKind::Keyword || self.toks[j - 1].is("*")))
    }

    /// `cin >> a >> b` style extraction from a table-listed stream.
    fn stream_reads(&mut self, r: Range<usize>) {
        let toks = self.toks;
        for j in r.clone() {
            if !toks[j].is_ident() || !toks.get(j + 1).is_some_and(|t| t.is(">>")) {
                continue;
            }
            let Some(e) = self.table.lookup(&toks[j].text, false) else { continue };
            if e.direction != Direction::Forward {
                continue;
            }
            let end = (j..r.end).find(|&x| toks[x].is(";")).unwrap_or(r.end);
            let operands: Vec<Range<usize>> = split_top(&toks[j + 1..end], ">>")
                .into_iter()
                .skip(1)
                .map(|o| j + 1 + o.start..j + 1 + o.end)
                .filter(|o| !o.is_empty())
                .collect();
            for o in &operands {
                self.weak_def_arg(o.clone());
            }
            let args = operands
                .iter()
                .map(|o| ArgExpr { text: crate::clex::join_tokens(&toks[o.clone()]), names: self.names_in(o.clone()) })
                .collect();
            self.roles[j] = Role::Skip;
            self.facts.calls.push(CallExpr { callee: toks[j].text.clone(), member: false, args });
        }
    }
}

fn trim_address(toks: &[Token], r: Range<usize>) -> Range<usize> {
    let mut s = r.start;
    while s < r.end && (toks[s].is("&") || toks[s].is("*")) {
        s += 1;
    }
    s..r.end
}

fn analyze_range(toks: &[Token], r: Range<usize>, table: &CallTable, global: bool) -> UnitFacts {
    if r.is_empty() {
        return UnitFacts::default();
    }
    Analyzer::new(toks, table, global).run(r)
}

/// Facts for a whole unit, dispatching on its syntactic kind.
pub(crate) fn analyze_unit(
    toks: &[Token],
    kind: UnitKind,
    params: &[String],
    table: &CallTable,
    global: bool,
) -> UnitFacts {
    match kind {
        UnitKind::FunctionHeader => UnitFacts {
            strong: params.iter().cloned().collect(),
            ..UnitFacts::default()
        },
        UnitKind::Case | UnitKind::Jump => UnitFacts::default(),
        UnitKind::Return => analyze_range(toks, 1.min(toks.len())..toks.len(), table, false),
        UnitKind::Header => {
            // keyword ( ... ) [;]
            let open = toks.iter().position(|t| t.is("("));
            match open.and_then(|o| matching(toks, o).map(|c| (o, c))) {
                Some((o, c)) => analyze_range(toks, o + 1..c, table, false),
                None => UnitFacts::default(),
            }
        }
        UnitKind::For => {
            let mut f = UnitFacts::default();
            if let Some(c) = matching(toks, 1) {
                for part in split_top(&toks[2..c], ";") {
                    f.merge(analyze_range(toks, 2 + part.start..2 + part.end, table, false));
                }
            }
            f
        }
        UnitKind::Simple => analyze_range(toks, 0..toks.len(), table, global),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calltable::TableMode;
    use crate::clex::tokenize;

    fn facts(src: &str) -> UnitFacts {
        let t = tokenize(src);
        analyze_unit(&t, UnitKind::Simple, &[], &CallTable::bundled(TableMode::All), false)
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn declaration_with_and_without_init() {
        let f = facts("char buf[MAXSIZE];");
        assert_eq!(f.declared, set(&["buf"]));
        assert!(f.strong.is_empty());
        assert_eq!(f.uses, set(&["MAXSIZE"]));

        let f = facts("int MAXSIZE=40;");
        assert_eq!(f.strong, set(&["MAXSIZE"]));
        assert!(f.uses.is_empty());

        let f = facts("char *userstr;");
        assert_eq!(f.declared, set(&["userstr"]));
        assert!(f.uses.is_empty() && f.strong.is_empty());

        let f = facts("size_t n = strlen(s), m;");
        assert_eq!(f.strong, set(&["n"]));
        assert_eq!(f.declared, set(&["n", "m"]));
        assert_eq!(f.uses, set(&["s"]));
    }

    #[test]
    fn assignment_forms() {
        let f = facts("userstr = argv[1];");
        assert_eq!(f.strong, set(&["userstr"]));
        assert_eq!(f.uses, set(&["argv"]));

        let f = facts("buf[i] = c;");
        assert_eq!(f.weak, set(&["buf"]));
        assert_eq!(f.uses, set(&["i", "c"]));

        let f = facts("p->len += n;");
        assert_eq!(f.weak, set(&["p"]));
        assert_eq!(f.uses, set(&["p", "n"]));

        let f = facts("x = x + 1;");
        assert_eq!(f.strong, set(&["x"]));
        assert_eq!(f.uses, set(&["x"]));

        let f = facts("i++;");
        assert_eq!(f.strong, set(&["i"]));
        assert_eq!(f.uses, set(&["i"]));
    }

    #[test]
    fn calls_and_out_args() {
        let f = facts("strcpy(buf, str);");
        assert_eq!(f.calls.len(), 1);
        assert_eq!(f.calls[0].callee, "strcpy");
        assert_eq!(f.calls[0].args[1].names, set(&["str"]));
        assert_eq!(f.weak, set(&["buf"]));
        assert_eq!(f.uses, set(&["buf", "str"]));

        let f = facts("recv(s, buf, n, 0);");
        assert_eq!(f.weak, set(&["s", "buf", "n"]));

        let f = facts("helper(&len, x.y);");
        assert_eq!(f.weak, set(&["len"]));
        assert_eq!(f.uses, set(&["len", "x"]));

        let f = facts("data = (char *)malloc(100 * sizeof(char));");
        assert_eq!(f.strong, set(&["data"]));
        assert_eq!(f.calls[0].callee, "malloc");
    }

    #[test]
    fn stream_extraction() {
        let f = facts("cin >> a >> b[2];");
        assert_eq!(f.weak, set(&["a", "b"]));
        assert_eq!(f.calls[0].callee, "cin");
        assert_eq!(f.calls[0].args.len(), 2);
    }

    #[test]
    fn new_and_delete() {
        let f = facts("delete p;");
        assert_eq!(f.calls[0].callee, "delete");
        assert_eq!(f.calls[0].args[0].names, set(&["p"]));
        let f = facts("char *q = new char[n];");
        assert_eq!(f.calls[0].callee, "new");
        assert_eq!(f.strong, set(&["q"]));
    }

    #[test]
    fn global_prototype_defines_nothing() {
        let t = tokenize("int helper(int a, char *b);");
        let f = analyze_unit(&t, UnitKind::Simple, &[], &CallTable::bundled(TableMode::All), true);
        assert!(f.declared.is_empty() && f.uses.is_empty() && f.strong.is_empty());
    }

    #[test]
    fn for_header() {
        let t = tokenize("for (int i = 0; i < n; i++)");
        let f = analyze_unit(&t, UnitKind::For, &[], &CallTable::default(), false);
        assert_eq!(f.strong, set(&["i"]));
        assert_eq!(f.uses, set(&["i", "n"]));
    }
}
