//! Symbolic representation of gadgets: user-defined variables become
//! `VARn` and user-defined functions `FUNn`, numbered by first occurrence.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::calltable::{is_library_name, known_library_names};
use crate::clex::{tokenize, Token, TokenKind};
use crate::gadget::{CodeGadget, GadgetDirection, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolizeOptions {
    /// Replace string literals by `STR` and char literals by `CHR`.
    pub normalize_literals: bool,
}

impl Default for SymbolizeOptions {
    fn default() -> Self {
        SymbolizeOptions { normalize_literals: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicGadget {
    pub gadget_id: String,
    pub direction: GadgetDirection,
    pub label: Label,
    pub tokens: Vec<Token>,
    pub var_map: BTreeMap<String, String>,
    pub fun_map: BTreeMap<String, String>,
    /// Token positions of the key call statement.
    pub key_range: Range<usize>,
}

impl SymbolicGadget {
    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }
}

pub struct Symbolizer {
    known: BTreeSet<String>,
    opts: SymbolizeOptions,
}

impl Default for Symbolizer {
    fn default() -> Self {
        Symbolizer::new(known_library_names(), SymbolizeOptions::default())
    }
}

impl Symbolizer {
    pub fn new(known: BTreeSet<String>, opts: SymbolizeOptions) -> Self {
        Symbolizer { known, opts }
    }

    pub fn symbolize(&self, gadget: &CodeGadget) -> SymbolicGadget {
        let mut var_map: BTreeMap<String, String> = BTreeMap::new();
        let mut fun_map: BTreeMap<String, String> = BTreeMap::new();
        let mut tokens = Vec::new();
        let mut key_range = 0..0;
        for (si, st) in gadget.statements.iter().enumerate() {
            let ascii: String = st.text.chars().filter(char::is_ascii).collect();
            let toks = tokenize(&ascii);
            let start = tokens.len();
            for (i, t) in toks.iter().enumerate() {
                let mut t = t.clone();
                t.line = st.line;
                match t.kind {
                    TokenKind::StringLiteral if self.opts.normalize_literals => t.text = "STR".into(),
                    TokenKind::CharLiteral if self.opts.normalize_literals => t.text = "CHR".into(),
                    TokenKind::Identifier if !is_library_name(&t.text, &self.known) => {
                        let called = toks.get(i + 1).is_some_and(|n| n.is("("));
                        t.text = if let Some(v) = var_map.get(&t.text) {
                            v.clone()
                        } else if let Some(f) = fun_map.get(&t.text) {
                            f.clone()
                        } else if called {
                            let f = format!("FUN{}", fun_map.len() + 1);
                            fun_map.insert(t.text.clone(), f.clone());
                            f
                        } else {
                            let v = format!("VAR{}", var_map.len() + 1);
                            var_map.insert(t.text.clone(), v.clone());
                            v
                        };
                    }
                    _ => {}
                }
                tokens.push(t);
            }
            if si == gadget.key_index {
                key_range = start..tokens.len();
            }
        }
        SymbolicGadget {
            gadget_id: gadget.id.clone(),
            direction: gadget.direction,
            label: gadget.label,
            tokens,
            var_map,
            fun_map,
            key_range,
        }
    }

    /// Symbolize and store the symbolic token texts on the gadget.
    pub fn apply(&self, gadget: &mut CodeGadget) -> SymbolicGadget {
        let s = self.symbolize(gadget);
        gadget.symbolic = s.texts();
        s
    }
}

pub fn symbolize(gadget: &CodeGadget, known: &BTreeSet<String>) -> SymbolicGadget {
    Symbolizer::new(known.clone(), SymbolizeOptions::default()).symbolize(gadget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadget::{GadgetStatement, Provenance};

    fn gadget(texts: &[&str]) -> CodeGadget {
        CodeGadget {
            id: "g".into(),
            program: "p".into(),
            provenance: Provenance::Target,
            direction: GadgetDirection::Backward,
            callee: "strcpy".into(),
            key_index: texts.len() - 1,
            statements: texts
                .iter()
                .enumerate()
                .map(|(i, t)| GadgetStatement {
                    file: "a.c".into(),
                    function: "f".into(),
                    line: i as u32 + 1,
                    text: t.to_string(),
                })
                .collect(),
            label: Label::Unlabeled,
            review: false,
            symbolic: Vec::new(),
        }
    }

    fn texts(s: &SymbolicGadget) -> String {
        s.texts().join(" ")
    }

    #[test]
    fn renames_in_first_occurrence_order() {
        let g = gadget(&["test ( char * str )", "char buf [ 10 ] ;", "strcpy ( buf , str ) ;"]);
        let s = Symbolizer::default().symbolize(&g);
        assert_eq!(texts(&s), "FUN1 ( char * VAR1 ) char VAR2 [ 10 ] ; strcpy ( VAR2 , VAR1 ) ;");
        assert_eq!(s.fun_map["test"], "FUN1");
        assert_eq!(s.var_map["buf"], "VAR2");
        assert_eq!(s.key_range, 12..19);
    }

    #[test]
    fn library_only_is_identity() {
        let g = gadget(&["memset ( NULL , 0 , sizeof ( int ) ) ;"]);
        let s = Symbolizer::default().symbolize(&g);
        assert_eq!(texts(&s), "memset ( NULL , 0 , sizeof ( int ) ) ;");
        assert!(s.var_map.is_empty() && s.fun_map.is_empty());
    }

    #[test]
    fn separate_gadgets_restart_numbering() {
        let sym = Symbolizer::default();
        assert_eq!(texts(&sym.symbolize(&gadget(&["x = 1 ;"]))), "VAR1 = 1 ;");
        assert_eq!(texts(&sym.symbolize(&gadget(&["y = 1 ;"]))), "VAR1 = 1 ;");
    }

    #[test]
    fn literals() {
        let g = gadget(&["printf ( \"%d\\n\" , c == 'a' ) ;"]);
        assert_eq!(texts(&Symbolizer::default().symbolize(&g)), "printf ( STR , VAR1 == CHR ) ;");
        let raw = Symbolizer::new(known_library_names(), SymbolizeOptions { normalize_literals: false });
        assert_eq!(texts(&raw.symbolize(&g)), "printf ( \"%d\\n\" , VAR1 == 'a' ) ;");
    }

    #[test]
    fn wildcard_library_names_kept() {
        let g = gadget(&["GetDlgItemTextA ( h , 1 , b , 4 ) ;"]);
        assert_eq!(texts(&Symbolizer::default().symbolize(&g)), "GetDlgItemTextA ( VAR1 , 1 , VAR2 , 4 ) ;");
    }

    #[test]
    fn non_ascii_dropped() {
        let g = gadget(&["x\u{e9} = 1 ;"]);
        assert_eq!(texts(&Symbolizer::default().symbolize(&g)), "VAR1 = 1 ;");
    }

    #[test]
    fn apply_stores_symbolic() {
        let mut g = gadget(&["a = b ;"]);
        Symbolizer::default().apply(&mut g);
        assert_eq!(g.symbolic, ["VAR1", "=", "VAR2", ";"]);
    }
}
