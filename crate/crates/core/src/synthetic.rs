//! Seeded generator of small labeled C programs, one `strcpy` key point
//! each. Vulnerable programs copy caller input straight into a fixed buffer;
//! safe ones truncate the input to the buffer size first.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::{LabelManifest, ProgramSource};

const FUNCTION_NAMES: &[&str] = &["copy_input", "handle", "process_arg", "store_name", "do_copy", "parse_field"];
const BUFFER_NAMES: &[&str] = &["dest", "buf", "name", "tmp", "line", "out"];
const INPUT_NAMES: &[&str] = &["data", "src", "input", "str", "arg", "s"];
const SIZES: &[u32] = &[8, 10, 16, 20, 32, 50, 64, 100, 128, 256];

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub programs: Vec<ProgramSource>,
    pub manifest_text: String,
    pub manifest: LabelManifest,
}

impl SyntheticCorpus {
    pub fn vulnerable_count(&self) -> usize {
        self.manifest_text.lines().filter(|l| l.contains("\tbad\t")).count()
    }
}

struct Program {
    source: String,
    key_line: u32,
}

fn program(rng: &mut ChaCha8Rng, vulnerable: bool) -> Program {
    let func = *FUNCTION_NAMES.choose(rng).unwrap();
    let buf = *BUFFER_NAMES.choose(rng).unwrap();
    let input = *INPUT_NAMES.choose(rng).unwrap();
    let size = *SIZES.choose(rng).unwrap();
    let mut lines: Vec<String> = vec!["#include <string.h>".into(), String::new()];
    lines.push(format!("void {func}(char *{input})"));
    lines.push("{".into());
    lines.push(format!("    char {buf}[{size}];"));
    let noise = rng.gen_range(0..3);
    for k in 0..noise {
        lines.push(format!("    int n{k} = {};", rng.gen_range(0..100)));
    }
    let via_alias = rng.gen_bool(0.3);
    let src = if via_alias {
        lines.push(format!("    char *p = {input};"));
        "p"
    } else {
        input
    };
    if !vulnerable {
        let bound = if rng.gen_bool(0.5) { size.to_string() } else { format!("sizeof({buf})") };
        lines.push(format!("    {src}[{bound} - 1] = '\\0';"));
    }
    lines.push(format!("    strcpy({buf}, {src});"));
    let key_line = lines.len() as u32;
    lines.push("}".into());
    lines.push(String::new());
    lines.push("int main(int argc, char **argv)".into());
    lines.push("{".into());
    lines.push("    if (argc > 1)".into());
    lines.push(format!("        {func}(argv[1]);"));
    lines.push("    return 0;".into());
    lines.push("}".into());
    Program { source: lines.join("\n") + "\n", key_line }
}

/// `n` programs, half of them vulnerable, in a seeded order.
pub fn generate(n: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flags: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    flags.shuffle(&mut rng);
    let mut programs = Vec::with_capacity(n);
    let mut manifest_text = String::new();
    for (i, vulnerable) in flags.into_iter().enumerate() {
        let p = program(&mut rng, vulnerable);
        let name = format!("prog{i:04}");
        let file = "main.c".to_string();
        if vulnerable {
            manifest_text.push_str(&format!("{name}\tbad\t{file}:{}\n", p.key_line));
        } else {
            manifest_text.push_str(&format!("{name}\tgood\n"));
        }
        programs.push(ProgramSource { name, files: vec![(file, p.source)] });
    }
    let manifest = LabelManifest::parse(&manifest_text, |_| Ok(String::new())).expect("generated manifest parses");
    SyntheticCorpus { programs, manifest_text, manifest }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calltable::{CallTable, TableMode};
    use crate::gadget::Label;
    use crate::pipeline::{extract_program, ExtractOptions};

    #[test]
    fn one_labeled_gadget_per_program() {
        let c = generate(20, 3);
        assert_eq!(c.vulnerable_count(), 10);
        let table = CallTable::bundled(TableMode::SelCwe119);
        for p in &c.programs {
            let ex = extract_program(p, &table, &ExtractOptions::default());
            assert_eq!(ex.gadgets.len(), 1, "{}", p.files[0].1);
            assert!(ex.lex_errors.is_empty());
            let g = c.manifest.apply(ex.gadgets).unwrap().remove(0);
            let fixed = g.symbolic.iter().any(|t| t == "CHR");
            assert_eq!(g.label == Label::Vulnerable, !fixed, "{:?}", g.symbolic);
            assert_eq!(g.key_statement().text.split(' ').next(), Some("strcpy"));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(10, 1).manifest_text, generate(10, 1).manifest_text);
        assert_eq!(generate(10, 1).programs, generate(10, 1).programs);
    }
}
