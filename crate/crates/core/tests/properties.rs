use std::collections::{BTreeMap, BTreeSet};

use gadgetscan::calltable::{CallTable, TableMode};
use gadgetscan::clex::tokenize;
use gadgetscan::evalkit::{compute_metrics, kfold, split_programs, ConfusionCounts};
use gadgetscan::fixtures::{EXAMPLE, EXAMPLE_PATH};
use gadgetscan::gadget::{gadget_id, GadgetDatabase, GadgetDirection};
use gadgetscan::pipeline::{extract_program, ExtractOptions, ProgramSource};
use gadgetscan::symbolizer::Symbolizer;
use gadgetscan::vectorizer::{fit_indices, PAD};
use proptest::prelude::*;

const NAMES: &[&str] = &["alpha", "beta", "gamma", "delta", "eps", "zeta"];
const OTHER: &[&str] = &["xa", "xb", "xc", "xd", "xe", "xf"];

/// A straight-line function over `names` ending in a strcpy key call.
fn program_text(steps: &[(usize, usize, usize)], names: &[&str]) -> String {
    let mut s = String::from("void run(char *alpha)\n{\n");
    for n in &names[1..] {
        s.push_str(&format!("    char *{n} = alpha;\n"));
    }
    for &(a, b, c) in steps {
        s.push_str(&format!("    {} = {} + {};\n", names[a], names[b], names[c]));
    }
    s.push_str(&format!("    strcpy({}, {});\n}}\n", names[1], names[0]));
    s.replace("alpha", names[0])
}

fn extract(name: &str, text: &str) -> Vec<gadgetscan::gadget::CodeGadget> {
    let p = ProgramSource { name: name.into(), files: vec![("t.c".into(), text.into())] };
    extract_program(&p, &CallTable::bundled(TableMode::SelCwe119), &ExtractOptions::default()).gadgets
}

fn steps() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0..6usize, 0..6usize, 0..6usize), 0..8)
}

#[test]
fn example_assembly_is_stable() {
    let p = ProgramSource { name: "example".into(), files: vec![(EXAMPLE_PATH.into(), EXAMPLE.into())] };
    let table = CallTable::bundled(TableMode::SelCwe119);
    let a = extract_program(&p, &table, &ExtractOptions::default()).gadgets;
    let b = extract_program(&p, &table, &ExtractOptions::default()).gadgets;
    assert_eq!(a, b);
    assert_eq!(a[0].lines(), [13, 15, 18, 19, 2, 4, 5, 9]);
    assert_eq!(a[0].id, gadget_id("example", "strcpy", &a[0].statements));
    assert_eq!(a[0].direction, GadgetDirection::MixedBackward);
}

#[test]
fn database_round_trip_keeps_gadgets() {
    let p = ProgramSource { name: "example".into(), files: vec![(EXAMPLE_PATH.into(), EXAMPLE.into())] };
    let db = GadgetDatabase::new(extract_program(&p, &CallTable::bundled(TableMode::All), &ExtractOptions::default()).gadgets);
    let back = GadgetDatabase::read_from(&db.to_bytes()[..]).unwrap();
    assert_eq!(back, db);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbolization_preserves_token_count(steps in steps()) {
        for g in extract("p", &program_text(&steps, NAMES)) {
            let raw: usize = g.statements.iter().map(|s| tokenize(&s.text).len()).sum();
            prop_assert_eq!(g.symbolic.len(), raw);
        }
    }

    #[test]
    fn symbol_maps_are_injective(steps in steps()) {
        for g in extract("p", &program_text(&steps, NAMES)) {
            let s = Symbolizer::default().symbolize(&g);
            let vars: BTreeSet<&String> = s.var_map.values().collect();
            prop_assert_eq!(vars.len(), s.var_map.len());
            let funs: BTreeSet<&String> = s.fun_map.values().collect();
            prop_assert_eq!(funs.len(), s.fun_map.len());
            prop_assert!(s.var_map.keys().all(|k| !s.fun_map.contains_key(k)));
        }
    }

    #[test]
    fn symbolization_ignores_identifier_choice(steps in steps()) {
        let a = extract("p", &program_text(&steps, NAMES));
        let b = extract("p", &program_text(&steps, OTHER));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.symbolic, &y.symbolic);
            prop_assert_eq!(x.canonical_text(), y.canonical_text());
        }
    }

    #[test]
    fn assembly_is_deterministic(steps in steps()) {
        let text = program_text(&steps, NAMES);
        prop_assert_eq!(extract("p", &text), extract("p", &text));
        for g in extract("p", &text) {
            prop_assert_eq!(g.key_statement().text.split(' ').next(), Some("strcpy"));
        }
    }

    #[test]
    fn fitting_anchors_the_key_end(n in 0usize..120, tau in 1usize..80, backward in any::<bool>()) {
        let raw: Vec<usize> = (0..n).map(|i| i + 2).collect();
        let dir = if backward { GadgetDirection::Backward } else { GadgetDirection::Forward };
        let out = fit_indices(&raw, dir, tau);
        prop_assert_eq!(out.len(), tau);
        let kept = n.min(tau);
        let pads = tau - kept;
        if backward {
            prop_assert!(out[..pads].iter().all(|&i| i == PAD));
            prop_assert_eq!(&out[pads..], &raw[n - kept..]);
        } else {
            prop_assert_eq!(&out[..kept], &raw[..kept]);
            prop_assert!(out[kept..].iter().all(|&i| i == PAD));
        }
    }

    #[test]
    fn rates_are_complementary(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
        let m = compute_metrics(&ConfusionCounts::new(tp, fp, fn_, tn));
        if let (Some(t), Some(f)) = (m.tpr, m.fnr) {
            prop_assert!((t + f - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(tp + fn_, 0);
        }
        if let Some(f1) = m.f1 {
            prop_assert!((0.0..=1.0).contains(&f1));
        }
    }

    #[test]
    fn folds_partition_the_samples(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold(n, k, seed).unwrap();
        let mut seen = BTreeMap::new();
        for (f, (train, val)) in folds.iter().enumerate() {
            prop_assert_eq!(train.len() + val.len(), n);
            for &v in val {
                prop_assert!(seen.insert(v, f).is_none());
                prop_assert!(!train.contains(&v));
            }
        }
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn program_split_never_leaks(n in 2usize..80, seed in any::<u64>()) {
        let programs: Vec<usize> = (0..n).collect();
        let (train, test) = split_programs(&programs, 0.8, seed).unwrap();
        let a: BTreeSet<_> = train.iter().collect();
        prop_assert!(test.iter().all(|p| !a.contains(p)));
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert!(!train.is_empty() && !test.is_empty());
    }
}
