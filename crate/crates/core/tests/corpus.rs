mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use xdsp::corpus::{
    build_vocabulary, companion_path, downsample, merge_source_domains, parse_domain_file, split_domain, tokenize,
    Domain, Example, Vocabulary, UNK,
};
use xdsp::Error;

fn numbered(n: usize) -> Domain {
    let ex = (0..n)
        .map(|i| Example::new("d", &format!("ask {i}"), &format!("item {}", i % 7), &format!("(item {})", i % 7)))
        .collect();
    Domain::new("d", ex, vec![]).unwrap()
}

fn keyed(examples: &[Example]) -> Vec<String> {
    let mut v: Vec<String> = examples.iter().map(|e| e.utterance.join(" ")).collect();
    v.sort();
    v
}

#[test]
fn file_roundtrip_with_companion() {
    let synth = common::synth_domain("cars", 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cars.tsv");
    std::fs::write(&path, synth.domain.to_tsv()).unwrap();
    std::fs::write(companion_path(&path), "cars whose speed is warp\t(warp cars)\n").unwrap();
    let back = parse_domain_file(&path).unwrap();
    assert_eq!(back.examples(), synth.domain.examples());
    assert_eq!(back.inventory().len(), synth.domain.inventory().len() + 1);
    assert_eq!(back.extra_canonicals_tsv(), "cars whose speed is warp\t(warp cars)\n");
}

#[test]
fn conflicting_logical_forms_are_rejected() {
    let ex = vec![Example::new("d", "a", "x y", "(p)"), Example::new("d", "b", "x y", "(q)")];
    assert!(matches!(Domain::new("d", ex, vec![]), Err(Error::Consistency(_))));
    let ex = vec![Example::new("d", "a", "x y", "(p)"), Example::new("d", "b", "x z", "(p)")];
    assert!(matches!(Domain::new("d", ex, vec![]), Err(Error::Consistency(_))));
}

#[test]
fn merged_domains_keep_identical_canonicals_apart() {
    let a = Domain::new("a", vec![Example::new("a", "hi", "greeting", "(g)")], vec![]).unwrap();
    let b = Domain::new("b", vec![Example::new("b", "hello", "greeting", "(g)")], vec![]).unwrap();
    let m = merge_source_domains(&[a.clone(), b]).unwrap();
    assert_eq!(m.name(), "a+b");
    assert_eq!(m.inventory().len(), 2);
    assert_eq!(m.candidates("a").len(), 1);
    assert_eq!(m.domain_ids(), ["a", "b"]);
    assert!(matches!(merge_source_domains(&[a.clone(), a]), Err(Error::Naming(_))));
}

#[test]
fn downsampled_splits_keep_test_whole() {
    let s = split_domain(&numbered(200), 3).unwrap();
    let sub = s.downsampled(0.25, 8).unwrap();
    assert_eq!((sub.train.len(), sub.validation.len(), sub.test.len()), (32, 8, 40));
    assert_eq!(sub.test, s.test);
    assert!(sub.train.iter().all(|e| s.train.contains(e)));
    assert!(sub.validation.iter().all(|e| s.validation.contains(e)));
}

#[test]
fn synthetic_domains_have_expected_shape() {
    let d = common::synth_domain("toy", 1).domain;
    assert_eq!((d.examples().len(), d.inventory().len()), (200, 40));
    let d = common::operator_domain("toy", 1).domain;
    assert_eq!((d.examples().len(), d.inventory().len()), (240, 48));
    let counts = common::token_counts(&d);
    assert!(counts.contains_key("whose"));
}

proptest! {
    #[test]
    fn split_is_a_seeded_partition(n in 5usize..300, seed in 0u64..50) {
        let d = numbered(n);
        let s = split_domain(&d, seed).unwrap();
        let test = n / 5;
        let val = (n - test) / 5;
        prop_assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (n - test - val, val, test));
        let all: Vec<Example> = s.train.iter().chain(&s.validation).chain(&s.test).cloned().collect();
        prop_assert_eq!(keyed(&all), keyed(d.examples()));
        prop_assert_eq!(&s, &split_domain(&d, seed).unwrap());
    }

    #[test]
    fn downsample_is_an_ordered_subset(n in 1usize..200, rate in 0.01f64..=1.0, seed in 0u64..50) {
        let d = numbered(n);
        let sub = downsample(d.examples(), rate, seed).unwrap();
        prop_assert_eq!(sub.len(), ((rate * n as f64).floor() as usize).clamp(1, n));
        let pos: HashMap<String, usize> =
            d.examples().iter().enumerate().map(|(i, e)| (e.utterance.join(" "), i)).collect();
        let idx: Vec<usize> = sub.iter().map(|e| pos[&e.utterance.join(" ")]).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn vocabulary_roundtrips(words in prop::collection::vec("[a-z]{1,6}", 1..30)) {
        let mut v = Vocabulary::new();
        for w in &words {
            v.add(w);
        }
        let ids = v.encode(&words);
        prop_assert_eq!(v.decode(&ids), words.clone());
        prop_assert_eq!(v.id("NOT-A-WORD"), UNK);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn tokenize_lowercases_and_splits_on_spaces(words in prop::collection::vec("[A-Za-z]{1,6}", 1..10)) {
        let text = words.join("   ");
        let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        prop_assert_eq!(tokenize(&text), lower);
    }

    #[test]
    fn vocabulary_covers_every_canonical(seed in 0u64..20) {
        let d = common::synth_domain("toy", seed).domain;
        let v = build_vocabulary([&d]);
        for c in d.inventory() {
            prop_assert!(c.tokens.iter().all(|t| v.contains(t)));
        }
    }
}
