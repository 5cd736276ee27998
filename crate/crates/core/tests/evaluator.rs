mod common;

use xdsp::corpus::{build_vocabulary, Domain, Example};
use xdsp::evaluator::{
    build_report, generate_greedy, pearson_correlation, rank_canonicals, sweep_curve, EvalReport, Ranker, Setting,
    SweepPoint,
};
use xdsp::model::ModelDims;
use xdsp::Error;

fn toy() -> (Domain, xdsp::corpus::Vocabulary, xdsp::model::ModelParams) {
    let d = common::synth_domain("toy", 3).domain;
    let v = build_vocabulary([&d]);
    let p = common::random_model(
        ModelDims {
            vocab: v.len(),
            embed: 4,
            state: 3,
        },
        0.6,
        8,
    );
    (d, v, p)
}

#[test]
fn predictions_agree_with_naive_ranking() {
    let (d, v, p) = toy();
    let ranker = Ranker::new(&p, &v, &d).unwrap();
    let examples = &d.examples()[..30];
    let preds = ranker.predict_all(examples).unwrap();
    let candidates: Vec<Vec<usize>> = d.inventory().iter().map(|c| v.encode(&c.tokens)).collect();
    let mut correct = 0;
    for (e, pred) in examples.iter().zip(&preds) {
        let (order, scores) = common::naive_ranking(&p, &v.encode(&e.utterance), &candidates);
        assert_eq!(pred.predicted, d.inventory()[order[0]].text());
        assert_eq!(pred.score.to_bits(), scores[order[0]].to_bits());
        assert_eq!(pred.correct, pred.predicted == pred.gold);
        correct += pred.correct as usize;
    }
    assert_eq!(ranker.accuracy(examples).unwrap(), correct as f64 / examples.len() as f64);
}

#[test]
fn ranks_are_one_based_and_sorted() {
    let (d, v, p) = toy();
    let ranked = rank_canonicals(&p, &v, &d.examples()[0].utterance, d.inventory()).unwrap();
    assert_eq!(ranked.len(), d.inventory().len());
    assert!(ranked.iter().enumerate().all(|(i, r)| r.rank == i + 1));
    assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn greedy_generation_stops_at_max_len() {
    let (d, v, p) = toy();
    let g = generate_greedy(&p, &v.encode(&d.examples()[0].utterance), 4).unwrap();
    assert!(g.tokens.len() <= 4);
    assert_eq!(g.truncated, g.tokens.len() == 4);
    assert!(g.tokens.iter().all(|&t| t >= 4));
    assert!(generate_greedy(&p, &[5], 0).is_err());
}

#[test]
fn unknown_domain_is_a_contract_error() {
    let (d, v, p) = toy();
    let ranker = Ranker::new(&p, &v, &d).unwrap();
    let stray = Example::new("elsewhere", "show me", "nothing", "(z)");
    assert!(matches!(ranker.predict(&stray), Err(Error::Contract(_))));
}

#[test]
fn pearson_degenerate_inputs() {
    assert!(matches!(pearson_correlation(&[1.0], &[2.0]), Err(Error::DegenerateInput(_))));
    assert!(matches!(pearson_correlation(&[1.0, 1.0], &[2.0, 3.0]), Err(Error::DegenerateInput(_))));
    assert!(matches!(pearson_correlation(&[1.0, 2.0], &[2.0]), Err(Error::DegenerateInput(_))));
}

#[test]
fn curve_averages_repeats() {
    let points: Vec<SweepPoint> = [(0.5, 0.2), (0.1, 0.0), (0.5, 0.4), (0.1, 0.1)]
        .iter()
        .enumerate()
        .map(|(i, &(rate, accuracy))| SweepPoint {
            rate,
            repeat: i,
            seed: i as u64,
            accuracy,
        })
        .collect();
    let curve = sweep_curve(&points);
    assert_eq!(curve.len(), 2);
    assert_eq!((curve[0].rate, curve[0].repeats), (0.1, 2));
    assert!((curve[0].mean_accuracy - 0.05).abs() < 1e-15);
    assert!((curve[1].mean_accuracy - 0.3).abs() < 1e-15);
}

fn eval(domain: &str, setting: Setting, examples: usize, accuracy: f64) -> EvalReport {
    EvalReport {
        domain: domain.into(),
        setting,
        init_strategy: "random".into(),
        domain_examples: examples,
        domain_vocab: 100,
        test_examples: 10,
        accuracy,
        seed: 0,
        config_fingerprint: "f".into(),
        predictions: vec![],
        sweep: vec![],
    }
}

#[test]
fn report_pairs_settings_and_correlates() {
    let reports = vec![
        eval("a", Setting::InDomain, 100, 0.5),
        eval("a", Setting::CrossDomain, 100, 0.7),
        eval("b", Setting::InDomain, 300, 0.6),
        eval("b", Setting::CrossDomain, 300, 0.65),
        eval("c", Setting::InDomain, 500, 0.8),
        eval("c", Setting::CrossDomain, 500, 0.8),
    ];
    let report = build_report(&reports).unwrap();
    assert_eq!(report.rows.len(), 3);
    let gains: Vec<f64> = report.rows.iter().map(|r| r.improvement).collect();
    let abundance: Vec<f64> = report.rows.iter().map(|r| r.abundance).collect();
    assert_eq!(abundance, [1.0, 3.0, 5.0]);
    let r = report.correlations[0].pearson_r.unwrap();
    assert!((r - pearson_correlation(&abundance, &gains).unwrap()).abs() < 1e-15);
    assert!(r < 0.0);
    assert!(report.markdown().contains("| a "));
}
