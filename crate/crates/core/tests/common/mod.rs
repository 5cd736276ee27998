#![allow(dead_code)]

use std::collections::HashMap;

use numcore::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xdsp::corpus::{Domain, Example, EOS};
use xdsp::embed::WordVectors;
use xdsp::model::{GruParams, ModelDims, ModelParams};

pub const ATTRS: usize = 4;
pub const VALUES_PER_ATTR: usize = 2;
pub const MAX_NOUNS: usize = 5;

/// Function words every synthetic domain shares.
pub const FUNCTION_WORDS: [&str; 25] = [
    "show", "find", "which", "list", "all", "with", "that", "have", "whose", "is", "me", "without", "do", "not",
    "lack", "how", "many", "count", "number", "of", "are", "there", "any", "give", "the",
];

/// A canonical template, its logical-form head and the utterance templates
/// that paraphrase it.
pub struct Operator {
    pub canonical: &'static str,
    pub head: &'static str,
    pub utterances: [&'static str; 5],
}

pub const EQUALS: Operator = Operator {
    canonical: "{n} whose {a} is {v}",
    head: "filter",
    utterances: [
        "show me {n} whose {a} is {v}",
        "find {n} with {v} {a}",
        "which {n} have {a} {v}",
        "list all {n} that have {v} {a}",
        "{n} with {a} {v}",
    ],
};

pub const EXCLUDES: Operator = Operator {
    canonical: "{n} whose {a} is not {v}",
    head: "exclude",
    utterances: [
        "show me {n} whose {a} is not {v}",
        "find {n} without {v} {a}",
        "which {n} do not have {a} {v}",
        "list all {n} that lack {v} {a}",
        "{n} without {a} {v}",
    ],
};

pub const COUNTS: Operator = Operator {
    canonical: "number of {n} whose {a} is {v}",
    head: "count",
    utterances: [
        "how many {n} have {v} {a}",
        "count {n} with {a} {v}",
        "give me the number of {n} whose {a} is {v}",
        "how many {n} with {v} {a} are there",
        "count all {n} that have {a} {v}",
    ],
};

/// A canonical word, the utterance-side words that may replace it, and the
/// concept its embedding clusters around.
#[derive(Debug, Clone)]
pub struct Slot {
    pub canonical: String,
    pub synonyms: Vec<String>,
    pub concept: usize,
}

fn slot(prefix: &str, kind: char, i: usize, concept: usize) -> Slot {
    let canonical = format!("{prefix}{kind}{i}");
    Slot {
        synonyms: vec![format!("{canonical}x"), format!("{canonical}y")],
        canonical,
        concept,
    }
}

fn surface<'a>(s: &'a Slot, rng: &mut ChaCha8Rng) -> &'a str {
    match rng.gen_range(0..3) {
        0 => &s.canonical,
        k => &s.synonyms[k - 1],
    }
}

pub struct SynthDomain {
    pub domain: Domain,
    pub slots: Vec<Slot>,
}

/// Canonicals for every (noun, attribute value, operator) combination, each
/// with five lexical-substitution paraphrases. Content words are prefixed
/// with `name`; concepts line up across domains, so the i-th noun of every
/// domain is a cross-domain synonym of the others.
pub fn grammar_domain(name: &str, nouns: usize, operators: &[Operator], seed: u64) -> SynthDomain {
    assert!(nouns <= MAX_NOUNS);
    let f = FUNCTION_WORDS.len();
    let nouns: Vec<Slot> = (0..nouns).map(|i| slot(name, 'n', i, f + i)).collect();
    let attrs: Vec<Slot> = (0..ATTRS).map(|i| slot(name, 'a', i, f + MAX_NOUNS + i)).collect();
    let values: Vec<Slot> = (0..ATTRS * VALUES_PER_ATTR)
        .map(|i| slot(name, 'v', i, f + MAX_NOUNS + ATTRS + i))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    for op in operators {
        for n in &nouns {
            for (j, v) in values.iter().enumerate() {
                let a = &attrs[j / VALUES_PER_ATTR];
                let fill = |t: &str, n: &str, a: &str, v: &str| t.replace("{n}", n).replace("{a}", a).replace("{v}", v);
                let canonical = fill(op.canonical, &n.canonical, &a.canonical, &v.canonical);
                let lf = format!("({} {} {} {})", op.head, n.canonical, a.canonical, v.canonical);
                for t in op.utterances {
                    let (sn, sa, sv) = (surface(n, &mut rng), surface(a, &mut rng), surface(v, &mut rng));
                    examples.push(Example::new(name, &fill(t, sn, sa, sv), &canonical, &lf));
                }
            }
        }
    }
    let slots = nouns.into_iter().chain(attrs).chain(values).collect();
    SynthDomain {
        domain: Domain::new(name, examples, vec![]).unwrap(),
        slots,
    }
}

/// 40 canonicals `<noun> whose <attr> is <value>`, 200 examples.
pub fn synth_domain(name: &str, seed: u64) -> SynthDomain {
    grammar_domain(name, 5, &[EQUALS], seed)
}

/// 48 canonicals over three operators, 240 examples.
pub fn operator_domain(name: &str, seed: u64) -> SynthDomain {
    grammar_domain(name, 2, &[EQUALS, EXCLUDES, COUNTS], seed)
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Pre-trained-like vectors: every word of a concept is the concept's base
/// vector plus small noise, so synonyms within and across domains sit at
/// cosine well above 0.9.
pub fn synth_vectors(domains: &[&SynthDomain], dim: usize, seed: u64) -> WordVectors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let concepts = FUNCTION_WORDS.len() + MAX_NOUNS + ATTRS + ATTRS * VALUES_PER_ATTR;
    let bases: Vec<Vec<f64>> = (0..concepts).map(|_| gaussian(&mut rng, dim)).collect();
    let mut table = WordVectors::new(dim);
    let mut put = |word: &str, concept: usize, rng: &mut ChaCha8Rng| {
        let noise = gaussian(rng, dim);
        let v: Vec<f64> = bases[concept].iter().zip(&noise).map(|(b, e)| b + 0.1 * e).collect();
        table.insert(word, &v).unwrap();
    };
    for (i, w) in FUNCTION_WORDS.iter().enumerate() {
        put(w, i, &mut rng);
    }
    for d in domains {
        for s in &d.slots {
            put(&s.canonical, s.concept, &mut rng);
            for w in &s.synonyms {
                put(w, s.concept, &mut rng);
            }
        }
    }
    table
}

/// Rescales every row to an L2 norm drawn uniformly from `[lo, hi]`.
pub fn rescale_rows(table: &WordVectors, lo: f64, hi: f64, seed: u64) -> WordVectors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = WordVectors::new(table.dim());
    for w in table.words() {
        let v = table.get(w).unwrap();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let target = rng.gen_range(lo..=hi);
        let scaled: Vec<f64> = v.iter().map(|x| x * target / norm).collect();
        out.insert(w, &scaled).unwrap();
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn random_model(dims: ModelDims, scale: f64, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(dims);
    for (_, t) in numcore::Parameters::named_mut(&mut p) {
        for x in t.data_mut() {
            *x = rng.gen_range(-scale..scale);
        }
    }
    p
}

pub fn shuffled<T: Clone>(xs: &[T], seed: u64) -> Vec<T> {
    let mut v = xs.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

// Naive reference implementation of the model's forward pass: plain index
// loops over the raw parameter arrays, written independently of the library
// kernels.

fn mv(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    let d = w.data();
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += d[r * cols + c] * x[c];
        }
        out[r] = acc;
    }
    out
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn naive_gru(g: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let s = h.len();
    let (wz, uz) = (mv(&g.w_z, x), mv(&g.u_z, h));
    let (wr, ur) = (mv(&g.w_r, x), mv(&g.u_r, h));
    let mut z = vec![0.0; s];
    let mut r = vec![0.0; s];
    for k in 0..s {
        z[k] = logistic((wz[k] + uz[k]) + g.b_z.data()[k]);
        r[k] = logistic((wr[k] + ur[k]) + g.b_r.data()[k]);
    }
    let mut rh = vec![0.0; s];
    for k in 0..s {
        rh[k] = r[k] * h[k];
    }
    let (wh, uh) = (mv(&g.w_h, x), mv(&g.u_h, &rh));
    let mut out = vec![0.0; s];
    for k in 0..s {
        let cand = ((wh[k] + uh[k]) + g.b_h.data()[k]).tanh();
        out[k] = z[k] * h[k] + (1.0 - z[k]) * cand;
    }
    out
}

pub struct NaiveEncoding {
    pub states: Vec<Vec<f64>>,
    pub d0: Vec<f64>,
}

pub fn naive_encode(p: &ModelParams, u: &[usize]) -> NaiveEncoding {
    let s = p.w2.shape()[0];
    let m = u.len();
    let mut fwd = vec![vec![0.0; s]; m];
    let mut h = vec![0.0; s];
    for i in 0..m {
        h = naive_gru(&p.enc_fwd, p.embedding.row(u[i]), &h);
        fwd[i] = h.clone();
    }
    let mut bwd = vec![vec![0.0; s]; m];
    let mut h = vec![0.0; s];
    for i in (0..m).rev() {
        h = naive_gru(&p.enc_bwd, p.embedding.row(u[i]), &h);
        bwd[i] = h.clone();
    }
    let mut states = Vec::new();
    for i in 0..m {
        let mut st = fwd[i].clone();
        st.extend_from_slice(&bwd[i]);
        states.push(st);
    }
    let mut ends = fwd[m - 1].clone();
    ends.extend_from_slice(&bwd[0]);
    let d0 = mv(&p.w0, &ends).into_iter().map(f64::tanh).collect();
    NaiveEncoding { states, d0 }
}

/// Attention weights, context and log-distribution for decoder state `d`.
pub fn naive_predict(p: &ModelParams, enc: &NaiveEncoding, d: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let q = mv(&p.w2, d);
    let m = enc.states.len();
    let mut scores = vec![0.0; m];
    for i in 0..m {
        let key = mv(&p.w1, &enc.states[i]);
        let mut acc = 0.0;
        for k in 0..q.len() {
            acc += p.v.data()[k] * (key[k] + q[k]).tanh();
        }
        scores[i] = acc;
    }
    let mut mx = f64::NEG_INFINITY;
    for &x in &scores {
        if x > mx {
            mx = x;
        }
    }
    let mut alpha = vec![0.0; m];
    let mut total = 0.0;
    for i in 0..m {
        alpha[i] = (scores[i] - mx).exp();
        total += alpha[i];
    }
    for a in alpha.iter_mut() {
        *a /= total;
    }
    let width = enc.states[0].len();
    let mut ctx = vec![0.0; width];
    for i in 0..m {
        for k in 0..width {
            ctx[k] += alpha[i] * enc.states[i][k];
        }
    }
    let mut feat = d.to_vec();
    feat.extend_from_slice(&ctx);
    let raw = mv(&p.out_w, &feat);
    let mut logits = vec![0.0; raw.len()];
    for i in 0..raw.len() {
        logits[i] = raw[i] + p.out_b.data()[i];
    }
    let mut mx = f64::NEG_INFINITY;
    for &x in &logits {
        if x > mx {
            mx = x;
        }
    }
    let mut total = 0.0;
    for &x in &logits {
        total += (x - mx).exp();
    }
    let lse = total.ln();
    let lp = logits.iter().map(|&x| (x - mx) - lse).collect();
    (alpha, ctx, lp)
}

pub fn naive_advance(p: &ModelParams, d: &[f64], token: usize, ctx: &[f64]) -> Vec<f64> {
    let mut x = p.embedding.row(token).to_vec();
    x.extend_from_slice(ctx);
    naive_gru(&p.dec, &x, d)
}

/// `log p(c | u)` by a per-step loop.
pub fn naive_log_prob(p: &ModelParams, u: &[usize], c: &[usize]) -> f64 {
    let enc = naive_encode(p, u);
    let mut d = enc.d0.clone();
    let mut total = 0.0;
    for &t in c {
        let (_, ctx, lp) = naive_predict(p, &enc, &d);
        total += lp[t];
        d = naive_advance(p, &d, t, &ctx);
    }
    let (_, _, lp) = naive_predict(p, &enc, &d);
    total + lp[EOS]
}

/// Candidate order by naive scores: descending, ties to the lower index.
pub fn naive_ranking(p: &ModelParams, u: &[usize], candidates: &[Vec<usize>]) -> (Vec<usize>, Vec<f64>) {
    let scores: Vec<f64> = candidates.iter().map(|c| naive_log_prob(p, u, c)).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && scores[order[j]] > scores[order[j - 1]] {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    (order, scores)
}

pub fn token_counts(domain: &Domain) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for e in domain.examples() {
        for t in e.utterance.iter().chain(&e.canonical) {
            *m.entry(t.clone()).or_insert(0) += 1;
        }
    }
    m
}
