//! Ranking inference, accuracy, greedy generation and result analysis.

mod report;
mod sweep;

use std::collections::HashMap;

use numcore::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Canonical, Domain, Example, Vocabulary, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{self, ModelParams};

pub use report::{build_report, Correlation, CurveRow, EvalReport, Report, ReportRow, Setting, CORRELATION_CSV_HEADER};
pub use sweep::{sweep_curve, CurvePoint, SweepPoint, DEFAULT_RATES, DEFAULT_REPEATS, SWEEP_CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    /// Position in the candidate list that was ranked.
    pub index: usize,
    pub canonical: String,
    pub logical_form: String,
    /// `log p(c | u)`.
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Candidate canonicals with their token ids.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    canonicals: Vec<Canonical>,
    ids: Vec<Vec<usize>>,
}

impl CandidateSet {
    pub fn new(canonicals: &[Canonical], vocab: &Vocabulary) -> Result<Self> {
        if canonicals.is_empty() {
            return Err(Error::Contract("cannot rank an empty canonical inventory".into()));
        }
        Ok(CandidateSet {
            canonicals: canonicals.to_vec(),
            ids: canonicals.iter().map(|c| vocab.encode(&c.tokens)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.canonicals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonicals.is_empty()
    }

    pub fn canonicals(&self) -> &[Canonical] {
        &self.canonicals
    }
}

/// Scores of every candidate for one encoded utterance, in candidate order.
fn score_all<T: Scalar>(params: &ModelParams<T>, utterance: &[usize], set: &CandidateSet) -> Result<Vec<T>> {
    let enc = model::encode(params, utterance)?;
    set.ids.iter().map(|c| model::score_encoded(params, &enc, c)).collect()
}

/// Candidate indices ordered by descending score; equal scores keep the
/// lower index first.
fn order<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

fn rank_ids<T: Scalar>(params: &ModelParams<T>, utterance: &[usize], set: &CandidateSet) -> Result<Vec<RankedCandidate>> {
    let scores = score_all(params, utterance, set)?;
    Ok(order(&scores)
        .into_iter()
        .enumerate()
        .map(|(r, i)| RankedCandidate {
            index: i,
            canonical: set.canonicals[i].text(),
            logical_form: set.canonicals[i].logical_form.clone(),
            score: scores[i].as_f64(),
            rank: r + 1,
        })
        .collect())
}

/// Scores every candidate with dropout off and sorts by descending
/// `log p(c | u)`.
pub fn rank_canonicals<T: Scalar>(
    params: &ModelParams<T>,
    vocab: &Vocabulary,
    utterance: &[String],
    candidates: &[Canonical],
) -> Result<Vec<RankedCandidate>> {
    let set = CandidateSet::new(candidates, vocab)?;
    rank_ids(params, &vocab.encode(utterance), &set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub utterance: String,
    pub gold: String,
    pub predicted: String,
    pub logical_form: String,
    pub score: f64,
    pub correct: bool,
}

/// Candidate sets per domain id of `inventory`.
pub struct Ranker<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    vocab: &'a Vocabulary,
    sets: HashMap<String, CandidateSet>,
}

impl<'a, T: Scalar> Ranker<'a, T> {
    pub fn new(params: &'a ModelParams<T>, vocab: &'a Vocabulary, inventory: &Domain) -> Result<Self> {
        let mut sets = HashMap::new();
        for c in inventory.inventory() {
            if !sets.contains_key(&c.domain) {
                let members: Vec<Canonical> = inventory
                    .candidates(&c.domain)
                    .into_iter()
                    .map(|i| inventory.inventory()[i].clone())
                    .collect();
                sets.insert(c.domain.clone(), CandidateSet::new(&members, vocab)?);
            }
        }
        Ok(Ranker { params, vocab, sets })
    }

    fn set_for(&self, e: &Example) -> Result<&CandidateSet> {
        self.sets
            .get(&e.domain)
            .ok_or_else(|| Error::Contract(format!("no canonicals for domain {:?}", e.domain)))
    }

    /// Top-ranked canonical for one example.
    pub fn predict(&self, e: &Example) -> Result<Prediction> {
        let set = self.set_for(e)?;
        let scores = score_all(self.params, &self.vocab.encode(&e.utterance), set)?;
        let best = order(&scores)[0];
        let top = &set.canonicals[best];
        Ok(Prediction {
            utterance: e.utterance.join(" "),
            gold: e.canonical.join(" "),
            predicted: top.text(),
            logical_form: top.logical_form.clone(),
            score: scores[best].as_f64(),
            correct: top.tokens == e.canonical,
        })
    }

    /// Predictions in example order; examples are scored in parallel.
    pub fn predict_all(&self, examples: &[Example]) -> Result<Vec<Prediction>> {
        examples.par_iter().map(|e| self.predict(e)).collect()
    }

    pub fn accuracy(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Contract("accuracy of an empty example set".into()));
        }
        let correct = examples
            .par_iter()
            .map(|e| self.predict(e).map(|p| p.correct as usize))
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(correct as f64 / examples.len() as f64)
    }
}

/// Fraction of `examples` whose top-ranked canonical (among those of the
/// example's own domain) is the gold one.
pub fn evaluate_accuracy<T: Scalar>(
    params: &ModelParams<T>,
    vocab: &Vocabulary,
    examples: &[Example],
    inventory: &Domain,
) -> Result<f64> {
    Ranker::new(params, vocab, inventory)?.accuracy(examples)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Emitted tokens, without the end marker.
    pub tokens: Vec<usize>,
    /// True when `max_len` tokens were produced without an end marker.
    pub truncated: bool,
}

/// Feeds back the most likely token at each step until `</s>` or `max_len`
/// tokens. `<pad>` and `<s>` are never chosen.
pub fn generate_greedy<T: Scalar>(params: &ModelParams<T>, utterance: &[usize], max_len: usize) -> Result<Generation> {
    if max_len == 0 {
        return Err(Error::Range("max_len must be at least 1".into()));
    }
    let enc = model::encode(params, utterance)?;
    let mut d = model::decoder_init(params, &enc);
    let mut tokens = Vec::new();
    while tokens.len() < max_len {
        let out = model::predict(params, &enc, &d);
        let mut best = EOS;
        for (id, &lp) in out.log_probs.iter().enumerate() {
            if id != PAD && id != BOS && lp > out.log_probs[best] {
                best = id;
            }
        }
        if best == EOS {
            return Ok(Generation {
                tokens,
                truncated: false,
            });
        }
        d = model::advance(params, &d, best, &out.context)?;
        tokens.push(best);
    }
    Ok(Generation {
        tokens,
        truncated: true,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need two equally long series of at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
