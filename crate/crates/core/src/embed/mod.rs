//! Word embedding initialisation.
//!
//! Rows of an [`EmbeddingMatrix`] either come from a pre-trained file or are
//! filled from `U(−√3, √3)` (unit variance in expectation). The transforms in
//! this module rescale pre-trained rows only; random-filled rows are left as
//! they are and never trigger a degenerate-row error.
//!
//! Variances are population variances (divide by the number of entries).
//! None of the transforms subtract the mean from the data.

mod io;
mod stats;

use std::borrow::Cow;
use std::fmt;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub use io::{load_pretrained, load_pretrained_from_table, read_text_embeddings, text_embedding_dim, WordVectors};
pub use stats::{embedding_stats, EmbedStats, STATS_CSV_HEADER};

/// Half-width of the uniform initialisation interval, `√3`.
pub const UNIFORM_LIMIT: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Pretrained,
    RandomFilled,
}

/// The last initialisation or transform applied to a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Raw,
    PerExampleStandardized,
    PerFeatureStandardized,
    PerExampleNormalized,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Raw => "raw",
            Strategy::PerExampleStandardized => "per-example-standardized",
            Strategy::PerFeatureStandardized => "per-feature-standardized",
            Strategy::PerExampleNormalized => "per-example-normalized",
        })
    }
}

/// Transform applied to pre-trained vectors before they initialise a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Es,
    Fs,
    En,
}

impl Transform {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Transform::None),
            "es" => Some(Transform::Es),
            "fs" => Some(Transform::Fs),
            "en" => Some(Transform::En),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Es => "es",
            Transform::Fs => "fs",
            Transform::En => "en",
        }
    }

    pub fn apply(self, e: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        match self {
            Transform::None => Ok(e.clone()),
            Transform::Es => standardize_per_example(e),
            Transform::Fs => standardize_per_feature(e),
            Transform::En => normalize_per_example(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    provenance: Vec<Provenance>,
    strategy: Strategy,
}

impl EmbeddingMatrix {
    /// Matrix of explicitly supplied vectors, tagged as raw pre-trained rows.
    pub fn from_rows(words: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || dim == 0 {
            return Err(Error::Dimension("embedding matrix needs at least one non-empty row".into()));
        }
        if words.len() != rows.len() {
            return Err(Error::Dimension(format!("{} words for {} rows", words.len(), rows.len())));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Dimension(format!("row {i} has {} entries, expected {dim}", rows[i].len())));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Dimension(format!("non-finite entry in row {}", i / dim)));
        }
        let n = words.len();
        Ok(EmbeddingMatrix {
            words,
            dim,
            data,
            provenance: vec![Provenance::Pretrained; n],
            strategy: Strategy::Raw,
        })
    }

    pub(crate) fn from_parts(
        words: Vec<String>,
        dim: usize,
        data: Vec<f64>,
        provenance: Vec<Provenance>,
        strategy: Strategy,
    ) -> Self {
        debug_assert_eq!(data.len(), provenance.len() * dim);
        EmbeddingMatrix {
            words,
            dim,
            data,
            provenance,
            strategy,
        }
    }

    pub fn rows(&self) -> usize {
        self.provenance.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn provenance(&self, i: usize) -> Provenance {
        self.provenance[i]
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Word for row `i`, or `#i` for matrices built without words.
    pub fn word(&self, i: usize) -> Cow<'_, str> {
        match self.words.get(i) {
            Some(w) => Cow::Borrowed(w),
            None => Cow::Owned(format!("#{i}")),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Fraction of rows copied from a pre-trained source.
    pub fn coverage(&self) -> f64 {
        let pre = self
            .provenance
            .iter()
            .filter(|&&p| p == Provenance::Pretrained)
            .count();
        pre as f64 / self.rows() as f64
    }

    fn begin_transform(&self, target: Strategy) -> Result<EmbeddingMatrix> {
        if self.strategy != Strategy::Raw && self.strategy != target {
            return Err(Error::Strategy {
                current: self.strategy.to_string(),
                requested: target.to_string(),
            });
        }
        let mut out = self.clone();
        out.strategy = target;
        Ok(out)
    }

    fn pretrained_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows()).filter(|&i| self.provenance[i] == Provenance::Pretrained)
    }
}

/// Draws `vocab_size × dim` i.i.d. entries from `U(−√3, √3)`.
pub fn random_embedding(vocab_size: usize, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if vocab_size == 0 || dim == 0 {
        return Err(Error::Dimension(format!(
            "random embedding needs positive sizes, got {vocab_size}×{dim}"
        )));
    }
    let mut rng = util::rng(seed);
    let data = sample_uniform(&mut rng, vocab_size * dim);
    Ok(EmbeddingMatrix::from_parts(
        Vec::new(),
        dim,
        data,
        vec![Provenance::RandomFilled; vocab_size],
        Strategy::Random,
    ))
}

/// Entries strictly inside `(−√3, √3)`.
pub(crate) fn sample_uniform(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    let dist = Uniform::new(-UNIFORM_LIMIT, UNIFORM_LIMIT);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = dist.sample(rng);
        if x > -UNIFORM_LIMIT {
            out.push(x);
        }
    }
    out
}

fn row_mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().fold(0.0, |a, &x| a + x) / n;
    let var = row.iter().fold(0.0, |a, &x| a + (x - mean) * (x - mean)) / n;
    (mean, var)
}

/// Divides every pre-trained row by its own population standard deviation.
pub fn standardize_per_example(e: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut out = e.begin_transform(Strategy::PerExampleStandardized)?;
    let d = e.dim;
    for i in e.pretrained_rows() {
        let row = &mut out.data[i * d..(i + 1) * d];
        let (_, var) = row_mean_var(row);
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::DegenerateRow {
                index: i,
                word: e.word(i).into_owned(),
                reason: "zero variance",
            });
        }
        row.iter_mut().for_each(|x| *x /= std);
    }
    Ok(out)
}

/// Divides every column by its population standard deviation, computed over
/// the pre-trained rows; random-filled rows are not touched.
pub fn standardize_per_feature(e: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut out = e.begin_transform(Strategy::PerFeatureStandardized)?;
    let rows: Vec<usize> = e.pretrained_rows().collect();
    if rows.is_empty() {
        return Ok(out);
    }
    let d = e.dim;
    let n = rows.len() as f64;
    for j in 0..d {
        let mean = rows.iter().fold(0.0, |a, &i| a + e.data[i * d + j]) / n;
        let var = rows.iter().fold(0.0, |a, &i| {
            let x = e.data[i * d + j] - mean;
            a + x * x
        }) / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::DegenerateColumn { index: j });
        }
        for &i in &rows {
            out.data[i * d + j] /= std;
        }
    }
    Ok(out)
}

/// Scales every pre-trained row to unit L2 norm.
pub fn normalize_per_example(e: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut out = e.begin_transform(Strategy::PerExampleNormalized)?;
    let d = e.dim;
    for i in e.pretrained_rows() {
        let row = &mut out.data[i * d..(i + 1) * d];
        let norm = row.iter().fold(0.0, |a, &x| a + x * x).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateRow {
                index: i,
                word: e.word(i).into_owned(),
                reason: "zero norm",
            });
        }
        row.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}
