use rand::seq::index;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::util::{self, mean_std};

use super::{EmbeddingMatrix, Strategy};

pub const STATS_CSV_HEADER: &str = "strategy,l2_mean,l2_std,mv_mean,mv_std,cos_mean,cos_std,pairs,seed";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedStats {
    pub strategy: Strategy,
    pub l2_mean: f64,
    pub l2_std: f64,
    pub mv_mean: f64,
    pub mv_std: f64,
    pub cos_mean: f64,
    pub cos_std: f64,
    pub pairs: usize,
    pub seed: u64,
}

impl EmbedStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.strategy,
            self.l2_mean,
            self.l2_std,
            self.mv_mean,
            self.mv_std,
            self.cos_mean,
            self.cos_std,
            self.pairs,
            self.seed
        )
    }
}

/// Pair `k` in the ordering (0,1), (0,2), (1,2), (0,3), ...
fn decode_pair(k: usize) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0) as usize;
    while j * (j - 1) / 2 > k {
        j -= 1;
    }
    while (j + 1) * j / 2 <= k {
        j += 1;
    }
    (k - j * (j - 1) / 2, j)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Row norms and variances over all rows; cosine statistics over
/// `n_pairs` distinct row pairs drawn with `seed` (every pair if fewer exist).
pub fn embedding_stats(e: &EmbeddingMatrix, n_pairs: usize, seed: u64) -> Result<EmbedStats> {
    let n = e.rows();
    if n < 2 || n_pairs == 0 {
        return Err(Error::Range(format!(
            "embedding statistics need at least 2 rows and 1 pair, got {n} rows and {n_pairs} pairs"
        )));
    }
    let d = e.dim() as f64;
    let norms: Vec<f64> = (0..n)
        .map(|i| e.row(i).iter().fold(0.0, |a, &x| a + x * x).sqrt())
        .collect();
    let variances: Vec<f64> = (0..n)
        .map(|i| {
            let row = e.row(i);
            let mean = row.iter().fold(0.0, |a, &x| a + x) / d;
            row.iter().fold(0.0, |a, &x| a + (x - mean) * (x - mean)) / d
        })
        .collect();

    let total = n * (n - 1) / 2;
    let picks: Vec<usize> = if n_pairs >= total {
        (0..total).collect()
    } else {
        let mut idx = index::sample(&mut util::rng(seed), total, n_pairs).into_vec();
        idx.sort_unstable();
        idx
    };
    let cosines: Vec<f64> = picks
        .iter()
        .map(|&k| {
            let (i, j) = decode_pair(k);
            cosine(e.row(i), e.row(j))
        })
        .collect();

    let (l2_mean, l2_std) = mean_std(norms.iter().copied());
    let (mv_mean, mv_std) = mean_std(variances.iter().copied());
    let (cos_mean, cos_std) = mean_std(cosines.iter().copied());
    Ok(EmbedStats {
        strategy: e.strategy(),
        l2_mean,
        l2_std,
        mv_mean,
        mv_std,
        cos_mean,
        cos_std,
        pairs: cosines.len(),
        seed,
    })
}
