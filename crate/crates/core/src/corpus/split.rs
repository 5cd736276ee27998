use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

use super::{Domain, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    pub seed: u64,
}

impl Splits {
    /// Training and validation examples downsampled at `rate`; the test
    /// split is kept whole.
    pub fn downsampled(&self, rate: f64, seed: u64) -> Result<Splits> {
        Ok(Splits {
            train: downsample(&self.train, rate, util::derive_seed(seed, &[0]))?,
            validation: downsample(&self.validation, rate, util::derive_seed(seed, &[1]))?,
            test: self.test.clone(),
            seed: self.seed,
        })
    }
}

/// Shuffles with `seed`, then takes `floor(0.2 N)` for test and
/// `floor(0.2 (N - test))` of the rest for validation.
pub fn split_domain(d: &Domain, seed: u64) -> Result<Splits> {
    let n = d.examples().len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "domain {:?} has {n} examples, at least 5 are needed to split",
            d.name()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut util::rng(seed));
    let test = n / 5;
    let validation = (n - test) / 5;
    let take = |idx: &[usize]| idx.iter().map(|&i| d.examples()[i].clone()).collect();
    Ok(Splits {
        test: take(&order[..test]),
        validation: take(&order[test..test + validation]),
        train: take(&order[test + validation..]),
        seed,
    })
}

/// Seeded sample without replacement of `max(1, floor(rate N))` examples,
/// kept in their original order.
pub fn downsample(examples: &[Example], rate: f64, seed: u64) -> Result<Vec<Example>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Range(format!("downsampling rate {rate} is outside (0, 1]")));
    }
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let n = examples.len();
    let k = ((rate * n as f64).floor() as usize).clamp(1, n);
    let mut idx = index::sample(&mut util::rng(seed), n, k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| examples[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(n: usize) -> Domain {
        let ex = (0..n)
            .map(|i| Example::new("d", &format!("u {i}"), &format!("c {i}"), &format!("z{i}")))
            .collect();
        Domain::new("d", ex, vec![]).unwrap()
    }

    #[test]
    fn split_sizes() {
        for (n, sizes) in [(100, (64, 16, 20)), (10, (7, 1, 2)), (5, (4, 0, 1))] {
            let s = split_domain(&dom(n), 1).unwrap();
            assert_eq!((s.train.len(), s.validation.len(), s.test.len()), sizes);
        }
        assert!(matches!(split_domain(&dom(4), 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn split_is_seeded() {
        let d = dom(30);
        assert_eq!(split_domain(&d, 5).unwrap(), split_domain(&d, 5).unwrap());
        assert_ne!(split_domain(&d, 5).unwrap().test, split_domain(&d, 6).unwrap().test);
    }

    #[test]
    fn downsample_sizes() {
        let d = dom(10);
        let all = downsample(d.examples(), 1.0, 3).unwrap();
        assert_eq!(all, d.examples());
        assert_eq!(downsample(d.examples(), 0.5, 3).unwrap().len(), 5);
        assert_eq!(downsample(d.examples(), 0.01, 3).unwrap().len(), 1);
        assert_eq!(downsample(d.examples(), 0.5, 3).unwrap(), downsample(d.examples(), 0.5, 3).unwrap());
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(downsample(d.examples(), bad, 0), Err(Error::Range(_))));
        }
        let s = split_domain(&dom(100), 2).unwrap();
        let small = s.downsampled(0.1, 4).unwrap();
        assert_eq!((small.train.len(), small.validation.len(), small.test), (6, 1, s.test.clone()));
        assert!(small.train.iter().all(|e| s.train.contains(e)));
    }
}
