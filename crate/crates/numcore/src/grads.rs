use std::collections::BTreeMap;

use crate::tensor::{Scalar, Tensor};

/// Gradients keyed by parameter name. Iteration is in name order, which fixes
/// the reduction order of [`GradientSet::global_norm`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientSet<T: Scalar = f64> {
    grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn new() -> Self {
        GradientSet {
            grads: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: String, grad: Tensor<T>) {
        self.grads.insert(name, grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// L2 norm over the concatenation of every gradient.
    pub fn global_norm(&self) -> T {
        self.grads
            .values()
            .fold(T::zero(), |acc, g| acc + g.sum_sq())
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(Tensor::all_finite)
    }

    fn scale(&mut self, k: T) {
        for g in self.grads.values_mut() {
            for x in g.data_mut() {
                *x = *x * k;
            }
        }
    }
}

/// Rescales `g` so its global norm is at most `cap`. Returns the clipped set
/// and the norm before clipping.
///
/// Panics if `cap` is not strictly positive.
pub fn clip_global_norm<T: Scalar>(mut g: GradientSet<T>, cap: T) -> (GradientSet<T>, T) {
    assert!(cap > T::zero(), "clip cap must be positive");
    let norm = g.global_norm();
    if norm > cap {
        g.scale(cap / norm);
    }
    (g, norm)
}
