//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::{NumError, Result};
use crate::grads::GradientSet;
use crate::tensor::{Scalar, Tensor};

/// A collection of named trainable tensors.
pub trait Parameters<T: Scalar> {
    fn named(&self) -> Vec<(String, &Tensor<T>)>;
    fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;
}

impl<T: Scalar> Parameters<T> for BTreeMap<String, Tensor<T>> {
    fn named(&self) -> Vec<(String, &Tensor<T>)> {
        self.iter().map(|(k, v)| (k.clone(), v)).collect()
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.iter_mut().map(|(k, v)| (k.clone(), v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f64> {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Tensor<T>>,
    second: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with zero moments shaped like `params`.
    pub fn new<P: Parameters<T> + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let zeros: BTreeMap<_, _> = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, Tensor::zeros(t.shape())))
            .collect();
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor<T>> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor<T>> {
        self.second.get(name)
    }
}

/// Applies one Adam update in place and advances the step counter.
///
/// Every parameter must have a gradient and moments of the same shape;
/// nothing is modified if that check fails.
pub fn adam_step<T: Scalar, P: Parameters<T> + ?Sized>(
    params: &mut P,
    grads: &GradientSet<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    {
        let named = params.named();
        if named.len() != grads.len() {
            return Err(NumError::Contract(format!(
                "{} parameters but {} gradients",
                named.len(),
                grads.len()
            )));
        }
        for (name, p) in &named {
            let shapes = [
                grads.get(name).map(Tensor::shape),
                state.first.get(name).map(Tensor::shape),
                state.second.get(name).map(Tensor::shape),
            ];
            if shapes.iter().any(|s| *s != Some(p.shape())) {
                return Err(NumError::Contract(format!(
                    "shape mismatch for parameter {name:?}: param {:?}, grad/m/v {:?}",
                    p.shape(),
                    shapes
                )));
            }
        }
    }

    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
    let lr = T::from_f64(c.learning_rate);
    let eps = T::from_f64(c.epsilon);
    let t = state.step as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);

    for (name, p) in params.named_mut() {
        let g = grads.get(&name).unwrap().data();
        let m = state.first.get_mut(&name).unwrap().data_mut();
        let v = state.second.get_mut(&name).unwrap().data_mut();
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *pi = *pi - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
