//! Central-difference verification of tape gradients.

use std::collections::BTreeMap;

use crate::error::{NumError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Per-parameter outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over all coordinates of all parameters.
    pub max_relative_error: f64,
    /// Largest relative error per parameter name.
    pub per_param: BTreeMap<String, f64>,
    pub coordinates: usize,
}

/// Compares `backward` against central differences for every coordinate of
/// every parameter in `params`.
///
/// `f` must register each entry of `params` on the tape it is handed (under
/// the same name) and return the scalar loss. The relative error of one
/// coordinate is `|g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8)`.
pub fn grad_check<F>(f: F, params: &BTreeMap<String, Tensor<f64>>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &BTreeMap<String, Tensor<f64>>) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(NumError::Contract(format!("eps must be positive, got {eps}")));
    }
    let eval = |p: &BTreeMap<String, Tensor<f64>>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, p)?;
        tape.value(loss)
            .item()
            .ok_or_else(|| NumError::Contract("objective is not scalar".into()))
    };

    let first = eval(params)?;
    let second = eval(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(NumError::Determinism { first, second });
    }

    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let analytic = tape.backward(loss)?;

    let mut per_param = BTreeMap::new();
    let mut worst: f64 = 0.0;
    let mut coordinates = 0;
    let mut probe = params.clone();
    for (name, tensor) in params {
        let g_ad = analytic.get(name).ok_or_else(|| {
            NumError::Contract(format!("parameter {name:?} was not registered by the objective"))
        })?;
        let mut param_worst: f64 = 0.0;
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig;

            let fd = (plus - minus) / (2.0 * eps);
            let ad = g_ad.data()[i];
            let denom = ad.abs().max(fd.abs()).max(1e-8);
            param_worst = param_worst.max((ad - fd).abs() / denom);
            coordinates += 1;
        }
        worst = worst.max(param_worst);
        per_param.insert(name.clone(), param_worst);
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        per_param,
        coordinates,
    })
}
