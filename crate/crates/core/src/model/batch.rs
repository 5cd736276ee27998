//! Differentiable batch loss recorded on a tape.

use numcore::{Scalar, Tape, Tensor, Var};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::corpus::{EOS, PAD};
use crate::error::{Error, Result};

use super::params::{GruVars, ParamVars};

/// Keep probabilities for GRU inputs and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub input_keep: f64,
    pub output_keep: f64,
    pub enabled: bool,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig {
            input_keep: 0.7,
            output_keep: 0.5,
            enabled: true,
        }
    }
}

impl DropoutConfig {
    pub fn disabled() -> Self {
        DropoutConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("input_keep", self.input_keep), ("output_keep", self.output_keep)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Range(format!("{name} must be in (0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// One training pair as token ids: the utterance and the canonical
/// utterance without framing tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
}

struct Masker<'a> {
    config: DropoutConfig,
    rng: &'a mut dyn RngCore,
}

impl Masker<'_> {
    fn apply<T: Scalar>(&mut self, tape: &mut Tape<T>, x: Var, keep: f64) -> Result<Var> {
        if keep >= 1.0 {
            return Ok(x);
        }
        let shape = tape.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let scale = T::from_f64(1.0 / keep);
        let data = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let m = tape.constant(Tensor::new(shape, data)?);
        Ok(tape.mul(x, m)?)
    }
}

fn dropout<T: Scalar>(tape: &mut Tape<T>, masker: &mut Option<Masker<'_>>, x: Var, input: bool) -> Result<Var> {
    match masker {
        Some(m) => {
            let keep = if input { m.config.input_keep } else { m.config.output_keep };
            m.apply(tape, x, keep)
        }
        None => Ok(x),
    }
}

fn gate<T: Scalar>(tape: &mut Tape<T>, w: Var, x: Var, u: Var, h: Var, b: Var) -> Result<Var> {
    let wx = tape.linear(x, w)?;
    let uh = tape.linear(h, u)?;
    let sum = tape.add(wx, uh)?;
    Ok(tape.add_bias(sum, b)?)
}

/// Batched GRU update; rows of `x` and `h` are independent examples.
pub fn gru_step<T: Scalar>(tape: &mut Tape<T>, g: &GruVars, x: Var, h: Var) -> Result<Var> {
    let z = gate(tape, g.w_z, x, g.u_z, h, g.b_z)?;
    let z = tape.sigmoid(z)?;
    let r = gate(tape, g.w_r, x, g.u_r, h, g.b_r)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.mul(r, h)?;
    let c = gate(tape, g.w_h, x, g.u_h, rh, g.b_h)?;
    let c = tape.tanh(c)?;
    let zh = tape.mul(z, h)?;
    let keep = tape.one_minus(z)?;
    let update = tape.mul(keep, c)?;
    Ok(tape.add(zh, update)?)
}

/// Column of 1s for rows where `live` holds, 0 elsewhere; `None` when every
/// row is live.
fn row_mask<T: Scalar>(tape: &mut Tape<T>, live: &[bool]) -> Option<(Var, Var)> {
    if live.iter().all(|&l| l) {
        return None;
    }
    let on: Vec<T> = live.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let off: Vec<T> = live.iter().map(|&l| if l { T::zero() } else { T::one() }).collect();
    let n = live.len();
    Some((
        tape.constant(Tensor::matrix(n, 1, on).expect("column")),
        tape.constant(Tensor::matrix(n, 1, off).expect("column")),
    ))
}

/// `new` where the row is live, `old` elsewhere.
fn blend<T: Scalar>(tape: &mut Tape<T>, new: Var, old: Var, live: &[bool]) -> Result<Var> {
    match row_mask(tape, live) {
        None => Ok(new),
        Some((on, off)) => {
            let a = tape.mul_col(new, on)?;
            let b = tape.mul_col(old, off)?;
            Ok(tape.add(a, b)?)
        }
    }
}

/// Mean negative log-likelihood `−(1/B) Σ_b log p(c_b | u_b)` over a padded
/// batch. Padding positions contribute exactly zero. `dropout`, when given
/// and enabled, draws its masks from the supplied generator.
pub fn batch_loss<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    batch: &[Pair],
    dropout_rng: Option<(DropoutConfig, &mut dyn RngCore)>,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if let Some(p) = batch.iter().position(|p| p.input.is_empty()) {
        return Err(Error::Contract(format!("example {p} has an empty utterance")));
    }
    let mut masker = match dropout_rng {
        Some((config, rng)) if config.enabled => {
            config.validate()?;
            Some(Masker { config, rng })
        }
        _ => None,
    };
    let b = batch.len();
    let state = tape.value(vars.w2).shape()[0];
    let in_len = batch.iter().map(|p| p.input.len()).max().unwrap_or(0);
    let out_len = batch.iter().map(|p| p.target.len() + 1).max().unwrap_or(1);

    let mut inputs = Vec::with_capacity(in_len);
    for t in 0..in_len {
        let ids = batch.iter().map(|p| p.input.get(t).copied().unwrap_or(PAD)).collect();
        inputs.push(tape.gather_rows(vars.embedding, ids)?);
    }
    let live_in: Vec<Vec<bool>> = (0..in_len)
        .map(|t| batch.iter().map(|p| t < p.input.len()).collect())
        .collect();

    let zeros = tape.constant(Tensor::zeros(&[b, state]));
    let mut fwd = Vec::with_capacity(in_len);
    let mut h = zeros;
    for t in 0..in_len {
        let x = dropout(tape, &mut masker, inputs[t], true)?;
        let next = gru_step(tape, &vars.enc_fwd, x, h)?;
        h = blend(tape, next, h, &live_in[t])?;
        fwd.push(h);
    }
    let forward_last = h;
    let mut bwd = vec![zeros; in_len];
    let mut h = zeros;
    for t in (0..in_len).rev() {
        let x = dropout(tape, &mut masker, inputs[t], true)?;
        let next = gru_step(tape, &vars.enc_bwd, x, h)?;
        h = blend(tape, next, h, &live_in[t])?;
        bwd[t] = h;
    }
    let backward_first = bwd[0];

    let mut states = Vec::with_capacity(in_len);
    let mut keys = Vec::with_capacity(in_len);
    for t in 0..in_len {
        let joined = tape.concat_cols(&[fwd[t], bwd[t]])?;
        let emitted = dropout(tape, &mut masker, joined, false)?;
        keys.push(tape.linear(emitted, vars.w1)?);
        states.push(emitted);
    }
    let attn_mask: Vec<bool> = (0..b)
        .flat_map(|i| (0..in_len).map(move |t| (i, t)))
        .map(|(i, t)| t < batch[i].input.len())
        .collect();

    let ends = tape.concat_cols(&[forward_last, backward_first])?;
    let d0 = tape.linear(ends, vars.w0)?;
    let mut d = tape.tanh(d0)?;

    let target_at = |p: &Pair, j: usize| match j.cmp(&p.target.len()) {
        std::cmp::Ordering::Less => p.target[j],
        std::cmp::Ordering::Equal => EOS,
        std::cmp::Ordering::Greater => PAD,
    };
    let mut total: Option<Var> = None;
    for j in 0..out_len {
        let emitted = if j == 0 { d } else { dropout(tape, &mut masker, d, false)? };
        let query = tape.linear(emitted, vars.w2)?;
        let mut scores = Vec::with_capacity(in_len);
        for &k in &keys {
            let pre = tape.add(k, query)?;
            let hidden = tape.tanh(pre)?;
            scores.push(tape.linear(hidden, vars.v)?);
        }
        let scores = tape.concat_cols(&scores)?;
        let alpha = tape.masked_softmax_rows(scores, attn_mask.clone())?;
        let mut context: Option<Var> = None;
        for (t, &h) in states.iter().enumerate() {
            let weight = tape.slice_cols(alpha, t, 1)?;
            let part = tape.mul_col(h, weight)?;
            context = Some(match context {
                None => part,
                Some(c) => tape.add(c, part)?,
            });
        }
        let context = context.expect("at least one position");

        let features = tape.concat_cols(&[emitted, context])?;
        let logits = tape.linear(features, vars.out_w)?;
        let logits = tape.add_bias(logits, vars.out_b)?;
        let log_probs = tape.log_softmax_rows(logits)?;
        let targets = batch.iter().map(|p| target_at(p, j)).collect();
        let picked = tape.pick(log_probs, targets)?;
        let live: Vec<bool> = batch.iter().map(|p| j <= p.target.len()).collect();
        let picked = match row_mask(tape, &live) {
            None => picked,
            Some((on, _)) => tape.mul_col(picked, on)?,
        };
        total = Some(match total {
            None => picked,
            Some(acc) => tape.add(acc, picked)?,
        });

        if j + 1 < out_len {
            let consumed = batch.iter().map(|p| target_at(p, j)).collect();
            let word = tape.gather_rows(vars.embedding, consumed)?;
            let x = tape.concat_cols(&[word, context])?;
            let x = dropout(tape, &mut masker, x, true)?;
            let next = gru_step(tape, &vars.dec, x, d)?;
            let live_next: Vec<bool> = batch.iter().map(|p| j < p.target.len()).collect();
            d = blend(tape, next, d, &live_next)?;
        }
    }
    let sum = tape.sum(total.expect("at least one step"))?;
    Ok(tape.scale(sum, T::from_f64(-1.0 / b as f64))?)
}
