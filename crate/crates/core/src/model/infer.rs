//! Direct, tape-free evaluation of the model for a single input.
//!
//! Every reduction runs left to right over the natural index order, so a
//! given parameter set always produces the same bits.

use numcore::{dot, log_softmax_into, sigmoid, softmax_into, Scalar, Tensor};

use crate::corpus::EOS;
use crate::error::{Error, Result};

use super::params::{GruParams, ModelParams};

fn matvec<T: Scalar>(w: &Tensor<T>, x: &[T]) -> Vec<T> {
    let cols = w.shape()[1];
    debug_assert_eq!(cols, x.len());
    w.data().chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// `(W x + U h) + b` passed through `act`.
fn gate<T: Scalar>(w: &Tensor<T>, x: &[T], u: &Tensor<T>, h: &[T], b: &Tensor<T>, act: fn(T) -> T) -> Vec<T> {
    let wx = matvec(w, x);
    let uh = matvec(u, h);
    wx.iter()
        .zip(&uh)
        .zip(b.data())
        .map(|((&a, &c), &bias)| act((a + c) + bias))
        .collect()
}

fn tanh<T: Scalar>(x: T) -> T {
    x.tanh()
}

/// One GRU update: `h' = z ⊙ h + (1 − z) ⊙ h̃`.
pub fn gru_cell<T: Scalar>(p: &GruParams<T>, x: &[T], h: &[T]) -> Result<Vec<T>> {
    if x.len() != p.input_dim() || h.len() != p.state_dim() {
        return Err(Error::Contract(format!(
            "GRU cell expects input {} and state {}, got {} and {}",
            p.input_dim(),
            p.state_dim(),
            x.len(),
            h.len()
        )));
    }
    let z = gate(&p.w_z, x, &p.u_z, h, &p.b_z, sigmoid);
    let r = gate(&p.w_r, x, &p.u_r, h, &p.b_r, sigmoid);
    let rh: Vec<T> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
    let cand = gate(&p.w_h, x, &p.u_h, &rh, &p.b_h, tanh);
    Ok(z.iter()
        .zip(h)
        .zip(&cand)
        .map(|((&z, &h), &c)| z * h + (T::one() - z) * c)
        .collect())
}

/// Encoder output for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates<T: Scalar = f64> {
    /// `[→h_i; ←h_i]` per position.
    pub states: Vec<Vec<T>>,
    /// Forward state after the last token.
    pub forward_last: Vec<T>,
    /// Backward state after reading back to the first token.
    pub backward_first: Vec<T>,
    keys: Vec<Vec<T>>,
}

impl<T: Scalar> EncoderStates<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn check_ids<T: Scalar>(params: &ModelParams<T>, ids: &[usize]) -> Result<()> {
    let vocab = params.dims().vocab;
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
        return Err(Error::Vocabulary(format!("token id {bad} outside vocabulary of {vocab}")));
    }
    Ok(())
}

/// Runs both encoder directions over `ids` from zero initial states.
pub fn encode<T: Scalar>(params: &ModelParams<T>, ids: &[usize]) -> Result<EncoderStates<T>> {
    if ids.is_empty() {
        return Err(Error::Contract("cannot encode an empty utterance".into()));
    }
    check_ids(params, ids)?;
    let s = params.dims().state;
    let m = ids.len();
    let mut fwd = Vec::with_capacity(m);
    let mut h = vec![T::zero(); s];
    for &id in ids {
        h = gru_cell(&params.enc_fwd, params.embedding.row(id), &h)?;
        fwd.push(h.clone());
    }
    let mut bwd = vec![Vec::new(); m];
    let mut h = vec![T::zero(); s];
    for i in (0..m).rev() {
        h = gru_cell(&params.enc_bwd, params.embedding.row(ids[i]), &h)?;
        bwd[i] = h.clone();
    }
    let states: Vec<Vec<T>> = fwd
        .iter()
        .zip(&bwd)
        .map(|(f, b)| f.iter().chain(b).copied().collect())
        .collect();
    let keys = states.iter().map(|h| matvec(&params.w1, h)).collect();
    Ok(EncoderStates {
        forward_last: fwd[m - 1].clone(),
        backward_first: bwd[0].clone(),
        states,
        keys,
    })
}

/// `d_0 = tanh(W0 [→h_m; ←h_1])`.
pub fn decoder_init<T: Scalar>(params: &ModelParams<T>, enc: &EncoderStates<T>) -> Vec<T> {
    let joined: Vec<T> = enc.forward_last.iter().chain(&enc.backward_first).copied().collect();
    matvec(&params.w0, &joined).into_iter().map(|x| x.tanh()).collect()
}

/// Attention and output distribution for decoder state `d_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T: Scalar = f64> {
    /// Attention weights over encoder positions.
    pub attention: Vec<T>,
    /// Attention summary `h'_j`.
    pub context: Vec<T>,
    /// Log-probabilities over the vocabulary.
    pub log_probs: Vec<T>,
}

impl<T: Scalar> StepOutput<T> {
    pub fn probabilities(&self) -> Vec<T> {
        self.log_probs.iter().map(|x| x.exp()).collect()
    }
}

/// Attends over `enc` with query `d` and scores every vocabulary entry from
/// `[d; h']`.
pub fn predict<T: Scalar>(params: &ModelParams<T>, enc: &EncoderStates<T>, d: &[T]) -> StepOutput<T> {
    let query = matvec(&params.w2, d);
    let scores: Vec<T> = enc
        .keys
        .iter()
        .map(|k| {
            let hidden: Vec<T> = k.iter().zip(&query).map(|(&a, &b)| (a + b).tanh()).collect();
            dot(params.v.data(), &hidden)
        })
        .collect();
    let mut attention = vec![T::zero(); scores.len()];
    softmax_into(&scores, None, &mut attention);

    let width = enc.states[0].len();
    let mut context = vec![T::zero(); width];
    for (a, h) in attention.iter().zip(&enc.states) {
        for (c, &x) in context.iter_mut().zip(h) {
            *c = *c + *a * x;
        }
    }

    let features: Vec<T> = d.iter().chain(&context).copied().collect();
    let logits: Vec<T> = matvec(&params.out_w, &features)
        .into_iter()
        .zip(params.out_b.data())
        .map(|(x, &b)| x + b)
        .collect();
    let mut log_probs = vec![T::zero(); logits.len()];
    log_softmax_into(&logits, &mut log_probs);
    StepOutput {
        attention,
        context,
        log_probs,
    }
}

/// `d_{j+1} = GRU([φ(c_j); h'_j], d_j)`.
pub fn advance<T: Scalar>(params: &ModelParams<T>, d: &[T], token: usize, context: &[T]) -> Result<Vec<T>> {
    check_ids(params, &[token])?;
    let x: Vec<T> = params.embedding.row(token).iter().chain(context).copied().collect();
    gru_cell(&params.dec, &x, d)
}

/// One full decoder step: the distribution predicted from `d`, and the next
/// state after consuming `token`.
pub fn decoder_step<T: Scalar>(
    params: &ModelParams<T>,
    enc: &EncoderStates<T>,
    d: &[T],
    token: usize,
) -> Result<(StepOutput<T>, Vec<T>)> {
    if d.len() != params.dims().state {
        return Err(Error::Contract(format!(
            "decoder state has {} entries, expected {}",
            d.len(),
            params.dims().state
        )));
    }
    let out = predict(params, enc, d);
    let next = advance(params, d, token, &out.context)?;
    Ok((out, next))
}

/// `log p(c | u)` for an encoded input: the sum over `c_1 … c_n, </s>` of
/// each step's log-probability.
pub fn score_encoded<T: Scalar>(params: &ModelParams<T>, enc: &EncoderStates<T>, canonical: &[usize]) -> Result<T> {
    check_ids(params, canonical)?;
    let mut d = decoder_init(params, enc);
    let mut total = T::zero();
    for &token in canonical {
        let (out, next) = decoder_step(params, enc, &d, token)?;
        total = total + out.log_probs[token];
        d = next;
    }
    let last = predict(params, enc, &d);
    Ok(total + last.log_probs[EOS])
}

/// `log p(c | u)` with dropout disabled.
pub fn sequence_log_prob<T: Scalar>(params: &ModelParams<T>, utterance: &[usize], canonical: &[usize]) -> Result<T> {
    let enc = encode(params, utterance)?;
    score_encoded(params, &enc, canonical)
}
