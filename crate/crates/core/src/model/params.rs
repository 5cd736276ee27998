use std::collections::BTreeMap;

use numcore::{Parameters, Scalar, Tape, Tensor, Var};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::util;

/// Vocabulary size, embedding width, and recurrent state width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub state: usize,
}

impl ModelDims {
    pub fn decoder_input(&self) -> usize {
        self.embed + 2 * self.state
    }

    pub fn output_input(&self) -> usize {
        3 * self.state
    }
}

/// Uniform `±sqrt(6 / (fan_in + fan_out))` for an `out × in` matrix.
pub(crate) fn xavier(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

fn matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    xavier(rng, rows, cols, cols, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T: Scalar = f64> {
    pub w_z: Tensor<T>,
    pub u_z: Tensor<T>,
    pub b_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub u_r: Tensor<T>,
    pub b_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_h: Tensor<T>,
}

const GRU_FIELDS: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl GruParams<f64> {
    pub fn init(rng: &mut impl Rng, input: usize, state: usize) -> Self {
        let mut gate = || (matrix(rng, state, input), matrix(rng, state, state), Tensor::zeros(&[state]));
        let (w_z, u_z, b_z) = gate();
        let (w_r, u_r, b_r) = gate();
        let (w_h, u_h, b_h) = gate();
        GruParams {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        }
    }

    pub fn zeros(input: usize, state: usize) -> Self {
        let w = || Tensor::zeros(&[state, input]);
        let u = || Tensor::zeros(&[state, state]);
        let b = || Tensor::zeros(&[state]);
        GruParams {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }
}

impl<T: Scalar> GruParams<T> {
    fn fields(&self) -> [&Tensor<T>; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn state_dim(&self) -> usize {
        self.u_z.shape()[0]
    }

    fn cast<U: Scalar>(&self) -> GruParams<U> {
        GruParams {
            w_z: self.w_z.cast(),
            u_z: self.u_z.cast(),
            b_z: self.b_z.cast(),
            w_r: self.w_r.cast(),
            u_r: self.u_r.cast(),
            b_r: self.b_r.cast(),
            w_h: self.w_h.cast(),
            u_h: self.u_h.cast(),
            b_h: self.b_h.cast(),
        }
    }

    fn check(&self, prefix: &str, input: usize, state: usize) -> Result<()> {
        for (name, t) in GRU_FIELDS.iter().zip(self.fields()) {
            let expected: Vec<usize> = match name.as_bytes()[0] {
                b'w' => vec![state, input],
                b'u' => vec![state, state],
                _ => vec![state],
            };
            expect_shape(&format!("{prefix}.{name}"), t, &expected)?;
        }
        Ok(())
    }
}

fn expect_shape<T: Scalar>(name: &str, t: &Tensor<T>, expected: &[usize]) -> Result<()> {
    if t.shape() != expected {
        return Err(Error::Dimension(format!(
            "{name} has shape {:?}, expected {expected:?}",
            t.shape()
        )));
    }
    if !t.all_finite() {
        return Err(Error::Dimension(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Every trainable tensor of the paraphrase model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar = f64> {
    /// Shared word embedding, `|V| × d`.
    pub embedding: Tensor<T>,
    pub enc_fwd: GruParams<T>,
    pub enc_bwd: GruParams<T>,
    pub dec: GruParams<T>,
    /// Decoder initial state from the two final encoder states, `s × 2s`.
    pub w0: Tensor<T>,
    /// Attention key projection, `s × 2s`.
    pub w1: Tensor<T>,
    /// Attention query projection, `s × s`.
    pub w2: Tensor<T>,
    /// Attention scoring vector, `s`.
    pub v: Tensor<T>,
    /// Output projection over `[d_j; h'_j]`, `|V| × 3s`.
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl ModelParams<f64> {
    /// Fresh parameters with `embedding` as the word table and Xavier-uniform
    /// weights elsewhere (biases zero), drawn from `seed`.
    pub fn init(dims: ModelDims, embedding: &EmbeddingMatrix, seed: u64) -> Result<Self> {
        let ModelDims { vocab, embed, state } = dims;
        if vocab == 0 || embed == 0 || state == 0 {
            return Err(Error::Dimension(format!("model sizes must be positive: {dims:?}")));
        }
        if embedding.rows() != vocab || embedding.dim() != embed {
            return Err(Error::Dimension(format!(
                "embedding is {}×{}, model expects {vocab}×{embed}",
                embedding.rows(),
                embedding.dim()
            )));
        }
        let mut rng = util::rng(seed);
        let enc_fwd = GruParams::init(&mut rng, embed, state);
        let enc_bwd = GruParams::init(&mut rng, embed, state);
        let dec = GruParams::init(&mut rng, dims.decoder_input(), state);
        let w0 = matrix(&mut rng, state, 2 * state);
        let w1 = matrix(&mut rng, state, 2 * state);
        let w2 = matrix(&mut rng, state, state);
        let v = Tensor::vector(xavier(&mut rng, 1, state, state, 1).into_data());
        let out_w = matrix(&mut rng, vocab, dims.output_input());
        Ok(ModelParams {
            embedding: Tensor::matrix(vocab, embed, embedding.data().to_vec())?,
            enc_fwd,
            enc_bwd,
            dec,
            w0,
            w1,
            w2,
            v,
            out_w,
            out_b: Tensor::zeros(&[vocab]),
        })
    }

    /// All-zero parameters of the given size.
    pub fn zeros(dims: ModelDims) -> Self {
        let s = dims.state;
        ModelParams {
            embedding: Tensor::zeros(&[dims.vocab, dims.embed]),
            enc_fwd: GruParams::zeros(dims.embed, s),
            enc_bwd: GruParams::zeros(dims.embed, s),
            dec: GruParams::zeros(dims.decoder_input(), s),
            w0: Tensor::zeros(&[s, 2 * s]),
            w1: Tensor::zeros(&[s, 2 * s]),
            w2: Tensor::zeros(&[s, s]),
            v: Tensor::zeros(&[s]),
            out_w: Tensor::zeros(&[dims.vocab, 3 * s]),
            out_b: Tensor::zeros(&[dims.vocab]),
        }
    }
}

const TOP_FIELDS: [&str; 7] = ["embedding", "w0", "w1", "w2", "v", "out_w", "out_b"];
const GRUS: [&str; 3] = ["enc_fwd", "enc_bwd", "dec"];

impl<T: Scalar> ModelParams<T> {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.embedding.shape()[0],
            embed: self.embedding.shape()[1],
            state: self.w2.shape()[0],
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            embedding: self.embedding.cast(),
            enc_fwd: self.enc_fwd.cast(),
            enc_bwd: self.enc_bwd.cast(),
            dec: self.dec.cast(),
            w0: self.w0.cast(),
            w1: self.w1.cast(),
            w2: self.w2.cast(),
            v: self.v.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }

    /// Checks every shape against [`ModelParams::dims`] and that all entries
    /// are finite.
    pub fn validate(&self) -> Result<()> {
        let sh = self.embedding.shape();
        if sh.len() != 2 || self.w2.shape().len() != 2 {
            return Err(Error::Dimension("embedding and w2 must be matrices".into()));
        }
        let ModelDims { vocab, embed, state: s } = self.dims();
        expect_shape("embedding", &self.embedding, &[vocab, embed])?;
        self.enc_fwd.check("enc_fwd", embed, s)?;
        self.enc_bwd.check("enc_bwd", embed, s)?;
        self.dec.check("dec", embed + 2 * s, s)?;
        expect_shape("w0", &self.w0, &[s, 2 * s])?;
        expect_shape("w1", &self.w1, &[s, 2 * s])?;
        expect_shape("w2", &self.w2, &[s, s])?;
        expect_shape("v", &self.v, &[s])?;
        expect_shape("out_w", &self.out_w, &[vocab, 3 * s])?;
        expect_shape("out_b", &self.out_b, &[vocab])
    }

    fn top(&self) -> [&Tensor<T>; 7] {
        [&self.embedding, &self.w0, &self.w1, &self.w2, &self.v, &self.out_w, &self.out_b]
    }

    /// Owned copy of every tensor keyed by name.
    pub fn to_map(&self) -> BTreeMap<String, Tensor<T>> {
        self.named().into_iter().map(|(n, t)| (n, t.clone())).collect()
    }

    /// Inverse of [`ModelParams::to_map`]; every name must be present.
    pub fn from_map(mut map: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let placeholder = Tensor::scalar(T::zero());
        let mut p = ModelParams {
            embedding: placeholder.clone(),
            enc_fwd: GruParams::<f64>::zeros(1, 1).cast(),
            enc_bwd: GruParams::<f64>::zeros(1, 1).cast(),
            dec: GruParams::<f64>::zeros(1, 1).cast(),
            w0: placeholder.clone(),
            w1: placeholder.clone(),
            w2: placeholder.clone(),
            v: placeholder.clone(),
            out_w: placeholder.clone(),
            out_b: placeholder,
        };
        for (name, slot) in p.named_mut() {
            *slot = map
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))?;
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::Format(format!("unexpected tensor {extra:?}")));
        }
        p.validate()?;
        Ok(p)
    }

    /// Registers every tensor on `tape` as a named parameter.
    pub fn register(&self, tape: &mut Tape<T>) -> Result<ParamVars> {
        let mut vars = BTreeMap::new();
        for (name, t) in self.named() {
            let v = tape.param(name.clone(), t.clone())?;
            vars.insert(name, v);
        }
        ParamVars::from_map(&vars)
    }
}

impl<T: Scalar> Parameters<T> for ModelParams<T> {
    fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = TOP_FIELDS
            .iter()
            .zip(self.top())
            .map(|(n, t)| (n.to_string(), t))
            .collect();
        for (g, cell) in GRUS.iter().zip([&self.enc_fwd, &self.enc_bwd, &self.dec]) {
            for (f, t) in GRU_FIELDS.iter().zip(cell.fields()) {
                out.push((format!("{g}.{f}"), t));
            }
        }
        out
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let ModelParams {
            embedding,
            enc_fwd,
            enc_bwd,
            dec,
            w0,
            w1,
            w2,
            v,
            out_w,
            out_b,
        } = self;
        let mut out: Vec<(String, &mut Tensor<T>)> = TOP_FIELDS
            .iter()
            .zip([embedding, w0, w1, w2, v, out_w, out_b])
            .map(|(n, t)| (n.to_string(), t))
            .collect();
        for (g, cell) in GRUS.iter().zip([enc_fwd, enc_bwd, dec]) {
            for (f, t) in GRU_FIELDS.iter().zip(cell.fields_mut()) {
                out.push((format!("{g}.{f}"), t));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

/// Tape handles for every tensor of a [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub embedding: Var,
    pub enc_fwd: GruVars,
    pub enc_bwd: GruVars,
    pub dec: GruVars,
    pub w0: Var,
    pub w1: Var,
    pub w2: Var,
    pub v: Var,
    pub out_w: Var,
    pub out_b: Var,
}

impl ParamVars {
    /// Looks up every parameter name in `vars`.
    pub fn from_map(vars: &BTreeMap<String, Var>) -> Result<Self> {
        let get = |name: &str| {
            vars.get(name)
                .copied()
                .ok_or_else(|| Error::Contract(format!("parameter {name:?} not registered")))
        };
        let gru = |p: &str| -> Result<GruVars> {
            Ok(GruVars {
                w_z: get(&format!("{p}.w_z"))?,
                u_z: get(&format!("{p}.u_z"))?,
                b_z: get(&format!("{p}.b_z"))?,
                w_r: get(&format!("{p}.w_r"))?,
                u_r: get(&format!("{p}.u_r"))?,
                b_r: get(&format!("{p}.b_r"))?,
                w_h: get(&format!("{p}.w_h"))?,
                u_h: get(&format!("{p}.u_h"))?,
                b_h: get(&format!("{p}.b_h"))?,
            })
        };
        Ok(ParamVars {
            embedding: get("embedding")?,
            enc_fwd: gru("enc_fwd")?,
            enc_bwd: gru("enc_bwd")?,
            dec: gru("dec")?,
            w0: get("w0")?,
            w1: get("w1")?,
            w2: get("w2")?,
            v: get("v")?,
            out_w: get("out_w")?,
            out_b: get("out_b")?,
        })
    }

    /// Registers an arbitrary name → tensor map (as produced by
    /// [`ModelParams::to_map`]) on `tape`.
    pub fn register_map<T: Scalar>(tape: &mut Tape<T>, params: &BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (name, t) in params {
            vars.insert(name.clone(), tape.param(name.clone(), t.clone())?);
        }
        Self::from_map(&vars)
    }
}
