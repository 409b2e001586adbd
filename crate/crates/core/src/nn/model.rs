//! Observation encoder and noise-prediction network.
//!
//! Encoder: stride-2 3×3 convolutions with ReLU, flatten, two dense layers
//! with ReLU. Denoiser: `[embedding; action; timestep features; condition]`
//! through four dense layers, the middle two with residual skips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tape::{Tape, Var};
use super::tensor::{ConvGeom, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::scene::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub conv_channels: Vec<usize>,
    pub enc_hidden: usize,
    pub embed_dim: usize,
    pub action_dim: usize,
    /// Extra conditioning inputs (e.g. a one-hot chain selector).
    pub cond_dim: usize,
    /// Width of the sinusoidal timestep features; 0 drops `t` from the input.
    pub time_embed_dim: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_h: 64,
            image_w: 64,
            conv_channels: vec![8, 16, 32, 32],
            enc_hidden: 128,
            embed_dim: 64,
            action_dim: 3,
            cond_dim: 0,
            time_embed_dim: 64,
            hidden: 128,
        }
    }
}

impl ModelConfig {
    /// A few-thousand-parameter network on 8×8 images, for gradient checks.
    pub fn tiny(action_dim: usize) -> Self {
        Self {
            image_h: 8,
            image_w: 8,
            conv_channels: vec![3, 4, 4],
            enc_hidden: 12,
            embed_dim: 8,
            action_dim,
            cond_dim: 0,
            time_embed_dim: 8,
            hidden: 16,
        }
    }

    fn conv_geoms(&self) -> Vec<ConvGeom> {
        let (mut h, mut w, mut c) = (self.image_h, self.image_w, 3);
        self.conv_channels
            .iter()
            .map(|&oc| {
                let g = ConvGeom {
                    in_h: h,
                    in_w: w,
                    in_c: c,
                    out_c: oc,
                    stride: 2,
                    pad: 1,
                };
                (h, w, c) = (g.out_h(), g.out_w(), oc);
                g
            })
            .collect()
    }

    pub fn flat_dim(&self) -> usize {
        match self.conv_geoms().last() {
            Some(g) => g.out_h() * g.out_w() * g.out_c,
            None => self.image_h * self.image_w * 3,
        }
    }

    pub fn denoiser_input_dim(&self) -> usize {
        self.embed_dim + self.action_dim + self.time_embed_dim + self.cond_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_h == 0
            || self.image_w == 0
            || self.embed_dim == 0
            || self.hidden == 0
            || self.enc_hidden == 0
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.action_dim == 0 {
            return Err(Error::Config("action_dim must be positive".into()));
        }
        if !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::Config("time_embed_dim must be even".into()));
        }
        Ok(())
    }

    /// `(name, dims, init)` for every parameter, in file order.
    fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let mut specs = Vec::new();
        for (i, g) in self.conv_geoms().iter().enumerate() {
            specs.push((
                format!("enc.conv{i}.w"),
                vec![g.patch(), g.out_c],
                Init::He(g.patch()),
            ));
            specs.push((format!("enc.conv{i}.b"), vec![g.out_c], Init::Const(0.0)));
        }
        let enc = [
            (self.flat_dim(), self.enc_hidden),
            (self.enc_hidden, self.embed_dim),
        ];
        for (i, (a, b)) in enc.iter().enumerate() {
            specs.push((format!("enc.fc{i}.w"), vec![*a, *b], Init::He(*a)));
            specs.push((format!("enc.fc{i}.b"), vec![*b], Init::Const(0.0)));
        }
        let h = self.hidden;
        let den = [
            (
                self.denoiser_input_dim(),
                h,
                Init::He(self.denoiser_input_dim()),
            ),
            (h, h, Init::He(h)),
            (h, h, Init::He(h)),
            (h, self.action_dim, Init::LeCun(h)),
        ];
        for (i, (a, b, init)) in den.iter().enumerate() {
            specs.push((format!("den.fc{i}.w"), vec![*a, *b], *init));
            specs.push((format!("den.fc{i}.b"), vec![*b], Init::Const(0.0)));
        }
        specs
    }
}

/// Sinusoidal features of `t ∈ [0, 1]` at geometrically spaced frequencies
/// from 1 to 1000 rad per unit time.
pub fn timestep_encoding(t: f64, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = vec![0.0; width];
    for i in 0..half {
        let freq = if half > 1 {
            1000f64.powf(i as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        out[i] = (t * freq).sin();
        out[half + i] = (t * freq).cos();
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Const(f64),
    /// Uniform with variance `2 / fan_in`.
    He(usize),
    /// Uniform with variance `1 / fan_in`.
    LeCun(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct Indices {
    conv: Vec<(usize, usize)>,
    enc: [(usize, usize); 2],
    den: [(usize, usize); 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    idx: Indices,
}

/// One noisy-action query against a shared observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    /// Noisy action in the frame the network sees.
    pub a_input: Vec<f64>,
    pub t: f64,
    /// Regression target: the unit-normal draw used for noising.
    pub eps: Vec<f64>,
}

/// Observation plus the samples that share its encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGroup {
    pub image: Image,
    pub cond: Vec<f64>,
    pub samples: Vec<LossSample>,
}

impl<T: Scalar> Model<T> {
    /// He-uniform weights for ReLU layers, LeCun-uniform for the output
    /// layer, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, dims, init) in config.param_specs() {
            let n: usize = dims.iter().product();
            let bound = match init {
                Init::Const(c) => {
                    params.insert(&name, Tensor::new(dims, vec![T::from_f64(c); n])?)?;
                    continue;
                }
                Init::He(fan_in) => (6.0 / fan_in as f64).sqrt(),
                Init::LeCun(fan_in) => (3.0 / fan_in as f64).sqrt(),
            };
            let data = (0..n)
                .map(|_| T::from_f64(rng.random_range(-bound..bound)))
                .collect();
            params.insert(&name, Tensor::new(dims, data)?)?;
        }
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != params.len() {
            return Err(Error::shape(
                format!("{} tensors", specs.len()),
                params.len(),
            ));
        }
        for (name, dims, _) in &specs {
            let t = params.get(name)?;
            if &t.dims != dims {
                return Err(Error::shape(
                    format!("{name} {dims:?}"),
                    format!("{:?}", t.dims),
                ));
            }
        }
        let pair = |p: &ParamSet<T>, base: String| -> Result<(usize, usize)> {
            Ok((
                p.index(&format!("{base}.w"))?,
                p.index(&format!("{base}.b"))?,
            ))
        };
        let conv = (0..config.conv_channels.len())
            .map(|i| pair(&params, format!("enc.conv{i}")))
            .collect::<Result<Vec<_>>>()?;
        let idx = Indices {
            conv,
            enc: [
                pair(&params, "enc.fc0".into())?,
                pair(&params, "enc.fc1".into())?,
            ],
            den: [
                pair(&params, "den.fc0".into())?,
                pair(&params, "den.fc1".into())?,
                pair(&params, "den.fc2".into())?,
                pair(&params, "den.fc3".into())?,
            ],
        };
        Ok(Self {
            config,
            params,
            idx,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            idx: self.idx.clone(),
        }
    }

    fn image_tensor(&self, image: &Image) -> Result<Tensor<T>> {
        if image.height != self.config.image_h || image.width != self.config.image_w {
            return Err(Error::shape(
                format!("{}x{} image", self.config.image_h, self.config.image_w),
                format!("{}x{}", image.height, image.width),
            ));
        }
        Ok(Tensor {
            dims: vec![image.height, image.width, 3],
            data: image.data.iter().map(|&v| T::from_f64(v as f64)).collect(),
        })
    }

    fn dense_on(&self, tape: &mut Tape<'_, T>, x: Var, (w, b): (usize, usize)) -> Result<Var> {
        let (w, b) = (tape.param(w), tape.param(b));
        tape.dense(x, w, b)
    }

    /// Record `enc(image)` on the tape; `image` is an input leaf.
    pub fn encode_on(&self, tape: &mut Tape<'_, T>, image: Var) -> Result<Var> {
        let mut x = image;
        for &(w, b) in &self.idx.conv {
            let (w, b) = (tape.param(w), tape.param(b));
            let c = tape.conv3x3(x, w, b, 2, 1)?;
            x = tape.relu(c);
        }
        let flat = tape.reshape(x, &[self.config.flat_dim()])?;
        let h = self.dense_on(tape, flat, self.idx.enc[0])?;
        let h = tape.relu(h);
        let e = self.dense_on(tape, h, self.idx.enc[1])?;
        Ok(tape.relu(e))
    }

    fn check_cond(&self, cond: &[f64]) -> Result<()> {
        if cond.len() != self.config.cond_dim {
            return Err(Error::shape(
                format!("cond length {}", self.config.cond_dim),
                cond.len(),
            ));
        }
        Ok(())
    }

    /// Constant inputs that follow the action: timestep features, then `cond`.
    fn tail_inputs(&self, t: f64, cond: &[f64]) -> Vec<f64> {
        let mut tail = timestep_encoding(t, self.config.time_embed_dim);
        tail.extend_from_slice(cond);
        tail
    }

    /// Record the noise prediction for `(embedding, action, t, cond)`.
    pub fn denoise_on(
        &self,
        tape: &mut Tape<'_, T>,
        emb: Var,
        action: Var,
        t: f64,
        cond: &[f64],
    ) -> Result<Var> {
        if tape.value(action).len() != self.config.action_dim {
            return Err(Error::shape(
                self.config.action_dim,
                tape.value(action).len(),
            ));
        }
        self.check_cond(cond)?;
        let mut parts = vec![emb, action];
        let tail = self.tail_inputs(t, cond);
        if !tail.is_empty() {
            parts.push(tape.constant(Tensor::from_f64(&[tail.len()], &tail)?));
        }
        let x = tape.concat(&parts);
        self.denoiser_body(tape, x)
    }

    /// Noise predictions for many `(action, t)` pairs sharing one embedding,
    /// as a `[rows, action_dim]` node.
    pub fn denoise_batch_on(
        &self,
        tape: &mut Tape<'_, T>,
        emb: Var,
        actions: &[&[f64]],
        ts: &[f64],
        cond: &[f64],
    ) -> Result<Var> {
        self.check_cond(cond)?;
        if actions.len() != ts.len() || actions.is_empty() {
            return Err(Error::shape(format!("{} actions", ts.len()), actions.len()));
        }
        let mut parts = Vec::with_capacity(actions.len() * 2);
        for (a, &t) in actions.iter().zip(ts) {
            if a.len() != self.config.action_dim {
                return Err(Error::shape(self.config.action_dim, a.len()));
            }
            let mut rest = a.to_vec();
            rest.extend(self.tail_inputs(t, cond));
            parts.push(emb);
            parts.push(tape.constant(Tensor::from_f64(&[rest.len()], &rest)?));
        }
        let flat = tape.concat(&parts);
        let x = tape.reshape(flat, &[actions.len(), self.config.denoiser_input_dim()])?;
        self.denoiser_body(tape, x)
    }

    fn denoiser_body(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let h0 = self.dense_on(tape, x, self.idx.den[0])?;
        let h0 = tape.relu(h0);
        let h1 = self.dense_on(tape, h0, self.idx.den[1])?;
        let h1 = tape.relu(h1);
        let h1 = tape.add(h1, h0)?;
        let h2 = self.dense_on(tape, h1, self.idx.den[2])?;
        let h2 = tape.relu(h2);
        let h2 = tape.add(h2, h1)?;
        self.dense_on(tape, h2, self.idx.den[3])
    }

    pub fn encoder_forward(&self, image: &Image) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let x = tape.constant(self.image_tensor(image)?);
        let e = self.encode_on(&mut tape, x)?;
        Ok(tape.value(e).to_f64_vec())
    }

    pub fn denoiser_forward(
        &self,
        embedding: &[f64],
        a_noisy: &[f64],
        t: f64,
        cond: &[f64],
    ) -> Result<Vec<f64>> {
        if embedding.len() != self.config.embed_dim {
            return Err(Error::shape(self.config.embed_dim, embedding.len()));
        }
        let mut tape = Tape::new(&self.params);
        let e = tape.constant(Tensor::from_f64(&[embedding.len()], embedding)?);
        let a = tape.constant(Tensor::from_f64(&[a_noisy.len()], a_noisy)?);
        let out = self.denoise_on(&mut tape, e, a, t, cond)?;
        Ok(tape.value(out).to_f64_vec())
    }

    /// Mean over all samples of `‖ε_θ(enc(O), ã, t) − ε‖²`, and its gradient.
    pub fn loss_and_grads(&self, groups: &[LossGroup]) -> Result<(f64, ParamSet<T>)> {
        let mut grads = self.params.zeros_like();
        let loss = self.accumulate_loss_and_grads(groups, &mut grads)?;
        Ok((loss, grads))
    }

    /// As [`Model::loss_and_grads`], adding into an existing gradient buffer.
    pub fn accumulate_loss_and_grads(
        &self,
        groups: &[LossGroup],
        grads: &mut ParamSet<T>,
    ) -> Result<f64> {
        let total: usize = groups.iter().map(|g| g.samples.len()).sum();
        if total == 0 {
            return Err(Error::EmptyBatch);
        }
        let inv = T::from_f64(1.0 / total as f64);
        let mut loss = 0.0;
        // one tape per observation, reduced in order
        for group in groups {
            if group.samples.is_empty() {
                continue;
            }
            let mut tape = Tape::new(&self.params);
            let img = tape.constant(self.image_tensor(&group.image)?);
            let emb = self.encode_on(&mut tape, img)?;
            let mut targets = Vec::with_capacity(group.samples.len() * self.config.action_dim);
            for s in &group.samples {
                if s.eps.len() != self.config.action_dim {
                    return Err(Error::shape(self.config.action_dim, s.eps.len()));
                }
                targets.extend_from_slice(&s.eps);
            }
            let actions: Vec<&[f64]> = group.samples.iter().map(|s| s.a_input.as_slice()).collect();
            let ts: Vec<f64> = group.samples.iter().map(|s| s.t).collect();
            let pred = self.denoise_batch_on(&mut tape, emb, &actions, &ts, &group.cond)?;
            let target = tape.constant(Tensor::from_f64(
                &[group.samples.len(), self.config.action_dim],
                &targets,
            )?);
            let sum = tape.squared_error(pred, target)?;
            let scaled = tape.scale(sum, inv);
            loss += tape.value(scaled).data[0].to_f64();
            tape.backward(scaled, grads)?;
        }
        Ok(loss)
    }
}
