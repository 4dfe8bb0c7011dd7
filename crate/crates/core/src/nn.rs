//! Named parameters and the layers built from them.
//!
//! Layers only remember parameter names; the values live in a [`ParamStore`]
//! that is passed to every forward call. Parameter values are kept at `f32`
//! precision (they are rounded when written) so that checkpoints, which store
//! `f32`, round-trip bit-exactly; arithmetic is carried out in `f64`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract_err, shape_err, Error, Result};
use crate::tensor::{conv2d, dense, global_avg_pool, avg_pool2d, Tensor};

/// A named trainable tensor.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: BTreeMap<String, usize>,
}

pub(crate) fn round_f32(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], mut values: Vec<f64>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(contract_err!("duplicate parameter name {name}"));
        }
        round_f32(&mut values);
        let tensor = Tensor::parameter(shape, values)?;
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.params[i].tensor)
            .ok_or_else(|| contract_err!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Parameters in insertion order; each one is yielded exactly once.
    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Replaces a parameter's values with a fresh leaf (gradient cleared).
    pub fn set_values(&mut self, name: &str, mut values: Vec<f64>) -> Result<()> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| contract_err!("unknown parameter {name}"))?;
        let old = &self.params[i].tensor;
        if values.len() != old.len() {
            return Err(shape_err!(
                "parameter {name} holds {} values, got {}",
                old.len(),
                values.len()
            ));
        }
        round_f32(&mut values);
        let t = Tensor::new(old.shape(), values)?.with_requires_grad(old.requires_grad());
        self.params[i].tensor = t;
        Ok(())
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|p| p.tensor.zero_grad());
    }

    /// Turns gradient tracking on for parameters matching `trainable` and off
    /// for all others. Values are untouched.
    pub fn set_trainable(&mut self, trainable: impl Fn(&str) -> bool) {
        for p in &mut self.params {
            let want = trainable(&p.name);
            if p.tensor.requires_grad() != want {
                p.tensor = p.tensor.with_requires_grad(want);
            }
        }
    }

    /// Gradient of every parameter, zeros where backward did not reach.
    pub fn grads(&self) -> Vec<(String, Vec<f64>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.grad_or_zeros()))
            .collect()
    }

    /// Flat concatenation of all parameter values in iteration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.tensor.values().iter().copied()).collect()
    }
}

/// He-uniform initialization: `U(−√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform(rng: &mut impl Rng, fan_in: usize, count: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: String,
    bias: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let weight = format!("{name}.weight");
        let bias = format!("{name}.bias");
        let fan_in = in_channels * kernel * kernel;
        store.insert(
            &weight,
            &[out_channels, in_channels, kernel, kernel],
            he_uniform(rng, fan_in, out_channels * fan_in),
        )?;
        store.insert(&bias, &[out_channels], vec![0.0; out_channels])?;
        Ok(Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            stride,
            pad: kernel / 2,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        conv2d(x, store.get(&self.weight)?, store.get(&self.bias)?, self.stride, self.pad)
    }

    pub fn weight_name(&self) -> &str {
        &self.weight
    }

    pub fn bias_name(&self) -> &str {
        &self.bias
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    weight: String,
    bias: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Dense {
    /// He-uniform weights and zero bias.
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let weights = he_uniform(rng, fan_in, fan_in * fan_out);
        Self::with_values(store, name, fan_in, fan_out, weights, vec![0.0; fan_out])
    }

    /// Zero weights and the given bias: the layer outputs `bias` for every input.
    pub fn zero_init(store: &mut ParamStore, name: &str, fan_in: usize, bias: Vec<f64>) -> Result<Self> {
        let fan_out = bias.len();
        Self::with_values(store, name, fan_in, fan_out, vec![0.0; fan_in * fan_out], bias)
    }

    fn with_values(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        weights: Vec<f64>,
        bias_values: Vec<f64>,
    ) -> Result<Self> {
        let weight = format!("{name}.weight");
        let bias = format!("{name}.bias");
        store.insert(&weight, &[fan_out, fan_in], weights)?;
        store.insert(&bias, &[fan_out], bias_values)?;
        Ok(Dense {
            weight,
            bias,
            in_features: fan_in,
            out_features: fan_out,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        dense(x, store.get(&self.weight)?, store.get(&self.bias)?)
    }
}

/// `ReLU(conv2(ReLU(conv1(x))) + shortcut(x))`, with a 1×1 projection
/// shortcut whenever the block changes resolution or width.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub shortcut: Option<Conv2d>,
}

impl ResidualBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    ) -> Result<Self> {
        let conv1 = Conv2d::new(store, rng, &format!("{name}.conv1"), in_channels, out_channels, 3, stride)?;
        let conv2 = Conv2d::new(store, rng, &format!("{name}.conv2"), out_channels, out_channels, 3, 1)?;
        let shortcut = if stride != 1 || in_channels != out_channels {
            Some(Conv2d::new(store, rng, &format!("{name}.proj"), in_channels, out_channels, 1, stride)?)
        } else {
            None
        };
        Ok(ResidualBlock { conv1, conv2, shortcut })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let branch = self.conv1.forward(store, x)?.relu()?;
        let branch = self.conv2.forward(store, &branch)?;
        let skip = match &self.shortcut {
            Some(p) => p.forward(store, x)?,
            None => x.clone(),
        };
        if branch.shape() != skip.shape() {
            return Err(shape_err!(
                "residual branch {:?} does not match shortcut {:?}",
                branch.shape(),
                skip.shape()
            ));
        }
        branch.add(&skip)?.relu()
    }
}

/// Architecture of a residual trunk: fixed average-pool downsampling, a
/// strided 3×3 stem, then stages of residual blocks, then pooling to a
/// feature vector.
///
/// `head_pool = 0` reduces the last feature map by global averaging; any
/// other value average-pools with that window and flattens, which keeps
/// coarse spatial layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub input_pool: usize,
    pub stem_channels: usize,
    pub stem_stride: usize,
    /// Channel width of each stage; stages after the first downsample by 2.
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    #[serde(default)]
    pub head_pool: usize,
}

impl TrunkConfig {
    pub fn validate(&self, what: &str) -> Result<()> {
        if self.input_pool == 0 || self.stem_channels == 0 || self.stem_stride == 0 {
            return Err(Error::Config(format!("{what}: pool, stem width and stride must be positive")));
        }
        if self.stage_channels.is_empty() || self.stage_channels.contains(&0) || self.blocks_per_stage == 0 {
            return Err(Error::Config(format!("{what}: needs at least one non-empty stage")));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        *self.stage_channels.last().expect("validated")
    }

    /// Spatial size of the last feature map for an `h × w` input.
    pub fn final_map(&self, h: usize, w: usize) -> (usize, usize) {
        let conv = |n: usize, s: usize| (n - 1) / s + 1;
        let (mut h, mut w) = (h / self.input_pool, w / self.input_pool);
        h = conv(h, self.stem_stride);
        w = conv(w, self.stem_stride);
        for _ in 1..self.stage_channels.len() {
            h = conv(h, 2);
            w = conv(w, 2);
        }
        (h, w)
    }

    /// Length of the feature vector produced for an `h × w` input.
    pub fn feature_dim(&self, h: usize, w: usize) -> Result<usize> {
        if h < self.input_pool || w < self.input_pool {
            return Err(Error::Config(format!(
                "input {h}x{w} is smaller than the pooling window {}",
                self.input_pool
            )));
        }
        if self.head_pool == 0 {
            return Ok(self.channels());
        }
        let (fh, fw) = self.final_map(h, w);
        if fh < self.head_pool || fw < self.head_pool {
            return Err(Error::Config(format!(
                "final feature map {fh}x{fw} is smaller than head pool {}",
                self.head_pool
            )));
        }
        Ok(self.channels() * (fh / self.head_pool) * (fw / self.head_pool))
    }
}

#[derive(Debug, Clone)]
pub struct ResNetTrunk {
    pub config: TrunkConfig,
    stem: Conv2d,
    blocks: Vec<ResidualBlock>,
}

impl ResNetTrunk {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_channels: usize,
        config: &TrunkConfig,
    ) -> Result<Self> {
        config.validate(name)?;
        let stem = Conv2d::new(
            store,
            rng,
            &format!("{name}.stem"),
            in_channels,
            config.stem_channels,
            3,
            config.stem_stride,
        )?;
        let mut blocks = Vec::new();
        let mut width = config.stem_channels;
        for (si, &c) in config.stage_channels.iter().enumerate() {
            for bi in 0..config.blocks_per_stage {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                blocks.push(ResidualBlock::new(
                    store,
                    rng,
                    &format!("{name}.stage{si}.block{bi}"),
                    width,
                    c,
                    stride,
                )?);
                width = c;
            }
        }
        Ok(ResNetTrunk {
            config: config.clone(),
            stem,
            blocks,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `[N, C, H, W] -> [N, feature_dim(H, W)]`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut h = avg_pool2d(x, self.config.input_pool)?;
        h = self.stem.forward(store, &h)?.relu()?;
        for b in &self.blocks {
            h = b.forward(store, &h)?;
        }
        if self.config.head_pool == 0 {
            return global_avg_pool(&h);
        }
        let p = avg_pool2d(&h, self.config.head_pool)?;
        let n = p.shape()[0];
        let per = p.len() / n;
        p.reshape(&[n, per])
    }
}
