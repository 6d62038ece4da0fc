//! The five networks of the anonymizer: encoder and decoder (together the
//! autoencoder) plus three convolutional classifiers used as regularizers.
//!
//! Every network sees per-sample tensors of shape `[1, M, W]`; the latent
//! code is shaped `[1, 1, latent_length]` so the encoder regularizer can
//! reuse the same convolutional classifier with a kernel height of one.

use serde::{Deserialize, Serialize};

use crate::ingest::{LabeledWindow, DEFAULT_WINDOW, MAGNITUDE_CHANNELS};
use crate::nnkernel::{mix_seed, Dims, LayerSpec, ModelGraph, Tensor};
use crate::{Error, Result};

/// Convolutional classifier body shared by all three regularizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub filters: Vec<usize>,
    pub kernel_width: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            filters: vec![16, 32],
            kernel_width: 5,
            dense_units: 64,
            dropout: 0.25,
            l2: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub input_channels: usize,
    pub window: usize,
    pub latent_length: usize,
    /// Filters of each encoder conv block; the decoder mirrors them.
    pub encoder_filters: Vec<usize>,
    pub encoder_kernel: usize,
    pub pool: usize,
    pub autoencoder_l2: f64,
    pub classifier: ClassifierConfig,
    pub num_users: usize,
    pub num_activities: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            input_channels: MAGNITUDE_CHANNELS,
            window: DEFAULT_WINDOW,
            latent_length: 32,
            encoder_filters: vec![8, 16],
            encoder_kernel: 5,
            pool: 2,
            autoencoder_l2: 0.0,
            classifier: ClassifierConfig::default(),
            num_users: 24,
            num_activities: 4,
        }
    }
}

impl ArchitectureConfig {
    pub fn input_dims(&self) -> Dims {
        [1, self.input_channels, self.window]
    }

    pub fn latent_dims(&self) -> Dims {
        [1, 1, self.latent_length]
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.input_channels == 0 || self.window == 0 {
            return err("input channels and window must be positive".into());
        }
        if self.latent_length == 0 || self.latent_length >= self.input_channels * self.window {
            return err(format!(
                "latent length {} must be in 1..{} (a bottleneck)",
                self.latent_length,
                self.input_channels * self.window
            ));
        }
        if self.encoder_filters.is_empty() || self.encoder_filters.contains(&0) {
            return err("encoder needs at least one conv block with positive filters".into());
        }
        if self.encoder_kernel % 2 == 0 {
            return err("encoder kernel width must be odd".into());
        }
        if self.pool == 0 {
            return err("pool factor must be positive".into());
        }
        let shrink = self.pool.pow(self.encoder_filters.len() as u32);
        if self.window % shrink != 0 {
            return err(format!("window {} is not divisible by pool^blocks = {shrink}", self.window));
        }
        if self.num_users < 2 || self.num_activities < 2 {
            return err("need at least two identity and two activity classes".into());
        }
        let c = &self.classifier;
        if c.filters.is_empty() || c.filters.contains(&0) || c.kernel_width == 0 || c.dense_units == 0 {
            return err("classifier layers must be non-empty and positive".into());
        }
        if !(0.0..1.0).contains(&c.dropout) || c.l2 < 0.0 || self.autoencoder_l2 < 0.0 {
            return err("dropout must be in [0,1) and L2 coefficients non-negative".into());
        }
        let needed = c.filters.len() * (c.kernel_width - 1) + 1;
        if self.latent_length.min(self.window) < needed {
            return err(format!(
                "classifier needs inputs of width >= {needed}, latent length is {}",
                self.latent_length
            ));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for &f in &self.encoder_filters {
            specs.push(LayerSpec::conv_same(f, [1, self.encoder_kernel]).with_l2(self.autoencoder_l2));
            specs.push(LayerSpec::ReLU);
            specs.push(LayerSpec::MaxPool { pool: [1, self.pool] });
        }
        specs.push(LayerSpec::Flatten);
        specs.push(LayerSpec::dense(self.latent_length).with_l2(self.autoencoder_l2));
        specs.push(LayerSpec::Reshape { shape: self.latent_dims() });
        specs
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let blocks = self.encoder_filters.len();
        let last = self.encoder_filters[blocks - 1];
        let width = self.window / self.pool.pow(blocks as u32);
        let seed_shape = [last, self.input_channels, width];
        let mut specs = vec![
            LayerSpec::Flatten,
            LayerSpec::dense(seed_shape.iter().product()).with_l2(self.autoencoder_l2),
            LayerSpec::ReLU,
            LayerSpec::Reshape { shape: seed_shape },
        ];
        for i in (0..blocks).rev() {
            let filters = if i == 0 { 1 } else { self.encoder_filters[i - 1] };
            specs.push(LayerSpec::Upsample { factor: [1, self.pool] });
            specs.push(LayerSpec::conv_same(filters, [1, self.encoder_kernel]).with_l2(self.autoencoder_l2));
            if i > 0 {
                specs.push(LayerSpec::ReLU);
            }
        }
        specs
    }

    /// Classifier over inputs of `input` dims with a softmax of `classes`.
    /// The first kernel spans the full input height.
    pub fn classifier_specs(&self, input: Dims, classes: usize) -> Vec<LayerSpec> {
        let c = &self.classifier;
        let mut specs = Vec::new();
        for (i, &f) in c.filters.iter().enumerate() {
            let kh = if i == 0 { input[1] } else { 1 };
            specs.push(LayerSpec::conv(f, [kh, c.kernel_width]).with_l2(c.l2));
            specs.push(LayerSpec::ReLU);
            if c.dropout > 0.0 {
                specs.push(LayerSpec::Dropout { rate: c.dropout });
            }
        }
        specs.push(LayerSpec::Flatten);
        specs.push(LayerSpec::dense(c.dense_units).with_l2(c.l2));
        specs.push(LayerSpec::ReLU);
        specs.push(LayerSpec::dense(classes).with_l2(c.l2));
        specs.push(LayerSpec::Softmax);
        specs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    pub encoder: ModelGraph,
    pub decoder: ModelGraph,
    pub enc_reg: ModelGraph,
    pub dec_reg: ModelGraph,
    pub act_reg: ModelGraph,
}

pub const MODEL_NAMES: [&str; 5] = ["encoder", "decoder", "enc_reg", "dec_reg", "act_reg"];

impl ModelSet {
    pub fn graphs(&self) -> [&ModelGraph; 5] {
        [&self.encoder, &self.decoder, &self.enc_reg, &self.dec_reg, &self.act_reg]
    }

    pub fn param_counts(&self) -> [(&'static str, usize); 5] {
        let g = self.graphs();
        std::array::from_fn(|i| (MODEL_NAMES[i], g[i].param_count()))
    }

    /// Full autoencoder pass `decode(encode(x))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        decode(&self.decoder, &encode(&self.encoder, x)?)
    }
}

pub fn build_models(cfg: &ArchitectureConfig, seed: u64) -> Result<ModelSet> {
    cfg.validate()?;
    let input = cfg.input_dims();
    let latent = cfg.latent_dims();
    let graph = |i: u64, name: &str, dims: Dims, specs| ModelGraph::new(name, dims, specs, mix_seed(seed, i));
    let set = ModelSet {
        encoder: graph(0, "encoder", input, cfg.encoder_specs())?,
        decoder: graph(1, "decoder", latent, cfg.decoder_specs())?,
        enc_reg: graph(2, "enc_reg", latent, cfg.classifier_specs(latent, cfg.num_users))?,
        dec_reg: graph(3, "dec_reg", input, cfg.classifier_specs(input, cfg.num_users))?,
        act_reg: graph(4, "act_reg", input, cfg.classifier_specs(input, cfg.num_activities))?,
    };
    if set.encoder.output_dims() != latent || set.decoder.output_dims() != input {
        return Err(Error::Config("decoder output does not match encoder input".into()));
    }
    for (name, count) in set.param_counts() {
        log::debug!("{name}: {count} parameters");
    }
    Ok(set)
}

/// Batch `[n, 1, M, W]` to latent codes `[n, 1, 1, L]`.
pub fn encode(encoder: &ModelGraph, x: &Tensor) -> Result<Tensor> {
    encoder.predict(x)
}

/// Latent codes to reconstructed windows.
pub fn decode(decoder: &ModelGraph, y: &Tensor) -> Result<Tensor> {
    decoder.predict(y)
}

/// Stacks window data into a `[n, 1, M, W]` batch.
pub fn stack_windows(windows: &[LabeledWindow]) -> Result<Tensor> {
    let Some(first) = windows.first() else {
        return Err(Error::InsufficientData("no windows to stack".into()));
    };
    let (m, w) = (first.window.channels(), first.window.width());
    Tensor::stack(&[1, m, w], windows.iter().map(|lw| lw.window.data()))
}

/// Spec with the class count and first kernel height blanked out.
fn structural_key(specs: &[LayerSpec]) -> Vec<LayerSpec> {
    let last = specs.iter().rposition(|s| matches!(s, LayerSpec::Dense { .. }));
    let mut first_conv = true;
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| match s.clone() {
            LayerSpec::Conv2D { filters, kernel, stride, padding, l2 } if first_conv => {
                first_conv = false;
                LayerSpec::Conv2D { filters, kernel: [0, kernel[1]], stride, padding, l2 }
            }
            LayerSpec::Dense { l2, .. } if Some(i) == last => LayerSpec::Dense { units: 0, l2 },
            other => other,
        })
        .collect()
}

/// True when two classifiers differ at most in input and softmax widths.
pub fn same_classifier_body(a: &ModelGraph, b: &ModelGraph) -> bool {
    structural_key(&a.specs()) == structural_key(&b.specs())
}
