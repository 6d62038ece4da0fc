use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{volume, Dims, LayerSpec, Padding};
use super::ops::{col2im, gemm, im2col, mix_seed, softmax_row, ConvGeom};
use super::tensor::Tensor;
use crate::{Error, Result};

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Dropout is the identity.
    Inference,
}

/// One layer with its resolved shapes and (for conv/dense) parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Dims,
    pub output: Dims,
    pub weight: Option<Tensor<f32>>,
    pub bias: Option<Tensor<f32>>,
}

/// An ordered stack of layers with f32 parameters.
///
/// Activations and gradients are computed in f64.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    name: String,
    input: Dims,
    layers: Vec<Layer>,
    frozen: bool,
    uid: u64,
    version: u64,
}

impl PartialEq for ModelGraph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.input == other.input
            && self.layers == other.layers
            && self.frozen == other.frozen
    }
}

/// Values saved during a forward pass for the matching backward pass.
#[derive(Debug)]
enum Saved {
    Nothing,
    Input(Vec<f64>),
    Cols { cols: Vec<f64>, weight: Vec<f64> },
    Dense { input: Vec<f64>, weight: Vec<f64> },
    Argmax(Vec<usize>),
    Mask(Vec<f64>),
    Output(Vec<f64>),
}

#[derive(Debug)]
pub struct ForwardCache {
    uid: u64,
    version: u64,
    batch: usize,
    saved: Vec<Saved>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients (weight then bias per parameterised layer, in layer
/// order) and the gradient with respect to the forward input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<Tensor<f64>>,
    pub input: Option<Tensor<f64>>,
}

impl Gradients {
    /// Element-wise sum of parameter gradients; input gradients are dropped.
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.params.is_empty() {
            self.params = other.params.clone();
            return;
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.params {
            for v in p.values_mut() {
                *v *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.values().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BackwardOptions {
    pub params: bool,
    pub input: bool,
    /// Add `2·λ·θ` to weight gradients.
    pub l2: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            params: true,
            input: true,
            l2: true,
        }
    }
}

impl ModelGraph {
    /// Resolves shapes and draws initial parameters: uniform with limit
    /// √(6/fan_in) before a ReLU and √(3/fan_in) otherwise; zero biases.
    pub fn new(name: impl Into<String>, input: Dims, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut dims = input;
        if volume(dims) == 0 {
            return Err(Error::Config("input dims must be positive".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let output = spec.output_dims(i, dims)?;
            let (weight, bias) = match spec.param_shapes(dims) {
                Some((ws, bs)) => {
                    let fan_in: usize = ws[1..].iter().product();
                    let relu_next = matches!(specs.get(i + 1), Some(LayerSpec::ReLU));
                    let limit = if relu_next { (6.0 / fan_in as f64).sqrt() } else { (3.0 / fan_in as f64).sqrt() };
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
                    let n: usize = ws.iter().product();
                    let w: Vec<f32> = (0..n).map(|_| rng.gen_range(-limit..limit) as f32).collect();
                    (Some(Tensor::new(ws, w)?), Some(Tensor::zeros(bs)))
                }
                None => (None, None),
            };
            layers.push(Layer {
                spec: spec.clone(),
                input: dims,
                output,
                weight,
                bias,
            });
            dims = output;
        }
        Ok(ModelGraph {
            name: name.into(),
            input,
            layers,
            frozen: false,
            uid: NEXT_UID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        })
    }

    /// Rebuilds a graph from stored layers (used by the container loader).
    pub(crate) fn from_layers(name: String, input: Dims, layers: Vec<Layer>, frozen: bool) -> Self {
        ModelGraph {
            name,
            input,
            layers,
            frozen,
            uid: NEXT_UID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dims(&self) -> Dims {
        self.input
    }

    pub fn output_dims(&self) -> Dims {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    /// Named parameter tensors in gradient order.
    pub fn parameters(&self) -> Vec<(String, &Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let kind = l.spec.kind_name();
            if let (Some(w), Some(b)) = (&l.weight, &l.bias) {
                out.push((format!("{i}.{kind}.weight"), w));
                out.push((format!("{i}.{kind}.bias"), b));
            }
        }
        out
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let (Some(w), Some(b)) = (&mut l.weight, &mut l.bias) {
                out.push(w);
                out.push(b);
            }
        }
        out
    }

    /// Applies `f` to each parameter tensor, bumping the version so caches
    /// from earlier forward passes are rejected.
    pub fn modify_parameters(&mut self, mut f: impl FnMut(usize, &mut [f32])) -> Result<()> {
        if self.frozen {
            return Err(Error::FrozenModel(self.name.clone()));
        }
        for (i, p) in self.parameters_mut().into_iter().enumerate() {
            f(i, p.values_mut());
        }
        self.version += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// `Σ λ·θ²` over conv/dense weights (biases are not penalised).
    pub fn l2_penalty(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(|l| l.weight.as_ref().map(|w| (l.spec.l2(), w)))
            .filter(|(l2, _)| *l2 > 0.0)
            .map(|(l2, w)| l2 * w.values().iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>())
            .sum()
    }

    pub fn forward(&self, batch: &Tensor, mode: Mode, seed: u64) -> Result<(Tensor, ForwardCache)> {
        self.forward_impl(batch, mode, seed, true)
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_impl(batch, Mode::Inference, 0, false)?.0)
    }

    fn forward_impl(&self, batch: &Tensor, mode: Mode, seed: u64, keep: bool) -> Result<(Tensor, ForwardCache)> {
        let n = batch.rows();
        if batch.row_len() != volume(self.input) || batch.shape().len() < 2 {
            let mut expected = vec![n];
            expected.extend_from_slice(&self.input);
            return Err(Error::shape(0, &expected, batch.shape()));
        }
        let mut x = batch.values().to_vec();
        let mut saved = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for (li, layer) in self.layers.iter().enumerate() {
            let (y, s) = forward_layer(layer, li, x, n, mode, seed, keep);
            x = y;
            if keep {
                saved.push(s);
            }
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&self.output_dims());
        let out = Tensor::new(shape, x)?;
        Ok((
            out,
            ForwardCache {
                uid: self.uid,
                version: self.version,
                batch: n,
                saved,
            },
        ))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor) -> Result<Gradients> {
        self.backward_with(cache, grad_output, BackwardOptions::default())
    }

    pub fn backward_with(&self, cache: &ForwardCache, grad_output: &Tensor, opts: BackwardOptions) -> Result<Gradients> {
        if cache.uid != self.uid || cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "cache was produced by a different state of `{}`",
                self.name
            )));
        }
        if cache.saved.len() != self.layers.len() {
            return Err(Error::StaleCache("cache holds no saved activations".into()));
        }
        let n = cache.batch;
        if grad_output.rows() != n || grad_output.row_len() != volume(self.output_dims()) {
            return Err(Error::StaleCache(format!(
                "output gradient {:?} does not match cached batch of {n} x {:?}",
                grad_output.shape(),
                self.output_dims()
            )));
        }
        let mut grads: Vec<Option<(Tensor<f64>, Tensor<f64>)>> = vec![None; self.layers.len()];
        let mut g = grad_output.values().to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let need_input = li > 0 || opts.input;
            let (gx, pg) = backward_layer(layer, &cache.saved[li], &g, n, opts.params, need_input);
            grads[li] = pg;
            g = gx;
        }
        let mut params = Vec::new();
        if opts.params {
            for (layer, pg) in self.layers.iter().zip(grads) {
                if let Some((mut dw, db)) = pg {
                    let l2 = layer.spec.l2();
                    if opts.l2 && l2 > 0.0 {
                        let w = layer.weight.as_ref().expect("param layer");
                        for (d, &v) in dw.values_mut().iter_mut().zip(w.values()) {
                            *d += 2.0 * l2 * f64::from(v);
                        }
                    }
                    params.push(dw);
                    params.push(db);
                }
            }
        }
        let input = if opts.input {
            let mut shape = vec![n];
            shape.extend_from_slice(&self.input);
            Some(Tensor::new(shape, g)?)
        } else {
            None
        };
        Ok(Gradients { params, input })
    }

    /// Gradient of the L2 penalty alone, shaped like [`Gradients::params`].
    pub fn l2_gradients(&self) -> Gradients {
        let mut params = Vec::new();
        for layer in &self.layers {
            if let (Some(w), Some(b)) = (&layer.weight, &layer.bias) {
                let l2 = layer.spec.l2();
                let dw = w.values().iter().map(|&v| 2.0 * l2 * f64::from(v)).collect();
                params.push(Tensor::new(w.shape().to_vec(), dw).expect("shape"));
                params.push(Tensor::zeros(b.shape().to_vec()));
            }
        }
        Gradients { params, input: None }
    }
}

fn conv_geom(layer: &Layer) -> ConvGeom {
    let LayerSpec::Conv2D {
        kernel: [kh, kw],
        stride: [sh, sw],
        padding,
        ..
    } = layer.spec
    else {
        unreachable!("conv geometry of a non-conv layer")
    };
    let [c, h, w] = layer.input;
    let (pt, pl) = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
    };
    ConvGeom {
        c,
        h,
        w,
        kh,
        kw,
        sh,
        sw,
        pt,
        pl,
        oh: layer.output[1],
        ow: layer.output[2],
    }
}

fn to_f64(t: &Tensor<f32>) -> Vec<f64> {
    t.values().iter().map(|&v| f64::from(v)).collect()
}

fn forward_layer(
    layer: &Layer,
    index: usize,
    x: Vec<f64>,
    n: usize,
    mode: Mode,
    seed: u64,
    keep: bool,
) -> (Vec<f64>, Saved) {
    let in_len = volume(layer.input);
    let out_len = volume(layer.output);
    match &layer.spec {
        LayerSpec::Conv2D { filters, .. } => {
            let g = conv_geom(layer);
            let (k, p) = (g.k(), g.p());
            let w = to_f64(layer.weight.as_ref().expect("conv weight"));
            let b = to_f64(layer.bias.as_ref().expect("conv bias"));
            let mut cols = vec![0.0; n * k * p];
            let mut y = vec![0.0; n * out_len];
            for s in 0..n {
                let c = &mut cols[s * k * p..(s + 1) * k * p];
                im2col(&g, &x[s * in_len..(s + 1) * in_len], c);
                let ys = &mut y[s * out_len..(s + 1) * out_len];
                for (f, row) in ys.chunks_mut(p).enumerate() {
                    row.fill(b[f]);
                }
                gemm(*filters, k, p, &w, (k, 1), c, (p, 1), 1.0, ys, (p, 1));
            }
            let saved = if keep { Saved::Cols { cols, weight: w } } else { Saved::Nothing };
            (y, saved)
        }
        LayerSpec::Dense { units, .. } => {
            let w = to_f64(layer.weight.as_ref().expect("dense weight"));
            let b = to_f64(layer.bias.as_ref().expect("dense bias"));
            let mut y = vec![0.0; n * units];
            for row in y.chunks_mut(*units) {
                row.copy_from_slice(&b);
            }
            gemm(n, in_len, *units, &x, (in_len, 1), &w, (1, in_len), 1.0, &mut y, (*units, 1));
            let saved = if keep { Saved::Dense { input: x, weight: w } } else { Saved::Nothing };
            (y, saved)
        }
        LayerSpec::ReLU => {
            let y = x.iter().map(|&v| v.max(0.0)).collect();
            (y, if keep { Saved::Input(x) } else { Saved::Nothing })
        }
        LayerSpec::Softmax => {
            let mut y = vec![0.0; x.len()];
            for (zi, yi) in x.chunks(in_len).zip(y.chunks_mut(in_len)) {
                softmax_row(zi, yi);
            }
            let saved = if keep { Saved::Output(y.clone()) } else { Saved::Nothing };
            (y, saved)
        }
        LayerSpec::Dropout { rate } => {
            if mode == Mode::Inference || *rate == 0.0 {
                return (x, Saved::Nothing);
            }
            let keep_p = 1.0 - rate;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xD0_0000 + index as u64));
            let mask: Vec<f64> = (0..x.len())
                .map(|_| if rng.gen::<f64>() < keep_p { 1.0 / keep_p } else { 0.0 })
                .collect();
            let y = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
            (y, if keep { Saved::Mask(mask) } else { Saved::Nothing })
        }
        LayerSpec::MaxPool { pool: [ph, pw] } => {
            let [c, h, w] = layer.input;
            let [_, oh, ow] = layer.output;
            let mut y = vec![0.0; n * out_len];
            let mut arg = vec![0usize; if keep { n * out_len } else { 0 }];
            for s in 0..n {
                for ch in 0..c {
                    let base = s * in_len + ch * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_i = base;
                            for i in 0..*ph {
                                for j in 0..*pw {
                                    let idx = base + (oy * ph + i) * w + ox * pw + j;
                                    if x[idx] > best {
                                        best = x[idx];
                                        best_i = idx;
                                    }
                                }
                            }
                            let o = s * out_len + (ch * oh + oy) * ow + ox;
                            y[o] = best;
                            if keep {
                                arg[o] = best_i;
                            }
                        }
                    }
                }
            }
            (y, if keep { Saved::Argmax(arg) } else { Saved::Nothing })
        }
        LayerSpec::Upsample { factor: [fh, fw] } => {
            let [c, h, w] = layer.input;
            let [_, oh, ow] = layer.output;
            let mut y = vec![0.0; n * out_len];
            for s in 0..n {
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            y[s * out_len + (ch * oh + oy) * ow + ox] = x[s * in_len + (ch * h + oy / fh) * w + ox / fw];
                        }
                    }
                }
            }
            (y, Saved::Nothing)
        }
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => (x, Saved::Nothing),
    }
}

type ParamGrad = Option<(Tensor<f64>, Tensor<f64>)>;

fn backward_layer(
    layer: &Layer,
    saved: &Saved,
    g: &[f64],
    n: usize,
    want_params: bool,
    want_input: bool,
) -> (Vec<f64>, ParamGrad) {
    let in_len = volume(layer.input);
    let out_len = volume(layer.output);
    match (&layer.spec, saved) {
        (LayerSpec::Conv2D { filters, .. }, Saved::Cols { cols, weight }) => {
            let geom = conv_geom(layer);
            let (k, p) = (geom.k(), geom.p());
            let mut dw = vec![0.0; filters * k];
            let mut db = vec![0.0; *filters];
            let mut dx = vec![0.0; if want_input { n * in_len } else { 0 }];
            let mut dcols = vec![0.0; if want_input { k * p } else { 0 }];
            for s in 0..n {
                let gs = &g[s * out_len..(s + 1) * out_len];
                if want_params {
                    let cs = &cols[s * k * p..(s + 1) * k * p];
                    gemm(*filters, p, k, gs, (p, 1), cs, (1, p), 1.0, &mut dw, (k, 1));
                    for (f, row) in gs.chunks(p).enumerate() {
                        db[f] += row.iter().sum::<f64>();
                    }
                }
                if want_input {
                    gemm(k, *filters, p, weight, (1, k), gs, (p, 1), 0.0, &mut dcols, (p, 1));
                    col2im(&geom, &dcols, &mut dx[s * in_len..(s + 1) * in_len]);
                }
            }
            let pg = want_params.then(|| param_grads(layer, dw, db));
            (dx, pg)
        }
        (LayerSpec::Dense { units, .. }, Saved::Dense { input, weight }) => {
            let pg = want_params.then(|| {
                let mut dw = vec![0.0; units * in_len];
                gemm(*units, n, in_len, g, (1, *units), input, (in_len, 1), 0.0, &mut dw, (in_len, 1));
                let mut db = vec![0.0; *units];
                for row in g.chunks(*units) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                param_grads(layer, dw, db)
            });
            let mut dx = vec![0.0; if want_input { n * in_len } else { 0 }];
            if want_input {
                gemm(n, *units, in_len, g, (*units, 1), weight, (in_len, 1), 0.0, &mut dx, (in_len, 1));
            }
            (dx, pg)
        }
        (LayerSpec::ReLU, Saved::Input(x)) => {
            let dx = g.iter().zip(x).map(|(d, &v)| if v > 0.0 { *d } else { 0.0 }).collect();
            (dx, None)
        }
        (LayerSpec::Softmax, Saved::Output(y)) => {
            let mut dx = vec![0.0; g.len()];
            for ((gi, yi), di) in g.chunks(in_len).zip(y.chunks(in_len)).zip(dx.chunks_mut(in_len)) {
                let dot: f64 = gi.iter().zip(yi).map(|(a, b)| a * b).sum();
                for ((d, a), b) in di.iter_mut().zip(gi).zip(yi) {
                    *d = b * (a - dot);
                }
            }
            (dx, None)
        }
        (LayerSpec::Dropout { .. }, Saved::Mask(mask)) => (g.iter().zip(mask).map(|(a, m)| a * m).collect(), None),
        (LayerSpec::Dropout { .. }, Saved::Nothing) => (g.to_vec(), None),
        (LayerSpec::MaxPool { .. }, Saved::Argmax(arg)) => {
            let mut dx = vec![0.0; n * in_len];
            for (d, &i) in g.iter().zip(arg) {
                dx[i] += d;
            }
            (dx, None)
        }
        (LayerSpec::Upsample { factor: [fh, fw] }, _) => {
            let [c, h, w] = layer.input;
            let [_, oh, ow] = layer.output;
            let mut dx = vec![0.0; n * in_len];
            for s in 0..n {
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            dx[s * in_len + (ch * h + oy / fh) * w + ox / fw] += g[s * out_len + (ch * oh + oy) * ow + ox];
                        }
                    }
                }
            }
            (dx, None)
        }
        (LayerSpec::Flatten | LayerSpec::Reshape { .. }, _) => (g.to_vec(), None),
        (spec, _) => unreachable!("cache entry does not match layer {}", spec.kind_name()),
    }
}

fn param_grads(layer: &Layer, dw: Vec<f64>, db: Vec<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let ws = layer.weight.as_ref().expect("weight").shape().to_vec();
    let bs = layer.bias.as_ref().expect("bias").shape().to_vec();
    (Tensor::new(ws, dw).expect("shape"), Tensor::new(bs, db).expect("shape"))
}
