use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-sample activation shape: channels, height, width.
pub type Dims = [usize; 3];

pub fn volume(d: Dims) -> usize {
    d[0] * d[1] * d[2]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
    /// Zero padding that keeps the spatial size (stride 1, odd kernels).
    Same,
}

fn unit_stride() -> [usize; 2] {
    [1, 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2D {
        filters: usize,
        kernel: [usize; 2],
        #[serde(default = "unit_stride")]
        stride: [usize; 2],
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        l2: f64,
    },
    Dense {
        units: usize,
        #[serde(default)]
        l2: f64,
    },
    ReLU,
    Softmax,
    Dropout {
        rate: f64,
    },
    MaxPool {
        pool: [usize; 2],
    },
    Upsample {
        factor: [usize; 2],
    },
    Flatten,
    Reshape {
        shape: Dims,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: [usize; 2]) -> Self {
        LayerSpec::Conv2D {
            filters,
            kernel,
            stride: [1, 1],
            padding: Padding::Valid,
            l2: 0.0,
        }
    }

    pub fn conv_same(filters: usize, kernel: [usize; 2]) -> Self {
        LayerSpec::Conv2D {
            filters,
            kernel,
            stride: [1, 1],
            padding: Padding::Same,
            l2: 0.0,
        }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, l2: 0.0 }
    }

    /// Same layer with its L2 coefficient replaced (no-op for parameter-free layers).
    pub fn with_l2(mut self, coefficient: f64) -> Self {
        match &mut self {
            LayerSpec::Conv2D { l2, .. } | LayerSpec::Dense { l2, .. } => *l2 = coefficient,
            _ => {}
        }
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::ReLU => "relu",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Upsample { .. } => "upsample",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    pub fn l2(&self) -> f64 {
        match self {
            LayerSpec::Conv2D { l2, .. } | LayerSpec::Dense { l2, .. } => *l2,
            _ => 0.0,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. })
    }

    fn invalid(&self, index: usize, why: &str) -> Error {
        Error::Config(format!("layer {index} ({}): {why}", self.kind_name()))
    }

    /// Output shape for `input`, validating hyperparameters.
    pub fn output_dims(&self, index: usize, input: Dims) -> Result<Dims> {
        let [c, h, w] = input;
        match *self {
            LayerSpec::Conv2D {
                filters,
                kernel: [kh, kw],
                stride: [sh, sw],
                padding,
                l2,
            } => {
                if filters == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
                    return Err(self.invalid(index, "filters, kernel and stride must be positive"));
                }
                if !(l2 >= 0.0) {
                    return Err(self.invalid(index, "l2 must be non-negative"));
                }
                match padding {
                    Padding::Valid => {
                        if kh > h || kw > w {
                            return Err(self.invalid(
                                index,
                                &format!("kernel {kh}x{kw} larger than input {h}x{w}"),
                            ));
                        }
                        Ok([filters, (h - kh) / sh + 1, (w - kw) / sw + 1])
                    }
                    Padding::Same => {
                        if sh != 1 || sw != 1 || kh % 2 == 0 || kw % 2 == 0 {
                            return Err(self.invalid(index, "same padding needs stride 1 and odd kernels"));
                        }
                        Ok([filters, h, w])
                    }
                }
            }
            LayerSpec::Dense { units, l2 } => {
                if units == 0 {
                    return Err(self.invalid(index, "units must be positive"));
                }
                if !(l2 >= 0.0) {
                    return Err(self.invalid(index, "l2 must be non-negative"));
                }
                Ok([units, 1, 1])
            }
            LayerSpec::ReLU | LayerSpec::Softmax => Ok(input),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(self.invalid(index, "drop probability must be in [0,1)"));
                }
                Ok(input)
            }
            LayerSpec::MaxPool { pool: [ph, pw] } => {
                if ph == 0 || pw == 0 || ph > h || pw > w {
                    return Err(self.invalid(index, "pool must be positive and fit the input"));
                }
                Ok([c, h / ph, w / pw])
            }
            LayerSpec::Upsample { factor: [fh, fw] } => {
                if fh == 0 || fw == 0 {
                    return Err(self.invalid(index, "factor must be positive"));
                }
                Ok([c, h * fh, w * fw])
            }
            LayerSpec::Flatten => Ok([c * h * w, 1, 1]),
            LayerSpec::Reshape { shape } => {
                if volume(shape) != c * h * w {
                    return Err(self.invalid(
                        index,
                        &format!("cannot reshape {input:?} into {shape:?}"),
                    ));
                }
                Ok(shape)
            }
        }
    }

    /// Weight and bias shapes, if the layer has parameters.
    pub fn param_shapes(&self, input: Dims) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2D {
                filters,
                kernel: [kh, kw],
                ..
            } => Some((vec![filters, input[0], kh, kw], vec![filters])),
            LayerSpec::Dense { units, .. } => Some((vec![units, volume(input)], vec![units])),
            _ => None,
        }
    }
}
