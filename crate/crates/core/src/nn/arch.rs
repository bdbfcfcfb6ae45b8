//! Layer descriptors, shape chaining and named presets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::dataset::SampleShape;
use crate::digest::{digest, Digest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`.
    Same,
    /// No padding.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: Padding,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    /// Linear map to class logits, trained with softmax cross-entropy.
    SoftmaxHead {
        in_features: usize,
        num_classes: usize,
    },
}

impl Layer {
    /// `(weight shape, bias length)` for parameterised layers.
    pub fn params(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                alloc::vec![out_channels, in_channels, kernel[0], kernel[1]],
                out_channels,
            )),
            Layer::Dense {
                in_features,
                out_features,
            } => Some((alloc::vec![out_features, in_features], out_features)),
            Layer::SoftmaxHead {
                in_features,
                num_classes,
            } => Some((alloc::vec![num_classes, in_features], num_classes)),
            _ => None,
        }
    }

    /// Fan-in used for Kaiming-uniform initialisation.
    pub fn fan_in(&self) -> usize {
        match *self {
            Layer::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel[0] * kernel[1],
            Layer::Dense { in_features, .. } | Layer::SoftmaxHead { in_features, .. } => {
                in_features
            }
            _ => 0,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv",
            Layer::MaxPool { .. } => "pool",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
            Layer::SoftmaxHead { .. } => "head",
        }
    }
}

/// Input/output geometry of a same- or valid-padded window.
pub(crate) fn conv_geometry(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
        Padding::Valid => (input >= kernel).then(|| ((input - kernel) / stride + 1, 0)),
    }
}

fn is_flat(s: SampleShape) -> bool {
    s.height == 1 && s.channels == 1
}

/// An ordered layer stack over a fixed input shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    input: SampleShape,
    layers: Vec<Layer>,
}

impl ModelArch {
    /// Validate that every layer accepts its predecessor's output and that
    /// the stack ends in a classification head.
    pub fn new(input: SampleShape, layers: Vec<Layer>) -> Result<Self, NnError> {
        let arch = Self { input, layers };
        arch.output_shapes()?;
        match arch.layers.last() {
            Some(Layer::SoftmaxHead { .. }) => {}
            _ => {
                return Err(NnError::ShapeError(
                    "final layer must be a SoftmaxHead".into(),
                ))
            }
        }
        if arch.layers[..arch.layers.len() - 1]
            .iter()
            .any(|l| matches!(l, Layer::SoftmaxHead { .. }))
        {
            return Err(NnError::ShapeError(
                "SoftmaxHead may only appear last".into(),
            ));
        }
        Ok(arch)
    }

    pub fn input(&self) -> SampleShape {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::SoftmaxHead { num_classes, .. }) => *num_classes,
            _ => unreachable!("validated on construction"),
        }
    }

    /// Output shape of every layer, in order.
    pub fn output_shapes(&self) -> Result<Vec<SampleShape>, NnError> {
        let mut shape = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let err =
                |msg: String| NnError::ShapeError(format!("layer {i} ({}): {msg}", layer.kind()));
            shape = match *layer {
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if shape.channels != in_channels {
                        return Err(err(format!(
                            "expects {in_channels} channels, got {}",
                            shape.channels
                        )));
                    }
                    if stride == 0 || kernel[0] == 0 || kernel[1] == 0 || out_channels == 0 {
                        return Err(err("zero-sized kernel, stride or channel count".into()));
                    }
                    let (h, _) = conv_geometry(shape.height, kernel[0], stride, padding)
                        .ok_or_else(|| err("kernel taller than input".into()))?;
                    let (w, _) = conv_geometry(shape.width, kernel[1], stride, padding)
                        .ok_or_else(|| err("kernel wider than input".into()))?;
                    SampleShape::new(h, w, out_channels)
                }
                Layer::MaxPool { window, stride } => {
                    if window == 0 || stride == 0 || shape.height < window || shape.width < window {
                        return Err(err(format!("window {window} does not fit {shape:?}")));
                    }
                    SampleShape::new(
                        (shape.height - window) / stride + 1,
                        (shape.width - window) / stride + 1,
                        shape.channels,
                    )
                }
                Layer::Relu => shape,
                Layer::Flatten => SampleShape::flat(shape.dim()),
                Layer::Dense {
                    in_features,
                    out_features,
                }
                | Layer::SoftmaxHead {
                    in_features,
                    num_classes: out_features,
                } => {
                    if !is_flat(shape) {
                        return Err(err(format!("needs a flat input, got {shape:?}")));
                    }
                    if shape.width != in_features {
                        return Err(err(format!(
                            "expects {in_features} inputs, previous layer yields {}",
                            shape.width
                        )));
                    }
                    if out_features == 0 {
                        return Err(err("zero outputs".into()));
                    }
                    SampleShape::flat(out_features)
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    /// `(name, shape)` of every parameter tensor, weight before bias,
    /// in layer order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((w, b)) = layer.params() {
                out.push((format!("{i}.{}.weight", layer.kind()), w));
                out.push((format!("{i}.{}.bias", layer.kind()), alloc::vec![b]));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Canonical one-line description; [`ModelArch::parse`] reads it back.
    pub fn describe(&self) -> String {
        let s = self.input;
        let mut out = format!("in={}x{}x{}", s.height, s.width, s.channels);
        for layer in &self.layers {
            out.push(';');
            let _ = match *layer {
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => write!(
                    out,
                    "conv({in_channels},{out_channels},{}x{},s{stride},{})",
                    kernel[0],
                    kernel[1],
                    match padding {
                        Padding::Same => "same",
                        Padding::Valid => "valid",
                    }
                ),
                Layer::MaxPool { window, stride } => write!(out, "pool({window},{stride})"),
                Layer::Relu => write!(out, "relu"),
                Layer::Flatten => write!(out, "flatten"),
                Layer::Dense {
                    in_features,
                    out_features,
                } => write!(out, "dense({in_features},{out_features})"),
                Layer::SoftmaxHead {
                    in_features,
                    num_classes,
                } => write!(out, "head({in_features},{num_classes})"),
            };
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, NnError> {
        let bad = || NnError::ShapeError(format!("cannot parse architecture {text:?}"));
        let mut parts = text.split(';');
        let input = parts
            .next()
            .and_then(|p| p.strip_prefix("in="))
            .ok_or_else(bad)?;
        let dims: Vec<usize> = input
            .split('x')
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if dims.len() != 3 {
            return Err(bad());
        }
        let input = SampleShape::new(dims[0], dims[1], dims[2]);
        let mut layers = Vec::new();
        for part in parts {
            let (name, args) = match part.find('(') {
                Some(p) => (&part[..p], part[p + 1..].strip_suffix(')').ok_or_else(bad)?),
                None => (part, ""),
            };
            let args: Vec<&str> = if args.is_empty() {
                Vec::new()
            } else {
                args.split(',').collect()
            };
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let layer = match (name, args.as_slice()) {
                ("relu", []) => Layer::Relu,
                ("flatten", []) => Layer::Flatten,
                ("pool", [w, s]) => Layer::MaxPool {
                    window: num(w)?,
                    stride: num(s)?,
                },
                ("dense", [i, o]) => Layer::Dense {
                    in_features: num(i)?,
                    out_features: num(o)?,
                },
                ("head", [i, c]) => Layer::SoftmaxHead {
                    in_features: num(i)?,
                    num_classes: num(c)?,
                },
                ("conv", [i, o, k, s, p]) => {
                    let (kh, kw) = k.split_once('x').ok_or_else(bad)?;
                    Layer::Conv2d {
                        in_channels: num(i)?,
                        out_channels: num(o)?,
                        kernel: [num(kh)?, num(kw)?],
                        stride: num(s.strip_prefix('s').ok_or_else(bad)?)?,
                        padding: match *p {
                            "same" => Padding::Same,
                            "valid" => Padding::Valid,
                            _ => return Err(bad()),
                        },
                    }
                }
                _ => return Err(bad()),
            };
            layers.push(layer);
        }
        Self::new(input, layers)
    }

    pub fn fingerprint(&self) -> Digest {
        digest(self.describe().as_bytes())
    }

    /// Named presets: `linear`, `desk-mlp`, `desk-cnn`, `paper-cnn`.
    pub fn preset(name: &str, input: SampleShape, num_classes: usize) -> Result<Self, NnError> {
        let d = input.dim();
        let c = input.channels;
        let head = |in_features| Layer::SoftmaxHead {
            in_features,
            num_classes,
        };
        let conv = |in_channels, out_channels| Layer::Conv2d {
            in_channels,
            out_channels,
            kernel: [3, 3],
            stride: 1,
            padding: Padding::Same,
        };
        let pool = Layer::MaxPool {
            window: 2,
            stride: 2,
        };
        let layers = match name {
            "linear" => alloc::vec![Layer::Flatten, head(d)],
            "desk-mlp" => alloc::vec![
                Layer::Flatten,
                Layer::Dense {
                    in_features: d,
                    out_features: 128
                },
                Layer::Relu,
                Layer::Dense {
                    in_features: 128,
                    out_features: 64
                },
                Layer::Relu,
                head(64),
            ],
            "desk-cnn" => {
                let pooled = (input.height / 2) * (input.width / 2) * 16;
                alloc::vec![
                    conv(c, 8),
                    Layer::Relu,
                    conv(8, 16),
                    Layer::Relu,
                    pool,
                    Layer::Flatten,
                    head(pooled)
                ]
            }
            "paper-cnn" => {
                let mut layers = Vec::new();
                let (mut h, mut w, mut ch) = (input.height, input.width, c);
                for out in [32, 64, 128] {
                    layers.extend([
                        conv(ch, out),
                        Layer::Relu,
                        conv(out, out),
                        Layer::Relu,
                        pool,
                    ]);
                    ch = out;
                    h /= 2;
                    w /= 2;
                }
                layers.push(Layer::Flatten);
                layers.push(head(h * w * ch));
                layers
            }
            other => return Err(NnError::InvalidConfig(format!("unknown preset {other:?}"))),
        };
        Self::new(input, layers)
    }
}

/// Preset names accepted by [`ModelArch::preset`].
pub const PRESETS: [&str; 4] = ["linear", "desk-mlp", "desk-cnn", "paper-cnn"];
