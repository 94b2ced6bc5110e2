//! U-shaped fully convolutional encoder producing guidance maps.
//!
//! Two down blocks (conv-relu-conv-relu, 2x2 max pool), a bottleneck, two up
//! blocks (nearest upsample, skip concat, conv-relu-conv-relu) and a 1x1
//! output convolution squashed by a sigmoid so every guidance value lies in
//! (0, 1). With `norm` on, each 3x3 convolution is followed by a per-channel
//! plane normalization with a learned scale and shift.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GuidanceMap, ProblemInstance};
use crate::tensor::{Element, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("map size {height}x{width} must be divisible by 4")]
    NotDivisible { width: usize, height: usize },
    #[error("input has {got} channels but the encoder expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("parameter `{0}` is missing or has the wrong shape")]
    BadParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which planes are stacked into the encoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputMode {
    /// Occupancy map only.
    #[serde(rename = "m")]
    Map,
    /// Occupancy map, start one-hot and goal one-hot.
    #[serde(rename = "m+")]
    MapStartGoal,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::Map => 1,
            InputMode::MapStartGoal => 3,
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Map => "m",
            InputMode::MapStartGoal => "m+",
        })
    }
}

impl FromStr for InputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" => Ok(InputMode::Map),
            "m+" | "m_plus" | "mplus" => Ok(InputMode::MapStartGoal),
            other => Err(format!("unknown input mode `{other}` (expected m or m+)")),
        }
    }
}

/// A `1 x C x H x W` input stack.
#[derive(Debug, Clone)]
pub struct EncoderInput<T: Element = f32> {
    pub mode: InputMode,
    pub tensor: Tensor<T>,
}

/// Stacks the occupancy map (1 = free) and, for `m+`, start and goal one-hot planes.
pub fn assemble_input<T: Element>(instance: &ProblemInstance, mode: InputMode) -> EncoderInput<T> {
    let map = &instance.map;
    let (h, w) = (map.height(), map.width());
    let mut data: Vec<T> = map
        .cells()
        .iter()
        .map(|&c| if c { T::one() } else { T::zero() })
        .collect();
    if mode == InputMode::MapStartGoal {
        for node in [instance.start, instance.goal] {
            let mut plane = vec![T::zero(); h * w];
            plane[map.index(node)] = T::one();
            data.extend(plane);
        }
    }
    let tensor =
        Tensor::from_vec(&[1, mode.channels(), h, w], data).expect("consistent input shape");
    EncoderInput { mode, tensor }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: InputMode,
    /// Channel widths of the two resolution levels.
    pub widths: [usize; 2],
    pub bottleneck: usize,
    /// Dropout after each down block and the bottleneck; 0 disables it.
    pub dropout: f64,
    /// Plane normalization after every 3x3 convolution.
    #[serde(default = "norm_default")]
    pub norm: bool,
}

fn norm_default() -> bool {
    true
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mode: InputMode::MapStartGoal,
            widths: [16, 32],
            bottleneck: 64,
            dropout: 0.1,
            norm: true,
        }
    }
}

impl EncoderConfig {
    /// Parameter names and shapes in their fixed order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let [w1, w2] = self.widths;
        let b = self.bottleneck;
        let convs: [(&str, usize, usize, usize); 11] = [
            ("down1.conv1", self.mode.channels(), w1, 3),
            ("down1.conv2", w1, w1, 3),
            ("down2.conv1", w1, w2, 3),
            ("down2.conv2", w2, w2, 3),
            ("mid.conv1", w2, b, 3),
            ("mid.conv2", b, b, 3),
            ("up2.conv1", b + w2, w2, 3),
            ("up2.conv2", w2, w2, 3),
            ("up1.conv1", w2 + w1, w1, 3),
            ("up1.conv2", w1, w1, 3),
            ("out.conv", w1, 1, 1),
        ];
        let mut out = Vec::new();
        for (name, cin, cout, k) in convs {
            out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
            if self.norm && k == 3 {
                out.push((format!("{name}.norm.weight"), vec![cout]));
                out.push((format!("{name}.norm.bias"), vec![cout]));
            } else {
                out.push((format!("{name}.bias"), vec![cout]));
            }
        }
        out
    }
}

/// Encoder parameters plus their configuration.
#[derive(Debug, Clone)]
pub struct Encoder<T: Element = f32> {
    config: EncoderConfig,
    params: Vec<(String, Tensor<T>)>,
}

impl<T: Element> Encoder<T> {
    /// Uniform init in `±sqrt(1 / fan_in)`; a bias shares its layer's fan-in.
    /// Normalization scales start at 1 and shifts at 0.
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.layout();
        let mut params = Vec::with_capacity(layout.len());
        let mut fan_in = 1;
        for (name, shape) in layout {
            let n = shape.iter().product();
            if shape.len() == 4 {
                fan_in = shape[1] * shape[2] * shape[3];
            }
            let bound = (1.0 / fan_in as f64).sqrt();
            let data = if name.ends_with("norm.weight") {
                vec![T::one(); n]
            } else if name.ends_with("norm.bias") {
                vec![T::zero(); n]
            } else {
                (0..n)
                    .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                    .collect()
            };
            params.push((
                name,
                Tensor::parameter(&shape, data).expect("layout shapes are valid"),
            ));
        }
        Self { config, params }
    }

    /// Rebuilds an encoder from named tensors, e.g. a loaded checkpoint.
    /// Extra names are ignored.
    pub fn from_named(
        config: EncoderConfig,
        named: &[(String, Tensor<T>)],
    ) -> Result<Self, EncoderError> {
        let params = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                named
                    .iter()
                    .find(|(n, t)| *n == name && t.shape() == shape.as_slice())
                    .map(|(_, t)| {
                        (
                            name.clone(),
                            Tensor::parameter(&shape, t.to_vec()).expect("shape checked"),
                        )
                    })
                    .ok_or(EncoderError::BadParameter(name))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn named_parameters(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    pub fn parameters(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|(_, t)| t.clone()).collect()
    }

    /// Copies every parameter into a different element type.
    pub fn cast<U: Element>(&self) -> Encoder<U> {
        let params = self
            .params
            .iter()
            .map(|(n, t)| {
                let data = t
                    .data()
                    .iter()
                    .map(|v| U::from_f64_lossy(v.to_f64().expect("finite parameter")))
                    .collect();
                (
                    n.clone(),
                    Tensor::parameter(t.shape(), data).expect("same shape"),
                )
            })
            .collect();
        Encoder {
            config: self.config,
            params,
        }
    }

    fn param(&self, name: &str) -> Result<&Tensor<T>, EncoderError> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| EncoderError::BadParameter(name.to_string()))
    }

    fn conv(&self, x: &Tensor<T>, layer: &str) -> Result<Tensor<T>, EncoderError> {
        let w = self.param(&format!("{layer}.weight"))?;
        if let Ok(b) = self.param(&format!("{layer}.bias")) {
            return Ok(x.conv2d(w, b)?);
        }
        let y = x.conv2d(w, &Tensor::zeros(&[w.shape()[0]])?)?;
        let gamma = self.param(&format!("{layer}.norm.weight"))?;
        let beta = self.param(&format!("{layer}.norm.bias"))?;
        Ok(y.channel_norm(gamma, beta)?)
    }

    fn block(&self, x: &Tensor<T>, block: &str) -> Result<Tensor<T>, EncoderError> {
        let y = self.conv(x, &format!("{block}.conv1"))?.relu();
        Ok(self.conv(&y, &format!("{block}.conv2"))?.relu())
    }

    fn maybe_dropout(
        &self,
        x: Tensor<T>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Tensor<T>, EncoderError> {
        Ok(x.dropout(self.config.dropout, training, rng)?)
    }

    /// Forward pass. Returns a `1 x 1 x H x W` tensor of guidance values in (0, 1).
    /// Dropout is active only when `training`; `rng` drives its masks.
    pub fn encode(
        &self,
        input: &EncoderInput<T>,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Tensor<T>, EncoderError> {
        let &[_, c, h, w] = input.tensor.shape() else {
            return Err(TensorError::InvalidShape(input.tensor.shape().to_vec()).into());
        };
        if h % 4 != 0 || w % 4 != 0 {
            return Err(EncoderError::NotDivisible {
                width: w,
                height: h,
            });
        }
        if c != self.config.mode.channels() {
            return Err(EncoderError::ChannelMismatch {
                expected: self.config.mode.channels(),
                got: c,
            });
        }
        let x = &input.tensor;
        let d1 = self.block(x, "down1")?;
        let d1 = self.maybe_dropout(d1, training, rng)?;
        let d2 = self.block(&d1.max_pool2()?, "down2")?;
        let d2 = self.maybe_dropout(d2, training, rng)?;
        let mid = self.block(&d2.max_pool2()?, "mid")?;
        let mid = self.maybe_dropout(mid, training, rng)?;
        let u2 = mid.nearest_upsample2()?.concat_channels(&d2)?;
        let u2 = self.block(&u2, "up2")?;
        let u1 = u2.nearest_upsample2()?.concat_channels(&d1)?;
        let u1 = self.block(&u1, "up1")?;
        Ok(self.conv(&u1, "out.conv")?.sigmoid())
    }

    /// Inference-mode guidance for one instance.
    pub fn guidance(&self, instance: &ProblemInstance) -> Result<GuidanceMap, EncoderError> {
        let input = assemble_input::<T>(instance, self.config.mode);
        let out = crate::tensor::no_grad(|| {
            self.encode(&input, false, &mut ChaCha8Rng::seed_from_u64(0))
        })?;
        let values = out
            .data()
            .iter()
            .map(|v| v.to_f32().expect("finite guidance"))
            .collect();
        Ok(
            GuidanceMap::new(instance.width(), instance.height(), values)
                .expect("output matches map size"),
        )
    }
}

impl Encoder<f32> {
    /// Infers the input mode and widths from named checkpoint tensors.
    pub fn from_checkpoint(
        named: &[(String, Tensor<f32>)],
        dropout: f64,
    ) -> Result<Self, EncoderError> {
        let shape_of = |name: &str| {
            named
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.shape().to_vec())
                .ok_or_else(|| EncoderError::BadParameter(name.to_string()))
        };
        let first = shape_of("down1.conv1.weight")?;
        let mode = match first[1] {
            1 => InputMode::Map,
            3 => InputMode::MapStartGoal,
            other => {
                return Err(EncoderError::ChannelMismatch {
                    expected: 3,
                    got: other,
                })
            }
        };
        let w2 = shape_of("down2.conv1.weight")?[0];
        let bottleneck = shape_of("mid.conv1.weight")?[0];
        let config = EncoderConfig {
            mode,
            widths: [first[0], w2],
            bottleneck,
            dropout,
            norm: named.iter().any(|(n, _)| n.ends_with(".norm.weight")),
        };
        Self::from_named(config, named)
    }
}
