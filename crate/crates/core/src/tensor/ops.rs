use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackwardOp, Element, Result, Tensor, TensorError};

pub const CHANNEL_NORM_EPS: f64 = 1e-5;

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

fn dims4<T: Element>(op: &'static str, t: &Tensor<T>) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(TensorError::ShapeMismatch {
            op,
            detail: format!("expected NxCxHxW, got {:?}", t.shape()),
        }),
    }
}

macro_rules! unary_backward {
    ($name:ident, $label:literal, |$g:ident, $y:ident, $x:ident| $body:expr) => {
        struct $name;
        impl<T: Element> BackwardOp<T> for $name {
            fn name(&self) -> &'static str {
                $label
            }
            fn backward(
                &self,
                grad_out: &[T],
                output: &[T],
                inputs: &[Tensor<T>],
            ) -> Vec<Option<Vec<T>>> {
                let x = inputs[0].data();
                let g = grad_out
                    .iter()
                    .zip(output)
                    .zip(x.iter())
                    .map(|((&$g, &$y), &$x)| $body)
                    .collect();
                vec![Some(g)]
            }
        }
    };
}

unary_backward!(ReluBackward, "relu", |g, _y, x| if x > T::zero() {
    g
} else {
    T::zero()
});
unary_backward!(SigmoidBackward, "sigmoid", |g, y, _x| g
    * y
    * (T::one() - y));

struct SoftmaxBackward;

impl<T: Element> BackwardOp<T> for SoftmaxBackward {
    fn name(&self) -> &'static str {
        "softmax_flat"
    }

    fn backward(&self, grad_out: &[T], output: &[T], _inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let dot: T = grad_out.iter().zip(output).map(|(&g, &s)| g * s).sum();
        vec![Some(
            grad_out
                .iter()
                .zip(output)
                .map(|(&g, &s)| s * (g - dot))
                .collect(),
        )]
    }
}

struct MaskBackward<T> {
    name: &'static str,
    scale: Vec<T>,
}

impl<T: Element> BackwardOp<T> for MaskBackward<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        vec![Some(
            grad_out
                .iter()
                .zip(&self.scale)
                .map(|(&g, &s)| g * s)
                .collect(),
        )]
    }
}

struct ChannelNormBackward<T> {
    planes: usize,
    channels: usize,
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Element> BackwardOp<T> for ChannelNormBackward<T> {
    fn name(&self) -> &'static str {
        "channel_norm"
    }

    fn backward(&self, grad_out: &[T], _output: &[T], inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let m = grad_out.len() / self.planes;
        let m_t = T::from_usize(m).expect("plane size fits");
        let gamma = inputs[1].data();
        let mut dx = vec![T::zero(); grad_out.len()];
        let mut dgamma = vec![T::zero(); self.channels];
        let mut dbeta = vec![T::zero(); self.channels];
        for p in 0..self.planes {
            let c = p % self.channels;
            let range = p * m..(p + 1) * m;
            let dy = &grad_out[range.clone()];
            let xh = &self.normalized[range.clone()];
            let mut sum_dy = T::zero();
            let mut sum_dy_xh = T::zero();
            for (&g, &x) in dy.iter().zip(xh) {
                sum_dy = sum_dy + g;
                sum_dy_xh = sum_dy_xh + g * x;
            }
            dgamma[c] = dgamma[c] + sum_dy_xh;
            dbeta[c] = dbeta[c] + sum_dy;
            let scale = gamma[c] * self.inv_std[p];
            let mean_dy = sum_dy / m_t;
            let mean_dy_xh = sum_dy_xh / m_t;
            for ((out, &g), &x) in dx[range].iter_mut().zip(dy).zip(xh) {
                *out = scale * (g - mean_dy - x * mean_dy_xh);
            }
        }
        vec![Some(dx), Some(dgamma), Some(dbeta)]
    }
}

struct AddBackward;

impl<T: Element> BackwardOp<T> for AddBackward {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        vec![Some(grad_out.to_vec()), Some(grad_out.to_vec())]
    }
}

struct MulBackward;

impl<T: Element> BackwardOp<T> for MulBackward {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, grad_out: &[T], _output: &[T], inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let a = inputs[0].data();
        let b = inputs[1].data();
        let ga = grad_out
            .iter()
            .zip(b.iter())
            .map(|(&g, &y)| g * y)
            .collect();
        let gb = grad_out
            .iter()
            .zip(a.iter())
            .map(|(&g, &x)| g * x)
            .collect();
        vec![Some(ga), Some(gb)]
    }
}

struct ScaleBackward<T>(T);

impl<T: Element> BackwardOp<T> for ScaleBackward<T> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        vec![Some(grad_out.iter().map(|&g| g * self.0).collect())]
    }
}

struct SumBackward(usize);

impl<T: Element> BackwardOp<T> for SumBackward {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![grad_out[0]; self.0])]
    }
}

struct L1DiffBackward;

impl<T: Element> BackwardOp<T> for L1DiffBackward {
    fn name(&self) -> &'static str {
        "l1_diff"
    }

    fn backward(&self, grad_out: &[T], _output: &[T], inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let a = inputs[0].data();
        let b = inputs[1].data();
        let ga: Vec<T> = grad_out
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(&g, (&x, &y))| {
                if x > y {
                    g
                } else if x < y {
                    -g
                } else {
                    T::zero()
                }
            })
            .collect();
        let gb = ga.iter().map(|&v| -v).collect();
        vec![Some(ga), Some(gb)]
    }
}

struct ReshapeBackward;

impl<T: Element> BackwardOp<T> for ReshapeBackward {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        vec![Some(grad_out.to_vec())]
    }
}

struct MaxPoolBackward {
    input_len: usize,
    argmax: Vec<usize>,
}

impl<T: Element> BackwardOp<T> for MaxPoolBackward {
    fn name(&self) -> &'static str {
        "max_pool2"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        let mut g = vec![T::zero(); self.input_len];
        for (&src, &go) in self.argmax.iter().zip(grad_out) {
            g[src] = g[src] + go;
        }
        vec![Some(g)]
    }
}

struct UpsampleBackward([usize; 4]);

impl<T: Element> BackwardOp<T> for UpsampleBackward {
    fn name(&self) -> &'static str {
        "nearest_upsample2"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        let [n, c, h, w] = self.0;
        let (oh, ow) = (2 * h, 2 * w);
        let mut g = vec![T::zero(); n * c * h * w];
        for plane in 0..n * c {
            let src = &grad_out[plane * oh * ow..(plane + 1) * oh * ow];
            let dst = &mut g[plane * h * w..(plane + 1) * h * w];
            for y in 0..oh {
                for x in 0..ow {
                    let d = &mut dst[(y / 2) * w + x / 2];
                    *d = *d + src[y * ow + x];
                }
            }
        }
        vec![Some(g)]
    }
}

struct ConcatBackward {
    n: usize,
    a_block: usize,
    b_block: usize,
}

impl<T: Element> BackwardOp<T> for ConcatBackward {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(
        &self,
        grad_out: &[T],
        _output: &[T],
        _inputs: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>> {
        let mut ga = Vec::with_capacity(self.n * self.a_block);
        let mut gb = Vec::with_capacity(self.n * self.b_block);
        for chunk in grad_out.chunks(self.a_block + self.b_block) {
            ga.extend_from_slice(&chunk[..self.a_block]);
            gb.extend_from_slice(&chunk[self.a_block..]);
        }
        vec![Some(ga), Some(gb)]
    }
}

fn unary<T: Element>(
    x: &Tensor<T>,
    f: impl Fn(T) -> T,
    op: impl BackwardOp<T> + 'static,
) -> Tensor<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_op(x.shape(), data, vec![x.clone()], op).expect("shape preserved")
}

impl<T: Element> Tensor<T> {
    pub fn relu(&self) -> Tensor<T> {
        unary(self, |v| v.max(T::zero()), ReluBackward)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        unary(
            self,
            |v| {
                if v >= T::zero() {
                    T::one() / (T::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (T::one() + e)
                }
            },
            SigmoidBackward,
        )
    }

    /// Softmax over all elements regardless of shape.
    pub fn softmax_flat(&self) -> Tensor<T> {
        let x = self.data();
        let max = x.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
        let z: T = e.iter().copied().sum();
        let data = e.into_iter().map(|v| v / z).collect();
        drop(x);
        Tensor::from_op(self.shape(), data, vec![self.clone()], SoftmaxBackward)
            .expect("shape preserved")
    }

    /// Inverted dropout: in training mode zeroes each element with
    /// probability `p` and scales survivors by `1 / (1 - p)`; identity otherwise.
    pub fn dropout(&self, p: f64, training: bool, rng: &mut impl Rng) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidDropout(p));
        }
        if !training || p == 0.0 {
            return Ok(self.clone());
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let scale: Vec<T> = (0..self.numel())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .data()
            .iter()
            .zip(&scale)
            .map(|(&v, &s)| v * s)
            .collect();
        Tensor::from_op(
            self.shape(),
            data,
            vec![self.clone()],
            MaskBackward {
                name: "dropout",
                scale,
            },
        )
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_op(
            self.shape(),
            data,
            vec![self.clone(), other.clone()],
            AddBackward,
        )
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Tensor::from_op(
            self.shape(),
            data,
            vec![self.clone(), other.clone()],
            MulBackward,
        )
    }

    /// Multiplies every element by the constant `c`.
    pub fn scale(&self, c: f64) -> Tensor<T> {
        let c = T::from_f64_lossy(c);
        unary(self, |v| v * c, ScaleBackward(c))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&self) -> Tensor<T> {
        let s: T = self.data().iter().copied().sum();
        Tensor::from_op(&[1], vec![s], vec![self.clone()], SumBackward(self.numel()))
            .expect("scalar")
    }

    /// Elementwise `|a - b|`.
    pub fn l1_diff(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("l1_diff", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| (a - b).abs())
            .collect();
        Tensor::from_op(
            self.shape(),
            data,
            vec![self.clone(), other.clone()],
            L1DiffBackward,
        )
    }

    /// Normalizes every `H x W` plane of an `N x C x H x W` tensor to zero
    /// mean and unit variance, then applies the per-channel `weight` and `bias`.
    pub fn channel_norm(&self, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = dims4("channel_norm", self)?;
        if weight.shape() != [c] || bias.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "channel_norm",
                detail: format!("{c} channels vs {:?} / {:?}", weight.shape(), bias.shape()),
            });
        }
        let m = h * w;
        let m_t = T::from_usize(m).expect("plane size fits");
        let eps = T::from_f64_lossy(CHANNEL_NORM_EPS);
        let x = self.data();
        let (gamma, beta) = (weight.data(), bias.data());
        let mut normalized = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(n * c);
        let mut out = Vec::with_capacity(x.len());
        for (p, plane) in x.chunks(m).enumerate() {
            let mean = plane.iter().copied().sum::<T>() / m_t;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m_t;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let ch = p % c;
            for &v in plane {
                let xh = (v - mean) * inv;
                normalized.push(xh);
                out.push(gamma[ch] * xh + beta[ch]);
            }
        }
        drop((x, gamma, beta));
        Tensor::from_op(
            &[n, c, h, w],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            ChannelNormBackward {
                planes: n * c,
                channels: c,
                normalized,
                inv_std,
            },
        )
    }

    /// 2x2 max pooling with stride 2 over an `N x C x H x W` tensor.
    pub fn max_pool2(&self) -> Result<Tensor<T>> {
        let [n, c, h, w] = dims4("max_pool2", self)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "max_pool2",
                detail: format!("spatial dims {h}x{w} must be even"),
            });
        }
        let (oh, ow) = (h / 2, w / 2);
        let x = self.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xo;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let j = base + (2 * y + dy) * w + 2 * xo + dx;
                        if x[j] > x[best] {
                            best = j;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        drop(x);
        Tensor::from_op(
            &[n, c, oh, ow],
            out,
            vec![self.clone()],
            MaxPoolBackward {
                input_len: self.numel(),
                argmax,
            },
        )
    }

    /// Nearest-neighbor 2x upsampling of an `N x C x H x W` tensor.
    pub fn nearest_upsample2(&self) -> Result<Tensor<T>> {
        let dims @ [n, c, h, w] = dims4("nearest_upsample2", self)?;
        let (oh, ow) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in x.chunks(h * w) {
            for y in 0..oh {
                for xo in 0..ow {
                    out.push(plane[(y / 2) * w + xo / 2]);
                }
            }
        }
        drop(x);
        Tensor::from_op(
            &[n, c, oh, ow],
            out,
            vec![self.clone()],
            UpsampleBackward(dims),
        )
    }

    /// Concatenates two `N x C x H x W` tensors along the channel axis.
    pub fn concat_channels(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, ca, h, w] = dims4("concat_channels", self)?;
        let [nb, cb, hb, wb] = dims4("concat_channels", other)?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                detail: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        let a_block = ca * h * w;
        let b_block = cb * h * w;
        let a = self.data();
        let b = other.data();
        let mut out = Vec::with_capacity(n * (a_block + b_block));
        for i in 0..n {
            out.extend_from_slice(&a[i * a_block..(i + 1) * a_block]);
            out.extend_from_slice(&b[i * b_block..(i + 1) * b_block]);
        }
        drop((a, b));
        Tensor::from_op(
            &[n, ca + cb, h, w],
            out,
            vec![self.clone(), other.clone()],
            ConcatBackward {
                n,
                a_block,
                b_block,
            },
        )
    }
}

pub(super) fn reshape<T: Element>(t: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if shape.iter().product::<usize>() != t.numel() {
        return Err(TensorError::ShapeMismatch {
            op: "reshape",
            detail: format!("{:?} -> {:?}", t.shape(), shape),
        });
    }
    Tensor::from_op(shape, t.to_vec(), vec![t.clone()], ReshapeBackward)
}

/// The closed set of forward operations, with their attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// Inputs: image, weight, bias.
    Conv2d,
    /// Inputs: image, per-channel weight, per-channel bias.
    ChannelNorm,
    MaxPool2,
    NearestUpsample2,
    ConcatChannels,
    Relu,
    Sigmoid,
    SoftmaxFlat,
    /// The dropout mask is drawn from a generator seeded with `seed`.
    Dropout {
        p: f64,
        training: bool,
        seed: u64,
    },
    Add,
    Mul,
    Sum,
    L1Diff,
}

impl OpKind {
    pub fn arity(&self) -> usize {
        match self {
            OpKind::Conv2d | OpKind::ChannelNorm => 3,
            OpKind::ConcatChannels | OpKind::Add | OpKind::Mul | OpKind::L1Diff => 2,
            _ => 1,
        }
    }
}

/// Applies `kind` to `inputs`.
pub fn forward_op<T: Element>(kind: &OpKind, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let arity = kind.arity();
    if inputs.len() != arity {
        let name = match kind {
            OpKind::Conv2d => "conv2d",
            OpKind::ChannelNorm => "channel_norm",
            OpKind::ConcatChannels => "concat_channels",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::L1Diff => "l1_diff",
            _ => "unary op",
        };
        return Err(TensorError::Arity(name, arity));
    }
    match kind {
        OpKind::Conv2d => inputs[0].conv2d(inputs[1], inputs[2]),
        OpKind::ChannelNorm => inputs[0].channel_norm(inputs[1], inputs[2]),
        OpKind::MaxPool2 => inputs[0].max_pool2(),
        OpKind::NearestUpsample2 => inputs[0].nearest_upsample2(),
        OpKind::ConcatChannels => inputs[0].concat_channels(inputs[1]),
        OpKind::Relu => Ok(inputs[0].relu()),
        OpKind::Sigmoid => Ok(inputs[0].sigmoid()),
        OpKind::SoftmaxFlat => Ok(inputs[0].softmax_flat()),
        OpKind::Dropout { p, training, seed } => {
            inputs[0].dropout(*p, *training, &mut ChaCha8Rng::seed_from_u64(*seed))
        }
        OpKind::Add => inputs[0].add(inputs[1]),
        OpKind::Mul => inputs[0].mul(inputs[1]),
        OpKind::Sum => Ok(inputs[0].sum()),
        OpKind::L1Diff => inputs[0].l1_diff(inputs[1]),
    }
}
