//! Stride-1, same-padding 2-D convolution via im2col and GEMM.

use super::{BackwardOp, Element, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
}

impl ConvDims {
    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }
}

/// Unrolls one `C x H x W` image into a `(C*k*k) x (H*W)` patch matrix.
fn im2col<T: Element>(img: &[T], d: ConvDims, cols: &mut [T]) {
    let (h, w, k) = (d.h as isize, d.w as isize, d.k);
    let pad = (k / 2) as isize;
    let hw = d.hw();
    for c in 0..d.c {
        let plane = &img[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w - dx).min(w) as usize;
                for y in 0..h {
                    let dst = &mut row[y as usize * d.w..(y as usize + 1) * d.w];
                    let sy = y + dy;
                    if sy < 0 || sy >= h || x0 >= x1 {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * d.w..(sy as usize + 1) * d.w];
                    dst[..x0].fill(T::zero());
                    dst[x1..].fill(T::zero());
                    let sx0 = (x0 as isize + dx) as usize;
                    dst[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds a patch matrix back onto an image.
fn col2im<T: Element>(cols: &[T], d: ConvDims, img: &mut [T]) {
    let (h, w, k) = (d.h as isize, d.w as isize, d.k);
    let pad = (k / 2) as isize;
    let hw = d.hw();
    for c in 0..d.c {
        let plane = &mut img[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w - dx).min(w) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let src = &row[y as usize * d.w + x0..y as usize * d.w + x1];
                    let sx0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * d.w + sx0..][..x1 - x0];
                    for (a, &b) in dst.iter_mut().zip(src) {
                        *a = *a + b;
                    }
                }
            }
        }
    }
}

struct Conv2dBackward<T> {
    dims: ConvDims,
    /// Patch matrices, one per batch item.
    cols: Vec<T>,
}

impl<T: Element> BackwardOp<T> for Conv2dBackward<T> {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, grad_out: &[T], _output: &[T], inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let d = self.dims;
        let (hw, ckk) = (d.hw(), d.ckk());
        let weight = inputs[1].data();
        let want_input = inputs[0].tracks_grad();

        let mut g_weight = vec![T::zero(); d.o * ckk];
        let mut g_bias = vec![T::zero(); d.o];
        let mut g_input = want_input.then(|| vec![T::zero(); d.n * d.c * hw]);
        let mut g_cols = vec![T::zero(); if want_input { ckk * hw } else { 0 }];

        for i in 0..d.n {
            let go = &grad_out[i * d.o * hw..(i + 1) * d.o * hw];
            let cols = &self.cols[i * ckk * hw..(i + 1) * ckk * hw];
            // dW += dOut · colsᵀ
            T::gemm(
                d.o,
                hw,
                ckk,
                T::one(),
                go,
                (hw as isize, 1),
                cols,
                (1, hw as isize),
                T::one(),
                &mut g_weight,
                (ckk as isize, 1),
            );
            for (o, b) in g_bias.iter_mut().enumerate() {
                *b = *b + go[o * hw..(o + 1) * hw].iter().copied().sum();
            }
            if let Some(gi) = g_input.as_mut() {
                // dCols = Wᵀ · dOut
                T::gemm(
                    ckk,
                    d.o,
                    hw,
                    T::one(),
                    &weight,
                    (1, ckk as isize),
                    go,
                    (hw as isize, 1),
                    T::zero(),
                    &mut g_cols,
                    (hw as isize, 1),
                );
                col2im(&g_cols, d, &mut gi[i * d.c * hw..(i + 1) * d.c * hw]);
            }
        }
        vec![g_input, Some(g_weight), Some(g_bias)]
    }
}

impl<T: Element> Tensor<T> {
    /// Convolution of an `N x C x H x W` input with an `O x C x k x k` kernel
    /// (odd `k`) plus a per-channel bias `[O]`. Stride 1, zero padding that
    /// preserves the spatial size.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let mismatch = |detail: String| TensorError::ShapeMismatch {
            op: "conv2d",
            detail,
        };
        let (&[n, c, h, w], &[o, wc, kh, kw]) = (self.shape(), weight.shape()) else {
            return Err(mismatch(format!(
                "input {:?} and weight {:?} must both be 4-D",
                self.shape(),
                weight.shape()
            )));
        };
        if wc != c || kh != kw || kh % 2 == 0 {
            return Err(mismatch(format!(
                "input {:?} incompatible with weight {:?}",
                self.shape(),
                weight.shape()
            )));
        }
        if bias.shape() != [o] {
            return Err(mismatch(format!(
                "bias {:?} for {o} output channels",
                bias.shape()
            )));
        }
        let d = ConvDims {
            n,
            c,
            h,
            w,
            o,
            k: kh,
        };
        let (hw, ckk) = (d.hw(), d.ckk());

        let x = self.data();
        let wt = weight.data();
        let b = bias.data();
        let mut cols = vec![T::zero(); n * ckk * hw];
        let mut out = vec![T::zero(); n * o * hw];
        for i in 0..n {
            let col = &mut cols[i * ckk * hw..(i + 1) * ckk * hw];
            im2col(&x[i * c * hw..(i + 1) * c * hw], d, col);
            let dst = &mut out[i * o * hw..(i + 1) * o * hw];
            for (plane, &bv) in dst.chunks_mut(hw).zip(b.iter()) {
                plane.fill(bv);
            }
            T::gemm(
                o,
                ckk,
                hw,
                T::one(),
                &wt,
                (ckk as isize, 1),
                col,
                (hw as isize, 1),
                T::one(),
                dst,
                (hw as isize, 1),
            );
        }
        drop((x, wt, b));
        Tensor::from_op(
            &[n, o, h, w],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Conv2dBackward { dims: d, cols },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution used as a reference.
    #[allow(clippy::too_many_arguments)]
    fn naive_conv(
        x: &[f64],
        wt: &[f64],
        b: &[f64],
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        o: usize,
        k: usize,
    ) -> Vec<f64> {
        let p = (k / 2) as isize;
        let mut out = vec![0.0; n * o * h * w];
        for i in 0..n {
            for oc in 0..o {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = b[oc];
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    acc += wt[((oc * c + ic) * k + ky) * k + kx]
                                        * x[((i * c + ic) * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                        out[((i * o + oc) * h + y) * w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x =
            Tensor::<f32>::from_vec(&[1, 1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let mut k = vec![0.0f32; 9];
        k[4] = 1.0;
        let wt = Tensor::from_vec(&[1, 1, 3, 3], k).unwrap();
        let b = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(x.conv2d(&wt, &b).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn matches_naive_convolution() {
        let (n, c, h, w, o) = (2, 3, 5, 6, 4);
        for k in [1, 3, 5] {
            let xs: Vec<f64> = (0..n * c * h * w)
                .map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
                .collect();
            let ws: Vec<f64> = (0..o * c * k * k)
                .map(|i| ((i * 17 % 7) as f64 - 3.0) / 5.0)
                .collect();
            let bs: Vec<f64> = (0..o).map(|i| i as f64 * 0.25).collect();
            let expected = naive_conv(&xs, &ws, &bs, n, c, h, w, o, k);
            let x = Tensor::from_vec(&[n, c, h, w], xs).unwrap();
            let wt = Tensor::from_vec(&[o, c, k, k], ws).unwrap();
            let b = Tensor::from_vec(&[o], bs).unwrap();
            let got = x.conv2d(&wt, &b).unwrap().to_vec();
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12, "k={k}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]).unwrap();
        let wt = Tensor::<f32>::zeros(&[3, 1, 3, 3]).unwrap();
        let b = Tensor::<f32>::zeros(&[3]).unwrap();
        assert!(x.conv2d(&wt, &b).is_err());
        let even = Tensor::<f32>::zeros(&[3, 2, 2, 2]).unwrap();
        assert!(x.conv2d(&even, &b).is_err());
        let wt = Tensor::<f32>::zeros(&[3, 2, 3, 3]).unwrap();
        assert!(x.conv2d(&wt, &Tensor::zeros(&[2]).unwrap()).is_err());
    }
}
