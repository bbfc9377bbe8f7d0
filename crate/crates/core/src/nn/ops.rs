//! Convolution, transposed convolution and instance normalization, each with
//! its backward pass. Tensors are single samples in channel-major layout.

use super::Scalar;

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![T::ZERO; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Self { c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!((self.c, self.h, self.w), (other.c, other.h, other.w));
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
    }
}

/// Geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_size(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.k) / self.stride + 1
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds `x` into a `(c·k·k) × (ho·wo)` matrix; row index is `(c, ky, kx)`.
pub fn im2col<T: Scalar>(x: &Tensor<T>, g: ConvGeom) -> (Vec<T>, usize, usize) {
    let (ho, wo) = (g.out_size(x.h), g.out_size(x.w));
    let n = ho * wo;
    let mut cols = vec![T::ZERO; x.c * g.k * g.k * n];
    let mut row = 0;
    for c in 0..x.c {
        let src = &x.data[c * x.plane()..(c + 1) * x.plane()];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src_row = &src[iy as usize * x.w..(iy as usize + 1) * x.w];
                    let dst_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if g.stride == 1 {
                        // valid ox satisfy 0 <= ox + kx - pad < w
                        let lo = g.pad.saturating_sub(kx);
                        let hi = (x.w + g.pad - kx).min(wo);
                        if lo < hi {
                            dst_row[lo..hi].copy_from_slice(&src_row[lo + kx - g.pad..hi + kx - g.pad]);
                        }
                    } else {
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    (cols, ho, wo)
}

/// Adjoint of [`im2col`]: scatters columns back into a `c×h×w` tensor, summing overlaps.
pub fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, g: ConvGeom) -> Tensor<T> {
    let (ho, wo) = (g.out_size(h), g.out_size(w));
    let n = ho * wo;
    assert_eq!(cols.len(), c * g.k * g.k * n);
    let mut out = Tensor::zeros(c, h, w);
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut out.data[ch * h * w..(ch + 1) * h * w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &src[oy * wo..(oy + 1) * wo];
                    if g.stride == 1 {
                        let lo = g.pad.saturating_sub(kx);
                        let hi = (w + g.pad - kx).min(wo);
                        for ox in lo..hi {
                            dst_row[ox + kx - g.pad] += src_row[ox];
                        }
                    } else {
                        for (ox, &s) in src_row.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] += s;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// `y = W ∗ x (+ b)` with `W` of shape `out_c × (in_c·k·k)`.
pub fn conv_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: Option<&[T]>, out_c: usize, g: ConvGeom) -> Tensor<T> {
    let kdim = x.c * g.k * g.k;
    assert_eq!(weight.len(), out_c * kdim, "conv weight size");
    let (ho, wo) = (g.out_size(x.h), g.out_size(x.w));
    let n = ho * wo;
    let mut y = Tensor::zeros(out_c, ho, wo);
    if g.is_pointwise() {
        T::gemm(out_c, kdim, n, T::ONE, weight, (kdim, 1), &x.data, (n, 1), T::ZERO, &mut y.data, (n, 1));
    } else {
        let (cols, _, _) = im2col(x, g);
        T::gemm(out_c, kdim, n, T::ONE, weight, (kdim, 1), &cols, (n, 1), T::ZERO, &mut y.data, (n, 1));
    }
    if let Some(b) = bias {
        for (o, &bo) in b.iter().enumerate() {
            y.data[o * n..(o + 1) * n].iter_mut().for_each(|v| *v += bo);
        }
    }
    y
}

/// Accumulates weight (and bias) gradients and returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    weight: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    g: ConvGeom,
    need_dx: bool,
) -> Option<Tensor<T>> {
    let kdim = x.c * g.k * g.k;
    let out_c = dy.c;
    let n = dy.plane();
    let owned;
    let cols: &[T] = if g.is_pointwise() {
        &x.data
    } else {
        owned = im2col(x, g).0;
        &owned
    };
    // dW += dY · colsᵀ
    T::gemm(out_c, n, kdim, T::ONE, &dy.data, (n, 1), cols, (1, n), T::ONE, dweight, (kdim, 1));
    if let Some(db) = dbias {
        for (o, d) in db.iter_mut().enumerate() {
            let mut s = 0.0;
            for &v in &dy.data[o * n..(o + 1) * n] {
                s += v.to_f64();
            }
            *d += T::from_f64(s);
        }
    }
    if !need_dx {
        return None;
    }
    let mut dcols = vec![T::ZERO; kdim * n];
    T::gemm(kdim, out_c, n, T::ONE, weight, (1, kdim), &dy.data, (n, 1), T::ZERO, &mut dcols, (n, 1));
    if g.is_pointwise() {
        Some(Tensor::from_vec(x.c, x.h, x.w, dcols))
    } else {
        Some(col2im(&dcols, x.c, x.h, x.w, g))
    }
}

/// Transposed 3×3 stride-2 convolution doubling the spatial size: the exact
/// adjoint of the stride-2 convolution with padding 1. `weight` has shape
/// `in_c × (out_c·9)`.
pub const UP_GEOM: ConvGeom = ConvGeom { k: 3, stride: 2, pad: 1 };

pub fn deconv_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], out_c: usize) -> Tensor<T> {
    let rows = out_c * 9;
    assert_eq!(weight.len(), x.c * rows, "deconv weight size");
    let n = x.plane();
    let mut cols = vec![T::ZERO; rows * n];
    T::gemm(rows, x.c, n, T::ONE, weight, (1, rows), &x.data, (n, 1), T::ZERO, &mut cols, (n, 1));
    col2im(&cols, out_c, 2 * x.h, 2 * x.w, UP_GEOM)
}

pub fn deconv_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, weight: &[T], dweight: &mut [T]) -> Tensor<T> {
    let rows = dy.c * 9;
    let n = x.plane();
    let (dcols, _, _) = im2col(dy, UP_GEOM);
    // dW += x · dcolsᵀ
    T::gemm(x.c, n, rows, T::ONE, &x.data, (n, 1), &dcols, (1, n), T::ONE, dweight, (rows, 1));
    let mut dx = Tensor::zeros(x.c, x.h, x.w);
    T::gemm(x.c, rows, n, T::ONE, weight, (rows, 1), &dcols, (n, 1), T::ZERO, &mut dx.data, (n, 1));
    dx
}

/// Normalizes each channel to zero mean and unit variance in place and
/// returns the per-channel inverse standard deviations.
pub fn instance_norm_forward<T: Scalar>(x: &mut Tensor<T>) -> Vec<T> {
    let n = x.plane();
    let mut inv_std = Vec::with_capacity(x.c);
    for ch in x.data.chunks_mut(n) {
        let mean = ch.iter().map(|v| v.to_f64()).sum::<f64>() / n as f64;
        let var = ch.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        let (m, s) = (T::from_f64(mean), T::from_f64(is));
        ch.iter_mut().for_each(|v| *v = (*v - m) * s);
        inv_std.push(s);
    }
    inv_std
}

/// `dx = (dy − mean(dy) − x̂·mean(dy·x̂)) / σ`, in place on `dy`.
pub fn instance_norm_backward<T: Scalar>(xhat: &Tensor<T>, inv_std: &[T], dy: &mut Tensor<T>) {
    let n = xhat.plane();
    for ((d, xh), &s) in dy.data.chunks_mut(n).zip(xhat.data.chunks(n)).zip(inv_std) {
        let (mut sd, mut sdx) = (0.0, 0.0);
        for (&a, &b) in d.iter().zip(xh) {
            sd += a.to_f64();
            sdx += a.to_f64() * b.to_f64();
        }
        let (md, mdx) = (T::from_f64(sd / n as f64), T::from_f64(sdx / n as f64));
        for (a, &b) in d.iter_mut().zip(xh) {
            *a = (*a - md - b * mdx) * s;
        }
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data.iter().map(|&v| if v > T::ZERO { v } else { T::ZERO }).collect();
    Tensor::from_vec(x.c, x.h, x.w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Direct nested-loop convolution.
    fn conv_naive(x: &Tensor<f64>, w: &[f64], out_c: usize, g: ConvGeom) -> Tensor<f64> {
        let (ho, wo) = (g.out_size(x.h), g.out_size(x.w));
        let mut y = Tensor::zeros(out_c, ho, wo);
        for o in 0..out_c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for c in 0..x.c {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                    let wi = ((o * x.c + c) * g.k + ky) * g.k + kx;
                                    s += w[wi] * x.data[(c * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                    }
                    y.data[(o * ho + oy) * wo + ox] = s;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_naive() {
        for g in [ConvGeom { k: 3, stride: 1, pad: 1 }, ConvGeom { k: 3, stride: 2, pad: 1 }, ConvGeom { k: 1, stride: 1, pad: 0 }] {
            let x = random(3, 8, 6, 1);
            let w = random(4, 3, g.k * g.k, 2).data;
            let got = conv_forward(&x, &w, None, 4, g);
            let want = conv_naive(&x, &w, 4, g);
            assert!(got.data.iter().zip(&want.data).all(|(a, b)| (a - b).abs() < 1e-12), "{g:?}");
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        for g in [ConvGeom { k: 3, stride: 1, pad: 1 }, UP_GEOM] {
            let x = random(2, 8, 10, 3);
            let (cols, _, _) = im2col(&x, g);
            let r = random(1, 1, cols.len(), 4).data;
            let back = col2im(&r, 2, 8, 10, g);
            assert!((dot(&cols, &r) - dot(&x.data, &back.data)).abs() < 1e-10);
        }
    }

    #[test]
    fn deconv_is_adjoint_of_strided_conv() {
        // <conv(y), x> = <y, deconv(x)> with shared weights
        let (cin, cout) = (3, 2);
        let x = random(cin, 4, 5, 5);
        let y = random(cout, 8, 10, 6);
        let w = random(cin, cout, 9, 7).data;
        let conv_y = conv_forward(&y, &w, None, cin, UP_GEOM);
        let up_x = deconv_forward(&x, &w, cout);
        assert_eq!((up_x.c, up_x.h, up_x.w), (cout, 8, 10));
        assert!((dot(&conv_y.data, &x.data) - dot(&y.data, &up_x.data)).abs() < 1e-10);
    }

    #[test]
    fn instance_norm_statistics() {
        let mut x = random(3, 7, 9, 8);
        x.data.iter_mut().for_each(|v| *v = *v * 5.0 + 2.0);
        instance_norm_forward(&mut x);
        for ch in x.data.chunks(63) {
            let m: f64 = ch.iter().sum::<f64>() / 63.0;
            let v: f64 = ch.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 63.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-4);
        }
    }
}
