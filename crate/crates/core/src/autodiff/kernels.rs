//! Forward kernels and their vector-Jacobian products.
//!
//! All image tensors are `[C, H, W]`. Convolution kernels are
//! `[C_out, C_in, k, k]` with odd `k`, applied as a cross-correlation over a
//! reflect-padded input (`pad = k / 2`, no edge repetition).

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Maps a possibly out-of-range index onto `0..n` by mirror reflection
/// without repeating the edge sample (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

pub fn conv_output_len(input: usize, k: usize, stride: usize) -> usize {
    (input + 2 * (k / 2) - k) / stride + 1
}

/// `taps[o * k + t]` is the input index read by output `o` at kernel tap `t`.
fn tap_table(out_len: usize, in_len: usize, k: usize, stride: usize) -> Vec<usize> {
    let pad = (k / 2) as isize;
    let mut taps = Vec::with_capacity(out_len * k);
    for o in 0..out_len {
        for t in 0..k {
            taps.push(reflect_index((o * stride) as isize + t as isize - pad, in_len));
        }
    }
    taps
}

struct ConvGeometry {
    c_in: usize,
    c_out: usize,
    k: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn conv_geometry(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, stride: usize) -> Result<ConvGeometry> {
    let [c_in, h, w] = input.dims3("conv2d")?;
    let (c_out, kc, kh, kw) = match *kernel.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => return Err(Error::shape("conv2d", "kernel rank", 4, kernel.shape().len())),
    };
    if kc != c_in {
        return Err(Error::shape("conv2d", "kernel input channels", c_in, kc));
    }
    if kh != kw {
        return Err(Error::shape("conv2d", "kernel width", kh, kw));
    }
    if kh % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv2d kernel size must be odd, got {kh}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::shape("conv2d", "bias length", c_out, b.len()));
        }
    }
    let k = kh;
    let ho = conv_output_len(h, k, stride);
    let wo = conv_output_len(w, k, stride);
    Ok(ConvGeometry {
        c_in,
        c_out,
        k,
        h,
        w,
        ho,
        wo,
        rows: tap_table(ho, h, k, stride),
        cols: tap_table(wo, w, k, stride),
    })
}

/// Gathers input plane `src` at tap `(ky, kx)` onto the output grid.
fn gather_tap(g: &ConvGeometry, src: &[f64], ky: usize, kx: usize, buf: &mut [f64]) {
    let k = g.k;
    for y in 0..g.ho {
        let row = &src[g.rows[y * k + ky] * g.w..][..g.w];
        for (x, b) in buf[y * g.wo..(y + 1) * g.wo].iter_mut().enumerate() {
            *b = row[g.cols[x * k + kx]];
        }
    }
}

/// Adjoint of [`gather_tap`]: adds `buf` back onto the input plane.
fn scatter_tap(g: &ConvGeometry, buf: &[f64], ky: usize, kx: usize, dst: &mut [f64]) {
    let k = g.k;
    for y in 0..g.ho {
        let r = g.rows[y * k + ky] * g.w;
        for (x, &b) in buf[y * g.wo..(y + 1) * g.wo].iter().enumerate() {
            dst[r + g.cols[x * k + kx]] += b;
        }
    }
}

/// Reflect-padded cross-correlation: `out[o,y,x] = b[o] + sum K[o,c,i,j] in[c, sy+i-p, sx+j-p]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let g = conv_geometry(input, kernel, Some(bias), stride)?;
    let (k, plane_in, plane_out) = (g.k, g.h * g.w, g.ho * g.wo);
    let inp = input.data();
    let ker = kernel.data();
    let mut out = vec![0.0; g.c_out * plane_out];
    for (co, dst) in out.chunks_exact_mut(plane_out).enumerate() {
        dst.fill(bias.data()[co]);
    }
    let mut buf = vec![0.0; plane_out];
    for ci in 0..g.c_in {
        let src = &inp[ci * plane_in..(ci + 1) * plane_in];
        for ky in 0..k {
            for kx in 0..k {
                gather_tap(&g, src, ky, kx, &mut buf);
                for (co, dst) in out.chunks_exact_mut(plane_out).enumerate() {
                    let wgt = ker[((co * g.c_in + ci) * k + ky) * k + kx];
                    for (d, b) in dst.iter_mut().zip(&buf) {
                        *d += wgt * b;
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.c_out, g.ho, g.wo], out)
}

/// Returns `(d input, d kernel, d bias)` for the cotangent of [`conv2d`].
pub fn conv2d_vjp(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    cotangent: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = conv_geometry(input, kernel, None, stride)?;
    let expected = [g.c_out, g.ho, g.wo];
    if cotangent.shape() != expected {
        return Err(Error::shape(
            "conv2d_vjp",
            "cotangent length",
            expected.iter().product(),
            cotangent.len(),
        ));
    }
    let (k, plane_in, plane_out) = (g.k, g.h * g.w, g.ho * g.wo);
    let inp = input.data();
    let ker = kernel.data();
    let cot = cotangent.data();
    let mut d_in = vec![0.0; input.len()];
    let mut d_ker = vec![0.0; kernel.len()];
    let d_bias: Vec<f64> = cot.chunks_exact(plane_out).map(|c| c.iter().sum()).collect();
    let mut buf = vec![0.0; plane_out];
    let mut dbuf = vec![0.0; plane_out];
    for ci in 0..g.c_in {
        let src = &inp[ci * plane_in..(ci + 1) * plane_in];
        for ky in 0..k {
            for kx in 0..k {
                gather_tap(&g, src, ky, kx, &mut buf);
                dbuf.fill(0.0);
                for (co, c) in cot.chunks_exact(plane_out).enumerate() {
                    let widx = ((co * g.c_in + ci) * k + ky) * k + kx;
                    let wgt = ker[widx];
                    let mut acc = 0.0;
                    for ((d, &cv), &b) in dbuf.iter_mut().zip(c).zip(&buf) {
                        acc += cv * b;
                        *d += wgt * cv;
                    }
                    d_ker[widx] = acc;
                }
                scatter_tap(&g, &dbuf, ky, kx, &mut d_in[ci * plane_in..(ci + 1) * plane_in]);
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), d_in)?,
        Tensor::new(kernel.shape().to_vec(), d_ker)?,
        Tensor::new(vec![g.c_out], d_bias)?,
    ))
}

pub fn leaky_relu(input: &Tensor, alpha: f64) -> Tensor {
    let data = input
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { alpha * x })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn leaky_relu_vjp(input: &Tensor, alpha: f64, cotangent: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(cotangent.data())
        .map(|(&x, &c)| if x >= 0.0 { c } else { alpha * c })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Source taps of 2x bilinear upsampling along one axis (align-corners = false).
///
/// Output sample `o` sits at input coordinate `s = (o + 0.5) / 2 - 0.5`,
/// clamped below at 0; it blends `floor(s)` and `floor(s) + 1` (clamped to the
/// last sample) with weights `1 - frac(s)` and `frac(s)`.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let s = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            let t = s - i0 as f64;
            (i0, i1, 1.0 - t, t)
        })
        .collect()
}

pub fn upsample_bilinear_2x(input: &Tensor) -> Result<Tensor> {
    let [c, h, w] = input.dims3("upsample_bilinear_2x")?;
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let (h2, w2) = (2 * h, 2 * w);
    let src = input.data();
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * h2 * w2..(ch + 1) * h2 * w2];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                dst[oy * w2 + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
            }
        }
    }
    Tensor::new(vec![c, h2, w2], out)
}

pub fn upsample_bilinear_2x_vjp(input_shape: &[usize], cotangent: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match *input_shape {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape("upsample_vjp", "rank", 3, input_shape.len())),
    };
    let (h2, w2) = (2 * h, 2 * w);
    if cotangent.shape() != [c, h2, w2] {
        return Err(Error::shape(
            "upsample_vjp",
            "cotangent length",
            c * h2 * w2,
            cotangent.len(),
        ));
    }
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let cot = cotangent.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let g = &cot[ch * h2 * w2..(ch + 1) * h2 * w2];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let v = g[oy * w2 + ox];
                dst[y0 * w + x0] += wy0 * wx0 * v;
                dst[y0 * w + x1] += wy0 * wx1 * v;
                dst[y1 * w + x0] += wy1 * wx0 * v;
                dst[y1 * w + x1] += wy1 * wx1 * v;
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// Stacks `[C_i, H, W]` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let [_, h, w] = first.dims3("concat_channels")?;
    let mut channels = 0;
    let mut data = Vec::new();
    for p in parts {
        let [c, ph, pw] = p.dims3("concat_channels")?;
        if ph != h {
            return Err(Error::shape("concat_channels", "height", h, ph));
        }
        if pw != w {
            return Err(Error::shape("concat_channels", "width", w, pw));
        }
        channels += c;
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Keeps the top-left `h x w` window of every channel.
pub fn crop(input: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let [c, ih, iw] = input.dims3("crop")?;
    if h > ih || w > iw || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "crop window {h}x{w} does not fit input {ih}x{iw}"
        )));
    }
    let src = input.data();
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            let start = (ch * ih + y) * iw;
            out.extend_from_slice(&src[start..start + w]);
        }
    }
    Tensor::new(vec![c, h, w], out)
}

pub fn crop_vjp(input_shape: &[usize], cotangent: &Tensor) -> Result<Tensor> {
    let (c, ih, iw) = match *input_shape {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape("crop_vjp", "rank", 3, input_shape.len())),
    };
    let [cc, h, w] = cotangent.dims3("crop_vjp")?;
    if cc != c {
        return Err(Error::shape("crop_vjp", "channels", c, cc));
    }
    let mut out = Tensor::zeros(vec![c, ih, iw]);
    let dst = out.data_mut();
    let src = cotangent.data();
    for ch in 0..c {
        for y in 0..h {
            let d = (ch * ih + y) * iw;
            dst[d..d + w].copy_from_slice(&src[(ch * h + y) * w..(ch * h + y + 1) * w]);
        }
    }
    Ok(out)
}
