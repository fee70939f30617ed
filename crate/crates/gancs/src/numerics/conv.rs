//! 2D cross-correlation ("convolution" in the deep-learning sense, no kernel
//! flip) over NCHW activations and OIHW kernels, with exact gradients.

use rayon::prelude::*;

use super::{LayerGradients, Real, Tensor};
use crate::error::{Error, Result};

/// Zero-padding policy. `Same` keeps `out = ceil(in / stride)` per spatial
/// dim; `Valid` uses no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

fn div_floor(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && (a < 0) != (b < 0) {
        q - 1
    } else {
        q
    }
}

fn div_ceil_i(a: i64, b: i64) -> i64 {
    -div_floor(-a, b)
}

impl ConvGeom {
    /// Output index range (half-open) along one axis such that the fetched
    /// input index `o * stride + k_off` stays within `[0, in_len)`.
    fn valid_range(&self, out_len: usize, in_len: usize, k_off: i64) -> (usize, usize) {
        let s = self.stride as i64;
        let lo = div_ceil_i(-k_off, s).max(0);
        let hi = div_floor(in_len as i64 - 1 - k_off, s).min(out_len as i64 - 1);
        if lo > hi {
            (0, 0)
        } else {
            (lo as usize, hi as usize + 1)
        }
    }
}

fn geometry<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    let [batch, c_in, in_h, in_w] = input.dims4()?;
    let [c_out, k_cin, kh, kw] = kernel.dims4()?;
    if k_cin != c_in {
        return Err(Error::invalid(format!(
            "conv2d channel mismatch: input has {c_in} channels, kernel expects {k_cin}"
        )));
    }
    if stride < 1 {
        return Err(Error::invalid("conv2d stride must be >= 1"));
    }
    let (out_h, out_w, pad_top, pad_left) = match padding {
        Padding::Same => {
            let out_h = in_h.div_ceil(stride);
            let out_w = in_w.div_ceil(stride);
            let pad_h = ((out_h - 1) * stride + kh).saturating_sub(in_h);
            let pad_w = ((out_w - 1) * stride + kw).saturating_sub(in_w);
            (out_h, out_w, pad_h / 2, pad_w / 2)
        }
        Padding::Valid => {
            if kh > in_h || kw > in_w {
                return Err(Error::invalid(format!(
                    "conv2d valid padding: kernel {kh}x{kw} larger than input {in_h}x{in_w}"
                )));
            }
            ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1, 0, 0)
        }
    };
    Ok(ConvGeom {
        batch,
        c_in,
        c_out,
        in_h,
        in_w,
        kh,
        kw,
        stride,
        pad_top,
        pad_left,
        out_h,
        out_w,
    })
}

/// Output spatial dims `(out_h, out_w)` for the given input/kernel geometry.
pub fn conv_output_geometry(
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> (usize, usize) {
    match padding {
        Padding::Same => (in_h.div_ceil(stride), in_w.div_ceil(stride)),
        Padding::Valid => ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1),
    }
}

/// Cross-correlate `input` `[N, C_in, H, W]` with `kernel`
/// `[C_out, C_in, kh, kw]`, adding `bias` `[C_out]` per output channel.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = geometry(input, kernel, stride, padding)?;
    if bias.shape() != [g.c_out] {
        return Err(Error::invalid(format!(
            "conv2d bias shape {:?}, expected [{}]",
            bias.shape(),
            g.c_out
        )));
    }
    let mut out = Tensor::zeros(&[g.batch, g.c_out, g.out_h, g.out_w]);
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let in_data = input.data();
    let k_data = kernel.data();
    let b_data = bias.data();

    out.data_mut()
        .par_chunks_mut(out_plane)
        .enumerate()
        .for_each(|(plane_idx, oplane)| {
            let n = plane_idx / g.c_out;
            let co = plane_idx % g.c_out;
            oplane.fill(b_data[co]);
            for ci in 0..g.c_in {
                let iplane = &in_data[(n * g.c_in + ci) * in_plane..][..in_plane];
                for ky in 0..g.kh {
                    let y_off = ky as i64 - g.pad_top as i64;
                    let (oy_lo, oy_hi) = g.valid_range(g.out_h, g.in_h, y_off);
                    for kx in 0..g.kw {
                        let w = k_data[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                        let x_off = kx as i64 - g.pad_left as i64;
                        let (ox_lo, ox_hi) = g.valid_range(g.out_w, g.in_w, x_off);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * g.stride) as i64 + y_off;
                            let irow = &iplane[iy as usize * g.in_w..][..g.in_w];
                            let orow = &mut oplane[oy * g.out_w..][..g.out_w];
                            if g.stride == 1 {
                                let ix0 = (ox_lo as i64 + x_off) as usize;
                                let len = ox_hi - ox_lo;
                                for (o, &i) in
                                    orow[ox_lo..ox_hi].iter_mut().zip(&irow[ix0..ix0 + len])
                                {
                                    *o += w * i;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = (ox * g.stride) as i64 + x_off;
                                    orow[ox] += w * irow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`] with respect to input, kernel and
/// bias, given the upstream `output_grad`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
    output_grad: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    let g = geometry(input, kernel, stride, padding)?;
    if output_grad.shape() != [g.batch, g.c_out, g.out_h, g.out_w] {
        return Err(Error::invalid(format!(
            "conv2d output_grad shape {:?}, expected {:?}",
            output_grad.shape(),
            [g.batch, g.c_out, g.out_h, g.out_w]
        )));
    }
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let in_data = input.data();
    let k_data = kernel.data();
    let og_data = output_grad.data();

    // Bias gradient: sum of output_grad over batch and space per channel.
    let mut bias_grad = Tensor::zeros(&[g.c_out]);
    {
        let bg = bias_grad.data_mut();
        for n in 0..g.batch {
            for co in 0..g.c_out {
                let plane = &og_data[(n * g.c_out + co) * out_plane..][..out_plane];
                let mut acc = T::zero();
                for &v in plane {
                    acc += v;
                }
                bg[co] += acc;
            }
        }
    }

    // Kernel gradient: correlate input with output_grad; parallel over c_out.
    let mut kernel_grad = Tensor::zeros(&[g.c_out, g.c_in, g.kh, g.kw]);
    kernel_grad
        .data_mut()
        .par_chunks_mut(g.c_in * g.kh * g.kw)
        .enumerate()
        .for_each(|(co, kslice)| {
            for n in 0..g.batch {
                let oplane = &og_data[(n * g.c_out + co) * out_plane..][..out_plane];
                for ci in 0..g.c_in {
                    let iplane = &in_data[(n * g.c_in + ci) * in_plane..][..in_plane];
                    for ky in 0..g.kh {
                        let y_off = ky as i64 - g.pad_top as i64;
                        let (oy_lo, oy_hi) = g.valid_range(g.out_h, g.in_h, y_off);
                        for kx in 0..g.kw {
                            let x_off = kx as i64 - g.pad_left as i64;
                            let (ox_lo, ox_hi) = g.valid_range(g.out_w, g.in_w, x_off);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            let mut acc = T::zero();
                            for oy in oy_lo..oy_hi {
                                let iy = (oy * g.stride) as i64 + y_off;
                                let irow = &iplane[iy as usize * g.in_w..][..g.in_w];
                                let orow = &oplane[oy * g.out_w..][..g.out_w];
                                if g.stride == 1 {
                                    let ix0 = (ox_lo as i64 + x_off) as usize;
                                    let len = ox_hi - ox_lo;
                                    for (&o, &i) in
                                        orow[ox_lo..ox_hi].iter().zip(&irow[ix0..ix0 + len])
                                    {
                                        acc += o * i;
                                    }
                                } else {
                                    for ox in ox_lo..ox_hi {
                                        let ix = (ox * g.stride) as i64 + x_off;
                                        acc += orow[ox] * irow[ix as usize];
                                    }
                                }
                            }
                            kslice[(ci * g.kh + ky) * g.kw + kx] += acc;
                        }
                    }
                }
            }
        });

    // Input gradient: scatter output_grad back through the kernel; parallel
    // over (n, ci) planes so writes stay disjoint and deterministic.
    let mut input_grad = Tensor::zeros(&[g.batch, g.c_in, g.in_h, g.in_w]);
    input_grad
        .data_mut()
        .par_chunks_mut(in_plane)
        .enumerate()
        .for_each(|(plane_idx, igplane)| {
            let n = plane_idx / g.c_in;
            let ci = plane_idx % g.c_in;
            for co in 0..g.c_out {
                let oplane = &og_data[(n * g.c_out + co) * out_plane..][..out_plane];
                for ky in 0..g.kh {
                    let y_off = ky as i64 - g.pad_top as i64;
                    let (oy_lo, oy_hi) = g.valid_range(g.out_h, g.in_h, y_off);
                    for kx in 0..g.kw {
                        let w = k_data[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                        let x_off = kx as i64 - g.pad_left as i64;
                        let (ox_lo, ox_hi) = g.valid_range(g.out_w, g.in_w, x_off);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in oy_lo..oy_hi {
                            let iy = (oy * g.stride) as i64 + y_off;
                            let igrow = &mut igplane[iy as usize * g.in_w..][..g.in_w];
                            let orow = &oplane[oy * g.out_w..][..g.out_w];
                            if g.stride == 1 {
                                let ix0 = (ox_lo as i64 + x_off) as usize;
                                let len = ox_hi - ox_lo;
                                for (i, &o) in
                                    igrow[ix0..ix0 + len].iter_mut().zip(&orow[ox_lo..ox_hi])
                                {
                                    *i += w * o;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = (ox * g.stride) as i64 + x_off;
                                    igrow[ix as usize] += w * orow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });

    Ok(LayerGradients {
        input_grad,
        param_grads: vec![("kernel", kernel_grad), ("bias", bias_grad)],
    })
}
