//! Layout and channel manipulations on `(n, c, h, w)` feature maps.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-pixel channel max (output channel 0) and channel mean (channel 1).
pub fn channel_stats<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(channel_stats_forward(x)?.0)
}

/// Also returns the argmax channel per pixel; ties keep the lowest channel.
pub(crate) fn channel_stats_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.dims4()?;
    if c == 0 {
        return Err(Error::shape("channel_stats needs at least one channel"));
    }
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, 2, h, w]);
    let mut argmax = vec![0usize; n * plane];
    let inv_c = T::one() / T::lit(c as f64);
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for p in 0..plane {
            let mut best = src[b * c * plane + p];
            let mut best_c = 0;
            let mut total = best;
            for ch in 1..c {
                let v = src[(b * c + ch) * plane + p];
                if v > best {
                    best = v;
                    best_c = ch;
                }
                total += v;
            }
            dst[b * 2 * plane + p] = best;
            dst[(b * 2 + 1) * plane + p] = total * inv_c;
            argmax[b * plane + p] = best_c;
        }
    }
    Ok((out, argmax))
}

pub(crate) fn channel_stats_backward<T: Scalar>(
    shape: [usize; 4],
    argmax: &[usize],
    grad_out: &[T],
) -> Tensor<T> {
    let [n, c, h, w] = shape;
    let plane = h * w;
    let inv_c = T::one() / T::lit(c as f64);
    let mut dx = Tensor::zeros(&shape);
    let d = dx.data_mut();
    for b in 0..n {
        for p in 0..plane {
            let g_max = grad_out[b * 2 * plane + p];
            let g_mean = grad_out[(b * 2 + 1) * plane + p] * inv_c;
            for ch in 0..c {
                d[(b * c + ch) * plane + p] = g_mean;
            }
            d[(b * c + argmax[b * plane + p]) * plane + p] += g_max;
        }
    }
    dx
}

fn check_window(h: usize, w: usize, m: usize) -> Result<()> {
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(Error::config(format!(
            "window size {m} does not divide feature map {h}x{w}"
        )));
    }
    Ok(())
}

/// Maps `(batch, channel, y, x)` to `(window, token, channel)`; windows are
/// batch-major then row-major over the window grid, tokens row-major inside.
#[inline]
fn window_index(dims: [usize; 4], m: usize, b: usize, ch: usize, y: usize, x: usize) -> usize {
    let [_, c, h, w] = dims;
    let (gh, gw) = (h / m, w / m);
    let window = (b * gh + y / m) * gw + x / m;
    let token = (y % m) * m + x % m;
    (window * m * m + token) * c + ch
}

/// `[n, c, h, w]` → `[n·(h/m)·(w/m), m·m, c]`.
pub fn window_partition<T: Scalar>(x: &Tensor<T>, m: usize) -> Result<Tensor<T>> {
    let dims = x.dims4()?;
    let [n, c, h, w] = dims;
    check_window(h, w, m)?;
    let mut out = Tensor::zeros(&[n * (h / m) * (w / m), m * m, c]);
    let dst = out.data_mut();
    let mut i = 0;
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    dst[window_index(dims, m, b, ch, y, xx)] = x.data()[i];
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`window_partition`].
pub fn window_reverse<T: Scalar>(
    windows: &Tensor<T>,
    m: usize,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    check_window(h, w, m)?;
    let expected = [n * (h / m) * (w / m), m * m, c];
    if windows.shape() != expected {
        return Err(Error::shape(format!(
            "window_reverse got {:?}, expected {:?}",
            windows.shape(),
            expected
        )));
    }
    let dims = [n, c, h, w];
    let mut out = Tensor::zeros(&dims);
    let dst = out.data_mut();
    let mut i = 0;
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    dst[i] = windows.data()[window_index(dims, m, b, ch, y, xx)];
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Cyclic spatial shift: `out[.., (y + dy) mod h, (x + dx) mod w] = in[.., y, x]`.
pub fn roll<T: Scalar>(x: &Tensor<T>, dy: isize, dx: isize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let mut out = Tensor::zeros(&[n, c, h, w]);
    if h == 0 || w == 0 {
        return Ok(out);
    }
    let sy = dy.rem_euclid(h as isize) as usize;
    let sx = dx.rem_euclid(w as isize) as usize;
    for (src, dst) in x.data().chunks(h * w).zip(out.data_mut().chunks_mut(h * w)) {
        for y in 0..h {
            let ty = (y + sy) % h;
            for xx in 0..w {
                dst[ty * w + (xx + sx) % w] = src[y * w + xx];
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour 2× spatial upsampling.
pub fn upsample_nearest2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
    for (src, dst) in x
        .data()
        .chunks(h * w)
        .zip(out.data_mut().chunks_mut(4 * h * w))
    {
        for y in 0..2 * h {
            for xx in 0..2 * w {
                dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    Ok(out)
}

pub(crate) fn upsample_nearest2x_backward<T: Scalar>(shape: [usize; 4], grad_out: &[T]) -> Tensor<T> {
    let [_, _, h, w] = shape;
    let mut dx = Tensor::zeros(&shape);
    for (g, d) in grad_out.chunks(4 * h * w).zip(dx.data_mut().chunks_mut(h * w)) {
        for y in 0..2 * h {
            for xx in 0..2 * w {
                d[(y / 2) * w + xx / 2] += g[y * 2 * w + xx];
            }
        }
    }
    dx
}

/// Concatenation along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat of zero tensors"))?
        .dims4()?;
    let [n, _, h, w] = first;
    let mut c_total = 0;
    for p in parts {
        let [pn, pc, ph, pw] = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::shape(format!(
                "concat operands {:?} and {:?} differ outside the channel axis",
                first,
                p.shape()
            )));
        }
        c_total += pc;
    }
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, c_total, h, w]);
    let dst = out.data_mut();
    for b in 0..n {
        let mut offset = b * c_total * plane;
        for p in parts {
            let pc = p.shape()[1];
            let src = &p.data()[b * pc * plane..(b + 1) * pc * plane];
            dst[offset..offset + pc * plane].copy_from_slice(src);
            offset += pc * plane;
        }
    }
    Ok(out)
}

/// Channels `[start, start + len)`.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    if start + len > c {
        return Err(Error::shape(format!(
            "channel slice {start}..{} exceeds {c} channels",
            start + len
        )));
    }
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, len, h, w]);
    for b in 0..n {
        let src = &x.data()[(b * c + start) * plane..(b * c + start + len) * plane];
        out.data_mut()[b * len * plane..(b + 1) * len * plane].copy_from_slice(src);
    }
    Ok(out)
}

/// `x ⊙ gate` with a single-channel gate broadcast over channels.
pub fn mul_channel_broadcast<T: Scalar>(x: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    if gate.shape() != [n, 1, h, w] {
        return Err(Error::shape(format!(
            "gate {:?} cannot broadcast over {:?}",
            gate.shape(),
            x.shape()
        )));
    }
    let plane = h * w;
    let mut out = x.clone();
    for b in 0..n {
        let g = &gate.data()[b * plane..(b + 1) * plane];
        for ch in 0..c {
            let row = &mut out.data_mut()[(b * c + ch) * plane..(b * c + ch + 1) * plane];
            for (v, &a) in row.iter_mut().zip(g) {
                *v *= a;
            }
        }
    }
    Ok(out)
}
