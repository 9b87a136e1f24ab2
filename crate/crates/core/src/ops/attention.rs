//! Index helpers and head reshuffles for windowed multi-head attention.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Additive mask value for forbidden token pairs.
pub const MASK_VALUE: f64 = -1e9;

/// For an `m × m` window, the flat index into a `(2m−1)²` bias table for
/// every (query, key) token pair.
pub fn relative_position_index(m: usize) -> Vec<usize> {
    let t = m * m;
    let span = 2 * m - 1;
    let mut index = Vec::with_capacity(t * t);
    for q in 0..t {
        let (qy, qx) = (q / m, q % m);
        for k in 0..t {
            let (ky, kx) = (k / m, k % m);
            let dy = qy + m - 1 - ky;
            let dx = qx + m - 1 - kx;
            index.push(dy * span + dx);
        }
    }
    index
}

/// Region label of every pixel of the rolled `h × w` map. Pixels with
/// different labels were not contiguous before the cyclic shift.
fn shift_regions(h: usize, w: usize, m: usize, shift: usize) -> Vec<usize> {
    let band = |v: usize, len: usize| {
        if v < len - m {
            0
        } else if v < len - shift {
            1
        } else {
            2
        }
    };
    let mut labels = vec![0; h * w];
    for y in 0..h {
        for x in 0..w {
            labels[y * w + x] = band(y, h) * 3 + band(x, w);
        }
    }
    labels
}

/// Additive attention mask `[windows, m·m, m·m]` for a map rolled by
/// `(−shift, −shift)`: zero where both tokens come from the same region,
/// [`MASK_VALUE`] otherwise.
pub fn shifted_window_mask<T: Scalar>(h: usize, w: usize, m: usize, shift: usize) -> Result<Tensor<T>> {
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(Error::config(format!("window size {m} does not divide {h}x{w}")));
    }
    if shift == 0 || shift >= m {
        return Err(Error::config(format!("shift {shift} must lie in 1..{m}")));
    }
    let labels = shift_regions(h, w, m, shift);
    let (gh, gw) = (h / m, w / m);
    let t = m * m;
    let mut mask = Tensor::zeros(&[gh * gw, t, t]);
    let blocked = T::lit(MASK_VALUE);
    for wy in 0..gh {
        for wx in 0..gw {
            let win = wy * gw + wx;
            let label = |tok: usize| labels[(wy * m + tok / m) * w + wx * m + tok % m];
            for q in 0..t {
                for k in 0..t {
                    if label(q) != label(k) {
                        mask.data_mut()[(win * t + q) * t + k] = blocked;
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// `[B, T, C]` → `[B·heads, T, dh]` taking channels `offset + h·dh + d`.
pub(crate) fn split_heads<T: Scalar>(x: &Tensor<T>, offset: usize, heads: usize, dh: usize) -> Result<Tensor<T>> {
    let &[b, t, c] = x.shape() else {
        return Err(Error::shape(format!("split_heads expects rank 3, got {:?}", x.shape())));
    };
    if offset + heads * dh > c {
        return Err(Error::shape(format!(
            "heads {heads}x{dh} at offset {offset} exceed width {c}"
        )));
    }
    let mut out = Tensor::zeros(&[b * heads, t, dh]);
    let dst = out.data_mut();
    for bi in 0..b {
        for h in 0..heads {
            for ti in 0..t {
                let src = &x.data()[(bi * t + ti) * c + offset + h * dh..][..dh];
                dst[((bi * heads + h) * t + ti) * dh..][..dh].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

pub(crate) fn split_heads_backward<T: Scalar>(
    shape: &[usize],
    offset: usize,
    heads: usize,
    dh: usize,
    grad_out: &[T],
) -> Tensor<T> {
    let (b, t, c) = (shape[0], shape[1], shape[2]);
    let mut dx = Tensor::zeros(shape);
    let dst = dx.data_mut();
    for bi in 0..b {
        for h in 0..heads {
            for ti in 0..t {
                let src = &grad_out[((bi * heads + h) * t + ti) * dh..][..dh];
                let row = &mut dst[(bi * t + ti) * c + offset + h * dh..][..dh];
                for (o, &g) in row.iter_mut().zip(src) {
                    *o += g;
                }
            }
        }
    }
    dx
}

/// `[B·heads, T, dh]` → `[B, T, heads·dh]`.
pub(crate) fn merge_heads<T: Scalar>(x: &Tensor<T>, heads: usize) -> Result<Tensor<T>> {
    let &[bh, t, dh] = x.shape() else {
        return Err(Error::shape(format!("merge_heads expects rank 3, got {:?}", x.shape())));
    };
    if heads == 0 || bh % heads != 0 {
        return Err(Error::shape(format!("{bh} rows are not a multiple of {heads} heads")));
    }
    let b = bh / heads;
    let c = heads * dh;
    let mut out = Tensor::zeros(&[b, t, c]);
    let dst = out.data_mut();
    for bi in 0..b {
        for h in 0..heads {
            for ti in 0..t {
                let src = &x.data()[((bi * heads + h) * t + ti) * dh..][..dh];
                dst[(bi * t + ti) * c + h * dh..][..dh].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

pub(crate) fn merge_heads_backward<T: Scalar>(shape: &[usize], heads: usize, grad_out: &[T]) -> Tensor<T> {
    let (bh, t, dh) = (shape[0], shape[1], shape[2]);
    let b = bh / heads;
    let c = heads * dh;
    let mut dx = Tensor::zeros(shape);
    let dst = dx.data_mut();
    for bi in 0..b {
        for h in 0..heads {
            for ti in 0..t {
                let src = &grad_out[(bi * t + ti) * c + h * dh..][..dh];
                dst[((bi * heads + h) * t + ti) * dh..][..dh].copy_from_slice(src);
            }
        }
    }
    dx
}

/// Adds `table[index[q,k]·heads + h]` and, when present, `mask[window, q, k]`
/// to scores laid out as `[windows_total·heads, T, T]`.
pub(crate) fn add_position_bias<T: Scalar>(
    scores: &Tensor<T>,
    table: &Tensor<T>,
    index: &[usize],
    mask: Option<&Tensor<T>>,
    heads: usize,
) -> Result<Tensor<T>> {
    let &[bh, t, t2] = scores.shape() else {
        return Err(Error::shape(format!("scores must be rank 3, got {:?}", scores.shape())));
    };
    if t != t2 || index.len() != t * t || heads == 0 || bh % heads != 0 {
        return Err(Error::shape(format!(
            "scores {:?} incompatible with {} index entries and {heads} heads",
            scores.shape(),
            index.len()
        )));
    }
    let mut out = scores.clone();
    let windows_per_image = match mask {
        Some(m) => {
            if m.shape().len() != 3 || m.shape()[1] != t || m.shape()[2] != t {
                return Err(Error::shape(format!("mask {:?} does not match {t} tokens", m.shape())));
            }
            m.shape()[0]
        }
        None => 1,
    };
    let tab = table.data();
    for row in 0..bh {
        let h = row % heads;
        let window = (row / heads) % windows_per_image;
        let block = &mut out.data_mut()[row * t * t..(row + 1) * t * t];
        for (i, v) in block.iter_mut().enumerate() {
            *v += tab[index[i] * heads + h];
        }
        if let Some(m) = mask {
            let mblock = &m.data()[window * t * t..(window + 1) * t * t];
            for (v, &mv) in block.iter_mut().zip(mblock) {
                *v += mv;
            }
        }
    }
    Ok(out)
}

pub(crate) fn position_bias_table_grad<T: Scalar>(
    table_shape: &[usize],
    index: &[usize],
    heads: usize,
    grad_out: &[T],
) -> Tensor<T> {
    let tt = index.len();
    let mut dt = Tensor::zeros(table_shape);
    for (row, block) in grad_out.chunks(tt).enumerate() {
        let h = row % heads;
        for (i, &g) in block.iter().enumerate() {
            dt.data_mut()[index[i] * heads + h] += g;
        }
    }
    dt
}
