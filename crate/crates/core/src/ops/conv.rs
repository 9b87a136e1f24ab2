//! 2-D cross-correlation via chunked im2col + GEMM.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Upper bound on the number of im2col elements materialized at once.
const COLS_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        bias: Option<&[usize]>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (&[n, c_in, h, w], &[c_out, wc_in, kh, kw]) = (input, weight) else {
            return Err(Error::shape(format!(
                "conv2d expects rank-4 input and weight, got {input:?} and {weight:?}"
            )));
        };
        if wc_in != c_in {
            return Err(Error::shape(format!(
                "conv2d input has {c_in} channels but weight expects {wc_in}"
            )));
        }
        if let Some(b) = bias {
            if b != [c_out] {
                return Err(Error::shape(format!("conv2d bias {b:?} does not match {c_out} outputs")));
            }
        }
        if stride == 0 {
            return Err(Error::config("conv2d stride must be positive"));
        }
        if kh == 0 || kw == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(format!(
                "conv2d kernel {kh}x{kw} does not fit padded input {h}x{w} (padding {padding})"
            )));
        }
        Ok(Self {
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            h_out: (h + 2 * padding - kh) / stride + 1,
            w_out: (w + 2 * padding - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn rows_per_chunk(&self) -> usize {
        let per_row = (self.patch_len() * self.w_out).max(1);
        (COLS_BUDGET / per_row).clamp(1, self.h_out.max(1))
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.c_out, self.h_out, self.w_out]
    }
}

/// Fills `cols[K, pix]` for output rows `[oy0, oy1)` of one image.
/// Output columns `[lo, hi)` whose tap `kx` lands inside the input row.
fn valid_columns(g: &ConvGeometry, kx: usize) -> (usize, usize) {
    let lo = g.padding.saturating_sub(kx).div_ceil(g.stride).min(g.w_out);
    let hi = (g.w + g.padding).saturating_sub(kx).div_ceil(g.stride).clamp(lo, g.w_out);
    (lo, hi)
}

fn im2col<T: Scalar>(g: &ConvGeometry, image: &[T], oy0: usize, oy1: usize, cols: &mut [T]) {
    let pix = (oy1 - oy0) * g.w_out;
    let pad = g.padding as isize;
    for ci in 0..g.c_in {
        let plane = &image[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * pix..(row + 1) * pix];
                let (lo, hi) = valid_columns(g, kx);
                for (oy, out) in (oy0..oy1).zip(dst.chunks_exact_mut(g.w_out)) {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    if lo < hi {
                        let ix0 = lo * g.stride + kx - g.padding;
                        if g.stride == 1 {
                            out[lo..hi].copy_from_slice(&src[ix0..ix0 + hi - lo]);
                        } else {
                            for (o, &s) in out[lo..hi].iter_mut().zip(src[ix0..].iter().step_by(g.stride)) {
                                *o = s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], oy0: usize, oy1: usize, image: &mut [T]) {
    let pix = (oy1 - oy0) * g.w_out;
    let pad = g.padding as isize;
    for ci in 0..g.c_in {
        let plane = &mut image[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * pix..(row + 1) * pix];
                let (lo, hi) = valid_columns(g, kx);
                if lo >= hi {
                    continue;
                }
                let ix0 = lo * g.stride + kx - g.padding;
                for (oy, col) in (oy0..oy1).zip(src.chunks_exact(g.w_out)) {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (d, &s) in dst[ix0..].iter_mut().step_by(g.stride).zip(&col[lo..hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Cross-correlation with zero padding: `out[n,co,y,x] = b[co] + Σ w[co,ci,ky,kx]·in[n,ci,y·s+ky−p,x·s+kx−p]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(
        input.shape(),
        weight.shape(),
        bias.map(|b| b.shape()),
        stride,
        padding,
    )?;
    Ok(conv2d_forward(&g, input.data(), weight.data(), bias.map(|b| b.data())))
}

pub(crate) fn conv2d_forward<T: Scalar>(
    g: &ConvGeometry,
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> Tensor<T> {
    let mut out = Tensor::zeros(&g.output_shape());
    let plane_out = g.h_out * g.w_out;
    let img_in = g.c_in * g.h * g.w;
    let k = g.patch_len();
    let chunk = g.rows_per_chunk();
    let mut cols = vec![T::zero(); k * chunk * g.w_out];
    let data = out.data_mut();
    for b in 0..g.n {
        let image = &input[b * img_in..(b + 1) * img_in];
        let out_img = &mut data[b * g.c_out * plane_out..(b + 1) * g.c_out * plane_out];
        if let Some(bias) = bias {
            for (co, &bv) in bias.iter().enumerate() {
                out_img[co * plane_out..(co + 1) * plane_out].fill(bv);
            }
        }
        let mut oy0 = 0;
        while oy0 < g.h_out {
            let oy1 = (oy0 + chunk).min(g.h_out);
            let pix = (oy1 - oy0) * g.w_out;
            im2col(g, image, oy0, oy1, &mut cols[..k * pix]);
            T::gemm(
                g.c_out,
                k,
                pix,
                T::one(),
                weight,
                k as isize,
                1,
                &cols[..k * pix],
                pix as isize,
                1,
                T::one(),
                &mut out_img[oy0 * g.w_out..],
                plane_out as isize,
                1,
            );
            oy0 = oy1;
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeometry,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    want: [bool; 3],
) -> ConvGrads<T> {
    let [want_input, want_weight, want_bias] = want;
    let plane_out = g.h_out * g.w_out;
    let img_in = g.c_in * g.h * g.w;
    let k = g.patch_len();
    let chunk = g.rows_per_chunk();
    let mut cols = vec![T::zero(); k * chunk * g.w_out];
    let mut d_input = want_input.then(|| Tensor::zeros(&[g.n, g.c_in, g.h, g.w]));
    let mut d_weight = want_weight.then(|| Tensor::zeros(&[g.c_out, g.c_in, g.kh, g.kw]));
    let d_bias = want_bias.then(|| {
        let mut db = Tensor::zeros(&[g.c_out]);
        for b in 0..g.n {
            for co in 0..g.c_out {
                let start = (b * g.c_out + co) * plane_out;
                db.data_mut()[co] += grad_out[start..start + plane_out].iter().copied().sum();
            }
        }
        db
    });
    if want_input || want_weight {
        for b in 0..g.n {
            let image = &input[b * img_in..(b + 1) * img_in];
            let gout = &grad_out[b * g.c_out * plane_out..(b + 1) * g.c_out * plane_out];
            let mut oy0 = 0;
            while oy0 < g.h_out {
                let oy1 = (oy0 + chunk).min(g.h_out);
                let pix = (oy1 - oy0) * g.w_out;
                let gchunk = &gout[oy0 * g.w_out..];
                if let Some(dw) = d_weight.as_mut() {
                    im2col(g, image, oy0, oy1, &mut cols[..k * pix]);
                    T::gemm(
                        g.c_out,
                        pix,
                        k,
                        T::one(),
                        gchunk,
                        plane_out as isize,
                        1,
                        &cols[..k * pix],
                        1,
                        pix as isize,
                        T::one(),
                        dw.data_mut(),
                        k as isize,
                        1,
                    );
                }
                if let Some(dx) = d_input.as_mut() {
                    T::gemm(
                        k,
                        g.c_out,
                        pix,
                        T::one(),
                        weight,
                        1,
                        k as isize,
                        gchunk,
                        plane_out as isize,
                        1,
                        T::zero(),
                        &mut cols[..k * pix],
                        pix as isize,
                        1,
                    );
                    col2im(g, &cols[..k * pix], oy0, oy1, &mut dx.data_mut()[b * img_in..(b + 1) * img_in]);
                }
                oy0 = oy1;
            }
        }
    }
    ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor::<f64>::from_fn(&[1, 1, 4, 4], |i| i as f64 * 0.25 - 1.0);
        let mut w = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 5, 5], |i| (i as f64).sin());
        let w = Tensor::<f64>::zeros(&[4, 3, 3, 3]);
        let b = Tensor::zeros(&[4]);
        let y = conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn strided_output_dims() {
        let g = ConvGeometry::new(&[1, 8, 16, 16], &[16, 8, 2, 2], None, 2, 0).unwrap();
        assert_eq!(g.output_shape(), [1, 16, 8, 8]);
        let g = ConvGeometry::new(&[1, 1, 7, 5], &[1, 1, 3, 3], None, 2, 1).unwrap();
        assert_eq!((g.h_out, g.w_out), (4, 3));
    }

    #[test]
    fn kernel_larger_than_padded_input_is_rejected() {
        assert!(ConvGeometry::new(&[1, 1, 2, 2], &[1, 1, 7, 7], None, 1, 1).is_err());
    }
}
