//! Token-wise linear maps and batched matrix products.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Rows of `x` viewed as `[tokens, d_in]` (all leading axes flattened).
pub(crate) fn split_last(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.split_last() {
        Some((&d, lead)) => Ok((lead.iter().product(), d)),
        None => Err(Error::shape("tensor has no axes")),
    }
}

/// `out[t] = weight · in[t] + bias` over the last axis.
pub fn linear<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (tokens, d_in) = split_last(input.shape())?;
    let &[d_out, w_in] = weight.shape() else {
        return Err(Error::shape(format!("linear weight must be rank 2, got {:?}", weight.shape())));
    };
    if w_in != d_in {
        return Err(Error::shape(format!(
            "linear input width {d_in} does not match weight {:?}",
            weight.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(Error::shape(format!("linear bias {:?} does not match {d_out}", b.shape())));
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = d_out;
    let mut out = Tensor::zeros(&shape);
    if let Some(b) = bias {
        for row in out.data_mut().chunks_mut(d_out.max(1)) {
            row.copy_from_slice(b.data());
        }
    }
    T::gemm(
        tokens,
        d_in,
        d_out,
        T::one(),
        input.data(),
        d_in as isize,
        1,
        weight.data(),
        1,
        d_in as isize,
        T::one(),
        out.data_mut(),
        d_out as isize,
        1,
    );
    Ok(out)
}

pub(crate) fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &[T],
    want: [bool; 3],
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let (tokens, d_in) = split_last(input.shape()).expect("validated in forward");
    let d_out = weight.shape()[0];
    let d_input = want[0].then(|| {
        let mut dx = Tensor::zeros(input.shape());
        T::gemm(
            tokens,
            d_out,
            d_in,
            T::one(),
            grad_out,
            d_out as isize,
            1,
            weight.data(),
            d_in as isize,
            1,
            T::zero(),
            dx.data_mut(),
            d_in as isize,
            1,
        );
        dx
    });
    let d_weight = want[1].then(|| {
        let mut dw = Tensor::zeros(weight.shape());
        T::gemm(
            d_out,
            tokens,
            d_in,
            T::one(),
            grad_out,
            1,
            d_out as isize,
            input.data(),
            d_in as isize,
            1,
            T::zero(),
            dw.data_mut(),
            d_in as isize,
            1,
        );
        dw
    });
    let d_bias = want[2].then(|| {
        let mut db = Tensor::zeros(&[d_out]);
        for row in grad_out.chunks(d_out.max(1)) {
            for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                *acc += g;
            }
        }
        db
    });
    (d_input, d_weight, d_bias)
}

/// Batched product of `[B, M, K]` and `[B, K, N]` (or `[B, N, K]` when
/// `transpose_b`).
pub fn bmm<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, transpose_b: bool) -> Result<Tensor<T>> {
    let (&[ba, m, k], &[bb, r1, r2]) = (a.shape(), b.shape()) else {
        return Err(Error::shape(format!(
            "bmm expects rank-3 operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    };
    let (kb, n) = if transpose_b { (r2, r1) } else { (r1, r2) };
    if ba != bb || kb != k {
        return Err(Error::shape(format!(
            "bmm operands {:?} and {:?} (transpose_b={transpose_b}) are incompatible",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Tensor::zeros(&[ba, m, n]);
    let (rsb, csb) = if transpose_b { (1, k as isize) } else { (n as isize, 1) };
    for i in 0..ba {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &a.data()[i * m * k..(i + 1) * m * k],
            k as isize,
            1,
            &b.data()[i * k * n..(i + 1) * k * n],
            rsb,
            csb,
            T::zero(),
            &mut out.data_mut()[i * m * n..(i + 1) * m * n],
            n as isize,
            1,
        );
    }
    Ok(out)
}

pub(crate) fn bmm_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    transpose_b: bool,
    grad_out: &[T],
    want: [bool; 2],
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let [batch, m, k] = [a.shape()[0], a.shape()[1], a.shape()[2]];
    let n = if transpose_b { b.shape()[1] } else { b.shape()[2] };
    let da = want[0].then(|| {
        // dA = dC · Bᵀ  (B as [K,N]); with transpose_b, B is stored [N,K] so Bᵀ is row-major.
        let mut da = Tensor::zeros(a.shape());
        let (rsb, csb) = if transpose_b { (k as isize, 1) } else { (1, n as isize) };
        for i in 0..batch {
            T::gemm(
                m,
                n,
                k,
                T::one(),
                &grad_out[i * m * n..(i + 1) * m * n],
                n as isize,
                1,
                &b.data()[i * k * n..(i + 1) * k * n],
                rsb,
                csb,
                T::zero(),
                &mut da.data_mut()[i * m * k..(i + 1) * m * k],
                k as isize,
                1,
            );
        }
        da
    });
    let db = want[1].then(|| {
        let mut db = Tensor::zeros(b.shape());
        for i in 0..batch {
            let a_i = &a.data()[i * m * k..(i + 1) * m * k];
            let g_i = &grad_out[i * m * n..(i + 1) * m * n];
            let out = &mut db.data_mut()[i * k * n..(i + 1) * k * n];
            if transpose_b {
                // dB[N,K] = dCᵀ · A
                T::gemm(n, m, k, T::one(), g_i, 1, n as isize, a_i, k as isize, 1, T::zero(), out, k as isize, 1);
            } else {
                // dB[K,N] = Aᵀ · dC
                T::gemm(k, m, n, T::one(), a_i, 1, k as isize, g_i, n as isize, 1, T::zero(), out, n as isize, 1);
            }
        }
        db
    });
    (da, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input_through() {
        let x = Tensor::<f64>::from_fn(&[3, 4], |i| i as f64 - 5.0);
        let w = Tensor::<f64>::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        let b = Tensor::zeros(&[4]);
        assert_eq!(linear(&x, &w, Some(&b)).unwrap(), x);
    }

    #[test]
    fn zero_weight_rows_equal_bias() {
        let x = Tensor::<f64>::from_fn(&[3, 4], |i| i as f64);
        let w = Tensor::<f64>::zeros(&[2, 4]);
        let b = Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap();
        let y = linear(&x, &w, Some(&b)).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let x = Tensor::<f64>::zeros(&[3, 4]);
        let w = Tensor::<f64>::zeros(&[2, 5]);
        assert!(linear(&x, &w, None).is_err());
    }

    #[test]
    fn bmm_transposed_matches_plain() {
        let a = Tensor::<f64>::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::<f64>::from_fn(&[2, 4, 5], |i| (i as f64 * 0.11).cos());
        let mut bt = Tensor::<f64>::zeros(&[2, 5, 4]);
        for i in 0..2 {
            for r in 0..4 {
                for c in 0..5 {
                    bt.data_mut()[i * 20 + c * 4 + r] = b.data()[i * 20 + r * 5 + c];
                }
            }
        }
        let p = bmm(&a, &b, false).unwrap();
        let q = bmm(&a, &bt, true).unwrap();
        assert!(p.max_abs_diff(&q) < 1e-14);
    }
}
