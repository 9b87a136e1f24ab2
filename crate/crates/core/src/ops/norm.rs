use crate::error::{Error, Result};
use crate::ops::dense::split_last;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise softmax over the last axis with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, cols) = split_last(x.shape())?;
    let mut out = x.clone();
    if cols == 0 {
        return Ok(out);
    }
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

pub(crate) fn softmax_backward<T: Scalar>(output: &Tensor<T>, grad_out: &[T]) -> Tensor<T> {
    let cols = *output.shape().last().unwrap();
    let mut dx = Tensor::zeros(output.shape());
    if cols == 0 {
        return dx;
    }
    for ((d, y), g) in dx
        .data_mut()
        .chunks_mut(cols)
        .zip(output.data().chunks(cols))
        .zip(grad_out.chunks(cols))
    {
        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
        for ((o, &yv), &gv) in d.iter_mut().zip(y).zip(g) {
            *o = yv * (gv - dot);
        }
    }
    dx
}

/// Saved statistics of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormStats<T> {
    pub mean: Vec<T>,
    pub rstd: Vec<T>,
}

pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    Ok(layer_norm_forward(x, gamma, beta, eps)?.0)
}

pub(crate) fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, NormStats<T>)> {
    let (tokens, d) = split_last(x.shape())?;
    if d == 0 {
        return Err(Error::shape("layer_norm needs at least one feature"));
    }
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape(format!(
            "layer_norm affine parameters {:?}/{:?} do not match width {d}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = Tensor::zeros(x.shape());
    let mut stats = NormStats {
        mean: Vec::with_capacity(tokens),
        rstd: Vec::with_capacity(tokens),
    };
    let width = T::lit(d as f64);
    for (src, dst) in x.data().chunks(d).zip(out.data_mut().chunks_mut(d)) {
        let mean = src.iter().copied().sum::<T>() / width;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / width;
        let rstd = T::one() / (var + T::lit(eps)).sqrt();
        for (i, (o, &v)) in dst.iter_mut().zip(src).enumerate() {
            *o = (v - mean) * rstd * gamma.data()[i] + beta.data()[i];
        }
        stats.mean.push(mean);
        stats.rstd.push(rstd);
    }
    Ok((out, stats))
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    stats: &NormStats<T>,
    grad_out: &[T],
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = gamma.len();
    let width = T::lit(d as f64);
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = Tensor::zeros(&[d]);
    let mut dbeta = Tensor::zeros(&[d]);
    let mut xhat = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for (t, ((src, g), out)) in x
        .data()
        .chunks(d)
        .zip(grad_out.chunks(d))
        .zip(dx.data_mut().chunks_mut(d))
        .enumerate()
    {
        let (mean, rstd) = (stats.mean[t], stats.rstd[t]);
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for i in 0..d {
            xhat[i] = (src[i] - mean) * rstd;
            dxhat[i] = g[i] * gamma.data()[i];
            sum_dxhat += dxhat[i];
            sum_dxhat_xhat += dxhat[i] * xhat[i];
            dgamma.data_mut()[i] += g[i] * xhat[i];
            dbeta.data_mut()[i] += g[i];
        }
        for i in 0..d {
            out[i] = rstd / width * (width * dxhat[i] - sum_dxhat - xhat[i] * sum_dxhat_xhat);
        }
    }
    (dx, dgamma, dbeta)
}
