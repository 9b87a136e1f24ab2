//! Brute-force reference implementations shared by the integration tests.
//! Everything here is written with plain nested loops over `f64` and does not
//! call into the library's kernels.

#![allow(dead_code)]

use parfnet::model::{LayerKind, ModelConfig, VariantSpec};
use parfnet::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Direct cross-correlation with zero padding.
pub fn conv2d(
    x: &[f64],
    [n, ci, h, w]: [usize; 4],
    weight: &[f64],
    co: usize,
    k: usize,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * co * ho * wo];
    for b in 0..n {
        for o in 0..co {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = bias.map_or(0.0, |bs| bs[o]);
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * ci + c) * h + iy as usize) * w + ix as usize];
                                acc += weight[((o * ci + c) * k + ky) * k + kx] * xv;
                            }
                        }
                    }
                    out[((b * co + o) * ho + y) * wo + xx] = acc;
                }
            }
        }
    }
    (out, [n, co, ho, wo])
}

pub fn linear(x: &[f64], d_in: usize, weight: &[f64], d_out: usize, bias: Option<&[f64]>) -> Vec<f64> {
    let rows = x.len() / d_in;
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        for o in 0..d_out {
            let mut acc = bias.map_or(0.0, |b| b[o]);
            for i in 0..d_in {
                acc += weight[o * d_in + i] * x[r * d_in + i];
            }
            out[r * d_out + o] = acc;
        }
    }
    out
}

pub fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        out.extend(row.iter().map(|v| v.exp() / denom));
    }
    out
}

pub fn layer_norm_rows(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let d = gamma.len();
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        for i in 0..d {
            out.push((row[i] - mean) / (var + eps).sqrt() * gamma[i] + beta[i]);
        }
    }
    out
}

/// `[n,2,h,w]`: channel max then channel mean.
pub fn channel_stats(x: &[f64], [n, c, h, w]: [usize; 4]) -> Vec<f64> {
    let mut out = vec![0.0; n * 2 * h * w];
    for b in 0..n {
        for p in 0..h * w {
            let vals: Vec<f64> = (0..c).map(|ch| x[(b * c + ch) * h * w + p]).collect();
            out[(b * 2) * h * w + p] = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out[(b * 2 + 1) * h * w + p] = vals.iter().sum::<f64>() / c as f64;
        }
    }
    out
}

/// Windows ordered batch-major, then row-major over the window grid; tokens
/// row-major inside each window; channels last.
pub fn window_partition(x: &[f64], [n, c, h, w]: [usize; 4], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for b in 0..n {
        for gy in 0..h / m {
            for gx in 0..w / m {
                for ty in 0..m {
                    for tx in 0..m {
                        for ch in 0..c {
                            out.push(x[((b * c + ch) * h + gy * m + ty) * w + gx * m + tx]);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One adaptive-receptive-field layer: `x + Σ_k σ(att(stats(F_k))) ⊙ F_k`
/// with `F_k` a same-padded convolution of kernel `kernels[k]`.
pub fn conv_parf(
    x: &[f64],
    dims: [usize; 4],
    kernels: &[usize],
    branch_weights: &[Vec<f64>],
    branch_biases: &[Vec<f64>],
    att_weight: &[f64],
    att_bias: f64,
) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let mut y = x.to_vec();
    for (i, &k) in kernels.iter().enumerate() {
        let (f, _) = conv2d(x, dims, &branch_weights[i], c, k, Some(&branch_biases[i]), 1, k / 2);
        let stats = channel_stats(&f, dims);
        let (logit, _) = conv2d(&stats, [n, 2, h, w], att_weight, 1, 7, Some(&[att_bias]), 1, 3);
        for b in 0..n {
            for ch in 0..c {
                for p in 0..h * w {
                    let a = sigmoid(logit[b * h * w + p]);
                    y[(b * c + ch) * h * w + p] += a * f[(b * c + ch) * h * w + p];
                }
            }
        }
    }
    y
}

fn conv_count(c_in: usize, c_out: usize, k: usize) -> usize {
    c_out * c_in * k * k + c_out
}

fn double_conv_count(c: usize) -> usize {
    2 * conv_count(c, c, 3)
}

fn attention_count(c: usize, cfg: &ModelConfig) -> usize {
    let norms = 2 * 2 * c;
    let qkv = 3 * c * c + 2 * c; // query and value carry a bias, key does not
    let proj = c * c + c;
    let table = (2 * cfg.window - 1).pow(2) * cfg.heads;
    let mlp = if cfg.use_mlp {
        let hidden = c * cfg.mlp_ratio;
        hidden * c + hidden + c * hidden + c
    } else {
        0
    };
    norms + qkv + proj + table + mlp
}

fn layer_count(kind: LayerKind, c: usize, cfg: &ModelConfig) -> usize {
    match kind {
        LayerKind::Static => double_conv_count(c),
        LayerKind::Parf => cfg.kernel_sizes.iter().map(|&k| conv_count(c, c, k)).sum::<usize>() + conv_count(2, 1, 7),
        LayerKind::Hybrid => {
            let module = 2 * conv_count(c, c, 1) + double_conv_count(c / 2) + attention_count(c / 2, cfg);
            2 * module
        }
    }
}

/// Parameter count of the full network from layer arithmetic.
pub fn expected_param_count(cfg: &ModelConfig) -> usize {
    let v: VariantSpec = cfg.variant;
    let cap = cfg.base_width * cfg.channel_cap;
    let width = |i: usize| (cfg.base_width << i).min(cap);
    let enc_kind = |i: usize| {
        if i < v.encoder_parf {
            LayerKind::Parf
        } else if i >= 4 - v.encoder_hybrid {
            LayerKind::Hybrid
        } else {
            LayerKind::Static
        }
    };
    let dec_kind = |j: usize| {
        if j < v.decoder_hybrid {
            LayerKind::Hybrid
        } else if j < v.decoder_hybrid + v.decoder_parf {
            LayerKind::Parf
        } else {
            LayerKind::Static
        }
    };
    let mut total = conv_count(cfg.input_channels, width(0), 3);
    for i in 0..4 {
        total += layer_count(enc_kind(i), width(i), cfg);
        total += width(i + 1) * width(i) * 4 + width(i + 1);
    }
    total += double_conv_count(width(4));
    for j in 0..4 {
        let c_in = width(4 - j);
        let c = width(3 - j);
        total += conv_count(c_in, c, 1);
        total += conv_count(2 * c, c, 3);
        total += layer_count(dec_kind(j), c, cfg);
    }
    total + conv_count(width(0), cfg.num_classes, 1)
}
