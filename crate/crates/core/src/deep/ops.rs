//! Forward and backward kernels for the network layers.
//!
//! Activations are `(batch, channels, length)` or `(batch, features)`.
//! Every kernel computes each batch row with the same loop order no matter
//! how many rows are present, so evaluation-mode outputs do not depend on
//! batch composition.

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn dims3(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    x.expect_rank(3, what)?;
    let s = x.shape();
    Ok((s[0], s[1], s[2]))
}

fn dims2(x: &Tensor, what: &str) -> Result<(usize, usize)> {
    x.expect_rank(2, what)?;
    let s = x.shape();
    Ok((s[0], s[1]))
}

/// Dot product with four partial sums, which lets the compiler vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for q in 0..4 {
            acc[q] += x[q] * y[q];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Stride-one 1D convolution without bias. `w` is `(out, in, kernel)`.
pub fn conv1d(x: &Tensor, w: &Tensor, pad: usize) -> Result<Tensor> {
    let (b, ci, l) = dims3(x, "conv1d input")?;
    let (co, wci, k) = dims3(w, "conv1d weight")?;
    if wci != ci {
        return Err(Error::DimensionMismatch { expected: wci, got: ci });
    }
    if l + 2 * pad < k {
        return Err(Error::InvalidData(format!("length {l} too short for kernel {k} with padding {pad}")));
    }
    let lo = l + 2 * pad - k + 1;
    let lp = l + 2 * pad;
    let ck = ci * k;
    let (xd, wd) = (x.data(), w.data());
    let mut xp = vec![0.0; ci * lp];
    // im2col: row t holds the receptive field of output position t
    let mut col = vec![0.0; lo * ck];
    let mut y = vec![0.0; b * co * lo];
    for bi in 0..b {
        for i in 0..ci {
            xp[i * lp + pad..i * lp + pad + l].copy_from_slice(&xd[(bi * ci + i) * l..(bi * ci + i + 1) * l]);
        }
        for t in 0..lo {
            for i in 0..ci {
                col[t * ck + i * k..t * ck + (i + 1) * k].copy_from_slice(&xp[i * lp + t..i * lp + t + k]);
            }
        }
        for o in 0..co {
            let wrow = &wd[o * ck..(o + 1) * ck];
            for t in 0..lo {
                y[(bi * co + o) * lo + t] = dot(wrow, &col[t * ck..(t + 1) * ck]);
            }
        }
    }
    Tensor::new(vec![b, co, lo], y)
}

/// Gradients of [`conv1d`] with respect to its input and weight.
pub fn conv1d_backward(x: &Tensor, w: &Tensor, pad: usize, dy: &Tensor) -> (Tensor, Tensor) {
    let s = x.shape();
    let (b, ci, l) = (s[0], s[1], s[2]);
    let ws = w.shape();
    let (co, k) = (ws[0], ws[2]);
    let lo = dy.shape()[2];
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    for bi in 0..b {
        for o in 0..co {
            let dyrow = &dyd[(bi * co + o) * lo..(bi * co + o + 1) * lo];
            for i in 0..ci {
                let xoff = (bi * ci + i) * l;
                let woff = (o * ci + i) * k;
                for (t, &g) in dyrow.iter().enumerate() {
                    for kk in 0..k {
                        let src = t + kk;
                        if src >= pad && src - pad < l {
                            dx[xoff + src - pad] += wd[woff + kk] * g;
                            dw[woff + kk] += xd[xoff + src - pad] * g;
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(s.to_vec(), dx).expect("shape preserved"),
        Tensor::new(ws.to_vec(), dw).expect("shape preserved"),
    )
}

/// Cache of a scale-only batch normalization forward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    /// Batch statistics when normalizing with them; `None` for running statistics.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

/// Per-channel mean and biased variance over batch and length.
pub fn channel_moments(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, c, l) = dims3(x, "batch norm input")?;
    let n = (b * l) as f64;
    let xd = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for bi in 0..b {
            s += xd[(bi * c + ch) * l..(bi * c + ch + 1) * l].iter().sum::<f64>();
        }
        let mu = s / n;
        let mut v = 0.0;
        for bi in 0..b {
            v += xd[(bi * c + ch) * l..(bi * c + ch + 1) * l]
                .iter()
                .map(|&t| (t - mu) * (t - mu))
                .sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = v / n;
    }
    Ok((mean, var))
}

/// `y = γ (x − mean) / √(var + eps)` per channel. Batch statistics are
/// used when `running` is `None`.
pub fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    eps: f64,
    running: Option<(&[f64], &[f64])>,
) -> Result<(Tensor, NormCache)> {
    let (b, c, l) = dims3(x, "batch norm input")?;
    if gamma.len() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            got: gamma.len(),
        });
    }
    let (mean, var, batch_stats) = match running {
        Some((m, v)) => (m.to_vec(), v.to_vec(), None),
        None => {
            if b * l < 2 {
                return Err(Error::InvalidData("batch statistics need at least two values per channel".into()));
            }
            let (m, v) = channel_moments(x)?;
            (m.clone(), v.clone(), Some((m, v)))
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let xd = x.data();
    let g = gamma.data();
    let mut xhat = vec![0.0; xd.len()];
    let mut y = vec![0.0; xd.len()];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * l;
            for t in off..off + l {
                xhat[t] = (xd[t] - mean[ch]) * inv_std[ch];
                y[t] = g[ch] * xhat[t];
            }
        }
    }
    let shape = x.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), y)?,
        NormCache {
            xhat: Tensor::new(shape, xhat)?,
            inv_std,
            batch_stats,
        },
    ))
}

/// Gradients of [`batch_norm`] with respect to input and scale.
pub fn batch_norm_backward(gamma: &Tensor, cache: &NormCache, dy: &Tensor) -> (Tensor, Tensor) {
    let s = dy.shape();
    let (b, c, l) = (s[0], s[1], s[2]);
    let n = (b * l) as f64;
    let (xh, dyd, g) = (cache.xhat.data(), dy.data(), gamma.data());
    let mut dgamma = vec![0.0; c];
    let mut dx = vec![0.0; dyd.len()];
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xh = 0.0;
        for bi in 0..b {
            let off = (bi * c + ch) * l;
            for t in off..off + l {
                sum_dy += dyd[t];
                sum_dy_xh += dyd[t] * xh[t];
            }
        }
        dgamma[ch] = sum_dy_xh;
        let scale = g[ch] * cache.inv_std[ch];
        for bi in 0..b {
            let off = (bi * c + ch) * l;
            for t in off..off + l {
                dx[t] = if cache.batch_stats.is_some() {
                    scale * (dyd[t] - sum_dy / n - xh[t] * sum_dy_xh / n)
                } else {
                    scale * dyd[t]
                };
            }
        }
    }
    (
        Tensor::new(s.to_vec(), dx).expect("shape preserved"),
        Tensor::new(gamma.shape().to_vec(), dgamma).expect("shape preserved"),
    )
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

pub fn leaky_relu_backward(x: &Tensor, slope: f64, dy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Non-overlapping max pooling along the length axis; a trailing remainder
/// shorter than `size` is dropped. Returns the flat input index of each
/// selected maximum (first one on ties).
pub fn max_pool(x: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>)> {
    let (b, c, l) = dims3(x, "max pool input")?;
    let lo = l / size;
    if lo == 0 {
        return Err(Error::InvalidData(format!("length {l} shorter than pool size {size}")));
    }
    let xd = x.data();
    let mut y = Vec::with_capacity(b * c * lo);
    let mut arg = Vec::with_capacity(b * c * lo);
    for row in 0..b * c {
        for t in 0..lo {
            let start = row * l + t * size;
            let mut best = start;
            for idx in start + 1..start + size {
                if xd[idx] > xd[best] {
                    best = idx;
                }
            }
            y.push(xd[best]);
            arg.push(best);
        }
    }
    Ok((Tensor::new(vec![b, c, lo], y)?, arg))
}

pub fn max_pool_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        d[idx] += g;
    }
    dx
}

/// Mean over the length axis: `(B, C, L) → (B, C)`.
pub fn avg_pool(x: &Tensor) -> Result<Tensor> {
    let (b, c, l) = dims3(x, "average pool input")?;
    let inv = 1.0 / l as f64;
    let data = x.data().chunks(l).map(|row| row.iter().sum::<f64>() * inv).collect();
    Tensor::new(vec![b, c], data)
}

pub fn avg_pool_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    let l = input_shape[2];
    let inv = 1.0 / l as f64;
    let data = dy.data().iter().flat_map(|&g| std::iter::repeat(g * inv).take(l)).collect();
    Tensor::new(input_shape.to_vec(), data).expect("shape preserved")
}

/// `y = x Wᵀ` without bias; `w` is `(out, in)`.
pub fn linear(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (b, fi) = dims2(x, "linear input")?;
    let (fo, wfi) = dims2(w, "linear weight")?;
    if wfi != fi {
        return Err(Error::DimensionMismatch { expected: wfi, got: fi });
    }
    let (xd, wd) = (x.data(), w.data());
    let mut y = vec![0.0; b * fo];
    for bi in 0..b {
        let xrow = &xd[bi * fi..(bi + 1) * fi];
        for o in 0..fo {
            let wrow = &wd[o * fi..(o + 1) * fi];
            y[bi * fo + o] = dot(xrow, wrow);
        }
    }
    Tensor::new(vec![b, fo], y)
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor) {
    let (b, fi) = (x.shape()[0], x.shape()[1]);
    let fo = w.shape()[0];
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    for bi in 0..b {
        for o in 0..fo {
            let g = dyd[bi * fo + o];
            for f in 0..fi {
                dx[bi * fi + f] += g * wd[o * fi + f];
                dw[o * fi + f] += g * xd[bi * fi + f];
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("shape preserved"),
        Tensor::new(w.shape().to_vec(), dw).expect("shape preserved"),
    )
}

/// Per-row squared distance `‖y_b − c‖²`.
pub fn row_sq_dist(y: &Tensor, c: &[f64]) -> Result<Vec<f64>> {
    let (_, d) = dims2(y, "embedding")?;
    if d != c.len() {
        return Err(Error::DimensionMismatch {
            expected: c.len(),
            got: d,
        });
    }
    Ok(y.data()
        .chunks(d)
        .map(|row| row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect())
}

/// `(1/B) Σ_b ‖y_b − c‖²`.
pub fn mean_sq_dist(y: &Tensor, c: &[f64]) -> Result<f64> {
    let rows = row_sq_dist(y, c)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

pub fn mean_sq_dist_backward(y: &Tensor, c: &[f64], dl: f64) -> Tensor {
    let b = y.shape()[0];
    let scale = 2.0 * dl / b as f64;
    let d = c.len();
    let data = y
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &v)| scale * (v - c[idx % d]))
        .collect();
    Tensor::new(y.shape().to_vec(), data).expect("shape preserved")
}
