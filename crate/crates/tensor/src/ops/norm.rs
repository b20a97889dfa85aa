//! Batch, layer and weight normalization.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Mode, Op, Var};
use crate::kernels::dot;
use crate::parallel;

/// Batch-norm constants: `eps` in the variance denominator and the
/// exponential-average `momentum` for running statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Per-channel running mean and (unbiased) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

fn vector_param<T: Element>(g: &Graph<T>, op: &'static str, v: Var, len: usize) -> Result<()> {
    g.check(v)?;
    if g.shape(v) != [len] {
        return Err(TensorError::Dimension {
            op,
            axis: 0,
            expected: len,
            actual: g.shape(v).first().copied().unwrap_or(0),
        });
    }
    Ok(())
}

impl<T: Element> Graph<T> {
    /// Normalizes `[B, C, ...]` per channel.
    ///
    /// Train mode uses the biased batch variance for normalization and
    /// folds the unbiased estimate into `stats`; it needs `B >= 2`. Eval
    /// mode reads `stats` and leaves them untouched.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: Mode,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        const OP: &str = "batch_norm";
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(TensorError::Shape {
                op: OP,
                detail: format!("need [B, C, ...], got {shape:?}"),
            });
        }
        let (batch, channels) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        vector_param(self, OP, gamma, channels)?;
        vector_param(self, OP, beta, channels)?;
        if stats.mean.len() != channels || stats.var.len() != channels {
            return Err(TensorError::Dimension {
                op: OP,
                axis: 1,
                expected: stats.mean.len(),
                actual: channels,
            });
        }
        let train = mode == Mode::Train;
        if train && batch < 2 {
            return Err(TensorError::BatchTooSmall { op: OP, batch });
        }
        let eps = T::lit(cfg.eps);
        let xd = self.data(x);
        let count = batch * inner;
        let (means, inv_std): (Vec<T>, Vec<T>) = if train {
            let n = T::lit(count as f64);
            let momentum = T::lit(cfg.momentum);
            let moments = parallel::map_range(channels, |c| {
                let mut s = T::zero();
                for b in 0..batch {
                    s = s + xd[(b * channels + c) * inner..][..inner].iter().copied().sum();
                }
                let mean = s / n;
                let mut ss = T::zero();
                for b in 0..batch {
                    for &v in &xd[(b * channels + c) * inner..][..inner] {
                        ss = ss + (v - mean) * (v - mean);
                    }
                }
                (mean, ss / n)
            });
            let unbias = n / T::lit((count - 1) as f64);
            for (c, &(mean, var)) in moments.iter().enumerate() {
                stats.mean[c] = (T::one() - momentum) * stats.mean[c] + momentum * mean;
                stats.var[c] = (T::one() - momentum) * stats.var[c] + momentum * var * unbias;
            }
            moments
                .iter()
                .map(|&(m, v)| (m, T::one() / (v + eps).sqrt()))
                .unzip()
        } else {
            (
                stats.mean.clone(),
                stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect(),
            )
        };
        let mut xhat = vec![T::zero(); xd.len()];
        parallel::for_each_chunk(&mut xhat, inner, |blk, out| {
            let c = blk % channels;
            for (o, v) in out.iter_mut().zip(&xd[blk * inner..][..inner]) {
                *o = (*v - means[c]) * inv_std[c];
            }
        });
        let gd = self.data(gamma);
        let bd = self.data(beta);
        let mut y = vec![T::zero(); xhat.len()];
        for (blk, (out, xh)) in y.chunks_mut(inner).zip(xhat.chunks(inner)).enumerate() {
            let c = blk % channels;
            for (o, v) in out.iter_mut().zip(xh) {
                *o = gd[c] * *v + bd[c];
            }
        }
        self.push(
            shape,
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                channels,
                inner,
                xhat,
                inv_std,
                train,
            },
        )
    }

    /// Normalizes over the last axis with a learned affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        const OP: &str = "layer_norm";
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| TensorError::Shape {
            op: OP,
            detail: "input is a scalar".into(),
        })?;
        vector_param(self, OP, gamma, d)?;
        vector_param(self, OP, beta, d)?;
        let xd = self.data(x);
        let rows = xd.len() / d;
        let nd = T::lit(d as f64);
        let eps = T::lit(eps);
        let inv_std: Vec<T> = parallel::map_range(rows, |r| {
            let row = &xd[r * d..][..d];
            let mean = row.iter().copied().sum::<T>() / nd;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nd;
            T::one() / (var + eps).sqrt()
        });
        let mut xhat = vec![T::zero(); xd.len()];
        parallel::for_each_chunk(&mut xhat, d, |r, out| {
            let row = &xd[r * d..][..d];
            let mean = row.iter().copied().sum::<T>() / nd;
            for (o, v) in out.iter_mut().zip(row) {
                *o = (*v - mean) * inv_std[r];
            }
        });
        let gd = self.data(gamma);
        let bd = self.data(beta);
        let y = xhat
            .chunks(d)
            .flat_map(|row| row.iter().zip(gd.iter().zip(bd)).map(|(v, (g, b))| *g * *v + *b))
            .collect();
        self.push(
            shape,
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// `w = g · v / ‖v‖`, with the norm taken per output channel (axis 0)
    /// over all remaining axes. `g` has shape `[Cout]`.
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Result<Var> {
        const OP: &str = "weight_norm";
        self.check(v)?;
        let shape = self.shape(v).to_vec();
        let cout = *shape.first().ok_or_else(|| TensorError::Shape {
            op: OP,
            detail: "direction tensor is a scalar".into(),
        })?;
        vector_param(self, OP, g, cout)?;
        let vd = self.data(v);
        let fan = vd.len() / cout;
        let norms: Vec<T> = (0..cout)
            .map(|c| {
                let row = &vd[c * fan..][..fan];
                dot(row, row).sqrt()
            })
            .collect();
        if let Some(c) = norms.iter().position(|n| *n == T::zero()) {
            return Err(TensorError::Singular { op: OP, channel: c });
        }
        let gd = self.data(g);
        let w = vd
            .chunks(fan)
            .enumerate()
            .flat_map(|(c, row)| {
                let s = gd[c] / norms[c];
                row.iter().map(move |x| *x * s)
            })
            .collect();
        self.push(shape, w, Op::WeightNorm { v, g, norms })
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn batch_norm_backward<T: Element>(
    g: &Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    channels: usize,
    inner: usize,
    xhat: &[T],
    inv_std: &[T],
    train: bool,
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let batch = xhat.len() / (channels * inner);
    let sums = parallel::map_range(channels, |c| {
        let mut sdy = T::zero();
        let mut sdyx = T::zero();
        for b in 0..batch {
            let off = (b * channels + c) * inner;
            for (dy, xh) in gout[off..][..inner].iter().zip(&xhat[off..][..inner]) {
                sdy = sdy + *dy;
                sdyx = sdyx + *dy * *xh;
            }
        }
        (sdy, sdyx)
    });
    let gd = g.data(gamma);
    let mut res = Vec::with_capacity(3);
    if g.requires_grad(x) {
        let n = T::lit((batch * inner) as f64);
        let mut dx = vec![T::zero(); xhat.len()];
        parallel::for_each_chunk(&mut dx, inner, |blk, out| {
            let c = blk % channels;
            let off = blk * inner;
            let dy = &gout[off..][..inner];
            if train {
                let (sdy, sdyx) = sums[c];
                let k = gd[c] * inv_std[c] / n;
                for ((o, d), xh) in out.iter_mut().zip(dy).zip(&xhat[off..][..inner]) {
                    *o = k * (n * *d - sdy - *xh * sdyx);
                }
            } else {
                let k = gd[c] * inv_std[c];
                for (o, d) in out.iter_mut().zip(dy) {
                    *o = k * *d;
                }
            }
        });
        res.push((x, dx));
    }
    res.push((gamma, sums.iter().map(|s| s.1).collect()));
    res.push((beta, sums.iter().map(|s| s.0).collect()));
    res
}

pub(super) fn layer_norm_backward<T: Element>(
    g: &Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: &[T],
    inv_std: &[T],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let gd = g.data(gamma);
    let d = gd.len();
    let nd = T::lit(d as f64);
    let mut res = Vec::with_capacity(3);
    if g.requires_grad(x) {
        let mut dx = vec![T::zero(); xhat.len()];
        parallel::for_each_chunk(&mut dx, d, |r, out| {
            let dy = &gout[r * d..][..d];
            let xh = &xhat[r * d..][..d];
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for i in 0..d {
                let dxh = dy[i] * gd[i];
                s1 = s1 + dxh;
                s2 = s2 + dxh * xh[i];
            }
            for i in 0..d {
                out[i] = inv_std[r] / nd * (nd * dy[i] * gd[i] - s1 - xh[i] * s2);
            }
        });
        res.push((x, dx));
    }
    let mut dg = vec![T::zero(); d];
    let mut db = vec![T::zero(); d];
    for (dy, xh) in gout.chunks(d).zip(xhat.chunks(d)) {
        for i in 0..d {
            dg[i] = dg[i] + dy[i] * xh[i];
            db[i] = db[i] + dy[i];
        }
    }
    res.push((gamma, dg));
    res.push((beta, db));
    res
}

pub(super) fn weight_norm_backward<T: Element>(
    g: &Graph<T>,
    v: Var,
    gain: Var,
    norms: &[T],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let vd = g.data(v);
    let gd = g.data(gain);
    let cout = norms.len();
    let fan = vd.len() / cout;
    let mut dv = vec![T::zero(); vd.len()];
    let mut dg = vec![T::zero(); cout];
    for c in 0..cout {
        let row = &vd[c * fan..][..fan];
        let dw = &gout[c * fan..][..fan];
        let n = norms[c];
        // s = <dw, v/n>
        let s = dot(dw, row) / n;
        dg[c] = s;
        let k = gd[c] / n;
        for ((o, d), x) in dv[c * fan..][..fan].iter_mut().zip(dw).zip(row) {
            *o = k * (*d - *x / n * s);
        }
    }
    vec![(v, dv), (gain, dg)]
}
