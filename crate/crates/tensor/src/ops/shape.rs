//! Elementwise arithmetic, reductions and layout operations.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};

fn same_shape<T: Element>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    g.check(a)?;
    g.check(b)?;
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa != sb {
        return Err(TensorError::Shape {
            op,
            detail: format!("operands have shapes {sa:?} and {sb:?}"),
        });
    }
    Ok(())
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_data<T: Copy>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = shape.len();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..data.len() {
        out.push(data[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += src[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

impl<T: Element> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "add", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| *x + *y).collect();
        self.push(self.shape(a).to_vec(), data, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "sub", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| *x - *y).collect();
        self.push(self.shape(a).to_vec(), data, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "mul", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| *x * *y).collect();
        self.push(self.shape(a).to_vec(), data, Op::Mul(a, b))
    }

    /// `a + b` where `b` is repeated over the leading axes of `a`.
    ///
    /// After dropping leading unit axes, `b`'s shape must equal the trailing
    /// axes of `a` (e.g. `[1, T, E]` onto `[B, T, E]`).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let sa = self.shape(a);
        let sb = self.shape(b);
        let core: Vec<usize> = sb.iter().copied().skip_while(|&d| d == 1).collect();
        let fits = core.len() <= sa.len() && sa[sa.len() - core.len()..] == core[..];
        if !fits {
            return Err(TensorError::Shape {
                op: "add_broadcast",
                detail: format!("{sb:?} does not broadcast onto {sa:?}"),
            });
        }
        let bd = self.data(b);
        let bn = bd.len();
        let data = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, x)| *x + bd[i % bn])
            .collect();
        self.push(sa.to_vec(), data, Op::AddBroadcast(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.check(x)?;
        let data = self.data(x).iter().map(|v| *v * c).collect();
        self.push(self.shape(x).to_vec(), data, Op::Scale(x, c))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(TensorError::Shape {
                op: "reshape",
                detail: format!("cannot view {:?} as {shape:?}", self.shape(x)),
            });
        }
        let data = self.data(x).to_vec();
        self.push(shape.to_vec(), data, Op::Reshape(x))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm.iter().all(|&p| p < shape.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(TensorError::Param {
                op: "permute",
                detail: format!("{perm:?} is not a permutation of {} axes", shape.len()),
            });
        }
        let data = permute_data(self.data(x), &shape, perm);
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        self.push(
            out_shape,
            data,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        )
    }

    /// Repeats a tensor with leading axis 1 `times` times along that axis.
    pub fn expand(&mut self, x: Var, times: usize) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        if shape.first() != Some(&1) || times == 0 {
            return Err(TensorError::Shape {
                op: "expand",
                detail: format!("need a leading unit axis and times > 0, got {shape:?} x{times}"),
            });
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(src.len() * times);
        for _ in 0..times {
            data.extend_from_slice(src);
        }
        let mut out_shape = shape;
        out_shape[0] = times;
        self.push(out_shape, data, Op::Expand { x, times })
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| TensorError::Param {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        for v in inputs {
            self.check(*v)?;
        }
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Param {
                op: "concat",
                detail: format!("axis {axis} out of range for rank {}", base.len()),
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            if s.len() != base.len() {
                return Err(TensorError::Shape {
                    op: "concat",
                    detail: format!("rank mismatch {s:?} vs {base:?}"),
                });
            }
            for (ax, (&a, &b)) in s.iter().zip(&base).enumerate() {
                if ax != axis && a != b {
                    return Err(TensorError::Dimension {
                        op: "concat",
                        axis: ax,
                        expected: b,
                        actual: a,
                    });
                }
            }
            total += s[axis];
        }
        let (outer, _, inner) = around(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis] * inner;
                data.extend_from_slice(&self.data(*v)[o * len..][..len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(
            shape,
            data,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::Param {
                op: "narrow",
                detail: format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            });
        }
        let (outer, extent, inner) = around(&shape, axis);
        let src = self.data(x);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * extent + start) * inner..][..len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(out_shape, data, Op::Narrow { x, axis, start })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.data(x).iter().copied().sum();
        self.push(Vec::new(), vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let n = T::lit(self.value(x).numel() as f64);
        let s: T = self.data(x).iter().copied().sum();
        self.push(Vec::new(), vec![s / n], Op::Mean(x))
    }

    /// Mean of squared differences over every element.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape(self, "mse_loss", pred, target)?;
        let n = T::lit(self.value(pred).numel() as f64);
        let s: T = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(p, t)| (*p - *t) * (*p - *t))
            .sum();
        self.push(Vec::new(), vec![s / n], Op::MseLoss { pred, target })
    }
}

pub(super) fn add_backward<T: Element>(a: Var, b: Var, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    vec![(a, gout.to_vec()), (b, gout.to_vec())]
}

pub(super) fn sub_backward<T: Element>(a: Var, b: Var, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    vec![(a, gout.to_vec()), (b, gout.iter().map(|v| -*v).collect())]
}

pub(super) fn mul_backward<T: Element>(g: &Graph<T>, a: Var, b: Var, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    let (da, db) = (g.data(a), g.data(b));
    vec![
        (a, gout.iter().zip(db).map(|(go, y)| *go * *y).collect()),
        (b, gout.iter().zip(da).map(|(go, x)| *go * *x).collect()),
    ]
}

pub(super) fn add_broadcast_backward<T: Element>(
    g: &Graph<T>,
    a: Var,
    b: Var,
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let bn = g.value(b).numel();
    let mut db = vec![T::zero(); bn];
    for (i, v) in gout.iter().enumerate() {
        db[i % bn] = db[i % bn] + *v;
    }
    vec![(a, gout.to_vec()), (b, db)]
}

pub(super) fn permute_backward<T: Element>(
    x: Var,
    perm: &[usize],
    out_shape: &[usize],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    vec![(x, permute_data(gout, out_shape, &inv))]
}

pub(super) fn expand_backward<T: Element>(x: Var, times: usize, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    let n = gout.len() / times;
    let mut dx = gout[..n].to_vec();
    for t in 1..times {
        for (a, v) in dx.iter_mut().zip(&gout[t * n..][..n]) {
            *a = *a + *v;
        }
    }
    vec![(x, dx)]
}

pub(super) fn concat_backward<T: Element>(
    g: &Graph<T>,
    inputs: &[Var],
    axis: usize,
    out_shape: &[usize],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let (outer, total, inner) = around(out_shape, axis);
    let mut offset = 0;
    let mut res = Vec::with_capacity(inputs.len());
    for v in inputs {
        let ext = g.shape(*v)[axis];
        let mut d = Vec::with_capacity(outer * ext * inner);
        for o in 0..outer {
            d.extend_from_slice(&gout[(o * total + offset) * inner..][..ext * inner]);
        }
        offset += ext;
        res.push((*v, d));
    }
    res
}

pub(super) fn narrow_backward<T: Element>(
    g: &Graph<T>,
    x: Var,
    axis: usize,
    start: usize,
    out_shape: &[usize],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let (outer, extent, inner) = around(g.shape(x), axis);
    let len = out_shape[axis];
    let mut dx = vec![T::zero(); outer * extent * inner];
    for o in 0..outer {
        dx[(o * extent + start) * inner..][..len * inner]
            .copy_from_slice(&gout[o * len * inner..][..len * inner]);
    }
    vec![(x, dx)]
}

pub(super) fn mse_backward<T: Element>(
    g: &Graph<T>,
    pred: Var,
    target: Var,
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let n = T::lit(g.value(pred).numel() as f64);
    let c = T::lit(2.0) * gout[0] / n;
    let dp: Vec<T> = g
        .data(pred)
        .iter()
        .zip(g.data(target))
        .map(|(p, t)| c * (*p - *t))
        .collect();
    let dt = dp.iter().map(|v| -*v).collect();
    vec![(pred, dp), (target, dt)]
}
