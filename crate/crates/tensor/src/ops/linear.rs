use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::kernels::{axpy, dot};
use crate::parallel;

impl<T: Element> Graph<T> {
    /// Affine map over the last axis: `x[..., n] · wᵀ + b`, `w` is `[m, n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 {
            return Err(TensorError::Shape {
                op: "linear",
                detail: format!("weight must be [out, in], got {ws:?}"),
            });
        }
        let (m, n) = (ws[0], ws[1]);
        let last = *xs.last().ok_or_else(|| TensorError::Shape {
            op: "linear",
            detail: "input is a scalar".into(),
        })?;
        if last != n {
            return Err(TensorError::Dimension {
                op: "linear",
                axis: xs.len() - 1,
                expected: n,
                actual: last,
            });
        }
        if let Some(b) = b {
            self.check(b)?;
            if self.shape(b) != [m] {
                return Err(TensorError::Dimension {
                    op: "linear",
                    axis: 0,
                    expected: m,
                    actual: self.shape(b).first().copied().unwrap_or(0),
                });
            }
        }
        let rows = self.value(x).numel() / n;
        let xd = self.data(x);
        let wd = self.data(w);
        let bd = b.map(|b| self.data(b));
        let mut out = vec![T::zero(); rows * m];
        parallel::for_each_chunk(&mut out, m, |r, orow| {
            let xr = &xd[r * n..][..n];
            for (j, o) in orow.iter_mut().enumerate() {
                *o = dot(xr, &wd[j * n..][..n]) + bd.map_or(T::zero(), |bb| bb[j]);
            }
        });
        let mut shape = xs;
        *shape.last_mut().unwrap() = m;
        self.push(
            shape,
            out,
            Op::Linear {
                x,
                w,
                b,
                rows,
                n,
                m,
            },
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<T: Element>(
    g: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    rows: usize,
    n: usize,
    m: usize,
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let xd = g.data(x);
    let wd = g.data(w);
    let mut res = Vec::with_capacity(3);
    if g.requires_grad(x) {
        let mut dx = vec![T::zero(); rows * n];
        parallel::for_each_chunk(&mut dx, n, |r, dxr| {
            for (j, &gv) in gout[r * m..][..m].iter().enumerate() {
                axpy(gv, &wd[j * n..][..n], dxr);
            }
        });
        res.push((x, dx));
    }
    if g.requires_grad(w) {
        let mut dw = vec![T::zero(); m * n];
        parallel::for_each_chunk(&mut dw, n, |j, dwr| {
            for r in 0..rows {
                axpy(gout[r * m + j], &xd[r * n..][..n], dwr);
            }
        });
        res.push((w, dw));
    }
    if let Some(b) = b.filter(|b| g.requires_grad(*b)) {
        let mut db = vec![T::zero(); m];
        for r in 0..rows {
            for (d, gv) in db.iter_mut().zip(&gout[r * m..][..m]) {
                *d = *d + *gv;
            }
        }
        res.push((b, db));
    }
    res
}
