use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::kernels::{axpy, dot};
use crate::parallel;

impl<T: Element> Graph<T> {
    /// Scaled dot-product attention over `[B, h, T, d]` tensors:
    /// `softmax(q·kᵀ/√d)·v`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        const OP: &str = "attention";
        for x in [q, k, v] {
            self.check(x)?;
        }
        let qs = self.shape(q).to_vec();
        if qs.len() != 4 {
            return Err(TensorError::Shape {
                op: OP,
                detail: format!("need [B, h, T, d], got {qs:?}"),
            });
        }
        for other in [k, v] {
            let os = self.shape(other);
            if os.len() != 4 {
                return Err(TensorError::Shape {
                    op: OP,
                    detail: format!("need [B, h, T, d], got {os:?}"),
                });
            }
            if let Some(axis) = (0..4).find(|&a| os[a] != qs[a]) {
                return Err(TensorError::Dimension {
                    op: OP,
                    axis,
                    expected: qs[axis],
                    actual: os[axis],
                });
            }
        }
        let [b, h, t, d] = [qs[0], qs[1], qs[2], qs[3]];
        let scale = T::one() / T::lit(d as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let heads = parallel::map_range(b * h, |bh| {
            let qh = &qd[bh * t * d..][..t * d];
            let kh = &kd[bh * t * d..][..t * d];
            let vh = &vd[bh * t * d..][..t * d];
            let mut p = vec![T::zero(); t * t];
            let mut o = vec![T::zero(); t * d];
            for i in 0..t {
                let row = &mut p[i * t..][..t];
                let qi = &qh[i * d..][..d];
                let mut mx = T::neg_infinity();
                for j in 0..t {
                    row[j] = dot(qi, &kh[j * d..][..d]) * scale;
                    mx = mx.max(row[j]);
                }
                let mut z = T::zero();
                for r in row.iter_mut() {
                    *r = (*r - mx).exp();
                    z = z + *r;
                }
                for r in row.iter_mut() {
                    *r = *r / z;
                }
                let oi = &mut o[i * d..][..d];
                for j in 0..t {
                    axpy(row[j], &vh[j * d..][..d], oi);
                }
            }
            (p, o)
        });
        let mut probs = Vec::with_capacity(b * h * t * t);
        let mut out = Vec::with_capacity(b * h * t * d);
        for (p, o) in heads {
            probs.extend_from_slice(&p);
            out.extend_from_slice(&o);
        }
        self.push(
            qs,
            out,
            Op::Attention {
                q,
                k,
                v,
                probs,
                dims: [b, h, t, d],
            },
        )
    }
}

pub(super) fn backward<T: Element>(
    g: &Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    probs: &[T],
    dims: [usize; 4],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let [b, h, t, d] = dims;
    let scale = T::one() / T::lit(d as f64).sqrt();
    let (qd, kd, vd) = (g.data(q), g.data(k), g.data(v));
    let heads = parallel::map_range(b * h, |bh| {
        let qh = &qd[bh * t * d..][..t * d];
        let kh = &kd[bh * t * d..][..t * d];
        let vh = &vd[bh * t * d..][..t * d];
        let p = &probs[bh * t * t..][..t * t];
        let go = &gout[bh * t * d..][..t * d];
        let mut dq = vec![T::zero(); t * d];
        let mut dk = vec![T::zero(); t * d];
        let mut dv = vec![T::zero(); t * d];
        let mut ds = vec![T::zero(); t];
        for i in 0..t {
            let pi = &p[i * t..][..t];
            let goi = &go[i * d..][..d];
            // dP[i,j] = <dO_i, v_j>; dS = P ⊙ (dP − Σ_j P dP)
            let mut inner = T::zero();
            for j in 0..t {
                ds[j] = dot(goi, &vh[j * d..][..d]);
                inner = inner + pi[j] * ds[j];
            }
            for j in 0..t {
                ds[j] = pi[j] * (ds[j] - inner) * scale;
                axpy(pi[j], goi, &mut dv[j * d..][..d]);
                axpy(ds[j], &kh[j * d..][..d], &mut dq[i * d..][..d]);
                axpy(ds[j], &qh[i * d..][..d], &mut dk[j * d..][..d]);
            }
        }
        (dq, dk, dv)
    });
    let n = b * h * t * d;
    let mut gq = Vec::with_capacity(n);
    let mut gk = Vec::with_capacity(n);
    let mut gv = Vec::with_capacity(n);
    for (a, bb, c) in heads {
        gq.extend_from_slice(&a);
        gk.extend_from_slice(&bb);
        gv.extend_from_slice(&c);
    }
    vec![(q, gq), (k, gk), (v, gv)]
}
