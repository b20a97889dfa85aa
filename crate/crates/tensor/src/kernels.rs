//! Dense inner loops shared by the graph operations.

use crate::element::Element;
use crate::parallel;

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ac = a.chunks_exact(8);
    let bc = b.chunks_exact(8);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ar.iter().zip(br) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Element>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Geometry of a 2-D convolution; 1-D convolutions use `h = kh = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    /// Top and left padding; bottom/right only affect the output extent.
    pub pad_before: (usize, usize),
    pub ho: usize,
    pub wo: usize,
}

impl ConvDims {
    /// Columns of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.ho * self.wo
    }

    pub fn input_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn output_len(&self) -> usize {
        self.cout * self.ho * self.wo
    }

    #[inline]
    fn source(&self, oh: usize, ow: usize, i: usize, j: usize) -> Option<(usize, usize)> {
        let y = (oh * self.stride.0 + i * self.dilation.0) as isize - self.pad_before.0 as isize;
        let x = (ow * self.stride.1 + j * self.dilation.1) as isize - self.pad_before.1 as isize;
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

/// Unfolds one sample into a `[positions, patch_len]` row-major matrix.
pub fn im2col<T: Element>(x: &[T], d: &ConvDims) -> Vec<T> {
    let k = d.patch_len();
    let mut cols = vec![T::zero(); d.positions() * k];
    for oh in 0..d.ho {
        for ow in 0..d.wo {
            let row = &mut cols[(oh * d.wo + ow) * k..][..k];
            for ci in 0..d.cin {
                for i in 0..d.kh {
                    for j in 0..d.kw {
                        if let Some((y, xx)) = d.source(oh, ow, i, j) {
                            row[(ci * d.kh + i) * d.kw + j] = x[(ci * d.h + y) * d.w + xx];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto one sample.
pub fn col2im<T: Element>(cols: &[T], d: &ConvDims, dx: &mut [T]) {
    let k = d.patch_len();
    for oh in 0..d.ho {
        for ow in 0..d.wo {
            let row = &cols[(oh * d.wo + ow) * k..][..k];
            for ci in 0..d.cin {
                for i in 0..d.kh {
                    for j in 0..d.kw {
                        if let Some((y, xx)) = d.source(oh, ow, i, j) {
                            let dst = &mut dx[(ci * d.h + y) * d.w + xx];
                            *dst = *dst + row[(ci * d.kh + i) * d.kw + j];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward<T: Element>(x: &[T], w: &[T], bias: Option<&[T]>, d: &ConvDims) -> Vec<T> {
    let k = d.patch_len();
    let p = d.positions();
    let mut out = vec![T::zero(); d.batch * d.output_len()];
    parallel::for_each_chunk(&mut out, d.output_len(), |b, ob| {
        let cols = im2col(&x[b * d.input_len()..][..d.input_len()], d);
        for co in 0..d.cout {
            let wr = &w[co * k..][..k];
            let b0 = bias.map_or(T::zero(), |bb| bb[co]);
            let orow = &mut ob[co * p..][..p];
            for (pi, o) in orow.iter_mut().enumerate() {
                *o = dot(wr, &cols[pi * k..][..k]) + b0;
            }
        }
    });
    out
}

pub struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub fn conv_backward<T: Element>(
    gout: &[T],
    x: &[T],
    w: &[T],
    d: &ConvDims,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let k = d.patch_len();
    let p = d.positions();
    let olen = d.output_len();

    let dw = need.1.then(|| {
        let cols = parallel::map_range(d.batch, |b| {
            im2col(&x[b * d.input_len()..][..d.input_len()], d)
        });
        let mut dw = vec![T::zero(); d.cout * k];
        parallel::for_each_chunk(&mut dw, k, |co, row| {
            for (b, cb) in cols.iter().enumerate() {
                let g = &gout[b * olen + co * p..][..p];
                for (pi, &gv) in g.iter().enumerate() {
                    if gv != T::zero() {
                        axpy(gv, &cb[pi * k..][..k], row);
                    }
                }
            }
        });
        dw
    });

    let db = need.2.then(|| {
        (0..d.cout)
            .map(|co| {
                let mut s = T::zero();
                for b in 0..d.batch {
                    for &gv in &gout[b * olen + co * p..][..p] {
                        s = s + gv;
                    }
                }
                s
            })
            .collect()
    });

    let dx = need.0.then(|| {
        let mut dx = vec![T::zero(); d.batch * d.input_len()];
        parallel::for_each_chunk(&mut dx, d.input_len(), |b, dxb| {
            let mut dcols = vec![T::zero(); p * k];
            let gb = &gout[b * olen..][..olen];
            for co in 0..d.cout {
                let wr = &w[co * k..][..k];
                for pi in 0..p {
                    let gv = gb[co * p + pi];
                    if gv != T::zero() {
                        axpy(gv, wr, &mut dcols[pi * k..][..k]);
                    }
                }
            }
            col2im(&dcols, d, dxb);
        });
        dx
    });

    ConvGrads { dx, dw, db }
}
