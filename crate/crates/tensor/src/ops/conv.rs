//! Cross-correlation (no kernel flip) in one and two spatial dimensions.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::kernels::{conv_backward, conv_forward, ConvDims};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Padding2d {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding2d {
    pub fn symmetric(ph: usize, pw: usize) -> Self {
        Self {
            top: ph,
            bottom: ph,
            left: pw,
            right: pw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: (usize, usize),
    pub padding: Padding2d,
    pub dilation: (usize, usize),
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: Padding2d::default(),
            dilation: (1, 1),
        }
    }
}

impl Conv2dOptions {
    pub fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Self {
            stride,
            padding: Padding2d::symmetric(padding.0, padding.1),
            dilation: (1, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dOptions {
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub dilation: usize,
}

impl Default for Conv1dOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            pad_left: 0,
            pad_right: 0,
            dilation: 1,
        }
    }
}

impl Conv1dOptions {
    /// Left-only padding of `(kernel-1)·dilation`: output `t` sees inputs `≤ t`
    /// and the length is preserved at stride 1.
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            pad_left: (kernel - 1) * dilation,
            pad_right: 0,
            dilation,
        }
    }

    pub fn strided(stride: usize) -> Self {
        Self {
            stride,
            ..Self::default()
        }
    }
}

fn out_extent(
    op: &'static str,
    axis: usize,
    len: usize,
    pad: usize,
    kernel: usize,
    dilation: usize,
    stride: usize,
) -> Result<usize> {
    if stride == 0 || dilation == 0 {
        return Err(TensorError::Param {
            op,
            detail: format!("stride and dilation must be >= 1 (axis {axis})"),
        });
    }
    let span = dilation * (kernel - 1) + 1;
    let padded = len + pad;
    if span > padded {
        return Err(TensorError::Shape {
            op,
            detail: format!(
                "effective kernel {span} exceeds padded input {padded} on axis {axis}"
            ),
        });
    }
    Ok((padded - span) / stride + 1)
}

impl<T: Element> Graph<T> {
    /// `input [B,Cin,H,W]`, `weight [Cout,Cin,kh,kw]`, `bias [Cout]` →
    /// `[B,Cout,Ho,Wo]` with `Ho = ⌊(H+pt+pb−dh(kh−1)−1)/sh⌋+1`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, opts: Conv2dOptions) -> Result<Var> {
        const OP: &str = "conv2d";
        self.check(x)?;
        self.check(w)?;
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(TensorError::Shape {
                op: OP,
                detail: format!("need 4-D input and weight, got {xs:?} and {ws:?}"),
            });
        }
        if ws[1] != xs[1] {
            return Err(TensorError::Dimension {
                op: OP,
                axis: 1,
                expected: ws[1],
                actual: xs[1],
            });
        }
        let p = opts.padding;
        let ho = out_extent(OP, 2, xs[2], p.top + p.bottom, ws[2], opts.dilation.0, opts.stride.0)?;
        let wo = out_extent(OP, 3, xs[3], p.left + p.right, ws[3], opts.dilation.1, opts.stride.1)?;
        let dims = ConvDims {
            batch: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride: opts.stride,
            dilation: opts.dilation,
            pad_before: (p.top, p.left),
            ho,
            wo,
        };
        self.conv_node(x, w, b, dims, vec![xs[0], ws[0], ho, wo], OP)
    }

    /// `input [B,Cin,L]`, `weight [Cout,Cin,k]` → `[B,Cout,Lo]` with
    /// `Lo = ⌊(L+pl+pr−d(k−1)−1)/s⌋+1`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, opts: Conv1dOptions) -> Result<Var> {
        const OP: &str = "conv1d";
        self.check(x)?;
        self.check(w)?;
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 {
            return Err(TensorError::Shape {
                op: OP,
                detail: format!("need 3-D input and weight, got {xs:?} and {ws:?}"),
            });
        }
        if ws[1] != xs[1] {
            return Err(TensorError::Dimension {
                op: OP,
                axis: 1,
                expected: ws[1],
                actual: xs[1],
            });
        }
        let lo = out_extent(
            OP,
            2,
            xs[2],
            opts.pad_left + opts.pad_right,
            ws[2],
            opts.dilation,
            opts.stride,
        )?;
        let dims = ConvDims {
            batch: xs[0],
            cin: xs[1],
            h: 1,
            w: xs[2],
            cout: ws[0],
            kh: 1,
            kw: ws[2],
            stride: (1, opts.stride),
            dilation: (1, opts.dilation),
            pad_before: (0, opts.pad_left),
            ho: 1,
            wo: lo,
        };
        self.conv_node(x, w, b, dims, vec![xs[0], ws[0], lo], OP)
    }

    fn conv_node(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        dims: ConvDims,
        shape: Vec<usize>,
        op: &'static str,
    ) -> Result<Var> {
        if let Some(b) = b {
            self.check(b)?;
            if self.shape(b) != [dims.cout] {
                return Err(TensorError::Dimension {
                    op,
                    axis: 0,
                    expected: dims.cout,
                    actual: self.shape(b).first().copied().unwrap_or(0),
                });
            }
        }
        let out = conv_forward(self.data(x), self.data(w), b.map(|b| self.data(b)), &dims);
        self.push(shape, out, Op::Conv { x, w, b, dims })
    }
}

pub(super) fn backward<T: Element>(
    g: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    dims: &ConvDims,
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let need = (
        g.requires_grad(x),
        g.requires_grad(w),
        b.is_some_and(|b| g.requires_grad(b)),
    );
    let grads = conv_backward(gout, g.data(x), g.data(w), dims, need);
    let mut res = Vec::with_capacity(3);
    if let Some(dx) = grads.dx {
        res.push((x, dx));
    }
    if let Some(dw) = grads.dw {
        res.push((w, dw));
    }
    if let (Some(b), Some(db)) = (b, grads.db) {
        res.push((b, db));
    }
    res
}
