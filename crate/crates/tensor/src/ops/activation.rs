use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Mode, Op, Var};
use crate::rng::RngStream;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

impl<T: Element> Graph<T> {
    /// `max(x, 0)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let data = self
            .data(x)
            .iter()
            .map(|v| if *v > T::zero() { *v } else { T::zero() })
            .collect();
        self.push(self.shape(x).to_vec(), data, Op::Relu(x))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let data = self.data(x).iter().map(|v| T::lit(gelu(v.as_f64()))).collect();
        self.push(self.shape(x).to_vec(), data, Op::Gelu(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| TensorError::Shape {
            op: "softmax",
            detail: "input is a scalar".into(),
        })?;
        let mut data = self.data(x).to_vec();
        for row in data.chunks_mut(d) {
            let mx = row.iter().fold(T::neg_infinity(), |a, b| a.max(*b));
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z = z + *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        self.push(shape, data, Op::Softmax(x))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1−rate)`.
    /// Eval mode and `rate == 0` return `x` unchanged without drawing.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Param {
                op: "dropout",
                detail: format!("rate {rate} outside [0, 1)"),
            });
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.uniform() < rate { T::zero() } else { keep })
            .collect();
        let data = self.data(x).iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        self.push(self.shape(x).to_vec(), data, Op::Dropout { x, mask })
    }
}

pub(super) fn relu_backward<T: Element>(g: &Graph<T>, x: Var, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    let dx = g
        .data(x)
        .iter()
        .zip(gout)
        .map(|(v, go)| if *v > T::zero() { *go } else { T::zero() })
        .collect();
    vec![(x, dx)]
}

pub(super) fn gelu_backward<T: Element>(g: &Graph<T>, x: Var, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    let dx = g
        .data(x)
        .iter()
        .zip(gout)
        .map(|(v, go)| *go * T::lit(gelu_grad(v.as_f64())))
        .collect();
    vec![(x, dx)]
}

pub(super) fn softmax_backward<T: Element>(
    x: Var,
    y: &[T],
    shape: &[usize],
    gout: &[T],
) -> Vec<(Var, Vec<T>)> {
    let d = *shape.last().unwrap();
    let mut dx = vec![T::zero(); y.len()];
    for ((out, yr), gr) in dx.chunks_mut(d).zip(y.chunks(d)).zip(gout.chunks(d)) {
        let s: T = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
        for i in 0..d {
            out[i] = yr[i] * (gr[i] - s);
        }
    }
    vec![(x, dx)]
}

pub(super) fn dropout_backward<T: Element>(x: Var, mask: &[T], gout: &[T]) -> Vec<(Var, Vec<T>)> {
    vec![(x, gout.iter().zip(mask).map(|(g, m)| *g * *m).collect())]
}
