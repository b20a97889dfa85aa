//! Central-difference gradient checking in 64-bit.
//!
//! The numeric derivative of coordinate `x` is
//! `(f(x+eps) − f(x−eps)) / 2eps` and it is compared with the analytic one
//! by `|a − n| / max(|a|, |n|, 1e−8)`. Callers keep inputs away from
//! non-differentiable points (the ReLU kink at 0 is a documented
//! exclusion) or filter coordinates with [`GradCheckOptions::skip`].

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

pub struct GradCheckOptions<'a> {
    pub eps: f64,
    /// Check at most this many coordinates per input, chosen at random.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// `skip(input, coordinate, value)` excludes a coordinate.
    pub skip: Option<&'a dyn Fn(usize, usize, f64) -> bool>,
}

impl Default for GradCheckOptions<'_> {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_coords: None,
            seed: 0,
            skip: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Worst `(input, coordinate)`.
    pub worst: Option<(usize, usize)>,
    pub per_input: Vec<f64>,
    pub checked: usize,
}

/// Checks every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    grad_check_with(
        f,
        inputs,
        &GradCheckOptions {
            eps,
            ..GradCheckOptions::default()
        },
    )
}

pub fn grad_check_with<F>(
    f: F,
    inputs: &[Tensor<f64>],
    opts: &GradCheckOptions<'_>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out)
            .item()
            .ok_or_else(|| TensorError::Contract("grad_check needs a scalar function".into()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            g.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut rng = RngStream::new(opts.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        per_input: vec![0.0; inputs.len()],
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut coords: Vec<usize> = (0..input.numel()).collect();
        if let Some(m) = opts.max_coords.filter(|&m| m < coords.len()) {
            rng.shuffle(&mut coords);
            coords.truncate(m);
            coords.sort_unstable();
        }
        for j in coords {
            let x0 = input.data()[j];
            if opts.skip.is_some_and(|s| s(i, j, x0)) {
                continue;
            }
            work[i].data_mut()[j] = x0 + opts.eps;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = x0 - opts.eps;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let err = relative_error(analytic[i][j], numeric);
            report.checked += 1;
            report.per_input[i] = report.per_input[i].max(err);
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}
