//! Analytic FLOP counts (one multiply-add = 2 FLOPs).
//!
//! * convolution: `2 · Cout · Cin · kh · kw · Ho · Wo · B`
//! * linear `m × n` with bias: `(2mn + m)` per row
//! * attention: `2 · B · h · S² · d` for the scores plus the same for the
//!   weighted values, i.e. `4 · B · E · S²` with `S = N + 1` positions
//!
//! Fixed substitutes for ablated convolutions are counted like the layers
//! they replace, since they execute the same kernel. Normalizations,
//! activations and softmax are not counted.

use crate::config::ModelConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerFlops {
    pub name: String,
    pub flops: u64,
}

/// Encoder attention products split by power of the token count `N`:
/// `4BE(N + 1)² · depth = quadratic + linear + constant`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionFlops {
    pub quadratic: u64,
    pub linear: u64,
    pub constant: u64,
}

impl AttentionFlops {
    pub fn total(&self) -> u64 {
        self.quadratic + self.linear + self.constant
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlopReport {
    pub layers: Vec<LayerFlops>,
    pub attention: AttentionFlops,
    pub tokens: usize,
    pub total: u64,
}

pub fn conv_flops(cout: usize, cin: usize, kh: usize, kw: usize, ho: usize, wo: usize, batch: usize) -> u64 {
    2 * [cout, cin, kh, kw, ho, wo, batch].iter().map(|v| *v as u64).product::<u64>()
}

pub fn linear_flops(m: usize, n: usize, rows: usize) -> u64 {
    let (m, n) = (m as u64, n as u64);
    (2 * m * n + m) * rows as u64
}

pub fn estimate_flops(config: &ModelConfig, batch: usize) -> Result<FlopReport> {
    config.validate()?;
    let c = config;
    let b = batch;
    let t = c.timepoints;
    let mut layers = Vec::new();
    let mut push = |name: String, flops: u64| layers.push(LayerFlops { name, flops });

    let mut cin = c.in_channels;
    for (i, &cout) in c.tcn_channels.iter().enumerate() {
        push(format!("tcn.block{i}.conv1"), conv_flops(cout, cin, 1, c.tcn_kernel, 1, t, b));
        push(format!("tcn.block{i}.conv2"), conv_flops(cout, cout, 1, c.tcn_kernel, 1, t, b));
        if cin != cout {
            push(format!("tcn.block{i}.downsample"), conv_flops(cout, cin, 1, 1, 1, t, b));
        }
        cin = cout;
    }

    let f = c.bridge_filters;
    let e = c.embed_dim;
    let h = c.temporal_height().expect("validated");
    let w = c.bridge_width().expect("validated");
    let (kh, kw) = c.bridge_kernel_temporal;
    push("bridge.temporal".into(), conv_flops(f, 1, kh, kw, h, w, b));
    push("bridge.spatial".into(), conv_flops(e, f, c.bridge_kernel_spatial.0, 1, 1, w, b));

    let n = c.token_count().expect("validated");
    push("vit.patch".into(), conv_flops(e, e, 1, c.patch_projection_kernel, 1, n, b));
    let s = n + 1;
    let rows = b * s;
    let mlp = c.mlp_hidden();
    let (eb, n64) = ((e * b) as u64, n as u64);
    let attention = AttentionFlops {
        quadratic: 4 * eb * n64 * n64 * c.vit_depth as u64,
        linear: 8 * eb * n64 * c.vit_depth as u64,
        constant: 4 * eb * c.vit_depth as u64,
    };
    for l in 0..c.vit_depth {
        for p in ["q", "k", "v"] {
            push(format!("vit.layer{l}.attn.{p}"), linear_flops(e, e, rows));
        }
        push(format!("vit.layer{l}.attn.scores"), 2 * (b * e * s * s) as u64);
        push(format!("vit.layer{l}.attn.values"), 2 * (b * e * s * s) as u64);
        push(format!("vit.layer{l}.attn.proj"), linear_flops(e, e, rows));
        push(format!("vit.layer{l}.mlp.fc1"), linear_flops(mlp, e, rows));
        push(format!("vit.layer{l}.mlp.fc2"), linear_flops(e, mlp, rows));
    }
    push("head.fc1".into(), linear_flops(c.head_hidden, e, b));
    push("head.fc2".into(), linear_flops(2, c.head_hidden, b));

    let total = layers.iter().map(|l| l.flops).sum();
    Ok(FlopReport {
        layers,
        attention,
        tokens: n,
        total,
    })
}

impl FlopReport {
    /// Sum of the attention score and value products over all layers.
    pub fn attention_products(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.name.ends_with(".attn.scores") || l.name.ends_with(".attn.values"))
            .map(|l| l.flops)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_definition() {
        assert_eq!(linear_flops(3, 5, 1), 2 * 3 * 5 + 3);
    }

    #[test]
    fn attention_terms_add_up() {
        let r = estimate_flops(&ModelConfig::bench(), 2).unwrap();
        assert_eq!(r.attention.total(), r.attention_products());
    }

    #[test]
    fn quadratic_term_quadruples_when_tokens_double() {
        let base = ModelConfig::bench();
        let a = estimate_flops(&base.clone().with_patch(1, 1), 1).unwrap();
        let b = estimate_flops(&base.with_patch(2, 2), 1).unwrap();
        assert_eq!((a.tokens, b.tokens), (14, 7));
        assert_eq!(a.attention.quadratic, 4 * b.attention.quadratic);
    }
}
