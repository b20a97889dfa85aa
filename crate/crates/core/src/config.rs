//! Architecture description.
//!
//! [`ModelConfig::default`] is the full-size network (129 channels, 500
//! samples, TCN 64/128/256, 768-wide 12-layer encoder). [`ModelConfig::desk`]
//! is the small variant used by tests and the CLI's default training runs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub remove_pointwise_conv: bool,
    pub remove_temporal_conv: bool,
    pub remove_spatial_conv: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tcn_dropout_override: Option<f64>,
    /// Checkpoint whose `vit.*` tensors seed the encoder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<PathBuf>,
}

impl AblationFlags {
    pub fn removed_count(&self) -> usize {
        [
            self.remove_pointwise_conv,
            self.remove_temporal_conv,
            self.remove_spatial_conv,
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub timepoints: usize,
    pub tcn_channels: Vec<usize>,
    pub tcn_kernel: usize,
    pub tcn_dropout: f64,
    pub tcn_dilation_base: usize,
    pub bridge_filters: usize,
    /// (height, width) of the temporal bridge convolution.
    pub bridge_kernel_temporal: (usize, usize),
    pub bridge_stride_temporal: (usize, usize),
    pub bridge_padding_temporal: (usize, usize),
    pub bridge_kernel_spatial: (usize, usize),
    pub embed_dim: usize,
    pub vit_depth: usize,
    pub vit_heads: usize,
    pub vit_mlp_ratio: f64,
    pub patch_projection_kernel: usize,
    pub patch_projection_stride: usize,
    /// Width of the hidden layer in the two-layer regression head.
    pub head_hidden: usize,
    pub head_dropout: f64,
    pub ablation: AblationFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 129,
            timepoints: 500,
            tcn_channels: vec![64, 128, 256],
            tcn_kernel: 3,
            tcn_dropout: 0.75,
            tcn_dilation_base: 2,
            bridge_filters: 256,
            bridge_kernel_temporal: (1, 36),
            bridge_stride_temporal: (1, 36),
            bridge_padding_temporal: (0, 2),
            bridge_kernel_spatial: (256, 1),
            embed_dim: 768,
            vit_depth: 12,
            vit_heads: 12,
            vit_mlp_ratio: 4.0,
            patch_projection_kernel: 1,
            patch_projection_stride: 1,
            head_hidden: 1000,
            head_dropout: 0.1,
            ablation: AblationFlags::default(),
        }
    }
}

impl ModelConfig {
    /// 64-sample window, TCN 8/16/32, 64-wide 2-layer encoder with 4 heads.
    /// The bridge uses kernel and stride (1, 8) so the 64 samples become
    /// 8 tokens. TCN dropout is 0.1: with only 8 to 32 channels per block
    /// a rate of 0.75 leaves the bridge's batch norm with running
    /// statistics that do not match eval-mode activations, and the model
    /// stops generalizing.
    pub fn desk() -> Self {
        Self {
            timepoints: 64,
            tcn_channels: vec![8, 16, 32],
            tcn_dropout: 0.1,
            bridge_filters: 16,
            bridge_kernel_temporal: (1, 8),
            bridge_stride_temporal: (1, 8),
            bridge_kernel_spatial: (32, 1),
            embed_dim: 64,
            vit_depth: 2,
            vit_heads: 4,
            head_hidden: 64,
            ..Self::default()
        }
    }

    /// Full 500-sample window and bridge geometry (14 tokens) with a narrow
    /// TCN and bridge in front of a 256-wide, 8-layer encoder, so that
    /// encoder cost dominates latency.
    pub fn bench() -> Self {
        Self {
            tcn_channels: vec![8, 16, 32],
            bridge_filters: 16,
            bridge_kernel_spatial: (32, 1),
            embed_dim: 256,
            vit_depth: 8,
            vit_heads: 8,
            head_hidden: 256,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" | "default" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            "bench" => Ok(Self::bench()),
            other => Err(Error::Config(format!(
                "unknown model preset '{other}' (expected full, desk or bench)"
            ))),
        }
    }

    pub fn last_tcn_channels(&self) -> usize {
        self.tcn_channels.last().copied().unwrap_or(0)
    }

    pub fn effective_tcn_dropout(&self) -> f64 {
        self.ablation.tcn_dropout_override.unwrap_or(self.tcn_dropout)
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.vit_mlp_ratio).round() as usize
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.vit_heads.max(1)
    }

    /// Height of the temporal bridge output, which the spatial kernel must
    /// cover exactly.
    pub fn temporal_height(&self) -> Option<usize> {
        conv_out(
            self.last_tcn_channels(),
            self.bridge_kernel_temporal.0,
            self.bridge_stride_temporal.0,
            self.bridge_padding_temporal.0,
        )
    }

    /// Width of the bridge output, i.e. the sequence the patch projection sees.
    pub fn bridge_width(&self) -> Option<usize> {
        conv_out(
            self.timepoints,
            self.bridge_kernel_temporal.1,
            self.bridge_stride_temporal.1,
            self.bridge_padding_temporal.1,
        )
    }

    /// Encoder tokens excluding the class token.
    pub fn token_count(&self) -> Option<usize> {
        token_count(
            self.bridge_width()?,
            self.patch_projection_kernel,
            self.patch_projection_stride,
        )
    }

    pub fn with_patch(mut self, kernel: usize, stride: usize) -> Self {
        self.patch_projection_kernel = kernel;
        self.patch_projection_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.in_channels == 0 || self.timepoints == 0 {
            return bad("in_channels and timepoints must be positive".into());
        }
        if self.tcn_channels.is_empty() || self.tcn_channels.contains(&0) {
            return bad(format!(
                "tcn_channels must be nonempty and positive, got {:?}",
                self.tcn_channels
            ));
        }
        if self.tcn_kernel == 0 || self.tcn_dilation_base == 0 {
            return bad("tcn_kernel and tcn_dilation_base must be at least 1".into());
        }
        for (name, rate) in [
            ("tcn_dropout", Some(self.tcn_dropout)),
            ("head_dropout", Some(self.head_dropout)),
            ("tcn_dropout_override", self.ablation.tcn_dropout_override),
        ] {
            if let Some(r) = rate {
                if !(0.0..1.0).contains(&r) {
                    return bad(format!("{name} {r} outside [0, 1)"));
                }
            }
        }
        if self.ablation.removed_count() > 1 {
            return bad("at most one remove_* ablation flag may be set".into());
        }
        let strides = [self.bridge_stride_temporal.0, self.bridge_stride_temporal.1];
        if self.bridge_filters == 0 || strides.contains(&0) {
            return bad("bridge_filters and bridge strides must be positive".into());
        }
        let (kh, kw) = self.bridge_kernel_temporal;
        let (sh, sw) = self.bridge_kernel_spatial;
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return bad("bridge kernels must be positive".into());
        }
        let Some(height) = self.temporal_height() else {
            return bad(format!(
                "temporal kernel height {kh} does not fit {} TCN channels",
                self.last_tcn_channels()
            ));
        };
        if sh != height || sw != 1 {
            return bad(format!(
                "spatial kernel {:?} must be ({height}, 1) to compress the {height}-row map to one row \
                 (last TCN channel count {})",
                self.bridge_kernel_spatial,
                self.last_tcn_channels()
            ));
        }
        let Some(width) = self.bridge_width() else {
            return bad(format!(
                "temporal output width < 1: {} samples, kernel {kw}, padding {}",
                self.timepoints, self.bridge_padding_temporal.1
            ));
        };
        if self.embed_dim == 0 || self.vit_heads == 0 || self.embed_dim % self.vit_heads != 0 {
            return bad(format!(
                "embed_dim {} must be a positive multiple of vit_heads {}",
                self.embed_dim, self.vit_heads
            ));
        }
        if !(self.vit_mlp_ratio > 0.0) || self.mlp_hidden() == 0 || self.head_hidden == 0 {
            return bad("vit_mlp_ratio and head_hidden must give positive widths".into());
        }
        if self.patch_projection_kernel == 0 || self.patch_projection_stride == 0 {
            return bad("patch projection kernel and stride must be positive".into());
        }
        if self.token_count().is_none() {
            return bad(format!(
                "patch projection (kernel {}, stride {}) yields no tokens from width {width}",
                self.patch_projection_kernel, self.patch_projection_stride
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn conv_out(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = len + 2 * pad;
    if kernel == 0 || stride == 0 || kernel > span {
        return None;
    }
    Some((span - kernel) / stride + 1)
}

/// `floor((width − kernel) / stride) + 1`, or `None` when no window fits.
pub fn token_count(width: usize, kernel: usize, stride: usize) -> Option<usize> {
    conv_out(width, kernel, stride, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_gives_fourteen_tokens() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.bridge_width(), Some(14));
        assert_eq!(c.token_count(), Some(14));
        assert_eq!(c.temporal_height(), Some(256));
    }

    #[test]
    fn presets_validate() {
        for name in ["full", "desk", "bench"] {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(ModelConfig::desk().token_count(), Some(8));
        assert!(ModelConfig::preset("huge").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::desk();
        c.vit_heads = 3;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::desk();
        c.bridge_kernel_spatial = (16, 1);
        assert!(c.validate().is_err());

        let mut c = ModelConfig::desk();
        c.timepoints = 3;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("width"), "{msg}");

        let mut c = ModelConfig::desk();
        c.ablation.remove_spatial_conv = true;
        c.ablation.remove_temporal_conv = true;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::desk();
        c.ablation.tcn_dropout_override = Some(1.0);
        assert!(c.validate().is_err());

        let c = ModelConfig::desk().with_patch(9, 1);
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ModelConfig::desk();
        c.ablation.tcn_dropout_override = Some(0.25);
        let back = ModelConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(ModelConfig::from_toml("nonsense_key = 3").is_err());
    }

    #[test]
    fn token_formula() {
        assert_eq!(token_count(14, 2, 2), Some(7));
        assert_eq!(token_count(14, 4, 4), Some(3));
        assert_eq!(token_count(14, 14, 14), Some(1));
        assert_eq!(token_count(14, 15, 1), None);
    }
}
