//! The network: TCN stack, convolutional bridge, transformer encoder and
//! regression head.
//!
//! Parameters live in an ordered map under stable names:
//!
//! | name | shape |
//! |---|---|
//! | `tcn.block{i}.conv{j}.v` | `[Cout, Cin, k]` (direction, weight-normalized) |
//! | `tcn.block{i}.conv{j}.g` | `[Cout]` (per-channel magnitude) |
//! | `tcn.block{i}.conv{j}.bias` | `[Cout]` |
//! | `tcn.block{i}.downsample.{weight,bias}` | `[Cout, Cin, 1]`, `[Cout]` when `Cin != Cout` |
//! | `bridge.temporal.weight` | `[F, 1, kh, kw]` |
//! | `bridge.bn.{gamma,beta}` | `[F]` |
//! | `bridge.spatial.{weight,bias}` | `[E, F, H, 1]`, `[E]` |
//! | `vit.patch.{weight,bias}` | `[E, E, k]`, `[E]` |
//! | `vit.cls_token`, `vit.pos_embed` | `[1, 1, E]`, `[1, N + 1, E]` |
//! | `vit.layer{i}.ln{1,2}.{gamma,beta}` | `[E]` |
//! | `vit.layer{i}.attn.{q,k,v,proj}.{weight,bias}` | `[E, E]`, `[E]` |
//! | `vit.layer{i}.mlp.fc1.*`, `.fc2.*` | `[M, E]`, `[M]`, `[E, M]`, `[E]` |
//! | `vit.ln_final.{gamma,beta}` | `[E]` |
//! | `head.fc1.*`, `head.fc2.*` | `[D, E]`, `[D]`, `[2, D]`, `[2]` |
//!
//! The batch-norm running statistics are buffers, exported as
//! `bridge.bn.running_mean` and `bridge.bn.running_var` but not counted as
//! parameters.
//!
//! A removed ablation stage keeps its output shape by substituting a
//! fixed weight: the temporal conv becomes an average over its window,
//! the spatial conv a mean over height broadcast to `E` channels
//! (`f = e mod F`), and the patch projection an average over each patch.
//!
//! Initialization: conv and linear weights are uniform in `±1/√fan_in`,
//! biases zero, `g = ‖v‖` so weight norm starts as the identity
//! reparameterization, norms start at unit scale, and the class token and
//! position embedding are normal with σ = 0.02 truncated at 2σ. Every
//! tensor draws from its own stream keyed by its name.

use eegvit_tensor::{
    BatchNormConfig, Conv1dOptions, Conv2dOptions, Element, Graph, Mode, RngStream, RunningStats,
    Tensor, Var,
};
use indexmap::IndexMap;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::ModelConfig;
use crate::error::{Error, Result};

pub const BN_RUNNING_MEAN: &str = "bridge.bn.running_mean";
pub const BN_RUNNING_VAR: &str = "bridge.bn.running_var";
/// Prefix of the tensors a warm start imports.
pub const ENCODER_PREFIX: &str = "vit.";
/// Prefix of auxiliary tensors (such as target scaling) that travel with
/// the weights; imports skip them.
pub const META_PREFIX: &str = "meta.";

const LN_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Model<T: Element = f32> {
    config: ModelConfig,
    params: IndexMap<String, Tensor<T>>,
    running: RunningStats<T>,
}

/// Graph handles for every parameter of a model, in parameter order.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: Vec<Var>,
}

impl Bindings {
    /// Handles supplied by the caller, one per parameter in parameter
    /// order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

enum Init {
    Zeros,
    Ones,
    FanIn(usize),
    TruncNormal,
}

fn name_key(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl<T: Element> Model<T> {
    /// Builds and initializes a model. When the config names a warm-start
    /// checkpoint its encoder tensors are imported; the head stays fresh.
    pub fn build(config: ModelConfig, rng: &RngStream) -> Result<Self> {
        config.validate()?;
        let mut m = Self {
            running: RunningStats::new(config.bridge_filters),
            params: IndexMap::new(),
            config,
        };
        m.init_params(rng);
        if let Some(path) = m.config.ablation.warm_start.clone() {
            let ckpt = Checkpoint::read(&path)?;
            m.import_weights(&ckpt, false)?;
        }
        Ok(m)
    }

    fn add(&mut self, rng: &RngStream, name: String, shape: Vec<usize>, init: Init) {
        let mut r = rng.fork(name_key(&name));
        let t = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                Tensor::from_fn(shape, |_| T::lit(r.uniform_range(-bound, bound)))
            }
            Init::TruncNormal => Tensor::from_fn(shape, |_| T::lit(r.truncated_normal(0.02, 0.04))),
        };
        self.params.insert(name, t);
    }

    fn add_weight_norm_conv(&mut self, rng: &RngStream, prefix: &str, cout: usize, cin: usize, k: usize) {
        let v_name = format!("{prefix}.v");
        self.add(rng, v_name.clone(), vec![cout, cin, k], Init::FanIn(cin * k));
        let v = self.params[&v_name].data();
        let norms: Vec<T> = v
            .chunks(cin * k)
            .map(|row| row.iter().map(|a| *a * *a).sum::<T>().sqrt())
            .collect();
        self.params.insert(format!("{prefix}.g"), Tensor::from_vec(vec![cout], norms).unwrap());
        self.add(rng, format!("{prefix}.bias"), vec![cout], Init::Zeros);
    }

    fn add_linear(&mut self, rng: &RngStream, prefix: &str, out: usize, inp: usize) {
        self.add(rng, format!("{prefix}.weight"), vec![out, inp], Init::FanIn(inp));
        self.add(rng, format!("{prefix}.bias"), vec![out], Init::Zeros);
    }

    fn init_params(&mut self, rng: &RngStream) {
        let c = self.config.clone();
        let k = c.tcn_kernel;
        let mut cin = c.in_channels;
        for (i, &cout) in c.tcn_channels.iter().enumerate() {
            self.add_weight_norm_conv(rng, &format!("tcn.block{i}.conv1"), cout, cin, k);
            self.add_weight_norm_conv(rng, &format!("tcn.block{i}.conv2"), cout, cout, k);
            if cin != cout {
                self.add(rng, format!("tcn.block{i}.downsample.weight"), vec![cout, cin, 1], Init::FanIn(cin));
                self.add(rng, format!("tcn.block{i}.downsample.bias"), vec![cout], Init::Zeros);
            }
            cin = cout;
        }

        let f = c.bridge_filters;
        let e = c.embed_dim;
        let (kh, kw) = c.bridge_kernel_temporal;
        if !c.ablation.remove_temporal_conv {
            self.add(rng, "bridge.temporal.weight".into(), vec![f, 1, kh, kw], Init::FanIn(kh * kw));
        }
        self.add(rng, "bridge.bn.gamma".into(), vec![f], Init::Ones);
        self.add(rng, "bridge.bn.beta".into(), vec![f], Init::Zeros);
        if !c.ablation.remove_spatial_conv {
            let (sh, sw) = c.bridge_kernel_spatial;
            self.add(rng, "bridge.spatial.weight".into(), vec![e, f, sh, sw], Init::FanIn(f * sh * sw));
            self.add(rng, "bridge.spatial.bias".into(), vec![e], Init::Zeros);
        }

        let pk = c.patch_projection_kernel;
        if !c.ablation.remove_pointwise_conv {
            self.add(rng, "vit.patch.weight".into(), vec![e, e, pk], Init::FanIn(e * pk));
            self.add(rng, "vit.patch.bias".into(), vec![e], Init::Zeros);
        }
        let n = c.token_count().expect("validated");
        self.add(rng, "vit.cls_token".into(), vec![1, 1, e], Init::TruncNormal);
        self.add(rng, "vit.pos_embed".into(), vec![1, n + 1, e], Init::TruncNormal);
        let mlp = c.mlp_hidden();
        for l in 0..c.vit_depth {
            let p = format!("vit.layer{l}");
            self.add(rng, format!("{p}.ln1.gamma"), vec![e], Init::Ones);
            self.add(rng, format!("{p}.ln1.beta"), vec![e], Init::Zeros);
            for proj in ["q", "k", "v", "proj"] {
                self.add_linear(rng, &format!("{p}.attn.{proj}"), e, e);
            }
            self.add(rng, format!("{p}.ln2.gamma"), vec![e], Init::Ones);
            self.add(rng, format!("{p}.ln2.beta"), vec![e], Init::Zeros);
            self.add_linear(rng, &format!("{p}.mlp.fc1"), mlp, e);
            self.add_linear(rng, &format!("{p}.mlp.fc2"), e, mlp);
        }
        self.add(rng, "vit.ln_final.gamma".into(), vec![e], Init::Ones);
        self.add(rng, "vit.ln_final.beta".into(), vec![e], Init::Zeros);
        self.add_linear(rng, "head.fc1", c.head_hidden, e);
        self.add_linear(rng, "head.fc2", 2, c.head_hidden);
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &IndexMap<String, Tensor<T>> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn running_stats(&self) -> &RunningStats<T> {
        &self.running
    }

    pub fn set_running_stats(&mut self, stats: RunningStats<T>) {
        self.running = stats;
    }

    /// Number of learned scalars (buffers excluded).
    pub fn count_parameters(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Element>(&self) -> Model<U> {
        let conv = |v: &[T]| v.iter().map(|a| U::lit(a.as_f64())).collect();
        Model {
            config: self.config.clone(),
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            running: RunningStats {
                mean: conv(&self.running.mean),
                var: conv(&self.running.var),
            },
        }
    }

    /// Records every parameter as a graph leaf; `trainable` leaves collect
    /// gradients.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bindings {
        let vars = self
            .params
            .values()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bindings { vars }
    }

    fn p(&self, b: &Bindings, name: &str) -> Var {
        let i = self
            .params
            .get_index_of(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        b.vars[i]
    }

    /// `[B, C_in, T] → [B, C_last, T]`.
    pub fn tcn_forward(&self, g: &mut Graph<T>, b: &Bindings, x: Var, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        let c = &self.config;
        let rate = c.effective_tcn_dropout();
        let mut h = x;
        let mut cin = c.in_channels;
        for (i, &cout) in c.tcn_channels.iter().enumerate() {
            let dilation = c.tcn_dilation_base.pow(i as u32);
            let opts = Conv1dOptions::causal(c.tcn_kernel, dilation);
            let input = h;
            let mut y = input;
            for j in 1..=2 {
                let pre = format!("tcn.block{i}.conv{j}");
                let w = g.weight_norm(self.p(b, &format!("{pre}.v")), self.p(b, &format!("{pre}.g")))?;
                y = g.conv1d(y, w, Some(self.p(b, &format!("{pre}.bias"))), opts)?;
                y = g.relu(y)?;
                y = g.dropout(y, rate, mode, rng)?;
            }
            let res = if cin != cout {
                let w = self.p(b, &format!("tcn.block{i}.downsample.weight"));
                let bias = self.p(b, &format!("tcn.block{i}.downsample.bias"));
                g.conv1d(input, w, Some(bias), Conv1dOptions::strided(1))?
            } else {
                input
            };
            let sum = g.add(y, res)?;
            h = g.relu(sum)?;
            cin = cout;
        }
        Ok(h)
    }

    /// `[B, C_last, T] → [B, E, 1, W]`. Train mode updates `stats`.
    pub fn bridge_forward(
        &self,
        g: &mut Graph<T>,
        b: &Bindings,
        x: Var,
        mode: Mode,
        stats: &mut RunningStats<T>,
    ) -> Result<Var> {
        let c = &self.config;
        let shape = g.shape(x).to_vec();
        let [batch, ch, t] = shape[..] else {
            return Err(Error::Config(format!("bridge expects [B, C, T], got {shape:?}")));
        };
        let x = g.reshape(x, &[batch, 1, ch, t])?;
        let f = c.bridge_filters;
        let e = c.embed_dim;
        let (kh, kw) = c.bridge_kernel_temporal;
        let w_t = if c.ablation.remove_temporal_conv {
            let v = T::lit(1.0 / (kh * kw) as f64);
            g.constant(Tensor::full(vec![f, 1, kh, kw], v))
        } else {
            self.p(b, "bridge.temporal.weight")
        };
        let opts = Conv2dOptions::new(c.bridge_stride_temporal, c.bridge_padding_temporal);
        let y = g.conv2d(x, w_t, None, opts)?;
        let y = g.batch_norm(
            y,
            self.p(b, "bridge.bn.gamma"),
            self.p(b, "bridge.bn.beta"),
            stats,
            mode,
            BatchNormConfig::default(),
        )?;
        let y = g.relu(y)?;
        let (sh, sw) = c.bridge_kernel_spatial;
        let (w_s, bias) = if c.ablation.remove_spatial_conv {
            let v = T::lit(1.0 / sh as f64);
            let w = Tensor::from_fn(vec![e, f, sh, sw], |i| {
                let (out, inp) = (i / (f * sh * sw), (i / (sh * sw)) % f);
                if out % f == inp {
                    v
                } else {
                    T::zero()
                }
            });
            (g.constant(w), None)
        } else {
            (self.p(b, "bridge.spatial.weight"), Some(self.p(b, "bridge.spatial.bias")))
        };
        Ok(g.conv2d(y, w_s, bias, Conv2dOptions::new((1, 1), (0, 0)))?)
    }

    /// `[B, E, 1, W] → [B, 2]`.
    pub fn vit_forward(&self, g: &mut Graph<T>, b: &Bindings, x: Var, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        let c = &self.config;
        let e = c.embed_dim;
        let shape = g.shape(x).to_vec();
        let [batch, ch, 1, w] = shape[..] else {
            return Err(Error::Config(format!("encoder expects [B, E, 1, W], got {shape:?}")));
        };
        if ch != e {
            return Err(Error::Config(format!("encoder expects {e} channels, got {ch}")));
        }
        let x = g.reshape(x, &[batch, e, w])?;
        let k = c.patch_projection_kernel;
        let s = c.patch_projection_stride;
        if k > w {
            return Err(Error::Config(format!("patch kernel {k} exceeds bridge width {w}")));
        }
        let (pw, pb) = if c.ablation.remove_pointwise_conv {
            let v = T::lit(1.0 / k as f64);
            let w = Tensor::from_fn(vec![e, e, k], |i| if i / (e * k) == (i / k) % e { v } else { T::zero() });
            (g.constant(w), None)
        } else {
            (self.p(b, "vit.patch.weight"), Some(self.p(b, "vit.patch.bias")))
        };
        let tokens = g.conv1d(x, pw, pb, Conv1dOptions::strided(s))?;
        let n = g.shape(tokens)[2];
        let pos = self.p(b, "vit.pos_embed");
        let positions = g.shape(pos)[1];
        if positions != n + 1 {
            return Err(Error::Config(format!(
                "position embedding has {positions} positions but the input gives {n} tokens + class token"
            )));
        }
        let tokens = g.permute(tokens, &[0, 2, 1])?;
        let cls = g.expand(self.p(b, "vit.cls_token"), batch)?;
        let mut h = g.concat(&[cls, tokens], 1)?;
        h = g.add_broadcast(h, pos)?;

        let heads = c.vit_heads;
        let dh = c.head_dim();
        let seq = n + 1;
        for l in 0..c.vit_depth {
            let p = |s: &str| format!("vit.layer{l}.{s}");
            let a = g.layer_norm(h, self.p(b, &p("ln1.gamma")), self.p(b, &p("ln1.beta")), LN_EPS)?;
            let mut qkv = [a; 3];
            for (slot, name) in qkv.iter_mut().zip(["q", "k", "v"]) {
                let y = g.linear(
                    a,
                    self.p(b, &p(&format!("attn.{name}.weight"))),
                    Some(self.p(b, &p(&format!("attn.{name}.bias")))),
                )?;
                let y = g.reshape(y, &[batch, seq, heads, dh])?;
                *slot = g.permute(y, &[0, 2, 1, 3])?;
            }
            let o = g.attention(qkv[0], qkv[1], qkv[2])?;
            let o = g.permute(o, &[0, 2, 1, 3])?;
            let o = g.reshape(o, &[batch, seq, e])?;
            let o = g.linear(o, self.p(b, &p("attn.proj.weight")), Some(self.p(b, &p("attn.proj.bias"))))?;
            h = g.add(h, o)?;

            let a = g.layer_norm(h, self.p(b, &p("ln2.gamma")), self.p(b, &p("ln2.beta")), LN_EPS)?;
            let m = g.linear(a, self.p(b, &p("mlp.fc1.weight")), Some(self.p(b, &p("mlp.fc1.bias"))))?;
            let m = g.gelu(m)?;
            let m = g.linear(m, self.p(b, &p("mlp.fc2.weight")), Some(self.p(b, &p("mlp.fc2.bias"))))?;
            h = g.add(h, m)?;
        }
        let h = g.layer_norm(h, self.p(b, "vit.ln_final.gamma"), self.p(b, "vit.ln_final.beta"), LN_EPS)?;
        let cls = g.narrow(h, 1, 0, 1)?;
        let cls = g.reshape(cls, &[batch, e])?;
        let y = g.linear(cls, self.p(b, "head.fc1.weight"), Some(self.p(b, "head.fc1.bias")))?;
        let y = g.dropout(y, c.head_dropout, mode, rng)?;
        Ok(g.linear(y, self.p(b, "head.fc2.weight"), Some(self.p(b, "head.fc2.bias")))?)
    }

    /// Full forward on a graph. Returns the `[B, 2]` output and, in train
    /// mode, the updated batch-norm statistics (the model itself is not
    /// touched).
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        b: &Bindings,
        x: Var,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Var, Option<RunningStats<T>>)> {
        let shape = g.shape(x);
        if shape.len() != 3 || shape[1] != self.config.in_channels {
            return Err(Error::Tensor(eegvit_tensor::TensorError::Dimension {
                op: "forward",
                axis: 1,
                expected: self.config.in_channels,
                actual: shape.get(1).copied().unwrap_or(0),
            }));
        }
        let mut stats = self.running.clone();
        let h = self.tcn_forward(g, b, x, mode, rng)?;
        let h = self.bridge_forward(g, b, h, mode, &mut stats)?;
        let y = self.vit_forward(g, b, h, mode, rng)?;
        Ok((y, (mode == Mode::Train).then_some(stats)))
    }

    /// Forward on a fresh graph; train mode updates the running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut RngStream) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let (y, stats) = self.run(&mut g, x, mode, rng)?;
        if let Some(s) = stats {
            self.running = s;
        }
        Ok(y)
    }

    /// Eval-mode forward with no side effects.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        self.predict_with(&mut g, x)
    }

    /// Like [`predict`](Self::predict) but reuses `g`'s allocations.
    pub fn predict_with(&self, g: &mut Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        g.clear();
        let mut rng = RngStream::new(0);
        Ok(self.run(g, x, Mode::Eval, &mut rng)?.0)
    }

    fn run(
        &self,
        g: &mut Graph<T>,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Tensor<T>, Option<RunningStats<T>>)> {
        let b = self.bind(g, false);
        let xv = g.constant(x.clone());
        let (y, stats) = self.forward_graph(g, &b, xv, mode, rng)?;
        Ok((g.tensor(y), stats))
    }

    /// Parameters and batch-norm buffers, in parameter order.
    pub fn export_weights(&self) -> Checkpoint
    where
        Tensor<T>: crate::checkpoint::IntoStored,
    {
        let mut c = Checkpoint::new();
        for (k, v) in &self.params {
            c.insert(k.clone(), v.clone());
        }
        let f = self.running.mean.len();
        c.insert(BN_RUNNING_MEAN, Tensor::from_vec(vec![f], self.running.mean.clone()).unwrap());
        c.insert(BN_RUNNING_VAR, Tensor::from_vec(vec![f], self.running.var.clone()).unwrap());
        c
    }

    /// Strict mode requires exactly the exported name set, apart from
    /// `meta.*` entries, which are always ignored. Non-strict mode
    /// imports only the `vit.*` tensors the model has, leaving everything
    /// else (including the head) untouched. Validation happens before any
    /// tensor is written, so an error leaves the model unchanged.
    pub fn import_weights(&mut self, ckpt: &Checkpoint, strict: bool) -> Result<()> {
        let f = self.config.bridge_filters;
        let expected_shape = |name: &str| -> Option<Vec<usize>> {
            match name {
                BN_RUNNING_MEAN | BN_RUNNING_VAR => Some(vec![f]),
                _ => self.params.get(name).map(|t| t.shape().to_vec()),
            }
        };
        let selected: Vec<&str> = if strict {
            let unknown: Vec<String> = ckpt
                .names()
                .filter(|n| !n.starts_with(META_PREFIX) && expected_shape(n).is_none())
                .map(String::from)
                .collect();
            if !unknown.is_empty() {
                return Err(CheckpointError::UnknownNames(unknown).into());
            }
            let missing: Vec<String> = self
                .params
                .keys()
                .map(String::as_str)
                .chain([BN_RUNNING_MEAN, BN_RUNNING_VAR])
                .filter(|n| ckpt.get(n).is_none())
                .map(String::from)
                .collect();
            if !missing.is_empty() {
                return Err(CheckpointError::MissingNames(missing).into());
            }
            ckpt.names().filter(|n| !n.starts_with(META_PREFIX)).collect()
        } else {
            ckpt.names()
                .filter(|n| n.starts_with(ENCODER_PREFIX) && self.params.contains_key(*n))
                .collect()
        };
        let mismatched: Vec<String> = selected
            .iter()
            .filter(|n| ckpt.get(n).unwrap().shape() != expected_shape(n).unwrap().as_slice())
            .map(|n| {
                format!(
                    "{n} (checkpoint {:?}, model {:?})",
                    ckpt.get(n).unwrap().shape(),
                    expected_shape(n).unwrap()
                )
            })
            .collect();
        if !mismatched.is_empty() {
            return Err(CheckpointError::ShapeMismatch(mismatched).into());
        }
        for name in selected {
            let t: Tensor<T> = ckpt.get(name).unwrap().to_tensor();
            match name {
                BN_RUNNING_MEAN => self.running.mean = t.into_data(),
                BN_RUNNING_VAR => self.running.var = t.into_data(),
                _ => *self.params.get_mut(name).unwrap() = t,
            }
        }
        Ok(())
    }
}
