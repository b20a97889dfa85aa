//! Config-file loading and flag resolution.
//!
//! A config file is TOML with an optional top-level `preset` and optional
//! `[model]`, `[train]` and `[data]` tables. Table entries override the
//! preset or built-in defaults; command-line flags override the file.

use std::fs;
use std::path::Path;

use eegvit::data::SyntheticSpec;
use eegvit::{Error, ModelConfig, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::args::TrainFlags;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    #[serde(default)]
    pub model: Table,
    #[serde(default)]
    pub train: Table,
    #[serde(default)]
    pub data: Table,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, over: &Table, what: &str) -> Result<T> {
    let mut table = Table::try_from(base).expect("config serializes to a table");
    merge(&mut table, over);
    Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("[{what}]: {e}")))
}

/// `K:S` patch geometry.
pub fn parse_geometry(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("bad geometry '{s}', expected KERNEL:STRIDE"));
    let (k, st) = s.split_once(':').ok_or_else(bad)?;
    Ok((k.trim().parse().map_err(|_| bad())?, st.trim().parse().map_err(|_| bad())?))
}

/// `3`, `1,4,9` or the inclusive range `1..5`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

pub fn resolve_model(file: &FileConfig, preset_flag: Option<&str>, default_preset: &str) -> Result<ModelConfig> {
    let preset = preset_flag.or(file.preset.as_deref()).unwrap_or(default_preset);
    let config = overlay(&ModelConfig::preset(preset)?, &file.model, "model")?;
    config.validate()?;
    Ok(config)
}

/// Model config with the training flags that touch the model applied.
pub fn resolve_train_model(file: &FileConfig, flags: &TrainFlags) -> Result<ModelConfig> {
    let mut config = resolve_model(file, flags.preset.as_deref(), "desk")?;
    if let Some(p) = &flags.patch {
        let (k, s) = parse_geometry(p)?;
        config = config.with_patch(k, s);
    }
    if let Some(w) = &flags.warm_start {
        config.ablation.warm_start = Some(w.clone());
    }
    config.validate()?;
    Ok(config)
}

pub fn resolve_train(file: &FileConfig, flags: &TrainFlags) -> Result<TrainConfig> {
    let mut t = overlay(&TrainConfig::default(), &file.train, "train")?;
    if let Some(s) = &flags.seed {
        t.seeds = parse_seeds(s)?;
    }
    if let Some(v) = flags.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = flags.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = flags.lr {
        t.learning_rate = v;
    }
    if let Some(v) = flags.patience {
        t.patience = v;
    }
    if let Some(v) = flags.train_fraction {
        t.train_fraction = v;
    }
    if flags.split_seed.is_some() {
        t.split_seed = flags.split_seed;
    }
    t.validate()?;
    Ok(t)
}

/// The `[data]` table: parameters of the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub subjects: usize,
    pub trials: usize,
    pub channels: usize,
    pub timepoints: usize,
    pub sample_rate_hz: f64,
    pub screen_mm: [f64; 2],
    pub noise_std: f64,
    pub gain_jitter: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        Self {
            subjects: s.n_subjects,
            trials: s.trials_per_subject,
            channels: s.channels,
            timepoints: s.timepoints,
            sample_rate_hz: s.sample_rate_hz,
            screen_mm: [s.screen_mm.0, s.screen_mm.1],
            noise_std: s.noise_std,
            gain_jitter: s.gain_jitter,
            seed: s.seed,
        }
    }
}

impl DataSection {
    pub fn from_file(file: &FileConfig) -> Result<Self> {
        overlay(&Self::default(), &file.data, "data")
    }

    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_subjects: self.subjects,
            trials_per_subject: self.trials,
            channels: self.channels,
            timepoints: self.timepoints,
            sample_rate_hz: self.sample_rate_hz,
            screen_mm: (self.screen_mm[0], self.screen_mm[1]),
            noise_std: self.noise_std,
            gain_jitter: self.gain_jitter,
            seed: self.seed,
        }
    }
}

/// Builds the echo printed before a command acts.
pub struct Resolved(Table);

impl Resolved {
    pub fn new(command: &str) -> Self {
        let mut t = Table::new();
        t.insert("command".into(), command.into());
        t.insert("parallel".into(), eegvit::tensor::parallel::is_enabled().into());
        Self(t)
    }

    pub fn set(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.0.insert(key.into(), v.into());
        self
    }

    pub fn path(self, key: &str, p: Option<&Path>) -> Self {
        match p {
            Some(p) => self.set(key, p.display().to_string()),
            None => self,
        }
    }

    pub fn section<T: Serialize>(mut self, key: &str, v: &T) -> Self {
        self.0.insert(key.into(), Value::Table(Table::try_from(v).expect("section serializes")));
        self
    }

    pub fn print(&self) {
        println!("# resolved configuration");
        print!("{}", toml::to_string(&self.0).expect("resolved config serializes"));
        println!();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("1..5").unwrap(), [1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("2..=3").unwrap(), [2, 3]);
        assert_eq!(parse_seeds("4, 9").unwrap(), [4, 9]);
        assert_eq!(parse_seeds("7").unwrap(), [7]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn file_overrides_preset_and_flags_override_file() {
        let file: FileConfig = toml::from_str(
            "preset = \"desk\"\n[model]\nvit_depth = 1\n[model.ablation]\nremove_spatial_conv = true\n[train]\nmax_epochs = 7\nseeds = [9]\n",
        )
        .unwrap();
        let m = resolve_model(&file, None, "bench").unwrap();
        assert_eq!(m.vit_depth, 1);
        assert_eq!(m.embed_dim, ModelConfig::desk().embed_dim);
        assert!(m.ablation.remove_spatial_conv);
        let flags = TrainFlags {
            epochs: Some(3),
            ..TrainFlags::default()
        };
        let t = resolve_train(&file, &flags).unwrap();
        assert_eq!((t.max_epochs, t.seeds.clone()), (3, vec![9]));
        assert_eq!(resolve_model(&file, Some("bench"), "desk").unwrap().vit_depth, 1);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
        let file: FileConfig = toml::from_str("[model]\nwidth = 3").unwrap();
        assert!(matches!(resolve_model(&file, None, "desk"), Err(Error::Config(_))));
        let file: FileConfig = toml::from_str("[data]\nsubject = 3").unwrap();
        assert!(DataSection::from_file(&file).is_err());
    }
}
