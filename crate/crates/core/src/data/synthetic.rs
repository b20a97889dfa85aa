//! Synthetic EEG-like trials with a known gaze code.
//!
//! Three latent sources drive every trial: an 11 Hz sinusoid whose
//! amplitude is `1.5 + x_n`, a 17 Hz sinusoid with amplitude `1.5 + y_n`
//! (`x_n, y_n ∈ [0, 1]` are the normalized screen coordinates) and a 6 Hz
//! reference of fixed amplitude. A fixed random matrix mixes them onto the
//! channels, each subject scales every channel by its own gain
//! `1 + jitter · N(0, 1)`, and `noise_std` scales white Gaussian noise plus
//! an approximately 1/f (Voss-McCartney) background.
//!
//! Labels come from the 25-point grid at 10/30/50/70/90 % of the screen
//! width and height. Positions are dealt round-robin over all trials and
//! then shuffled, so each appears `⌊N/25⌋` or `⌈N/25⌉` times.

use std::f64::consts::TAU;

use eegvit_tensor::RngStream;

use super::{DataError, Dataset, Sample, EEG_CHANNELS};

const GRID_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const SOURCE_HZ: [f64; 3] = [11.0, 17.0, 6.0];
const PINK_OCTAVES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub channels: usize,
    pub timepoints: usize,
    pub sample_rate_hz: f64,
    /// Screen width and height in millimetres.
    pub screen_mm: (f64, f64),
    pub noise_std: f64,
    pub gain_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 10 subjects × 50 trials of 64 samples at 500 Hz on a 24-inch 16:9
    /// screen, noise-free.
    fn default() -> Self {
        Self {
            n_subjects: 10,
            trials_per_subject: 50,
            channels: EEG_CHANNELS,
            timepoints: 64,
            sample_rate_hz: 500.0,
            screen_mm: (531.0, 299.0),
            noise_std: 0.0,
            gain_jitter: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Invalid(m.into()));
        if self.n_subjects == 0 || self.trials_per_subject == 0 {
            return bad("need at least one subject and one trial");
        }
        if self.channels == 0 || self.timepoints == 0 || self.channels > u16::MAX as usize {
            return bad("channels must be in 1..=65535 and timepoints positive");
        }
        if !(self.sample_rate_hz > 0.0) || !(self.screen_mm.0 > 0.0) || !(self.screen_mm.1 > 0.0) {
            return bad("sample rate and screen size must be positive");
        }
        if !(self.noise_std >= 0.0) || !(self.gain_jitter >= 0.0) {
            return bad("noise_std and gain_jitter must be non-negative");
        }
        Ok(())
    }
}

/// The 25 grid positions in millimetres, row by row.
pub fn grid_positions(screen_mm: (f64, f64)) -> Vec<[f64; 2]> {
    GRID_FRACTIONS
        .iter()
        .flat_map(|fy| GRID_FRACTIONS.iter().map(move |fx| [fx * screen_mm.0, fy * screen_mm.1]))
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let c = spec.channels;
    let t = spec.timepoints;

    let mut mix_rng = root.fork(1);
    let mixing: Vec<[f64; 3]> = (0..c)
        .map(|_| [mix_rng.normal(), mix_rng.normal(), mix_rng.normal()])
        .collect();
    let sources: Vec<[f64; 3]> = (0..t)
        .map(|i| {
            let time = i as f64 / spec.sample_rate_hz;
            SOURCE_HZ.map(|hz| (TAU * hz * time).sin())
        })
        .collect();

    let grid = grid_positions(spec.screen_mm);
    let total = spec.n_subjects * spec.trials_per_subject;
    let mut positions: Vec<usize> = (0..total).map(|i| i % grid.len()).collect();
    root.fork(2).shuffle(&mut positions);

    let mut samples = Vec::with_capacity(total);
    for subject in 0..spec.n_subjects {
        let mut gain_rng = root.fork(1000 + subject as u64);
        let gains: Vec<f64> = (0..c).map(|_| 1.0 + spec.gain_jitter * gain_rng.normal()).collect();
        for trial in 0..spec.trials_per_subject {
            let idx = subject * spec.trials_per_subject + trial;
            let [x, y] = grid[positions[idx]];
            let amp = [1.5 + x / spec.screen_mm.0, 1.5 + y / spec.screen_mm.1, 1.0];
            let mut noise_rng = root.fork(1_000_000 + idx as u64);
            let mut signal = Vec::with_capacity(c * t);
            for (m, gain) in mixing.iter().zip(&gains) {
                let mut pink = Pink::new(&mut noise_rng);
                for s in &sources {
                    let clean: f64 = (0..3).map(|k| m[k] * amp[k] * s[k]).sum();
                    let mut v = gain * clean;
                    if spec.noise_std > 0.0 {
                        v += spec.noise_std * (noise_rng.normal() + pink.next(&mut noise_rng));
                    }
                    signal.push(v as f32);
                }
            }
            samples.push(Sample {
                subject: subject as u32,
                label: [x as f32, y as f32],
                signal,
            });
        }
    }
    Dataset::new(c, t, samples)
}

/// Voss-McCartney pink noise: octave `k` is redrawn every `2^k` samples.
struct Pink {
    rows: [f64; PINK_OCTAVES],
    counter: u64,
}

impl Pink {
    fn new(rng: &mut RngStream) -> Self {
        let mut rows = [0.0; PINK_OCTAVES];
        for r in &mut rows {
            *r = rng.normal();
        }
        Self { rows, counter: 0 }
    }

    fn next(&mut self, rng: &mut RngStream) -> f64 {
        self.counter += 1;
        let k = (self.counter.trailing_zeros() as usize).min(PINK_OCTAVES - 1);
        self.rows[k] = rng.normal();
        self.rows.iter().sum::<f64>() / (PINK_OCTAVES as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn grid_spans_screen() {
        let g = grid_positions((531.0, 299.0));
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], [0.1 * 531.0, 0.1 * 299.0]);
        assert_eq!(g[24], [0.9 * 531.0, 0.9 * 299.0]);
    }

    #[test]
    fn positions_are_balanced() {
        let spec = SyntheticSpec {
            n_subjects: 3,
            trials_per_subject: 37,
            timepoints: 4,
            channels: 3,
            ..SyntheticSpec::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for s in d.samples() {
            *counts.entry((s.label[0].to_bits(), s.label[1].to_bits())).or_default() += 1;
        }
        assert_eq!(counts.len(), 25);
        let expected = 111.0 / 25.0;
        assert!(counts.values().all(|c| (*c as f64 - expected).abs() <= 1.0));
    }

    #[test]
    fn rejects_negative_noise() {
        let spec = SyntheticSpec {
            noise_std: -1.0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }
}
