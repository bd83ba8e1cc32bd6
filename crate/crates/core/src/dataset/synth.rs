//! Synthetic stand-ins for recorded data: labeled word envelopes and raw
//! ten-repetition trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::signal::TimeSeries;
use crate::words::{WordSegment, WORD_CHANNELS, WORD_SAMPLES};
use crate::CLASS_COUNT;

/// Envelope shape of one class: a Gaussian burst per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub amplitudes: [f64; WORD_CHANNELS],
    /// Burst centre relative to the window centre, in samples.
    pub center_offset: f64,
    /// Gaussian standard deviation, in samples.
    pub width: f64,
}

impl ClassTemplate {
    fn value(&self, channel: usize, t: f64, gain: f64, shift: f64, baseline: f64) -> f64 {
        let centre = (WORD_SAMPLES / 2) as f64 + self.center_offset + shift;
        let z = (t - centre) / self.width;
        baseline + gain * self.amplitudes[channel] * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub templates: Vec<ClassTemplate>,
    /// Additive white noise per sample.
    pub noise_std: f64,
    /// Relative standard deviation of a per-sample, per-channel gain.
    #[serde(default)]
    pub amplitude_jitter: f64,
    /// Standard deviation of a per-sample burst shift, in samples.
    #[serde(default)]
    pub timing_jitter: f64,
    /// Constant floor added to every template.
    #[serde(default)]
    pub baseline: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    /// 26 templates on a grid: each class gets a distinct amplitude triple
    /// from three levels per channel, with burst offset and width varying
    /// on shorter cycles so neighbouring classes share some features.
    pub fn nato(samples_per_class: usize, noise_std: f64, seed: u64) -> Self {
        const LEVELS: [f64; 3] = [0.4, 0.7, 1.0];
        let templates = (0..CLASS_COUNT)
            .map(|c| {
                // skip the all-low triple
                let code = c + 1;
                ClassTemplate {
                    amplitudes: [LEVELS[code % 3], LEVELS[(code / 3) % 3], LEVELS[code / 9]],
                    center_offset: 50.0 * ((c % 5) as f64 - 2.0),
                    width: 160.0 + 30.0 * (c % 4) as f64,
                }
            })
            .collect();
        Self {
            templates,
            noise_std,
            amplitude_jitter: 0.0,
            timing_jitter: 0.0,
            baseline: 0.05,
            samples_per_class,
            seed,
        }
    }

    pub fn with_jitter(mut self, amplitude: f64, timing: f64) -> Self {
        self.amplitude_jitter = amplitude;
        self.timing_jitter = timing;
        self
    }

    pub fn class_count(&self) -> usize {
        self.templates.len()
    }
}

/// Class-major dataset of templates plus jitter and white noise;
/// deterministic in `cfg.seed`.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.class_count() * cfg.samples_per_class);
    for (class, template) in cfg.templates.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            let gains: [f64; WORD_CHANNELS] = std::array::from_fn(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (1.0 + cfg.amplitude_jitter * g).max(0.0)
            });
            let shift: f64 = StandardNormal.sample(&mut rng);
            let shift = cfg.timing_jitter * shift;
            let mut data = Vec::with_capacity(WORD_SAMPLES * WORD_CHANNELS);
            for (c, gain) in gains.iter().enumerate() {
                for t in 0..WORD_SAMPLES {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let v = template.value(c, t as f64, *gain, shift, cfg.baseline) + cfg.noise_std * noise;
                    data.push(v as f32);
                }
            }
            samples.push(WordSegment::new(data, WORD_SAMPLES / 2, Some(class)).expect("fixed shape"));
        }
    }
    let mut ds = LabeledDataset::new(samples, cfg.class_count()).expect("labels in range");
    ds.generator = Some(cfg.clone());
    ds
}

/// Raw three-channel recording of repeated words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub words: usize,
    /// Burst centre spacing, in samples.
    pub spacing: usize,
    /// Samples before the first and after the last burst centre.
    pub margin: usize,
    /// Gaussian standard deviation of the burst amplitude, in samples.
    pub burst_width: f64,
    pub channel_gains: [f64; WORD_CHANNELS],
    /// Relative per-word amplitude variation.
    pub word_gain_jitter: f64,
    /// Background noise level relative to a unit burst.
    pub noise_floor: f64,
    /// Low-frequency movement artefact.
    pub drift_amplitude: f64,
    pub drift_hz: f64,
    /// Word positions left silent.
    #[serde(default)]
    pub silent_words: Vec<usize>,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            words: 10,
            spacing: 4000,
            margin: 2500,
            burst_width: 350.0,
            channel_gains: [1.0, 0.8, 0.6],
            word_gain_jitter: 0.15,
            noise_floor: 0.05,
            drift_amplitude: 0.5,
            drift_hz: 0.5,
            silent_words: Vec::new(),
            sample_rate: 1000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrial {
    pub raw: TimeSeries,
    /// Raw-sample centres of the non-silent bursts.
    pub centers: Vec<usize>,
}

/// Bursts of broadband noise under Gaussian amplitude envelopes, on top of
/// background noise and a slow drift.
pub fn generate_trial(cfg: &TrialConfig) -> SyntheticTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let len = 2 * cfg.margin + cfg.spacing * cfg.words.saturating_sub(1) + 1;
    let all_centers: Vec<usize> = (0..cfg.words).map(|w| cfg.margin + w * cfg.spacing).collect();
    let word_gain = Normal::new(1.0, cfg.word_gain_jitter).expect("finite jitter");
    let gains: Vec<[f64; WORD_CHANNELS]> = (0..cfg.words)
        .map(|w| {
            if cfg.silent_words.contains(&w) {
                [0.0; WORD_CHANNELS]
            } else {
                std::array::from_fn(|c| cfg.channel_gains[c] * word_gain.sample(&mut rng).max(0.2))
            }
        })
        .collect();
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);

    let channels = (0..WORD_CHANNELS)
        .map(|c| {
            (0..len)
                .map(|t| {
                    let tf = t as f64;
                    let envelope: f64 = all_centers
                        .iter()
                        .zip(&gains)
                        .map(|(&centre, g)| {
                            let z = (tf - centre as f64) / cfg.burst_width;
                            if z.abs() > 6.0 {
                                0.0
                            } else {
                                g[c] * (-0.5 * z * z).exp()
                            }
                        })
                        .sum();
                    let carrier: f64 = StandardNormal.sample(&mut rng);
                    let background: f64 = StandardNormal.sample(&mut rng);
                    let drift = cfg.drift_amplitude
                        * (std::f64::consts::TAU * cfg.drift_hz * tf / cfg.sample_rate + phase + c as f64).sin();
                    envelope * carrier + cfg.noise_floor * background + drift
                })
                .collect()
        })
        .collect();

    let centers = all_centers
        .into_iter()
        .enumerate()
        .filter(|(w, _)| !cfg.silent_words.contains(w))
        .map(|(_, c)| c)
        .collect();
    SyntheticTrial {
        raw: TimeSeries::new(channels, cfg.sample_rate).expect("non-empty channels"),
        centers,
    }
}
