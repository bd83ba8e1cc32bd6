//! Labeled word datasets.

mod archive;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::words::{WordSegment, WORD_CHANNELS, WORD_SAMPLES};
use crate::{Error, Result, CLASS_COUNT};

pub use archive::{
    load_archive, load_packed, read_segment_csv, save_archive, save_packed, write_segment_csv,
    ArchiveManifest, ARCHIVE_VERSION,
    PACKED_MAGIC, PACKED_VERSION,
};
pub use synth::{
    generate_synthetic, generate_trial, ClassTemplate, GeneratorConfig, SyntheticTrial, TrialConfig,
};

/// Word segments that all carry a label in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<WordSegment>,
    class_count: usize,
    pub generator: Option<GeneratorConfig>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<WordSegment>, class_count: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            match s.label {
                Some(l) if l < class_count => {}
                Some(l) => {
                    return Err(Error::invalid(format!(
                        "sample {i}: label {l} outside [0, {class_count})"
                    )))
                }
                None => return Err(Error::invalid(format!("sample {i} has no label"))),
            }
        }
        Ok(Self {
            samples,
            class_count,
            generator: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            class_count: CLASS_COUNT,
            generator: None,
        }
    }

    pub fn samples(&self) -> &[WordSegment] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn label(&self, i: usize) -> usize {
        self.samples[i].label.expect("labels checked at construction")
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for i in 0..self.len() {
            counts[self.label(i)] += 1;
        }
        counts
    }

    /// Subset by sample index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_count: self.class_count,
            generator: self.generator.clone(),
        }
    }
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [u32; 3],
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [4, 1, 1],
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    /// Original indices of each split's samples.
    pub indices: [Vec<usize>; 3],
}

fn partition(mut pool: Vec<usize>, ratios: [u32; 3], rng: &mut ChaCha8Rng) -> [Vec<usize>; 3] {
    pool.shuffle(rng);
    let total: u32 = ratios.iter().sum();
    let n = pool.len();
    let n_val = n * ratios[1] as usize / total as usize;
    let n_test = n * ratios[2] as usize / total as usize;
    let n_train = n - n_val - n_test;
    let test = pool.split_off(n_train + n_val);
    let val = pool.split_off(n_train);
    [pool, val, test]
}

/// Shuffled split; when stratified each class is divided separately with
/// rounding remainders assigned to train.
pub fn split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<Splits> {
    if spec.ratios.contains(&0) {
        return Err(Error::invalid(format!("split ratios must be positive, got {:?}", spec.ratios)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    if spec.stratified {
        let counts = ds.class_counts();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {c} has no samples")));
        }
        for class in 0..ds.class_count() {
            let pool: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == class).collect();
            for (dst, src) in parts.iter_mut().zip(partition(pool, spec.ratios, &mut rng)) {
                dst.extend(src);
            }
        }
    } else {
        if ds.is_empty() {
            return Err(Error::invalid("cannot split an empty dataset"));
        }
        parts = partition((0..ds.len()).collect(), spec.ratios, &mut rng);
    }
    Ok(Splits {
        train: ds.select(&parts[0]),
        val: ds.select(&parts[1]),
        test: ds.select(&parts[2]),
        indices: parts,
    })
}

/// Per-channel affine scaling fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: [f64; WORD_CHANNELS],
    pub std: [f64; WORD_CHANNELS],
}

impl ScalerParams {
    pub const STD_FLOOR: f64 = 1e-8;

    pub fn fit(train: &LabeledDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("cannot fit scaling on an empty training set"));
        }
        let mut mean = [0.0; WORD_CHANNELS];
        let mut std = [0.0; WORD_CHANNELS];
        let count = (train.len() * WORD_SAMPLES) as f64;
        for c in 0..WORD_CHANNELS {
            let sum: f64 = train
                .samples()
                .iter()
                .flat_map(|s| s.channel(c))
                .map(|&v| v as f64)
                .sum();
            mean[c] = sum / count;
            let sq: f64 = train
                .samples()
                .iter()
                .flat_map(|s| s.channel(c))
                .map(|&v| (v as f64 - mean[c]).powi(2))
                .sum();
            std[c] = (sq / count).sqrt().max(Self::STD_FLOOR);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &mut LabeledDataset) {
        for s in &mut ds.samples {
            self.apply_segment(s);
        }
    }

    pub fn apply_segment(&self, s: &mut WordSegment) {
        for (c, chunk) in s.data_mut().chunks_mut(WORD_SAMPLES).enumerate() {
            for v in chunk {
                *v = ((*v as f64 - self.mean[c]) / self.std[c]) as f32;
            }
        }
    }
}

/// Fits scaling on `train` and applies it to `train` and every other set.
pub fn standardize(train: &mut LabeledDataset, others: &mut [&mut LabeledDataset]) -> Result<ScalerParams> {
    let params = ScalerParams::fit(train)?;
    params.apply(train);
    for ds in others.iter_mut() {
        params.apply(ds);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(samples_per_class: usize) -> LabeledDataset {
        let cfg = GeneratorConfig {
            samples_per_class,
            ..GeneratorConfig::nato(samples_per_class, 0.05, 1)
        };
        generate_synthetic(&cfg)
    }

    #[test]
    fn split_proportions_are_four_one_one() {
        let ds = small(12);
        let s = split(&ds, &SplitSpec::default()).unwrap();
        for (part, n) in [(&s.train, 8), (&s.val, 2), (&s.test, 2)] {
            assert!(part.class_counts().iter().all(|&c| c == n));
        }
    }

    #[test]
    fn split_is_a_partition() {
        let ds = small(7);
        let s = split(&ds, &SplitSpec { seed: 3, ..SplitSpec::default() }).unwrap();
        let mut all: Vec<usize> = s.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        // 7 per class: 1 val, 1 test, remainder 5 to train
        assert!(s.train.class_counts().iter().all(|&c| c == 5));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = small(6);
        let spec = SplitSpec { seed: 17, ..SplitSpec::default() };
        assert_eq!(split(&ds, &spec).unwrap().indices, split(&ds, &spec).unwrap().indices);
        let other = SplitSpec { seed: 18, ..SplitSpec::default() };
        assert_ne!(split(&ds, &spec).unwrap().indices, split(&ds, &other).unwrap().indices);
    }

    #[test]
    fn split_rejects_empty_class() {
        let ds = small(6);
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) != 4).collect();
        assert!(split(&ds.select(&keep), &SplitSpec::default()).is_err());
    }

    #[test]
    fn standardized_train_is_unit_scaled() {
        let s = split(&small(6), &SplitSpec::default()).unwrap();
        let (mut train, mut val) = (s.train, s.val);
        let params = standardize(&mut train, &mut [&mut val]).unwrap();
        let refit = ScalerParams::fit(&train).unwrap();
        for c in 0..3 {
            assert!(refit.mean[c].abs() < 1e-6);
            assert!((refit.std[c] - 1.0).abs() < 1e-6);
            assert!(params.std[c] > 0.0);
        }
    }

    #[test]
    fn scaling_twice_differs_from_once() {
        let s = split(&small(6), &SplitSpec::default()).unwrap();
        let mut once = s.train.clone();
        let params = standardize(&mut once, &mut []).unwrap();
        let mut twice = once.clone();
        params.apply(&mut twice);
        assert_ne!(once, twice);
    }

    #[test]
    fn constant_channel_scales_to_zero() {
        let seg = |v: f32, label| {
            let mut data = vec![v; WORD_SAMPLES * WORD_CHANNELS];
            data[WORD_SAMPLES] = 2.0; // channel 1 not constant
            WordSegment::new(data, 750, Some(label)).unwrap()
        };
        let mut ds = LabeledDataset::new(vec![seg(3.0, 0), seg(3.0, 1)], 2).unwrap();
        let params = standardize(&mut ds, &mut []).unwrap();
        assert_eq!(params.std[0], ScalerParams::STD_FLOOR);
        assert!(ds.samples()[0].channel(0).iter().all(|&v| v == 0.0));
        assert!(ds.samples()[0].channel(2).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn labels_are_validated() {
        let seg = WordSegment::new(vec![0.0; 4500], 750, Some(26)).unwrap();
        assert!(LabeledDataset::new(vec![seg], 26).is_err());
        let unlabeled = WordSegment::new(vec![0.0; 4500], 750, None).unwrap();
        assert!(LabeledDataset::new(vec![unlabeled], 26).is_err());
    }
}
