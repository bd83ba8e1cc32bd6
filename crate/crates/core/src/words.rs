//! Word segmentation of a processed ten-repetition trial.
//!
//! Peaks are detected per channel by topographic prominence with a minimum
//! spacing, paired across channels by rank, reduced to a consensus index by
//! the median, and refined by a coarse search for the `1500 x 3` window of
//! maximum power.

use serde::{Deserialize, Serialize};

use crate::signal::TimeSeries;
use crate::{Error, Result};

/// Samples per word window.
pub const WORD_SAMPLES: usize = 1500;
/// Channels per word window.
pub const WORD_CHANNELS: usize = 3;

/// A fixed `1500 x 3` word window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSegment {
    /// Channel-major: `data[c * WORD_SAMPLES + t]`.
    data: Vec<f32>,
    /// Window centre as a sample index into the source envelope.
    pub center: usize,
    pub label: Option<usize>,
}

impl WordSegment {
    pub fn new(data: Vec<f32>, center: usize, label: Option<usize>) -> Result<Self> {
        if data.len() != WORD_SAMPLES * WORD_CHANNELS {
            return Err(Error::invalid(format!(
                "word segment needs {} values, got {}",
                WORD_SAMPLES * WORD_CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            data,
            center,
            label,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * WORD_SAMPLES..(c + 1) * WORD_SAMPLES]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Kept peaks are separated by strictly more than this many samples.
    pub min_distance: usize,
    pub max_peaks: usize,
    /// Peaks whose prominence is below this fraction of the channel's
    /// largest prominence are ignored.
    pub min_relative_prominence: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            min_distance: 3000,
            max_peaks: 10,
            min_relative_prominence: 0.1,
        }
    }
}

/// Local maxima; a flat top is represented by its middle sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let start = i;
            while i + 1 < n && x[i + 1] == x[i] {
                i += 1;
            }
            if i + 1 < n && x[i + 1] < x[i] {
                out.push((start + i) / 2);
            }
        }
        i += 1;
    }
    out
}

/// Height of the peak above the higher of the two lowest points separating
/// it from taller terrain (or the signal edge) on either side.
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// [`prominence`] of every index in `peaks`, in O(n log n) overall.
pub fn prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    let n = x.len();
    // nearest strictly higher sample on each side
    let mut left = vec![usize::MAX; n];
    let mut right = vec![usize::MAX; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while stack.last().is_some_and(|&j| x[j] <= x[i]) {
            stack.pop();
        }
        left[i] = stack.last().copied().unwrap_or(usize::MAX);
        stack.push(i);
    }
    stack.clear();
    for i in (0..n).rev() {
        while stack.last().is_some_and(|&j| x[j] <= x[i]) {
            stack.pop();
        }
        right[i] = stack.last().copied().unwrap_or(usize::MAX);
        stack.push(i);
    }

    // sparse table of range minima
    let mut table = vec![x.to_vec()];
    let mut w = 1;
    while 2 * w <= n {
        let prev = table.last().expect("non-empty");
        let next: Vec<f64> = (0..=n - 2 * w).map(|i| prev[i].min(prev[i + w])).collect();
        table.push(next);
        w *= 2;
    }
    let range_min = |lo: usize, hi: usize| {
        // inclusive bounds, lo <= hi
        let k = (hi - lo + 1).ilog2() as usize;
        table[k][lo].min(table[k][hi + 1 - (1 << k)])
    };

    peaks
        .iter()
        .map(|&p| {
            let lo = if left[p] == usize::MAX { 0 } else { left[p] + 1 };
            let hi = if right[p] == usize::MAX { n - 1 } else { right[p] - 1 };
            x[p] - range_min(lo, p).max(range_min(p, hi))
        })
        .collect()
}

/// Most prominent peaks with a minimum spacing, returned in ascending order.
///
/// Conflicts are resolved greedily by descending prominence (earlier index
/// first on ties).
pub fn detect_peaks(channel: &[f64], params: &PeakParams) -> Vec<usize> {
    let maxima = local_maxima(channel);
    let mut candidates: Vec<(usize, f64)> = maxima
        .iter()
        .copied()
        .zip(prominences(channel, &maxima))
        .filter(|&(_, p)| p > 0.0)
        .collect();
    let Some(top) = candidates.iter().map(|c| c.1).reduce(f64::max) else {
        return Vec::new();
    };
    let floor = top * params.min_relative_prominence;
    candidates.retain(|c| c.1 >= floor);
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut kept: Vec<usize> = Vec::with_capacity(params.max_peaks);
    for (idx, _) in candidates {
        if kept.len() == params.max_peaks {
            break;
        }
        if kept.iter().all(|&k| k.abs_diff(idx) > params.min_distance) {
            kept.push(idx);
        }
    }
    kept.sort_unstable();
    kept
}

/// Per-channel peak indices.
pub type PeakList = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsensusPeaks {
    pub indices: Vec<usize>,
    pub warnings: Vec<String>,
}

fn median_index(values: &mut [usize]) -> usize {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2
    }
}

/// One consensus index per word: the median across channels of the i-th
/// peak of each channel.
pub fn localize_peaks(peaks: &PeakList) -> ConsensusPeaks {
    let mut warnings = Vec::new();
    let counts: Vec<usize> = peaks.iter().map(Vec::len).collect();
    let words = counts.iter().copied().min().unwrap_or(0);
    if counts.iter().any(|&c| c != words) {
        let msg = format!("channels disagree on peak count {counts:?}; pairing the first {words} by rank");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let indices = (0..words)
        .map(|i| {
            let mut at_rank: Vec<usize> = peaks.iter().map(|c| c[i]).collect();
            median_index(&mut at_rank)
        })
        .collect();
    ConsensusPeaks { indices, warnings }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordSearch {
    /// Candidate centres span `peak ± max_shift`.
    pub max_shift: usize,
    pub step: usize,
}

impl Default for WordSearch {
    fn default() -> Self {
        Self {
            max_shift: 150,
            step: 10,
        }
    }
}

/// Start of the window centred at `center`, shifted to lie inside `[0, len)`.
fn clamped_start(center: isize, len: usize) -> usize {
    let half = (WORD_SAMPLES / 2) as isize;
    let max_start = (len - WORD_SAMPLES) as isize;
    (center - half).clamp(0, max_start) as usize
}

/// Summed channel power of the window starting at `start`.
pub fn window_power(envelope: &TimeSeries, start: usize) -> f64 {
    envelope
        .channels()
        .iter()
        .map(|c| c[start..start + WORD_SAMPLES].iter().map(|v| v * v).sum::<f64>())
        .sum()
}

/// Candidate window starts for a peak, in search order.
pub fn candidate_starts(peak: usize, len: usize, search: &WordSearch) -> Vec<usize> {
    let peak = peak as isize;
    let shift = search.max_shift as isize;
    (-shift..=shift)
        .step_by(search.step.max(1))
        .map(|d| clamped_start(peak + d, len))
        .collect()
}

/// Extracts the word window around `peak` with maximum summed power.
pub fn localize_word(envelope: &TimeSeries, peak: usize, search: &WordSearch) -> Result<WordSegment> {
    let len = envelope.len();
    if len < WORD_SAMPLES {
        return Err(Error::invalid(format!(
            "envelope of {len} samples is shorter than a {WORD_SAMPLES}-sample word"
        )));
    }
    if envelope.channel_count() != WORD_CHANNELS {
        return Err(Error::invalid(format!(
            "expected {WORD_CHANNELS} channels, got {}",
            envelope.channel_count()
        )));
    }

    // cumulative channel power makes each candidate O(1)
    let mut cumulative = Vec::with_capacity(len + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for t in 0..len {
        acc += envelope.channels().iter().map(|c| c[t] * c[t]).sum::<f64>();
        cumulative.push(acc);
    }

    let mut best: Option<(usize, f64)> = None;
    for start in candidate_starts(peak, len, search) {
        let power = cumulative[start + WORD_SAMPLES] - cumulative[start];
        if best.is_none_or(|(_, p)| power > p) {
            best = Some((start, power));
        }
    }
    let (start, _) = best.expect("at least one candidate");

    let mut data = Vec::with_capacity(WORD_SAMPLES * WORD_CHANNELS);
    for c in envelope.channels() {
        data.extend(c[start..start + WORD_SAMPLES].iter().map(|&v| v as f32));
    }
    WordSegment::new(data, start + WORD_SAMPLES / 2, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub peaks: PeakParams,
    pub search: WordSearch,
    /// Words expected per trial.
    pub expected_words: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            peaks: PeakParams::default(),
            search: WordSearch::default(),
            expected_words: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    /// Segments in time order.
    pub segments: Vec<WordSegment>,
    pub consensus_peaks: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Detects, localizes and cuts every word of a trial envelope.
pub fn extract_words(envelope: &TimeSeries, config: &ExtractionConfig) -> Result<Extraction> {
    let peaks: PeakList = envelope
        .channels()
        .iter()
        .map(|c| detect_peaks(c, &config.peaks))
        .collect();
    let ConsensusPeaks {
        indices,
        mut warnings,
    } = localize_peaks(&peaks);
    if indices.len() < config.expected_words {
        let msg = format!(
            "found {} of {} expected words",
            indices.len(),
            config.expected_words
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let segments = indices
        .iter()
        .map(|&p| localize_word(envelope, p, &config.search))
        .collect::<Result<Vec<_>>>()?;
    Ok(Extraction {
        segments,
        consensus_peaks: indices,
        warnings,
    })
}
