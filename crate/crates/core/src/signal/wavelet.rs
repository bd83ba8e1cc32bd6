//! Discrete wavelet transform with half-sample symmetric extension, and
//! soft-threshold denoising.
//!
//! Coefficient layout and lengths follow the common convention where a
//! level of decomposition of `n` samples with a length-`F` filter produces
//! `floor((n + F - 1) / 2)` coefficients per band.

use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

/// Orthogonal wavelet given by its reconstruction low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    /// Daubechies, two vanishing moments (4 taps).
    #[default]
    Db2,
}

struct FilterBank {
    dec_lo: Vec<f64>,
    dec_hi: Vec<f64>,
    rec_lo: Vec<f64>,
    rec_hi: Vec<f64>,
}

impl Wavelet {
    fn bank(self) -> FilterBank {
        let rec_lo: Vec<f64> = match self {
            Wavelet::Db2 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * 2f64.sqrt();
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        };
        let f = rec_lo.len();
        let dec_lo: Vec<f64> = rec_lo.iter().rev().copied().collect();
        let rec_hi: Vec<f64> = (0..f)
            .map(|k| if k % 2 == 0 { dec_lo[k] } else { -dec_lo[k] })
            .collect();
        let dec_hi: Vec<f64> = rec_hi.iter().rev().copied().collect();
        FilterBank {
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }

    pub fn filter_len(self) -> usize {
        match self {
            Wavelet::Db2 => 4,
        }
    }
}

/// Index into a half-sample symmetric extension of a length-`n` signal.
fn symmetric_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn dwt_step(x: &[f64], bank: &FilterBank) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let f = bank.dec_lo.len();
    let out_len = (n + f - 1) / 2;
    let mut approx = Vec::with_capacity(out_len);
    let mut detail = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = 2 * i as isize + 1;
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..f {
            let v = x[symmetric_index(pos - j as isize, n)];
            a += bank.dec_lo[j] * v;
            d += bank.dec_hi[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

fn idwt_step(approx: &[f64], detail: &[f64], bank: &FilterBank) -> Vec<f64> {
    let m = approx.len();
    let f = bank.rec_lo.len();
    let out_len = 2 * m + 2 - f;
    let mut out = vec![0.0; out_len];
    for (o, slot) in out.iter_mut().enumerate() {
        // full upsampled convolution evaluated at n = o + f - 2
        let n = o + f - 2;
        let mut acc = 0.0;
        // only taps with 0 <= n - 2k < f contribute
        let k_lo = (n + 2).saturating_sub(f) / 2;
        let k_hi = (n / 2).min(m.saturating_sub(1));
        for k in k_lo..=k_hi {
            let j = n - 2 * k;
            acc += approx[k] * bank.rec_lo[j] + detail[k] * bank.rec_hi[j];
        }
        *slot = acc;
    }
    out
}

/// Multi-level decomposition `[a_L, d_L, ..., d_1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    pub approx: Vec<f64>,
    /// Detail bands, coarsest first (`details[0]` is level `L`).
    pub details: Vec<Vec<f64>>,
    pub signal_len: usize,
}

pub fn wavedec(x: &[f64], wavelet: Wavelet, level: usize) -> Result<WaveletCoeffs> {
    if level == 0 {
        return Err(Error::invalid("decomposition level must be at least 1"));
    }
    if x.len() < 1usize << level {
        return Err(Error::invalid(format!(
            "signal of {} samples is too short for a level-{level} decomposition",
            x.len()
        )));
    }
    let bank = wavelet.bank();
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(level);
    for _ in 0..level {
        let (a, d) = dwt_step(&approx, &bank);
        approx = a;
        details.push(d);
    }
    details.reverse();
    Ok(WaveletCoeffs {
        approx,
        details,
        signal_len: x.len(),
    })
}

pub fn waverec(coeffs: &WaveletCoeffs, wavelet: Wavelet) -> Vec<f64> {
    let bank = wavelet.bank();
    let mut approx = coeffs.approx.clone();
    for detail in &coeffs.details {
        if approx.len() == detail.len() + 1 {
            approx.pop();
        }
        approx = idwt_step(&approx, detail, &bank);
    }
    approx.truncate(coeffs.signal_len);
    approx
}

pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    let mag = x.abs() - threshold;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Minimax threshold scaled by the noise level estimated from the finest
/// detail band: `sigma * (0.3936 + 0.1829 * log2(n))`, with
/// `sigma = median(|d1|) / 0.6745`.
pub fn minimax_threshold(finest_detail: &[f64], signal_len: usize) -> f64 {
    let mut mags: Vec<f64> = finest_detail.iter().map(|d| d.abs()).collect();
    let sigma = median(&mut mags) / 0.6745;
    sigma * (0.3936 + 0.1829 * (signal_len as f64).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSpec {
    pub wavelet: Wavelet,
    pub level: usize,
    /// Replaces the minimax rule when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_override: Option<f64>,
}

impl Default for DenoiseSpec {
    fn default() -> Self {
        Self {
            wavelet: Wavelet::Db2,
            level: 4,
            threshold_override: None,
        }
    }
}

fn denoise_channel(x: &[f64], spec: &DenoiseSpec) -> Result<Vec<f64>> {
    let mut coeffs = wavedec(x, spec.wavelet, spec.level)?;
    let threshold = match spec.threshold_override {
        Some(t) => t,
        None => minimax_threshold(coeffs.details.last().expect("level >= 1"), x.len()),
    };
    for band in &mut coeffs.details {
        for d in band.iter_mut() {
            *d = soft_threshold(*d, threshold);
        }
    }
    Ok(waverec(&coeffs, spec.wavelet))
}

/// Per-channel wavelet shrinkage of all detail bands.
pub fn wavelet_denoise(ts: &TimeSeries, spec: &DenoiseSpec) -> Result<TimeSeries> {
    ts.try_map_channels(|c| denoise_channel(c, spec))
}
