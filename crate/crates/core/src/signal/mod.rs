//! Standard sEMG conditioning: raw recording to rectified RMS envelope.
//!
//! [`process_recording`] chains the five stages in order:
//! [`zero_mean`] → [`wavelet_denoise`] → [`butterworth_bandpass`] →
//! [`rectify`] → [`rms_envelope`].

mod butterworth;
pub mod recording;
mod wavelet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use butterworth::{
    butterworth_bandpass, BandpassDesign, FilterPhase, FilterSpec, SecondOrderSection, SosFilter,
};
pub use wavelet::{
    minimax_threshold, soft_threshold, wavedec, waverec, wavelet_denoise, DenoiseSpec, Wavelet,
    WaveletCoeffs,
};

/// Sample rate of the acquisition hardware.
pub const DEFAULT_SAMPLE_RATE: f64 = 1000.0;

/// Multi-channel sampled signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    channels: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl TimeSeries {
    /// Builds a series; all channels must be non-empty and of equal length.
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        let Some(first) = channels.first() else {
            return Err(Error::invalid("time series needs at least one channel"));
        };
        let len = first.len();
        if len == 0 {
            return Err(Error::invalid("empty channel"));
        }
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(Error::invalid(format!(
                "channel {i} has {} samples, expected {len}",
                c.len()
            )));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Applies `f` to every channel. Output channels must share a length.
    pub fn try_map_channels<F>(&self, mut f: F) -> Result<TimeSeries>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let channels = self
            .channels
            .iter()
            .map(|c| f(c))
            .collect::<Result<Vec<_>>>()?;
        TimeSeries::new(channels, self.sample_rate)
    }

    fn map_channels<F>(&self, mut f: F) -> TimeSeries
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        TimeSeries {
            channels: self.channels.iter().map(|c| f(c)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Subtracts each channel's arithmetic mean.
pub fn zero_mean(ts: &TimeSeries) -> TimeSeries {
    ts.map_channels(|c| {
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        c.iter().map(|v| v - mean).collect()
    })
}

/// Full-wave rectification.
pub fn rectify(ts: &TimeSeries) -> TimeSeries {
    ts.map_channels(|c| c.iter().map(|v| v.abs()).collect())
}

/// Sliding RMS window length in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub window_samples: usize,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        // 100 ms at 1 kHz
        Self {
            window_samples: 100,
        }
    }
}

impl EnvelopeSpec {
    pub fn validate(&self) -> Result<()> {
        let w = self.window_samples;
        if w == 0 || !w.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "envelope window must be even and positive, got {w}"
            )));
        }
        Ok(())
    }
}

/// RMS envelope over the valid range only.
///
/// Output sample `i` is the RMS of input samples `[i, i + N_w)`, i.e. the
/// window centred on input index `i + N_w / 2`. The output has
/// `L - N_w + 1` samples per channel; no edge padding is applied.
pub fn rms_envelope(ts: &TimeSeries, spec: EnvelopeSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let nw = spec.window_samples;
    if ts.len() < nw {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than the {nw}-sample envelope window",
            ts.len()
        )));
    }
    let scale = 1.0 / nw as f64;
    Ok(ts.map_channels(|c| {
        c.windows(nw)
            .map(|w| (w.iter().map(|v| v * v).sum::<f64>() * scale).sqrt())
            .collect()
    }))
}

/// Parameters of the full conditioning chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub denoise: DenoiseSpec,
    pub filter: FilterSpec,
    pub envelope: EnvelopeSpec,
}

/// Raw recording to RMS envelope. The envelope is shorter than the input by
/// `N_w - 1` samples; envelope index `i` aligns with raw index `i + N_w / 2`.
pub fn process_recording(raw: &TimeSeries, config: &PipelineConfig) -> Result<TimeSeries> {
    let centred = zero_mean(raw);
    let denoised = wavelet_denoise(&centred, &config.denoise)?;
    let filtered = butterworth_bandpass(&denoised, &config.filter)?;
    let rectified = rectify(&filtered);
    rms_envelope(&rectified, config.envelope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(c: Vec<f64>) -> TimeSeries {
        TimeSeries::new(vec![c], 1000.0).unwrap()
    }

    #[test]
    fn rejects_ragged_or_empty_channels() {
        assert!(TimeSeries::new(vec![vec![1.0], vec![1.0, 2.0]], 1000.0).is_err());
        assert!(TimeSeries::new(vec![vec![]], 1000.0).is_err());
        assert!(TimeSeries::new(vec![], 1000.0).is_err());
        assert!(TimeSeries::new(vec![vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn zero_mean_examples() {
        assert_eq!(zero_mean(&series(vec![1.0, 2.0, 3.0])).channel(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(zero_mean(&series(vec![0.0; 5])).channel(0), &[0.0; 5]);
        assert_eq!(zero_mean(&series(vec![4.5; 7])).channel(0), &[0.0; 7]);
    }

    #[test]
    fn zero_mean_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c: Vec<f64> = (0..1000).map(|_| rng.gen_range(-5.0..50.0)).collect();
        let out = zero_mean(&series(c));
        let mean = out.channel(0).iter().sum::<f64>() / 1000.0;
        assert!(mean.abs() < 1e-9 * 50.0);
    }

    #[test]
    fn rectify_examples() {
        assert_eq!(rectify(&series(vec![-1.0, 2.0, -3.0])).channel(0), &[1.0, 2.0, 3.0]);
        let pos = series(vec![0.0, 0.5, 9.0]);
        assert_eq!(rectify(&pos), pos);
        let x = series(vec![-0.3, 0.2, -7.0, 1.0]);
        assert_eq!(rectify(&rectify(&x)), rectify(&x));
    }

    #[test]
    fn envelope_of_constant() {
        for nw in [2, 10, 100] {
            let out = rms_envelope(&series(vec![0.7; 300]), EnvelopeSpec { window_samples: nw }).unwrap();
            assert_eq!(out.len(), 300 - nw + 1);
            assert!(out.channel(0).iter().all(|v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn envelope_of_impulse() {
        let a = 3.0;
        let mut c = vec![0.0; 1000];
        c[400] = a;
        let out = rms_envelope(&series(c), EnvelopeSpec::default()).unwrap();
        let expected = (a * a / 100.0_f64).sqrt();
        for (i, v) in out.channel(0).iter().enumerate() {
            // window of output i covers input [i, i + 100)
            let covers = i <= 400 && 400 < i + 100;
            let want = if covers { expected } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "i={i} v={v}");
        }
    }

    #[test]
    fn envelope_rejects_short_or_odd_window() {
        assert!(rms_envelope(&series(vec![1.0; 50]), EnvelopeSpec::default()).is_err());
        assert!(rms_envelope(&series(vec![1.0; 50]), EnvelopeSpec { window_samples: 3 }).is_err());
        assert!(rms_envelope(&series(vec![1.0; 50]), EnvelopeSpec { window_samples: 0 }).is_err());
    }

    #[test]
    fn pipeline_of_zero_recording_is_zero() {
        let raw = TimeSeries::new(vec![vec![0.0; 3000]; 3], 1000.0).unwrap();
        let env = process_recording(&raw, &PipelineConfig::default()).unwrap();
        assert_eq!(env.len(), 3000 - 99);
        assert!(env.channels().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn pipeline_equals_manual_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = TimeSeries::new(
            (0..3).map(|_| (0..2048).map(|_| rng.gen_range(-1.0..1.0) + 0.3).collect()).collect(),
            1000.0,
        )
        .unwrap();
        let cfg = PipelineConfig::default();
        let manual = {
            let a = zero_mean(&raw);
            let b = wavelet_denoise(&a, &cfg.denoise).unwrap();
            let c = butterworth_bandpass(&b, &cfg.filter).unwrap();
            let d = rectify(&c);
            rms_envelope(&d, cfg.envelope).unwrap()
        };
        assert_eq!(process_recording(&raw, &cfg).unwrap(), manual);
    }
}
