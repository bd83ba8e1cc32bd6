//! Butterworth IIR design by bilinear transform with frequency pre-warping,
//! realized as cascaded second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

/// How the two corner frequencies are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandpassDesign {
    /// High-pass at the lower corner followed by low-pass at the upper
    /// corner, each of the full order.
    #[default]
    Cascade,
    /// One band-pass design whose total order equals `order`.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterPhase {
    /// Single forward pass.
    #[default]
    Causal,
    /// Forward then backward pass; squares the magnitude response.
    ZeroPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub high_pass_hz: f64,
    pub low_pass_hz: f64,
    #[serde(default)]
    pub design: BandpassDesign,
    #[serde(default)]
    pub phase: FilterPhase,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 10,
            high_pass_hz: 20.0,
            low_pass_hz: 400.0,
            design: BandpassDesign::Cascade,
            phase: FilterPhase::Causal,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "filter order must be even and >= 2, got {}",
                self.order
            )));
        }
        let nyquist = sample_rate / 2.0;
        if !(0.0 < self.high_pass_hz && self.high_pass_hz < self.low_pass_hz && self.low_pass_hz < nyquist) {
            return Err(Error::invalid(format!(
                "corners must satisfy 0 < {} < {} < {nyquist} (Nyquist)",
                self.high_pass_hz, self.low_pass_hz
            )));
        }
        Ok(())
    }

    /// Builds the digital filter for the given sample rate.
    pub fn design(&self, sample_rate: f64) -> Result<SosFilter> {
        self.validate(sample_rate)?;
        Ok(match self.design {
            BandpassDesign::Cascade => {
                let mut sos = SosFilter::highpass(self.order, self.high_pass_hz, sample_rate);
                sos.sections
                    .extend(SosFilter::lowpass(self.order, self.low_pass_hz, sample_rate).sections);
                sos
            }
            BandpassDesign::Single => {
                SosFilter::bandpass(self.order / 2, self.high_pass_hz, self.low_pass_hz, sample_rate)
            }
        })
    }
}

/// `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderSection {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl SecondOrderSection {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (1.0 + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Direct form II transposed, zero initial state.
    fn apply_in_place(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = b0 * input + s1;
            s1 = b1 * input - a1 * out + s2;
            s2 = b2 * input - a2 * out;
            *v = out;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosFilter {
    pub sections: Vec<SecondOrderSection>,
}

/// Left-half-plane poles of the order-`n` analog prototype with unit cutoff.
fn prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Groups digital poles into conjugate pairs (or pairs of real poles) and
/// assigns two real zeros to each section.
fn to_sections(poles: &[Complex64], zeros: &[f64]) -> Vec<SecondOrderSection> {
    const IMAG_TOL: f64 = 1e-12;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IMAG_TOL).collect();
    upper.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= IMAG_TOL)
        .map(|p| p.re)
        .collect();
    real.sort_by(f64::total_cmp);
    debug_assert_eq!(real.len() % 2, 0);

    let mut denominators: Vec<[f64; 3]> = upper
        .iter()
        .map(|p| [1.0, -2.0 * p.re, p.norm_sqr()])
        .collect();
    denominators.extend(real.chunks(2).map(|r| [1.0, -(r[0] + r[1]), r[0] * r[1]]));

    denominators
        .into_iter()
        .zip(zeros.chunks(2))
        .map(|(a, z)| SecondOrderSection {
            b: [1.0, -(z[0] + z[1]), z[0] * z[1]],
            a,
        })
        .collect()
}

impl SosFilter {
    fn normalized(mut sections: Vec<SecondOrderSection>, reference_hz: f64, fs: f64) -> Self {
        let gain = SosFilter {
            sections: sections.clone(),
        }
        .response(reference_hz, fs)
        .norm();
        for c in &mut sections[0].b {
            *c /= gain;
        }
        Self { sections }
    }

    /// Order-`order` low-pass (order even).
    pub fn lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Self {
        let w = prewarp(cutoff_hz, fs);
        let poles: Vec<_> = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(p * w, fs))
            .collect();
        let zeros = vec![-1.0; order];
        Self::normalized(to_sections(&poles, &zeros), 0.0, fs)
    }

    /// Order-`order` high-pass (order even).
    pub fn highpass(order: usize, cutoff_hz: f64, fs: f64) -> Self {
        let w = prewarp(cutoff_hz, fs);
        let poles: Vec<_> = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(w / p, fs))
            .collect();
        let zeros = vec![1.0; order];
        Self::normalized(to_sections(&poles, &zeros), fs / 2.0, fs)
    }

    /// Band-pass from an order-`prototype_order` low-pass prototype; the
    /// resulting filter has order `2 * prototype_order`.
    pub fn bandpass(prototype_order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Self {
        let w1 = prewarp(low_hz, fs);
        let w2 = prewarp(high_hz, fs);
        let bw = w2 - w1;
        let w0_sq = w1 * w2;
        let mut poles = Vec::with_capacity(2 * prototype_order);
        for p in prototype_poles(prototype_order) {
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0_sq).sqrt();
            poles.push(bilinear((pb + disc) / 2.0, fs));
            poles.push(bilinear((pb - disc) / 2.0, fs));
        }
        let zeros: Vec<f64> = (0..2 * prototype_order)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let centre_hz = fs / PI * (w0_sq.sqrt() / (2.0 * fs)).atan();
        Self::normalized(to_sections(&poles, &zeros), centre_hz, fs)
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs: f64) -> f64 {
        20.0 * self.response(freq_hz, fs).norm().log10()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.apply_in_place(&mut y);
        }
        y
    }

    /// Forward-backward filtering without edge padding.
    pub fn apply_zero_phase(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.apply(x);
        y.reverse();
        let mut y = self.apply(&y);
        y.reverse();
        y
    }

    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }
}

/// Band-limits each channel.
pub fn butterworth_bandpass(ts: &TimeSeries, spec: &FilterSpec) -> Result<TimeSeries> {
    let filter = spec.design(ts.sample_rate())?;
    ts.try_map_channels(|c| {
        Ok(match spec.phase {
            FilterPhase::Causal => filter.apply(c),
            FilterPhase::ZeroPhase => filter.apply_zero_phase(c),
        })
    })
}
