//! Temperature softmax, cross-entropy and KL divergence, with the vector-
//! Jacobian products used by the training objectives.

use crate::{Error, Result};

/// Probabilities below this are clamped before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {t}")))
    }
}

/// `softmax(z / t)`, stabilized by subtracting the maximum.
pub fn t_softmax(z: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    if z.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    Ok(softmax_unchecked(z, t))
}

pub(crate) fn softmax_unchecked(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|&v| ((v - max) / t).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// `log softmax(z / t)`.
pub fn log_t_softmax(z: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|&v| ((v - max) / t).exp()).sum::<f64>().ln();
    Ok(z.iter().map(|&v| (v - max) / t - lse).collect())
}

/// Given `p = t_softmax(z, t)` and `dL/dp`, returns `dL/dz`.
pub fn t_softmax_backward(p: &[f64], t: f64, dp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(&pi, &g)| pi * (g - dot) / t).collect()
}

/// `-ln p[label]`, clamped.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or_else(|| {
        Error::invalid(format!("label {label} outside [0, {})", probs.len()))
    })?;
    Ok(-p.max(LOG_CLAMP).ln())
}

/// `dL/dp` of [`cross_entropy`].
pub fn cross_entropy_backward(probs: &[f64], label: usize) -> Vec<f64> {
    let mut g = vec![0.0; probs.len()];
    if probs[label] > LOG_CLAMP {
        g[label] = -1.0 / probs[label];
    }
    g
}

/// `sum p_i ln(p_i / q_i)` with `0 ln 0 = 0` and `q` clamped.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distributions differ in length: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(LOG_CLAMP).ln()))
        .sum())
}

/// Partial derivatives of [`kl_divergence`] with respect to `p` and `q`
/// (for strictly positive arguments).
pub fn kl_divergence_backward(p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dp = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| pi.ln() - qi.max(LOG_CLAMP).ln() + 1.0)
        .collect();
    let dq = p.iter().zip(q).map(|(&pi, &qi)| -pi / qi.max(LOG_CLAMP)).collect();
    (dp, dq)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
