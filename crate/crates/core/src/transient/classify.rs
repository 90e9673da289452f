use serde::{Deserialize, Serialize};

use super::{Outcome, TransientResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub outcome: String,
    pub overshoot: f64,
    /// Time after the event until the signal stays within 1% of its peak
    /// deviation from the steady value.
    pub settling_time: Option<f64>,
    pub dominant_freq_hz: Option<f64>,
}

fn post_event<'a>(result: &'a TransientResult, signal: &str) -> Result<(&'a [f64], &'a [f64], f64)> {
    let s = result.signal(signal)?;
    let t0 = result.t_event();
    let from = result.t.partition_point(|&t| t <= t0);
    Ok((&result.t[from..], &s[from..], t0))
}

/// Peak `|signal − steady|` after the event.
pub fn overshoot(result: &TransientResult, signal: &str) -> Result<f64> {
    let steady = result.steady_value(signal)?;
    let (_, s, _) = post_event(result, signal)?;
    if s.is_empty() {
        return Err(Error::SeriesTooShort("no samples after the event".into()));
    }
    Ok(s.iter().fold(0.0f64, |m, v| m.max((v - steady).abs())))
}

/// First time (relative to the event) after which `|dev| ≤ band` holds for
/// the rest of the series.
pub fn settling_time(t: &[f64], dev: &[f64], t0: f64, band: f64) -> Option<f64> {
    let last_out = dev.iter().rposition(|d| d.abs() > band);
    match last_out {
        None => Some(0.0),
        Some(k) if k + 1 < t.len() => Some(t[k + 1] - t0),
        Some(_) => None,
    }
}

/// Dominant frequency from zero crossings of `dev`, ignoring wiggles smaller
/// than `hysteresis`.
pub fn zero_crossing_frequency(t: &[f64], dev: &[f64], hysteresis: f64) -> Result<f64> {
    let mut sign = 0i8;
    let mut crossings: Vec<f64> = Vec::new();
    for k in 0..dev.len() {
        let s = if dev[k] > hysteresis {
            1
        } else if dev[k] < -hysteresis {
            -1
        } else {
            continue;
        };
        if sign != 0 && s != sign {
            // Time of the last sign change before this sample.
            let mut j = k;
            while j > 0 && dev[j - 1].signum() as i8 == s {
                j -= 1;
            }
            let tc = if j > 0 {
                let (a, b) = (dev[j - 1], dev[j]);
                t[j - 1] + (t[j] - t[j - 1]) * a / (a - b)
            } else {
                t[0]
            };
            crossings.push(tc);
        }
        sign = s;
    }
    if crossings.len() < 3 {
        return Err(Error::SeriesTooShort(format!(
            "{} zero crossings; at least 3 are needed for a frequency estimate",
            crossings.len()
        )));
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Ok((crossings.len() - 1) as f64 / (2.0 * span))
}

pub fn classify(result: &TransientResult, signal: &str) -> Result<Classification> {
    let outcome = result.outcome.label().to_string();
    if !matches!(result.outcome, Outcome::Converged { .. }) {
        return Err(Error::NotConverged);
    }
    let steady = result.steady_value(signal)?;
    let (t, s, t0) = post_event(result, signal)?;
    let dev: Vec<f64> = s.iter().map(|v| v - steady).collect();
    let peak = dev.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let settling = settling_time(t, &dev, t0, 0.01 * peak);
    let freq = zero_crossing_frequency(t, &dev, 1e-3 * peak).ok();
    Ok(Classification {
        outcome,
        overshoot: peak,
        settling_time: settling,
        dominant_freq_hz: freq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn exponential_settling() {
        let t = grid(1e-4, 20_000);
        let dev: Vec<f64> = t.iter().map(|t| (-t / 0.1).exp()).collect();
        let ts = settling_time(&t, &dev, 0.0, 0.01).unwrap();
        assert!((ts - 100f64.ln() * 0.1).abs() < 1e-3, "{ts}");
    }

    #[test]
    fn damped_sine_frequency() {
        let t = grid(1e-4, 30_000);
        let dev: Vec<f64> = t.iter().map(|t| (-t).exp() * (2.0 * std::f64::consts::PI * 5.0 * t).sin()).collect();
        let f = zero_crossing_frequency(&t, &dev, 1e-3).unwrap();
        assert!((f - 5.0).abs() < 0.5, "{f}");
    }

    #[test]
    fn flat_series_is_too_short() {
        let t = grid(1e-3, 100);
        let dev = vec![0.0; 100];
        assert!(matches!(zero_crossing_frequency(&t, &dev, 1e-6), Err(Error::SeriesTooShort(_))));
        assert_eq!(settling_time(&t, &dev, 0.0, 0.0), Some(0.0));
    }
}
