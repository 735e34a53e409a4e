//! Device-event detection and coarse activity recognition from motion data.
//!
//! Both work on the magnitude of acceleration including gravity, which does
//! not depend on how the device is held.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::dft_magnitude;
use crate::model::SensorTrace;
use crate::synth::Activity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActivityWindowConfig {
    pub window_s: f64,
    pub hop_s: f64,
    /// Windows whose magnitude variance exceeds this ((m/s²)²) hold an event.
    pub event_var_threshold: f64,
    pub min_event_gap_s: f64,
    pub walking_band_hz: (f64, f64),
    pub running_band_hz: (f64, f64),
    /// Mean squared deviation ((m/s²)²) below which a window is sitting.
    pub sitting_energy_threshold: f64,
}

impl Default for ActivityWindowConfig {
    fn default() -> Self {
        ActivityWindowConfig {
            window_s: 4.0,
            hop_s: 1.0,
            event_var_threshold: 0.5,
            min_event_gap_s: 1.5,
            walking_band_hz: (1.2, 2.4),
            running_band_hz: (2.4, 4.5),
            sitting_energy_threshold: 0.2,
        }
    }
}

impl ActivityWindowConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [("window_s", self.window_s), ("hop_s", self.hop_s)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("event_var_threshold", self.event_var_threshold),
            ("min_event_gap_s", self.min_event_gap_s),
            ("sitting_energy_threshold", self.sitting_energy_threshold),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        let (w, r) = (self.walking_band_hz, self.running_band_hz);
        if !(0.0 <= w.0 && w.0 < w.1 && w.1 <= r.0 && r.0 < r.1) {
            return Err(Error::invalid(
                "frequency bands must be ordered and disjoint (walking below running)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventInterval {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowLabel {
    pub start_s: f64,
    pub label: Activity,
}

/// Sample times (s) and accG magnitudes of a trace, plus its sample period.
struct Magnitude {
    t: Vec<f64>,
    m: Vec<f64>,
    dt: f64,
}

impl Magnitude {
    fn new(trace: &SensorTrace) -> Result<Self> {
        if trace.samples.len() < 2 {
            return Err(Error::invalid("trace needs at least 2 samples"));
        }
        let mut t = Vec::with_capacity(trace.samples.len());
        let mut m = Vec::with_capacity(trace.samples.len());
        for (i, s) in trace.samples.iter().enumerate() {
            let g = s
                .acc_g
                .ok_or_else(|| Error::invalid(format!("sample {i} has no accG reading")))?;
            t.push(s.t / 1000.0);
            m.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let dt = gaps[gaps.len() / 2];
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::invalid("trace time must increase"));
        }
        Ok(Magnitude { t, m, dt })
    }

    fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0] + self.dt
    }

    /// Start time and sample range of every full window.
    fn windows(&self, cfg: &ActivityWindowConfig) -> Result<Vec<(f64, std::ops::Range<usize>)>> {
        let duration = self.duration();
        // Tolerance for durations that are whole multiples of the hop.
        let eps = 1e-9 * duration.max(1.0);
        if duration + eps < cfg.window_s {
            return Err(Error::invalid(format!(
                "trace lasts {duration:.3} s, shorter than one {} s window",
                cfg.window_s
            )));
        }
        let count = ((duration - cfg.window_s + eps) / cfg.hop_s).floor() as usize + 1;
        let t0 = self.t[0];
        Ok((0..count)
            .map(|w| {
                let start = t0 + w as f64 * cfg.hop_s;
                let lo = self.t.partition_point(|&t| t < start - eps);
                let hi = self.t.partition_point(|&t| t < start + cfg.window_s - eps);
                (start, lo..hi)
            })
            .collect())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mu = mean(x);
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / x.len() as f64
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Merges `(start, end)` spans that overlap or are closer than `gap`.
fn merge_spans(mut spans: Vec<(f64, f64)>, gap: f64) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match out.last_mut() {
            Some(last) if s - last.1 < gap => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Intervals in which the device was handled, e.g. picked up for a call.
///
/// Windows whose magnitude variance exceeds the threshold mark candidate
/// regions. Inside each region, samples deviating from the trace median by
/// more than the threshold's square root are grouped into intervals; deviating
/// samples less than `min_event_gap_s` apart share an interval.
pub fn detect_events(trace: &SensorTrace, cfg: &ActivityWindowConfig) -> Result<Vec<EventInterval>> {
    cfg.check()?;
    let mag = Magnitude::new(trace)?;
    let windows = mag.windows(cfg)?;
    let active: Vec<(f64, f64)> = windows
        .iter()
        .filter(|(_, r)| variance(&mag.m[r.clone()]) > cfg.event_var_threshold)
        .map(|(start, _)| (*start, start + cfg.window_s))
        .collect();
    let regions = merge_spans(active, 0.0);
    let baseline = median(&mag.m);
    let limit = cfg.event_var_threshold.sqrt();
    let mut spans = Vec::new();
    for (lo, hi) in regions {
        let a = mag.t.partition_point(|&t| t < lo);
        let b = mag.t.partition_point(|&t| t < hi);
        let hits: Vec<(f64, f64)> = (a..b)
            .filter(|&i| (mag.m[i] - baseline).abs() > limit)
            .map(|i| (mag.t[i], mag.t[i]))
            .collect();
        if hits.is_empty() {
            // Spread-out variation with no single large deviation.
            spans.push((lo, hi.min(mag.t[mag.t.len() - 1])));
        } else {
            // A quiet stretch inside the region separates two events.
            spans.extend(merge_spans(hits, cfg.min_event_gap_s));
        }
    }
    Ok(merge_spans(spans, cfg.min_event_gap_s)
        .into_iter()
        .map(|(start_s, end_s)| EventInterval { start_s, end_s })
        .collect())
}

/// Frequency (Hz) of the strongest non-DC component of `x`.
fn dominant_frequency(x: &[f64], fs: f64) -> Result<f64> {
    let mags = dft_magnitude(x)?;
    let n = mags.len();
    let best = (1..=n / 2)
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]).then(b.cmp(&a)))
        .unwrap_or(1);
    Ok(best as f64 * fs / n as f64)
}

fn band_distance(f: f64, band: (f64, f64)) -> f64 {
    if f < band.0 {
        band.0 - f
    } else if f > band.1 {
        f - band.1
    } else {
        0.0
    }
}

/// Labels every window as sitting, walking or running. A window is sitting
/// when the mean-removed magnitude carries little energy; otherwise its
/// dominant frequency decides, falling back to the nearest band.
pub fn classify_windows(trace: &SensorTrace, cfg: &ActivityWindowConfig) -> Result<Vec<WindowLabel>> {
    cfg.check()?;
    let mag = Magnitude::new(trace)?;
    let fs = 1.0 / mag.dt;
    mag.windows(cfg)?
        .into_iter()
        .map(|(start_s, range)| {
            let seg = &mag.m[range];
            if seg.len() < 2 {
                return Err(Error::invalid(format!("window at {start_s:.3} s has fewer than 2 samples")));
            }
            let mu = mean(seg);
            let centered: Vec<f64> = seg.iter().map(|v| v - mu).collect();
            let energy = centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64;
            let label = if energy < cfg.sitting_energy_threshold {
                Activity::Sitting
            } else {
                let f = dominant_frequency(&centered, fs)?;
                let (w, r) = (cfg.walking_band_hz, cfg.running_band_hz);
                if w.0 <= f && f < w.1 {
                    Activity::Walking
                } else if r.0 <= f && f <= r.1 {
                    Activity::Running
                } else if band_distance(f, w) <= band_distance(f, r) {
                    Activity::Walking
                } else {
                    Activity::Running
                }
            };
            Ok(WindowLabel { start_s, label })
        })
        .collect()
}

/// Windows lying entirely inside one interval of `truth`, paired with that
/// interval's activity.
pub fn interior_truth(
    windows: &[WindowLabel],
    truth: &[crate::synth::ActivityInterval],
    cfg: &ActivityWindowConfig,
) -> Vec<(WindowLabel, Activity)> {
    windows
        .iter()
        .filter_map(|w| {
            truth
                .iter()
                .find(|iv| iv.start_s <= w.start_s + 1e-9 && w.start_s + cfg.window_s <= iv.end_s + 1e-9)
                .map(|iv| (*w, iv.activity))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityReport {
    pub events: Vec<EventInterval>,
    pub windows: Vec<WindowLabel>,
}

pub fn analyze(trace: &SensorTrace, cfg: &ActivityWindowConfig) -> Result<ActivityReport> {
    Ok(ActivityReport {
        events: detect_events(trace, cfg)?,
        windows: classify_windows(trace, cfg)?,
    })
}
