//! Synthetic PIN-entry sessions and activity traces with known ground truth.
//!
//! Taps are modelled on a 3×4 keypad: a key's offset from the device centre
//! sets the sign and size of a short acceleration pulse, a derivative-shaped
//! rotation-rate pulse and a smoothed orientation step. Nothing here is a
//! measured model; it only has to give each digit position its own signature.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ingest::SessionMeta;
use crate::model::{KeyEvent, Pin, SensorSample, SensorTrace, Triple};

pub const GRAVITY: f64 = 9.81;

const PIN_COUNT: usize = 50;
/// Idle time before the first key of each entry.
const ENTRY_LEAD_MS: f64 = 600.0;
/// Idle time after the last key of each entry.
const ENTRY_TAIL_MS: f64 = 1500.0;
/// The hand relaxes this long after the last key of an entry.
const RELAX_DELAY_MS: f64 = 600.0;
const RELAX_MS: f64 = 400.0;
/// Rotation-rate amplitude (deg/s) and orientation step (deg) per unit offset
/// and unit `tap_amp`.
const ROT_GAIN: f64 = 20.0;
const ORI_GAIN: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub n_users: usize,
    /// Empty means `make_pin_list(seed)`.
    pub pins: Vec<Pin>,
    pub reps: usize,
    pub tap_amp: f64,
    pub tap_width_ms: f64,
    pub noise_sigma: f64,
    pub user_jitter: f64,
    pub inter_key_ms: f64,
    /// Probability that an entry is mistyped (one digit replaced).
    pub error_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            sample_rate_hz: 60.0,
            n_users: 10,
            pins: Vec::new(),
            reps: 5,
            tap_amp: 1.0,
            tap_width_ms: 120.0,
            noise_sigma: 0.05,
            user_jitter: 0.1,
            inter_key_ms: 400.0,
            error_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("sample_rate_hz", self.sample_rate_hz),
            ("tap_amp", self.tap_amp),
            ("tap_width_ms", self.tap_width_ms),
            ("inter_key_ms", self.inter_key_ms),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        if !(self.user_jitter.is_finite() && self.user_jitter >= 0.0) {
            return Err(Error::invalid("user_jitter must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(Error::invalid("error_rate must be in [0, 1]"));
        }
        if self.n_users == 0 || self.reps == 0 {
            return Err(Error::invalid("n_users and reps must be at least 1"));
        }
        Ok(())
    }

    pub fn period_ms(&self) -> f64 {
        1000.0 / self.sample_rate_hz
    }

    /// The configured PIN list, or the balanced list for `seed`.
    pub fn pin_list(&self) -> Vec<Pin> {
        if self.pins.is_empty() {
            make_pin_list(self.seed)
        } else {
            self.pins.clone()
        }
    }

    fn samples(&self, ms: f64) -> usize {
        (ms / self.period_ms()).round() as usize
    }
}

/// 50 distinct PINs in which every digit fills exactly 20 of the 200 slots.
pub fn make_pin_list(seed: u64) -> Vec<Pin> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<u8> = (0..10u8).flat_map(|d| std::iter::repeat_n(d, PIN_COUNT * 4 / 10)).collect();
    loop {
        slots.shuffle(&mut rng);
        let pins: Vec<Pin> = slots
            .chunks_exact(4)
            .map(|c| Pin::new([c[0], c[1], c[2], c[3]]).expect("digits are 0-9"))
            .collect();
        let mut sorted = pins.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() == PIN_COUNT {
            return pins;
        }
    }
}

/// Offset of a digit's key from the keypad centre, in key units
/// (x to the right, y up). `0` sits bottom-centre.
pub fn key_offset(digit: u8) -> (f64, f64) {
    let (row, col) = match digit {
        0 => (3, 1),
        d => ((d - 1) / 3, (d - 1) % 3),
    };
    (f64::from(col) - 1.0, 1.5 - f64::from(row))
}

/// Seed for one (user, rep) substream.
pub fn substream_seed(seed: u64, user: usize, rep: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ user as u64) ^ rep as u64)
}

/// Per-user constants: a gain per sensor and a resting orientation.
#[derive(Clone, Debug)]
struct UserProfile {
    gain: [f64; 4],
    base_ori: Triple,
}

impl UserProfile {
    fn new(cfg: &SynthConfig, user: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, user, usize::MAX));
        let mut gain = [1.0; 4];
        for g in &mut gain {
            let eta: f64 = StandardNormal.sample(&mut rng);
            *g = 1.0 + cfg.user_jitter * eta;
        }
        let base_ori = [
            rng.random_range(0.0..360.0),
            rng.random_range(20.0..60.0),
            rng.random_range(-10.0..10.0),
        ];
        UserProfile { gain, base_ori }
    }
}

/// Twelve channel buffers in sensor order acc, accG, rotR, ori.
struct Channels {
    data: Vec<[Vec<f64>; 3]>,
}

impl Channels {
    fn zeros(n: usize) -> Self {
        Channels {
            data: (0..4).map(|_| [vec![0.0; n], vec![0.0; n], vec![0.0; n]]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.data[0][0].len()
    }

    fn add(&mut self, sensor: usize, i: usize, v: Triple) {
        for a in 0..3 {
            self.data[sensor][a][i] += v[a];
        }
    }

    fn into_trace(self, cfg: &SynthConfig, noise_seed: u64, session_id: String) -> SensorTrace {
        let n = self.len();
        let period = cfg.period_ms();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("noise_sigma checked");
        let mut draw = |x: f64| if cfg.noise_sigma > 0.0 { x + noise.sample(&mut rng) } else { x };
        let samples = (0..n)
            .map(|i| {
                let mut tr = [[0.0; 3]; 4];
                for (s, t) in tr.iter_mut().enumerate() {
                    for (a, v) in t.iter_mut().enumerate() {
                        *v = draw(self.data[s][a][i]);
                    }
                }
                SensorSample {
                    t: i as f64 * period,
                    acc: Some(tr[0]),
                    acc_g: Some(tr[1]),
                    rot_r: Some(tr[2]),
                    ori: Some(tr[3]),
                    interval: Some(period),
                }
            })
            .collect();
        SensorTrace {
            samples,
            session_id,
            device_label: format!("synthetic-{}hz", cfg.sample_rate_hz),
        }
    }
}

fn half_sine(tau: f64, width: f64) -> f64 {
    if (0.0..=width).contains(&tau) {
        (PI * tau / width).sin()
    } else {
        0.0
    }
}

fn full_sine(tau: f64, width: f64) -> f64 {
    if (0.0..=width).contains(&tau) {
        (2.0 * PI * tau / width).sin()
    } else {
        0.0
    }
}

fn half_cosine(tau: f64, width: f64) -> f64 {
    if (0.0..=width).contains(&tau) {
        (PI * tau / width).cos()
    } else {
        0.0
    }
}

/// Raised-cosine step from 0 to 1 over `width`.
fn smooth_step(tau: f64, width: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else if tau >= width {
        1.0
    } else {
        0.5 * (1.0 - (PI * tau / width).cos())
    }
}

/// One generated session with its header metadata.
#[derive(Clone, Debug)]
pub struct SynthSession {
    pub meta: SessionMeta,
    pub trace: SensorTrace,
    pub events: Vec<KeyEvent>,
}

pub fn user_id(user: usize) -> String {
    format!("user{user:02}")
}

fn mistype(pin: Pin, rng: &mut ChaCha8Rng) -> Pin {
    let mut d = pin.digits();
    let slot = rng.random_range(0..4);
    d[slot] = (d[slot] + rng.random_range(1..10)) % 10;
    Pin::new(d).expect("digits are 0-9")
}

/// Generates one session in which `user` enters each PIN of `pins` once, in
/// order. `rep` selects the noise substream.
pub fn gen_session(cfg: &SynthConfig, user: usize, rep: usize, pins: &[Pin]) -> Result<SynthSession> {
    cfg.check()?;
    let period = cfg.period_ms();
    let lead = cfg.samples(ENTRY_LEAD_MS);
    let step = cfg.samples(cfg.inter_key_ms).max(1);
    let slot = lead + 3 * step + cfg.samples(ENTRY_TAIL_MS.max(RELAX_DELAY_MS + RELAX_MS + cfg.tap_width_ms));
    let n = lead + slot * pins.len();
    let profile = UserProfile::new(cfg, user);
    let stream = substream_seed(cfg.seed, user, rep);
    let mut typo_rng = ChaCha8Rng::seed_from_u64(stream ^ 0x5EED);

    let mut ch = Channels::zeros(n);
    let width = cfg.tap_width_ms;
    let reach = (width / period).ceil() as usize + 1;
    let relax_reach = ((RELAX_DELAY_MS + RELAX_MS) / period).ceil() as usize + 1;
    let mut events = Vec::with_capacity(4 * pins.len());

    for (e, pin) in pins.iter().enumerate() {
        let entered = if cfg.error_rate > 0.0 && typo_rng.random_bool(cfg.error_rate) {
            mistype(*pin, &mut typo_rng)
        } else {
            *pin
        };
        let first = lead + e * slot + lead;
        let mut ori_total = [0.0; 3];
        let mut last_idx = 0;
        for (k, &digit) in entered.digits().iter().enumerate() {
            let idx = first + k * step;
            // Keys fall halfway between samples so window edges never tie.
            let tk = (idx as f64 + 0.5) * period;
            last_idx = idx;
            let (dx, dy) = key_offset(digit);
            let a = cfg.tap_amp;
            let acc_amp = [a * dx * profile.gain[0], a * dy * profile.gain[0], -a * profile.gain[0]];
            let rot_amp = [ROT_GAIN * a * dx * dy, ROT_GAIN * a * dy, ROT_GAIN * a * dx];
            let ori_amp = [ORI_GAIN * a * dx * dy, ORI_GAIN * a * dy, ORI_GAIN * a * dx];
            for (o, v) in ori_total.iter_mut().zip(ori_amp) {
                *o += v * profile.gain[3];
            }
            for i in idx.saturating_sub(1)..(idx + reach).min(n) {
                let tau = (i as f64 - idx as f64 - 0.5) * period;
                let p = half_sine(tau, width);
                let q = half_cosine(tau, width);
                let acc = acc_amp.map(|v| v * p);
                ch.add(0, i, acc);
                ch.add(1, i, acc.map(|v| v * profile.gain[1] / profile.gain[0]));
                ch.add(2, i, rot_amp.map(|v| v * q * profile.gain[2]));
            }
            let end = (first + 3 * step + relax_reach).min(n);
            for i in idx.saturating_sub(1)..end {
                let s = smooth_step((i as f64 - idx as f64 - 0.5) * period, width);
                ch.add(3, i, ori_amp.map(|v| v * profile.gain[3] * s));
            }
            let is_last = k == 3;
            events.push(KeyEvent::new(
                tk,
                digit,
                k as u8,
                *pin,
                is_last.then_some(entered),
            )?);
        }
        // Relax back to the resting orientation.
        let end = (first + 3 * step + relax_reach).min(n);
        for i in first..end {
            let r = smooth_step((i as f64 - last_idx as f64 - 0.5) * period - RELAX_DELAY_MS, RELAX_MS);
            ch.add(3, i, ori_total.map(|v| -v * r));
        }
    }
    for i in 0..n {
        ch.add(1, i, [0.0, 0.0, GRAVITY]);
        ch.add(3, i, profile.base_ori);
    }
    let session_id = format!("synth-{}-r{rep}", user_id(user));
    let meta = SessionMeta {
        session_id: session_id.clone(),
        user_id: user_id(user),
        device_label: format!("synthetic-{}hz", cfg.sample_rate_hz),
        created: "1970-01-01T00:00:00Z".to_string(),
    };
    Ok(SynthSession {
        meta,
        trace: ch.into_trace(cfg, stream, session_id),
        events,
    })
}

/// All `n_users × reps` sessions, each holding every PIN once in a shuffled
/// order.
pub fn gen_sessions(cfg: &SynthConfig) -> Result<Vec<SynthSession>> {
    cfg.check()?;
    let pins = cfg.pin_list();
    let jobs: Vec<(usize, usize)> = (0..cfg.n_users).flat_map(|u| (0..cfg.reps).map(move |r| (u, r))).collect();
    jobs.into_par_iter()
        .map(|(user, rep)| {
            let mut order = pins.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, user, rep) ^ 0x0DE5));
            gen_session(cfg, user, rep, &order)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Sitting,
    Walking,
    Running,
    CallEvent,
}

impl Activity {
    pub fn name(self) -> &'static str {
        match self {
            Activity::Sitting => "sitting",
            Activity::Walking => "walking",
            Activity::Running => "running",
            Activity::CallEvent => "call_event",
        }
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sitting" => Ok(Activity::Sitting),
            "walking" => Ok(Activity::Walking),
            "running" => Ok(Activity::Running),
            "call_event" => Ok(Activity::CallEvent),
            other => Err(Error::invalid(format!("unknown activity {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub activity: Activity,
    pub start_s: f64,
    pub end_s: f64,
}

/// Length of the pick-up and put-down transients of a call.
pub const CALL_TRANSIENT_S: f64 = 2.0;
/// Tilt (deg) of the device while held to the ear.
const CALL_TILT_DEG: f64 = 70.0;
/// Lift and set-down jerk along the device z axis.
const CALL_JERK: f64 = 3.0;
/// Hand sway along the device y axis while the phone is held.
const CALL_SWAY: f64 = 2.0;
const CALL_SWAY_HZ: f64 = 0.8;

/// Walking and running: vertical bounce at the step frequency plus a smaller
/// lateral sway at half of it.
fn gait(activity: Activity) -> Option<(f64, f64)> {
    match activity {
        Activity::Walking => Some((1.8, 1.5)),
        Activity::Running => Some((3.0, 4.0)),
        _ => None,
    }
}

/// A trace following `script` (activity name, duration in seconds) and the
/// exact interval of every step.
pub fn gen_activity_trace<S: AsRef<str>>(
    cfg: &SynthConfig,
    script: &[(S, f64)],
) -> Result<(SensorTrace, Vec<ActivityInterval>)> {
    cfg.check()?;
    if script.is_empty() {
        return Err(Error::invalid("activity script is empty"));
    }
    let mut truth = Vec::with_capacity(script.len());
    let mut t0 = 0.0;
    for (name, dur) in script {
        let activity: Activity = name.as_ref().parse()?;
        if !(dur.is_finite() && *dur > 0.0) {
            return Err(Error::invalid(format!("duration must be positive, got {dur}")));
        }
        truth.push(ActivityInterval {
            activity,
            start_s: t0,
            end_s: t0 + dur,
        });
        t0 += dur;
    }
    let fs = cfg.sample_rate_hz;
    let total: f64 = truth.last().map_or(0.0, |iv| iv.end_s);
    let n = (total * fs).round() as usize;
    let profile = UserProfile::new(cfg, 0);
    let mut ch = Channels::zeros(n);
    let mut step = 0;
    for i in 0..n {
        let t = i as f64 / fs;
        while step + 1 < truth.len() && t >= truth[step].end_s {
            step += 1;
        }
        let iv = &truth[step];
        let tau = t - iv.start_s;
        let (mut lin, mut tilt, mut tilt_rate) = ([0.0; 3], 0.0, 0.0);
        if let Some((f, amp)) = gait(iv.activity) {
            let w = 2.0 * PI * f;
            lin = [0.2 * amp * (0.5 * w * tau).sin(), 0.0, amp * (w * tau).sin()];
            tilt = 2.0 * (0.5 * w * tau).sin();
            tilt_rate = w * (0.5 * w * tau).cos();
        } else if iv.activity == Activity::CallEvent {
            let dur = iv.end_s - iv.start_s;
            let tr = CALL_TRANSIENT_S.min(dur / 2.0);
            let up = smooth_step(tau, tr);
            let down = smooth_step(tau - (dur - tr), tr);
            let level = up - down;
            tilt = CALL_TILT_DEG * level;
            let rate = |x: f64| if (0.0..tr).contains(&x) { 0.5 * PI / tr * (PI * x / tr).sin() } else { 0.0 };
            tilt_rate = CALL_TILT_DEG * (rate(tau) - rate(tau - (dur - tr)));
            let jerk = CALL_JERK * (full_sine(tau, tr) - full_sine(tau - (dur - tr), tr));
            let sway = CALL_SWAY * level * (2.0 * PI * CALL_SWAY_HZ * tau).sin();
            lin = [0.0, sway, jerk];
        }
        let lin = lin.map(|v| v * profile.gain[0]);
        let th = tilt.to_radians();
        // Gravity in device coordinates while pitched by `tilt` about x.
        let g = [0.0, GRAVITY * th.sin(), GRAVITY * th.cos()];
        ch.add(0, i, lin);
        ch.add(1, i, [lin[0] + g[0], lin[1] + g[1], lin[2] + g[2]]);
        ch.add(2, i, [0.0, tilt_rate, 0.0]);
        ch.add(3, i, [profile.base_ori[0], profile.base_ori[1] + tilt, profile.base_ori[2]]);
    }
    let trace = ch.into_trace(cfg, substream_seed(cfg.seed, 0, 0), "synth-activity".into());
    Ok((trace, truth))
}

/// Between-class over within-class scatter on standardised features. Larger
/// means classes are easier to tell apart.
pub fn separation(rows: &[FeatureVector]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let dim = rows[0].values.len();
    let n = rows.len() as f64;
    let mut classes: std::collections::BTreeMap<&str, Vec<&FeatureVector>> = Default::default();
    for r in rows {
        classes.entry(r.label.as_str()).or_default().push(r);
    }
    let (mut between, mut within) = (0.0, 0.0);
    for f in 0..dim {
        let mean = rows.iter().map(|r| r.values[f]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.values[f] - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            continue;
        }
        for members in classes.values() {
            let m = members.len() as f64;
            let cm = members.iter().map(|r| r.values[f]).sum::<f64>() / m;
            between += m * (cm - mean).powi(2) / var;
            within += members.iter().map(|r| (r.values[f] - cm).powi(2)).sum::<f64>() / var;
        }
    }
    if within == 0.0 {
        f64::INFINITY
    } else {
        between / within
    }
}
