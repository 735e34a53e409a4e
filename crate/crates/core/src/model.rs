//! Domain types shared by every stage of the pipeline.
//!
//! Units follow the W3C device motion/orientation model and are never
//! converted: accelerations in m/s², rotation rate in deg/s, orientation in
//! degrees, times in milliseconds.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of scalar sensor streams.
pub const CHANNEL_COUNT: usize = 12;

pub type Triple = [f64; 3];

/// One of the twelve scalar streams, in canonical feature order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    AccX,
    AccY,
    AccZ,
    AccGX,
    AccGY,
    AccGZ,
    RotRAlpha,
    RotRBeta,
    RotRGamma,
    OriAlpha,
    OriBeta,
    OriGamma,
}

impl Channel {
    pub const ALL: [Channel; CHANNEL_COUNT] = [
        Channel::AccX,
        Channel::AccY,
        Channel::AccZ,
        Channel::AccGX,
        Channel::AccGY,
        Channel::AccGZ,
        Channel::RotRAlpha,
        Channel::RotRBeta,
        Channel::RotRGamma,
        Channel::OriAlpha,
        Channel::OriBeta,
        Channel::OriGamma,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn sensor(self) -> Sensor {
        Sensor::ALL[self.index() / 3]
    }

    /// Axis within the sensor triple (0 = x/α, 1 = y/β, 2 = z/γ).
    pub fn axis(self) -> usize {
        self.index() % 3
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; CHANNEL_COUNT] = [
            "acc.x", "acc.y", "acc.z", "accG.x", "accG.y", "accG.z", "rotR.alpha", "rotR.beta",
            "rotR.gamma", "ori.alpha", "ori.beta", "ori.gamma",
        ];
        NAMES[self.index()]
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The four three-axis measurements delivered by the motion and orientation
/// listeners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sensor {
    Acc,
    AccG,
    RotR,
    Ori,
}

impl Sensor {
    pub const ALL: [Sensor; 4] = [Sensor::Acc, Sensor::AccG, Sensor::RotR, Sensor::Ori];

    pub fn channel(self, axis: usize) -> Channel {
        let base = match self {
            Sensor::Acc => 0,
            Sensor::AccG => 3,
            Sensor::RotR => 6,
            Sensor::Ori => 9,
        };
        Channel::ALL[base + axis]
    }

    pub fn name(self) -> &'static str {
        match self {
            Sensor::Acc => "acc",
            Sensor::AccG => "accG",
            Sensor::RotR => "rotR",
            Sensor::Ori => "ori",
        }
    }
}

/// One merged reading of both listeners. A missing triple is `None`; a triple
/// is never partially present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorSample {
    pub t: f64,
    pub acc: Option<Triple>,
    pub acc_g: Option<Triple>,
    pub rot_r: Option<Triple>,
    pub ori: Option<Triple>,
    pub interval: Option<f64>,
}

impl SensorSample {
    pub fn triple(&self, sensor: Sensor) -> Option<&Triple> {
        match sensor {
            Sensor::Acc => self.acc.as_ref(),
            Sensor::AccG => self.acc_g.as_ref(),
            Sensor::RotR => self.rot_r.as_ref(),
            Sensor::Ori => self.ori.as_ref(),
        }
    }

    pub fn value(&self, channel: Channel) -> Option<f64> {
        self.triple(channel.sensor()).map(|v| v[channel.axis()])
    }

    pub fn is_complete(&self) -> bool {
        Sensor::ALL.iter().all(|&s| self.triple(s).is_some())
    }

    pub fn has_motion(&self) -> bool {
        self.acc.is_some() || self.acc_g.is_some() || self.rot_r.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorTrace {
    pub samples: Vec<SensorSample>,
    pub session_id: String,
    pub device_label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationRule {
    EmptyTrace,
    NonFiniteTime,
    NegativeTime,
    NonIncreasingTime,
    NonFiniteValue(Channel),
    NonPositiveInterval,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Offending sample index; `None` for whole-trace rules.
    pub index: Option<usize>,
    pub rule: ViolationRule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match &self.rule {
            ViolationRule::EmptyTrace => "empty trace".to_string(),
            ViolationRule::NonFiniteTime => "non-finite t".to_string(),
            ViolationRule::NegativeTime => "negative t".to_string(),
            ViolationRule::NonIncreasingTime => "non-increasing t".to_string(),
            ViolationRule::NonFiniteValue(c) => format!("non-finite {c}"),
            ViolationRule::NonPositiveInterval => "non-positive interval".to_string(),
        };
        match self.index {
            Some(i) => write!(f, "sample {i}: {rule}"),
            None => f.write_str(&rule),
        }
    }
}

/// Checks every trace invariant; an empty result means the trace is usable.
pub fn validate_trace(trace: &SensorTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    if trace.samples.is_empty() {
        out.push(Violation {
            index: None,
            rule: ViolationRule::EmptyTrace,
        });
        return out;
    }
    let mut prev: Option<f64> = None;
    for (i, s) in trace.samples.iter().enumerate() {
        let at = |rule| Violation {
            index: Some(i),
            rule,
        };
        if !s.t.is_finite() {
            out.push(at(ViolationRule::NonFiniteTime));
        } else {
            if s.t < 0.0 {
                out.push(at(ViolationRule::NegativeTime));
            }
            if let Some(p) = prev {
                if s.t <= p {
                    out.push(at(ViolationRule::NonIncreasingTime));
                }
            }
            prev = Some(s.t);
        }
        for c in Channel::ALL {
            if let Some(v) = s.value(c) {
                if !v.is_finite() {
                    out.push(at(ViolationRule::NonFiniteValue(c)));
                }
            }
        }
        if let Some(iv) = s.interval {
            if !(iv.is_finite() && iv > 0.0) {
                out.push(at(ViolationRule::NonPositiveInterval));
            }
        }
    }
    out
}

/// A four-digit PIN.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pin([u8; 4]);

impl Pin {
    pub fn new(digits: [u8; 4]) -> Result<Self> {
        if digits.iter().any(|&d| d > 9) {
            return Err(Error::invalid(format!("PIN digits out of range: {digits:?}")));
        }
        Ok(Pin(digits))
    }

    pub fn digits(&self) -> [u8; 4] {
        self.0
    }
}

impl FromStr for Pin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() != 4 || !bytes.iter().all(u8::is_ascii_digit) {
            return Err(Error::invalid(format!(
                "PIN must be exactly 4 decimal digits, got {s:?}"
            )));
        }
        Ok(Pin([
            bytes[0] - b'0',
            bytes[1] - b'0',
            bytes[2] - b'0',
            bytes[3] - b'0',
        ]))
    }
}

impl fmt::Display for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pin({self})")
    }
}

impl Serialize for Pin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyEvent {
    pub t: f64,
    pub digit: u8,
    pub entry_index: u8,
    pub expected_pin: Pin,
    /// Filled once the four-digit entry is complete.
    pub entered_pin: Option<Pin>,
}

impl KeyEvent {
    pub fn new(
        t: f64,
        digit: u8,
        entry_index: u8,
        expected_pin: Pin,
        entered_pin: Option<Pin>,
    ) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::invalid(format!("key event time must be finite and >= 0, got {t}")));
        }
        if digit > 9 {
            return Err(Error::invalid(format!("digit must be 0-9, got {digit}")));
        }
        if entry_index > 3 {
            return Err(Error::invalid(format!(
                "entry index must be 0-3, got {entry_index}"
            )));
        }
        Ok(KeyEvent {
            t,
            digit,
            entry_index,
            expected_pin,
            entered_pin,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    Pin50,
    Digit10,
    Activity3,
}

impl DatasetMode {
    pub fn label_count(self) -> usize {
        match self {
            DatasetMode::Pin50 => 50,
            DatasetMode::Digit10 => 10,
            DatasetMode::Activity3 => 3,
        }
    }
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetMode::Pin50 => "pin50",
            DatasetMode::Digit10 => "digit10",
            DatasetMode::Activity3 => "activity3",
        })
    }
}

impl FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pin50" => Ok(DatasetMode::Pin50),
            "digit10" => Ok(DatasetMode::Digit10),
            "activity3" => Ok(DatasetMode::Activity3),
            other => Err(Error::invalid(format!(
                "unknown dataset mode {other:?} (expected pin50, digit10 or activity3)"
            ))),
        }
    }
}

/// A labelled slice of a trace: twelve sequences in canonical channel order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinEntrySegment {
    pub channels: Vec<Vec<f64>>,
    pub label: String,
    pub user_id: String,
    pub valid: bool,
}

impl PinEntrySegment {
    pub fn new(
        channels: Vec<Vec<f64>>,
        label: impl Into<String>,
        user_id: impl Into<String>,
        valid: bool,
    ) -> Result<Self> {
        let seg = PinEntrySegment {
            channels,
            label: label.into(),
            user_id: user_id.into(),
            valid,
        };
        seg.check()?;
        Ok(seg)
    }

    pub fn check(&self) -> Result<()> {
        if self.channels.len() != CHANNEL_COUNT {
            return Err(Error::Dimension {
                expected: CHANNEL_COUNT,
                actual: self.channels.len(),
            });
        }
        for (c, seq) in Channel::ALL.iter().zip(&self.channels) {
            if seq.len() < 2 {
                return Err(Error::Channel {
                    channel: *c,
                    source: Box::new(Error::invalid(format!(
                        "sequence has {} samples, at least 2 required",
                        seq.len()
                    ))),
                });
            }
        }
        Ok(())
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        &self.channels[c.index()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub segments: Vec<PinEntrySegment>,
    pub label_space: Vec<String>,
    pub mode: DatasetMode,
}

impl Dataset {
    pub fn new(
        segments: Vec<PinEntrySegment>,
        label_space: Vec<String>,
        mode: DatasetMode,
    ) -> Result<Self> {
        let ds = Dataset {
            segments,
            label_space,
            mode,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<()> {
        let expected = self.mode.label_count();
        if self.label_space.len() != expected {
            return Err(Error::invalid(format!(
                "{} mode requires {expected} labels, label space has {}",
                self.mode,
                self.label_space.len()
            )));
        }
        let known: HashSet<&str> = self.label_space.iter().map(String::as_str).collect();
        if known.len() != self.label_space.len() {
            return Err(Error::invalid("label space contains duplicates"));
        }
        for seg in &self.segments {
            if !known.contains(seg.label.as_str()) {
                return Err(Error::UnknownLabel(seg.label.clone()));
            }
            seg.check()?;
        }
        Ok(())
    }

    /// Segments usable for training and evaluation (`valid == true`).
    pub fn valid_segments(&self) -> impl Iterator<Item = &PinEntrySegment> {
        self.segments.iter().filter(|s| s.valid)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_space.iter().position(|l| l == label)
    }
}
