//! Session files and keydown-anchored segmentation.
//!
//! A session file is UTF-8 with one JSON object per line:
//!
//! ```text
//! {"k":"h","session":"<id>","user":"<id>","device":"<text>","created":"<ISO-8601>"}
//! {"k":"s","t":<ms>,"acc":[x,y,z],"accG":[x,y,z],"rotR":[a,b,g],"ori":[a,b,g],"interval":<ms or null>}
//! {"k":"e","t":<ms>,"digit":<0-9>,"idx":<0-3>,"expected":"dddd","entered":"dddd or null"}
//! ```
//!
//! The header must be the first line. Any of the four sample triples may be
//! `null`. The same record types are used by the collection server, so files
//! written by either side parse here bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Channel, KeyEvent, Pin, PinEntrySegment, SensorSample, SensorTrace, Triple, CHANNEL_COUNT,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub session: String,
    pub user: String,
    pub device: String,
    pub created: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    #[serde(default)]
    pub acc: Option<Triple>,
    #[serde(default, rename = "accG")]
    pub acc_g: Option<Triple>,
    #[serde(default, rename = "rotR")]
    pub rot_r: Option<Triple>,
    #[serde(default)]
    pub ori: Option<Triple>,
    #[serde(default)]
    pub interval: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub t: f64,
    pub digit: u8,
    pub idx: u8,
    pub expected: Pin,
    #[serde(default)]
    pub entered: Option<Pin>,
}

/// One line of a session file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "k")]
pub enum Record {
    #[serde(rename = "h")]
    Header(HeaderRecord),
    #[serde(rename = "s")]
    Sample(SampleRecord),
    #[serde(rename = "e")]
    Key(KeyRecord),
}

impl From<&SensorSample> for SampleRecord {
    fn from(s: &SensorSample) -> Self {
        SampleRecord {
            t: s.t,
            acc: s.acc,
            acc_g: s.acc_g,
            rot_r: s.rot_r,
            ori: s.ori,
            interval: s.interval,
        }
    }
}

impl From<SampleRecord> for SensorSample {
    fn from(r: SampleRecord) -> Self {
        SensorSample {
            t: r.t,
            acc: r.acc,
            acc_g: r.acc_g,
            rot_r: r.rot_r,
            ori: r.ori,
            interval: r.interval,
        }
    }
}

impl From<&KeyEvent> for KeyRecord {
    fn from(e: &KeyEvent) -> Self {
        KeyRecord {
            t: e.t,
            digit: e.digit,
            idx: e.entry_index,
            expected: e.expected_pin,
            entered: e.entered_pin,
        }
    }
}

impl TryFrom<KeyRecord> for KeyEvent {
    type Error = Error;

    fn try_from(r: KeyRecord) -> Result<Self> {
        KeyEvent::new(r.t, r.digit, r.idx, r.expected, r.entered)
    }
}

impl SampleRecord {
    pub fn check(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::invalid(format!("sample time must be finite and >= 0, got {}", self.t)));
        }
        let finite = |v: &Option<Triple>| v.is_none_or(|a| a.iter().all(|x| x.is_finite()));
        if !(finite(&self.acc) && finite(&self.acc_g) && finite(&self.rot_r) && finite(&self.ori)) {
            return Err(Error::invalid("sample contains a non-finite value"));
        }
        if let Some(iv) = self.interval {
            if !(iv.is_finite() && iv > 0.0) {
                return Err(Error::invalid(format!("interval must be positive, got {iv}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub user_id: String,
    pub device_label: String,
    pub created: String,
}

impl From<HeaderRecord> for SessionMeta {
    fn from(h: HeaderRecord) -> Self {
        SessionMeta {
            session_id: h.session,
            user_id: h.user,
            device_label: h.device,
            created: h.created,
        }
    }
}

impl From<&SessionMeta> for HeaderRecord {
    fn from(m: &SessionMeta) -> Self {
        HeaderRecord {
            session: m.session_id.clone(),
            user: m.user_id.clone(),
            device: m.device_label.clone(),
            created: m.created.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSession {
    pub trace: SensorTrace,
    pub events: Vec<KeyEvent>,
    pub meta: SessionMeta,
}

/// Serializes one record as a single line, without the trailing newline.
pub fn encode_record(record: &Record) -> String {
    // Record contains only strings, finite-or-null floats and small integers.
    serde_json::to_string(record).expect("session records always serialize")
}

/// Parses a complete session file. Line order is preserved; trace invariants
/// are not checked here (see [`crate::model::validate_trace`]).
pub fn parse_session(bytes: &[u8]) -> Result<ParsedSession> {
    let mut meta: Option<SessionMeta> = None;
    let mut samples = Vec::new();
    let mut events = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw.is_empty() {
            continue;
        }
        let at = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let text = std::str::from_utf8(raw).map_err(|e| at(format!("invalid UTF-8: {e}")))?;
        let record: Record = serde_json::from_str(text).map_err(|e| at(e.to_string()))?;
        match record {
            Record::Header(h) => {
                if meta.is_some() || !samples.is_empty() || !events.is_empty() {
                    return Err(at("header must be the first line".into()));
                }
                meta = Some(h.into());
            }
            Record::Sample(s) => {
                if meta.is_none() {
                    return Err(at("expected header line first".into()));
                }
                s.check().map_err(|e| at(e.to_string()))?;
                samples.push(SensorSample::from(s));
            }
            Record::Key(k) => {
                if meta.is_none() {
                    return Err(at("expected header line first".into()));
                }
                events.push(KeyEvent::try_from(k).map_err(|e| at(e.to_string()))?);
            }
        }
    }
    let meta = meta.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    Ok(ParsedSession {
        trace: SensorTrace {
            samples,
            session_id: meta.session_id.clone(),
            device_label: meta.device_label.clone(),
        },
        events,
        meta,
    })
}

/// Writes a whole session: header, then samples and key events interleaved in
/// time order (samples first on ties).
pub fn write_session(meta: &SessionMeta, trace: &SensorTrace, events: &[KeyEvent]) -> String {
    let mut out = String::with_capacity(64 + trace.samples.len() * 180 + events.len() * 80);
    out.push_str(&encode_record(&Record::Header(meta.into())));
    out.push('\n');
    let mut ev = events.iter().peekable();
    for s in &trace.samples {
        while let Some(e) = ev.next_if(|e| e.t < s.t) {
            out.push_str(&encode_record(&Record::Key(e.into())));
            out.push('\n');
        }
        out.push_str(&encode_record(&Record::Sample(s.into())));
        out.push('\n');
    }
    for e in ev {
        out.push_str(&encode_record(&Record::Key(e.into())));
        out.push('\n');
    }
    out
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    Some(xs[xs.len() / 2])
}

/// Pairs motion-listener samples with the nearest orientation-listener sample
/// within one sampling interval, producing complete samples. Unpaired samples
/// are dropped. Samples that already carry all four triples pass through.
pub fn merge_listeners(trace: &SensorTrace) -> SensorTrace {
    let mut complete = Vec::new();
    let mut motion = Vec::new();
    let mut orient = Vec::new();
    for s in &trace.samples {
        if s.is_complete() {
            complete.push(s.clone());
        } else if s.has_motion() {
            motion.push(s);
        } else if s.ori.is_some() {
            orient.push(s);
        }
    }
    if motion.is_empty() {
        return SensorTrace {
            samples: complete,
            ..trace.clone()
        };
    }
    let fallback_dt = median(motion.windows(2).map(|w| w[1].t - w[0].t).collect()).unwrap_or(0.0);
    let mut merged = complete;
    for m in motion {
        let tol = m.interval.unwrap_or(fallback_dt);
        let pos = orient.partition_point(|o| o.t < m.t);
        let nearest = [pos.checked_sub(1), Some(pos)]
            .into_iter()
            .flatten()
            .filter_map(|i| orient.get(i))
            .min_by(|a, b| (a.t - m.t).abs().total_cmp(&(b.t - m.t).abs()));
        if let Some(o) = nearest.filter(|o| (o.t - m.t).abs() <= tol) {
            let mut s = m.clone();
            s.ori = o.ori;
            merged.push(s);
        }
    }
    merged.sort_by(|a, b| a.t.total_cmp(&b.t));
    merged.dedup_by(|b, a| a.t == b.t);
    SensorTrace {
        samples: merged,
        ..trace.clone()
    }
}

/// Window widths around keydown anchors, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub pin_pre_ms: f64,
    pub pin_post_ms: f64,
    pub digit_pre_ms: f64,
    pub digit_post_ms: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            pin_pre_ms: 150.0,
            pin_post_ms: 400.0,
            digit_pre_ms: 100.0,
            digit_post_ms: 300.0,
        }
    }
}

impl SegmentationConfig {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("pin_pre_ms", self.pin_pre_ms),
            ("pin_post_ms", self.pin_post_ms),
            ("digit_pre_ms", self.digit_pre_ms),
            ("digit_post_ms", self.digit_post_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Segments plus the number of windows dropped for missing or too few samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<PinEntrySegment>,
    pub dropped: usize,
}

fn check_event_order(events: &[KeyEvent]) -> Result<()> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(Error::invalid(format!(
                "key events out of time order at event {} ({} ms after {} ms)",
                i + 1,
                w[1].t,
                w[0].t
            )));
        }
    }
    Ok(())
}

/// Extracts the twelve channel sequences for samples with `lo <= t <= hi`.
/// Returns `None` when the window has fewer than two samples or any sample in
/// it lacks a triple.
fn window(trace: &SensorTrace, lo: f64, hi: f64) -> Option<Vec<Vec<f64>>> {
    let start = trace.samples.partition_point(|s| s.t < lo);
    let end = trace.samples.partition_point(|s| s.t <= hi);
    let slice = trace.samples.get(start..end)?;
    if slice.len() < 2 {
        return None;
    }
    let mut channels: Vec<Vec<f64>> = (0..CHANNEL_COUNT).map(|_| Vec::with_capacity(slice.len())).collect();
    for s in slice {
        for c in Channel::ALL {
            channels[c.index()].push(s.value(c)?);
        }
    }
    Some(channels)
}

/// One segment per complete run of four keydowns (entry indices 0..=3 with a
/// shared expected PIN). Incomplete runs are skipped.
pub fn segment_pins(
    trace: &SensorTrace,
    events: &[KeyEvent],
    cfg: &SegmentationConfig,
    user_id: &str,
) -> Result<Segmentation> {
    cfg.check()?;
    check_event_order(events)?;
    let mut out = Segmentation::default();
    let mut run: Vec<&KeyEvent> = Vec::with_capacity(4);
    for ev in events {
        let continues = run
            .last()
            .is_some_and(|p| ev.entry_index == p.entry_index + 1 && ev.expected_pin == p.expected_pin);
        if !continues {
            run.clear();
            if ev.entry_index != 0 {
                continue;
            }
        }
        run.push(ev);
        if run.len() == 4 {
            let entered = run.iter().rev().find_map(|e| e.entered_pin);
            let expected = run[0].expected_pin;
            let lo = run[0].t - cfg.pin_pre_ms;
            let hi = run[3].t + cfg.pin_post_ms;
            match window(trace, lo, hi) {
                Some(channels) => out.segments.push(PinEntrySegment {
                    channels,
                    label: expected.to_string(),
                    user_id: user_id.to_string(),
                    valid: entered == Some(expected),
                }),
                None => out.dropped += 1,
            }
            run.clear();
        }
    }
    if out.dropped > 0 {
        log::warn!("dropped {} PIN windows with missing or too few samples", out.dropped);
    }
    Ok(out)
}

/// One segment per keydown, labelled with the pressed digit.
pub fn segment_digits(
    trace: &SensorTrace,
    events: &[KeyEvent],
    cfg: &SegmentationConfig,
    user_id: &str,
) -> Result<Segmentation> {
    cfg.check()?;
    check_event_order(events)?;
    let mut out = Segmentation::default();
    for ev in events {
        match window(trace, ev.t - cfg.digit_pre_ms, ev.t + cfg.digit_post_ms) {
            Some(channels) => out.segments.push(PinEntrySegment {
                channels,
                label: ev.digit.to_string(),
                user_id: user_id.to_string(),
                valid: true,
            }),
            None => out.dropped += 1,
        }
    }
    if out.dropped > 0 {
        log::warn!("dropped {} digit windows with missing or too few samples", out.dropped);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        r#"{"k":"h","session":"s1","user":"u7","device":"test phone","created":"2024-01-01T00:00:00Z"}"#;

    fn sample_line(t: f64) -> String {
        format!(
            r#"{{"k":"s","t":{t},"acc":[0.1,0.2,0.3],"accG":[0.1,0.2,9.8],"rotR":[1,2,3],"ori":[10,20,30],"interval":16.7}}"#
        )
    }

    fn key_line(t: f64, digit: u8, idx: u8) -> String {
        format!(r#"{{"k":"e","t":{t},"digit":{digit},"idx":{idx},"expected":"1234","entered":"1234"}}"#)
    }

    /// A 60 Hz complete trace covering `[0, end_ms]`.
    fn grid_trace(end_ms: f64) -> SensorTrace {
        let dt = 1000.0 / 60.0;
        let n = (end_ms / dt).floor() as usize + 1;
        SensorTrace {
            samples: (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    SensorSample {
                        t,
                        acc: Some([t, 0.0, 0.0]),
                        acc_g: Some([0.0, 0.0, 9.81]),
                        rot_r: Some([0.0; 3]),
                        ori: Some([0.0; 3]),
                        interval: Some(dt),
                    }
                })
                .collect(),
            ..Default::default()
        }
    }

    fn keys(pin: &str, times: &[f64], start_idx: u8) -> Vec<KeyEvent> {
        let p: Pin = pin.parse().unwrap();
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let idx = start_idx + i as u8;
                KeyEvent::new(t, p.digits()[idx as usize], idx, p, Some(p)).unwrap()
            })
            .collect()
    }

    #[test]
    fn parses_counts_and_metadata() {
        let mut lines = vec![HEADER.to_string()];
        for i in 0..3 {
            lines.push(sample_line(i as f64 * 10.0));
        }
        for i in 0..4 {
            lines.push(key_line(5.0 + i as f64, (i + 1) as u8, i as u8));
        }
        let parsed = parse_session(lines.join("\n").as_bytes()).unwrap();
        assert_eq!(parsed.trace.samples.len(), 3);
        assert_eq!(parsed.events.len(), 4);
        assert_eq!(parsed.meta.session_id, "s1");
        assert_eq!(parsed.meta.user_id, "u7");
        assert_eq!(parsed.meta.device_label, "test phone");
        assert_eq!(parsed.trace.samples[1].acc_g, Some([0.1, 0.2, 9.8]));
        assert_eq!(parsed.events[3].entry_index, 3);
    }

    #[test]
    fn missing_t_names_line_one() {
        let text = r#"{"k":"s","acc":null,"accG":null,"rotR":null,"ori":null,"interval":null}"#;
        match parse_session(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("`t`"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_kind_and_bad_lines() {
        let text = format!("{HEADER}\n{}\n{{\"k\":\"x\",\"t\":1}}\n", sample_line(0.0));
        assert!(matches!(parse_session(text.as_bytes()), Err(Error::Parse { line: 3, .. })));

        let text = format!("{HEADER}\nnot json\n");
        assert!(matches!(parse_session(text.as_bytes()), Err(Error::Parse { line: 2, .. })));

        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"k":"e","t":1,"digit":10,"idx":0,"expected":"1234","entered":null}"#
        );
        assert!(matches!(parse_session(text.as_bytes()), Err(Error::Parse { line: 2, .. })));

        let text = format!("{HEADER}\n{}\n", r#"{"k":"s","t":1,"acc":[1,null,2]}"#);
        assert!(matches!(parse_session(text.as_bytes()), Err(Error::Parse { line: 2, .. })));

        let text = format!("{}\n{HEADER}\n", sample_line(0.0));
        assert!(matches!(parse_session(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn null_triples_and_entered() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            r#"{"k":"s","t":3.5,"acc":null,"accG":null,"rotR":null,"ori":[1,2,3],"interval":null}"#,
            r#"{"k":"e","t":4,"digit":0,"idx":1,"expected":"1034","entered":null}"#
        );
        let p = parse_session(text.as_bytes()).unwrap();
        assert_eq!(p.trace.samples[0].acc, None);
        assert_eq!(p.trace.samples[0].ori, Some([1.0, 2.0, 3.0]));
        assert_eq!(p.events[0].entered_pin, None);
    }

    #[test]
    fn write_then_parse_is_exact() {
        let mut trace = grid_trace(200.0);
        trace.samples[2].acc = Some([0.1 + 0.2, -1e-300, 123456.789e10]);
        trace.samples[3].rot_r = None;
        let meta = SessionMeta {
            session_id: "abc".into(),
            user_id: "u".into(),
            device_label: "dev \"quoted\"".into(),
            created: "2024-05-01T12:00:00Z".into(),
        };
        let events = keys("1234", &[20.0, 40.0, 60.0, 300.0], 0);
        let text = write_session(&meta, &trace, &events);
        let parsed = parse_session(text.as_bytes()).unwrap();
        assert_eq!(parsed.meta, meta);
        assert_eq!(parsed.events, events);
        assert_eq!(parsed.trace.samples.len(), trace.samples.len());
        for (a, b) in parsed.trace.samples.iter().zip(&trace.samples) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a, b);
        }
        // The trailing event is written after the last sample.
        assert!(text.trim_end().lines().last().unwrap().contains(r#""k":"e""#));
    }

    #[test]
    fn pin_window_bounds() {
        let trace = grid_trace(3000.0);
        let events = keys("1234", &[1000.0, 1400.0, 1800.0, 2200.0], 0);
        let seg = segment_pins(&trace, &events, &SegmentationConfig::default(), "u").unwrap();
        assert_eq!(seg.segments.len(), 1);
        // acc.x carries t, so the first/last values give the covered span.
        let xs = seg.segments[0].channel(Channel::AccX);
        let dt = 1000.0 / 60.0;
        assert!(xs[0] >= 850.0 && xs[0] < 850.0 + dt);
        assert!(*xs.last().unwrap() <= 2600.0 && *xs.last().unwrap() > 2600.0 - dt);
        assert!(seg.segments[0].valid);
        assert_eq!(seg.segments[0].label, "1234");
    }

    #[test]
    fn two_runs_and_incomplete_run() {
        let trace = grid_trace(6000.0);
        let mut events = keys("1234", &[500.0, 700.0, 900.0, 1100.0], 0);
        events.extend(keys("1234", &[2500.0, 2700.0, 2900.0, 3100.0], 0));
        let seg = segment_pins(&trace, &events, &SegmentationConfig::default(), "u").unwrap();
        assert_eq!(seg.segments.len(), 2);

        let three = keys("1234", &[4000.0, 4200.0, 4400.0], 0);
        let seg = segment_pins(&trace, &three, &SegmentationConfig::default(), "u").unwrap();
        assert!(seg.segments.is_empty());

        // A run broken by a restart only yields the restarted run.
        let mut broken = keys("1234", &[500.0, 700.0], 0);
        broken.extend(keys("1234", &[900.0, 1100.0, 1300.0, 1500.0], 0));
        let seg = segment_pins(&trace, &broken, &SegmentationConfig::default(), "u").unwrap();
        assert_eq!(seg.segments.len(), 1);
    }

    #[test]
    fn mismatched_entry_is_invalid() {
        let trace = grid_trace(3000.0);
        let mut events = keys("1234", &[500.0, 700.0, 900.0, 1100.0], 0);
        let wrong: Pin = "1235".parse().unwrap();
        for e in &mut events {
            e.entered_pin = Some(wrong);
        }
        let seg = segment_pins(&trace, &events, &SegmentationConfig::default(), "u").unwrap();
        assert!(!seg.segments[0].valid);
    }

    #[test]
    fn out_of_order_events_error() {
        let trace = grid_trace(3000.0);
        let events = keys("1234", &[500.0, 400.0, 900.0, 1100.0], 0);
        assert!(segment_pins(&trace, &events, &SegmentationConfig::default(), "u").is_err());
        assert!(segment_digits(&trace, &events, &SegmentationConfig::default(), "u").is_err());
    }

    #[test]
    fn digit_windows_clip_and_overlap() {
        let trace = grid_trace(3000.0);
        let events = keys("1234", &[50.0, 250.0, 450.0, 650.0], 0);
        let seg = segment_digits(&trace, &events, &SegmentationConfig::default(), "u").unwrap();
        assert_eq!(seg.segments.len(), 4);
        assert_eq!(seg.segments[0].label, "1");
        let first = seg.segments[0].channel(Channel::AccX);
        assert_eq!(first[0], 0.0);
        assert!(*first.last().unwrap() <= 350.0 && *first.last().unwrap() > 350.0 - 1000.0 / 60.0);
        // Overlapping windows are both emitted.
        let second = seg.segments[1].channel(Channel::AccX);
        assert!(second[0] < *first.last().unwrap());
    }

    #[test]
    fn windows_with_missing_or_few_samples_are_dropped() {
        let mut trace = grid_trace(3000.0);
        for s in &mut trace.samples[50..80] {
            s.ori = None;
        }
        let events = keys("1234", &[1000.0, 1100.0, 1200.0, 1300.0], 0);
        let seg = segment_digits(&trace, &events, &SegmentationConfig::default(), "u").unwrap();
        assert_eq!(seg.dropped, 4);

        let events = keys("1234", &[5000.0, 5100.0, 5200.0, 5300.0], 0);
        let seg = segment_pins(&trace, &events, &SegmentationConfig::default(), "u").unwrap();
        assert_eq!((seg.segments.len(), seg.dropped), (0, 1));
    }

    #[test]
    fn merge_pairs_nearest_within_interval() {
        let dt = 16.0;
        let mut samples = Vec::new();
        for i in 0..10 {
            let t = i as f64 * dt;
            samples.push(SensorSample {
                t,
                acc: Some([i as f64, 0.0, 0.0]),
                acc_g: Some([0.0; 3]),
                rot_r: Some([0.0; 3]),
                ori: None,
                interval: Some(dt),
            });
            if i != 4 {
                samples.push(SensorSample {
                    t: t + 3.0,
                    ori: Some([i as f64 * 10.0, 0.0, 0.0]),
                    ..Default::default()
                });
            }
        }
        // With orientation readings 3 and 5 also removed, motion samples 4 and 5
        // have no orientation reading within one interval.
        samples.retain(|s| !(s.ori.is_some() && (s.t == 3.0 * dt + 3.0 || s.t == 5.0 * dt + 3.0)));
        let trace = SensorTrace {
            samples,
            ..Default::default()
        };
        let merged = merge_listeners(&trace);
        assert!(merged.samples.iter().all(SensorSample::is_complete));
        assert_eq!(merged.samples.len(), 8);
        assert!(merged.samples.iter().all(|s| s.t != 4.0 * dt && s.t != 5.0 * dt));
        let s2 = merged.samples.iter().find(|s| s.t == 2.0 * dt).unwrap();
        assert_eq!(s2.ori, Some([20.0, 0.0, 0.0]));
        assert!(crate::model::validate_trace(&merged).is_empty());
    }

    #[test]
    fn segmentation_is_deterministic() {
        let trace = grid_trace(3000.0);
        let events = keys("1234", &[500.0, 700.0, 900.0, 1100.0], 0);
        let cfg = SegmentationConfig::default();
        assert_eq!(
            segment_pins(&trace, &events, &cfg, "u").unwrap(),
            segment_pins(&trace, &events, &cfg, "u").unwrap()
        );
    }
}
