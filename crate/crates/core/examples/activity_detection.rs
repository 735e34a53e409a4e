//! Call-event detection on a resting device and sitting/walking/running
//! labels on a carried one.
//!
//! cargo run -p pinlogger --example activity_detection -- [seed]

use pinlogger::activity::{classify_windows, detect_events, interior_truth, ActivityWindowConfig};
use pinlogger::synth::{gen_activity_trace, Activity, SynthConfig};

fn main() -> pinlogger::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let cfg = ActivityWindowConfig::default();

    // Four calls a few seconds apart, phone left on a desk.
    let script = [
        ("sitting", 8.0),
        ("call_event", 25.0),
        ("sitting", 6.0),
        ("call_event", 12.0),
        ("sitting", 9.0),
        ("call_event", 40.0),
        ("sitting", 5.0),
        ("call_event", 18.0),
        ("sitting", 8.0),
    ];
    let (trace, truth) = gen_activity_trace(&synth, &script)?;
    let calls: Vec<_> = truth.iter().filter(|t| t.activity == Activity::CallEvent).collect();
    println!("{:>10} {:>10}   {:>10} {:>10}", "true start", "end", "found", "end");
    for (t, e) in calls.iter().zip(detect_events(&trace, &cfg)?) {
        println!("{:>10.2} {:>10.2}   {:>10.2} {:>10.2}", t.start_s, t.end_s, e.start_s, e.end_s);
    }

    let script = [("sitting", 22.0), ("walking", 34.0), ("running", 25.0)];
    let (trace, truth) = gen_activity_trace(&synth, &script)?;
    let windows = classify_windows(&trace, &cfg)?;
    let line: String = windows
        .iter()
        .map(|w| match w.label {
            Activity::Sitting => 's',
            Activity::Walking => 'w',
            Activity::Running => 'r',
            Activity::CallEvent => 'c',
        })
        .collect();
    println!("\n{} windows: {line}", windows.len());
    let interior = interior_truth(&windows, &truth, &cfg);
    let ok = interior.iter().filter(|(w, a)| w.label == *a).count();
    println!("interior windows correct: {ok}/{}", interior.len());
    Ok(())
}
