//! Generates synthetic PIN-entry sessions and writes them as session files,
//! along with the shared pins.json.
//!
//! cargo run -p pinlogger --example synthesize_sessions -- [out_dir] [seed]

use std::path::PathBuf;

use pinlogger::ingest::parse_session;
use pinlogger::model::validate_trace;
use pinlogger::pipeline::{write_output, write_sessions, PinListFile, RunManifest};
use pinlogger::synth::{gen_sessions, SynthConfig};

fn main() -> pinlogger::Result<()> {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().map_or_else(|| std::env::temp_dir().join("pinlogger-synth"), PathBuf::from);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let cfg = SynthConfig {
        seed,
        n_users: 3,
        reps: 2,
        error_rate: 0.02,
        ..SynthConfig::default()
    };
    let sessions = gen_sessions(&cfg)?;
    let mut manifest = RunManifest::new("synth", &cfg)?.seed("synth", seed);
    let paths = write_sessions(&mut manifest, &out.join("sessions"), &sessions)?;
    let pins = PinListFile { seed, pins: cfg.pin_list() };
    write_output(&mut manifest, &out.join("pins.json"), pins.to_json().as_bytes())?;
    manifest.write(&out)?;

    let first = std::fs::read(&paths[0]).expect("just written");
    let parsed = parse_session(&first)?;
    let mistyped = sessions
        .iter()
        .flat_map(|s| &s.events)
        .filter(|e| e.entered_pin.is_some_and(|p| p != e.expected_pin))
        .count();
    println!("{} session files in {}", paths.len(), out.join("sessions").display());
    println!(
        "{}: {} samples at {} Hz, {} key events, {} trace violations",
        paths[0].display(),
        parsed.trace.samples.len(),
        cfg.sample_rate_hz,
        parsed.events.len(),
        validate_trace(&parsed.trace).len()
    );
    println!("mistyped keydowns recorded: {mistyped}");
    println!("first PINs: {:?}", pins.pins.iter().take(5).map(|p| p.to_string()).collect::<Vec<_>>());
    Ok(())
}
