//! Segments one synthetic session and prints the features of the first PIN
//! entry, one row per channel.
//!
//! cargo run -p pinlogger --example extract_features

use pinlogger::features::{extract, CORRELATIONS, CORRELATION_PAIRS, FEATURE_COUNT, FREQ_ENERGY, FREQ_STATS, TIME_ENERGY, TIME_STATS};
use pinlogger::ingest::{merge_listeners, segment_digits, segment_pins, SegmentationConfig};
use pinlogger::model::Channel;
use pinlogger::synth::{gen_session, SynthConfig};

fn main() -> pinlogger::Result<()> {
    let cfg = SynthConfig::default();
    let session = gen_session(&cfg, 0, 0, &cfg.pin_list())?;
    let trace = merge_listeners(&session.trace);
    let seg_cfg = SegmentationConfig::default();
    let user = &session.meta.user_id;

    let pins = segment_pins(&trace, &session.events, &seg_cfg, user)?;
    let digits = segment_digits(&trace, &session.events, &seg_cfg, user)?;
    println!("{} PIN segments, {} digit segments", pins.segments.len(), digits.segments.len());

    let seg = &pins.segments[0];
    let f = extract(seg)?.values;
    assert_eq!(f.len(), FEATURE_COUNT);
    println!("PIN {} by {}: {} samples per channel\n", seg.label, seg.user_id, seg.channels[0].len());
    println!(
        "{:<10} {:>9} {:>9} {:>9} {:>10} {:>9} {:>10}",
        "channel", "max", "min", "mean", "energy", "dft max", "dft energy"
    );
    for c in Channel::ALL {
        let i = c.index();
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>10.4} {:>9.4} {:>10.3}",
            c.name(),
            f[TIME_STATS + 3 * i],
            f[TIME_STATS + 3 * i + 1],
            f[TIME_STATS + 3 * i + 2],
            f[TIME_ENERGY + i],
            f[FREQ_STATS + 3 * i],
            f[FREQ_ENERGY + i]
        );
    }
    println!("\ncorrelations (x/alpha, y/beta, z/gamma):");
    for (p, (a, b)) in CORRELATION_PAIRS.iter().enumerate() {
        let r = &f[CORRELATIONS + 3 * p..CORRELATIONS + 3 * p + 3];
        println!("  {:>4}-{:<4} {:>7.3} {:>7.3} {:>7.3}", a.name(), b.name(), r[0], r[1], r[2]);
    }
    Ok(())
}
