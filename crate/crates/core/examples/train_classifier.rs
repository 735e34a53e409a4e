//! Trains the network on synthetic digit segments and prints the loss curve.
//!
//! cargo run --release -p pinlogger --example train_classifier -- [hidden]

use pinlogger::classifier::TrainConfig;
use pinlogger::eval::SplitRatios;
use pinlogger::ingest::{parse_session, write_session, SegmentationConfig};
use pinlogger::model::DatasetMode;
use pinlogger::pipeline::{build_dataset, featurize, train_with_split};
use pinlogger::synth::{gen_sessions, SynthConfig};

fn main() -> pinlogger::Result<()> {
    env_logger::init();
    let hidden = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let synth = SynthConfig {
        seed: 11,
        n_users: 4,
        reps: 2,
        ..SynthConfig::default()
    };
    // Through the file format and back, as the CLI does.
    let parsed = gen_sessions(&synth)?
        .iter()
        .map(|s| parse_session(write_session(&s.meta, &s.trace, &s.events).as_bytes()))
        .collect::<pinlogger::Result<Vec<_>>>()?;
    let (dataset, stats) = build_dataset(&parsed, DatasetMode::Digit10, &SegmentationConfig::default())?;
    let rows = featurize(&dataset)?;
    println!("{} digit segments from {} sessions", stats.segments, stats.sessions);

    let cfg = TrainConfig {
        seed: 11,
        hidden_dim: hidden,
        max_epochs: 300,
        ..TrainConfig::default()
    };
    let out = train_with_split(&rows, &dataset.label_space, SplitRatios::default(), 11, &cfg)?;
    let h = &out.history;
    for i in (0..h.train_loss.len()).step_by((h.train_loss.len() / 10).max(1)) {
        println!("iter {:>4}  train {:.5}  val {:.5}", i, h.train_loss[i], h.val_loss[i]);
    }
    println!(
        "stopped: {:?} after {} iterations, weights from iteration {}",
        h.stop_reason,
        h.train_loss.len() - 1,
        h.best_iteration
    );
    println!("model size: {} parameters", out.model.params.len());
    Ok(())
}
