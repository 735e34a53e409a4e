//! Full synthetic attack: generate sessions, ingest, featurize, train and
//! evaluate, then repeat with shuffled labels as a chance-level control.
//!
//! cargo run --release -p pinlogger --example end_to_end -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use pinlogger::pipeline::{report_text, run_pipeline, PipelineConfig};

fn main() -> pinlogger::Result<()> {
    env_logger::init();
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("pinlogger-e2e"), PathBuf::from);
    let cfg = PipelineConfig::default().with_seed(7);

    let start = Instant::now();
    let run = run_pipeline(&cfg, &out.join("attack"))?;
    println!("{}", report_text(&run.report, "synthetic"));
    println!(
        "{} segments, {} training iterations, {:.1} s",
        run.stats.segments,
        run.train.history.train_loss.len() - 1,
        start.elapsed().as_secs_f64()
    );

    let control = PipelineConfig {
        shuffle_labels: true,
        ..cfg
    };
    let run = run_pipeline(&control, &out.join("shuffled"))?;
    println!("shuffled-label control top-1: {:.4}", run.report.rate(1).unwrap_or(0.0));
    println!("outputs under {}", out.display());
    Ok(())
}
