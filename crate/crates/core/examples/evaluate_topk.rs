//! Top-k identification rates and confusion matrix for the digit task,
//! next to the uniform-guess baseline.
//!
//! cargo run --release -p pinlogger --example evaluate_topk

use pinlogger::eval::{evaluate, format_rate_table};
use pinlogger::model::DatasetMode;
use pinlogger::pipeline::{report_text, run_pipeline, PipelineConfig};

fn main() -> pinlogger::Result<()> {
    let mut cfg = PipelineConfig::default().with_seed(3);
    cfg.mode = DatasetMode::Digit10;
    cfg.synth.n_users = 4;
    cfg.synth.reps = 2;
    cfg.synth.noise_sigma = 0.6;
    cfg.train.hidden_dim = 16;
    let out = std::env::temp_dir().join("pinlogger-topk");
    let run = run_pipeline(&cfg, &out)?;
    print!("{}", report_text(&run.report, "noisy digits"));

    let ks: Vec<usize> = (1..=10).collect();
    let full = evaluate(&run.train.model, &run.train.split.test, &ks, DatasetMode::Digit10)?;
    println!();
    for k in ks {
        println!("top-{k:<2} {:.4}  (uniform {:.2})", full.rate(k).unwrap_or(0.0), k as f64 / 10.0);
    }
    println!("\nconfusion (rows = true digit):");
    for (d, row) in full.confusion.iter().enumerate() {
        println!("{d}: {}", row.iter().map(|c| format!("{c:>3}")).collect::<String>());
    }
    println!("\n{}", format_rate_table(&[("noisy digits", &run.report)]));
    Ok(())
}
