//! Whole-PIN success when each digit is guessed from its top-3 candidates:
//! 3^4 = 81 combinations, success p^4 for a per-digit top-3 rate p.
//!
//! cargo run -p pinlogger --example pin_search_space

use pinlogger::eval::{candidate_set_size, pin_success_from_digit_rate, random_baselines};
use pinlogger::model::DatasetMode;
use pinlogger::reference;

fn main() -> pinlogger::Result<()> {
    println!("candidate PINs: {}", candidate_set_size(3));
    let random = random_baselines(DatasetMode::Digit10)["random_pin_attempts_81"];
    println!("random guessing, 81 attempts: {:.2}%", 100.0 * random);
    println!();
    println!("{:>8}  {:>10}", "p(top3)", "PIN in 81");
    for p in [0.5, 0.7, 0.8, 0.9, 0.9206, 0.95, 0.96, 0.99] {
        println!("{:>8.4}  {:>9.2}%", p, 100.0 * pin_success_from_digit_rate(p)?);
    }
    println!();
    print!("{}", reference::search_space_note());
    Ok(())
}
