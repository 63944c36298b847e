//! Single channel with first-order autoregressive noise: both sign branches
//! of the cost curve and the one the optimizer picks.
//!
//! ```bash
//! cargo run --example scalar_ar1_bound -- 0.5 1.92
//! ```

use acgn::capacity::{self, SignPolicy};

fn main() -> acgn::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>());
    let f = args.next().transpose().expect("AR coefficient").unwrap_or(0.5);
    let budget = args.next().transpose().expect("budget").unwrap_or(1.92);

    println!("v[k] = {f} v[k-1] + w[k],  budget {budget}");
    for policy in [SignPolicy::Plus, SignPolicy::Minus, SignPolicy::Auto] {
        let r = capacity::scalar_bound(&[f], &[], 1.0, budget, policy)?;
        let alloc = &r.design.allocation;
        println!(
            "  {policy:?}: a = {:.9}  sign {}  rate {:.9} bits/use",
            alloc.gains[0], alloc.signs[0], r.lower_bound_bits
        );
    }
    Ok(())
}
