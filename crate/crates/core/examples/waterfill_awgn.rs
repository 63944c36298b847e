//! Water-filling over two white Gaussian channels.
//!
//! ```bash
//! cargo run --example waterfill_awgn
//! ```

use acgn::capacity::{self, SearchOptions};
use acgn::linalg::Mat;
use acgn::noise::ArmaNoise;

fn main() -> acgn::Result<()> {
    let variances = [1.0, 2.0];
    let budget = 3.0;

    let wf = capacity::waterfill(&variances, budget)?;
    println!("water level {:.6}", wf.level);
    for (l, (p, v)) in wf.allocation.powers.iter().zip(&variances).enumerate() {
        println!("  channel {l}: noise {v:.3}  power {p:.6}");
    }
    println!("rate {:.9} bits/use", wf.allocation.rate_bits);

    // Same answer through the feedback design, which also yields A, C, K, P.
    let noise = ArmaNoise::white(Mat::from_diagonal(&acgn::linalg::Vector::from_column_slice(&variances)))?;
    let result = capacity::solve(&noise, budget, SearchOptions::default())?;
    println!("feedback design ({}): {:.9} bits/use", result.method, result.lower_bound_bits);
    println!("A = {:.6}", result.design.a);
    Ok(())
}
