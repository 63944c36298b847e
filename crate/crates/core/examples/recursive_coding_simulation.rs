//! Run the recursive feedback coding scheme and compare the measured channel
//! input power and estimation error with the design.
//!
//! ```bash
//! cargo run --release --example recursive_coding_simulation -- 200000
//! ```

use acgn::capacity::{self, SearchOptions};
use acgn::coding;
use acgn::noise::ArmaNoise;

fn main() -> acgn::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let noise = ArmaNoise::scalar(&[0.5], &[0.3], 1.0)?;
    let r = capacity::solve(&noise, 2.0, SearchOptions::default())?;
    let scheme = coding::synthesize(&r, &noise)?;
    println!(
        "rate {:.6} bits/use, closed-loop radius {:.6}, burn-in {}",
        r.lower_bound_bits,
        scheme.stability_radius,
        scheme.burn_in()
    );

    let mut first = Vec::new();
    let report = coding::simulate_observed(&scheme, &noise, steps, 1, |k, y, e| {
        if k < 5 {
            first.push((k, y[0], e[0]));
        }
    })?;
    for (k, y, e) in first {
        println!("  k={k}: y = {y:+.5}  e = {e:+.5}");
    }
    println!(
        "power {:.5} (design {:.5}, rel err {:.2e})",
        report.empirical_power, report.predicted_power, report.power_rel_err
    );
    println!("error covariance rel err {:.2e}", report.cov_rel_err);
    println!("window powers {:?}", report.window_powers);

    let spectral = coding::spectral_rate(&scheme, 1024)?;
    println!("Bode integral {:.9} bits from {} nodes", spectral.bits, spectral.nodes);
    Ok(())
}
