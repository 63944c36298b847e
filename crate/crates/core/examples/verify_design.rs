//! All six consistency checks on an optimized design and on a copy with a
//! detuned observer gain.
//!
//! ```bash
//! cargo run --release --example verify_design
//! ```

use acgn::capacity::{self, SearchOptions};
use acgn::coding::{self, Verification, VerifyOptions};
use acgn::noise::ArmaNoise;

fn report(label: &str, v: &Verification) {
    println!("{label}: {}/{} checks pass", v.passed(), v.checks.len());
    for c in &v.checks {
        let value = c.value.map_or("-".to_string(), |x| format!("{x:.3e}"));
        println!("  [{}] {:<28} {:>10} (tol {:.0e}) {}", c.status, c.name, value, c.tolerance, c.detail);
    }
}

fn main() -> acgn::Result<()> {
    let noise = ArmaNoise::scalar(&[0.5], &[], 1.0)?;
    let budget = 1.92;
    let r = capacity::solve(&noise, budget, SearchOptions::default())?;
    let opts = VerifyOptions {
        steps: 1_000_000,
        ..Default::default()
    };
    report("optimized", &coding::verify_result(&r, &noise, opts));

    let mut detuned = r.design.clone();
    detuned.gain *= 1.1;
    report("gain x1.1", &coding::verify_design(&detuned, budget, &noise, opts));
    Ok(())
}
