//! Capacity lower bound for coupled colored noise loaded from a
//! configuration file, with the search trace.
//!
//! ```bash
//! cargo run --example colored_parallel_channels -- crates/core/examples/configs/coupled_arma.toml
//! ```

use acgn::capacity;
use acgn::config::ChannelConfig;

fn main() -> acgn::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/coupled_arma.toml").into());
    let cfg = ChannelConfig::from_path(&path)?;
    cfg.check()?;
    let noise = cfg.noise()?;
    let diag = noise.validate()?;
    println!(
        "{} channels, AR order {}, MA order {}, AR roots ≤ {:.3}, MA roots ≤ {:.3}",
        noise.dim(),
        noise.ar_order(),
        noise.ma_order(),
        diag.ar_root_modulus,
        diag.ma_root_modulus
    );

    let r = capacity::solve(&noise, cfg.budget, cfg.options.search())?;
    println!("method {}  bound {:.9} bits/use", r.method, r.lower_bound_bits);
    let alloc = &r.design.allocation;
    for l in 0..alloc.powers.len() {
        println!(
            "  eigenchannel {l}: variance {:.4}  power {:.6}  a = {}{:.6}",
            alloc.variances[l], alloc.powers[l], alloc.signs[l], alloc.gains[l]
        );
    }
    println!("starts: {:?} (best {})", r.trace.start_rates, r.trace.best_start);
    for note in &r.trace.notes {
        println!("note: {note}");
    }
    Ok(())
}
