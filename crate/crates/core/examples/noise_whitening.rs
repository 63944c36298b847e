//! Generate a colored noise path, then recover its innovations with the
//! whitening filter.
//!
//! ```bash
//! cargo run --example noise_whitening
//! ```

use acgn::linalg::Mat;
use acgn::noise::ArmaNoise;

fn main() -> acgn::Result<()> {
    let noise = ArmaNoise::new(
        vec![Mat::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3])],
        vec![Mat::from_row_slice(2, 2, &[0.4, 0.0, 0.0, -0.3])],
        Mat::identity(2, 2),
    )?;
    let diag = noise.ensure_valid()?;
    println!("AR roots ≤ {:.4}, MA roots ≤ {:.4}", diag.ar_root_modulus, diag.ma_root_modulus);

    let taps = noise.impulse_response();
    println!("whitening filter: {} taps until decay", taps.len());
    for (i, h) in taps.taps.iter().take(3).enumerate() {
        println!("  H_{} = {:.4}", i + 1, h);
    }

    let path = noise.sample_path(2000, 7)?;
    let w = noise.whiten_path(&path.noise)?;
    let gap = |k: usize| (w.row(k) - path.innovations.row(k)).norm();
    println!("recovered innovation error at k=0: {:.3e}, k=100: {:.3e}, k=1999: {:.3e}", gap(0), gap(100), gap(1999));
    Ok(())
}
