//! The closed-form design against a plain Riccati iteration.
//!
//! The measurement seen through the whitening filter has output matrix
//! `Chat`; the design chooses `C` so that `Chat = I`, after which the
//! Riccati equation is solved in closed form.
//!
//! ```bash
//! cargo run --example kalman_colored_noise
//! ```

use acgn::capacity::{self, SearchOptions};
use acgn::kalman;
use acgn::linalg::{self, Mat};
use acgn::noise::ArmaNoise;

fn main() -> acgn::Result<()> {
    let noise = ArmaNoise::new(
        vec![Mat::from_row_slice(2, 2, &[0.6, 0.1, 0.0, -0.4])],
        vec![Mat::from_row_slice(2, 2, &[0.3, 0.0, 0.2, 0.1])],
        Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]),
    )?;
    let r = capacity::solve(&noise, 3.0, SearchOptions::default())?;
    let d = &r.design;
    println!("Chat = {:.3e}", d.chat);
    println!("closed-form P = {:.9}", d.p);

    let v = noise.innovation_cov();
    let iterated = kalman::solve_are(&d.a, &d.chat, v, &Mat::identity(2, 2))?;
    println!(
        "iterated P after {} steps = {:.9}",
        iterated.iterations, iterated.p
    );
    println!("‖P_closed - P_iter‖ = {:.3e}", linalg::inf_norm(&(&d.p - &iterated.p)));
    println!("‖K_closed - K_iter‖ = {:.3e}", linalg::inf_norm(&(&d.gain - &iterated.gain)));
    println!("closed-loop radius {:.6}", iterated.closed_loop_radius);
    Ok(())
}
