//! How the calibrated subset mean moves between the prediction and the
//! observed rate as evidence grows, and how lambda controls the pull.
//!
//! Run with `cargo run --example confidence_curve`.

use confcal::confcalib::{calibrated_mean, z_transform};
use confcal::SubsetStats;

fn main() -> confcal::Result<()> {
    println!("z-transform g(z) for a few lambdas:");
    println!("{:>6} {:>8} {:>8} {:>8}", "z", "λ=0.5", "λ=2", "λ=5");
    for z in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        println!(
            "{z:>6.1} {:>8.4} {:>8.4} {:>8.4}",
            z_transform(z, 0.5),
            z_transform(z, 2.0),
            z_transform(z, 5.0)
        );
    }

    // Observed rate 0.1, model predicts 0.2.
    println!("\ncalibrated mean for p = 0.1, p_hat = 0.2, λ = 2:");
    for n in [10u64, 100, 1_000, 10_000, 100_000] {
        let stats = SubsetStats { n, positives: n / 10, p: 0.1, p_hat: 0.2 };
        let c = calibrated_mean(&stats, 2.0)?;
        println!(
            "  n = {n:>6}  z = {:>7.3}  z' = {:.3}  p_hat' = {:.4}  multiplier = {:.4}",
            c.z, c.z_prime, c.p_hat_prime, c.multiplier
        );
    }

    println!("\nlambda at n = 500:");
    let stats = SubsetStats { n: 500, positives: 50, p: 0.1, p_hat: 0.2 };
    for lambda in [0.01, 0.5, 1.0, 2.0, 4.0, 100.0] {
        let c = calibrated_mean(&stats, lambda)?;
        println!("  λ = {lambda:>6}  p_hat' = {:.4}", c.p_hat_prime);
    }
    Ok(())
}
