//! Wilson score intervals and the deviation score that inverts them.
//!
//! Run with `cargo run --example wilson_interval`.

use confcal::wilson::{solve_deviation, wilson_interval};
use confcal::SubsetStats;

fn main() -> confcal::Result<()> {
    // 50 clicks out of 500 impressions.
    let (lo, hi) = wilson_interval(0.1, 500, 1.96)?;
    println!("95% interval for 50/500: [{lo:.4}, {hi:.4}]");

    println!("\nwidth shrinks with n (p = 0.1, z = 1.96):");
    for n in [10, 100, 1_000, 10_000, 100_000] {
        let (lo, hi) = wilson_interval(0.1, n, 1.96)?;
        println!("  n = {n:>6}  [{lo:.4}, {hi:.4}]  width {:.4}", hi - lo);
    }

    println!("\ndeviation score of a predicted mean against 50/500:");
    for p_hat in [0.1, 0.12, 0.1294225082000026, 0.2, 0.05] {
        let stats = SubsetStats { n: 500, positives: 50, p: 0.1, p_hat };
        let z = solve_deviation(&stats)?;
        println!("  p_hat = {p_hat:.4}  z = {:.4}", z.value());
    }
    Ok(())
}
