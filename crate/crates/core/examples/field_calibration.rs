//! Fit a single-field calibrator and inspect its per-value multipliers.
//!
//! Run with `cargo run --example field_calibration`.

use confcal::harness::{generate, split, SynthConfig};
use confcal::metrics::field_rce;
use confcal::{ConfCalibModel, FieldSpec, FitConfig};

fn main() -> confcal::Result<()> {
    let config = SynthConfig::new(7, 40_000, &[("site", 6), ("app", 8)], 0.1).with_bias("site", "v2", 1.0);
    let parts = split(&generate(&config)?, config.split);
    let (fit_on, test) = (&parts.validation.dataset, &parts.test.dataset);

    let spec = FieldSpec::new(["site"])?;
    let model = ConfCalibModel::fit(fit_on, &spec, &FitConfig::new(1, 2.0))?;
    println!("{:>6} {:>6} {:>8} {:>8} {:>10}", "value", "n", "p", "p_hat", "multiplier");
    for (value, cal) in &model.calibrators()[0].table {
        let s = cal.stats[0];
        println!("{value:>6} {:>6} {:>8.4} {:>8.4} {:>10.4}", s.n, s.p, s.p_hat, cal.multipliers[0]);
    }

    let calibrated = test.with_predictions(&model.calibrate(test)?)?;
    println!(
        "\nField-RCE on held-out data: raw {:.4}, calibrated {:.4}",
        field_rce(test, "site")?,
        field_rce(&calibrated, "site")?
    );

    // Predictions inside one site value still vary with the other field, so
    // the value can be split into prediction bins.
    let binned = ConfCalibModel::fit(fit_on, &spec, &FitConfig::new(4, 2.0))?;
    let v2 = binned.calibrators()[0].calibrator_for("v2");
    println!("\nv2 split into {} bins:", v2.len());
    for (i, (s, m)) in v2.stats.iter().zip(&v2.multipliers).enumerate() {
        let upper = v2.edges.get(i).map_or("max".to_string(), |e| format!("{e:.4}"));
        println!("  up to {upper:>7}  n {:>5}  p {:.4}  p_hat {:.4}  multiplier {m:.4}", s.n, s.p, s.p_hat);
    }
    let binned_out = test.with_predictions(&binned.calibrate(test)?)?;
    println!("Field-RCE with 4 bins: {:.4}", field_rce(&binned_out, "site")?);
    Ok(())
}
