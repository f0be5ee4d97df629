//! Fuse two per-field calibrators and grid-search the fusion weights.
//!
//! Run with `cargo run --release --example multi_field_fusion`.

use confcal::fusion::{fit_weights, fuse, DEFAULT_STEP};
use confcal::harness::{generate, split, SynthConfig};
use confcal::metrics::{field_rce, multi_field_rce};
use confcal::{ConfCalibModel, FitConfig, Objective};

fn main() -> confcal::Result<()> {
    println!("fuse([0.5, 2.0], [0.5, 0.5], 0.1) = {}", fuse(&[0.5, 2.0], &[0.5, 0.5], 0.1));

    let config = SynthConfig::reference();
    let parts = split(&generate(&config)?, config.split);
    let (fit_on, test) = (&parts.validation.dataset, &parts.test.dataset);
    let spec = config.spec()?;
    let fields = spec.names();

    let mut model = ConfCalibModel::fit(fit_on, &spec, &FitConfig::new(10, 2.0))?;
    let search = fit_weights(&model, fit_on, &Objective::MultiFieldRce, DEFAULT_STEP)?;
    println!(
        "\n{} candidates; best weights {:?} (validation multi-field RCE {:.4})",
        search.candidates.len(),
        search.best.weights,
        search.best_score
    );
    for (w, score) in search.candidates.iter().step_by(4) {
        println!("  {w:?} -> {score:.4}");
    }
    model.set_weights(search.best)?;

    let calibrated = test.with_predictions(&model.calibrate(test)?)?;
    println!("\n{:<18} {:>8} {:>10}", "test metric", "raw", "calibrated");
    for f in fields {
        println!("{:<18} {:>8.4} {:>10.4}", format!("field-rce:{f}"), field_rce(test, f)?, field_rce(&calibrated, f)?);
    }
    println!(
        "{:<18} {:>8.4} {:>10.4}",
        "multi-field-rce",
        multi_field_rce(test, fields)?,
        multi_field_rce(&calibrated, fields)?
    );
    Ok(())
}
