//! Sweep lambda and report held-out metrics.
//!
//! Run with `cargo run --release --example lambda_sweep`.

use confcal::harness::{fit_model, generate, split, SynthConfig, WeightPolicy};
use confcal::metrics::{ece, logloss, multi_field_rce};
use confcal::{FitConfig, Objective};

fn main() -> confcal::Result<()> {
    let config = SynthConfig::reference();
    let parts = split(&generate(&config)?, config.split);
    let (fit_on, test) = (&parts.validation.dataset, &parts.test.dataset);
    let spec = config.spec()?;
    let policy = WeightPolicy::Grid { objective: Objective::MultiFieldRce, step: 0.05 };

    println!("{:>5} {:>16} {:>8} {:>8}", "λ", "multi-field-rce", "ece", "logloss");
    let mut best = (f64::NAN, f64::INFINITY);
    for k in 0..8 {
        let lambda = 0.2 + 0.4 * f64::from(k);
        let model = fit_model(fit_on, &spec, &FitConfig::new(10, lambda), &policy)?;
        let cal = test.with_predictions(&model.calibrate(test)?)?;
        let rce = multi_field_rce(&cal, spec.names())?;
        println!(
            "{lambda:>5.1} {rce:>16.4} {:>8.4} {:>8.4}",
            ece(&cal.predictions(), &cal.labels(), 100)?,
            logloss(&cal.predictions(), &cal.labels())?
        );
        if rce < best.1 {
            best = (lambda, rce);
        }
    }
    println!("best λ = {:.1}", best.0);
    Ok(())
}
