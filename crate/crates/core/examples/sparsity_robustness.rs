//! Fit on shrinking subsamples of the calibration split and watch the
//! held-out Field-RCE.
//!
//! Run with `cargo run --release --example sparsity_robustness`.

use confcal::baselines::fit_histbin;
use confcal::harness::{fit_model, generate, split, subsample, SynthConfig, WeightPolicy};
use confcal::metrics::field_rce;
use confcal::{FitConfig, Objective};

fn main() -> confcal::Result<()> {
    let config = SynthConfig::reference();
    let parts = split(&generate(&config)?, config.split);
    let (full, test) = (&parts.validation.dataset, &parts.test.dataset);
    let spec = config.spec()?;
    let policy = WeightPolicy::Grid { objective: Objective::MultiFieldRce, step: 0.05 };

    println!("{:>6} {:>7} {:>10} {:>8}", "rate", "n", "confcalib", "histbin");
    for rate in [1.0, 0.5, 0.2, 0.1, 0.05, 0.01] {
        let fit_on = subsample(full, rate, 7);
        let model = fit_model(&fit_on, &spec, &FitConfig::new(10, 2.0), &policy)?;
        let cc = field_rce(&test.with_predictions(&model.calibrate(test)?)?, "site")?;
        let hist = fit_histbin(&fit_on, 10)?;
        let hb = field_rce(&test.with_predictions(&hist.apply_all(test))?, "site")?;
        println!("{rate:>6} {:>7} {cc:>10.4} {hb:>8.4}", fit_on.len());
    }
    Ok(())
}
