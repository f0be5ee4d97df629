//! Stack ConfCalib on top of a field-agnostic calibrator.
//!
//! Run with `cargo run --release --example recalibration`.

use confcal::baselines::{fit_histbin, fit_platt};
use confcal::harness::{generate, split, SynthConfig};
use confcal::metrics::multi_field_rce;
use confcal::pipeline::recalibrate;
use confcal::{FitConfig, Pipeline, Stage};

fn main() -> confcal::Result<()> {
    let config = SynthConfig::reference();
    let parts = split(&generate(&config)?, config.split);
    let (fit_on, test) = (&parts.validation.dataset, &parts.test.dataset);
    let spec = config.spec()?;
    let fields = spec.names();

    println!("{:<10} {:>10} {:>18}", "inner", "inner only", "inner + confcalib");
    for inner in [fit_platt(fit_on)?, fit_histbin(fit_on, 10)?] {
        let name = inner.kind();
        let inner = Pipeline::single(Stage::Baseline(inner));
        let alone = multi_field_rce(&inner.apply(test)?, fields)?;
        let (composed, _) = recalibrate(inner, fit_on, &spec, &FitConfig::new(10, 2.0))?;
        let stacked = multi_field_rce(&composed.apply(test)?, fields)?;
        println!("{name:<10} {alone:>10.4} {stacked:>18.4}");
    }
    Ok(())
}
