//! Compare the classical calibrators against ConfCalib on held-out data.
//!
//! Run with `cargo run --release --example baselines`.

use confcal::baselines::{fit_histbin, fit_isotonic, fit_naive, fit_platt};
use confcal::harness::{generate, split, SynthConfig};
use confcal::metrics::{evaluate, EvalConfig};
use confcal::{ConfCalibModel, Dataset, FitConfig};

fn main() -> confcal::Result<()> {
    let config = SynthConfig::reference();
    let parts = split(&generate(&config)?, config.split);
    let (fit_on, test) = (&parts.validation.dataset, &parts.test.dataset);
    let spec = config.spec()?;

    let mut rows: Vec<(String, Dataset)> = vec![("uncalibrated".into(), test.clone())];
    for artifact in [fit_naive(fit_on)?, fit_platt(fit_on)?, fit_histbin(fit_on, 10)?, fit_isotonic(fit_on)?] {
        let name = artifact.kind().to_string();
        rows.push((name, test.with_predictions(&artifact.apply_all(test))?));
    }
    let model = ConfCalibModel::fit(fit_on, &spec, &FitConfig::new(1, 2.0))?;
    rows.push(("confcalib".into(), test.with_predictions(&model.calibrate(test)?)?));

    let eval = EvalConfig::new(spec.names().to_vec());
    let keys = ["field-rce:site", "multi-field-rce", "ece", "mvce", "auc", "logloss"];
    print!("{:<13}", "method");
    for k in keys {
        print!(" {k:>15}");
    }
    println!();
    for (name, data) in &rows {
        let report = evaluate(data, &eval)?;
        print!("{name:<13}");
        for k in keys {
            print!(" {:>15.4}", report.get(k).unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
