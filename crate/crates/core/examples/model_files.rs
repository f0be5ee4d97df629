//! Save a fitted model, load it back, and check the outputs agree exactly.
//!
//! Run with `cargo run --example model_files`.

use confcal::baselines::fit_histbin;
use confcal::harness::{generate, SynthConfig};
use confcal::io::ModelFile;
use confcal::pipeline::recalibrate;
use confcal::{FitConfig, Pipeline, Stage};

fn main() -> confcal::Result<()> {
    let config = SynthConfig::new(1, 2_000, &[("site", 3)], 0.2).with_bias("site", "v0", 0.8);
    let data = generate(&config)?.dataset;
    let spec = config.spec()?;

    let inner = Pipeline::single(Stage::Baseline(fit_histbin(&data, 4)?));
    let (pipeline, _) = recalibrate(inner, &data, &spec, &FitConfig::new(1, 2.0))?;
    let file = ModelFile::from_pipeline(pipeline.clone());
    let text = file.to_json()?;
    println!("{}", text.lines().take(12).collect::<Vec<_>>().join("\n"));
    println!("  ... ({} lines)", text.lines().count());

    let dir = std::env::temp_dir().join(format!("confcal-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.json");
    file.save(&path)?;
    let loaded = ModelFile::load(&path)?;
    std::fs::remove_dir_all(&dir)?;

    assert_eq!(loaded.to_json()?, text);
    let a = pipeline.calibrate(&data)?;
    let b = loaded.pipeline().calibrate(&data)?;
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    println!("\nreloaded {} model; {} outputs identical", loaded.kind(), a.len());
    Ok(())
}
