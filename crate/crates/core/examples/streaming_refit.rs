//! Replay a timestamped log with periodic refits on a trailing window.
//!
//! Run with `cargo run --release --example streaming_refit`.

use confcal::harness::{generate, simulate_stream, StreamConfig, SynthConfig};
use confcal::FitConfig;

fn main() -> confcal::Result<()> {
    let mut config = SynthConfig::reference();
    config.n_samples = 60_000;
    // One sample per second: 30-minute refits over a 6-hour window.
    config.seconds_per_sample = Some(1);
    let log = generate(&config)?.dataset;

    let stream = StreamConfig::new(1_800, 6 * 3_600, config.spec()?, FitConfig::new(1, 2.0));
    let report = simulate_stream(&log, &stream)?;
    println!("{} intervals, {} refits", report.intervals.len(), report.refits);
    println!("{:>6} {:>6} {:>9} {:>12} {:>8}", "start", "n", "snapshot", "raw multi", "multi");
    for i in report.intervals.iter().step_by(3) {
        println!(
            "{:>6} {:>6} {:>9} {:>12.4} {:>8.4}",
            i.start, i.n, i.snapshot, i.metrics["raw-multi-field-rce"], i.metrics["multi-field-rce"]
        );
    }

    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let text = String::from_utf8(csv).expect("utf-8");
    println!("\nCSV header: {}", text.lines().next().unwrap_or(""));
    Ok(())
}
