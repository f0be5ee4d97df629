//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use confcal::baselines::{fit_histbin, fit_isotonic};
use confcal::confcalib::calibrated_mean;
use confcal::fusion::{fit_weights, DEFAULT_STEP};
use confcal::harness::{generate, split, subsample, SynthConfig};
use confcal::metrics::{auc, ece, field_rce, logloss, multi_field_rce, mvce_views, sorted_order, Grouping};
use confcal::pipeline::recalibrate;
use confcal::wilson::{solve_deviation, wilson_interval};
use confcal::*;

type Outcome = std::result::Result<String, String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, id: u32, name: &str, f: impl FnOnce() -> Outcome) {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {id:>2} {name}: {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e(err: CalibError) -> String {
    err.to_string()
}

// Regression values from the first run of the reference pipeline.
const RCE_RAW_SITE: f64 = 0.4233664137010138;
const RCE_RAW_MULTI: f64 = 0.4446255409513814;
const RCE_CAL_SITE: f64 = 0.12001720422456463;
const RCE_CAL_MULTI: f64 = 0.12276826933549595;
const FROZEN_TOL: f64 = 1e-9;

fn wilson_reproduction() -> Outcome {
    let (lo, hi) = wilson_interval(0.1, 500, 1.96).map_err(e)?;
    ensure((lo - 0.076).abs() <= 1e-3 && (hi - 0.129).abs() <= 1e-3, || {
        format!("({lo}, {hi}) not within 1e-3 of [0.076, 0.129]")
    })?;
    ensure(
        (lo - 0.07667718662472012).abs() < 1e-12 && (hi - 0.1294225082000026).abs() < 1e-12,
        || format!("({lo}, {hi}) differs from closed form"),
    )?;
    Ok(format!("[{lo:.4}, {hi:.4}]"))
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut combos = 0;
    let mut worst = 0.0f64;
    for p in [0.0, 0.01, 0.1, 0.5, 0.9, 1.0] {
        for n in [1u64, 10, 500, 100_000] {
            for z in [0.1, 1.0, 1.96, 5.0] {
                let (lo, hi) = wilson_interval(p, n, z).map_err(e)?;
                for bound in [lo, hi] {
                    if bound == p || !(1e-9..=1.0 - 1e-9).contains(&bound) {
                        continue;
                    }
                    let stats = SubsetStats { n, positives: (p * n as f64).round() as u64, p, p_hat: bound };
                    let got = solve_deviation(&stats).map_err(e)?.value();
                    worst = worst.max((got - z).abs());
                    combos += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(combos >= 40, || format!("only {combos} non-degenerate combinations"))?;
    ensure(worst <= 1e-6, || format!("max |z error| {worst:e}"))?;
    ensure(elapsed < 1.0, || format!("took {elapsed:.3}s"))?;
    Ok(format!("{combos} combinations, max |z error| {worst:.1e}, {elapsed:.3}s"))
}

fn identity_property() -> Outcome {
    let spec = FieldSpec::new(["site", "app"]).map_err(e)?;
    let mut samples = Vec::new();
    let mut push = |pred: f64, count: usize, site: &str, app: &str| {
        for i in 0..count {
            samples.push(Sample::new(pred, i == 0, [site, app]));
        }
    };
    push(0.25, 4, "a", "x");
    push(0.5, 2, "b", "x");
    push(0.125, 8, "c", "y");
    let data = Dataset::new(spec.clone(), samples).map_err(e)?;
    for bins in [1, 2] {
        let mut model = ConfCalibModel::fit(&data, &spec, &FitConfig::new(bins, 2.0)).map_err(e)?;
        let search = fit_weights(&model, &data, &Objective::MultiFieldRce, DEFAULT_STEP).map_err(e)?;
        model.set_weights(search.best).map_err(e)?;
        let matrix = model.multiplier_matrix(&data).map_err(e)?;
        ensure(matrix.iter().flatten().all(|&m| m == 1.0), || format!("bins={bins}: multiplier != 1"))?;
        let out = model.calibrate(&data).map_err(e)?;
        let diff = out
            .iter()
            .zip(data.predictions())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(diff <= 1e-12, || format!("bins={bins}: output moved by {diff:e}"))?;
    }
    Ok("all multipliers exactly 1, output unchanged".into())
}

fn betweenness() -> Outcome {
    let frozen = [
        (10u64, 0.14322658527014212),
        (100, 0.13829002313383315),
        (1000, 0.11976100805643018),
        (10_000, 0.10616082093707174),
        (100_000, 0.10191339546660984),
    ];
    let mut prev = f64::INFINITY;
    let mut shown = Vec::new();
    for (n, expected) in frozen {
        let stats = SubsetStats { n, positives: n / 10, p: 0.1, p_hat: 0.2 };
        let got = calibrated_mean(&stats, 2.0).map_err(e)?.p_hat_prime;
        ensure((0.1..=0.2).contains(&got), || format!("n={n}: {got} outside [0.1, 0.2]"))?;
        let gap = got - 0.1;
        ensure(gap < prev, || format!("n={n}: distance {gap} not below {prev}"))?;
        ensure((got - expected).abs() < 1e-9, || format!("n={n}: {got} != frozen {expected}"))?;
        prev = gap;
        shown.push(format!("{got:.4}"));
    }
    Ok(format!("p' = {}", shown.join(" > ")))
}

fn metric_oracles() -> Outcome {
    let preds = [0.1, 0.4, 0.35, 0.8, 0.4, 0.2, 0.9, 0.05];
    let labels = [false, true, false, true, false, false, true, true];
    let field = ["a", "b", "a", "b", "c", "c", "a", "c"];
    let views = vec![
        vec![0, 1, 2, 3, 4, 5, 6, 7],
        vec![7, 6, 5, 4, 3, 2, 1, 0],
        vec![3, 0, 6, 1, 7, 2, 5, 4],
    ];
    let grouping = Grouping::from_keys(&field);
    let got = [
        ("field_rce", grouping.field_rce(&preds, &labels), 0.3625),
        ("ece(3)", ece(&preds, &labels, 3).map_err(e)?, 0.1375),
        ("ece(8)", ece(&preds, &labels, 8).map_err(e)?, 0.3625),
        ("mvce(3)", mvce_views(&preds, &labels, 3, &views).map_err(e)?, 0.24351851851851852),
        ("mvce(3, sorted)", mvce_views(&preds, &labels, 3, &[sorted_order(&preds)]).map_err(e)?, 0.1388888888888889),
        ("auc", auc(&preds, &labels).map_err(e)?, 0.71875),
        ("logloss", logloss(&preds, &labels).map_err(e)?, 0.6888299599038329),
    ];
    for (name, value, expected) in got {
        ensure((value - expected).abs() <= 1e-12, || format!("{name} = {value}, expected {expected}"))?;
    }
    Ok(format!("{} metrics within 1e-12", got.len()))
}

/// Exhaustive isotonic fit: every split of the distinct predictions into
/// contiguous blocks, keeping the feasible one with least squared error and,
/// among those, fewest blocks.
fn brute_isotonic(pairs: &[(f64, bool)]) -> (Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let groups: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| {
            let members = pairs.iter().filter(|p| p.0 == x);
            let pos = members.clone().filter(|p| p.1).count();
            (pos as f64, members.count() as f64)
        })
        .collect();
    let g = groups.len();
    let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;
    for mask in 0u32..(1 << (g - 1)) {
        let mut starts = vec![0];
        starts.extend((1..g).filter(|&i| mask & (1 << (i - 1)) != 0));
        let mut levels = Vec::new();
        let mut sse = 0.0;
        for (b, &s) in starts.iter().enumerate() {
            let end = starts.get(b + 1).copied().unwrap_or(g);
            let (sum, count) = groups[s..end].iter().fold((0.0, 0.0), |a, x| (a.0 + x.0, a.1 + x.1));
            let mean = sum / count;
            sse += sum * (1.0 - mean).powi(2) + (count - sum) * mean.powi(2);
            levels.push(mean);
        }
        if levels.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bs, bk, _, _)) => sse < bs - 1e-12 || (sse <= bs + 1e-12 && starts.len() < *bk),
        };
        if better {
            let bps = starts.iter().map(|&s| xs[s]).collect();
            best = Some((sse, starts.len(), bps, levels));
        }
    }
    let (_, _, bps, levels) = best.expect("one block is always feasible");
    (bps, levels)
}

fn pav_correctness() -> Outcome {
    let spec = FieldSpec::empty();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..200 {
        let n = rng.random_range(1..=12usize);
        let pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| (f64::from(rng.random_range(1..=9u8)) / 10.0, rng.random_bool(0.4)))
            .collect();
        let samples = pairs.iter().map(|&(p, y)| Sample::new(p, y, Vec::<String>::new())).collect();
        let data = Dataset::new(spec.clone(), samples).map_err(e)?;
        let CalibratorArtifact::Isotonic { breakpoints, levels } = fit_isotonic(&data).map_err(e)? else {
            return Err("fit_isotonic returned another kind".into());
        };
        let (bps, lv) = brute_isotonic(&pairs);
        ensure(breakpoints == bps && levels == lv, || {
            format!("instance {instance}: PAV {breakpoints:?}/{levels:?} vs exhaustive {bps:?}/{lv:?}")
        })?;
    }
    Ok("200 instances match exactly".into())
}

struct Reference {
    validation: Dataset,
    test: Dataset,
    spec: FieldSpec,
}

fn reference() -> std::result::Result<Reference, String> {
    let config = SynthConfig::reference();
    let data = generate(&config).map_err(e)?;
    let parts = split(&data, config.split);
    Ok(Reference {
        validation: parts.validation.dataset,
        test: parts.test.dataset,
        spec: config.spec().map_err(e)?,
    })
}

const FIELDS: [&str; 2] = ["site", "app"];

fn fit_reference(fit_on: &Dataset, spec: &FieldSpec, lambda: f64) -> std::result::Result<ConfCalibModel, String> {
    let mut model = ConfCalibModel::fit(fit_on, spec, &FitConfig::new(10, lambda)).map_err(e)?;
    let search = fit_weights(&model, fit_on, &Objective::MultiFieldRce, DEFAULT_STEP).map_err(e)?;
    model.set_weights(search.best).map_err(e)?;
    Ok(model)
}

fn calibrated(model: &ConfCalibModel, data: &Dataset) -> std::result::Result<Dataset, String> {
    data.with_predictions(&model.calibrate(data).map_err(e)?).map_err(e)
}

fn frozen(name: &str, value: f64, expected: f64) -> std::result::Result<(), String> {
    ensure((value - expected).abs() <= FROZEN_TOL, || {
        format!("{name} = {value:?} drifted from frozen {expected:?}")
    })
}

fn end_to_end(r: &Reference) -> Outcome {
    let start = Instant::now();
    let model = fit_reference(&r.validation, &r.spec, 2.0)?;
    let cal = calibrated(&model, &r.test)?;
    let raw_site = field_rce(&r.test, "site").map_err(e)?;
    let raw_multi = multi_field_rce(&r.test, &FIELDS).map_err(e)?;
    let cal_site = field_rce(&cal, "site").map_err(e)?;
    let cal_multi = multi_field_rce(&cal, &FIELDS).map_err(e)?;
    let raw_auc = auc(&r.test.predictions(), &r.test.labels()).map_err(e)?;
    let cal_auc = auc(&cal.predictions(), &cal.labels()).map_err(e)?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(cal_site <= 0.7 * raw_site, || format!("site RCE {raw_site:.4} -> {cal_site:.4}"))?;
    ensure(cal_multi <= 0.7 * raw_multi, || format!("multi RCE {raw_multi:.4} -> {cal_multi:.4}"))?;
    ensure(raw_auc - cal_auc <= 0.002, || format!("AUC {raw_auc:.5} -> {cal_auc:.5}"))?;
    ensure(elapsed < 30.0, || format!("took {elapsed:.1}s"))?;
    frozen("raw site RCE", raw_site, RCE_RAW_SITE)?;
    frozen("raw multi RCE", raw_multi, RCE_RAW_MULTI)?;
    frozen("calibrated site RCE", cal_site, RCE_CAL_SITE)?;
    frozen("calibrated multi RCE", cal_multi, RCE_CAL_MULTI)?;
    Ok(format!(
        "site RCE {raw_site:.4} -> {cal_site:.4}, multi RCE {raw_multi:.4} -> {cal_multi:.4}, AUC {raw_auc:.4} -> {cal_auc:.4}, {elapsed:.1}s"
    ))
}

fn sparsity(r: &Reference) -> Outcome {
    let mut rows = Vec::new();
    for rate in [1.0, 0.5, 0.2, 0.1, 0.05] {
        let fit_on = subsample(&r.validation, rate, 7);
        let model = fit_reference(&fit_on, &r.spec, 2.0)?;
        let rce = field_rce(&calibrated(&model, &r.test)?, "site").map_err(e)?;
        rows.push((rate, rce));
    }
    let full = rows[0].1;
    let sparse = rows[rows.len() - 1].1;
    let shown: Vec<String> = rows.iter().map(|(r, v)| format!("{r}:{v:.4}")).collect();
    frozen("full-data RCE", full, RCE_CAL_SITE)?;
    ensure(sparse <= 1.5 * RCE_CAL_SITE, || {
        format!("rate 0.05 RCE {sparse:.4} exceeds 1.5 x {full:.4} ({})", shown.join(" "))
    })?;
    Ok(format!("site RCE by rate {}; ratio {:.2}", shown.join(" "), sparse / full))
}

fn composition(r: &Reference) -> Outcome {
    let hist = fit_histbin(&r.validation, 10).map_err(e)?;
    let inner = Pipeline::single(Stage::Baseline(hist));
    let inner_multi = multi_field_rce(&inner.apply(&r.test).map_err(e)?, &FIELDS).map_err(e)?;
    let (composed, _) = recalibrate(inner, &r.validation, &r.spec, &FitConfig::new(10, 2.0)).map_err(e)?;
    let composed_multi = multi_field_rce(&composed.apply(&r.test).map_err(e)?, &FIELDS).map_err(e)?;
    ensure(composed_multi <= inner_multi, || {
        format!("histbin {inner_multi:.6} < histbin+confcalib {composed_multi:.6}")
    })?;
    Ok(format!("multi RCE histbin {inner_multi:.6}, histbin+confcalib {composed_multi:.6}"))
}

fn lambda_sweep(r: &Reference) -> Outcome {
    let mut best: Option<(f64, f64)> = None;
    let mut shown = Vec::new();
    for k in 0..8 {
        let lambda = 0.2 + 0.4 * f64::from(k);
        let cal = calibrated(&fit_reference(&r.validation, &r.spec, lambda)?, &r.test)?;
        let multi = multi_field_rce(&cal, &FIELDS).map_err(e)?;
        let ece = ece(&cal.predictions(), &cal.labels(), 100).map_err(e)?;
        let ll = logloss(&cal.predictions(), &cal.labels()).map_err(e)?;
        ensure(multi.is_finite() && ece.is_finite() && ll.is_finite(), || format!("λ={lambda}: non-finite metric"))?;
        if best.is_none_or(|(_, b)| multi < b) {
            best = Some((lambda, multi));
        }
        shown.push(format!("{lambda:.1}:{multi:.4}"));
    }
    for lambda in [1e-9, 1e3] {
        let cal = calibrated(&fit_reference(&r.validation, &r.spec, lambda)?, &r.test)?;
        let multi = multi_field_rce(&cal, &FIELDS).map_err(e)?;
        ensure(multi.is_finite(), || format!("λ={lambda}: non-finite metric"))?;
    }
    let (arg, _) = best.ok_or("empty sweep")?;
    Ok(format!("multi RCE {}; argmin λ={arg:.1}", shown.join(" ")))
}

fn run_cli(dir: &Path, args: &[&str]) -> std::result::Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_confcal"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|err| err.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out.stdout)
}

fn seeded_session(dir: &Path) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let mut config = SynthConfig::reference();
    config.n_samples = 20_000;
    config.seconds_per_sample = Some(30);
    std::fs::write(dir.join("config.json"), serde_json::to_string(&config).map_err(|x| x.to_string())?)
        .map_err(|x| x.to_string())?;
    let steps: &[&[&str]] = &[
        &["synth", "--config", "config.json", "--out-dir", "data"],
        &["fit", "--input", "data/validation.csv", "--fields", "site,app", "--bins", "10", "--out", "cc.json"],
        &["weights", "--model", "cc.json", "--input", "data/validation.csv"],
        &["apply", "--model", "cc.json", "--input", "data/test.csv", "--out", "cc.csv"],
        &["eval", "--input", "cc.csv", "--pred-col", "calibrated", "--fields", "site,app", "--report", "cc-eval.json"],
        &["fit", "--input", "data/validation.csv", "--method", "naive", "--out", "naive.json"],
        &["fit", "--input", "data/validation.csv", "--method", "platt", "--out", "platt.json"],
        &["fit", "--input", "data/validation.csv", "--method", "histbin", "--bins", "50", "--out", "histbin.json"],
        &["fit", "--input", "data/validation.csv", "--method", "isotonic", "--out", "isotonic.json"],
        &["apply", "--model", "isotonic.json", "--input", "data/test.csv", "--out", "iso.csv"],
        &[
            "stream", "--log", "data/validation.csv", "--fields", "site,app", "--refit-interval", "30000",
            "--window", "120000", "--bins", "5", "--ece-bins", "20", "--objective", "multi-field-rce",
            "--out", "stream.csv",
        ],
    ];
    let mut outputs = Vec::new();
    for (i, args) in steps.iter().enumerate() {
        outputs.push((format!("stdout of step {i}"), run_cli(dir, args)?));
    }
    let mut files: Vec<_> = walk(dir);
    files.sort();
    for path in files {
        let rel = path.strip_prefix(dir).expect("inside dir").display().to_string();
        outputs.push((rel, std::fs::read(&path).map_err(|x| x.to_string())?));
    }
    Ok(outputs)
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).expect("readable dir").flatten() {
        let path = entry.path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|x| x.to_string())?;
    let b = tempfile::tempdir().map_err(|x| x.to_string())?;
    let first = seeded_session(a.path())?;
    let second = seeded_session(b.path())?;
    ensure(first.len() == second.len(), || "different number of outputs".into())?;
    for ((name, x), (other, y)) in first.iter().zip(&second) {
        ensure(name == other && x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} outputs byte-identical across two runs", first.len()))
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    suite.check(1, "wilson reproduction", wilson_reproduction);
    suite.check(2, "round-trip inversion", round_trip);
    suite.check(3, "identity property", identity_property);
    suite.check(4, "betweenness and monotone confidence", betweenness);
    suite.check(5, "metric oracles", metric_oracles);
    suite.check(6, "PAV correctness", pav_correctness);
    match reference() {
        Ok(r) => {
            suite.check(7, "synthetic end-to-end", || end_to_end(&r));
            suite.check(8, "sparsity robustness", || sparsity(&r));
            suite.check(9, "recalibration composition", || composition(&r));
            suite.check(10, "lambda sweep", || lambda_sweep(&r));
        }
        Err(err) => {
            for (id, name) in [(7, "synthetic end-to-end"), (8, "sparsity robustness"), (9, "recalibration composition"), (10, "lambda sweep")] {
                suite.check(id, name, || Err(format!("reference data: {err}")));
            }
        }
    }
    suite.check(11, "determinism", determinism);
    if suite.failed == 0 {
        println!("all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} of 11 criteria failed", suite.failed);
        ExitCode::FAILURE
    }
}
