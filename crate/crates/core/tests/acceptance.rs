//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints a PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{hamming, naive_forward, random_case, to_stack, NaiveDft};
use rand::Rng;
use whaledet_core::cnn::{self, Activation, PoolLayer};
use whaledet_core::eval::{self, MonteCarloParams, SweepConfig, SweepResult};
use whaledet_core::pipeline::Featurizer;
use whaledet_core::spectrogram::{Stft, StftParams};
use whaledet_core::svm::{self, Label, LabeledSet, SvmParams};
use whaledet_core::synth::{self, Experiment, NoiseBank, NoiseType};
use whaledet_core::{seed, FeatureMapStack};

const SR: f64 = 44_100.0;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: u64) -> Outcome {
    check!(
        elapsed.as_secs_f64() < limit_s as f64,
        "took {elapsed:.1?}, limit {limit_s} s"
    );
    Ok(format!("{elapsed:.1?}"))
}

fn stft_oracle() -> Outcome {
    let start = Instant::now();
    let params = StftParams::default();
    let stft = Stft::new(params).map_err(|e| e.to_string())?;
    let dft = NaiveDft::new(params.fft_size);
    let window = hamming(params.segment_len);
    let mut worst = 0.0f64;
    for s in 0..50 {
        let mut rng = seed::rng(seed::derive(0xA1, s));
        let samples: Vec<f64> = (0..88_200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grid = stft.magnitudes(&samples).map_err(|e| e.to_string())?;
        check!(
            grid.cols == 171 && grid.rows == 1025,
            "grid {}x{}",
            grid.rows,
            grid.cols
        );
        for t in 0..grid.cols {
            let seg = &samples[t * params.hop..t * params.hop + params.segment_len];
            for (f, r) in dft.magnitudes(seg, &window).iter().enumerate() {
                let rel = (grid.get(f, t) - r).abs() / r.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
    }
    check!(worst <= 1e-6, "max relative error {worst:e}");
    let resolution = SR / params.fft_size as f64;
    check!((resolution - 21.533).abs() < 1e-3, "resolution {resolution}");
    let t = within(start.elapsed(), 30)?;
    Ok(format!(
        "50 clips, 171x1025, max rel err {worst:.2e}, {resolution:.3} Hz/bin, {t}"
    ))
}

fn cnn_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut softmax_nets = 0;
    for s in 0..100 {
        let (net, x) = random_case(seed::derive(0xC0, s));
        let last = net.layers().len() - 1;
        let ours = net.forward(to_stack(&x)).map_err(|e| e.to_string())?;
        let reference = naive_forward(&net, x, last);
        check!(ours.values().len() == reference.len(), "case {s}: length mismatch");
        for (a, b) in ours.values().iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
        if let Activation::Vector(p) = &ours {
            if matches!(net.layers().last(), Some(cnn::LayerSpec::Softmax)) {
                softmax_nets += 1;
                let sum: f64 = p.values.iter().sum();
                check!((sum - 1.0).abs() <= 1e-9, "case {s}: softmax sums to {sum}");
            }
        }
    }
    check!(worst <= 1e-5, "max abs error {worst:e}");
    check!(softmax_nets > 0, "no softmax networks sampled");
    let mut rng = seed::rng(0xC1);
    for (c, h, w) in [(1, 2, 2), (3, 16, 16), (8, 128, 128), (4, 10, 6)] {
        let x = FeatureMapStack::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = cnn::maxpool_forward(&x, &PoolLayer::default()).map_err(|e| e.to_string())?;
        check!(
            4 * y.height * y.width == h * w,
            "pool {h}x{w} -> {}x{}",
            y.height,
            y.width
        );
    }
    let t = within(start.elapsed(), 60)?;
    Ok(format!(
        "100 networks, max abs err {worst:.2e}, {softmax_nets} softmax heads, pool area 1/4, {t}"
    ))
}

fn snr_round_trip() -> Outcome {
    let start = Instant::now();
    let units = synth::synth_units(20, SR, 5).map_err(|e| e.to_string())?;
    let windows = synth::unit_windows(&units, 2.0).map_err(|e| e.to_string())?;
    let noise = synth::synth_noise(NoiseType::Rain, 4.0, SR, 6).map_err(|e| e.to_string())?;
    let mut rng = seed::rng(0x5A);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let target = [-10.0, -5.0, 0.0, 5.0, 10.0][k % 5];
        let signal = &windows[rng.random_range(0..windows.len())].clip;
        let offset = rng.random_range(0..=noise.len() - signal.len());
        let segment = noise.slice(offset, signal.len());
        let mixed = synth::mix_at_snr(signal, &segment, target).map_err(|e| e.to_string())?;
        let p = |x: &mut dyn Iterator<Item = f64>| {
            let (sum, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
            sum / n as f64
        };
        let p_s = p(&mut signal.samples().iter().copied());
        let p_n = p(&mut mixed.samples().iter().zip(signal.samples()).map(|(m, s)| m - s));
        worst = worst.max((10.0 * (p_s / p_n).log10() - target).abs());
    }
    check!(worst <= 1e-9, "max SNR error {worst:e} dB");
    let t = within(start.elapsed(), 10)?;
    Ok(format!("1000 mixes, max error {worst:.2e} dB, {t}"))
}

fn svm_separable() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(0x5B);
    let (mut features, mut labels) = (Vec::new(), Vec::new());
    for i in 0..400 {
        let whale = i % 2 == 0;
        let cx = if whale { 2.0 } else { -2.0 };
        features.push(vec![cx + rng.random_range(-1.5..1.5), rng.random_range(-4.0..4.0)]);
        labels.push(if whale { Label::Whale } else { Label::Noise });
    }
    let data = LabeledSet::new(features, labels);
    let params = SvmParams::default();
    let (model, report) = svm::train_with_report(&data, &params).map_err(|e| e.to_string())?;
    let hits = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &l)| svm::predict(&model, x).unwrap() == l)
        .count();
    let accuracy = hits as f64 / data.len() as f64;
    check!(accuracy >= 0.99, "training accuracy {accuracy}");
    let monotone = report
        .dual_objectives
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
    check!(monotone, "dual objective decreased: {:?}", report.dual_objectives);
    check!(
        report.alphas.iter().all(|&a| (0.0..=params.c).contains(&a)),
        "dual variable outside [0, C]"
    );
    let t = within(start.elapsed(), 5)?;
    Ok(format!(
        "accuracy {accuracy:.4}, {} epochs, duals in [0, {}], {t}",
        report.epochs, params.c
    ))
}

struct Desk {
    units: Vec<synth::NamedClip>,
    bank: NoiseBank,
    featurizer: Featurizer,
    cfg: SweepConfig,
}

fn desk() -> Desk {
    let units = synth::synth_units(40, SR, 1).unwrap();
    let bank = NoiseBank::synthetic(&NoiseType::ALL, 3, 10.0, SR, 2).unwrap();
    let featurizer = Featurizer::cnn(StftParams::default(), cnn::tiny_vgg(0, 1)).unwrap();
    let cfg = SweepConfig {
        experiments: Experiment::ALL.to_vec(),
        snr_values: vec![-10.0, 0.0, 10.0],
        n_pos: 80,
        n_neg: 80,
        monte_carlo: MonteCarloParams {
            n_iter: 20,
            n_train: 100,
            n_test: 60,
            ..MonteCarloParams::default()
        },
        seed: 3,
        ..SweepConfig::default()
    };
    Desk {
        units,
        bank,
        featurizer,
        cfg,
    }
}

fn end_to_end(desk: &Desk, result: &mut Option<SweepResult>) -> Outcome {
    let start = Instant::now();
    let sweep = eval::snr_sweep(&desk.units, &desk.bank, &desk.featurizer, &desk.cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    print!("{}", eval::sweep_csv(&sweep));
    let cr = |e, s| sweep.cell(e, s).unwrap().summary.mean_correct_recognition;
    let mut failures = Vec::new();
    for s in [-10.0, 0.0, 10.0] {
        if cr(Experiment::E1, s) < 0.9 {
            failures.push(format!("(a) E1 at {s} dB: {:.3}", cr(Experiment::E1, s)));
        }
        if cr(Experiment::E6, s) > cr(Experiment::E1, s) {
            failures.push(format!(
                "(c) E6 {:.3} > E1 {:.3} at {s} dB",
                cr(Experiment::E6, s),
                cr(Experiment::E1, s)
            ));
        }
    }
    for e in &Experiment::ALL[1..] {
        if cr(*e, 10.0) < cr(*e, -10.0) {
            failures.push(format!(
                "(b) {e}: {:.3} at 10 dB < {:.3} at -10 dB",
                cr(*e, 10.0),
                cr(*e, -10.0)
            ));
        }
    }
    *result = Some(sweep);
    check!(failures.is_empty(), "{}", failures.join("; "));
    let t = within(elapsed, 600)?;
    Ok(format!("(a) E1 >= 0.9, (b) E2-E6 rise with SNR, (c) E6 <= E1; {t}"))
}

fn sweep_files(result: &SweepResult) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    eval::write_sweep(dir.path(), result).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism(desk: &Desk, first: Option<&SweepResult>) -> Outcome {
    let first = first.ok_or("end-to-end sweep did not complete")?;
    let again = eval::snr_sweep(&desk.units, &desk.bank, &desk.featurizer, &desk.cfg).map_err(|e| e.to_string())?;
    let (a, b) = (sweep_files(first), sweep_files(&again));
    check!(a == b, "sweep outputs differ between runs");
    Ok(format!("{} CSV files byte-identical across reruns", a.len()))
}

fn representation_comparison(desk: &Desk) -> Outcome {
    let start = Instant::now();
    let spectro = Featurizer::spectrogram(StftParams::default(), 256, 256).map_err(|e| e.to_string())?;
    let cfg = SweepConfig {
        experiments: vec![Experiment::E1, Experiment::E6],
        snr_values: vec![0.0],
        monte_carlo: MonteCarloParams {
            n_iter: 5,
            ..desk.cfg.monte_carlo
        },
        ..desk.cfg.clone()
    };
    let results = eval::compare_representations(&desk.units, &desk.bank, &[&desk.featurizer, &spectro], &cfg)
        .map_err(|e| e.to_string())?;
    let table = eval::comparison_csv(&["cnn", "spectrogram"], &results);
    print!("{table}");
    let mut lines = table.lines();
    check!(
        lines.next()
            == Some("experiment_id,snr_db,cnn_correct_recognition,cnn_false_alarm,spectrogram_correct_recognition,spectrogram_false_alarm"),
        "unexpected header"
    );
    let rows: Vec<&str> = lines.collect();
    check!(rows.len() == 2, "{} rows", rows.len());
    for row in &rows {
        let rates: Vec<f64> = row.split(',').skip(2).map(|v| v.parse().unwrap_or(f64::NAN)).collect();
        check!(
            rates.len() == 4 && rates.iter().all(|r| (0.0..=1.0).contains(r)),
            "bad row {row}"
        );
    }
    Ok(format!(
        "paired cnn/spectrogram table, {} cells, {:.1?}",
        rows.len(),
        start.elapsed()
    ))
}

fn run(name: &str, failed: &mut Vec<String>, f: impl FnOnce() -> Outcome) {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(why) => {
            println!("FAIL {name}: {why}");
            failed.push(name.to_string());
        }
    }
}

fn main() {
    let mut failed = Vec::new();
    run("spectrogram oracle", &mut failed, stft_oracle);
    run("cnn oracle", &mut failed, cnn_oracle);
    run("snr round trip", &mut failed, snr_round_trip);
    run("svm separable", &mut failed, svm_separable);
    let desk = desk();
    let mut sweep = None;
    run("end-to-end desk sweep", &mut failed, || end_to_end(&desk, &mut sweep));
    run("determinism", &mut failed, || determinism(&desk, sweep.as_ref()));
    run("representation comparison", &mut failed, || {
        representation_comparison(&desk)
    });
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
