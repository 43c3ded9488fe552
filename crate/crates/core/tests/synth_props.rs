use rand::Rng;
use whaledet_core::spectrogram::{Stft, StftParams};
use whaledet_core::synth::{self, Experiment, ExperimentConfig, NoiseBank, NoiseType};
use whaledet_core::{seed, AudioClip, Label};

const SR: f64 = 44_100.0;

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn random_clip(rng: &mut impl Rng, n: usize) -> AudioClip {
    let scale = 10f64.powf(rng.random_range(-3.0..1.0));
    AudioClip::new((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(), 8000.0).unwrap()
}

/// Recomputes the SNR from the mixture by subtracting the clean signal.
fn measured_snr(signal: &AudioClip, mixed: &AudioClip) -> f64 {
    let noise: Vec<f64> = mixed
        .samples()
        .iter()
        .zip(signal.samples())
        .map(|(m, s)| m - s)
        .collect();
    10.0 * (power(signal.samples()) / power(&noise)).log10()
}

#[test]
fn snr_round_trip_on_random_pairs() {
    let mut rng = seed::rng(2024);
    for k in 0..300 {
        let target = [-10.0, -5.0, 0.0, 5.0, 10.0][k % 5];
        let s = random_clip(&mut rng, 2000);
        let n = random_clip(&mut rng, 2000);
        let m = synth::mix_components(&s, &n, target).unwrap();
        assert!((measured_snr(&s, &m.mixed) - target).abs() <= 1e-9);
        assert!((m.achieved_snr_db - target).abs() <= 1e-9);
    }
}

fn desk_bank() -> NoiseBank {
    NoiseBank::synthetic(&NoiseType::ALL, 2, 6.0, SR, 17).unwrap()
}

#[test]
fn experiment_samples_are_balanced_and_on_target() {
    let units = synth::synth_units(5, SR, 3).unwrap();
    let bank = desk_bank();
    for experiment in [Experiment::E1, Experiment::E6] {
        let cfg = ExperimentConfig::new(experiment, -5.0, 11);
        let samples = synth::build_experiment(&units, &bank, &cfg, 12, 8).unwrap();
        assert_eq!(samples.iter().filter(|s| s.label == Label::Whale).count(), 12);
        assert_eq!(samples.iter().filter(|s| s.label == Label::Noise).count(), 8);
        for s in &samples {
            assert_eq!(s.audio.len(), 88_200);
            assert!(experiment.noise_types().contains(&s.provenance.noise_type));
            if s.label == Label::Whale {
                let achieved = s.provenance.achieved_snr_db.unwrap();
                assert!((achieved + 5.0).abs() <= 0.01);
            }
        }
        if experiment == Experiment::E1 {
            assert!(samples.iter().all(|s| s.provenance.noise_type == NoiseType::Clean));
        }
    }
}

#[test]
fn positives_are_unit_plus_scaled_noise_segment() {
    let units = synth::synth_units(3, SR, 4).unwrap();
    let bank = desk_bank();
    let cfg = ExperimentConfig::new(Experiment::E3, 5.0, 2);
    let windows = synth::unit_windows(&units, 2.0).unwrap();
    for s in synth::build_experiment(&units, &bank, &cfg, 6, 0).unwrap() {
        let p = &s.provenance;
        let unit = windows.iter().find(|w| Some(&w.name) == p.unit_file.as_ref()).unwrap();
        let source = bank
            .clips(p.noise_type)
            .iter()
            .find(|c| c.name == p.noise_file)
            .unwrap();
        let noise = source.clip.slice(p.offset_samples, 88_200);
        let expected = synth::mix_at_snr(&unit.clip, &noise, 5.0).unwrap();
        assert_eq!(expected.samples(), s.audio.samples());
        assert!((measured_snr(&unit.clip, &s.audio) - 5.0).abs() <= 1e-9);
    }
}

#[test]
fn build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let units = synth::synth_units(4, SR, 3).unwrap();
    let bank = desk_bank();
    let cfg = ExperimentConfig::new(Experiment::E6, 0.0, 99);
    let run = |name: &str| {
        let samples = synth::build_experiment(&units, &bank, &cfg, 10, 10).unwrap();
        let rows: Vec<_> = samples.iter().map(|s| s.provenance.clone()).collect();
        let path = dir.path().join(name);
        synth::write_manifest(&path, &rows).unwrap();
        (samples, std::fs::read(path).unwrap())
    };
    let (a, ma) = run("a.csv");
    let (b, mb) = run("b.csv");
    assert_eq!(ma, mb);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.audio, y.audio);
    }
    let back = synth::read_manifest(dir.path().join("a.csv")).unwrap();
    assert_eq!(back, a.iter().map(|s| s.provenance.clone()).collect::<Vec<_>>());
}

#[test]
fn e6_draws_noise_types_uniformly() {
    let bank = desk_bank();
    let cfg = ExperimentConfig::new(Experiment::E6, 0.0, 5);
    let samples = synth::build_experiment(&[], &bank, &cfg, 0, 1000).unwrap();
    let n = samples.len() as f64;
    let p = 0.25;
    let bound = 3.0 * (n * p * (1.0 - p)).sqrt();
    for ty in Experiment::E6.noise_types() {
        let count = samples.iter().filter(|s| s.provenance.noise_type == *ty).count() as f64;
        assert!((count - n * p).abs() <= bound, "{ty}: {count} of {n}");
    }
}

#[test]
fn insufficient_noise_is_an_error() {
    let bank = NoiseBank::synthetic(&[NoiseType::Clean], 1, 1.0, SR, 1).unwrap();
    let units = synth::synth_units(2, SR, 1).unwrap();
    let cfg = ExperimentConfig::new(Experiment::E1, 0.0, 1);
    assert!(synth::build_experiment(&units, &bank, &cfg, 2, 2).is_err());
    let cfg = ExperimentConfig::new(Experiment::E2, 0.0, 1);
    assert!(synth::build_experiment(&units, &bank, &cfg, 2, 2).is_err());
}

fn magnitudes(clip: &AudioClip) -> whaledet_core::spectrogram::Grid {
    Stft::new(StftParams::default())
        .unwrap()
        .magnitudes(clip.samples())
        .unwrap()
}

fn ridge(grid: &whaledet_core::spectrogram::Grid, t: usize, lo: usize, hi: usize) -> usize {
    (lo..hi)
        .max_by(|&a, &b| grid.get(a, t).total_cmp(&grid.get(b, t)))
        .unwrap()
}

#[test]
fn chirp_ridge_rises_monotonically() {
    let clip = synth::synth_whale_unit(1.0, 200.0, 800.0, 1.0, SR).unwrap();
    let grid = magnitudes(&clip);
    let track: Vec<usize> = (0..grid.cols).map(|t| ridge(&grid, t, 0, grid.rows)).collect();
    assert!(track.windows(2).all(|w| w[1] >= w[0]), "{track:?}");
    let hz = |bin: usize| bin as f64 * SR / 2048.0;
    assert!(hz(track[0]) < 260.0 && hz(*track.last().unwrap()) > 740.0, "{track:?}");
}

#[test]
fn pure_tone_unit_peaks_at_its_bin() {
    let f = 40.0 * SR / 2048.0;
    let clip = synth::synth_whale_unit(1.0, f, f, 0.5, SR).unwrap();
    let grid = magnitudes(&clip);
    for t in 0..grid.cols {
        assert_eq!(ridge(&grid, t, 0, grid.rows), 40);
    }
}

/// Geometric over arithmetic mean of the frame-averaged power spectrum
/// between DC and 10 kHz.
fn spectral_flatness(clip: &AudioClip) -> f64 {
    let grid = magnitudes(clip);
    let top = (10_000.0 / (SR / 2048.0)) as usize;
    let spectrum: Vec<f64> = (1..=top)
        .map(|f| grid.row(f).iter().map(|m| m * m).sum::<f64>() / grid.cols as f64)
        .collect();
    let log_mean = spectrum.iter().map(|p| p.ln()).sum::<f64>() / spectrum.len() as f64;
    log_mean.exp() / (spectrum.iter().sum::<f64>() / spectrum.len() as f64)
}

#[test]
fn rain_is_flatter_than_wind() {
    for s in 0..3 {
        let rain = synth::synth_noise(NoiseType::Rain, 4.0, SR, s).unwrap();
        let wind = synth::synth_noise(NoiseType::Wind, 4.0, SR, s).unwrap();
        let (fr, fw) = (spectral_flatness(&rain), spectral_flatness(&wind));
        assert!(fr > fw, "seed {s}: rain {fr} wind {fw}");
    }
}

/// A ridge: at least `min_frames` consecutive frames whose strongest bin in
/// 300–2500 Hz exceeds ten times the frame's median magnitude in that band.
fn has_ridge(clip: &AudioClip, min_frames: usize) -> bool {
    let grid = magnitudes(clip);
    let bin = |hz: f64| (hz / (SR / 2048.0)).round() as usize;
    let (lo, hi) = (bin(300.0), bin(2500.0));
    let mut run = 0;
    for t in 0..grid.cols {
        let mut band: Vec<f64> = (lo..hi).map(|f| grid.get(f, t)).collect();
        band.sort_by(f64::total_cmp);
        let median = band[band.len() / 2];
        if band[band.len() - 1] > 10.0 * median {
            run += 1;
            if run >= min_frames {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

#[test]
fn chorus_has_a_ridge_in_every_window() {
    for s in 0..3 {
        let chorus = synth::synth_noise(NoiseType::Chorus, 20.0, SR, s).unwrap();
        let windows = whaledet_core::audio::frame_windows(&chorus, 2.0).unwrap();
        for (k, w) in windows.iter() {
            assert!(has_ridge(w, 10), "seed {s} window {k}");
        }
    }
    let clean = synth::synth_noise(NoiseType::Clean, 2.0, SR, 0).unwrap();
    assert!(!has_ridge(&clean, 10));
}
