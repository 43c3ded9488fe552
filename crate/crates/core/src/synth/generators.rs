//! Parametric stand-ins for the field recordings: tonal chirps for whale
//! sound units and four characteristic background noise types.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::{NamedClip, NoiseType, SynthError};
use crate::audio::AudioClip;
use crate::seed;

fn check_duration(duration_s: f64, sample_rate: f64) -> Result<usize, SynthError> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(SynthError::InvalidParam(format!("sample rate {sample_rate}")));
    }
    let n = (duration_s * sample_rate).round();
    if n.is_nan() || n < 1.0 {
        return Err(SynthError::InvalidParam(format!("duration {duration_s} s")));
    }
    Ok(n as usize)
}

/// Adds a raised-cosine-tapered linear chirp into `out` starting at sample
/// `start`; samples past the end of `out` are dropped.
fn add_chirp(out: &mut [f64], start: usize, len: usize, f0: f64, f1: f64, amp: f64, sample_rate: f64) {
    let duration = len as f64 / sample_rate;
    let ramp = ((0.05 * sample_rate) as usize).min(len / 4).max(1);
    let sweep = (f1 - f0) / (2.0 * duration);
    for i in 0..len {
        let Some(slot) = out.get_mut(start + i) else { break };
        let t = i as f64 / sample_rate;
        let phase = 2.0 * PI * (f0 * t + sweep * t * t);
        let edge = i.min(len - 1 - i);
        let gain = if edge < ramp {
            0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        *slot += amp * gain * phase.sin();
    }
}

/// A linear frequency sweep from `f_start_hz` to `f_end_hz` with continuous
/// phase and raised-cosine onset/offset, scaled so its peak equals `amp`.
pub fn synth_whale_unit(
    duration_s: f64,
    f_start_hz: f64,
    f_end_hz: f64,
    amp: f64,
    sample_rate: f64,
) -> Result<AudioClip, SynthError> {
    let n = check_duration(duration_s, sample_rate)?;
    let nyquist = sample_rate / 2.0;
    for f in [f_start_hz, f_end_hz] {
        if !(f > 0.0 && f < nyquist) {
            return Err(SynthError::InvalidFrequency { freq_hz: f, nyquist });
        }
    }
    let mut samples = vec![0.0; n];
    add_chirp(&mut samples, 0, n, f_start_hz, f_end_hz, 1.0, sample_rate);
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = amp / peak;
        samples.iter_mut().for_each(|s| *s *= scale);
    }
    Ok(AudioClip::new(samples, sample_rate)?)
}

fn white(rng: &mut impl Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// One-pole low-pass `y[n] = (1-a) x[n] + a y[n-1]` with `a = exp(-2π fc / fs)`.
fn low_pass(signal: &mut [f64], cutoff_hz: f64, sample_rate: f64) {
    let a = (-2.0 * PI * cutoff_hz / sample_rate).exp();
    let mut y = 0.0;
    for s in signal.iter_mut() {
        y = (1.0 - a) * *s + a * y;
        *s = y;
    }
}

fn scale_to_rms(signal: &mut [f64], rms: f64) {
    let p = signal.iter().map(|s| s * s).sum::<f64>() / signal.len() as f64;
    if p > 0.0 {
        let g = rms / p.sqrt();
        signal.iter_mut().for_each(|s| *s *= g);
    }
}

/// Seeded background noise of the requested character:
///
/// - `clean`: low-level stationary white noise (recorder self-noise).
/// - `wind`: doubly low-passed white noise with slow gusting.
/// - `rain`: broadband white noise plus impulsive drop transients.
/// - `traffic`: a harmonic stack with slow frequency modulation.
/// - `chorus`: overlapping random tonal sweeps, a new call at least every
///   second.
pub fn synth_noise(
    noise_type: NoiseType,
    duration_s: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<AudioClip, SynthError> {
    let n = check_duration(duration_s, sample_rate)?;
    let mut rng = seed::rng(seed::derive(seed, noise_type as u64));
    let t = |i: usize| i as f64 / sample_rate;
    let samples = match noise_type {
        NoiseType::Clean => white(&mut rng, n, 0.01),
        NoiseType::Wind => {
            let mut s = white(&mut rng, n, 1.0);
            low_pass(&mut s, 300.0, sample_rate);
            low_pass(&mut s, 300.0, sample_rate);
            let gust_hz = rng.random_range(0.1..0.4);
            let phase = rng.random_range(0.0..2.0 * PI);
            for (i, v) in s.iter_mut().enumerate() {
                *v *= 1.0 + 0.5 * (2.0 * PI * gust_hz * t(i) + phase).sin();
            }
            scale_to_rms(&mut s, 0.1);
            s
        }
        NoiseType::Rain => {
            let mut s = white(&mut rng, n, 0.02);
            let gap = Exp::new(300.0).unwrap();
            let decay = (0.001 * sample_rate) as usize;
            let mut at = gap.sample(&mut rng);
            while ((at * sample_rate) as usize) < n {
                let start = (at * sample_rate) as usize;
                let amp = rng.random_range(0.02..0.2);
                for k in 0..(6 * decay).min(n - start) {
                    let env = (-(k as f64) / decay as f64).exp();
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s[start + k] += amp * env * z;
                }
                at += gap.sample(&mut rng);
            }
            s
        }
        NoiseType::Traffic => {
            let f0 = rng.random_range(30.0..90.0);
            let fm_period = rng.random_range(4.0..10.0);
            let fm_phase = rng.random_range(0.0..2.0 * PI);
            let harmonics = ((5000.0 / f0) as usize).max(1);
            let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let mut s = white(&mut rng, n, 0.01);
            let mut base_phase = 0.0;
            for (i, v) in s.iter_mut().enumerate() {
                let inst = f0 * (1.0 + 0.03 * (2.0 * PI * t(i) / fm_period + fm_phase).sin());
                base_phase += 2.0 * PI * inst / sample_rate;
                *v += phases
                    .iter()
                    .enumerate()
                    .map(|(k, ph)| ((k + 1) as f64 * base_phase + ph).sin() / (k + 1) as f64)
                    .sum::<f64>()
                    * 0.1;
            }
            s
        }
        NoiseType::Chorus => {
            let mut s = white(&mut rng, n, 0.005);
            let nyquist = sample_rate / 2.0;
            let mut start = rng.random_range(0.0..0.5);
            while ((start * sample_rate) as usize) < n {
                let len = (rng.random_range(0.5..1.5) * sample_rate) as usize;
                let f0 = rng.random_range(300.0..2500.0f64).min(nyquist * 0.9);
                let f1 = rng.random_range(300.0..2500.0f64).min(nyquist * 0.9);
                let amp = rng.random_range(0.05..0.25);
                add_chirp(&mut s, (start * sample_rate) as usize, len, f0, f1, amp, sample_rate);
                start += rng.random_range(0.3..1.0);
            }
            s
        }
    };
    Ok(AudioClip::new(samples, sample_rate)?)
}

/// `count` random chirp units standing in for annotated whale sound units:
/// durations 0.6–1.8 s, start/end frequencies 400–3000 Hz (capped below
/// Nyquist), unit peak.
pub fn synth_units(count: usize, sample_rate: f64, seed: u64) -> Result<Vec<NamedClip>, SynthError> {
    (0..count)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let duration = rng.random_range(0.6..1.8);
            let f_max = (0.45 * sample_rate).min(3000.0);
            let f0 = rng.random_range(400.0..f_max);
            let f1 = rng.random_range(400.0..f_max);
            Ok(NamedClip {
                name: format!("unit{i:04}"),
                clip: synth_whale_unit(duration, f0, f1, 1.0, sample_rate)?,
            })
        })
        .collect()
}
