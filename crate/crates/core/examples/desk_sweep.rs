//! Desk-scale SNR sweep on synthetic units and noise with tiny-vgg codes.
//!
//! cargo run --release -p whaledet-core --example desk_sweep

use std::time::Instant;

use whaledet_core::eval::{self, MonteCarloParams, SweepConfig};
use whaledet_core::pipeline::Featurizer;
use whaledet_core::synth::{self, Experiment, NoiseBank, NoiseType};
use whaledet_core::{cnn, StftParams};

fn main() -> whaledet_core::Result<()> {
    let sr = 44_100.0;
    let start = Instant::now();
    let units = synth::synth_units(40, sr, 1)?;
    let bank = NoiseBank::synthetic(&NoiseType::ALL, 3, 10.0, sr, 2)?;
    let featurizer = Featurizer::cnn(StftParams::default(), cnn::tiny_vgg(0, 1))?;
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
    let result = eval::snr_sweep(&units, &bank, &featurizer, &cfg)?;
    print!("{}", eval::sweep_csv(&result));
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
