use std::path::{Path, PathBuf};

use whaledet_core::audio::{self, WavEncoding};
use whaledet_core::eval::{self, SweepResult};
use whaledet_core::pipeline::{self, FeatureKind, Featurizer};
use whaledet_core::synth::{self, ExperimentConfig, NamedClip, NoiseBank, NoiseType};
use whaledet_core::{cnn, seed, svm, LabeledSet, SvmModel};

use crate::config::PipelineConfig;
use crate::Failure;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| io_failure(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn load_units(cfg: &PipelineConfig) -> Result<Vec<NamedClip>, Failure> {
    Ok(match &cfg.units {
        Some(dir) => synth::load_units(dir)?,
        None => synth::synth_units(cfg.synth_units, cfg.sample_rate, seed::derive(cfg.seed, 1))?,
    })
}

fn load_bank(cfg: &PipelineConfig, types: &[NoiseType]) -> Result<NoiseBank, Failure> {
    Ok(match &cfg.bank {
        Some(dir) => NoiseBank::load_dir(dir)?,
        None => NoiseBank::synthetic(
            types,
            cfg.synth_bank_clips,
            cfg.synth_bank_clip_s,
            cfg.sample_rate,
            seed::derive(cfg.seed, 2),
        )?,
    })
}

fn featurizer(cfg: &PipelineConfig, kind: FeatureKind) -> Result<Featurizer, Failure> {
    let f = match kind {
        FeatureKind::Cnn => {
            let net = match &cfg.network {
                Some(path) => cnn::load_network(path)?,
                None => cnn::tiny_vgg(cfg.network_seed, cfg.network_channels),
            };
            Featurizer::cnn(cfg.stft(), net)?
        }
        FeatureKind::Spectrogram => Featurizer::spectrogram(cfg.stft(), cfg.image_width, cfg.image_height)?,
    };
    Ok(f.with_l2_normalize(cfg.l2_normalize).with_resize(cfg.resize))
}

fn sample_path(dir: &Path, sample_id: usize) -> PathBuf {
    dir.join("samples").join(format!("{sample_id:05}.wav"))
}

pub fn synth(cfg: &PipelineConfig, out: &Path) -> Result<(), Failure> {
    let (&[experiment], &[snr_db]) = (cfg.experiments.as_slice(), cfg.snr_values.as_slice()) else {
        return Err(Failure::usage("synth needs exactly one --experiment and one --snr"));
    };
    let units = load_units(cfg)?;
    let bank = load_bank(cfg, experiment.noise_types())?;
    let exp_cfg = ExperimentConfig {
        window_s: cfg.window_s,
        ..ExperimentConfig::new(experiment, snr_db, cfg.seed)
    };
    let samples = synth::build_experiment(&units, &bank, &exp_cfg, cfg.n_pos, cfg.n_neg)?;

    create_dir(&out.join("samples"))?;
    for s in &samples {
        audio::save_wav(sample_path(out, s.provenance.sample_id), &s.audio, WavEncoding::Float32)?;
    }
    let rows: Vec<_> = samples.into_iter().map(|s| s.provenance).collect();
    synth::write_manifest(out.join("manifest.csv"), &rows)?;
    write_file(&out.join("run.toml"), &cfg.to_toml())?;
    eprintln!("wrote {} samples to {}", rows.len(), out.display());
    Ok(())
}

pub fn featurize(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<(), Failure> {
    let rows = synth::read_manifest(input.join("manifest.csv"))?;
    let clips = rows
        .iter()
        .map(|r| audio::load_wav(sample_path(input, r.sample_id)))
        .collect::<Result<Vec<_>, _>>()?;
    let f = featurizer(cfg, cfg.features)?;
    let features = f.features_all(&clips.iter().collect::<Vec<_>>())?;
    let set = LabeledSet::new(features, rows.iter().map(|r| r.label).collect());
    let ids: Vec<usize> = rows.iter().map(|r| r.sample_id).collect();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    pipeline::write_features(out, &set, &ids)?;
    write_file(&sibling(out, ".run.toml"), &cfg.to_toml())?;
    eprintln!(
        "wrote {}x{} {} features to {}",
        set.len(),
        f.dim(),
        f.kind(),
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<(), Failure> {
    let (set, _) = pipeline::read_features(input)?;
    let model = svm::train(&set, &cfg.svm())?;
    model.save(out)?;
    Ok(())
}

pub fn predict(model: &Path, input: &Path, out: &Path) -> Result<(), Failure> {
    let model = SvmModel::load(model)?;
    let (set, ids) = pipeline::read_features(input)?;
    let mut body = String::from("sample_id,label,decision_value,prediction\n");
    for ((x, label), id) in set.features.iter().zip(&set.labels).zip(&ids) {
        let d = svm::decision_value(&model, x)?;
        let p = svm::predict(&model, x)?;
        body.push_str(&format!("{id},{label},{d:?},{p}\n"));
    }
    write_file(out, &body)
}

pub fn evaluate(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<(), Failure> {
    let (set, _) = pipeline::read_features(input)?;
    let summary = eval::run_monte_carlo(&set, &cfg.monte_carlo())?;
    write_file(out, &eval::summary_csv(&summary))
}

fn grid_sources(cfg: &PipelineConfig) -> Result<(Vec<NamedClip>, NoiseBank), Failure> {
    let mut types: Vec<NoiseType> = cfg
        .experiments
        .iter()
        .flat_map(|e| e.noise_types().iter().copied())
        .collect();
    types.sort();
    types.dedup();
    if cfg.experiments.is_empty() || cfg.snr_values.is_empty() {
        return Err(Failure::usage("need at least one experiment and one SNR"));
    }
    Ok((load_units(cfg)?, load_bank(cfg, &types)?))
}

pub fn sweep(cfg: &PipelineConfig, out: &Path) -> Result<(), Failure> {
    let (units, bank) = grid_sources(cfg)?;
    let f = featurizer(cfg, cfg.features)?;
    let result = eval::snr_sweep(&units, &bank, &f, &cfg.sweep())?;
    create_dir(out)?;
    eval::write_sweep(out, &result)?;
    write_file(&out.join("run.toml"), &cfg.to_toml())?;
    eprintln!(
        "wrote {} cells to {}",
        result.cells.len(),
        out.join("results.csv").display()
    );
    Ok(())
}

pub fn compare(cfg: &PipelineConfig, kinds: &[FeatureKind], out: &Path) -> Result<(), Failure> {
    let (units, bank) = grid_sources(cfg)?;
    let featurizers = kinds
        .iter()
        .map(|&k| featurizer(cfg, k))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&Featurizer> = featurizers.iter().collect();
    let results: Vec<SweepResult> = eval::compare_representations(&units, &bank, &refs, &cfg.sweep())?;
    let names: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();

    create_dir(out)?;
    write_file(&out.join("comparison.csv"), &eval::comparison_csv(&name_refs, &results))?;
    for (name, result) in names.iter().zip(&results) {
        write_file(&out.join(format!("results_{name}.csv")), &eval::sweep_csv(result))?;
    }
    write_file(&out.join("run.toml"), &cfg.to_toml())?;
    Ok(())
}

pub fn init_network(cfg: &PipelineConfig, seed: Option<u64>, channels: usize, out: &Path) -> Result<(), Failure> {
    if channels == 0 {
        return Err(Failure::usage("--channels must be at least 1"));
    }
    let net = cnn::tiny_vgg(seed.unwrap_or(cfg.network_seed), channels);
    cnn::write_network(out, &net)?;
    Ok(())
}
