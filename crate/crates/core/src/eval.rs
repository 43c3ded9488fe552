//! Monte-Carlo train/test evaluation, confusion matrices and SNR sweeps.
//!
//! Every iteration draws a disjoint train/test split without replacement,
//! trains a linear SVM and scores it. Iterations are seeded individually
//! and aggregated in index order, so parallel and sequential runs agree
//! bit for bit.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Featurizer;
use crate::seed;
use crate::svm::{self, Label, LabeledSet, SvmError, SvmParams};
use crate::synth::{self, Experiment, ExperimentConfig, NamedClip, NoiseBank};

/// Splits per iteration that may be redrawn when one class is missing.
pub const MAX_SPLIT_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {truth} ground-truth labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("pool has {available} samples, need {needed}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("cannot honor group constraint: {0}")]
    IrreconcilableGroups(String),
    #[error("no split with both classes in train and test after {0} attempts")]
    ClassMissing(usize),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// 2×2 counts, whale = positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// `tp / (tp + fn)`; NaN without positives.
    pub fn correct_recognition(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_neg) as f64
    }

    /// `fp / (fp + tn)`; NaN without negatives.
    pub fn false_alarm(&self) -> f64 {
        self.false_pos as f64 / (self.false_pos + self.true_neg) as f64
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_pos + self.true_neg) as f64 / self.total() as f64
    }
}

pub fn confusion(predictions: &[Label], truth: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (t, p) {
            (Label::Whale, Label::Whale) => cm.true_pos += 1,
            (Label::Noise, Label::Whale) => cm.false_pos += 1,
            (Label::Whale, Label::Noise) => cm.false_neg += 1,
            (Label::Noise, Label::Noise) => cm.true_neg += 1,
        }
    }
    Ok(cm)
}

/// Optional feature scaling applied per split; statistics come from the
/// training part only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScaling {
    #[default]
    None,
    /// Zero mean, unit variance per dimension.
    Standardize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloParams {
    pub n_iter: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub svm: SvmParams,
    pub scaling: FeatureScaling,
    pub seed: u64,
}

impl Default for MonteCarloParams {
    /// 100 iterations of 300 train / 200 test samples.
    fn default() -> Self {
        Self {
            n_iter: 100,
            n_train: 300,
            n_test: 200,
            svm: SvmParams::default(),
            scaling: FeatureScaling::None,
            seed: 0,
        }
    }
}

/// Mean and (sample) standard deviation of per-iteration scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n_iter: usize,
    pub mean_correct_recognition: f64,
    pub std_correct_recognition: f64,
    pub mean_false_alarm: f64,
    pub std_false_alarm: f64,
    pub mean_tp: f64,
    pub mean_fp: f64,
    pub mean_fn: f64,
    pub mean_tn: f64,
    pub iterations: Vec<ConfusionMatrix>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MonteCarloSummary {
    pub fn from_iterations(iterations: Vec<ConfusionMatrix>) -> Self {
        let cr: Vec<f64> = iterations.iter().map(|c| c.correct_recognition()).collect();
        let fa: Vec<f64> = iterations.iter().map(|c| c.false_alarm()).collect();
        let (mean_correct_recognition, std_correct_recognition) = mean_std(&cr);
        let (mean_false_alarm, std_false_alarm) = mean_std(&fa);
        let n = iterations.len() as f64;
        let avg = |f: fn(&ConfusionMatrix) -> usize| iterations.iter().map(|c| f(c) as f64).sum::<f64>() / n;
        Self {
            n_iter: iterations.len(),
            mean_correct_recognition,
            std_correct_recognition,
            mean_false_alarm,
            std_false_alarm,
            mean_tp: avg(|c| c.true_pos),
            mean_fp: avg(|c| c.false_pos),
            mean_fn: avg(|c| c.false_neg),
            mean_tn: avg(|c| c.true_neg),
            iterations,
        }
    }
}

fn has_both(labels: &[Label], idx: &[usize]) -> bool {
    let whales = idx.iter().filter(|&&i| labels[i] == Label::Whale).count();
    whales > 0 && whales < idx.len()
}

/// Draws `n_train` indices from `train_pool` and `n_test` from `test_pool`
/// (the same slice when groups are not used), disjoint, with both classes on
/// each side.
fn draw_split(
    labels: &[Label],
    train_pool: &[usize],
    test_pool: Option<&[usize]>,
    params: &MonteCarloParams,
    iter_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    for attempt in 0..MAX_SPLIT_RETRIES {
        let mut rng = seed::rng(seed::derive(iter_seed, attempt as u64));
        let mut a = train_pool.to_vec();
        a.shuffle(&mut rng);
        let (train, test) = match test_pool {
            None => (
                a[..params.n_train].to_vec(),
                a[params.n_train..params.n_train + params.n_test].to_vec(),
            ),
            Some(tp) => {
                let mut b = tp.to_vec();
                b.shuffle(&mut rng);
                (a[..params.n_train].to_vec(), b[..params.n_test].to_vec())
            }
        };
        if has_both(labels, &train) && has_both(labels, &test) {
            return Ok((train, test));
        }
    }
    Err(EvalError::ClassMissing(MAX_SPLIT_RETRIES))
}

fn standardize(train: &mut LabeledSet, test: &mut LabeledSet) {
    let dim = train.dim().unwrap_or(0);
    let n = train.len() as f64;
    for j in 0..dim {
        let mean = train.features.iter().map(|x| x[j]).sum::<f64>() / n;
        let var = train.features.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for x in train.features.iter_mut().chain(test.features.iter_mut()) {
            x[j] = (x[j] - mean) / sd;
        }
    }
}

/// Trains on `train`, scores on `test`.
pub fn evaluate_split(
    pool: &LabeledSet,
    train: &[usize],
    test: &[usize],
    params: &MonteCarloParams,
    svm_seed: u64,
) -> Result<ConfusionMatrix, EvalError> {
    let mut train_set = pool.subset(train);
    let mut test_set = pool.subset(test);
    if params.scaling == FeatureScaling::Standardize {
        standardize(&mut train_set, &mut test_set);
    }
    let model = svm::train(
        &train_set,
        &SvmParams {
            seed: svm_seed,
            ..params.svm
        },
    )?;
    let predictions = test_set
        .features
        .iter()
        .map(|x| svm::predict(&model, x))
        .collect::<Result<Vec<_>, _>>()?;
    confusion(&predictions, &test_set.labels)
}

/// Repeated random train/test evaluation.
///
/// With group tags, every ordered pair of distinct tags (train tag, test
/// tag) that can supply `n_train`/`n_test` samples is evaluated for
/// `n_iter` iterations, and all iterations are pooled.
pub fn run_monte_carlo(pool: &LabeledSet, params: &MonteCarloParams) -> Result<MonteCarloSummary, EvalError> {
    pool.validate()?;
    if params.n_iter == 0 || params.n_train == 0 || params.n_test == 0 {
        return Err(EvalError::PoolTooSmall {
            needed: 1,
            available: 0,
        });
    }
    // Each job: (train pool, optional separate test pool).
    let mut jobs: Vec<(Vec<usize>, Option<Vec<usize>>)> = Vec::new();
    match &pool.group_tags {
        None => {
            let needed = params.n_train + params.n_test;
            if pool.len() < needed {
                return Err(EvalError::PoolTooSmall {
                    needed,
                    available: pool.len(),
                });
            }
            jobs.push(((0..pool.len()).collect(), None));
        }
        Some(tags) => {
            let distinct: BTreeSet<&str> = tags.iter().map(String::as_str).collect();
            if distinct.len() < 2 {
                return Err(EvalError::IrreconcilableGroups(format!(
                    "need at least two distinct group tags, found {}",
                    distinct.len()
                )));
            }
            let members = |tag: &str| -> Vec<usize> { (0..tags.len()).filter(|&i| tags[i] == tag).collect() };
            for &a in &distinct {
                for &b in &distinct {
                    if a == b {
                        continue;
                    }
                    let (ta, tb) = (members(a), members(b));
                    if ta.len() >= params.n_train && tb.len() >= params.n_test {
                        jobs.push((ta, Some(tb)));
                    }
                }
            }
            if jobs.is_empty() {
                return Err(EvalError::IrreconcilableGroups(format!(
                    "no (train, test) tag pair supplies {} train and {} test samples",
                    params.n_train, params.n_test
                )));
            }
        }
    }

    let total = jobs.len() * params.n_iter;
    let iterations = (0..total)
        .into_par_iter()
        .map(|k| {
            let (train_pool, test_pool) = &jobs[k / params.n_iter];
            let iter_seed = seed::derive(params.seed, k as u64);
            let (train, test) = draw_split(&pool.labels, train_pool, test_pool.as_deref(), params, iter_seed)?;
            evaluate_split(pool, &train, &test, params, seed::derive(iter_seed, u64::MAX))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloSummary::from_iterations(iterations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub experiments: Vec<Experiment>,
    pub snr_values: Vec<f64>,
    /// Positives and negatives synthesized per cell.
    pub n_pos: usize,
    pub n_neg: usize,
    pub window_s: f64,
    pub monte_carlo: MonteCarloParams,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            experiments: Experiment::ALL.to_vec(),
            snr_values: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            n_pos: 250,
            n_neg: 250,
            window_s: crate::audio::DEFAULT_WINDOW_S,
            monte_carlo: MonteCarloParams::default(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    /// Dataset seed of one experiment. It does not depend on the SNR, so
    /// cells of the same experiment share noise draws and differ only in
    /// the mixing gain.
    pub fn dataset_seed(&self, experiment: Experiment) -> u64 {
        seed::derive(self.seed, experiment.index() as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub experiment: Experiment,
    pub snr_db: f64,
    pub summary: MonteCarloSummary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, experiment: Experiment, snr_db: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.experiment == experiment && c.snr_db == snr_db)
    }
}

/// Synthesizes one experiment cell and turns it into a labeled pool.
pub fn build_pool(
    units: &[NamedClip],
    bank: &NoiseBank,
    experiment: Experiment,
    snr_db: f64,
    cfg: &SweepConfig,
    featurizers: &[&Featurizer],
) -> crate::Result<Vec<LabeledSet>> {
    let exp_cfg = ExperimentConfig {
        window_s: cfg.window_s,
        ..ExperimentConfig::new(experiment, snr_db, cfg.dataset_seed(experiment))
    };
    let samples = synth::build_experiment(units, bank, &exp_cfg, cfg.n_pos, cfg.n_neg)?;
    let clips: Vec<_> = samples.iter().map(|s| &s.audio).collect();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let tags: Option<Vec<String>> = samples.iter().map(|s| s.audio.label_tag.clone()).collect();
    featurizers
        .iter()
        .map(|f| {
            Ok(LabeledSet {
                features: f.features_all(&clips)?,
                labels: labels.clone(),
                group_tags: tags.clone(),
            })
        })
        .collect()
}

/// Full (experiment × SNR) grid.
pub fn snr_sweep(
    units: &[NamedClip],
    bank: &NoiseBank,
    featurizer: &Featurizer,
    cfg: &SweepConfig,
) -> crate::Result<SweepResult> {
    let mut result = SweepResult::default();
    for &experiment in &cfg.experiments {
        for &snr_db in &cfg.snr_values {
            let pool = build_pool(units, bank, experiment, snr_db, cfg, &[featurizer])?.remove(0);
            let summary = run_monte_carlo(&pool, &cfg.monte_carlo)?;
            result.cells.push(SweepCell {
                experiment,
                snr_db,
                summary,
            });
        }
    }
    Ok(result)
}

/// Evaluates several representations on identical datasets and splits.
/// Returns one sweep per featurizer, in the order given.
pub fn compare_representations(
    units: &[NamedClip],
    bank: &NoiseBank,
    featurizers: &[&Featurizer],
    cfg: &SweepConfig,
) -> crate::Result<Vec<SweepResult>> {
    let mut results = vec![SweepResult::default(); featurizers.len()];
    for &experiment in &cfg.experiments {
        for &snr_db in &cfg.snr_values {
            let pools = build_pool(units, bank, experiment, snr_db, cfg, featurizers)?;
            for (pool, result) in pools.iter().zip(results.iter_mut()) {
                result.cells.push(SweepCell {
                    experiment,
                    snr_db,
                    summary: run_monte_carlo(pool, &cfg.monte_carlo)?,
                });
            }
        }
    }
    Ok(results)
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "experiment_id",
    "snr_db",
    "n_iter",
    "mean_correct_recognition",
    "std_correct_recognition",
    "mean_false_alarm",
    "std_false_alarm",
    "tp",
    "fp",
    "fn",
    "tn",
];

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = SWEEP_COLUMNS.join(",");
    s.push('\n');
    for c in &result.cells {
        let m = &c.summary;
        let row = [
            c.experiment.to_string(),
            c.snr_db.to_string(),
            m.n_iter.to_string(),
            f6(m.mean_correct_recognition),
            f6(m.std_correct_recognition),
            f6(m.mean_false_alarm),
            f6(m.std_false_alarm),
            f6(m.mean_tp),
            f6(m.mean_fp),
            f6(m.mean_fn),
            f6(m.mean_tn),
        ];
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}

/// Per-experiment confusion matrices, one row per SNR, with each row of the
/// 2×2 matrix normalized by its true-class count.
pub fn confusion_csv(result: &SweepResult, experiment: Experiment) -> String {
    let mut s = String::from("snr_db,tp,fp,fn,tn,whale_as_whale,whale_as_noise,noise_as_whale,noise_as_noise\n");
    for c in result.cells.iter().filter(|c| c.experiment == experiment) {
        let m = &c.summary;
        let pos = m.mean_tp + m.mean_fn;
        let neg = m.mean_fp + m.mean_tn;
        let row = [
            c.snr_db.to_string(),
            f6(m.mean_tp),
            f6(m.mean_fp),
            f6(m.mean_fn),
            f6(m.mean_tn),
            f6(m.mean_tp / pos),
            f6(m.mean_fn / pos),
            f6(m.mean_fp / neg),
            f6(m.mean_tn / neg),
        ];
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}

/// Side-by-side table: one row per cell, one rate pair per representation.
pub fn comparison_csv(names: &[&str], results: &[SweepResult]) -> String {
    let mut s = String::from("experiment_id,snr_db");
    for n in names {
        write!(s, ",{n}_correct_recognition,{n}_false_alarm").unwrap();
    }
    s.push('\n');
    if let Some(first) = results.first() {
        for (i, cell) in first.cells.iter().enumerate() {
            write!(s, "{},{}", cell.experiment, cell.snr_db).unwrap();
            for r in results {
                let m = &r.cells[i].summary;
                write!(s, ",{},{}", f6(m.mean_correct_recognition), f6(m.mean_false_alarm)).unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn summary_csv(summary: &MonteCarloSummary) -> String {
    let cell = SweepCell {
        experiment: Experiment::E1,
        snr_db: f64::NAN,
        summary: summary.clone(),
    };
    let full = sweep_csv(&SweepResult { cells: vec![cell] });
    // Drop the experiment/SNR columns, which do not apply to a single pool.
    full.lines()
        .map(|l| l.splitn(3, ',').nth(2).unwrap_or(""))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}

/// Writes `results.csv` and `confusion_<E>.csv` per experiment into `dir`.
pub fn write_sweep(dir: impl AsRef<Path>, result: &SweepResult) -> crate::Result<()> {
    let dir = dir.as_ref();
    let write = |name: String, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| crate::Error::io(&path, e))
    };
    write("results.csv".into(), sweep_csv(result))?;
    let experiments: BTreeSet<Experiment> = result.cells.iter().map(|c| c.experiment).collect();
    for e in experiments {
        write(format!("confusion_{e}.csv"), confusion_csv(result, e))?;
    }
    Ok(())
}
