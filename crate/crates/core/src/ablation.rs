//! Train-and-evaluate helpers and the four-way modality ablation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeaturizedSplit, LabeledBundles, Modality};
use crate::fusion::{train, FusionConfig, FusionModel, TrainError, TrainReport, TrainingData};
use crate::metrics::{evaluate, EvalReport, MetricsError, RocCurve};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn training_data(set: &LabeledBundles, config: &FusionConfig) -> Result<TrainingData, FeatureError> {
    Ok(TrainingData::new(set.design_matrix(&config.dims)?, set.labels.clone()))
}

/// Fit the head on the train split, tracking the validation split.
pub fn fit(split: &FeaturizedSplit, config: &FusionConfig) -> Result<(FusionModel, TrainReport), PipelineError> {
    let tr = training_data(&split.train, config)?;
    let va = training_data(&split.validation, config)?;
    Ok(train(&tr, &va, config)?)
}

/// Score every bundle of `set` with `model`.
pub fn score_all(model: &FusionModel, set: &LabeledBundles) -> Result<Vec<(f64, bool)>, FeatureError> {
    set.bundles.iter().zip(&set.labels).map(|(b, &y)| Ok((model.score(b)?, y))).collect()
}

/// Evaluate at the model's own threshold.
pub fn evaluate_model(model: &FusionModel, set: &LabeledBundles) -> Result<(EvalReport, RocCurve), PipelineError> {
    Ok(evaluate(&score_all(model, set)?, model.config.threshold)?)
}

/// Which branches a row of the ablation table used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationInput {
    Hashtags,
    Comments,
    Images,
    MultiModal,
}

impl AblationInput {
    pub const ALL: [AblationInput; 4] =
        [AblationInput::Hashtags, AblationInput::Comments, AblationInput::Images, AblationInput::MultiModal];

    pub fn modalities(self) -> &'static [Modality] {
        match self {
            AblationInput::Hashtags => &[Modality::Hashtags],
            AblationInput::Comments => &[Modality::Comments],
            AblationInput::Images => &[Modality::Images],
            AblationInput::MultiModal => &Modality::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub input: AblationInput,
    pub report: EvalReport,
    /// Validation F1 after the last epoch.
    pub final_validation_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: FusionConfig,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, input: AblationInput) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.input == input)
    }
}

/// Train one head per row of [`AblationInput::ALL`] with the same
/// hyper-parameters and seed, differing only in active branches, and
/// evaluate each on the test split. The four runs are independent and
/// execute on separate threads.
pub fn run_ablation(split: &FeaturizedSplit, config: &FusionConfig) -> Result<AblationReport, PipelineError> {
    let results: Vec<Result<AblationRow, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = AblationInput::ALL
            .into_iter()
            .map(|input| {
                let cfg = config.with_modalities(input.modalities());
                s.spawn(move || {
                    let (model, tr) = fit(split, &cfg)?;
                    let (report, _) = evaluate_model(&model, &split.test)?;
                    let final_validation_f1 = tr.epochs.last().map_or(0.0, |e| e.validation_f1);
                    Ok(AblationRow { input, report, final_validation_f1 })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation thread panicked")).collect()
    });
    Ok(AblationReport { config: config.clone(), rows: results.into_iter().collect::<Result<_, _>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Featurizer;
    use crate::ingest::split_corpus;
    use crate::synth::{generate_corpus, ModalitySignal, SynthConfig};

    fn featurized(signal: ModalitySignal, n: usize, seed: u64) -> FeaturizedSplit {
        let cfg = SynthConfig { n_posts: n, modality_signal: signal, seed, ..SynthConfig::default() };
        let corpus = generate_corpus(&cfg).unwrap();
        let split = split_corpus(&corpus, n / 5, 0.2, seed).unwrap();
        FeaturizedSplit::new(&Featurizer::baseline(), &split).unwrap()
    }

    /// A random head can still project planted signal off 0.5 by luck, so
    /// chance level is checked on the mean over initialisation seeds.
    #[test]
    fn untrained_heads_rank_at_chance() {
        let split = featurized(ModalitySignal::new(0.4, 0.5, 0.5), 600, 11);
        let mut sums = [0.0; 4];
        for seed in 0..5 {
            let report = run_ablation(&split, &FusionConfig { epochs: 0, seed, ..FusionConfig::default() }).unwrap();
            assert_eq!(report.rows.len(), 4);
            for (sum, row) in sums.iter_mut().zip(&report.rows) {
                *sum += row.report.auc / 5.0;
            }
        }
        for (input, mean) in AblationInput::ALL.iter().zip(sums) {
            assert!((mean - 0.5).abs() <= 0.1, "{input:?} {mean}");
        }
    }

    #[test]
    fn comment_only_signal() {
        let split = featurized(ModalitySignal::new(0.0, 1.0, 0.0), 800, 12);
        let report = run_ablation(&split, &FusionConfig { epochs: 30, ..FusionConfig::default() }).unwrap();
        let auc = |i| report.row(i).unwrap().report.auc;
        assert!(auc(AblationInput::Comments) > 0.95, "{report:?}");
        assert!(auc(AblationInput::MultiModal) > 0.9);
        assert!(auc(AblationInput::Hashtags) < 0.65);
        assert!(auc(AblationInput::Images) < 0.65);
    }
}
