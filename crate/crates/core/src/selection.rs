//! Learning which of the two classifiers to trust for a given input.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::TriggeringRecord;
use crate::modelhub::FeatureExtractor;
use crate::types::{euclidean_distance, ClassLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    ModelA,
    ModelB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionExample {
    pub features: Vec<f64>,
    pub winner: Winner,
    pub record_id: String,
}

/// Outcome counts of dataset construction; `both_wrong` records are excluded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub a_correct: usize,
    pub b_correct: usize,
    pub both_wrong: Vec<String>,
}

/// Labels each record with the model that matched its ground truth.
pub fn build_selection_dataset<E: FeatureExtractor + ?Sized>(
    records: &[TriggeringRecord],
    truth: &HashMap<String, ClassLabel>,
    extractor: &E,
) -> Result<(Vec<SelectionExample>, DatasetReport)> {
    let mut out = Vec::new();
    let mut report = DatasetReport::default();
    for r in records {
        let t = *truth.get(&r.id).ok_or_else(|| Error::MissingTruth(r.id.clone()))?;
        let winner = if r.label_a == t {
            report.a_correct += 1;
            Winner::ModelA
        } else if r.label_b == t {
            report.b_correct += 1;
            Winner::ModelB
        } else {
            report.both_wrong.push(r.id.clone());
            continue;
        };
        out.push(SelectionExample {
            features: extractor.extract(&r.image)?,
            winner,
            record_id: r.id.clone(),
        });
    }
    Ok((out, report))
}

/// A trained per-input model chooser.
pub trait Selector {
    fn predict(&self, features: &[f64]) -> Result<Winner>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    /// Rescale each feature to zero mean and unit variance on the training set.
    pub standardize: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorMetadata {
    pub learner: String,
    pub examples: usize,
    pub seed: u64,
}

/// k-nearest-neighbour selector; distance ties go to the lower training index,
/// vote ties to the class of the nearest neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnSelector {
    pub config: KnnConfig,
    pub metadata: SelectorMetadata,
    offset: Vec<f64>,
    scale: Vec<f64>,
    points: Vec<Vec<f64>>,
    winners: Vec<Winner>,
}

pub fn train_selector(examples: &[SelectionExample], config: &KnnConfig, seed: u64) -> Result<KnnSelector> {
    if examples.len() < 2 {
        return Err(Error::Invalid(format!("selector training needs at least 2 examples, got {}", examples.len())));
    }
    if examples.iter().all(|e| e.winner == examples[0].winner) {
        return Err(Error::Invalid("selector training set contains a single class".into()));
    }
    if config.k == 0 {
        return Err(Error::Invalid("k must be positive".into()));
    }
    let d = examples[0].features.len();
    if let Some(bad) = examples.iter().find(|e| e.features.len() != d) {
        return Err(Error::LengthMismatch {
            left: bad.features.len(),
            right: d,
        });
    }
    let n = examples.len() as f64;
    let (mut offset, mut scale) = (vec![0.0; d], vec![1.0; d]);
    if config.standardize {
        for j in 0..d {
            let mean = examples.iter().map(|e| e.features[j]).sum::<f64>() / n;
            let var = examples.iter().map(|e| (e.features[j] - mean).powi(2)).sum::<f64>() / n;
            offset[j] = mean;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
    }
    let transform = |f: &[f64]| -> Vec<f64> { f.iter().enumerate().map(|(j, v)| (v - offset[j]) / scale[j]).collect() };
    let points = examples.iter().map(|e| transform(&e.features)).collect();
    Ok(KnnSelector {
        metadata: SelectorMetadata {
            learner: format!("knn(k={}, standardize={})", config.k, config.standardize),
            examples: examples.len(),
            seed,
        },
        config: config.clone(),
        offset,
        scale,
        points,
        winners: examples.iter().map(|e| e.winner).collect(),
    })
}

impl Selector for KnnSelector {
    fn predict(&self, features: &[f64]) -> Result<Winner> {
        if features.len() != self.offset.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: self.offset.len(),
            });
        }
        let q: Vec<f64> = features
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.offset[j]) / self.scale[j])
            .collect();
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| euclidean_distance(&q, p).map(|d| (d, i)))
            .collect::<Result<_>>()?;
        let k = self.config.k.min(dists.len());
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let a_votes = dists[..k].iter().filter(|&&(_, i)| self.winners[i] == Winner::ModelA).count();
        let b_votes = k - a_votes;
        Ok(match a_votes.cmp(&b_votes) {
            std::cmp::Ordering::Greater => Winner::ModelA,
            std::cmp::Ordering::Less => Winner::ModelB,
            std::cmp::Ordering::Equal => self.winners[dists[0].1],
        })
    }
}

/// Fraction of holdout examples whose predicted winner matches the recorded one.
pub fn eval_selector<S: Selector + ?Sized>(selector: &S, holdout: &[SelectionExample]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::Empty("selector evaluation holdout"));
    }
    let mut correct = 0usize;
    for e in holdout {
        if selector.predict(&e.features)? == e.winner {
            correct += 1;
        }
    }
    Ok(correct as f64 / holdout.len() as f64)
}

/// Accuracy on `holdout` of always predicting the training set's majority winner
/// (ties to model A).
pub fn majority_baseline(train: &[SelectionExample], holdout: &[SelectionExample]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::Empty("baseline holdout"));
    }
    let a = train.iter().filter(|e| e.winner == Winner::ModelA).count();
    let majority = if 2 * a >= train.len() { Winner::ModelA } else { Winner::ModelB };
    Ok(holdout.iter().filter(|e| e.winner == majority).count() as f64 / holdout.len() as f64)
}
