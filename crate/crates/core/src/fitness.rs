//! Search objectives and the archive of triggering inputs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::modelhub::{Classifier, Generator};
use crate::types::{
    cosine_distance, euclidean_distance, is_triggering, ClassLabel, Image, ImageDigest, LatentVector,
    ProbabilityVector,
};

/// Distance between the two output distributions, plus one when their labels differ.
pub fn divergence_fitness(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = euclidean_distance(a, b)?;
    Ok(if is_triggering(a, b)? { d + 1.0 } else { d })
}

/// Smallest cosine distance from `image` to any representative, or 1 when there are none.
pub fn diversity_fitness(image: &Image, reps: &[Image]) -> Result<f64> {
    let mut best = 1.0f64;
    for rep in reps {
        if rep.shape() != image.shape() {
            return Err(Error::ShapeMismatch {
                left: image.shape().to_string(),
                right: rep.shape().to_string(),
            });
        }
        best = best.min(cosine_distance(image.pixels(), rep.pixels())?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub divergence: f64,
    pub diversity: f64,
    pub triggering: bool,
    pub probs_a: ProbabilityVector,
    pub probs_b: ProbabilityVector,
    pub image: Image,
}

/// One generator call and one call per classifier.
pub fn evaluate<G, A, B>(z: &LatentVector, gen: &G, model_a: &A, model_b: &B, reps: &[Image]) -> Result<Evaluation>
where
    G: Generator + ?Sized,
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
{
    let image = gen.generate(z)?;
    let probs_a = model_a.classify(&image)?;
    let probs_b = model_b.classify(&image)?;
    Ok(Evaluation {
        divergence: divergence_fitness(probs_a.as_slice(), probs_b.as_slice())?,
        diversity: diversity_fitness(&image, reps)?,
        triggering: is_triggering(probs_a.as_slice(), probs_b.as_slice())?,
        probs_a,
        probs_b,
        image,
    })
}

/// Evidence of one disagreement between the two classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeringRecord {
    pub id: String,
    pub latent: LatentVector,
    pub image: Image,
    pub digest: ImageDigest,
    pub label_a: ClassLabel,
    pub label_b: ClassLabel,
    pub probs_a: ProbabilityVector,
    pub probs_b: ProbabilityVector,
    pub divergence: f64,
    pub diversity_at_insert: f64,
    pub generation: u64,
    pub evaluation: u64,
}

impl TriggeringRecord {
    pub fn from_evaluation(
        id: impl Into<String>,
        latent: LatentVector,
        eval: &Evaluation,
        generation: u64,
        evaluation: u64,
    ) -> Self {
        TriggeringRecord {
            id: id.into(),
            latent,
            digest: eval.image.content_digest(),
            image: eval.image.clone(),
            label_a: eval.probs_a.label(),
            label_b: eval.probs_b.label(),
            probs_a: eval.probs_a.clone(),
            probs_b: eval.probs_b.clone(),
            divergence: eval.divergence,
            diversity_at_insert: eval.diversity,
            generation,
            evaluation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reject = |msg: String| Err(Error::ArchiveRejected(format!("{}: {msg}", self.id)));
        if self.label_a == self.label_b {
            return reject(format!("both models predict {}", self.label_a));
        }
        if self.probs_a.label() != self.label_a || self.probs_b.label() != self.label_b {
            return reject("labels do not match the stored probability vectors".into());
        }
        if self.probs_a.len() != self.probs_b.len() {
            return reject("probability vectors differ in length".into());
        }
        if !(self.divergence > 1.0) {
            return reject(format!("divergence {} is not above 1", self.divergence));
        }
        if self.image.content_digest() != self.digest {
            return reject("digest does not match the image".into());
        }
        Ok(())
    }
}

/// Ordered, digest-unique collection of triggering records.
#[derive(Debug, Clone, Default)]
pub struct Archive {
    records: Vec<TriggeringRecord>,
    by_digest: HashMap<ImageDigest, usize>,
    representatives: Vec<Image>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a valid record; returns false if its image is already archived.
    pub fn insert(&mut self, record: TriggeringRecord) -> Result<bool> {
        record.validate()?;
        if self.by_digest.contains_key(&record.digest) {
            return Ok(false);
        }
        self.by_digest.insert(record.digest, self.records.len());
        self.records.push(record);
        Ok(true)
    }

    pub fn records(&self) -> &[TriggeringRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, digest: &ImageDigest) -> Option<&TriggeringRecord> {
        self.by_digest.get(digest).map(|&i| &self.records[i])
    }

    pub fn contains(&self, digest: &ImageDigest) -> bool {
        self.by_digest.contains_key(digest)
    }

    pub fn images(&self) -> impl ExactSizeIterator<Item = &Image> {
        self.records.iter().map(|r| &r.image)
    }

    pub fn representatives(&self) -> &[Image] {
        &self.representatives
    }

    pub fn set_representatives(&mut self, reps: Vec<Image>) {
        self.representatives = reps;
    }

    pub fn into_records(self) -> Vec<TriggeringRecord> {
        self.records
    }
}
