//! Shared numeric domain types and the elementary comparisons built on them.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` accepted for model outputs.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

/// A point in the generator's input space; the genome of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Self {
        LatentVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Closed per-dimension interval `[lo_i, hi_i]` for latent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LatentBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::LengthMismatch {
                left: lo.len(),
                right: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::Empty("latent bounds"));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i])) {
            return Err(Error::Invalid(format!(
                "latent bound {i} is not a finite interval lo < hi: [{}, {}]",
                lo[i], hi[i]
            )));
        }
        Ok(LatentBounds { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.lo[i]
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.hi[i]
    }

    /// Errors on wrong length or any component outside its interval.
    pub fn check(&self, z: &LatentVector) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::LengthMismatch {
                left: z.len(),
                right: self.dim(),
            });
        }
        for (index, &value) in z.as_slice().iter().enumerate() {
            let (lo, hi) = (self.lo[index], self.hi[index]);
            if !(lo..=hi).contains(&value) {
                return Err(Error::OutOfBounds { index, value, lo, hi });
            }
        }
        Ok(())
    }

    pub fn contains(&self, z: &LatentVector) -> bool {
        self.check(z).is_ok()
    }

    pub fn clamp(&self, z: &mut LatentVector) {
        for (i, v) in z.as_mut_slice().iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Uniform draw inside the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentVector {
        LatentVector(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(&lo, &hi)| rng.random_range(lo..=hi))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for ImageShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// Dense pixel grid with values in `[0, 1]`, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: ImageShape,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        let shape = ImageShape {
            width,
            height,
            channels,
        };
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("image must be non-empty, got {shape}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Invalid(format!("image channels must be 1 or 3, got {channels}")));
        }
        if pixels.len() != shape.len() {
            return Err(Error::LengthMismatch {
                left: pixels.len(),
                right: shape.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid(format!("pixel {i} = {} outside [0, 1]", pixels[i])));
        }
        Ok(Image { shape, pixels })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    /// Flattened pixel vector.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.shape.width + x) * self.shape.channels + c]
    }

    /// Single-channel view: channel mean for RGB, the pixels themselves for grayscale.
    pub fn gray(&self) -> Vec<f64> {
        match self.shape.channels {
            1 => self.pixels.clone(),
            c => self
                .pixels
                .chunks_exact(c)
                .map(|px| px.iter().sum::<f64>() / c as f64)
                .collect(),
        }
    }

    /// 8-bit quantization used for persistence, digests and histograms.
    pub fn quantized(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p)).collect()
    }

    /// Rebuilds an image from 8-bit samples (`v / 255`).
    pub fn from_quantized(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    /// SHA-256 over the 8-bit-quantized pixel bytes.
    pub fn content_digest(&self) -> ImageDigest {
        ImageDigest(Sha256::digest(self.quantized()).into())
    }
}

pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 256-bit content digest of an image's quantized bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageDigest(pub [u8; 32]);

impl ImageDigest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Invalid(format!("bad digest {s:?}: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Invalid(format!("digest {s:?} is not 32 bytes")))?;
        Ok(ImageDigest(arr))
    }
}

impl fmt::Display for ImageDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Classifier output distribution over classes.
///
/// Entries are taken as emitted by the model (no renormalization); models
/// that produce logits must be softmaxed upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Invalid(format!("probability {i} = {} is not a non-negative real", probs[i])));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::Invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbabilityVector(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn label(&self) -> ClassLabel {
        argmax_label(&self.0).expect("probability vectors are non-empty")
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbabilityVector::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub usize);

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax_label(probs: &[f64]) -> Result<ClassLabel> {
    if probs.is_empty() {
        return Err(Error::Empty("argmax of an empty vector"));
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(ClassLabel(best))
}

/// True iff the two distributions have different argmax labels.
///
/// Operates on raw scores so callers may pass vectors that are not exactly
/// normalized.
pub fn is_triggering(a: &[f64], b: &[f64]) -> Result<bool> {
    same_len(a.len(), b.len())?;
    Ok(argmax_label(a)? != argmax_label(b)?)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `1 - a·b / (‖a‖‖b‖)`; a zero-norm operand yields 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - dot / (na * nb).sqrt()).max(0.0))
}

pub(crate) fn same_len(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left, right })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_label(&[0.05, 0.05, 0.05, 0.85]).unwrap(), ClassLabel(3));
        assert_eq!(argmax_label(&[1.0]).unwrap(), ClassLabel(0));
        assert_eq!(argmax_label(&[0.4, 0.4, 0.2]).unwrap(), ClassLabel(0));
        assert!(argmax_label(&[]).is_err());
    }

    #[test]
    fn triggering_examples() {
        assert!(!is_triggering(&[0.05, 0.05, 0.05, 0.85], &[0.15, 0.15, 0.15, 0.55]).unwrap());
        assert!(is_triggering(&[0.1, 0.2, 0.3, 0.4], &[0.15, 0.25, 0.35, 0.05]).unwrap());
        assert!(!is_triggering(&[0.5, 0.5], &[0.5, 0.5]).unwrap());
        assert!(is_triggering(&[0.5, 0.5], &[0.2, 0.3, 0.5]).is_err());
        assert!(is_triggering(&[], &[]).is_err());
    }

    #[test]
    fn euclidean_examples() {
        let d = euclidean_distance(&[0.05, 0.05, 0.05, 0.85], &[0.15, 0.15, 0.15, 0.55]).unwrap();
        assert!((d - 0.12f64.sqrt()).abs() < 1e-12);
        assert!((d - 0.346410).abs() < 1e-6);
        assert_eq!(euclidean_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((euclidean_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(euclidean_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[0.2, 0.9, 0.4], &[0.2, 0.9, 0.4]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d = cosine_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((d - 0.292893).abs() < 1e-6);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.3, 0.1]).unwrap(), 1.0);
        assert!(cosine_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.5 + 5e-7]).is_ok());
    }

    #[test]
    fn image_validation_and_gray() {
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        let rgb = Image::new(1, 2, 3, vec![0.0, 0.3, 0.6, 1.0, 1.0, 1.0]).unwrap();
        let g = rgb.gray();
        assert!((g[0] - 0.3).abs() < 1e-15 && g[1] == 1.0);
    }

    #[test]
    fn digest_depends_on_quantized_bytes() {
        let a = Image::new(2, 1, 1, vec![0.5, 0.25]).unwrap();
        let b = Image::new(2, 1, 1, vec![0.5 + 1e-5, 0.25]).unwrap();
        let c = Image::new(2, 1, 1, vec![0.5, 0.25 + 1.0 / 255.0]).unwrap();
        assert_eq!(a.content_digest(), b.content_digest());
        assert_ne!(a.content_digest(), c.content_digest());
        let hex = a.content_digest().to_hex();
        assert_eq!(ImageDigest::from_hex(&hex).unwrap(), a.content_digest());
    }

    #[test]
    fn bounds_check_and_clamp() {
        let b = LatentBounds::uniform(3, -1.0, 1.0).unwrap();
        assert!(b.check(&LatentVector::new(vec![0.0, 1.0, -1.0])).is_ok());
        assert!(matches!(
            b.check(&LatentVector::new(vec![0.0, 1.5, 0.0])),
            Err(Error::OutOfBounds { index: 1, .. })
        ));
        assert!(b.check(&LatentVector::new(vec![0.0])).is_err());
        let mut z = LatentVector::new(vec![2.0, -3.0, 0.5]);
        b.clamp(&mut z);
        assert_eq!(z.as_slice(), &[1.0, -1.0, 0.5]);
        assert!(LatentBounds::uniform(2, 1.0, 1.0).is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_positive_scaling(v in simplex(6), scale in 0.01f64..100.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
            let total: f64 = scaled.iter().sum();
            let renorm: Vec<f64> = scaled.iter().map(|x| x / total).collect();
            prop_assert_eq!(argmax_label(&v).unwrap(), argmax_label(&scaled).unwrap());
            prop_assert_eq!(argmax_label(&v).unwrap(), argmax_label(&renorm).unwrap());
        }

        #[test]
        fn triggering_is_symmetric(a in simplex(4), b in simplex(4)) {
            prop_assert_eq!(is_triggering(&a, &b).unwrap(), is_triggering(&b, &a).unwrap());
        }

        #[test]
        fn euclidean_triangle_inequality(a in simplex(5), b in simplex(5), c in simplex(5)) {
            let ab = euclidean_distance(&a, &b).unwrap();
            let bc = euclidean_distance(&b, &c).unwrap();
            let ac = euclidean_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn cosine_of_nonnegative_vectors_in_unit_interval(
            a in prop::collection::vec(0.0f64..1.0, 8),
            b in prop::collection::vec(0.0f64..1.0, 8),
        ) {
            let d = cosine_distance(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
