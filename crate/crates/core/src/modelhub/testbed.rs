//! A fully analytic stand-in for a generator and a pair of classifiers.
//!
//! The generator renders a single Gaussian blob whose centre and amplitude
//! are set by the first three latent components. Each classifier assigns one
//! of four quadrant classes from the blob's pixel-mass centroid, and the two
//! classifiers differ only in where they split the x axis. Inputs whose blob
//! centre lies between the two splits are exactly the disagreement band.

use serde::{Deserialize, Serialize};

use super::{Classifier, Discriminator, FeatureExtractor, Generator};
use crate::error::{Error, Result};
use crate::types::{ClassLabel, Image, ImageShape, LatentBounds, LatentVector, ProbabilityVector};

const CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    /// Image width and height in pixels.
    pub side: usize,
    /// Gaussian blob standard deviation in pixels.
    pub spread: f64,
    pub threshold_a: f64,
    pub threshold_b: f64,
    pub threshold_truth: f64,
    /// Temperature of the distance-to-probability mapping.
    pub softness: f64,
    /// Generator latent dimension; only the first three components matter.
    pub latent_dim: usize,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self::with_side(16)
    }
}

impl TestbedConfig {
    pub fn with_side(side: usize) -> Self {
        let half = side as f64 / 2.0;
        TestbedConfig {
            side,
            spread: 2.0,
            threshold_a: half,
            threshold_b: half + 1.5,
            threshold_truth: half + 0.75,
            softness: 2.0,
            latent_dim: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::Invalid(format!("testbed side must be at least 2, got {}", self.side)));
        }
        if !(self.spread > 0.0 && self.softness > 0.0) {
            return Err(Error::Invalid("testbed spread and softness must be positive".into()));
        }
        if !(self.threshold_a < self.threshold_truth && self.threshold_truth < self.threshold_b) {
            return Err(Error::Invalid(format!(
                "testbed thresholds must satisfy a < truth < b, got {} / {} / {}",
                self.threshold_a, self.threshold_truth, self.threshold_b
            )));
        }
        if self.latent_dim < 3 {
            return Err(Error::Invalid("testbed latent dimension must be at least 3".into()));
        }
        Ok(())
    }

    pub fn image_shape(&self) -> ImageShape {
        ImageShape {
            width: self.side,
            height: self.side,
            channels: 1,
        }
    }

    /// Analytic blob centre `(cx, cy)` and amplitude for a latent vector.
    pub fn blob(&self, z: &LatentVector) -> Result<(f64, f64, f64)> {
        let v = z.as_slice();
        if v.len() < 3 {
            return Err(Error::Invalid(format!("testbed latents need 3 components, got {}", v.len())));
        }
        for (index, &value) in v.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::OutOfBounds {
                    index,
                    value,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        let span = (self.side - 1) as f64;
        Ok((
            (v[0] + 1.0) / 2.0 * span,
            (v[1] + 1.0) / 2.0 * span,
            0.5 + 0.25 * (v[2] + 1.0),
        ))
    }
}

pub fn testbed_generate(z: &LatentVector, cfg: &TestbedConfig) -> Result<Image> {
    let (cx, cy, amp) = cfg.blob(z)?;
    let w = cfg.side;
    let denom = 2.0 * cfg.spread * cfg.spread;
    let mut pixels = Vec::with_capacity(w * w);
    for y in 0..w {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            pixels.push((amp * (-(dx * dx + dy * dy) / denom).exp()).clamp(0.0, 1.0));
        }
    }
    Image::new(w, w, 1, pixels)
}

/// Pixel-mass centroid `(x, y)` of the gray image, or `None` for zero mass.
fn centroid(image: &Image) -> Option<(f64, f64, f64)> {
    let gray = image.gray();
    let w = image.width();
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (i, &p) in gray.iter().enumerate() {
        m += p;
        sx += p * (i % w) as f64;
        sy += p * (i / w) as f64;
    }
    (m > 0.0).then(|| (sx / m, sy / m, m))
}

fn quadrant_class(x: f64, y: f64, threshold_x: f64, mid_y: f64) -> ClassLabel {
    ClassLabel(usize::from(x > threshold_x) + 2 * usize::from(y > mid_y))
}

pub fn testbed_classify(image: &Image, threshold_x: f64, cfg: &TestbedConfig) -> Result<ProbabilityVector> {
    let Some((cx, cy, _)) = centroid(image) else {
        return ProbabilityVector::new(vec![1.0 / CLASSES as f64; CLASSES]);
    };
    let w = cfg.side as f64;
    let xs = [threshold_x - w / 4.0, threshold_x + w / 4.0];
    let ys = [w / 2.0 - w / 4.0, w / 2.0 + w / 4.0];
    let d: Vec<f64> = (0..CLASSES)
        .map(|k| ((cx - xs[k % 2]).powi(2) + (cy - ys[k / 2]).powi(2)).sqrt())
        .collect();
    // Shift by the smallest distance so the largest weight is exactly 1.
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = d.iter().map(|dk| (-(dk - dmin) / cfg.softness).exp()).collect();
    let total: f64 = weights.iter().sum();
    ProbabilityVector::new(weights.into_iter().map(|p| p / total).collect())
}

/// Ground-truth quadrant from the analytic blob centre.
pub fn testbed_truth(z: &LatentVector, cfg: &TestbedConfig) -> Result<ClassLabel> {
    let (cx, cy, _) = cfg.blob(z)?;
    Ok(quadrant_class(cx, cy, cfg.threshold_truth, cfg.side as f64 / 2.0))
}

pub fn testbed_discriminator(image: &Image) -> f64 {
    let max = image.pixels().iter().copied().fold(0.0, f64::max);
    if (0.4..=1.0).contains(&max) {
        1.0
    } else {
        0.0
    }
}

/// `[cx, cy, max, spread]` with mass-weighted centroid and radial spread.
pub fn testbed_features(image: &Image, cfg: &TestbedConfig) -> Vec<f64> {
    let half = cfg.side as f64 / 2.0;
    let Some((cx, cy, m)) = centroid(image) else {
        return vec![half, half, 0.0, 0.0];
    };
    let gray = image.gray();
    let w = image.width();
    let mut second = 0.0;
    for (i, &p) in gray.iter().enumerate() {
        let dx = (i % w) as f64 - cx;
        let dy = (i / w) as f64 - cy;
        second += p * (dx * dx + dy * dy);
    }
    let max = gray.iter().copied().fold(0.0, f64::max);
    vec![cx, cy, max, (second / m).sqrt()]
}

fn check_shape(image: &Image, cfg: &TestbedConfig) -> Result<()> {
    if image.width() != cfg.side || image.height() != cfg.side {
        return Err(Error::ShapeMismatch {
            left: image.shape().to_string(),
            right: cfg.image_shape().to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TestbedGenerator {
    cfg: TestbedConfig,
    bounds: LatentBounds,
}

impl TestbedGenerator {
    pub fn new(cfg: TestbedConfig) -> Result<Self> {
        cfg.validate()?;
        let bounds = LatentBounds::uniform(cfg.latent_dim, -1.0, 1.0)?;
        Ok(TestbedGenerator { cfg, bounds })
    }

    pub fn config(&self) -> &TestbedConfig {
        &self.cfg
    }
}

impl Generator for TestbedGenerator {
    fn bounds(&self) -> &LatentBounds {
        &self.bounds
    }

    fn image_shape(&self) -> ImageShape {
        self.cfg.image_shape()
    }

    fn generate(&self, z: &LatentVector) -> Result<Image> {
        self.bounds.check(z)?;
        testbed_generate(z, &self.cfg)
    }
}

#[derive(Debug, Clone)]
pub struct TestbedClassifier {
    cfg: TestbedConfig,
    threshold_x: f64,
}

impl TestbedClassifier {
    pub fn new(cfg: TestbedConfig, threshold_x: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(TestbedClassifier { cfg, threshold_x })
    }

    pub fn model_a(cfg: TestbedConfig) -> Result<Self> {
        let t = cfg.threshold_a;
        Self::new(cfg, t)
    }

    pub fn model_b(cfg: TestbedConfig) -> Result<Self> {
        let t = cfg.threshold_b;
        Self::new(cfg, t)
    }

    pub fn threshold_x(&self) -> f64 {
        self.threshold_x
    }
}

impl Classifier for TestbedClassifier {
    fn class_count(&self) -> usize {
        CLASSES
    }

    fn classify(&self, image: &Image) -> Result<ProbabilityVector> {
        check_shape(image, &self.cfg)?;
        testbed_classify(image, self.threshold_x, &self.cfg)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TestbedDiscriminator;

impl Discriminator for TestbedDiscriminator {
    fn score(&self, image: &Image) -> Result<f64> {
        Ok(testbed_discriminator(image))
    }
}

#[derive(Debug, Clone)]
pub struct TestbedFeatures {
    cfg: TestbedConfig,
}

impl TestbedFeatures {
    pub fn new(cfg: TestbedConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(TestbedFeatures { cfg })
    }
}

impl FeatureExtractor for TestbedFeatures {
    fn feature_len(&self) -> usize {
        4
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>> {
        check_shape(image, &self.cfg)?;
        Ok(testbed_features(image, &self.cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::is_triggering;

    fn z3(a: f64, b: f64, c: f64) -> LatentVector {
        LatentVector::new(vec![a, b, c])
    }

    /// Latent x component placing the analytic blob centre at `cx`.
    fn z_for_cx(cx: f64, cfg: &TestbedConfig) -> f64 {
        cx / (cfg.side - 1) as f64 * 2.0 - 1.0
    }

    #[test]
    fn centred_blob_pixel_values() {
        let cfg = TestbedConfig::default();
        let img = testbed_generate(&z3(0.0, 0.0, 1.0), &cfg).unwrap();
        // (7,7) is 0.5 px from the centre on both axes: exp(-0.5 / (2 * 2^2)).
        let expected = (-0.5f64 / 8.0).exp();
        assert!((img.pixel(7, 7, 0) - expected).abs() < 1e-12);
        assert!((img.pixel(7, 7, 0) - 0.939413).abs() < 1e-6);
    }

    #[test]
    fn corner_blob_has_half_amplitude() {
        let cfg = TestbedConfig::default();
        let img = testbed_generate(&z3(-1.0, -1.0, -1.0), &cfg).unwrap();
        assert_eq!(img.pixel(0, 0, 0), 0.5);
    }

    #[test]
    fn out_of_bounds_latent_is_rejected() {
        let cfg = TestbedConfig::default();
        assert!(matches!(
            testbed_generate(&z3(0.0, 1.2, 0.0), &cfg),
            Err(Error::OutOfBounds { index: 1, .. })
        ));
        assert!(testbed_generate(&LatentVector::new(vec![0.0, 0.0]), &cfg).is_err());
    }

    #[test]
    fn zero_image_is_uniform() {
        let cfg = TestbedConfig::default();
        let img = Image::filled(16, 16, 1, 0.0).unwrap();
        assert_eq!(testbed_classify(&img, cfg.threshold_a, &cfg).unwrap().as_slice(), &[0.25; 4]);
        assert_eq!(testbed_features(&img, &cfg), vec![8.0, 8.0, 0.0, 0.0]);
        assert_eq!(testbed_discriminator(&img), 0.0);
    }

    #[test]
    fn blob_at_quadrant_centre_gets_that_class() {
        let cfg = TestbedConfig::default();
        let t = cfg.threshold_a;
        let centres = [(t - 4.0, 4.0), (t + 4.0, 4.0), (t - 4.0, 12.0), (t + 4.0, 12.0)];
        for (k, &(cx, cy)) in centres.iter().enumerate() {
            let z = z3(z_for_cx(cx, &cfg), z_for_cx(cy, &cfg), 0.0);
            let img = testbed_generate(&z, &cfg).unwrap();
            assert_eq!(testbed_classify(&img, t, &cfg).unwrap().label(), ClassLabel(k));
        }
    }

    #[test]
    fn truth_ordering_around_the_band() {
        let cfg = TestbedConfig::default();
        let a = TestbedClassifier::model_a(cfg.clone()).unwrap();
        let b = TestbedClassifier::model_b(cfg.clone()).unwrap();
        for (offset, a_right) in [(0.7, false), (1.2, true)] {
            let z = z3(z_for_cx(8.0 + offset, &cfg), -0.5, 0.0);
            let img = testbed_generate(&z, &cfg).unwrap();
            let (pa, pb) = (a.classify(&img).unwrap(), b.classify(&img).unwrap());
            assert!(is_triggering(pa.as_slice(), pb.as_slice()).unwrap());
            let truth = testbed_truth(&z, &cfg).unwrap();
            assert_eq!(pa.label() == truth, a_right);
            assert_eq!(pb.label() == truth, !a_right);
        }
        let z = z3(-1.0, 0.0, 0.0);
        let img = testbed_generate(&z, &cfg).unwrap();
        let truth = testbed_truth(&z, &cfg).unwrap();
        assert_eq!(a.classify(&img).unwrap().label(), truth);
        assert_eq!(b.classify(&img).unwrap().label(), truth);
    }

    #[test]
    fn discriminator_boundaries() {
        assert_eq!(testbed_discriminator(&Image::filled(4, 4, 1, 0.39).unwrap()), 0.0);
        assert_eq!(testbed_discriminator(&Image::filled(4, 4, 1, 0.4).unwrap()), 1.0);
        let cfg = TestbedConfig::default();
        let img = testbed_generate(&z3(0.3, -0.9, -1.0), &cfg).unwrap();
        assert_eq!(testbed_discriminator(&img), 1.0);
    }

    #[test]
    fn centred_blob_features_are_symmetric_and_shift_with_the_blob() {
        let cfg = TestbedConfig::default();
        let img = testbed_generate(&z3(0.0, 0.0, 0.0), &cfg).unwrap();
        let f = testbed_features(&img, &cfg);
        assert!((f[0] - 7.5).abs() < 1e-6 && (f[1] - 7.5).abs() < 1e-6);
        let shifted = testbed_generate(&z3(z_for_cx(8.5, &cfg), 0.0, 0.0), &cfg).unwrap();
        let g = testbed_features(&shifted, &cfg);
        assert!((g[0] - f[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn config_rejects_unordered_thresholds() {
        let mut cfg = TestbedConfig::default();
        cfg.threshold_truth = 20.0;
        assert!(cfg.validate().is_err());
        assert!(TestbedGenerator::new(cfg).is_err());
    }
}
