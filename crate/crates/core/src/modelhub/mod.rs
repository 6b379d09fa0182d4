//! Role interfaces the search runs against, plus two families of
//! implementations: PFN-backed adapters and an analytic synthetic testbed.

mod pfn;
mod testbed;

pub use pfn::{
    pfn_classifier, pfn_discriminator, pfn_extractor, pfn_generator, PfnClassifier, PfnDiscriminator,
    PfnExtractor, PfnGenerator,
};
pub use testbed::{
    testbed_classify, testbed_discriminator, testbed_features, testbed_generate, testbed_truth, TestbedClassifier,
    TestbedConfig, TestbedDiscriminator, TestbedFeatures, TestbedGenerator,
};

use crate::error::Result;
use crate::types::{Image, ImageShape, LatentBounds, LatentVector, ProbabilityVector};

/// Maps latent vectors to images.
pub trait Generator: Send + Sync {
    fn bounds(&self) -> &LatentBounds;

    fn latent_dim(&self) -> usize {
        self.bounds().dim()
    }

    fn image_shape(&self) -> ImageShape;

    fn generate(&self, z: &LatentVector) -> Result<Image>;
}

/// Maps images to class distributions.
pub trait Classifier: Send + Sync {
    fn class_count(&self) -> usize;

    fn classify(&self, image: &Image) -> Result<ProbabilityVector>;
}

/// Scores image realism in `[0, 1]`.
pub trait Discriminator: Send + Sync {
    fn score(&self, image: &Image) -> Result<f64>;
}

/// Maps images to fixed-length feature vectors.
pub trait FeatureExtractor: Send + Sync {
    fn feature_len(&self) -> usize;

    fn extract(&self, image: &Image) -> Result<Vec<f64>>;
}

impl<T: Generator + ?Sized> Generator for &T {
    fn bounds(&self) -> &LatentBounds {
        (**self).bounds()
    }

    fn image_shape(&self) -> ImageShape {
        (**self).image_shape()
    }

    fn generate(&self, z: &LatentVector) -> Result<Image> {
        (**self).generate(z)
    }
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }

    fn classify(&self, image: &Image) -> Result<ProbabilityVector> {
        (**self).classify(image)
    }
}

impl<T: Generator + ?Sized> Generator for Box<T> {
    fn bounds(&self) -> &LatentBounds {
        (**self).bounds()
    }

    fn image_shape(&self) -> ImageShape {
        (**self).image_shape()
    }

    fn generate(&self, z: &LatentVector) -> Result<Image> {
        (**self).generate(z)
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }

    fn classify(&self, image: &Image) -> Result<ProbabilityVector> {
        (**self).classify(image)
    }
}

impl<T: Discriminator + ?Sized> Discriminator for Box<T> {
    fn score(&self, image: &Image) -> Result<f64> {
        (**self).score(image)
    }
}

impl<T: FeatureExtractor + ?Sized> FeatureExtractor for Box<T> {
    fn feature_len(&self) -> usize {
        (**self).feature_len()
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>> {
        (**self).extract(image)
    }
}
