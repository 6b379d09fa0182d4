//! Adapters binding loaded networks to the search roles.
//!
//! Networks take images in channel-major (`[c, h, w]`) layout while `Image`
//! stores pixels channel-interleaved, so adapters transpose on the way in and
//! out. A flat network input instead receives the interleaved pixels as-is.

use std::path::Path;

use latdiff_pfn::{Layer, Network, Shape, Tensor};
use serde_json::Value;

use super::{Classifier, Discriminator, FeatureExtractor, Generator};
use crate::error::{Error, Result};
use crate::types::{Image, ImageShape, LatentBounds, LatentVector, ProbabilityVector};

/// Metadata key holding `[lo, hi]` latent bounds for generators.
pub const LATENT_BOUNDS_KEY: &str = "latent_bounds";

fn role_error(net: &Network, role: &str, message: impl std::fmt::Display) -> Error {
    Error::Role(format!("network {:?} cannot act as {role}: {message}", net.name()))
}

fn image_to_tensor(image: &Image, input: Shape) -> Result<Tensor> {
    match input {
        Shape::Chw { c, h, w } => {
            if (c, h, w) != (image.channels(), image.height(), image.width()) {
                return Err(Error::ShapeMismatch {
                    left: image.shape().to_string(),
                    right: format!("{w}x{h}x{c}"),
                });
            }
            let px = image.pixels();
            let mut data = Vec::with_capacity(px.len());
            for ch in 0..c {
                data.extend(px.iter().skip(ch).step_by(c));
            }
            Ok(Tensor::new(input, data))
        }
        Shape::Flat(n) => {
            if n != image.pixels().len() {
                return Err(Error::LengthMismatch {
                    left: image.pixels().len(),
                    right: n,
                });
            }
            Ok(Tensor::new(input, image.pixels().to_vec()))
        }
    }
}

fn image_input(net: &Network, role: &str) -> Result<Shape> {
    match net.input_shape() {
        Shape::Chw { c, .. } if c != 1 && c != 3 => Err(role_error(net, role, format!("input has {c} channels"))),
        s => Ok(s),
    }
}

#[derive(Debug, Clone)]
pub struct PfnGenerator {
    net: Network,
    bounds: LatentBounds,
    shape: ImageShape,
    rescale: bool,
}

impl PfnGenerator {
    pub fn new(net: Network) -> Result<Self> {
        let role = "generator";
        let dim = match net.input_shape() {
            Shape::Flat(d) | Shape::Chw { c: d, h: 1, w: 1 } => d,
            other => return Err(role_error(&net, role, format!("input {other} is not a latent vector"))),
        };
        let shape = match net.output_shape() {
            Shape::Chw { c, h, w } if c == 1 || c == 3 => ImageShape {
                width: w,
                height: h,
                channels: c,
            },
            other => return Err(role_error(&net, role, format!("output {other} is not a 1- or 3-channel image"))),
        };
        let rescale = match net.last_layer() {
            Some(Layer::Tanh) => true,
            Some(Layer::Sigmoid) => false,
            _ => return Err(role_error(&net, role, "final layer must be tanh or sigmoid")),
        };
        let (lo, hi) = match net.metadata().get(LATENT_BOUNDS_KEY) {
            None => (-1.0, 1.0),
            Some(v) => parse_bounds(v).ok_or_else(|| role_error(&net, role, format!("bad {LATENT_BOUNDS_KEY}: {v}")))?,
        };
        let bounds = LatentBounds::uniform(dim, lo, hi)?;
        Ok(PfnGenerator {
            net,
            bounds,
            shape,
            rescale,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }
}

fn parse_bounds(v: &Value) -> Option<(f64, f64)> {
    match v.as_array()?.as_slice() {
        [lo, hi] => Some((lo.as_f64()?, hi.as_f64()?)),
        _ => None,
    }
}

impl Generator for PfnGenerator {
    fn bounds(&self) -> &LatentBounds {
        &self.bounds
    }

    fn image_shape(&self) -> ImageShape {
        self.shape
    }

    fn generate(&self, z: &LatentVector) -> Result<Image> {
        self.bounds.check(z)?;
        let out = self.net.infer(&Tensor::new(self.net.input_shape(), z.as_slice().to_vec()))?;
        let ImageShape {
            width,
            height,
            channels,
        } = self.shape;
        let plane = width * height;
        let mut pixels = vec![0.0; out.data.len()];
        for (i, &v) in out.data.iter().enumerate() {
            let (ch, pos) = (i / plane, i % plane);
            let p = if self.rescale { (v + 1.0) / 2.0 } else { v };
            pixels[pos * channels + ch] = p.clamp(0.0, 1.0);
        }
        Image::new(width, height, channels, pixels)
    }
}

#[derive(Debug, Clone)]
pub struct PfnClassifier {
    net: Network,
    classes: usize,
}

impl PfnClassifier {
    pub fn new(net: Network) -> Result<Self> {
        let role = "classifier";
        image_input(&net, role)?;
        if !matches!(net.last_layer(), Some(Layer::Softmax)) {
            return Err(role_error(&net, role, "final layer must be softmax"));
        }
        let classes = match net.output_shape() {
            Shape::Flat(k) if k >= 2 => k,
            other => return Err(role_error(&net, role, format!("output {other} is not a class vector"))),
        };
        Ok(PfnClassifier { net, classes })
    }
}

impl Classifier for PfnClassifier {
    fn class_count(&self) -> usize {
        self.classes
    }

    fn classify(&self, image: &Image) -> Result<ProbabilityVector> {
        let out = self.net.infer(&image_to_tensor(image, self.net.input_shape())?)?;
        ProbabilityVector::new(out.data)
    }
}

#[derive(Debug, Clone)]
pub struct PfnDiscriminator {
    net: Network,
}

impl PfnDiscriminator {
    pub fn new(net: Network) -> Result<Self> {
        let role = "discriminator";
        image_input(&net, role)?;
        if !matches!(net.last_layer(), Some(Layer::Sigmoid)) {
            return Err(role_error(&net, role, "final layer must be sigmoid"));
        }
        if net.output_shape().len() != 1 {
            return Err(role_error(&net, role, format!("output {} is not a scalar", net.output_shape())));
        }
        Ok(PfnDiscriminator { net })
    }
}

impl Discriminator for PfnDiscriminator {
    fn score(&self, image: &Image) -> Result<f64> {
        let out = self.net.infer(&image_to_tensor(image, self.net.input_shape())?)?;
        Ok(out.data[0].clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct PfnExtractor {
    net: Network,
}

impl PfnExtractor {
    pub fn new(net: Network) -> Result<Self> {
        image_input(&net, "feature extractor")?;
        Ok(PfnExtractor { net })
    }
}

impl FeatureExtractor for PfnExtractor {
    fn feature_len(&self) -> usize {
        self.net.output_shape().len()
    }

    fn extract(&self, image: &Image) -> Result<Vec<f64>> {
        Ok(self.net.infer(&image_to_tensor(image, self.net.input_shape())?)?.data)
    }
}

pub fn pfn_generator(dir: impl AsRef<Path>) -> Result<PfnGenerator> {
    PfnGenerator::new(Network::load(dir)?)
}

pub fn pfn_classifier(dir: impl AsRef<Path>) -> Result<PfnClassifier> {
    PfnClassifier::new(Network::load(dir)?)
}

pub fn pfn_discriminator(dir: impl AsRef<Path>) -> Result<PfnDiscriminator> {
    PfnDiscriminator::new(Network::load(dir)?)
}

pub fn pfn_extractor(dir: impl AsRef<Path>) -> Result<PfnExtractor> {
    PfnExtractor::new(Network::load(dir)?)
}
