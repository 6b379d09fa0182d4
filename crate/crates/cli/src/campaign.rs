//! Campaign configuration and the model roles it refers to.

use std::path::PathBuf;

use anyhow::{bail, Context};
use latdiff_core::filtering::FilterConfig;
use latdiff_core::modelhub::{
    pfn_classifier, pfn_discriminator, pfn_extractor, pfn_generator, Classifier, Discriminator, FeatureExtractor,
    Generator, TestbedClassifier, TestbedConfig, TestbedDiscriminator, TestbedFeatures, TestbedGenerator,
};
use latdiff_core::nsga2::SearchConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Models {
    /// The analytic synthetic generator/classifier pair.
    Testbed(TestbedConfig),
    /// PFN model directories.
    Pfn {
        generator: PathBuf,
        model_a: PathBuf,
        model_b: PathBuf,
        discriminator: Option<PathBuf>,
        extractor: Option<PathBuf>,
    },
}

/// Everything that determines a campaign's output. The output directory is
/// deliberately not part of the serialized snapshot so that identical
/// campaigns written to different places produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub models: Models,
    pub search: SearchConfig,
    pub filter: FilterConfig,
    pub runs: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl CampaignConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.runs == 0 {
            bail!("run count must be at least 1");
        }
        if let Models::Pfn {
            generator,
            model_a,
            model_b,
            discriminator,
            extractor,
        } = &self.models
        {
            let named = [("generator", Some(generator)), ("model A", Some(model_a)), ("model B", Some(model_b))];
            let optional = [("discriminator", discriminator.as_ref()), ("extractor", extractor.as_ref())];
            for (role, path) in named.into_iter().chain(optional) {
                if let Some(p) = path {
                    if !p.is_dir() {
                        bail!("{role} model directory {} does not exist", p.display());
                    }
                }
            }
        }
        Ok(())
    }

    /// Seed of run `r`: consecutive offsets from the campaign seed.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.search.seed.wrapping_add(run as u64)
    }
}

pub struct SearchRoles {
    pub generator: Box<dyn Generator>,
    pub model_a: Box<dyn Classifier>,
    pub model_b: Box<dyn Classifier>,
}

impl Models {
    pub fn is_testbed(&self) -> bool {
        matches!(self, Models::Testbed(_))
    }

    pub fn search_roles(&self) -> anyhow::Result<SearchRoles> {
        Ok(match self {
            Models::Testbed(tb) => SearchRoles {
                generator: Box::new(TestbedGenerator::new(tb.clone())?),
                model_a: Box::new(TestbedClassifier::model_a(tb.clone())?),
                model_b: Box::new(TestbedClassifier::model_b(tb.clone())?),
            },
            Models::Pfn {
                generator,
                model_a,
                model_b,
                ..
            } => SearchRoles {
                generator: Box::new(
                    pfn_generator(generator).with_context(|| format!("loading generator {}", generator.display()))?,
                ),
                model_a: Box::new(pfn_classifier(model_a).with_context(|| format!("loading model A {}", model_a.display()))?),
                model_b: Box::new(pfn_classifier(model_b).with_context(|| format!("loading model B {}", model_b.display()))?),
            },
        })
    }

    pub fn discriminator(&self) -> anyhow::Result<Option<Box<dyn Discriminator>>> {
        Ok(match self {
            Models::Testbed(_) => Some(Box::new(TestbedDiscriminator)),
            Models::Pfn { discriminator, .. } => match discriminator {
                Some(d) => Some(Box::new(
                    pfn_discriminator(d).with_context(|| format!("loading discriminator {}", d.display()))?,
                )),
                None => None,
            },
        })
    }

    pub fn extractor(&self) -> anyhow::Result<Box<dyn FeatureExtractor>> {
        Ok(match self {
            Models::Testbed(tb) => Box::new(TestbedFeatures::new(tb.clone())?),
            Models::Pfn { extractor, .. } => match extractor {
                Some(e) => Box::new(pfn_extractor(e).with_context(|| format!("loading extractor {}", e.display()))?),
                None => bail!("this campaign has no feature extractor; it was generated without --extractor"),
            },
        })
    }
}
