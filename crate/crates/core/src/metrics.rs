//! Triggering-count statistics and test-set diversity measures.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::dedup;
use crate::modelhub::FeatureExtractor;
use crate::types::{quantize, Image};

/// Entropy in nats of the pooled 256-level pixel histogram of all images.
pub fn shannon_entropy(images: &[&Image]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Empty("entropy of an empty image set"));
    }
    let mut hist = [0u64; 256];
    for img in images {
        for &p in img.pixels() {
            hist[quantize(p) as usize] += 1;
        }
    }
    Ok(entropy_of_counts(&hist))
}

pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Effective number of categories, `e^H`.
pub fn exp_shannon(h: f64) -> f64 {
    h.exp()
}

/// Log-determinant of the Gram matrix of L2-normalized rows; `-inf` when
/// the Gram matrix is singular or a row is zero.
pub fn geometric_logdiv(features: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = features.first() else {
        return Err(Error::Empty("geometric diversity of an empty set"));
    };
    let d = first.len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: d,
        });
    }
    let n = features.len();
    if n > d {
        return Ok(f64::NEG_INFINITY);
    }
    let mut v = DMatrix::zeros(n, d);
    for (i, f) in features.iter().enumerate() {
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        for (j, x) in f.iter().enumerate() {
            v[(i, j)] = x / norm;
        }
    }
    let gram = &v * v.transpose();
    match gram.cholesky() {
        Some(c) => {
            let l = c.l();
            let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
            // A numerically rank-deficient Gram can still factor with a
            // vanishing pivot; treat those as degenerate too.
            if (0..n).any(|i| l[(i, i)] < 1e-7) {
                Ok(f64::NEG_INFINITY)
            } else {
                Ok(logdet)
            }
        }
        None => Ok(f64::NEG_INFINITY),
    }
}

/// Population standard deviation over mean, in percent.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Invalid("coefficient of variation needs at least 2 values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Invalid("coefficient of variation is undefined for zero mean".into()));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean * 100.0)
}

/// Relative gain of `generated` over `initial`, in percent.
pub fn improvement_ratio(generated: u64, initial: u64) -> Result<f64> {
    if initial == 0 {
        return Err(Error::Invalid("improvement ratio needs a positive initial count".into()));
    }
    Ok((generated as f64 - initial as f64) / initial as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bootstrap estimate of the fraction of `true` labels with a percentile interval.
pub fn bootstrap_ratio_ci(labels: &[bool], resamples: usize, confidence: f64, seed: u64) -> Result<RatioInterval> {
    if labels.is_empty() {
        return Err(Error::Empty("bootstrap over no labels"));
    }
    if resamples == 0 || !(0.0..1.0).contains(&confidence) {
        return Err(Error::Invalid("bootstrap needs resamples > 0 and confidence in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut ratios: Vec<f64> = (0..resamples)
        .map(|_| (0..n).filter(|_| labels[rng.random_range(0..n)]).count() as f64 / n as f64)
        .collect();
    let mean = ratios.iter().sum::<f64>() / resamples as f64;
    ratios.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok(RatioInterval {
        mean,
        lower: percentile(&ratios, tail),
        upper: percentile(&ratios, 1.0 - tail),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub sample_size: usize,
    pub repeats: usize,
    /// True when the archive was smaller than the requested sample and a
    /// single pass over all of it was used instead.
    pub full_archive: bool,
    pub shannon: Vec<f64>,
    pub mean_shannon: f64,
    pub mean_exp_shannon: f64,
    /// Per-repeat log-det; `None` marks a degenerate (singular) repeat.
    pub geometric: Vec<Option<f64>>,
    /// Mean over non-degenerate repeats.
    pub mean_geometric: Option<f64>,
    pub seed: u64,
}

/// Repeated-subsample Shannon and geometric diversity over unique images.
pub fn sampled_diversity_report<E: FeatureExtractor + ?Sized>(
    images: &[&Image],
    extractor: &E,
    sample_size: usize,
    repeats: usize,
    seed: u64,
) -> Result<DiversityReport> {
    if images.is_empty() {
        return Err(Error::Empty("diversity of an empty archive"));
    }
    if sample_size == 0 || repeats == 0 {
        return Err(Error::Invalid("sample size and repeat count must be positive".into()));
    }
    let (unique, _) = dedup(images);
    let pool: Vec<&Image> = unique.iter().map(|&i| images[i]).collect();
    let full_archive = pool.len() < sample_size;
    let (size, repeats) = if full_archive { (pool.len(), 1) } else { (sample_size, repeats) };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shannon = Vec::with_capacity(repeats);
    let mut geometric = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut picked: Vec<usize> = if full_archive {
            (0..pool.len()).collect()
        } else {
            sample(&mut rng, pool.len(), size).into_vec()
        };
        picked.sort_unstable();
        let chosen: Vec<&Image> = picked.iter().map(|&i| pool[i]).collect();
        shannon.push(shannon_entropy(&chosen)?);
        let feats = chosen.iter().map(|img| extractor.extract(img)).collect::<Result<Vec<_>>>()?;
        let g = geometric_logdiv(&feats)?;
        geometric.push(g.is_finite().then_some(g));
    }
    let finite: Vec<f64> = geometric.iter().flatten().copied().collect();
    Ok(DiversityReport {
        sample_size: size,
        repeats,
        full_archive,
        mean_shannon: shannon.iter().sum::<f64>() / repeats as f64,
        mean_exp_shannon: shannon.iter().map(|h| exp_shannon(*h)).sum::<f64>() / repeats as f64,
        shannon,
        mean_geometric: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        geometric,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn entropy_examples() {
        let flat = Image::filled(4, 4, 1, 0.3).unwrap();
        assert_eq!(shannon_entropy(&[&flat]).unwrap(), 0.0);
        let ramp = Image::from_quantized(256, 1, 1, &(0..=255).collect::<Vec<u8>>()).unwrap();
        assert!((shannon_entropy(&[&ramp]).unwrap() - 256f64.ln()).abs() < 1e-12);
        assert!((256f64.ln() - 5.545177).abs() < 1e-6);
        assert!(shannon_entropy(&[]).is_err());
    }

    #[test]
    fn exp_shannon_values() {
        assert_eq!(exp_shannon(0.0), 1.0);
        assert!((exp_shannon(11.0) - 59_874.14).abs() < 0.01);
        assert!((exp_shannon(12.0) - 162_754.79).abs() < 0.01);
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(geometric_logdiv(&[vec![0.0, 3.0]]).unwrap(), 0.0);
        assert!(geometric_logdiv(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap().abs() < 1e-15);
        let g = geometric_logdiv(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!((g - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(geometric_logdiv(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(geometric_logdiv(&[vec![0.0, 0.0]]).unwrap(), f64::NEG_INFINITY);
        assert!(geometric_logdiv(&[vec![1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn cv_and_improvement() {
        assert!((coefficient_of_variation(&[1229.0, 1237.0, 1228.0]).unwrap() - 0.33).abs() < 0.01);
        assert_eq!(coefficient_of_variation(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(coefficient_of_variation(&[1.0, 3.0]).unwrap(), 50.0);
        assert!(coefficient_of_variation(&[1.0, -1.0]).is_err());
        assert_eq!(improvement_ratio(82, 82).unwrap(), 0.0);
        assert_eq!(improvement_ratio(164, 82).unwrap(), 100.0);
        assert!((improvement_ratio(10518, 82).unwrap() - 12_726.8).abs() < 0.1);
        assert!(improvement_ratio(1, 0).is_err());
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        let all = bootstrap_ratio_ci(&[true; 40], 1000, 0.95, 1).unwrap();
        assert_eq!((all.mean, all.lower, all.upper), (1.0, 1.0, 1.0));
        let none = bootstrap_ratio_ci(&[false; 40], 1000, 0.95, 1).unwrap();
        assert_eq!((none.mean, none.lower, none.upper), (0.0, 0.0, 0.0));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 0.5), 2.0);
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_256(bytes in prop::collection::vec(any::<u8>(), 1..600)) {
            let img = Image::from_quantized(bytes.len(), 1, 1, &bytes).unwrap();
            prop_assert!(shannon_entropy(&[&img]).unwrap() <= 256f64.ln() + 1e-12);
        }

        #[test]
        fn appending_a_duplicate_never_raises_logdiv(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..5), pick in 0usize..5) {
            let before = geometric_logdiv(&rows).unwrap();
            let mut more = rows.clone();
            more.push(rows[pick % rows.len()].clone());
            let after = geometric_logdiv(&more).unwrap();
            prop_assert!(after <= before);
            prop_assert_eq!(after, f64::NEG_INFINITY);
        }

        #[test]
        fn exp_shannon_is_monotone(a in 0.0f64..12.0, b in 0.0f64..12.0) {
            prop_assume!(a < b);
            prop_assert!(exp_shannon(a) < exp_shannon(b));
        }
    }
}
