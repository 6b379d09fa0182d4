//! Post-search validity filters: digest dedup, discriminator threshold and
//! structural similarity against a reference corpus.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelhub::Discriminator;
use crate::types::Image;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Index into `0..n` under half-sample symmetric extension (`... 1 0 | 0 1 ... n-1 | n-1 n-2 ...`).
fn symmetric(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Separable Gaussian filtering of a `w`×`h` plane with symmetric borders.
fn blur(plane: &[f64], w: usize, h: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * row[symmetric(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[symmetric(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Per-image statistics reused across many comparisons.
#[derive(Debug, Clone)]
pub struct SsimImage {
    width: usize,
    height: usize,
    gray: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl SsimImage {
    pub fn new(image: &Image) -> Self {
        let (w, h) = (image.width(), image.height());
        let kernel = gaussian_window();
        let gray = image.gray();
        let mean = blur(&gray, w, h, &kernel);
        let sq: Vec<f64> = gray.iter().map(|v| v * v).collect();
        let var = blur(&sq, w, h, &kernel)
            .iter()
            .zip(&mean)
            .map(|(e2, m)| e2 - m * m)
            .collect();
        SsimImage {
            width: w,
            height: h,
            gray,
            mean,
            var,
        }
    }

    pub fn ssim(&self, other: &SsimImage) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::ShapeMismatch {
                left: format!("{}x{}", self.width, self.height),
                right: format!("{}x{}", other.width, other.height),
            });
        }
        let prod: Vec<f64> = self.gray.iter().zip(&other.gray).map(|(a, b)| a * b).collect();
        let cross = blur(&prod, self.width, self.height, &gaussian_window());
        let mut total = 0.0;
        for i in 0..prod.len() {
            let (ma, mb) = (self.mean[i], other.mean[i]);
            let cov = cross[i] - ma * mb;
            let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
            let den = (ma * ma + mb * mb + C1) * (self.var[i] + other.var[i] + C2);
            total += num / den;
        }
        Ok(total / prod.len() as f64)
    }
}

/// Mean local structural similarity of the gray versions of two images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    SsimImage::new(a).ssim(&SsimImage::new(b))
}

/// Reference corpus prepared for repeated best-match queries.
#[derive(Debug, Clone)]
pub struct SsimIndex {
    refs: Vec<SsimImage>,
}

impl SsimIndex {
    pub fn new(refs: &[Image]) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::Empty("SSIM reference set"));
        }
        Ok(SsimIndex {
            refs: refs.par_iter().map(SsimImage::new).collect(),
        })
    }

    pub fn max_ssim(&self, image: &Image) -> Result<f64> {
        let q = SsimImage::new(image);
        let mut best = f64::NEG_INFINITY;
        for r in &self.refs {
            best = best.max(q.ssim(r)?);
        }
        Ok(best)
    }
}

/// Best SSIM of `image` against any reference.
pub fn max_ssim(image: &Image, refs: &[Image]) -> Result<f64> {
    SsimIndex::new(refs)?.max_ssim(image)
}

/// Order-preserving split of input indices with the score each one received.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    pub scores: Vec<f64>,
}

fn partition(scores: Vec<f64>, threshold: f64) -> Partition {
    let (kept, removed) = (0..scores.len()).partition(|&i| scores[i] >= threshold);
    Partition { kept, removed, scores }
}

/// Scores every image; the error of the first failing index aborts the stage.
fn score_all<F>(images: &[&Image], f: F) -> std::result::Result<Vec<f64>, (Vec<f64>, Error)>
where
    F: Fn(&Image) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = images.par_iter().map(|img| f(img)).collect();
    let mut scores = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => scores.push(s),
            Err(e) => {
                return Err((
                    scores,
                    Error::Evaluation {
                        index: index as u64,
                        source: Box::new(e),
                    },
                ))
            }
        }
    }
    Ok(scores)
}

/// Keeps images whose discriminator score is at least `threshold`.
pub fn discriminator_filter<D: Discriminator + ?Sized>(images: &[&Image], disc: &D, threshold: f64) -> Result<Partition> {
    score_all(images, |img| disc.score(img))
        .map(|s| partition(s, threshold))
        .map_err(|(_, e)| e)
}

/// Keeps images whose best SSIM against the references is at least `threshold`.
pub fn ssim_filter(images: &[&Image], refs: &SsimIndex, threshold: f64) -> Result<Partition> {
    score_all(images, |img| refs.max_ssim(img))
        .map(|s| partition(s, threshold))
        .map_err(|(_, e)| e)
}

/// Indices of first occurrences per content digest, and `(duplicate, original)` pairs.
pub fn dedup(images: &[&Image]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut first = HashMap::new();
    let mut unique = Vec::new();
    let mut dups = Vec::new();
    for (i, img) in images.iter().enumerate() {
        match first.entry(img.content_digest()) {
            std::collections::hash_map::Entry::Occupied(e) => dups.push((i, *e.get())),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(i);
                unique.push(i);
            }
        }
    }
    (unique, dups)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub discriminator_threshold: f64,
    /// `None` disables the SSIM stage.
    pub ssim_threshold: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            discriminator_threshold: 0.5,
            ssim_threshold: Some(0.40),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Kept,
    Duplicate { of: usize },
    Discriminator,
    Ssim,
    /// The pipeline aborted before reaching this record.
    Unprocessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordVerdict {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub discriminator_score: Option<f64>,
    pub ssim_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub removed_duplicate: usize,
    pub removed_discriminator: usize,
    pub removed_ssim: usize,
    pub complete: bool,
    pub verdicts: Vec<RecordVerdict>,
}

impl FilterReport {
    fn new(input: usize) -> Self {
        FilterReport {
            input,
            kept: 0,
            removed_duplicate: 0,
            removed_discriminator: 0,
            removed_ssim: 0,
            complete: false,
            verdicts: vec![
                RecordVerdict {
                    verdict: Verdict::Unprocessed,
                    discriminator_score: None,
                    ssim_score: None,
                };
                input
            ],
        }
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.input).filter(|&i| self.verdicts[i].verdict == Verdict::Kept).collect()
    }

    fn tally(&mut self) {
        let count = |v: fn(&Verdict) -> bool| self.verdicts.iter().filter(|r| v(&r.verdict)).count();
        self.kept = count(|v| *v == Verdict::Kept);
        self.removed_duplicate = count(|v| matches!(v, Verdict::Duplicate { .. }));
        self.removed_discriminator = count(|v| *v == Verdict::Discriminator);
        self.removed_ssim = count(|v| *v == Verdict::Ssim);
    }
}

#[derive(Debug, thiserror::Error)]
#[error("filtering aborted: {source}")]
pub struct FilterAborted {
    pub partial: FilterReport,
    #[source]
    pub source: Error,
}

/// Dedup, then discriminator, then SSIM. Skipped stages pass everything on.
pub fn filter_pipeline(
    images: &[&Image],
    disc: Option<&dyn Discriminator>,
    refs: Option<&[Image]>,
    cfg: &FilterConfig,
) -> std::result::Result<FilterReport, Box<FilterAborted>> {
    let mut report = FilterReport::new(images.len());
    let abort = |mut partial: FilterReport, source: Error| {
        partial.tally();
        Box::new(FilterAborted { partial, source })
    };
    let index = match (cfg.ssim_threshold, refs) {
        (Some(_), Some(r)) if !r.is_empty() => Some(SsimIndex::new(r).map_err(|e| abort(report.clone(), e))?),
        (Some(_), _) => {
            return Err(abort(
                report,
                Error::Invalid("SSIM filtering needs a reference corpus; supply references or disable the SSIM stage".into()),
            ))
        }
        (None, _) => None,
    };

    let (unique, dups) = dedup(images);
    for (i, of) in dups {
        report.verdicts[i].verdict = Verdict::Duplicate { of };
    }

    let mut alive = unique;
    if let Some(d) = disc {
        let subset: Vec<&Image> = alive.iter().map(|&i| images[i]).collect();
        match score_all(&subset, |img| d.score(img)) {
            Ok(scores) => {
                let mut next = Vec::new();
                for (&i, s) in alive.iter().zip(scores) {
                    report.verdicts[i].discriminator_score = Some(s);
                    if s >= cfg.discriminator_threshold {
                        next.push(i);
                    } else {
                        report.verdicts[i].verdict = Verdict::Discriminator;
                    }
                }
                alive = next;
            }
            Err((scores, e)) => {
                for (&i, s) in alive.iter().zip(scores) {
                    report.verdicts[i].discriminator_score = Some(s);
                }
                return Err(abort(report, remap(e, &alive)));
            }
        }
    }

    if let (Some(index), Some(threshold)) = (index, cfg.ssim_threshold) {
        let subset: Vec<&Image> = alive.iter().map(|&i| images[i]).collect();
        match score_all(&subset, |img| index.max_ssim(img)) {
            Ok(scores) => {
                let mut next = Vec::new();
                for (&i, s) in alive.iter().zip(scores) {
                    report.verdicts[i].ssim_score = Some(s);
                    if s >= threshold {
                        next.push(i);
                    } else {
                        report.verdicts[i].verdict = Verdict::Ssim;
                    }
                }
                alive = next;
            }
            Err((_, e)) => return Err(abort(report, remap(e, &alive))),
        }
    }

    for i in alive {
        report.verdicts[i].verdict = Verdict::Kept;
    }
    report.complete = true;
    report.tally();
    Ok(report)
}

/// Rewrites a stage-local evaluation index to the pipeline input index.
fn remap(e: Error, alive: &[usize]) -> Error {
    match e {
        Error::Evaluation { index, source } => Error::Evaluation {
            index: alive[index as usize] as u64,
            source,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn img(w: usize, h: usize, px: Vec<f64>) -> Image {
        Image::new(w, h, 1, px).unwrap()
    }

    #[test]
    fn symmetric_extension() {
        let got: Vec<usize> = (-3..7).map(|i| symmetric(i, 3)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 2, 1, 0, 0]);
        assert_eq!(symmetric(-1, 1), 0);
    }

    #[test]
    fn identical_images_score_exactly_one() {
        let a = img(5, 4, (0..20).map(|i| (i as f64 * 0.37).fract()).collect());
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn black_versus_white() {
        let black = Image::filled(16, 16, 1, 0.0).unwrap();
        let white = Image::filled(16, 16, 1, 1.0).unwrap();
        let s = ssim(&black, &white).unwrap();
        assert!((s - C1 / (1.0 + C1)).abs() < 1e-6);
        assert!((max_ssim(&white, &[black]).unwrap() - C1 / (1.0 + C1)).abs() < 1e-6);
    }

    #[test]
    fn rgb_is_compared_through_gray() {
        let rgb = Image::new(2, 1, 3, vec![0.0, 0.3, 0.6, 0.9, 0.9, 0.9]).unwrap();
        let gray = img(2, 1, vec![0.3, 0.9]);
        assert!((ssim(&rgb, &gray).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_and_empty_refs() {
        let a = Image::filled(4, 4, 1, 0.5).unwrap();
        let b = Image::filled(5, 4, 1, 0.5).unwrap();
        assert!(ssim(&a, &b).is_err());
        assert!(max_ssim(&a, &[]).is_err());
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let a = img(2, 1, vec![0.1, 0.2]);
        let b = img(2, 1, vec![0.1, 0.2 + 1.0 / 255.0]);
        let (u, d) = dedup(&[&a, &b, &a]);
        assert_eq!(u, vec![0, 1]);
        assert_eq!(d, vec![(2, 0)]);
    }

    struct Failing;
    impl Discriminator for Failing {
        fn score(&self, image: &Image) -> Result<f64> {
            if image.pixels()[0] > 0.5 {
                Err(Error::Role("boom".into()))
            } else {
                Ok(1.0)
            }
        }
    }

    #[test]
    fn role_failure_aborts_with_partial_report() {
        let ok = img(1, 1, vec![0.1]);
        let bad = img(1, 1, vec![0.9]);
        let cfg = FilterConfig {
            ssim_threshold: None,
            ..FilterConfig::default()
        };
        let err = filter_pipeline(&[&ok, &ok, &bad], Some(&Failing), None, &cfg).unwrap_err();
        assert!(matches!(err.source, Error::Evaluation { index: 2, .. }));
        assert_eq!(err.partial.removed_duplicate, 1);
        assert!(!err.partial.complete);
        assert_eq!(err.partial.verdicts[0].discriminator_score, Some(1.0));
    }

    #[test]
    fn ssim_stage_requires_references() {
        let a = img(1, 1, vec![0.1]);
        assert!(filter_pipeline(&[&a], None, None, &FilterConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric_and_bounded(
            a in prop::collection::vec(0.0f64..=1.0, 64),
            b in prop::collection::vec(0.0f64..=1.0, 64),
        ) {
            let (a, b) = (img(8, 8, a), img(8, 8, b));
            let ab = ssim(&a, &b).unwrap();
            prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn dedup_is_idempotent(bytes in prop::collection::vec(0u8..4, 1..30)) {
            let imgs: Vec<Image> = bytes.iter().map(|&b| img(1, 1, vec![b as f64 / 255.0])).collect();
            let refs: Vec<&Image> = imgs.iter().collect();
            let (u, _) = dedup(&refs);
            let once: Vec<&Image> = u.iter().map(|&i| refs[i]).collect();
            let (u2, d2) = dedup(&once);
            prop_assert_eq!(u2.len(), once.len());
            prop_assert!(d2.is_empty());
        }
    }
}
