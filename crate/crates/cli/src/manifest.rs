//! Archive manifests: UTF-8 JSON Lines with one header line, one line per
//! record and one summary line. Serialization is deterministic, so two
//! identically configured eval-budget campaigns produce identical bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use latdiff_core::fitness::TriggeringRecord;
use latdiff_core::{ClassLabel, Image, ImageDigest, LatentVector, ProbabilityVector};
use serde::{Deserialize, Serialize};

use crate::campaign::CampaignConfig;
use crate::error::FormatError;
use crate::pnm;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGES_DIR: &str = "images";
pub const FORMAT_NAME: &str = "latdiff-manifest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub format_version: u32,
    pub engine_version: String,
    pub config: CampaignConfig,
    pub seeds: Vec<u64>,
}

impl Header {
    pub fn new(config: CampaignConfig) -> Self {
        let seeds = (0..config.runs).map(|r| config.run_seed(r)).collect();
        Header {
            format: FORMAT_NAME.into(),
            format_version: FORMAT_VERSION,
            engine_version: env!("CARGO_PKG_VERSION").into(),
            config,
            seeds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    Duplicate,
    Discriminator,
    Ssim,
    Unprocessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub verdict: Verdict,
    /// Id of the earlier record with identical content, for duplicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
    pub discriminator_score: Option<f64>,
    pub ssim_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run: usize,
    pub id: String,
    pub latent: Vec<f64>,
    /// Path relative to the archive directory.
    pub image: String,
    pub digest: String,
    pub label_a: usize,
    pub label_b: usize,
    pub probs_a: Vec<f64>,
    pub probs_b: Vec<f64>,
    pub divergence: f64,
    pub diversity_at_insert: f64,
    pub generation: u64,
    pub evaluation: u64,
    pub filter: Option<FilterVerdict>,
}

impl Row {
    pub fn from_record(run: usize, r: &TriggeringRecord) -> Self {
        let ext = if r.image.channels() == 1 { "pgm" } else { "ppm" };
        Row {
            run,
            id: r.id.clone(),
            latent: r.latent.as_slice().to_vec(),
            image: format!("{IMAGES_DIR}/{}.{ext}", r.id),
            digest: r.digest.to_hex(),
            label_a: r.label_a.0,
            label_b: r.label_b.0,
            probs_a: r.probs_a.as_slice().to_vec(),
            probs_b: r.probs_b.as_slice().to_vec(),
            divergence: r.divergence,
            diversity_at_insert: r.diversity_at_insert,
            generation: r.generation,
            evaluation: r.evaluation,
            filter: None,
        }
    }

    pub fn to_record(&self, image: Image) -> Result<TriggeringRecord, FormatError> {
        let record = TriggeringRecord {
            id: self.id.clone(),
            latent: LatentVector::new(self.latent.clone()),
            digest: ImageDigest::from_hex(&self.digest)?,
            image,
            label_a: ClassLabel(self.label_a),
            label_b: ClassLabel(self.label_b),
            probs_a: ProbabilityVector::new(self.probs_a.clone())?,
            probs_b: ProbabilityVector::new(self.probs_b.clone())?,
            divergence: self.divergence,
            diversity_at_insert: self.diversity_at_insert,
            generation: self.generation,
            evaluation: self.evaluation,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn is_kept(&self) -> bool {
        self.filter.as_ref().is_some_and(|f| f.verdict == Verdict::Kept)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub records: usize,
    pub evaluations: u64,
    pub generations: u64,
    /// Search time, present only for wall-clock budgets where it may
    /// overshoot the budget by up to one generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: usize,
    pub removed_duplicate: usize,
    pub removed_discriminator: usize,
    pub removed_ssim: usize,
    pub unprocessed: usize,
}

impl FilterCounts {
    pub fn from_rows(rows: &[Row]) -> Option<Self> {
        if rows.iter().all(|r| r.filter.is_none()) {
            return None;
        }
        let mut c = FilterCounts::default();
        for r in rows {
            match r.filter.as_ref().map_or(Verdict::Unprocessed, |f| f.verdict) {
                Verdict::Kept => c.kept += 1,
                Verdict::Duplicate => c.removed_duplicate += 1,
                Verdict::Discriminator => c.removed_discriminator += 1,
                Verdict::Ssim => c.removed_ssim += 1,
                Verdict::Unprocessed => c.unprocessed += 1,
            }
        }
        Some(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<RunSummary>,
    pub records: usize,
    pub filter: Option<FilterCounts>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Header),
    Record(Row),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: Header,
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl Manifest {
    /// Recomputes the summary's derived counts from the rows.
    pub fn reconcile(&mut self) {
        for run in &mut self.summary.runs {
            run.records = self.rows.iter().filter(|r| r.run == run.run).count();
        }
        self.summary.records = self.rows.len();
        self.summary.filter = FilterCounts::from_rows(&self.rows);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("manifest values are serializable"));
            out.push('\n');
        };
        push(&Line::Header(self.header.clone()));
        for row in &self.rows {
            push(&Line::Record(row.clone()));
        }
        push(&Line::Summary(self.summary.clone()));
        out
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut header = None;
        let mut rows = Vec::new();
        let mut summary = None;
        let mut last = 0;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            last = line_no;
            let err = |message: String| FormatError::Manifest { line: line_no, message };
            if line.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(err("content after the summary line".into()));
            }
            match serde_json::from_str::<Line>(line).map_err(|e| err(e.to_string()))? {
                Line::Header(h) if header.is_none() && rows.is_empty() => {
                    if h.format != FORMAT_NAME || h.format_version != FORMAT_VERSION {
                        return Err(err(format!("unsupported format {} v{}", h.format, h.format_version)));
                    }
                    header = Some(h);
                }
                Line::Header(_) => return Err(err("unexpected header line".into())),
                Line::Record(_) | Line::Summary(_) if header.is_none() => {
                    return Err(err("the first line must be the header".into()))
                }
                Line::Record(r) => rows.push(r),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let (Some(header), Some(summary)) = (header, summary) else {
            return Err(FormatError::Manifest {
                line: last,
                message: "missing header or summary line".into(),
            });
        };
        Ok(Manifest { header, rows, summary })
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self, FormatError> {
        let path = Self::path(dir);
        let text = fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        Self::parse(&text)
    }

    /// Writes through a temporary file and renames it into place.
    pub fn store(&self, dir: &Path) -> Result<(), FormatError> {
        let path = Self::path(dir);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, self.to_jsonl()).map_err(|e| FormatError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| FormatError::io(&path, e))
    }

    pub fn load_image(&self, dir: &Path, row: &Row) -> Result<Image, FormatError> {
        pnm::read(&dir.join(&row.image))
    }

    /// Checks every invariant the manifest promises; each problem names the
    /// offending record or count.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        let mut ids = HashSet::new();
        let runs: BTreeMap<usize, &RunSummary> = self.summary.runs.iter().map(|r| (r.run, r)).collect();
        for row in &self.rows {
            if !ids.insert(row.id.as_str()) {
                problems.push(format!("record {}: duplicate id", row.id));
            }
            if !runs.contains_key(&row.run) {
                problems.push(format!("record {}: run {} has no summary entry", row.id, row.run));
            }
            match self.load_image(dir, row) {
                Ok(img) => {
                    if img.content_digest().to_hex() != row.digest {
                        problems.push(format!("record {}: image {} does not match its digest", row.id, row.image));
                    } else if let Err(e) = row.to_record(img) {
                        problems.push(format!("record {}: {e}", row.id));
                    }
                }
                Err(e) => problems.push(format!("record {}: {e}", row.id)),
            }
        }
        if self.summary.records != self.rows.len() {
            problems.push(format!(
                "summary: {} records listed, {} rows present",
                self.summary.records,
                self.rows.len()
            ));
        }
        for (run, s) in &runs {
            let n = self.rows.iter().filter(|r| r.run == *run).count();
            if s.records != n {
                problems.push(format!("summary: run {run} lists {} records, {n} rows present", s.records));
            }
        }
        if self.summary.filter != FilterCounts::from_rows(&self.rows) {
            problems.push("summary: filter counts do not match the record verdicts".into());
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use latdiff_core::filtering::FilterConfig;
    use latdiff_core::modelhub::TestbedConfig;
    use latdiff_core::nsga2::SearchConfig;

    use super::*;
    use crate::campaign::Models;

    fn sample() -> Manifest {
        let config = CampaignConfig {
            models: Models::Testbed(TestbedConfig::default()),
            search: SearchConfig::default(),
            filter: FilterConfig::default(),
            runs: 1,
            output_dir: PathBuf::from("/somewhere"),
        };
        let row = Row {
            run: 0,
            id: "r0-000001".into(),
            latent: vec![0.25, -0.5],
            image: "images/r0-000001.pgm".into(),
            digest: "00".repeat(32),
            label_a: 1,
            label_b: 3,
            probs_a: vec![0.1, 0.6, 0.1, 0.2],
            probs_b: vec![0.1, 0.2, 0.1, 0.6],
            divergence: 1.5,
            diversity_at_insert: 1.0,
            generation: 0,
            evaluation: 1,
            filter: None,
        };
        let mut m = Manifest {
            header: Header::new(config),
            rows: vec![row],
            summary: Summary {
                runs: vec![RunSummary {
                    run: 0,
                    seed: 0,
                    records: 0,
                    evaluations: 100,
                    generations: 1,
                    elapsed_seconds: None,
                }],
                records: 0,
                filter: None,
            },
        };
        m.reconcile();
        m
    }

    #[test]
    fn text_round_trip() {
        let m = sample();
        let text = m.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("{\"kind\":\"header\",\"format\":\"latdiff-manifest\""));
        assert!(!text.contains("/somewhere"));
        let back = Manifest::parse(&text).unwrap();
        assert_eq!(back.rows, m.rows);
        assert_eq!(back.summary, m.summary);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn structural_errors() {
        let text = sample().to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert!(Manifest::parse(&lines[1..].join("\n")).is_err());
        assert!(Manifest::parse(&lines[..2].join("\n")).is_err());
        let e = Manifest::parse(&format!("{}\n{{\"kind\":\"record\"}}\n", lines[0])).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn counts_follow_verdicts() {
        let mut m = sample();
        m.rows[0].filter = Some(FilterVerdict {
            verdict: Verdict::Ssim,
            duplicate_of: None,
            discriminator_score: Some(1.0),
            ssim_score: Some(0.1),
        });
        m.reconcile();
        assert_eq!(m.summary.filter.as_ref().unwrap().removed_ssim, 1);
    }
}
