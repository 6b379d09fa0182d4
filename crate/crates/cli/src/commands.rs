use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use latdiff_core::clustering::ClusterConfig;
use latdiff_core::filtering::{self, FilterConfig};
use latdiff_core::fitness::TriggeringRecord;
use latdiff_core::metrics::{
    bootstrap_ratio_ci, coefficient_of_variation, improvement_ratio, sampled_diversity_report, DiversityReport,
    RatioInterval,
};
use latdiff_core::modelhub::{testbed_truth, FeatureExtractor, Generator, TestbedConfig};
use latdiff_core::nsga2::{Budget, Search, SearchConfig};
use latdiff_core::selection::{
    build_selection_dataset, eval_selector, majority_baseline, train_selector, DatasetReport, KnnConfig,
    KnnSelector, SelectionExample,
};
use latdiff_core::Image;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignConfig, Models};
use crate::cli::{ArchiveArg, FilterArgs, GenerateArgs, MetricsArgs, SelectEvalArgs, SelectTrainArgs};
use crate::lock::DirLock;
use crate::manifest::{FilterVerdict, Header, Manifest, Row, RunSummary, Summary, Verdict, IMAGES_DIR};
use crate::{pnm, truth};

pub const TIMINGS_FILE: &str = "timings.json";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const FILTER_REPORT_FILE: &str = "filter_report.json";
pub const DEDUP_FILE: &str = "dedup.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SELECTOR_FILE: &str = "selector.json";
pub const SELECTION_EVAL_FILE: &str = "selection_eval.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn campaign_config(args: &GenerateArgs) -> anyhow::Result<CampaignConfig> {
    let models = if args.testbed {
        Models::Testbed(TestbedConfig {
            latent_dim: args.latent_dim,
            ..TestbedConfig::with_side(args.testbed_side)
        })
    } else {
        let need = |p: &Option<PathBuf>, what: &str| p.clone().ok_or_else(|| anyhow!("--{what} is required"));
        Models::Pfn {
            generator: need(&args.generator, "generator")?,
            model_a: need(&args.model_a, "model-a")?,
            model_b: need(&args.model_b, "model-b")?,
            discriminator: args.discriminator.clone(),
            extractor: args.extractor.clone(),
        }
    };
    let budget = match (args.budget_evals, args.budget_seconds) {
        (_, Some(s)) => Budget::Seconds(s),
        (Some(n), None) => Budget::Evaluations(n),
        (None, None) => Budget::Evaluations(10_000),
    };
    let config = CampaignConfig {
        models,
        search: SearchConfig {
            population: args.population,
            latent_dim: args.latent_dim,
            crossover_rate: args.crossover_rate,
            mutation_rate: args.mutation_rate,
            eta_c: args.eta_c,
            eta_m: args.eta_m,
            budget,
            seed: args.seed,
            clustering: ClusterConfig {
                target_dim: args.cluster_dim,
                min_cluster_size: args.min_cluster_size,
                ..ClusterConfig::default()
            },
            ..SearchConfig::default()
        },
        filter: FilterConfig {
            discriminator_threshold: args.disc_threshold,
            ssim_threshold: Some(args.ssim_threshold),
        },
        runs: args.runs,
        output_dir: args.out.clone(),
    };
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Serialize, Deserialize)]
struct RunTiming {
    run: usize,
    search_seconds: f64,
}

/// Wall-clock measurements, kept out of the manifest so that it stays reproducible.
#[derive(Debug, Serialize, Deserialize)]
struct Timings {
    load_seconds: f64,
    runs: Vec<RunTiming>,
}

pub fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let mut config = campaign_config(args)?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(dir.join(IMAGES_DIR)).with_context(|| format!("creating {}", dir.display()))?;
    let _lock = DirLock::acquire(&dir)?;
    if Manifest::path(&dir).exists() {
        bail!("{} already holds an archive; choose a new output directory", dir.display());
    }

    let loading = Instant::now();
    let roles = config.models.search_roles()?;
    let load_seconds = loading.elapsed().as_secs_f64();
    if !config.models.is_testbed() {
        config.search.latent_dim = roles.generator.latent_dim();
    }
    config.search.validate()?;

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut timings = Vec::new();
    for run in 0..config.runs {
        let search_cfg = SearchConfig {
            seed: config.run_seed(run),
            ..config.search.clone()
        };
        let outcome = Search::new(search_cfg, &roles.generator, &roles.model_a, &roles.model_b)?
            .with_id_prefix(format!("r{run}-"))
            .run()
            .with_context(|| format!("run {run}"))?;
        let count = outcome.archive.len();
        for record in outcome.archive.records() {
            let row = Row::from_record(run, record);
            pnm::write(&record.image, &dir.join(&row.image))?;
            rows.push(row);
        }
        let seconds = outcome.elapsed.as_secs_f64();
        runs.push(RunSummary {
            run,
            seed: config.run_seed(run),
            records: count,
            evaluations: outcome.evaluations,
            generations: outcome.generations,
            elapsed_seconds: matches!(config.search.budget, Budget::Seconds(_)).then_some(seconds),
        });
        timings.push(RunTiming {
            run,
            search_seconds: seconds,
        });
        println!(
            "run {run}: seed {} evaluations {} generations {} triggering {count}",
            config.run_seed(run),
            outcome.evaluations,
            outcome.generations
        );
    }
    let counts: Vec<f64> = runs.iter().map(|r| r.records as f64).collect();
    if counts.len() > 1 {
        match coefficient_of_variation(&counts) {
            Ok(cv) => println!("coefficient of variation across runs: {cv:.2}%"),
            Err(e) => println!("coefficient of variation across runs: n/a ({e})"),
        }
    }

    if let Models::Testbed(tb) = &config.models {
        let mut labels = Vec::with_capacity(rows.len());
        for row in &rows {
            labels.push((row.id.as_str(), testbed_truth(&latdiff_core::LatentVector::new(row.latent.clone()), tb)?));
        }
        let path = dir.join(TRUTH_FILE);
        fs::write(&path, truth::render(labels)).with_context(|| format!("writing {}", path.display()))?;
    }
    write_json(
        &dir.join(TIMINGS_FILE),
        &Timings {
            load_seconds,
            runs: timings,
        },
    )?;
    let mut manifest = Manifest {
        header: Header::new(config),
        rows,
        summary: Summary {
            runs,
            records: 0,
            filter: None,
        },
    };
    manifest.reconcile();
    manifest.store(&dir)?;
    println!("archive: {} records in {}", manifest.rows.len(), dir.display());
    Ok(())
}

fn load_images(dir: &Path, manifest: &Manifest) -> anyhow::Result<Vec<Image>> {
    manifest
        .rows
        .iter()
        .map(|row| {
            let img = manifest.load_image(dir, row)?;
            if img.content_digest().to_hex() != row.digest {
                bail!("record {}: image {} does not match its digest", row.id, row.image);
            }
            Ok(img)
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct FilterSummary {
    config: FilterConfig,
    discriminator: bool,
    references: Option<usize>,
    input: usize,
    kept: usize,
    removed_duplicate: usize,
    removed_discriminator: usize,
    removed_ssim: usize,
    complete: bool,
}

pub fn filter(args: &FilterArgs) -> anyhow::Result<()> {
    let dir = &args.archive.archive;
    let _lock = DirLock::acquire(dir)?;
    let mut manifest = Manifest::load(dir)?;
    let mut cfg = manifest.header.config.filter;
    if let Some(t) = args.disc_threshold {
        cfg.discriminator_threshold = t;
    }
    if let Some(t) = args.ssim_threshold {
        cfg.ssim_threshold = Some(t);
    }
    if args.no_ssim {
        cfg.ssim_threshold = None;
    }
    let refs = match (&args.refs, cfg.ssim_threshold) {
        (Some(r), Some(_)) => {
            let refs = pnm::read_dir(r)?;
            if refs.is_empty() {
                bail!("reference directory {} holds no .pgm/.ppm images", r.display());
            }
            Some(refs)
        }
        (None, Some(_)) => bail!("the SSIM stage needs --refs DIR with reference images; pass --no-ssim to skip it"),
        (_, None) => None,
    };
    let disc = if args.no_discriminator {
        None
    } else {
        manifest.header.config.models.discriminator()?
    };

    let images = load_images(dir, &manifest)?;
    let views: Vec<&Image> = images.iter().collect();
    let result = filtering::filter_pipeline(&views, disc.as_deref(), refs.as_deref(), &cfg);
    let (report, failure) = match result {
        Ok(r) => (r, None),
        Err(aborted) => {
            let aborted = *aborted;
            (aborted.partial, Some(aborted.source))
        }
    };
    let ids: Vec<String> = manifest.rows.iter().map(|r| r.id.clone()).collect();
    for (row, v) in manifest.rows.iter_mut().zip(&report.verdicts) {
        let (verdict, duplicate_of) = match v.verdict {
            filtering::Verdict::Kept => (Verdict::Kept, None),
            filtering::Verdict::Duplicate { of } => (Verdict::Duplicate, Some(of)),
            filtering::Verdict::Discriminator => (Verdict::Discriminator, None),
            filtering::Verdict::Ssim => (Verdict::Ssim, None),
            filtering::Verdict::Unprocessed => (Verdict::Unprocessed, None),
        };
        row.filter = Some(FilterVerdict {
            verdict,
            duplicate_of: duplicate_of.map(|i| ids[i].clone()),
            discriminator_score: v.discriminator_score,
            ssim_score: v.ssim_score,
        });
    }
    manifest.reconcile();
    manifest.store(dir)?;
    write_json(
        &dir.join(FILTER_REPORT_FILE),
        &FilterSummary {
            config: cfg,
            discriminator: disc.is_some(),
            references: refs.as_ref().map(Vec::len),
            input: report.input,
            kept: report.kept,
            removed_duplicate: report.removed_duplicate,
            removed_discriminator: report.removed_discriminator,
            removed_ssim: report.removed_ssim,
            complete: report.complete,
        },
    )?;
    if let Some(e) = failure {
        let id = match &e {
            latdiff_core::Error::Evaluation { index, .. } => {
                manifest.rows.get(*index as usize).map_or(String::new(), |r| format!(" at record {}", r.id))
            }
            _ => String::new(),
        };
        bail!("filtering stopped{id}: {e}; partial verdicts were saved");
    }
    println!(
        "filter: {} input, {} kept, {} duplicate, {} discriminator, {} ssim",
        report.input, report.kept, report.removed_duplicate, report.removed_discriminator, report.removed_ssim
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub id: String,
    pub of: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DedupReport {
    pub records: usize,
    pub unique: usize,
    pub duplicates: Vec<DuplicatePair>,
}

pub fn dedup(args: &ArchiveArg) -> anyhow::Result<()> {
    let dir = &args.archive;
    let _lock = DirLock::acquire(dir)?;
    let manifest = Manifest::load(dir)?;
    let images = load_images(dir, &manifest)?;
    let views: Vec<&Image> = images.iter().collect();
    let (unique, dups) = filtering::dedup(&views);
    let report = DedupReport {
        records: images.len(),
        unique: unique.len(),
        duplicates: dups
            .into_iter()
            .map(|(i, of)| DuplicatePair {
                id: manifest.rows[i].id.clone(),
                of: manifest.rows[of].id.clone(),
            })
            .collect(),
    };
    write_json(&dir.join(DEDUP_FILE), &report)?;
    println!("dedup: {} records, {} unique, {} duplicates", report.records, report.unique, report.duplicates.len());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValidityReport {
    pub kept: usize,
    pub filtered: usize,
    pub interval: RatioInterval,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: usize,
    pub per_run: Vec<usize>,
    pub mean_per_run: f64,
    pub cv_percent: Option<f64>,
    pub initial_count: Option<u64>,
    pub improvement_percent: Option<f64>,
    pub kept_only: bool,
    pub diversity: DiversityReport,
    pub validity: Option<ValidityReport>,
}

pub fn metrics(args: &MetricsArgs) -> anyhow::Result<()> {
    let dir = &args.archive.archive;
    let _lock = DirLock::acquire(dir)?;
    let manifest = Manifest::load(dir)?;
    if manifest.rows.is_empty() {
        bail!("archive {} has no records to measure", dir.display());
    }
    let per_run: Vec<usize> = manifest.summary.runs.iter().map(|r| r.records).collect();
    let mean_per_run = per_run.iter().sum::<usize>() as f64 / per_run.len() as f64;
    let cv_percent = if per_run.len() > 1 {
        coefficient_of_variation(&per_run.iter().map(|&c| c as f64).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    let improvement_percent = args
        .initial_count
        .map(|n| improvement_ratio(mean_per_run.round() as u64, n))
        .transpose()?;

    let images = load_images(dir, &manifest)?;
    let chosen: Vec<&Image> = if args.kept_only {
        if manifest.summary.filter.is_none() {
            bail!("--kept-only needs a filtered archive; run `latdiff filter` first");
        }
        images.iter().zip(&manifest.rows).filter(|(_, r)| r.is_kept()).map(|(i, _)| i).collect()
    } else {
        images.iter().collect()
    };
    if chosen.is_empty() {
        bail!("no kept records in {}", dir.display());
    }
    let extractor = manifest.header.config.models.extractor()?;
    let feature_len = extractor.feature_len();
    let diversity = sampled_diversity_report(&chosen, &extractor, args.sample, args.repeats, args.seed)?;

    let validity = match &manifest.summary.filter {
        Some(_) => {
            let labels: Vec<bool> = manifest.rows.iter().map(Row::is_kept).collect();
            Some(ValidityReport {
                kept: labels.iter().filter(|&&k| k).count(),
                filtered: labels.len(),
                interval: bootstrap_ratio_ci(&labels, args.bootstrap_resamples, args.confidence, args.seed)?,
            })
        }
        None => None,
    };
    let report = MetricsReport {
        records: manifest.rows.len(),
        per_run,
        mean_per_run,
        cv_percent,
        initial_count: args.initial_count,
        improvement_percent,
        kept_only: args.kept_only,
        diversity,
        validity,
    };
    write_json(&dir.join(METRICS_FILE), &report)?;
    println!(
        "metrics: {} records, mean shannon {:.4} (exp {:.2}), mean log-det {}{}",
        report.records,
        report.diversity.mean_shannon,
        report.diversity.mean_exp_shannon,
        match report.diversity.mean_geometric {
            Some(g) => format!("{g:.4}"),
            None if report.diversity.sample_size > feature_len => {
                format!("n/a (sample of {} exceeds feature length {feature_len})", report.diversity.sample_size)
            }
            None => "n/a (every sample was degenerate)".into(),
        },
        if report.diversity.full_archive {
            " [archive smaller than sample; single full pass]"
        } else {
            ""
        }
    );
    if let Some(cv) = report.cv_percent {
        println!("coefficient of variation across runs: {cv:.2}%");
    }
    if let Some(r) = report.improvement_percent {
        println!("improvement over initial count: {r:.1}%");
    }
    if let Some(v) = &report.validity {
        println!(
            "validity ratio: {:.4} [{:.4}, {:.4}]",
            v.interval.mean, v.interval.lower, v.interval.upper
        );
    }
    Ok(())
}

fn load_records(dir: &Path, manifest: &Manifest, kept_only: bool) -> anyhow::Result<Vec<TriggeringRecord>> {
    if kept_only && manifest.summary.filter.is_none() {
        bail!("--kept-only needs a filtered archive; run `latdiff filter` first");
    }
    manifest
        .rows
        .iter()
        .filter(|r| !kept_only || r.is_kept())
        .map(|row| {
            let img = manifest.load_image(dir, row)?;
            row.to_record(img).with_context(|| format!("record {}", row.id))
        })
        .collect()
}

fn selection_dataset(
    dir: &Path,
    manifest: &Manifest,
    truth_path: &Path,
    kept_only: bool,
) -> anyhow::Result<(Vec<SelectionExample>, DatasetReport)> {
    let labels = truth::read(truth_path)?;
    let records = load_records(dir, manifest, kept_only)?;
    let extractor = manifest.header.config.models.extractor()?;
    build_selection_dataset(&records, &labels, &extractor)
        .with_context(|| format!("labels from {}", truth_path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectorFile {
    pub selector: KnnSelector,
    pub kept_only: bool,
    pub dataset: DatasetReport,
    pub train_ids: Vec<String>,
    pub holdout_ids: Vec<String>,
}

pub fn select_train(args: &SelectTrainArgs) -> anyhow::Result<()> {
    let dir = &args.archive.archive;
    let _lock = DirLock::acquire(dir)?;
    let manifest = Manifest::load(dir)?;
    let (mut examples, dataset) = selection_dataset(dir, &manifest, &args.truth, args.kept_only)?;
    if examples.len() < args.train + args.test {
        bail!(
            "{} usable labeled records, but --train {} plus --test {} were requested",
            examples.len(),
            args.train,
            args.test
        );
    }
    examples.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
    let (train, rest) = examples.split_at(args.train);
    let holdout = &rest[..args.test];
    let config = KnnConfig {
        k: args.k,
        standardize: !args.no_standardize,
    };
    let selector = train_selector(train, &config, args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| dir.join(SELECTOR_FILE));
    println!(
        "dataset: {} model A correct, {} model B correct, {} both wrong (dropped)",
        dataset.a_correct,
        dataset.b_correct,
        dataset.both_wrong.len()
    );
    write_json(
        &out,
        &SelectorFile {
            selector,
            kept_only: args.kept_only,
            dataset,
            train_ids: train.iter().map(|e| e.record_id.clone()).collect(),
            holdout_ids: holdout.iter().map(|e| e.record_id.clone()).collect(),
        },
    )?;
    println!("selector: trained on {} examples, {} held out; wrote {}", train.len(), holdout.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionEval {
    pub accuracy: f64,
    pub majority_baseline: f64,
    pub holdout: usize,
    pub train: usize,
    pub dropped_both_wrong: usize,
}

pub fn select_eval(args: &SelectEvalArgs) -> anyhow::Result<()> {
    let dir = &args.archive.archive;
    let _lock = DirLock::acquire(dir)?;
    let manifest = Manifest::load(dir)?;
    let path = args.selector.clone().unwrap_or_else(|| dir.join(SELECTOR_FILE));
    let file: SelectorFile = read_json(&path)?;
    let (examples, dataset) = selection_dataset(dir, &manifest, &args.truth, file.kept_only)?;
    let by_id: HashMap<&str, &SelectionExample> = examples.iter().map(|e| (e.record_id.as_str(), e)).collect();
    let pick = |ids: &[String]| -> anyhow::Result<Vec<SelectionExample>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|e| (*e).clone())
                    .ok_or_else(|| anyhow!("record {id} from the selector's split is not in the labeled dataset"))
            })
            .collect()
    };
    let train = pick(&file.train_ids)?;
    let holdout = pick(&file.holdout_ids)?;
    let report = SelectionEval {
        accuracy: eval_selector(&file.selector, &holdout)?,
        majority_baseline: majority_baseline(&train, &holdout)?,
        holdout: holdout.len(),
        train: train.len(),
        dropped_both_wrong: dataset.both_wrong.len(),
    };
    write_json(&dir.join(SELECTION_EVAL_FILE), &report)?;
    println!(
        "selector accuracy {:.4} on {} held-out records (majority baseline {:.4})",
        report.accuracy, report.holdout, report.majority_baseline
    );
    Ok(())
}

pub fn report(args: &ArchiveArg) -> anyhow::Result<()> {
    let dir = &args.archive;
    let _lock = DirLock::acquire(dir)?;
    let manifest = Manifest::load(dir)?;
    let h = &manifest.header;
    println!("archive {} (engine {})", dir.display(), h.engine_version);
    println!("models: {}", if h.config.models.is_testbed() { "testbed" } else { "pfn" });
    for r in &manifest.summary.runs {
        println!(
            "run {}: seed {} evaluations {} generations {} records {}",
            r.run, r.seed, r.evaluations, r.generations, r.records
        );
    }
    println!("records: {}", manifest.summary.records);
    if let Some(f) = &manifest.summary.filter {
        println!(
            "filter: {} kept, {} duplicate, {} discriminator, {} ssim, {} unprocessed",
            f.kept, f.removed_duplicate, f.removed_discriminator, f.removed_ssim, f.unprocessed
        );
    }
    let problems = manifest.verify(dir);
    if problems.is_empty() {
        println!("verified: every image matches its digest and all counts reconcile");
        return Ok(());
    }
    for p in &problems {
        eprintln!("{p}");
    }
    bail!("{} problem(s) found in {}", problems.len(), dir.display())
}
