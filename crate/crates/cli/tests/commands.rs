use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use latdiff_cli::manifest::{Manifest, Verdict};
use latdiff_cli::{pnm, truth};
use latdiff_core::modelhub::{testbed_generate, Generator, TestbedConfig, TestbedGenerator};
use latdiff_core::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn latdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latdiff"))
        .args(args)
        .env_remove("LATDIFF_OUTPUT_DIR")
        .env_remove("LATDIFF_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = latdiff(args);
    assert!(
        out.status.success(),
        "latdiff {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = latdiff(args);
    assert!(!out.status.success(), "latdiff {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn generate(dir: &Path, evals: &str, seed: &str) {
    ok(&[
        "generate",
        "--testbed",
        "--latent-dim",
        "8",
        "--budget-evals",
        evals,
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
}

fn blob_refs(dir: &Path, count: usize) {
    fs::create_dir_all(dir).unwrap();
    let tb = TestbedConfig::default();
    let g = TestbedGenerator::new(tb.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..count {
        let img = testbed_generate(&g.bounds().sample(&mut rng), &tb).unwrap();
        pnm::write(&img, &dir.join(format!("ref{i:03}.pgm"))).unwrap();
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn smoke_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = ok(&["generate", "--testbed", "--budget-evals", "10000", "--seed", "7", "--out", s(&a)]);
    assert!(out.contains("triggering"), "{out}");
    ok(&["generate", "--testbed", "--budget-evals", "10000", "--seed", "7", "--out", s(&b)]);
    let (ma, mb) = (fs::read(a.join("manifest.jsonl")).unwrap(), fs::read(b.join("manifest.jsonl")).unwrap());
    assert_eq!(ma, mb);
    let m = Manifest::load(&a).unwrap();
    assert!(!m.rows.is_empty());
    assert!(m.verify(&a).is_empty());
    ok(&["report", "-a", s(&a)]);
}

#[test]
fn zero_budget_gives_empty_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("z");
    generate(&dir, "0", "1");
    let m = Manifest::load(&dir).unwrap();
    assert_eq!(m.summary.records, 0);
    assert_eq!(m.summary.runs[0].evaluations, 0);
    let err = fails(&["metrics", "-a", s(&dir)]);
    assert!(err.contains("no records"), "{err}");
}

#[test]
fn invalid_configuration_is_diagnosed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("x");
    let err = fails(&["generate", "--testbed", "--population", "3", "--out", s(&dir)]);
    assert!(err.contains("population"), "{err}");
    let err = fails(&["generate", "--testbed", "--runs", "0", "--out", s(&dir)]);
    assert!(err.contains("run count"), "{err}");
    let err = fails(&[
        "generate",
        "--generator",
        "/nonexistent/g",
        "--model-a",
        "/nonexistent/a",
        "--model-b",
        "/nonexistent/b",
        "--out",
        s(&dir),
    ]);
    assert!(err.contains("/nonexistent/g"), "{err}");
}

#[test]
fn existing_archive_and_lock_are_respected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    generate(&dir, "200", "0");
    let err = fails(&["generate", "--testbed", "--latent-dim", "8", "--budget-evals", "200", "--out", s(&dir)]);
    assert!(err.contains("already holds an archive"), "{err}");
    fs::write(dir.join(".latdiff.lock"), "12345\n").unwrap();
    let err = fails(&["report", "-a", s(&dir)]);
    assert!(err.contains("locked"), "{err}");
    fs::remove_file(dir.join(".latdiff.lock")).unwrap();
    ok(&["report", "-a", s(&dir)]);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_latdiff"))
        .args(["generate", "--testbed", "--latent-dim", "8", "--budget-evals", "100"])
        .env("LATDIFF_OUTPUT_DIR", &dir)
        .env("LATDIFF_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("manifest.jsonl").exists());
}

#[test]
fn corruption_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    generate(&dir, "1000", "3");
    let m = Manifest::load(&dir).unwrap();
    let victim = &m.rows[0];
    let path = dir.join(&victim.image);
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    let err = fails(&["report", "-a", s(&dir)]);
    assert!(err.contains(&victim.id), "{err}");
}

#[test]
fn filter_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    let refs = tmp.path().join("refs");
    generate(&dir, "2000", "5");
    blob_refs(&refs, 100);

    // Plant a blank image and a byte-identical copy of the first record.
    let mut m = Manifest::load(&dir).unwrap();
    assert!(m.rows.len() >= 3);
    let blank = Image::filled(16, 16, 1, 0.0).unwrap();
    pnm::write(&blank, &dir.join(&m.rows[1].image)).unwrap();
    m.rows[1].digest = blank.content_digest().to_hex();
    fs::copy(dir.join(&m.rows[0].image), dir.join(&m.rows[2].image)).unwrap();
    m.rows[2].digest = m.rows[0].digest.clone();
    m.store(&dir).unwrap();

    let err = fails(&["filter", "-a", s(&dir)]);
    assert!(err.contains("--refs"), "{err}");

    ok(&["filter", "-a", s(&dir), "--refs", s(&refs)]);
    let first = fs::read(dir.join("manifest.jsonl")).unwrap();
    let m = Manifest::load(&dir).unwrap();
    let verdict = |i: usize| m.rows[i].filter.as_ref().unwrap().verdict;
    assert_eq!(verdict(0), Verdict::Kept);
    assert_eq!(verdict(1), Verdict::Discriminator);
    assert_eq!(verdict(2), Verdict::Duplicate);
    assert_eq!(m.rows[2].filter.as_ref().unwrap().duplicate_of.as_deref(), Some(m.rows[0].id.as_str()));
    let counts = m.summary.filter.as_ref().unwrap();
    assert!(counts.kept as f64 >= 0.95 * (m.rows.len() - 2) as f64, "{counts:?}");
    // Originals stay on disk.
    assert!(m.rows.iter().all(|r| dir.join(&r.image).exists()));

    ok(&["filter", "-a", s(&dir), "--refs", s(&refs)]);
    assert_eq!(fs::read(dir.join("manifest.jsonl")).unwrap(), first);

    let out = ok(&["dedup", "-a", s(&dir)]);
    assert!(out.contains("1 duplicates"), "{out}");
    let out = ok(&["metrics", "-a", s(&dir), "--kept-only", "--sample", "20", "--repeats", "3"]);
    assert!(out.contains("validity ratio"), "{out}");
}

#[test]
fn metrics_are_seeded_and_fall_back_on_small_archives() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    generate(&dir, "1000", "2");
    let run = |seed: &str| {
        ok(&["metrics", "-a", s(&dir), "--sample", "10", "--repeats", "4", "--seed", seed]);
        fs::read_to_string(dir.join("metrics.json")).unwrap()
    };
    assert_eq!(run("1"), run("1"));
    let out = ok(&["metrics", "-a", s(&dir), "--sample", "100000", "--initial-count", "1"]);
    assert!(out.contains("single full pass"), "{out}");
    assert!(out.contains("improvement"), "{out}");
}

#[test]
fn selection_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    ok(&["generate", "--testbed", "--budget-evals", "20000", "--seed", "11", "--out", s(&dir)]);
    let truth_path = dir.join("truth.tsv");
    let sel = |seed: &str| {
        ok(&["select", "train", "-a", s(&dir), "--truth", s(&truth_path), "--seed", seed]);
        fs::read_to_string(dir.join("selector.json")).unwrap()
    };
    assert_eq!(sel("4"), sel("4"));
    ok(&["select", "eval", "-a", s(&dir), "--truth", s(&truth_path)]);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("selection_eval.json")).unwrap()).unwrap();
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!(acc >= 0.9 && acc > eval["majority_baseline"].as_f64().unwrap(), "{eval}");

    // Drop the label of the first record: the diagnostic names it.
    let labels = truth::read(&truth_path).unwrap();
    let m = Manifest::load(&dir).unwrap();
    let first = &m.rows[0].id;
    let partial = tmp.path().join("partial.tsv");
    fs::write(
        &partial,
        truth::render(m.rows.iter().skip(1).map(|r| (r.id.as_str(), labels[&r.id]))),
    )
    .unwrap();
    let err = fails(&["select", "train", "-a", s(&dir), "--truth", s(&partial)]);
    assert!(err.contains(first.as_str()), "{err}");

    // Labels that always agree with model A leave a single class.
    let one_class = tmp.path().join("one.tsv");
    fs::write(
        &one_class,
        truth::render(m.rows.iter().map(|r| (r.id.as_str(), latdiff_core::ClassLabel(r.label_a)))),
    )
    .unwrap();
    let err = fails(&["select", "train", "-a", s(&dir), "--truth", s(&one_class)]);
    assert!(err.contains("single class"), "{err}");
}
