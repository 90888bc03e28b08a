//! End-to-end tests of the `longcap` binary: every subcommand, the artifact
//! formats, and the error paths the CLI is contracted to reject.

use std::path::Path;
use std::process::{Command, Output};

use longcap::corpus::Corpus;
use longcap::evaluation::AttentionProfile;
use longcap::pos_embed::PositionalTable;
use longcap::report::parse_probe_csv;
use longcap::Real;

fn longcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longcap"))
        .args(args)
        .output()
        .expect("spawn longcap")
}

fn ok(args: &[&str]) -> Output {
    let out = longcap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(args: &[&str]) -> String {
    let out = longcap(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen_corpus(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let d = dir.to_str().unwrap().to_owned();
    ok(&["gen", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", &d]);
    dir.join("corpus.jsonl")
}

#[test]
fn gen_is_deterministic_and_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gen_corpus(&tmp.path().join("a"), 30, 5);
    let b = gen_corpus(&tmp.path().join("b"), 30, 5);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let corpus = Corpus::load(&a).unwrap();
    assert_eq!(corpus.records.len(), 30);
    // summary-first: every caption opens with the union summary
    assert!(corpus.records.iter().all(|r| r.caption.starts_with("a photo of ")));

    let c = gen_corpus(&tmp.path().join("c"), 30, 6);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gen_rejects_single_sentence_captions() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let err = fails(&["gen", "--n", "10", "--sentences", "1", "--out", d]);
    assert!(err.contains("sentence"), "unexpected error: {err}");
}

fn short_lines(preview: &str) -> Vec<&str> {
    preview
        .lines()
        .filter(|l| l.trim_start().starts_with("short:"))
        .collect()
}

#[test]
fn augment_strategies_follow_their_contracts() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = gen_corpus(&tmp.path().join("gen"), 20, 1);
    let c = corpus.to_str().unwrap().to_owned();
    let run = |strategy: &str, out: &str| -> String {
        let dir = tmp.path().join(out);
        ok(&[
            "augment", "--corpus", &c, "--strategy", strategy, "--preview", "8", "--seed", "3",
            "--out", dir.to_str().unwrap(),
        ]);
        std::fs::read_to_string(dir.join("augment_preview.txt")).unwrap()
    };

    // longclip: the short caption is exactly the summary sentence
    let longclip = run("longclip", "lc");
    let lines = short_lines(&longclip);
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| l.contains("photo")));

    // debias: the summary sentence never survives into the short caption
    let debias = run("debias", "db");
    let lines = short_lines(&debias);
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| !l.contains("photo")));

    fails(&["augment", "--corpus", &c, "--strategy", "bogus", "--out", tmp.path().to_str().unwrap()]);
}

#[test]
fn keep_n_samples_exactly_n_when_available() {
    // library-level check of the keep_n contract the CLI exposes
    use longcap::augmentation::{sample_sentences, SamplingStrategy};
    use longcap::text_pipeline::Caption;
    use rand::SeedableRng;
    let caption = Caption::from_sentences(
        (0..6).map(|i| format!("sentence number {i}.")).collect(),
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let s = sample_sentences(&caption, &mut rng, SamplingStrategy::KeepN(4));
        assert_eq!(s.k(), 4);
    }
    let tiny = Caption::from_sentences(vec!["only one.".into(), "and two.".into()]);
    let s = sample_sentences(&tiny, &mut rng, SamplingStrategy::KeepN(4));
    assert_eq!(s.k(), 2);
}

#[test]
fn stretch_emits_a_valid_table() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    ok(&["stretch", "--rows", "27", "--dim", "8", "--freeze", "20", "--factor", "4", "--out", d]);
    let body = std::fs::read_to_string(tmp.path().join("positional_table.json")).unwrap();
    let table: PositionalTable<Real> = serde_json::from_str(&body).unwrap();
    assert_eq!(table.len(), 48); // 20 + 4 * (27 - 20)
    assert_eq!(table.dim(), 8);
    assert_eq!(table.frozen_prefix, 20);
}

#[test]
fn train_eval_probe_attn_report_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = gen_corpus(&tmp.path().join("gen"), 40, 11);
    let c = corpus.to_str().unwrap().to_owned();

    let train_dir = tmp.path().join("train");
    ok(&[
        "train", "--corpus", &c, "--mode", "debias", "--lambda-short", "0.1", "--epochs", "1",
        "--seed", "2", "--out", train_dir.to_str().unwrap(),
    ]);
    let ckpt = train_dir.join("checkpoint.json");
    assert!(ckpt.exists());
    let metrics = std::fs::read_to_string(train_dir.join("metrics.jsonl")).unwrap();
    assert!(metrics.lines().count() >= 1);
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["loss_total"].as_f64().unwrap().is_finite());
    }
    let ck = ckpt.to_str().unwrap().to_owned();

    let eval_dir = tmp.path().join("eval");
    ok(&["eval", "--checkpoint", &ck, "--corpus", &c, "--out", eval_dir.to_str().unwrap()]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("retrieval.json")).unwrap())
            .unwrap();
    assert_eq!(r["n_queries"], 40);

    let probe_dir = tmp.path().join("probe");
    ok(&[
        "probe", "--checkpoint", &ck, "--corpus", &c, "--probes",
        "keep,move:1:4,remove_first,pad:3", "--out", probe_dir.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(probe_dir.join("probes.csv")).unwrap();
    let table = parse_probe_csv(&csv).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.probe.as_str()).collect();
    assert_eq!(labels, ["keep", "move:1:4", "remove_first", "pad:3"]);
    assert_eq!(table.row("keep").unwrap().delta_t2i, 0.0);

    let attn_dir = tmp.path().join("attn");
    ok(&["attn", "--checkpoint", &ck, "--corpus", &c, "--out", attn_dir.to_str().unwrap()]);
    let profile_path = attn_dir.join("profile.json");
    let profile: AttentionProfile =
        serde_json::from_str(&std::fs::read_to_string(&profile_path).unwrap()).unwrap();
    assert_eq!(profile.n_captions, 40);

    let report_dir = tmp.path().join("report");
    ok(&[
        "report", "--probes", probe_dir.join("probes.csv").to_str().unwrap(), "--attn",
        profile_path.to_str().unwrap(), "--out", report_dir.to_str().unwrap(),
    ]);
    for name in ["probe_deltas.svg", "attention_profile.svg"] {
        let svg = std::fs::read_to_string(report_dir.join(name)).unwrap();
        assert!(svg.starts_with("<svg"), "{name} is not an svg");
    }
    fails(&["report", "--out", report_dir.to_str().unwrap()]);
}

#[test]
fn train_resume_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = gen_corpus(&tmp.path().join("gen"), 40, 13);
    let c = corpus.to_str().unwrap().to_owned();

    let full = tmp.path().join("full");
    ok(&["train", "--corpus", &c, "--epochs", "2", "--seed", "4", "--out", full.to_str().unwrap()]);

    let part = tmp.path().join("part");
    ok(&["train", "--corpus", &c, "--epochs", "1", "--seed", "4", "--out", part.to_str().unwrap()]);
    let resumed = tmp.path().join("resumed");
    ok(&[
        "train", "--corpus", &c, "--epochs", "2", "--seed", "4", "--resume",
        part.join("checkpoint.json").to_str().unwrap(), "--out", resumed.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(full.join("checkpoint.json")).unwrap(),
        std::fs::read(resumed.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn rerun_refuses_rerun_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("gen");
    gen_corpus(&dir, 10, 9);
    let manifest = dir.join("manifest.json");

    // forge a manifest whose recorded command is itself a rerun
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    v["command"] = "rerun".into();
    v["argv"] = serde_json::json!(["rerun", "--manifest", "x"]);
    let forged = tmp.path().join("forged.json");
    std::fs::write(&forged, serde_json::to_string(&v).unwrap()).unwrap();

    let err = fails(&["rerun", "--manifest", forged.to_str().unwrap()]);
    assert!(err.contains("refusing"), "unexpected error: {err}");

    // the genuine manifest replays fine
    ok(&["rerun", "--manifest", manifest.to_str().unwrap()]);
}
