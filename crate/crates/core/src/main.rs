//! `longcap` command-line entry point.
//!
//! One subcommand per pipeline stage: corpus generation, augmentation
//! preview, positional-table stretching, training, retrieval evaluation,
//! probe battery, attention profiling, figure generation, and manifest
//! replay. Every command writes its artifacts plus a `manifest.json` into
//! the output directory; `rerun` replays a manifest verbatim.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use longcap::augmentation::{build_training_pair, AugmentConfig, Probe, SamplingStrategy};
use longcap::corpus::{generate_corpus, Corpus, SummaryMode, SyntheticCorpusSpec};
use longcap::evaluation::{attention_profile, eval_retrieval, run_probe_suite};
use longcap::manifest::RunManifest;
use longcap::objective::LossWeighting;
use longcap::pos_embed::stretch;
use longcap::report::{attention_chart_svg, parse_probe_csv, probe_chart_svg};
use longcap::text_pipeline::{render_layout, split_sentences, PaddingMode};
use longcap::training::{TrainConfig, TrainMode, Trainer};
use longcap::Real;

#[derive(Parser)]
#[command(name = "longcap", version, about = "Long-caption dual-encoder training and bias diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic summary-first corpus.
    Gen(GenArgs),
    /// Preview augmented training pairs for a corpus.
    Augment(AugmentArgs),
    /// Stretch a randomly initialized positional table and dump it.
    Stretch(StretchArgs),
    /// Train a dual encoder.
    Train(TrainArgs),
    /// Plain retrieval evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Run the sentence-probe battery.
    Probe(ProbeArgs),
    /// Emit the output-token attention profile.
    Attn(AttnArgs),
    /// Render SVG figures from probe/attention artifacts.
    Report(ReportArgs),
    /// Replay a previous run from its manifest.
    Rerun(RerunArgs),
}

fn default_out() -> PathBuf {
    std::env::var_os("LONGCAP_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Args)]
struct GenArgs {
    /// Number of records.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Concepts per image.
    #[arg(long, default_value_t = 3)]
    concepts: usize,
    /// Minimum sentences per caption (summary included).
    #[arg(long, default_value_t = 4)]
    sentences_min: usize,
    /// Maximum sentences per caption.
    #[arg(long, default_value_t = 6)]
    sentences_max: usize,
    /// Shorthand: set both sentence bounds.
    #[arg(long)]
    sentences: Option<usize>,
    /// Concept lexicon size (also the image dimension).
    #[arg(long, default_value_t = 24)]
    lexicon: usize,
    #[arg(long, value_parser = parse_summary_mode, default_value = "union")]
    summary_mode: SummaryMode,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

fn parse_summary_mode(s: &str) -> Result<SummaryMode, String> {
    match s {
        "union" => Ok(SummaryMode::Union),
        "paraphrase_lite" => Ok(SummaryMode::ParaphraseLite),
        other => Err(format!("unknown summary mode `{other}`")),
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// longclip | debias | ordered | independent | keep_n | shuffle | prefix
    #[arg(long, default_value = "debias")]
    strategy: String,
    /// Keep probability for the independent strategy.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Sample size for keep_n.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// none | random | pre_sot | fixed:<n>
    #[arg(long, default_value = "random")]
    padding: String,
    #[arg(long, default_value_t = 48)]
    l_ctx: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How many records to render.
    #[arg(long, default_value_t = 4)]
    preview: usize,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

#[derive(Args)]
struct StretchArgs {
    #[arg(long, default_value_t = 77)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    freeze: usize,
    #[arg(long, default_value_t = 4)]
    factor: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// longclip_baseline | debias | custom
    #[arg(long, value_parser = parse_mode, default_value = "debias")]
    mode: TrainMode,
    /// desk | paper
    #[arg(long, default_value = "desk")]
    preset: String,
    /// JSON file holding a full TrainConfig (applied over the preset).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Short-caption loss weight (debias/custom modes).
    #[arg(long)]
    lambda_short: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from a checkpoint instead of initializing.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    match s {
        "longclip_baseline" => Ok(TrainMode::LongclipBaseline),
        "debias" => Ok(TrainMode::Debias),
        "custom" => Ok(TrainMode::Custom),
        other => Err(format!("unknown mode `{other}`")),
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated probe specs, e.g. keep,move:1:4,remove_first,pad:3
    #[arg(long, default_value = "keep,move:1:4,remove_first,pad:3")]
    probes: String,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

#[derive(Args)]
struct AttnArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Probe CSV emitted by `probe`.
    #[arg(long)]
    probes: Option<PathBuf>,
    /// Attention profile JSON emitted by `attn`.
    #[arg(long)]
    attn: Option<PathBuf>,
    #[arg(long, default_value_os_t = default_out())]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// Path to a manifest.json from a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = run(&argv) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Dispatch one command; `rerun` re-enters here with the recorded argv.
fn run(argv: &[String]) -> Result<()> {
    let cli = match Cli::try_parse_from(std::iter::once("longcap".to_string()).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(argv, a),
        Command::Augment(a) => cmd_augment(argv, a),
        Command::Stretch(a) => cmd_stretch(argv, a),
        Command::Train(a) => cmd_train(argv, a),
        Command::Eval(a) => cmd_eval(argv, a),
        Command::Probe(a) => cmd_probe(argv, a),
        Command::Attn(a) => cmd_attn(argv, a),
        Command::Report(a) => cmd_report(argv, a),
        Command::Rerun(a) => cmd_rerun(a),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_gen(argv: &[String], a: GenArgs) -> Result<()> {
    let (smin, smax) = match a.sentences {
        Some(s) => (s, s),
        None => (a.sentences_min, a.sentences_max),
    };
    let spec = SyntheticCorpusSpec {
        n_samples: a.n,
        concepts_per_image: a.concepts,
        sentences_min: smin,
        sentences_max: smax,
        vocab_size: a.lexicon,
        summary_mode: a.summary_mode,
        image_noise_sigma: a.noise,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let corpus = generate_corpus(&spec, &mut rng)?;
    ensure_out(&a.out)?;
    let path = a.out.join("corpus.jsonl");
    corpus.save(&path)?;
    let mut m = RunManifest::new("gen", argv.to_vec(), Some(a.seed), serde_json::to_value(&spec)?);
    m.record_output("corpus.jsonl", &path)?;
    m.save(&a.out)?;
    println!("wrote {} records to {}", corpus.records.len(), path.display());
    Ok(())
}

fn parse_strategy(name: &str, p: f64, n: usize) -> Result<SamplingStrategy> {
    Ok(match name {
        "longclip" => SamplingStrategy::Summary,
        "debias" | "random" => SamplingStrategy::Random,
        "ordered" => SamplingStrategy::Ordered,
        "independent" => SamplingStrategy::Independent(p),
        "keep_n" => SamplingStrategy::KeepN(n),
        "shuffle" => SamplingStrategy::Shuffle,
        "prefix" => SamplingStrategy::Prefix,
        other => bail!("unknown strategy `{other}`"),
    })
}

fn parse_padding(s: &str) -> Result<PaddingMode> {
    Ok(match s {
        "none" => PaddingMode::None,
        "random" => PaddingMode::Random,
        "pre_sot" => PaddingMode::PreSot,
        other => match other.strip_prefix("fixed:") {
            Some(n) => PaddingMode::Fixed(n.parse().context("bad fixed pad count")?),
            None => bail!("unknown padding mode `{other}`"),
        },
    })
}

fn cmd_augment(argv: &[String], a: AugmentArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let vocab = corpus.vocabulary();
    let cfg = AugmentConfig {
        strategy: parse_strategy(&a.strategy, a.p, a.n)?,
        padding: parse_padding(&a.padding)?,
        l_ctx: a.l_ctx,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut preview = String::new();
    for r in corpus.records.iter().take(a.preview) {
        let caption = split_sentences(&r.caption)?;
        let pair = build_training_pair(&caption, r.image.clone(), &vocab, &mut rng, &cfg)?;
        preview.push_str(&format!(
            "record {}\n  caption: {}\n  long:  {}\n  short: {}\n",
            r.id,
            r.caption,
            render_layout(&pair.long_tokens, &vocab),
            render_layout(&pair.short_tokens, &vocab),
        ));
    }
    print!("{preview}");
    ensure_out(&a.out)?;
    let path = a.out.join("augment_preview.txt");
    std::fs::write(&path, &preview)?;
    let mut m = RunManifest::new(
        "augment",
        argv.to_vec(),
        Some(a.seed),
        serde_json::to_value(&cfg)?,
    );
    m.record_input("corpus", &a.corpus)?;
    m.record_output("augment_preview.txt", &path)?;
    m.save(&a.out)?;
    Ok(())
}

fn cmd_stretch(argv: &[String], a: StretchArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let base = Array2::<Real>::from_shape_fn((a.rows, a.dim), |_| {
        use rand_distr::Distribution;
        let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
        z * 0.01
    });
    let table = stretch(&base, a.freeze, a.factor)?;
    ensure_out(&a.out)?;
    let path = a.out.join("positional_table.json");
    std::fs::write(&path, serde_json::to_string(&table)?)?;
    let mut m = RunManifest::new(
        "stretch",
        argv.to_vec(),
        Some(a.seed),
        serde_json::json!({
            "rows": a.rows, "dim": a.dim, "freeze": a.freeze, "factor": a.factor,
            "stretched_rows": table.len(),
        }),
    );
    m.record_output("positional_table.json", &path)?;
    m.save(&a.out)?;
    println!(
        "stretched {} -> {} rows (freeze {})",
        a.rows,
        table.len(),
        a.freeze
    );
    Ok(())
}

fn cmd_train(argv: &[String], a: TrainArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let mut cfg = match a.preset.as_str() {
        "desk" => TrainConfig::desk_default(),
        "paper" => TrainConfig::paper_faithful(),
        other => bail!("unknown preset `{other}`"),
    };
    if let Some(path) = &a.config {
        let body = std::fs::read_to_string(path)?;
        cfg = serde_json::from_str(&body).context("parsing --config")?;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.warmup {
        cfg.warmup_iters = v;
    }
    if let Some(v) = a.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = a.lambda_short {
        cfg.loss.weighting = LossWeighting::Weighted { lambda_short: v };
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }

    let mut trainer = match &a.resume {
        Some(ck) => {
            let mut t = Trainer::load(ck, &corpus)?;
            // a resumed run keeps its recorded config except for the epoch
            // target, which the flag may extend
            if let Some(v) = a.epochs {
                t.cfg.epochs = v;
            }
            t
        }
        None => Trainer::new(cfg, &corpus, a.mode)?,
    };
    trainer.run(&corpus)?;

    ensure_out(&a.out)?;
    let ck_path = a.out.join("checkpoint.json");
    trainer.save(&ck_path)?;
    let metrics_path = a.out.join("metrics.jsonl");
    let mut buf = Vec::new();
    trainer.write_metrics(&mut buf)?;
    std::fs::write(&metrics_path, buf)?;

    let mut m = RunManifest::new(
        "train",
        argv.to_vec(),
        Some(trainer.cfg.seed),
        serde_json::to_value(&trainer.cfg)?,
    );
    m.record_input("corpus", &a.corpus)?;
    if let Some(ck) = &a.resume {
        m.record_input("resume", ck)?;
    }
    m.record_output("checkpoint.json", &ck_path)?;
    m.record_output("metrics.jsonl", &metrics_path)?;
    m.save(&a.out)?;
    let last = trainer.metrics.last();
    println!(
        "trained {} steps; final loss {}",
        trainer.step,
        last.map(|m| m.loss_total.to_string()).unwrap_or_default()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<Trainer> {
    Ok(Trainer::load_unchecked(path)?)
}

fn gallery_features(t: &Trainer, corpus: &Corpus) -> Result<(Array2<Real>, Array2<Real>)> {
    let n = corpus.records.len();
    let mut images = Array2::<Real>::zeros((n, corpus.image_dim()));
    for (i, r) in corpus.records.iter().enumerate() {
        images
            .row_mut(i)
            .assign(&ndarray::Array1::from_vec(r.image.clone()));
    }
    let image_feats = t.encoder.forward_image(&images)?.features;
    let l_ctx = t.encoder.cfg.text.l_ctx;
    let mut text_feats = Array2::<Real>::zeros((n, t.encoder.cfg.text.output_dim));
    for (i, r) in corpus.records.iter().enumerate() {
        let cap = split_sentences(&r.caption)?;
        let seq = longcap::text_pipeline::tokenize(&cap, &t.vocab, l_ctx);
        let (f, _) = t.encoder.encode_text(&seq, false)?;
        text_feats.row_mut(i).assign(&f);
    }
    Ok((text_feats, image_feats))
}

fn cmd_eval(argv: &[String], a: EvalArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let trainer = load_model(&a.checkpoint)?;
    let (text, image) = gallery_features(&trainer, &corpus)?;
    let result = eval_retrieval(&text, &image, "keep")?;
    ensure_out(&a.out)?;
    let path = a.out.join("retrieval.json");
    std::fs::write(&path, serde_json::to_string_pretty(&result)? + "\n")?;
    let mut m = RunManifest::new("eval", argv.to_vec(), None, serde_json::Value::Null);
    m.record_input("corpus", &a.corpus)?;
    m.record_input("checkpoint", &a.checkpoint)?;
    m.record_output("retrieval.json", &path)?;
    m.save(&a.out)?;
    println!(
        "recall@1 t2i {:.4} i2t {:.4} over {} queries",
        result.recall_at_1_t2i, result.recall_at_1_i2t, result.n_queries
    );
    Ok(())
}

fn cmd_probe(argv: &[String], a: ProbeArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let trainer = load_model(&a.checkpoint)?;
    let probes: Vec<Probe> = a
        .probes
        .split(',')
        .map(|s| Probe::parse(s.trim()))
        .collect::<Result<_, _>>()?;
    let table = run_probe_suite(&trainer.encoder, &trainer.vocab, &corpus, &probes)?;
    ensure_out(&a.out)?;
    let path = a.out.join("probes.csv");
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    std::fs::write(&path, buf)?;
    let mut m = RunManifest::new(
        "probe",
        argv.to_vec(),
        None,
        serde_json::json!({"probes": a.probes}),
    );
    m.record_input("corpus", &a.corpus)?;
    m.record_input("checkpoint", &a.checkpoint)?;
    m.record_output("probes.csv", &path)?;
    m.save(&a.out)?;
    for r in &table.rows {
        println!(
            "{:<14} t2i {:.4} ({:+.4})  i2t {:.4} ({:+.4})",
            r.probe, r.recall_at_1_t2i, r.delta_t2i, r.recall_at_1_i2t, r.delta_i2t
        );
    }
    Ok(())
}

fn cmd_attn(argv: &[String], a: AttnArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let trainer = load_model(&a.checkpoint)?;
    let captions: Vec<_> = corpus
        .records
        .iter()
        .map(|r| split_sentences(&r.caption))
        .collect::<Result<_, _>>()?;
    let profile = attention_profile(&trainer.encoder, &trainer.vocab, &captions)?;
    ensure_out(&a.out)?;
    let path = a.out.join("profile.json");
    std::fs::write(&path, serde_json::to_string_pretty(&profile)? + "\n")?;
    let mut m = RunManifest::new("attn", argv.to_vec(), None, serde_json::Value::Null);
    m.record_input("corpus", &a.corpus)?;
    m.record_input("checkpoint", &a.checkpoint)?;
    m.record_output("profile.json", &path)?;
    m.save(&a.out)?;
    println!(
        "profile over {} captions; flatness {:.6}; SOT post-softmax mean {:.4}",
        profile.n_captions, profile.flatness, profile.sot_post_softmax_mean
    );
    Ok(())
}

fn cmd_report(argv: &[String], a: ReportArgs) -> Result<()> {
    if a.probes.is_none() && a.attn.is_none() {
        bail!("report needs --probes and/or --attn");
    }
    ensure_out(&a.out)?;
    let mut m = RunManifest::new("report", argv.to_vec(), None, serde_json::Value::Null);
    if let Some(csv) = &a.probes {
        let table = parse_probe_csv(&std::fs::read_to_string(csv)?)?;
        let path = a.out.join("probe_deltas.svg");
        std::fs::write(&path, probe_chart_svg(&table))?;
        m.record_input("probes", csv)?;
        m.record_output("probe_deltas.svg", &path)?;
    }
    if let Some(json) = &a.attn {
        let profile = serde_json::from_str(&std::fs::read_to_string(json)?)?;
        let path = a.out.join("attention_profile.svg");
        std::fs::write(&path, attention_chart_svg(&profile))?;
        m.record_input("attn", json)?;
        m.record_output("attention_profile.svg", &path)?;
    }
    m.save(&a.out)?;
    Ok(())
}

fn cmd_rerun(a: RerunArgs) -> Result<()> {
    let m = RunManifest::load(&a.manifest)?;
    if m.argv.first().map(String::as_str) == Some("rerun") {
        bail!("refusing to replay a rerun manifest");
    }
    run(&m.argv)
}
