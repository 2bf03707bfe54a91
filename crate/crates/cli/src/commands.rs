use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use ledgerscope::ablation::{evaluate_model, fit, run_ablation, score_all, AblationInput};
use ledgerscope::domain::AnnotatedPost;
use ledgerscope::embedding::EmbeddingTable;
use ledgerscope::features::{FeaturizedSplit, Featurizer, LabeledBundles, Modality, BRANCH_DIMS};
use ledgerscope::fusion::{FusionConfig, FusionModel};
use ledgerscope::ingest::{
    clean_corpus, load_corpus, split_corpus, split_corpus_stratified, write_corpus, DatasetSplit, IngestError,
};
use ledgerscope::record::parse_post_line;
use ledgerscope::synth::{generate_corpus, write_images, SynthConfig};
use ledgerscope::triage::{QueueEntry, Snippet, TriageQueue};
use ledgerscope_service::{AppState, ServiceConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, FeatureArgs, FeatureSource, HeadOverrides, Invalid};

pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "validation.jsonl", "test.jsonl"];
pub const SPLIT_MANIFEST: &str = "split.json";
pub const SIDECAR_FILES: [&str; 3] = ["hashtag_embeddings.tsv", "comment_embeddings.tsv", "image_embeddings.tsv"];

/// Written next to the split files so later steps find the images.
#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    source: String,
    image_root: PathBuf,
    seed: u64,
    stratified: bool,
    test_size: usize,
    val_fraction: f64,
    sizes: [usize; 3],
    positives: [usize; 3],
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Malformed corpus lines are bad input; everything else is a runtime fault.
fn ingest_err(e: IngestError) -> anyhow::Error {
    match e {
        IngestError::Io { .. } => anyhow::Error::new(e),
        other => invalid(other.to_string()),
    }
}

fn load(path: &Path) -> Result<Vec<AnnotatedPost>> {
    load_corpus(path).map(|m| m.records).map_err(ingest_err).with_context(|| format!("loading {}", path.display()))
}

/// Split files that do not exist count as empty.
fn load_or_empty(path: &Path) -> Result<Vec<AnnotatedPost>> {
    if path.exists() {
        load(path)
    } else {
        log::warn!("{} not found; treating it as empty", path.display());
        Ok(Vec::new())
    }
}

/// `--image-root`, else the root recorded by `split`, else the file's directory.
fn image_root_for(cli: &Cli, file: &Path) -> PathBuf {
    if let Some(root) = &cli.image_root {
        return root.clone();
    }
    let dir = parent_dir(file);
    let manifest = dir.join(SPLIT_MANIFEST);
    if let Ok(text) = fs::read_to_string(&manifest) {
        match serde_json::from_str::<SplitManifest>(&text) {
            Ok(m) => return m.image_root,
            Err(e) => log::warn!("ignoring {}: {e}", manifest.display()),
        }
    }
    dir
}

fn featurizer(cli: &Cli, args: &FeatureArgs, data_file: &Path) -> Result<Featurizer> {
    let base = match args.features {
        FeatureSource::Baseline => Featurizer::baseline(),
        FeatureSource::Sidecar => {
            let [h, c, i] = SIDECAR_FILES.map(|f| args.sidecar_dir.join(f));
            Featurizer::from_sidecars(&h, &c, &i)
                .with_context(|| format!("loading sidecars from {}", args.sidecar_dir.display()))?
        }
    };
    Ok(base.with_image_root(image_root_for(cli, data_file)).with_video_policy(cli.video_policy.into()))
}

fn parse_modalities(names: &[String]) -> Result<Vec<Modality>> {
    let mut out = Vec::new();
    for name in names {
        let m = Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == name.trim())
            .ok_or_else(|| invalid(format!("unknown modality `{name}` (hashtags, comments, images)")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(invalid("at least one modality is required"));
    }
    Ok(out)
}

fn head_config(cli: &Cli, path: Option<&Path>, o: &HeadOverrides, modalities: Option<&[String]>) -> Result<FusionConfig> {
    let mut cfg: FusionConfig = read_json(path)?;
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = o.dropout {
        cfg.dropout_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.threshold {
        cfg.threshold = v;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(names) = modalities {
        cfg = cfg.with_modalities(&parse_modalities(names)?);
    }
    cfg.validate().map_err(|e| invalid(format!("head config: {e}")))?;
    log::info!("head config: {}", serde_json::to_string(&cfg)?);
    Ok(cfg)
}

fn featurize_set(f: &Featurizer, posts: &[AnnotatedPost], what: &str) -> Result<LabeledBundles> {
    LabeledBundles::from_posts(f, posts).with_context(|| format!("featurizing {what}"))
}

pub fn run(cli: &Cli) -> Result<()> {
    log::debug!("{cli:?}");
    match &cli.command {
        Command::Synth { config, out } => synth(cli, config.as_deref(), out),
        Command::Ingest { input, clean, report, out } => ingest(input, *clean, report, out.as_deref()),
        Command::Split { input, test, val, out_dir, stratify } => split(cli, input, *test, *val, out_dir, *stratify),
        Command::Featurize { input, out_dir } => featurize(cli, input, out_dir),
        Command::Train { splits, features, config, modalities, overrides, out, report } => {
            let cfg = head_config(cli, config.as_deref(), overrides, modalities.as_deref())?;
            train(cli, splits, features, &cfg, out, report.as_deref())
        }
        Command::Eval { model, test, features, report, roc } => eval(cli, model, test, features, report, roc.as_deref()),
        Command::Ablate { splits, features, config, overrides, out } => {
            let cfg = head_config(cli, config.as_deref(), overrides, None)?;
            ablate(cli, splits, features, &cfg, out)
        }
        Command::Rank { model, input, features, out } => rank(cli, model, input, features, out),
        Command::Serve { port, host, queue, model, data_dir } => {
            serve(cli, host, *port, queue, model.clone(), data_dir.clone())
        }
    }
}

fn synth(cli: &Cli, config: Option<&Path>, out: &Path) -> Result<()> {
    let mut cfg: SynthConfig = read_json(config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| invalid(format!("synth config: {e}")))?;
    log::info!("synth config: {}", serde_json::to_string(&cfg)?);
    let corpus = generate_corpus(&cfg)?;
    create_parent(out)?;
    write_corpus(out, &corpus.records)?;
    let images = write_images(&corpus, &parent_dir(out)).context("writing images")?;
    log::info!("wrote {} posts ({} positive) and {images} images", corpus.len(), corpus.positives());
    Ok(())
}

fn ingest(input: &Path, clean: bool, report: &Path, out: Option<&Path>) -> Result<()> {
    let manifest = load_corpus(input).map_err(ingest_err).with_context(|| format!("loading {}", input.display()))?;
    let (kept, rep) = if clean {
        clean_corpus(&manifest)
    } else {
        (manifest, Default::default())
    };
    log::info!(
        "{} posts kept; removed {} unavailable and {} copies of {} repeated posts",
        kept.len(),
        rep.removed_unavailable,
        rep.removed_copies,
        rep.duplicated_posts
    );
    #[derive(Serialize)]
    struct Report {
        kept: usize,
        positives: usize,
        #[serde(flatten)]
        clean: ledgerscope::ingest::CleanReport,
    }
    write_json(report, &Report { kept: kept.len(), positives: kept.positives(), clean: rep })?;
    if let Some(out) = out {
        create_parent(out)?;
        write_corpus(out, &kept.records)?;
    }
    Ok(())
}

fn split(cli: &Cli, input: &Path, test: usize, val: f64, out_dir: &Path, stratify: bool) -> Result<()> {
    let corpus = load_corpus(input).map_err(ingest_err).with_context(|| format!("loading {}", input.display()))?;
    let seed = cli.seed.unwrap_or(0);
    let result = if stratify {
        split_corpus_stratified(&corpus, test, val, seed)
    } else {
        split_corpus(&corpus, test, val, seed)
    };
    let parts = result.map_err(ingest_err)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let sets = [&parts.train, &parts.validation, &parts.test];
    for (name, set) in SPLIT_FILES.iter().zip(sets) {
        write_corpus(&out_dir.join(name), set)?;
    }
    let image_root = cli.image_root.clone().unwrap_or_else(|| parent_dir(input));
    let image_root = fs::canonicalize(&image_root).unwrap_or(image_root);
    let count = |s: &[AnnotatedPost]| s.iter().filter(|p| ledgerscope::domain::is_tax_evasion_positive(p)).count();
    let manifest = SplitManifest {
        source: input.display().to_string(),
        image_root,
        seed,
        stratified: stratify,
        test_size: test,
        val_fraction: val,
        sizes: sets.map(|s| s.len()),
        positives: sets.map(|s| count(s)),
    };
    log::info!("split sizes (train, validation, test): {:?}", manifest.sizes);
    write_json(&out_dir.join(SPLIT_MANIFEST), &manifest)
}

fn featurize(cli: &Cli, input: &Path, out_dir: &Path) -> Result<()> {
    let posts = load(input)?;
    let f = Featurizer::baseline()
        .with_image_root(image_root_for(cli, input))
        .with_video_policy(cli.video_policy.into());
    let bundles = f.featurize_all(posts.iter().map(|p| &p.post))?;
    let mut tables = BRANCH_DIMS.map(EmbeddingTable::new);
    for (post, b) in posts.iter().zip(bundles) {
        let id = &post.post.post_id;
        tables[0].insert(id.clone(), b.hashtag_vec.values);
        tables[1].insert(id.clone(), b.comment_vec.values);
        tables[2].insert(id.clone(), b.image_vec.values);
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (table, name) in tables.iter().zip(SIDECAR_FILES) {
        table.save(&out_dir.join(name))?;
    }
    log::info!("wrote embeddings for {} posts to {}", posts.len(), out_dir.display());
    Ok(())
}

fn load_split(cli: &Cli, splits: &Path, features: &FeatureArgs, with_test: bool) -> Result<FeaturizedSplit> {
    let [train, validation, test] = SPLIT_FILES.map(|f| splits.join(f));
    let f = featurizer(cli, features, &train)?;
    let split = DatasetSplit {
        train: load_or_empty(&train)?,
        validation: load_or_empty(&validation)?,
        test: if with_test { load_or_empty(&test)? } else { Vec::new() },
        seed: cli.seed.unwrap_or(0),
    };
    Ok(FeaturizedSplit {
        train: featurize_set(&f, &split.train, "train split")?,
        validation: featurize_set(&f, &split.validation, "validation split")?,
        test: featurize_set(&f, &split.test, "test split")?,
    })
}

fn train(
    cli: &Cli,
    splits: &Path,
    features: &FeatureArgs,
    cfg: &FusionConfig,
    out: &Path,
    report: Option<&Path>,
) -> Result<()> {
    let data = load_split(cli, splits, features, false)?;
    let (model, tr) = fit(&data, cfg)?;
    if let Some(last) = tr.epochs.last() {
        log::info!(
            "epoch {}: train loss {:.4}, validation loss {:.4}, validation F1 {:.4}",
            last.epoch,
            last.train_loss,
            last.validation_loss,
            last.validation_f1
        );
    }
    create_parent(out)?;
    model.save(out)?;
    if let Some(path) = report {
        write_json(path, &tr)?;
    }
    Ok(())
}

fn eval(cli: &Cli, model: &Path, test: &Path, features: &FeatureArgs, report: &Path, roc: Option<&Path>) -> Result<()> {
    let model = FusionModel::load(model).with_context(|| format!("loading {}", model.display()))?;
    let f = featurizer(cli, features, test)?;
    let set = featurize_set(&f, &load(test)?, "test set")?;
    let (rep, curve) = evaluate_model(&model, &set)?;
    log::info!("precision {:.4} recall {:.4} F1 {:.4} AUC {:.4}", rep.precision, rep.recall, rep.f1, rep.auc);
    write_json(report, &rep)?;
    if let Some(path) = roc {
        create_parent(path)?;
        fs::write(path, curve.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn ablate(cli: &Cli, splits: &Path, features: &FeatureArgs, cfg: &FusionConfig, out: &Path) -> Result<()> {
    let data = load_split(cli, splits, features, true)?;
    let report = run_ablation(&data, cfg)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<12} {:>9} {:>7} {:>7} {:>7}", "input", "precision", "recall", "f1", "auc")?;
    for input in AblationInput::ALL {
        if let Some(row) = report.row(input) {
            let r = &row.report;
            let name = serde_json::to_value(input)?.as_str().unwrap_or_default().to_string();
            writeln!(stdout, "{name:<12} {:>9.4} {:>7.4} {:>7.4} {:>7.4}", r.precision, r.recall, r.f1, r.auc)?;
        }
    }
    write_json(out, &report)
}

fn read_posts(path: &Path) -> Result<Vec<ledgerscope::domain::PostRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut posts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_post_line(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        posts.push(parsed.post);
    }
    Ok(posts)
}

fn rank(cli: &Cli, model: &Path, input: &Path, features: &FeatureArgs, out: &Path) -> Result<()> {
    let model = FusionModel::load(model).with_context(|| format!("loading {}", model.display()))?;
    let f = featurizer(cli, features, input)?;
    let posts = read_posts(input)?;
    let set = LabeledBundles {
        post_ids: posts.iter().map(|p| p.post_id.clone()).collect(),
        bundles: f.featurize_all(&posts)?,
        labels: vec![false; posts.len()],
    };
    let scores = score_all(&model, &set)?;
    let entries = posts
        .iter()
        .zip(scores)
        .map(|(post, (score, _))| QueueEntry {
            flagged: score >= model.config.threshold,
            snippet: Snippet::of(post),
            ..QueueEntry::pending(post.post_id.clone(), score)
        })
        .collect();
    let queue = TriageQueue::from_entries(entries);
    create_parent(out)?;
    queue.save(out)?;
    let flagged = queue.entries().iter().filter(|e| e.flagged).count();
    log::info!("ranked {} posts, {flagged} flagged", queue.len());
    Ok(())
}

fn serve(
    cli: &Cli,
    host: &str,
    port: u16,
    queue_path: &Path,
    model: Option<PathBuf>,
    data_dir: Option<PathBuf>,
) -> Result<()> {
    let queue = TriageQueue::load(queue_path).with_context(|| format!("loading {}", queue_path.display()))?;
    let model_path = model.or_else(|| std::env::var_os("LEDGER_MODEL").map(PathBuf::from));
    let model = match &model_path {
        Some(p) => Some(FusionModel::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => {
            log::warn!("no model given; /api/score will answer 503");
            None
        }
    };
    let data_dir = data_dir
        .or_else(|| std::env::var_os("LEDGER_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ledger-data"));
    let token = std::env::var("LEDGER_TOKEN").ok().filter(|t| !t.is_empty());
    if token.is_none() {
        log::warn!("LEDGER_TOKEN is not set; the API is open");
    }
    let featurizer = Featurizer::baseline()
        .with_image_root(image_root_for(cli, queue_path))
        .with_video_policy(cli.video_policy.into());
    log::info!(
        "serving queue {} ({} entries), model {:?}, data dir {}",
        queue_path.display(),
        queue.len(),
        model_path,
        data_dir.display()
    );
    let state = Arc::new(AppState::open(ServiceConfig { data_dir, token, featurizer }, queue, model)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        // Scripts and tests read the bound port from this line.
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        ledgerscope_service::serve(listener, state).await?;
        Ok::<_, anyhow::Error>(())
    })
}
