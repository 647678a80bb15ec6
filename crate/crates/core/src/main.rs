use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lipsync::audio::{DeltaMode, LimiterConfig};
use lipsync::augment::{augment_corpus, DEFAULT_DURATION_THRESHOLD};
use lipsync::corpus::{
    oracle_dataset, oracle_visemes, recording_features, select_batches, synth_test_corpus, CorpusManifest,
    PhoneTable, SynthConfig,
};
use lipsync::dataset::{read_dataset, write_dataset, TrainingPair};
use lipsync::model::eval::score_tracks;
use lipsync::model::train::write_metrics_csv;
use lipsync::model::{evaluate_frame_accuracy, train, Model, TrainConfig};
use lipsync::pipeline::{sync_file, SessionConfig};
use lipsync::viseme::{TrackFile, VisemeTrack24};
use lipsync::Error;

#[derive(Parser, Debug)]
#[command(name = "lipsync", version, about = "Speech to 24 fps viseme tracks, live or offline")]
struct Cli {
    /// JSON config with optional "train", "session" and "synth" sections; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic test corpus (wav, phn, manifest.json, references.json).
    Synth(SynthArgs),
    /// Pick disjoint, score-balanced batches of recordings for labeling.
    SelectBatches(SelectArgs),
    /// Warp sentence-mates onto labeled references and write a training dataset.
    Augment(AugmentArgs),
    /// Train a model on a dataset directory or an oracle-labeled manifest.
    Train(TrainArgs),
    /// Convert a wav file into a viseme track (JSON, or CSV for a .csv output).
    Sync(SyncArgs),
    /// Post-filter 24 fps frame accuracy of a model, or of track files.
    Eval(EvalArgs),
    /// Run the websocket service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct LimiterArgs {
    #[arg(long)]
    boost_db: Option<f64>,
    #[arg(long)]
    ceiling_db: Option<f64>,
    #[arg(long)]
    attack_ms: Option<f64>,
    #[arg(long)]
    release_ms: Option<f64>,
}

impl LimiterArgs {
    fn apply(&self, l: &mut LimiterConfig) {
        if let Some(v) = self.boost_db {
            l.boost_db = v;
        }
        if let Some(v) = self.ceiling_db {
            l.ceiling_db = v;
        }
        if let Some(v) = self.attack_ms {
            l.attack_ms = v;
        }
        if let Some(v) = self.release_ms {
            l.release_ms = v;
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 6)]
    batches: usize,
    #[arg(long, default_value_t = 50)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the selection here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSON array of labeled reference ids ("speaker/sentence").
    #[arg(long)]
    references: PathBuf,
    /// Directory of 24 fps track files `<speaker>/<sentence>.json`. Without it the
    /// references are labeled from their phone transcriptions.
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DURATION_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    limiter: LimiterArgs,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset directory written by `augment`.
    #[arg(long, conflicts_with = "manifest")]
    dataset: Option<PathBuf>,
    /// Corpus manifest; every recording is labeled from its phone transcription.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, conflicts_with = "val_manifest")]
    val_dataset: Option<PathBuf>,
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    shift: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Stop once validation accuracy reaches this percentage.
    #[arg(long)]
    target_accuracy: Option<f64>,
    /// Zero shift and past-only deltas.
    #[arg(long)]
    no_lookahead: bool,
    #[command(flatten)]
    limiter: LimiterArgs,
}

#[derive(Args, Debug)]
struct SyncArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    limiter: LimiterArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Predicted track file; pairs with --truth in order. Repeatable.
    #[arg(long)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    truth: Vec<PathBuf>,
    #[command(flatten)]
    limiter: LimiterArgs,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    audio_delay_ms: Option<f64>,
    #[command(flatten)]
    limiter: LimiterArgs,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    train: TrainConfig,
    session: SessionConfig,
    synth: SynthConfig,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn load_pairs(data: &DataArgs, limiter: &LimiterConfig) -> Result<Vec<TrainingPair>, Error> {
    match (&data.dataset, &data.manifest) {
        (Some(dir), _) => Ok(read_dataset(dir)?.1),
        (None, Some(m)) => oracle_dataset(&CorpusManifest::read_json(m)?, &PhoneTable::timit(), limiter),
        (None, None) => Err(Error::Config("pass --dataset or --manifest".into())),
    }
}

fn print_json(v: &impl Serialize) -> Result<(), Error> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => {
            if let Some(n) = a.sentences {
                cfg.synth.n_sentences = n;
            }
            if let Some(s) = a.seed {
                cfg.synth.seed = s;
            }
            let mut corpus = synth_test_corpus(&cfg.synth)?;
            corpus.write_to_dir(&a.out)?;
            print_json(&json!({
                "recordings": corpus.manifest.recordings.len(),
                "sentences": cfg.synth.n_sentences,
                "duration_s": corpus.total_duration_s(),
                "manifest": a.out.join("manifest.json"),
                "references": a.out.join("references.json"),
            }))
        }
        Command::SelectBatches(a) => {
            let manifest = CorpusManifest::read_json(&a.manifest)?;
            let sel = select_batches(&manifest, a.batches, a.size, a.seed)?;
            match a.out {
                Some(p) => {
                    std::fs::write(&p, serde_json::to_vec_pretty(&sel)?).map_err(|e| Error::io(&p, e))?;
                    let means: Vec<f64> = sel.batches.iter().map(|b| b.mean_score).collect();
                    print_json(&json!({ "batches": sel.batches.len(), "mean_scores": means, "validation": sel.validation.len() }))
                }
                None => print_json(&sel),
            }
        }
        Command::Augment(a) => {
            a.limiter.apply(&mut cfg.session.limiter);
            let limiter = cfg.session.limiter;
            let manifest = CorpusManifest::read_json(&a.manifest)?;
            let text = std::fs::read_to_string(&a.references).map_err(|e| Error::io(&a.references, e))?;
            let ids: Vec<String> = serde_json::from_str(&text)?;
            let table = PhoneTable::timit();
            let labeled = ids
                .into_iter()
                .map(|id| {
                    let rec = manifest
                        .find(&id)
                        .ok_or_else(|| Error::Corpus(format!("reference {id} is not in the manifest")))?;
                    let track = match &a.tracks {
                        Some(dir) => {
                            let p = dir.join(format!("{}/{}.json", rec.speaker_id, rec.sentence_id));
                            TrackFile::read_json(p)?.into_track24()?
                        }
                        None => oracle_visemes(&manifest.read_segments(rec)?, &table)?,
                    };
                    Ok((id, track))
                })
                .collect::<Result<Vec<(String, VisemeTrack24)>, Error>>()?;
            let out = augment_corpus(&manifest, &labeled, a.threshold, |r| {
                recording_features(&manifest.read_audio(r)?, &limiter)
            })?;
            let index = write_dataset(&a.out, &out.pairs)?;
            print_json(&json!({
                "references": labeled.len(),
                "pairs": index.pairs.len(),
                "factor": out.factor(),
                "rejected": out.references.iter().map(|r| r.rejected.len()).sum::<usize>(),
                "dataset": a.out,
            }))
        }
        Command::Train(a) => {
            a.limiter.apply(&mut cfg.session.limiter);
            let t = &mut cfg.train;
            macro_rules! over {
                ($($f:ident => $field:ident),*) => { $(if let Some(v) = a.$f { t.$field = v; })* };
            }
            over!(epochs => epochs, seed => seed, hidden => hidden_dim, shift => shift,
                batch_size => batch_size, learning_rate => learning_rate, dropout => dropout);
            if a.target_accuracy.is_some() {
                t.target_accuracy = a.target_accuracy;
            }
            if a.no_lookahead {
                t.shift = 0;
                t.delta_mode = DeltaMode::Causal;
            }
            let limiter = cfg.session.limiter;
            let pairs = load_pairs(&a.data, &limiter)?;
            let val = if a.val_dataset.is_none() && a.val_manifest.is_none() {
                Vec::new()
            } else {
                let v = DataArgs {
                    dataset: a.val_dataset.clone(),
                    manifest: a.val_manifest.clone(),
                };
                load_pairs(&v, &limiter)?
            };
            let outcome = train(&pairs, &val, &cfg.train)?;
            outcome.model.save(&a.out)?;
            if let Some(m) = &a.metrics {
                write_metrics_csv(m, &outcome.metrics)?;
            }
            let last = outcome.metrics.last();
            print_json(&json!({
                "model": a.out,
                "epochs_run": outcome.metrics.len(),
                "best_epoch": outcome.best_epoch,
                "initial_loss": outcome.initial_loss,
                "final_train_loss": last.map(|m| m.train_loss),
                "best_val_frame_acc": outcome.metrics.get(outcome.best_epoch.wrapping_sub(1)).and_then(|m| m.val_frame_acc),
            }))
        }
        Command::Sync(a) => {
            a.limiter.apply(&mut cfg.session.limiter);
            let model_path = a.model.unwrap_or(cfg.session.model_path);
            let model = Arc::new(Model::load(&model_path)?);
            let track = sync_file(model, &a.wav, &a.out, &cfg.session.limiter)?;
            print_json(&json!({ "frames": track.len(), "out": a.out }))
        }
        Command::Eval(a) => {
            a.limiter.apply(&mut cfg.session.limiter);
            if !a.pred.is_empty() || !a.truth.is_empty() {
                if a.pred.len() != a.truth.len() {
                    return Err(Error::Config("--pred and --truth must be given the same number of times".into()));
                }
                let read = |p: &PathBuf| TrackFile::read_json(p)?.into_track24();
                let preds = a.pred.iter().map(read).collect::<Result<Vec<_>, _>>()?;
                let truths = a.truth.iter().map(read).collect::<Result<Vec<_>, _>>()?;
                return print_json(&score_tracks(preds.iter().zip(&truths)));
            }
            let model = Model::load(a.model.unwrap_or(cfg.session.model_path))?;
            let pairs = load_pairs(&a.data, &cfg.session.limiter)?;
            print_json(&evaluate_frame_accuracy(&model, &pairs)?)
        }
        Command::Serve(a) => {
            a.limiter.apply(&mut cfg.session.limiter);
            let s = &mut cfg.session;
            if let Some(m) = a.model {
                s.model_path = m;
            }
            if let Some(b) = a.bind {
                s.bind = b;
            }
            if let Some(p) = a.port {
                s.port = p;
            }
            if let Some(d) = a.audio_delay_ms {
                s.audio_delay_ms = d;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(lipsync::service::serve(s))
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_json("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    let level = if cli.quiet { tracing::Level::WARN } else { tracing::Level::INFO };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
