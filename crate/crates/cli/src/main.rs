use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use itemplan::augment::{augment_samples, training_pairs, AugmentMode, ConditionalGenerator};
use itemplan::content::{load_corpus, save_corpus};
use itemplan::eval::{
    analyze, evaluate_generations, load_generations, save_generations, SynonymTable,
};
use itemplan::experiment::{
    generate, run_pipeline, sub_seed, train_claims, train_model, ExperimentConfig, ModelKind,
};
use itemplan::mixed_lm::{
    finite_difference_check, load_checkpoint, save_checkpoint, tiny_config, DecodeMode, ItemMask,
    ModelConfig, TrainConfig,
};
use itemplan::preprocess::{
    preprocess_file, Abbreviations, ClaimClassifier, DefaultTagger, Resources,
};
use itemplan::synthetic;
use itemplan::{Error, Result};
use serde::Deserialize;

/// Content-item planning text generator.
#[derive(Parser)]
#[command(name = "itemplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build content-item samples from raw (title, reference) records.
    Preprocess(PreprocessArgs),
    /// Train the claim/fact classifier from labeled sentences.
    TrainClaims(TrainClaimsArgs),
    /// Train a concept-expansion or claim generator.
    TrainGenerator(TrainGeneratorArgs),
    /// Replace expanded concepts or claims with generator predictions.
    Augment(AugmentArgs),
    /// Train the mixed model (or the concatenation baseline).
    Train(TrainArgs),
    /// Decode outputs for a corpus.
    Generate(GenerateArgs),
    /// Score generations against reference targets.
    Evaluate(EvaluateArgs),
    /// Alignment coverage and claim realization of generations.
    Analyze(AnalyzeArgs),
    /// Run every stage from an experiment config.
    Pipeline(PipelineArgs),
    /// Write a synthetic raw corpus, resources and a config.
    Synth(SynthArgs),
    /// Finite-difference gradient check on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    concepts: PathBuf,
    #[arg(long)]
    concreteness: PathBuf,
    /// Abbreviations that do not end a sentence, one per line.
    #[arg(long)]
    abbreviations: Option<PathBuf>,
    /// `word<TAB>POS` tagger overrides.
    #[arg(long)]
    pos_tags: Option<PathBuf>,
    /// Trained claim classifier; claims are attached when given.
    #[arg(long)]
    claim_classifier: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainClaimsArgs {
    /// `claim|fact<TAB>sentence` lines.
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Model and optimizer settings read from `--config`; every key optional.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    embed_dim: usize,
    hidden_dim: usize,
    heads: usize,
    ffn_dim: usize,
    encoder_layers: usize,
    decoder_layers: usize,
    plan_dim: usize,
    max_source_len: usize,
    max_target_len: usize,
    batch_size: usize,
    learning_rate: f64,
    patience: usize,
    max_epochs: usize,
    grad_clip: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            heads: m.heads,
            ffn_dim: m.ffn_dim,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            plan_dim: m.plan_dim,
            max_source_len: m.max_source_len,
            max_target_len: m.max_target_len,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            patience: t.patience,
            max_epochs: t.max_epochs,
            grad_clip: t.grad_clip,
        }
    }
}

impl TrainSettings {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            }),
        }
    }

    fn model(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            plan_dim: self.plan_dim,
            max_source_len: self.max_source_len,
            max_target_len: self.max_target_len,
        }
    }

    fn train(&self, seed: u64, plan_loss_weight: f64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed,
            plan_loss_weight,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Args)]
struct TrainGeneratorArgs {
    #[arg(long)]
    mode: AugmentMode,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// JSON file with model and optimizer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Must match the mode the generator was trained for.
    #[arg(long)]
    mode: AugmentMode,
    /// Generator checkpoint from `train-generator`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = itemplan::augment::DEFAULT_NUCLEUS_P)]
    nucleus_p: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// JSON file with model and optimizer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "mixed")]
    model_kind: ModelKind,
    /// Input fields to drop, repeatable: claims, entities, concepts, expanded_concepts.
    #[arg(long = "mask")]
    masks: Vec<ItemMask>,
    #[arg(long, default_value_t = 1.0)]
    plan_loss_weight: f64,
    /// Write per-epoch losses here.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "weighted")]
    mode: DecodeMode,
    #[arg(long = "mask")]
    masks: Vec<ItemMask>,
    #[arg(long, default_value_t = ModelConfig::default().max_target_len)]
    max_len: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One whitespace-separated synonym group per line.
    #[arg(long)]
    synonyms: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    gen: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    claim_classifier: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Skip stages whose outputs already exist.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 40)]
    train: usize,
    #[arg(long, default_value_t = 10)]
    valid: usize,
    #[arg(long, default_value_t = 10)]
    test: usize,
    #[arg(long, default_value_t = 3)]
    items: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => {
            let mut res = Resources::load(&a.entities, &a.concepts, &a.concreteness)?;
            if let Some(p) = &a.abbreviations {
                res.abbreviations = Abbreviations::parse(&read(p)?);
            }
            if let Some(p) = &a.pos_tags {
                res = res.with_tagger(Box::new(DefaultTagger::parse(&read(p)?)?));
            }
            if let Some(p) = &a.claim_classifier {
                res = res.with_claims(ClaimClassifier::load(p)?);
            }
            let summary = preprocess_file(&a.input, &res, &a.output)?;
            log::info!(
                "wrote {} samples, skipped {}",
                summary.written,
                summary.skipped
            );
        }
        Command::TrainClaims(a) => {
            let clf = train_claims(&read(&a.labeled)?, a.seed)?;
            if let Some(acc) = clf.training_accuracy() {
                log::info!("training accuracy {acc:.4}");
            }
            clf.save(&a.out)?;
        }
        Command::TrainGenerator(a) => {
            let settings = TrainSettings::load(a.config.as_deref())?;
            let train = training_pairs(&load_corpus(&a.corpus)?, a.mode)?;
            let valid = training_pairs(&load_corpus(&a.val)?, a.mode)?;
            let mut g = ConditionalGenerator::new(
                a.mode,
                settings.model(),
                &train,
                sub_seed(a.seed, "generator/init"),
            )?;
            let report = g.train(
                &train,
                &valid,
                &settings.train(sub_seed(a.seed, "generator/shuffle"), 0.0),
            )?;
            log::info!(
                "best epoch {} val loss {:.5}",
                report.best_epoch,
                report.best_val_loss
            );
            g.save(&a.out)?;
        }
        Command::Augment(a) => {
            let g = ConditionalGenerator::load(&a.model)?;
            if g.mode != a.mode {
                return Err(Error::InvalidInput(format!(
                    "generator was trained for {:?}, not {:?}",
                    g.mode, a.mode
                )));
            }
            let samples = load_corpus(&a.corpus)?;
            save_corpus(&augment_samples(&samples, &g, a.nucleus_p, a.seed)?, &a.out)?;
        }
        Command::Train(a) => {
            let settings = TrainSettings::load(a.config.as_deref())?;
            let (model, report) = train_model(
                &load_corpus(&a.corpus)?,
                &load_corpus(&a.val)?,
                &settings.model(),
                &settings.train(sub_seed(a.seed, "train/shuffle"), a.plan_loss_weight),
                &a.masks,
                a.model_kind,
                sub_seed(a.seed, "train/init"),
            )?;
            log::info!(
                "best epoch {} val loss {:.5}",
                report.best_epoch,
                report.best_val_loss
            );
            save_checkpoint(&model, a.model_kind.as_str(), &a.out)?;
            if let Some(p) = &a.log_out {
                write_json(&report, p)?;
            }
        }
        Command::Generate(a) => {
            let (model, kind) = load_checkpoint(&a.ckpt)?;
            let kind: ModelKind = kind.parse()?;
            let samples = load_corpus(&a.corpus)?;
            let records = generate(&model, &samples, &a.masks, kind, a.mode, a.max_len, a.seed)?;
            save_generations(&records, &a.out)?;
        }
        Command::Evaluate(a) => {
            let synonyms = a
                .synonyms
                .as_deref()
                .map(read)
                .transpose()?
                .map(|t| SynonymTable::parse(&t));
            let report = evaluate_generations(
                &load_generations(&a.hyp)?,
                &load_corpus(&a.reference)?,
                synonyms.as_ref(),
            )?;
            write_json(&report, &a.out)?;
        }
        Command::Analyze(a) => {
            let clf = a
                .claim_classifier
                .as_deref()
                .map(ClaimClassifier::load)
                .transpose()?;
            write_json(&analyze(&load_generations(&a.gen)?, clf.as_ref())?, &a.out)?;
        }
        Command::Pipeline(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let manifest = run_pipeline(&cfg, a.resume)?;
            log::info!("config hash {}", manifest.config_hash);
        }
        Command::Synth(a) => synth(&a)?,
        Command::Gradcheck(a) => {
            let report = finite_difference_check(&tiny_config(), a.seed)?;
            println!(
                "max relative error {:.3e} over {} parameters",
                report.max_rel_error, report.param_count
            );
        }
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let data = a.out_dir.join("data");
    let res = a.out_dir.join("resources");
    fs::create_dir_all(&data).map_err(|e| Error::Io {
        path: data.clone(),
        source: e,
    })?;
    synthetic::write_resources(&res)?;
    for (name, n, offset) in [
        ("train", a.train, 0),
        ("valid", a.valid, 1),
        ("test", a.test, 2),
    ] {
        let records = synthetic::raw_records(n, a.items, a.seed.wrapping_add(offset))?;
        synthetic::save_raw_records(&records, data.join(format!("{name}.jsonl")))?;
    }
    let mut cfg = ExperimentConfig::new(
        a.seed,
        Path::new("data"),
        Path::new("resources"),
        Path::new("experiment"),
    );
    cfg.pos_tags = Some(Path::new("resources").join(synthetic::TAGGER_FILE));
    cfg.labeled_claims = Some(Path::new("resources").join(synthetic::CLAIMS_FILE));
    // Small enough to train in about a minute.
    cfg.embed_dim = 32;
    cfg.hidden_dim = 32;
    cfg.ffn_dim = 64;
    cfg.plan_dim = 32;
    cfg.encoder_layers = 1;
    cfg.max_source_len = 32;
    cfg.max_target_len = 40;
    cfg.max_decode_len = 40;
    cfg.learning_rate = 3e-3;
    cfg.max_epochs = 30;
    cfg.patience = 5;
    write_json(&cfg, &a.out_dir.join("config.json"))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
