//! Experiment configuration, the concatenation baseline and the staged
//! preprocess → augment → train → generate → evaluate → analyze pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment_samples, training_pairs, AugmentMode, ConditionalGenerator};
use crate::content::{load_corpus, save_corpus, serialize_item, ContentItem, Sample};
use crate::error::{Error, Result};
use crate::eval::{
    analyze, evaluate_generations, load_generations, save_generations, GenerationRecord,
    SynonymTable,
};
use crate::mixed_lm::{
    apply_masks, decode, examples_from_samples, load_checkpoint, save_checkpoint, train,
    DecodeMode, ItemMask, MixedLm, ModelConfig, TrainConfig, TrainReport, Vocab,
};
use crate::par;
use crate::preprocess::{
    parse_labeled_sentences, preprocess_file, train_claim_classifier, Abbreviations,
    ClaimClassifier, ClaimLabel, ClaimTrainConfig, DefaultTagger, Resources,
};

/// Which conditioning the generator sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One conditioned LM per content item, mixed by the plan scorer.
    #[default]
    Mixed,
    /// All items concatenated into one conditioning sequence.
    Seq2seqFull,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mixed => "mixed",
            ModelKind::Seq2seqFull => "seq2seq_full",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(Self::Mixed),
            "seq2seq_full" => Ok(Self::Seq2seqFull),
            other => Err(Error::InvalidInput(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Merge all items of a sample into one item whose serialization is the
/// items' serialized bodies joined by the segmenter, with the title once.
pub fn build_seq2seqfull_input(sample: &Sample) -> Result<Sample> {
    let skip = sample.title.len() + 1;
    let mut body: Vec<String> = Vec::new();
    for (i, item) in sample.items.iter().enumerate() {
        let tokens = serialize_item(&sample.title, item)?.tokens;
        if i > 0 {
            body.push(crate::text::SEGMENTER.to_string());
        }
        body.extend(tokens.into_iter().skip(skip));
    }
    let claim = sample.items.iter().find_map(|it| it.claim.clone());
    Ok(Sample {
        id: sample.id.clone(),
        title: sample.title.clone(),
        items: vec![ContentItem {
            claim,
            concatenated: Some(body),
            ..ContentItem::default()
        }],
        target: sample.target.clone(),
        plan_labels: vec![Some(0); sample.target.len()],
    })
}

/// Apply ablation masks and, for the concatenation baseline, merge items.
pub fn prepare_samples(
    samples: &[Sample],
    masks: &[ItemMask],
    kind: ModelKind,
) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.items = s.items.iter().map(|it| apply_masks(it, masks)).collect();
            match kind {
                ModelKind::Mixed => Ok(s),
                ModelKind::Seq2seqFull => build_seq2seqfull_input(&s),
            }
        })
        .collect()
}

/// Vocabulary over serialized items and targets of prepared samples.
pub fn build_vocab(samples: &[Sample]) -> Result<Vocab> {
    let mut seqs: Vec<Vec<String>> = Vec::new();
    for s in samples {
        for item in &s.items {
            seqs.push(serialize_item(&s.title, item)?.tokens);
        }
        seqs.push(s.target.clone());
    }
    Ok(Vocab::build(seqs.iter(), 1))
}

/// Derive a named sub-seed from the experiment seed.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{name}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn train_model(
    train_set: &[Sample],
    valid_set: &[Sample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    masks: &[ItemMask],
    kind: ModelKind,
    init_seed: u64,
) -> Result<(MixedLm, TrainReport)> {
    let train_set = prepare_samples(train_set, masks, kind)?;
    let valid_set = prepare_samples(valid_set, masks, kind)?;
    let vocab = build_vocab(&train_set)?;
    let mut model = MixedLm::new(model_cfg.clone(), vocab, init_seed)?;
    let train_ex = examples_from_samples(&train_set, &model.vocab, model_cfg, &[])?;
    let valid_ex = examples_from_samples(&valid_set, &model.vocab, model_cfg, &[])?;
    let report = train(&mut model, &train_ex, &valid_ex, train_cfg)?;
    Ok((model, report))
}

/// Decode every sample; sample `id` uses the sub-seed `decode/<id>`.
pub fn generate(
    model: &MixedLm,
    samples: &[Sample],
    masks: &[ItemMask],
    kind: ModelKind,
    mode: DecodeMode,
    max_len: usize,
    seed: u64,
) -> Result<Vec<GenerationRecord>> {
    if !model.trained {
        return Err(Error::Untrained("generator model"));
    }
    let prepared = prepare_samples(samples, masks, kind)?;
    let examples = examples_from_samples(&prepared, &model.vocab, &model.config, &[])?;
    let pairs: Vec<(&Sample, &crate::mixed_lm::Example)> = prepared.iter().zip(&examples).collect();
    par::map(&pairs, |&(s, ex)| {
        let out = decode(
            model,
            &ex.items,
            mode,
            max_len,
            sub_seed(seed, &format!("decode/{}", s.id)),
        )?;
        let tokens = model.vocab.decode(&out.tokens);
        Ok(GenerationRecord {
            id: s.id.clone(),
            mode,
            text: tokens.join(" "),
            tokens,
            plan: out.plan.into_iter().map(|p| p.dist).collect(),
            item_claims: s.items.iter().map(ContentItem::has_claim).collect(),
        })
    })
    .into_iter()
    .collect()
}

/// Train a claim classifier from `claim|fact<TAB>sentence` lines. With one
/// class missing the classifier always predicts the present class.
pub fn train_claims(labeled: &str, seed: u64) -> Result<ClaimClassifier> {
    let (claims, facts) = parse_labeled_sentences(labeled)?;
    match (claims.is_empty(), facts.is_empty()) {
        (true, true) => Err(Error::InvalidInput("no labeled sentences".into())),
        (false, true) => Ok(ClaimClassifier::constant(ClaimLabel::Claim)),
        (true, false) => Ok(ClaimClassifier::constant(ClaimLabel::Fact)),
        (false, false) => train_claim_classifier(
            &claims,
            &facts,
            &ClaimTrainConfig {
                seed,
                ..ClaimTrainConfig::default()
            },
        ),
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("experiment")
}
fn default_embed() -> usize {
    ModelConfig::default().embed_dim
}
fn default_hidden() -> usize {
    ModelConfig::default().hidden_dim
}
fn default_heads() -> usize {
    ModelConfig::default().heads
}
fn default_ffn() -> usize {
    ModelConfig::default().ffn_dim
}
fn default_layers() -> usize {
    ModelConfig::default().encoder_layers
}
fn default_plan_dim() -> usize {
    ModelConfig::default().plan_dim
}
fn default_source_len() -> usize {
    ModelConfig::default().max_source_len
}
fn default_target_len() -> usize {
    ModelConfig::default().max_target_len
}
fn default_batch() -> usize {
    TrainConfig::default().batch_size
}
fn default_lr() -> f64 {
    TrainConfig::default().learning_rate
}
fn default_patience() -> usize {
    TrainConfig::default().patience
}
fn default_epochs() -> usize {
    TrainConfig::default().max_epochs
}
fn default_generator_epochs() -> usize {
    20
}
fn default_one() -> f64 {
    1.0
}
fn default_nucleus() -> f64 {
    crate::augment::DEFAULT_NUCLEUS_P
}

/// Flat experiment description. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Raw `{id?, title, reference}` JSONL splits.
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub entities: PathBuf,
    pub concepts: PathBuf,
    pub concreteness: PathBuf,
    /// Abbreviations that do not end a sentence, one per line.
    #[serde(default)]
    pub abbreviations: Option<PathBuf>,
    #[serde(default)]
    pub pos_tags: Option<PathBuf>,
    /// `claim|fact<TAB>sentence` lines for the claim classifier.
    #[serde(default)]
    pub labeled_claims: Option<PathBuf>,
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,

    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_ffn")]
    pub ffn_dim: usize,
    #[serde(default = "default_layers")]
    pub encoder_layers: usize,
    #[serde(default = "default_layers")]
    pub decoder_layers: usize,
    #[serde(default = "default_plan_dim")]
    pub plan_dim: usize,
    #[serde(default = "default_source_len")]
    pub max_source_len: usize,
    #[serde(default = "default_target_len")]
    pub max_target_len: usize,

    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_one")]
    pub plan_loss_weight: f64,
    #[serde(default = "default_one")]
    pub grad_clip: f64,

    #[serde(default)]
    pub decode_mode: DecodeMode,
    #[serde(default = "default_target_len")]
    pub max_decode_len: usize,
    #[serde(default)]
    pub masks: Vec<ItemMask>,

    #[serde(default)]
    pub augment: Option<AugmentMode>,
    #[serde(default = "default_nucleus")]
    pub nucleus_p: f64,
    #[serde(default = "default_generator_epochs")]
    pub generator_max_epochs: usize,
}

/// Lexically normalize a path: drop `.` and fold `..` where possible.
pub fn normalize_path(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if matches!(out.components().next_back(), Some(Component::Normal(_))) {
                    out.pop();
                } else if !out.has_root() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

impl ExperimentConfig {
    /// Minimal config for the given inputs; everything else defaulted.
    pub fn new(seed: u64, data_dir: &Path, resources_dir: &Path, output_dir: &Path) -> Self {
        let value = serde_json::json!({
            "seed": seed,
            "train": data_dir.join("train.jsonl"),
            "valid": data_dir.join("valid.jsonl"),
            "test": data_dir.join("test.jsonl"),
            "entities": resources_dir.join(crate::synthetic::ENTITIES_FILE),
            "concepts": resources_dir.join(crate::synthetic::CONCEPTS_FILE),
            "concreteness": resources_dir.join(crate::synthetic::CONCRETENESS_FILE),
            "output_dir": output_dir,
        });
        serde_json::from_value(value).expect("complete minimal config")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut paths = vec![
            &mut self.train,
            &mut self.valid,
            &mut self.test,
            &mut self.entities,
            &mut self.concepts,
            &mut self.concreteness,
            &mut self.output_dir,
        ];
        for p in [
            &mut self.abbreviations,
            &mut self.pos_tags,
            &mut self.labeled_claims,
            &mut self.synonyms,
        ] {
            if let Some(p) = p.as_mut() {
                paths.push(p);
            }
        }
        paths
    }

    /// Resolve relative paths against `base` and normalize all of them.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.paths_mut() {
            let joined = if p.is_relative() {
                base.join(&*p)
            } else {
                p.clone()
            };
            *p = normalize_path(&joined);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train_config(self.seed).validate()?;
        if self.max_decode_len == 0 {
            return Err(Error::validation("max_decode_len", "must be positive"));
        }
        if self.generator_max_epochs == 0 {
            return Err(Error::validation(
                "generator_max_epochs",
                "must be positive",
            ));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::validation("nucleus_p", "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
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

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed,
            plan_loss_weight: self.plan_loss_weight,
            grad_clip: self.grad_clip,
        }
    }

    /// SHA-256 over the normalized config, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        for p in cfg.paths_mut() {
            *p = normalize_path(p);
        }
        let mut value = serde_json::to_value(&cfg).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    /// Output file name → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub stages: Vec<StageRecord>,
}

pub const STAGES: [&str; 6] = [
    "preprocess",
    "augment",
    "train",
    "generate",
    "evaluate",
    "analyze",
];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GENERATIONS_FILE: &str = "generations.jsonl";

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
}

impl Pipeline<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn outputs(&self, stage: &str) -> Vec<&'static str> {
        let cfg = self.cfg;
        match stage {
            "preprocess" => {
                let mut v = vec!["train.jsonl", "valid.jsonl", "test.jsonl"];
                if cfg.labeled_claims.is_some() {
                    v.push("claim_classifier.json");
                }
                v
            }
            "augment" => {
                let mut v = vec!["test_input.jsonl"];
                if cfg.augment.is_some() {
                    v.push("augment_generator.json");
                }
                v
            }
            "train" => vec!["model.json", "train_log.json"],
            "generate" => vec![GENERATIONS_FILE],
            "evaluate" => vec!["report.json"],
            "analyze" => vec!["analysis.json"],
            _ => unreachable!("unknown stage"),
        }
    }

    fn run(&self, stage: &str) -> Result<()> {
        match stage {
            "preprocess" => self.preprocess(),
            "augment" => self.augment(),
            "train" => self.train(),
            "generate" => self.generate(),
            "evaluate" => self.evaluate(),
            "analyze" => self.analyze(),
            _ => unreachable!("unknown stage"),
        }
    }

    fn preprocess(&self) -> Result<()> {
        let cfg = self.cfg;
        let mut res = Resources::load(&cfg.entities, &cfg.concepts, &cfg.concreteness)?;
        if let Some(p) = &cfg.abbreviations {
            res.abbreviations = Abbreviations::parse(&read_text(p)?);
        }
        if let Some(p) = &cfg.pos_tags {
            res = res.with_tagger(Box::new(DefaultTagger::parse(&read_text(p)?)?));
        }
        if let Some(p) = &cfg.labeled_claims {
            let clf = train_claims(&read_text(p)?, sub_seed(cfg.seed, "claims"))?;
            clf.save(self.out("claim_classifier.json"))?;
            res = res.with_claims(clf);
        }
        for (input, name) in [
            (&cfg.train, "train"),
            (&cfg.valid, "valid"),
            (&cfg.test, "test"),
        ] {
            let summary = preprocess_file(input, &res, self.out(&format!("{name}.jsonl")))?;
            log::info!(
                "preprocess {name}: {} samples, {} skipped",
                summary.written,
                summary.skipped
            );
        }
        Ok(())
    }

    fn augment(&self) -> Result<()> {
        let cfg = self.cfg;
        let test = load_corpus(self.out("test.jsonl"))?;
        let Some(mode) = cfg.augment else {
            return save_corpus(&test, self.out("test_input.jsonl"));
        };
        let train_pairs = training_pairs(&load_corpus(self.out("train.jsonl"))?, mode)?;
        let valid_pairs = training_pairs(&load_corpus(self.out("valid.jsonl"))?, mode)?;
        if train_pairs.is_empty() || valid_pairs.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no {mode:?} training pairs for the augmentation generator"
            )));
        }
        let mut g = ConditionalGenerator::new(
            mode,
            cfg.model_config(),
            &train_pairs,
            sub_seed(cfg.seed, "generator/init"),
        )?;
        let mut tc = cfg.train_config(sub_seed(cfg.seed, "generator/shuffle"));
        tc.max_epochs = cfg.generator_max_epochs;
        tc.plan_loss_weight = 0.0;
        g.train(&train_pairs, &valid_pairs, &tc)?;
        g.save(self.out("augment_generator.json"))?;
        let augmented = augment_samples(&test, &g, cfg.nucleus_p, sub_seed(cfg.seed, "augment"))?;
        save_corpus(&augmented, self.out("test_input.jsonl"))
    }

    fn train(&self) -> Result<()> {
        let cfg = self.cfg;
        let (model, report) = train_model(
            &load_corpus(self.out("train.jsonl"))?,
            &load_corpus(self.out("valid.jsonl"))?,
            &cfg.model_config(),
            &cfg.train_config(sub_seed(cfg.seed, "train/shuffle")),
            &cfg.masks,
            cfg.model,
            sub_seed(cfg.seed, "train/init"),
        )?;
        save_checkpoint(&model, cfg.model.as_str(), self.out("model.json"))?;
        write_json(&report, &self.out("train_log.json"))
    }

    fn generate(&self) -> Result<()> {
        let cfg = self.cfg;
        let (model, kind) = load_checkpoint(self.out("model.json"))?;
        let kind: ModelKind = kind.parse()?;
        let records = generate(
            &model,
            &load_corpus(self.out("test_input.jsonl"))?,
            &cfg.masks,
            kind,
            cfg.decode_mode,
            cfg.max_decode_len,
            sub_seed(cfg.seed, "generate"),
        )?;
        save_generations(&records, self.out(GENERATIONS_FILE))
    }

    fn evaluate(&self) -> Result<()> {
        let synonyms = match &self.cfg.synonyms {
            Some(p) => Some(SynonymTable::parse(&read_text(p)?)),
            None => None,
        };
        let report = evaluate_generations(
            &load_generations(self.out(GENERATIONS_FILE))?,
            &load_corpus(self.out("test.jsonl"))?,
            synonyms.as_ref(),
        )?;
        write_json(&report, &self.out("report.json"))
    }

    fn analyze(&self) -> Result<()> {
        let clf_path = self.out("claim_classifier.json");
        let clf = if clf_path.exists() {
            Some(ClaimClassifier::load(&clf_path)?)
        } else {
            None
        };
        let report = analyze(&load_generations(self.out(GENERATIONS_FILE))?, clf.as_ref())?;
        write_json(&report, &self.out("analysis.json"))
    }
}

/// Run every stage in order inside `cfg.output_dir` and write the
/// manifest. With `resume`, stages whose outputs all exist are skipped.
pub fn run_pipeline(cfg: &ExperimentConfig, resume: bool) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pipeline = Pipeline { cfg, dir };
    let mut stages = Vec::with_capacity(STAGES.len());
    for stage in STAGES {
        let outputs = pipeline.outputs(stage);
        let cached = resume && outputs.iter().all(|o| pipeline.out(o).exists());
        let status = if cached {
            log::info!("stage {stage}: cached");
            StageStatus::Cached
        } else {
            log::info!("stage {stage}: running");
            pipeline.run(stage).map_err(|e| Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            })?;
            StageStatus::Ran
        };
        let mut sums = BTreeMap::new();
        for o in outputs {
            sums.insert(o.to_string(), file_sha256(&pipeline.out(o))?);
        }
        stages.push(StageRecord {
            name: stage.to_string(),
            status,
            outputs: sums,
        });
    }
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg.clone(),
        stages,
    };
    write_json(&manifest, &dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n_items: usize) -> Sample {
        let items = (0..n_items)
            .map(|i| {
                ContentItem::new(
                    [format!("E{i}")],
                    [format!("c{i}")],
                    [format!("x{i}")],
                    None,
                )
            })
            .collect();
        Sample {
            id: "s".into(),
            title: vec!["my".into(), "title".into()],
            items,
            target: vec!["a".into(), "b".into()],
            plan_labels: vec![Some(0), Some(n_items - 1)],
        }
    }

    #[test]
    fn single_item_concatenation_is_identity() {
        let s = sample(1);
        let merged = build_seq2seqfull_input(&s).unwrap();
        assert_eq!(
            serialize_item(&s.title, &merged.items[0]).unwrap(),
            serialize_item(&s.title, &s.items[0]).unwrap()
        );
    }

    #[test]
    fn concatenation_drops_repeated_titles() {
        let s = sample(3);
        let merged = build_seq2seqfull_input(&s).unwrap();
        assert_eq!(merged.items.len(), 1);
        assert!(merged.plan_labels.iter().all(|l| *l == Some(0)));
        let total: usize = s
            .items
            .iter()
            .map(|it| serialize_item(&s.title, it).unwrap().tokens.len())
            .sum();
        let got = serialize_item(&s.title, &merged.items[0])
            .unwrap()
            .tokens
            .len();
        assert_eq!(got, total - 2 * s.title.len());
        assert_eq!(
            serialize_item(&s.title, &merged.items[0])
                .unwrap()
                .to_string(),
            "my title <s> E0 <s> c0 x0 <s> E1 <s> c1 x1 <s> E2 <s> c2 x2"
        );
    }

    #[test]
    fn path_normalization() {
        assert_eq!(
            normalize_path(Path::new("./a/b/../c")),
            PathBuf::from("a/c")
        );
        assert_eq!(normalize_path(Path::new("../a")), PathBuf::from("../a"));
        assert_eq!(normalize_path(Path::new("/x/./y/")), PathBuf::from("/x/y"));
    }

    #[test]
    fn config_hash_tracks_semantics() {
        let base = ExperimentConfig::new(1, Path::new("data"), Path::new("res"), Path::new("out"));
        let mut same = ExperimentConfig::new(
            1,
            Path::new("./data"),
            Path::new("res/../res"),
            Path::new("elsewhere"),
        );
        assert_eq!(base.hash(), same.hash());
        same.learning_rate = 1e-3;
        assert_ne!(base.hash(), same.hash());
        let reseeded =
            ExperimentConfig::new(2, Path::new("data"), Path::new("res"), Path::new("out"));
        assert_ne!(base.hash(), reseeded.hash());
    }

    #[test]
    fn config_requires_seed_and_rejects_unknown_fields() {
        let missing = r#"{"train":"a","valid":"b","test":"c","entities":"d","concepts":"e","concreteness":"f"}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(missing).is_err());
        let extra = r#"{"seed":1,"train":"a","valid":"b","test":"c","entities":"d","concepts":"e","concreteness":"f","bogus":1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(extra).is_err());
    }

    #[test]
    fn config_validation_rejects_nonpositive_values() {
        let mut cfg = ExperimentConfig::new(1, Path::new("d"), Path::new("r"), Path::new("o"));
        assert!(cfg.validate().is_ok());
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sub_seeds_differ_by_name() {
        assert_ne!(sub_seed(1, "a"), sub_seed(1, "b"));
        assert_eq!(sub_seed(1, "a"), sub_seed(1, "a"));
    }

    #[test]
    fn one_class_claim_data_gives_constant_classifier() {
        let clf = train_claims("claim\tWe must act now.\n", 0).unwrap();
        assert_eq!(
            crate::preprocess::classify_claim("It rained.", &clf).unwrap(),
            ClaimLabel::Claim
        );
    }
}
