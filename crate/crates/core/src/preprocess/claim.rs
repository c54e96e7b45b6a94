//! Logistic claim/fact classifier over bag-of-words and opinion cues.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimLabel {
    Claim,
    Fact,
}

const MARKERS: &[&str] = &[
    "should",
    "must",
    "need",
    "needs",
    "ought",
    "think",
    "believe",
    "feel",
    "opinion",
    "better",
    "worse",
    "best",
    "worst",
    "wrong",
    "right",
    "good",
    "bad",
    "never",
    "always",
    "clearly",
    "obviously",
    "i",
    "we",
    "would",
    "could",
    "unfair",
    "fair",
    "important",
];

/// Probability at or above which a sentence is labeled a claim.
pub const CLAIM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClaimTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClaimTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Weights {
    unigrams: BTreeMap<String, f64>,
    length: f64,
    marker: f64,
    bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Features {
    unigrams: Vec<String>,
    length: f64,
    marker: f64,
}

fn features(sentence: &str) -> Features {
    let mut unigrams: Vec<String> = tokenize(sentence)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect();
    let length = unigrams.len() as f64 / 20.0;
    let marker = if unigrams.iter().any(|t| MARKERS.contains(&t.as_str())) {
        1.0
    } else {
        0.0
    };
    unigrams.sort();
    unigrams.dedup();
    Features {
        unigrams,
        length,
        marker,
    }
}

impl Weights {
    fn logit(&self, f: &Features) -> f64 {
        let mut z = self.bias + self.length * f.length + self.marker * f.marker;
        for u in &f.unigrams {
            z += self.unigrams.get(u).copied().unwrap_or(0.0);
        }
        z
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Binary claim/fact classifier. A default-constructed classifier is
/// untrained and refuses to predict.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ClaimClassifier {
    weights: Option<Weights>,
    training_accuracy: Option<f64>,
}

impl ClaimClassifier {
    pub fn untrained() -> Self {
        Self::default()
    }

    /// Classifier fit to a single class: it predicts that class always.
    pub fn constant(label: ClaimLabel) -> Self {
        let bias = match label {
            ClaimLabel::Claim => 50.0,
            ClaimLabel::Fact => -50.0,
        };
        Self {
            weights: Some(Weights {
                unigrams: BTreeMap::new(),
                length: 0.0,
                marker: 0.0,
                bias,
            }),
            training_accuracy: Some(1.0),
        }
    }

    pub fn is_trained(&self) -> bool {
        self.weights.is_some()
    }

    pub fn training_accuracy(&self) -> Option<f64> {
        self.training_accuracy
    }

    pub fn claim_probability(&self, sentence: &str) -> Result<f64> {
        let w = self
            .weights
            .as_ref()
            .ok_or(Error::Untrained("claim classifier"))?;
        Ok(sigmoid(w.logit(&features(sentence))))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn classify_claim(sentence: &str, clf: &ClaimClassifier) -> Result<ClaimLabel> {
    Ok(if clf.claim_probability(sentence)? >= CLAIM_THRESHOLD {
        ClaimLabel::Claim
    } else {
        ClaimLabel::Fact
    })
}

/// Tab-separated `claim|fact<TAB>sentence` lines, split by label.
pub fn parse_labeled_sentences(contents: &str) -> Result<(Vec<String>, Vec<String>)> {
    let mut claims = Vec::new();
    let mut facts = Vec::new();
    for (idx, line) in contents.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `label<TAB>sentence`".into()))?;
        match label.trim() {
            "claim" => claims.push(sentence.trim().to_string()),
            "fact" => facts.push(sentence.trim().to_string()),
            other => return Err(parse_err(format!("unknown label `{other}`"))),
        }
    }
    Ok((claims, facts))
}

/// Shuffled per-example logistic-regression SGD with L2 decay.
pub fn train_claim_classifier(
    claims: &[String],
    facts: &[String],
    cfg: &ClaimTrainConfig,
) -> Result<ClaimClassifier> {
    if claims.is_empty() {
        return Err(Error::InvalidInput("no claim sentences to train on".into()));
    }
    if facts.is_empty() {
        return Err(Error::InvalidInput("no fact sentences to train on".into()));
    }
    let data: Vec<(Features, f64)> = claims
        .iter()
        .map(|s| (features(s), 1.0))
        .chain(facts.iter().map(|s| (features(s), 0.0)))
        .collect();
    let mut w = Weights {
        unigrams: BTreeMap::new(),
        length: 0.0,
        marker: 0.0,
        bias: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (f, y) = &data[i];
            let err = sigmoid(w.logit(f)) - y;
            let lr = cfg.learning_rate;
            w.bias -= lr * err;
            w.length -= lr * (err * f.length + cfg.l2 * w.length);
            w.marker -= lr * (err * f.marker + cfg.l2 * w.marker);
            for u in &f.unigrams {
                let v = w.unigrams.entry(u.clone()).or_insert(0.0);
                *v -= lr * (err + cfg.l2 * *v);
            }
        }
    }
    let correct = data
        .iter()
        .filter(|(f, y)| (sigmoid(w.logit(f)) >= CLAIM_THRESHOLD) == (*y == 1.0))
        .count();
    let accuracy = correct as f64 / data.len() as f64;
    log::info!("claim classifier training accuracy {accuracy:.4}");
    Ok(ClaimClassifier {
        weights: Some(w),
        training_accuracy: Some(accuracy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_sentences_parse() {
        let (c, f) =
            parse_labeled_sentences("# x\nclaim\tWe must go.\nfact\tIt rained.\n").unwrap();
        assert_eq!(c, vec!["We must go."]);
        assert_eq!(f, vec!["It rained."]);
        assert!(parse_labeled_sentences("maybe\tx").is_err());
    }

    /// Claims carry opinion words drawn from one pool, facts report dates
    /// and numbers from another; no unigram is shared across classes.
    fn separable() -> (Vec<String>, Vec<String>) {
        let subjects = ["taxes", "coal", "schools", "voting", "healthcare"];
        let opinions = [
            "should be abolished",
            "must change",
            "is clearly unfair",
            "needs reform",
            "is the worst option",
        ];
        let facts_tail = [
            "rose 3 percent in 2010",
            "was introduced in 1998",
            "employs 4000 workers",
            "covers 12 districts",
            "dates to 1870",
        ];
        let mut claims = Vec::new();
        let mut facts = Vec::new();
        for (i, s) in subjects.iter().enumerate() {
            for j in 0..5 {
                claims.push(format!("Frankly {s} {}", opinions[(i + j) % 5]));
                facts.push(format!("Records show {s} {}", facts_tail[(i + j) % 5]));
            }
        }
        (claims, facts)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (claims, facts) = separable();
        assert_eq!(claims.len() + facts.len(), 50);
        let clf = train_claim_classifier(&claims, &facts, &ClaimTrainConfig::default()).unwrap();
        assert_eq!(clf.training_accuracy(), Some(1.0));
        for c in &claims {
            assert_eq!(classify_claim(c, &clf).unwrap(), ClaimLabel::Claim);
        }
        for f in &facts {
            assert_eq!(classify_claim(f, &clf).unwrap(), ClaimLabel::Fact);
        }
    }

    #[test]
    fn contradictory_duplicate_caps_accuracy() {
        let (mut claims, mut facts) = separable();
        claims.push("Same sentence here".into());
        facts.push("Same sentence here".into());
        let clf = train_claim_classifier(&claims, &facts, &ClaimTrainConfig::default()).unwrap();
        assert!(clf.training_accuracy().unwrap() < 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let (claims, facts) = separable();
        let cfg = ClaimTrainConfig {
            epochs: 20,
            ..Default::default()
        };
        let a = train_claim_classifier(&claims, &facts, &cfg).unwrap();
        let b = train_claim_classifier(&claims, &facts, &cfg).unwrap();
        assert_eq!(a, b);
        let s = "Coal must change now";
        assert_eq!(
            classify_claim(s, &a).unwrap(),
            classify_claim(s, &a).unwrap()
        );
    }

    #[test]
    fn untrained_and_constant_classifiers() {
        assert!(matches!(
            classify_claim("x", &ClaimClassifier::untrained()),
            Err(Error::Untrained(_))
        ));
        let always = ClaimClassifier::constant(ClaimLabel::Fact);
        assert_eq!(
            classify_claim("We should act", &always).unwrap(),
            ClaimLabel::Fact
        );
        assert!(train_claim_classifier(&[], &["x".into()], &ClaimTrainConfig::default()).is_err());
    }
}
