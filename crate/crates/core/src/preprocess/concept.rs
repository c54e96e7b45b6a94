//! Lexicon-based concept extraction and the concreteness split.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::lemmatize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" | "noun" => Ok(Pos::Noun),
            "v" | "verb" => Ok(Pos::Verb),
            "a" | "s" | "adj" => Ok(Pos::Adj),
            "r" | "adv" => Ok(Pos::Adv),
            "x" | "other" => Ok(Pos::Other),
            other => Err(Error::InvalidInput(format!("unknown POS tag `{other}`"))),
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        })
    }
}

pub trait PosTagger: Send + Sync {
    fn tag(&self, tokens: &[String]) -> Vec<Pos>;
}

const CLOSED_CLASS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "i", "you", "he", "she", "it", "we",
    "they", "me", "him", "her", "us", "them", "my", "your", "his", "its", "our", "their", "of",
    "in", "on", "at", "by", "for", "with", "from", "to", "into", "about", "as", "and", "or", "but",
    "if", "then", "so", "than", "not", "no", "is", "are", "was", "were", "be", "been", "being",
    "am", "do", "does", "did", "have", "has", "had", "will", "would", "can", "could", "shall",
    "should", "may", "might", "must", "there", "here", "what", "which", "who", "whom", "whose",
    "when", "where", "why", "how", "all", "any", "some", "each", "every", "very",
];

/// Word-table plus suffix-rule tagger with `Noun` as the fallback tag.
#[derive(Debug, Clone)]
pub struct DefaultTagger {
    table: HashMap<String, Pos>,
}

impl Default for DefaultTagger {
    fn default() -> Self {
        Self {
            table: CLOSED_CLASS
                .iter()
                .map(|w| (w.to_string(), Pos::Other))
                .collect(),
        }
    }
}

impl DefaultTagger {
    pub fn with_entries<'a>(mut self, entries: impl IntoIterator<Item = (&'a str, Pos)>) -> Self {
        for (w, p) in entries {
            self.table.insert(w.to_lowercase(), p);
        }
        self
    }

    /// Tab-separated `word<TAB>POS` overrides on top of the built-in rules.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let (word, pos) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `word<TAB>POS`".into()))?;
            let pos: Pos = pos.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            entries.push((word.trim().to_string(), pos));
        }
        Ok(Self::default().with_entries(entries.iter().map(|(w, p)| (w.as_str(), *p))))
    }

    fn tag_word(&self, word: &str) -> Pos {
        let w = word.to_lowercase();
        if let Some(&p) = self.table.get(&w) {
            return p;
        }
        if !w.chars().any(char::is_alphabetic) {
            return Pos::Other;
        }
        let n = w.len();
        if n > 4 && w.ends_with("ly") {
            Pos::Adv
        } else if (n > 4 && w.ends_with("ing")) || (n > 3 && w.ends_with("ed")) {
            Pos::Verb
        } else if ["ous", "ful", "ive", "able", "ible", "less"]
            .iter()
            .any(|s| n > s.len() + 2 && w.ends_with(s))
        {
            Pos::Adj
        } else {
            Pos::Noun
        }
    }
}

impl PosTagger for DefaultTagger {
    fn tag(&self, tokens: &[String]) -> Vec<Pos> {
        tokens.iter().map(|t| self.tag_word(t)).collect()
    }
}

/// Known (lemma, POS) pairs.
#[derive(Debug, Clone, Default)]
pub struct ConceptLexicon {
    entries: HashSet<(String, Pos)>,
    lemmas: HashSet<String>,
}

impl ConceptLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lemma: &str, pos: Pos) {
        let lemma = lemma.trim().to_lowercase();
        self.lemmas.insert(lemma.clone());
        self.entries.insert((lemma, pos));
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, Pos)>) -> Self {
        let mut lex = Self::new();
        for (l, p) in entries {
            lex.insert(l, p);
        }
        lex
    }

    /// Tab-separated `lemma<TAB>POS` lines.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let (lemma, pos) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `lemma<TAB>POS`".into()))?;
            if lemma.trim().is_empty() || lemma.trim().contains(char::is_whitespace) {
                return Err(parse_err(format!("bad lemma `{lemma}`")));
            }
            let pos: Pos = pos.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            lex.insert(lemma, pos);
        }
        Ok(lex)
    }

    pub fn contains(&self, lemma: &str, pos: Pos) -> bool {
        self.entries.contains(&(lemma.to_string(), pos))
    }

    pub fn lemmas(&self) -> &HashSet<String> {
        &self.lemmas
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const MAX_CONCRETENESS: f64 = 5.0;
/// Concepts scoring strictly below this are abstract enough to stay core.
pub const CORE_CONCRETENESS: f64 = 3.0;

/// Word → concreteness score in `[0, 5]`.
#[derive(Debug, Clone, Default)]
pub struct ConcretenessLexicon {
    scores: HashMap<String, f64>,
}

impl ConcretenessLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, score: f64) -> Result<()> {
        if !(0.0..=MAX_CONCRETENESS).contains(&score) {
            return Err(Error::validation(
                "concreteness",
                format!("score {score} for `{word}` outside [0, 5]"),
            ));
        }
        self.scores.insert(word.trim().to_lowercase(), score);
        Ok(())
    }

    /// Tab-separated `word<TAB>score` lines.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let (word, score) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `word<TAB>score`".into()))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad score `{score}`")))?;
            lex.insert(word, score)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(lex)
    }

    /// Missing words count as maximally concrete.
    pub fn score(&self, word: &str) -> f64 {
        self.scores
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(MAX_CONCRETENESS)
    }
}

/// Lemmas whose (lemma, tag) pair is in the lexicon, with the first tag
/// each lemma matched under.
pub fn extract_tagged_concepts(
    tokens: &[String],
    lexicon: &ConceptLexicon,
    tagger: &dyn PosTagger,
) -> BTreeMap<String, Pos> {
    let tags = tagger.tag(tokens);
    let mut out = BTreeMap::new();
    for (tok, &pos) in tokens.iter().zip(&tags) {
        if !tok.chars().any(char::is_alphabetic) {
            continue;
        }
        let lemma = lemmatize(tok, Some(lexicon.lemmas()));
        if lexicon.contains(&lemma, pos) {
            out.entry(lemma).or_insert(pos);
        }
    }
    out
}

pub fn extract_concepts(
    tokens: &[String],
    lexicon: &ConceptLexicon,
    tagger: &dyn PosTagger,
) -> BTreeSet<String> {
    extract_tagged_concepts(tokens, lexicon, tagger)
        .into_keys()
        .collect()
}

/// Verbs and concepts with concreteness below 3.0 are core; the rest are
/// expanded.
pub fn split_concepts(
    concepts: &BTreeSet<String>,
    tags: &BTreeMap<String, Pos>,
    lex: &ConcretenessLexicon,
) -> (BTreeSet<String>, BTreeSet<String>) {
    concepts
        .iter()
        .cloned()
        .partition(|c| tags.get(c) == Some(&Pos::Verb) || lex.score(c) < CORE_CONCRETENESS)
}
