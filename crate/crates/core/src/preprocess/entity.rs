use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Static mention → entity dictionary (most frequent sense per mention).
#[derive(Debug, Clone, Default)]
pub struct EntityDictionary {
    mapping: HashMap<String, String>,
    max_tokens: usize,
}

fn normalize_mention(m: &str) -> String {
    m.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl EntityDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mention: &str, identifier: &str) -> Result<()> {
        let mention = normalize_mention(mention);
        if mention.is_empty() {
            return Err(Error::validation("mention", "empty mention"));
        }
        let id = identifier.split_whitespace().collect::<Vec<_>>().join("_");
        if id.is_empty() {
            return Err(Error::validation(
                "identifier",
                format!("empty identifier for `{mention}`"),
            ));
        }
        self.max_tokens = self.max_tokens.max(mention.split(' ').count());
        self.mapping.insert(mention, id);
        Ok(())
    }

    /// Tab-separated `mention<TAB>identifier` lines; `#` comments allowed.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut dict = Self::new();
        for (idx, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (mention, id) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected `mention<TAB>identifier`".into(),
            })?;
            dict.insert(mention, id.trim()).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn lookup(&self, mention: &str) -> Option<&str> {
        self.mapping
            .get(&normalize_mention(mention))
            .map(String::as_str)
    }

    pub fn max_mention_tokens(&self) -> usize {
        self.max_tokens
    }
}

/// Left-to-right, longest-first, case-insensitive mention matching.
pub fn link_entities(tokens: &[String], dict: &EntityDictionary) -> BTreeSet<String> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < lower.len() {
        let longest = dict.max_mention_tokens().min(lower.len() - i);
        let hit = (1..=longest).rev().find_map(|len| {
            dict.mapping
                .get(&lower[i..i + len].join(" "))
                .map(|id| (len, id))
        });
        match hit {
            Some((len, id)) => {
                found.insert(id.clone());
                i += len;
            }
            None => i += 1,
        }
    }
    found
}
