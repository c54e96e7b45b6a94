//! Tokenization, sentence segmentation and suffix-stripping lemmatization.

use std::collections::HashSet;

/// Reserved element separator inside a serialized content item.
pub const SEGMENTER: &str = "<s>";

const LEADING_PUNCT: &[char] = &['"', '\'', '(', '[', '{', '`'];
const TRAILING_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', ')', ']', '}', '`'];

/// Whitespace tokenization with leading/trailing punctuation split off.
///
/// A trailing period stays attached when the word already contains an
/// inner period (`U.S.`), so dotted abbreviations remain single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if chunk == SEGMENTER {
            out.push(chunk.to_string());
            continue;
        }
        let mut rest = chunk;
        while let Some(c) = rest.chars().next() {
            if LEADING_PUNCT.contains(&c) && rest.len() > c.len_utf8() {
                out.push(c.to_string());
                rest = &rest[c.len_utf8()..];
            } else {
                break;
            }
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().last() {
            if rest.len() <= c.len_utf8() || !TRAILING_PUNCT.contains(&c) {
                break;
            }
            let body = &rest[..rest.len() - c.len_utf8()];
            if c == '.' && body.contains('.') {
                break;
            }
            trailing.push(c.to_string());
            rest = body;
        }
        out.push(rest.to_string());
        out.extend(trailing.into_iter().rev());
    }
    out
}

/// Abbreviations that do not end a sentence.
#[derive(Debug, Clone)]
pub struct Abbreviations {
    words: HashSet<String>,
}

impl Default for Abbreviations {
    fn default() -> Self {
        Self::from_words(
            [
                "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "Jr.", "Sr.", "U.S.", "U.K.", "e.g.",
                "i.e.", "etc.", "vs.", "Inc.", "Ltd.", "Co.", "Gen.", "Sen.", "Rep.", "Gov.",
            ]
            .iter()
            .copied(),
        )
    }
}

impl Abbreviations {
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            words: words
                .into_iter()
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One abbreviation per line; blank lines ignored.
    pub fn parse(contents: &str) -> Self {
        Self::from_words(contents.lines())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }
}

/// Rule-based sentence splitter: a break follows `.`, `?` or `!` when the
/// next non-space character is uppercase and the word carrying the mark is
/// not a known abbreviation.
pub fn segment_sentences(text: &str, abbreviations: &Abbreviations) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    for (k, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut j = k + 1;
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            continue;
        }
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j >= chars.len() || !chars[j].1.is_uppercase() {
            continue;
        }
        let end = pos + c.len_utf8();
        let word_start = text[..end]
            .rfind(char::is_whitespace)
            .map(|w| w + 1)
            .unwrap_or(0);
        if c == '.' && abbreviations.contains(&text[word_start..end]) {
            continue;
        }
        push_trimmed(&mut sentences, &text[start..end]);
        start = end;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

const IRREGULAR: &[(&str, &str)] = &[
    ("is", "be"),
    ("are", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("am", "be"),
    ("has", "have"),
    ("had", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("made", "make"),
    ("went", "go"),
    ("gone", "go"),
    ("said", "say"),
    ("took", "take"),
    ("taken", "take"),
    ("gave", "give"),
    ("given", "give"),
    ("got", "get"),
    ("thought", "think"),
    ("knew", "know"),
    ("known", "know"),
    ("saw", "see"),
    ("seen", "see"),
    ("came", "come"),
    ("left", "leave"),
    ("ran", "run"),
    ("people", "person"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("lives", "life"),
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Candidate stems for a lowercase word, most preferred first.
fn stem_candidates(word: &str) -> Vec<String> {
    let b = word.as_bytes();
    let n = b.len();
    let mut out = Vec::new();
    let verbal = |stem: &str, out: &mut Vec<String>| {
        out.push(stem.to_string());
        out.push(format!("{stem}e"));
        let sb = stem.as_bytes();
        if sb.len() >= 2 && sb[sb.len() - 1] == sb[sb.len() - 2] && !is_vowel(sb[sb.len() - 1]) {
            out.push(stem[..stem.len() - 1].to_string());
        }
    };
    if n > 4 && word.ends_with("ies") {
        out.push(format!("{}y", &word[..n - 3]));
    } else if n > 4 && word.ends_with("ing") {
        verbal(&word[..n - 3], &mut out);
    } else if n > 3 && word.ends_with("ed") {
        verbal(&word[..n - 2], &mut out);
    } else if n > 3 && word.ends_with("es") {
        let stem = &word[..n - 2];
        if stem.ends_with('s')
            || stem.ends_with('x')
            || stem.ends_with('z')
            || stem.ends_with("ch")
            || stem.ends_with("sh")
        {
            out.push(stem.to_string());
            out.push(word[..n - 1].to_string());
        } else {
            out.push(word[..n - 1].to_string());
            out.push(stem.to_string());
        }
    } else if n > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") {
        out.push(word[..n - 1].to_string());
    }
    out
}

/// Lookup-table plus suffix-stripping lemmatizer.
///
/// When `known` is supplied, the first candidate present in it wins
/// (the surface form itself included); otherwise the first stripping
/// candidate is returned.
pub fn lemmatize(word: &str, known: Option<&HashSet<String>>) -> String {
    let lower = word.to_lowercase();
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(w, _)| *w == lower) {
        return lemma.to_string();
    }
    let candidates = stem_candidates(&lower);
    if let Some(known) = known {
        if known.contains(&lower) {
            return lower;
        }
        if let Some(hit) = candidates.iter().find(|c| known.contains(*c)) {
            return hit.clone();
        }
    }
    candidates.into_iter().next().unwrap_or(lower)
}

/// Suffix stripper used for stem-level matching.
pub fn stem(word: &str) -> String {
    lemmatize(word, None)
}

/// The lowercase word together with every lemma the suffix stripper
/// considers for it. Two words share a stem when these sets intersect.
pub fn stem_forms(word: &str) -> Vec<String> {
    let lower = word.to_lowercase();
    if let Some((_, lemma)) = IRREGULAR.iter().find(|(w, _)| *w == lower) {
        return vec![lower, lemma.to_string()];
    }
    let mut forms = stem_candidates(&lower);
    forms.insert(0, lower);
    forms
}

/// Token index spans `[start, end)` of sentences in a token sequence.
/// A sentence ends after a `.`, `?` or `!` token; trailing tokens without
/// a terminator form a final sentence.
pub fn sentence_spans(tokens: &[String]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if matches!(tok.as_str(), "." | "?" | "!") {
            spans.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("A cat."), vec!["A", "cat", "."]);
        assert_eq!(
            tokenize("(yes), no!"),
            vec!["(", "yes", ")", ",", "no", "!"]
        );
        assert_eq!(tokenize("the U.S. army"), vec!["the", "U.S.", "army"]);
        assert_eq!(tokenize("a <s> b"), vec!["a", "<s>", "b"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn segments_simple_sentences() {
        let abbr = Abbreviations::default();
        assert_eq!(
            segment_sentences("A cat. A dog.", &abbr),
            vec!["A cat.", "A dog."]
        );
        assert!(segment_sentences("", &abbr).is_empty());
        assert_eq!(
            segment_sentences("Is it? Yes! ok", &abbr),
            vec!["Is it?", "Yes! ok"]
        );
    }

    #[test]
    fn abbreviations_do_not_split() {
        let abbr = Abbreviations::default();
        assert_eq!(
            segment_sentences("Mr. Smith left. He ran.", &abbr),
            vec!["Mr. Smith left.", "He ran."]
        );
        assert_eq!(
            segment_sentences("The U.S. Army came. It left.", &abbr),
            vec!["The U.S. Army came.", "It left."]
        );
    }

    #[test]
    fn segmentation_preserves_text_modulo_whitespace() {
        let abbr = Abbreviations::default();
        let text = "  First one.  Second, with Dr. Who!   third? Fourth  ";
        let joined: String = segment_sentences(text, &abbr).concat();
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        assert_eq!(strip(&joined), strip(text));
    }

    #[test]
    fn lemmatizer_rules() {
        assert_eq!(lemmatize("attacks", None), "attack");
        assert_eq!(lemmatize("happened", None), "happen");
        assert_eq!(lemmatize("policies", None), "policy");
        assert_eq!(lemmatize("taxes", None), "tax");
        assert_eq!(lemmatize("was", None), "be");
        assert_eq!(lemmatize("glass", None), "glass");
        let known: HashSet<String> = ["ensue", "run", "staggering"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(lemmatize("ensued", Some(&known)), "ensue");
        assert_eq!(lemmatize("running", Some(&known)), "run");
        assert_eq!(lemmatize("Staggering", Some(&known)), "staggering");
    }

    #[test]
    fn sentence_spans_cover_tokens() {
        let toks: Vec<String> = "a b . c d ! e".split(' ').map(String::from).collect();
        assert_eq!(sentence_spans(&toks), vec![(0, 3), (3, 6), (6, 7)]);
        assert!(sentence_spans(&[]).is_empty());
    }
}
