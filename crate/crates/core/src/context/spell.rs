use std::collections::BTreeSet;
use std::path::Path;

use super::ContextError;

/// Known-good vocabulary for spell correction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    // Sorted, so the first minimum found is also the lexicographically smallest.
    words: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I, S>(words: I) -> Result<Self, ContextError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(ContextError::EmptyLexicon);
        }
        Ok(Lexicon { words })
    }

    /// One lowercase word per line.
    pub fn from_file(path: &Path) -> Result<Self, ContextError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ContextError::Io(format!("{}: {e}", path.display())))?;
        Self::new(src.lines())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn nearest(&self, word: &str) -> Option<&str> {
        let len = word.chars().count();
        let mut best: Option<(usize, &str)> = None;
        for cand in &self.words {
            if cand.chars().count().abs_diff(len) > MAX_EDITS {
                continue;
            }
            let d = strsim::levenshtein(word, cand);
            if d <= MAX_EDITS && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, cand));
            }
        }
        best.map(|(_, w)| w)
    }
}

const MAX_EDITS: usize = 2;

/// Replaces unknown alphabetic tokens with the closest lexicon word within two edits.
///
/// Corrected tokens come out lowercase; known words, numbers and punctuation are untouched.
pub fn spell_correct(text: &str, lex: &Lexicon) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String| {
        if token.is_empty() {
            return;
        }
        let lower = token.to_lowercase();
        let replacement = if token.chars().all(char::is_alphabetic) && !lex.contains(&lower) {
            lex.nearest(&lower)
        } else {
            None
        };
        out.push_str(replacement.unwrap_or(token));
        token.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            token.push(c);
        } else {
            flush(&mut token, &mut out);
            out.push(c);
        }
    }
    flush(&mut token, &mut out);
    out
}
