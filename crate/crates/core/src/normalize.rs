//! Keyword normalization: lowercase, lemmatize, merge synonyms.

use std::collections::BTreeMap;

pub trait Normalizer: Send + Sync {
    /// Normalized form of `keyword`; empty when nothing usable remains.
    fn normalize(&self, keyword: &str) -> String;
}

pub trait Lemmatizer: Send + Sync {
    fn lemma(&self, word: &str) -> String;
}

/// Leaves words untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoLemma;

impl Lemmatizer for NoLemma {
    fn lemma(&self, word: &str) -> String {
        word.to_string()
    }
}

/// Strips regular English plural suffixes.
#[derive(Debug, Default, Clone, Copy)]
pub struct PluralLemmatizer;

impl Lemmatizer for PluralLemmatizer {
    fn lemma(&self, word: &str) -> String {
        let w = word;
        if w.len() > 4 && w.ends_with("ies") {
            return format!("{}y", &w[..w.len() - 3]);
        }
        for suffix in ["sses", "ches", "shes", "xes"] {
            if w.ends_with(suffix) {
                return w[..w.len() - 2].to_string();
            }
        }
        if w.len() > 3
            && w.ends_with('s')
            && !w.ends_with("ss")
            && !w.ends_with("us")
            && !w.ends_with("is")
        {
            return w[..w.len() - 1].to_string();
        }
        w.to_string()
    }
}

/// Default rule-based pipeline.
pub struct RuleNormalizer {
    lemmatizer: Box<dyn Lemmatizer>,
    synonyms: BTreeMap<String, String>,
}

impl Default for RuleNormalizer {
    fn default() -> Self {
        let synonyms = [
            ("a/c", "ac"),
            ("air conditioning", "central air conditioning"),
            ("w/d", "washer/dryer"),
            ("washer and dryer", "washer/dryer"),
            ("walk in closet", "walk-in closet"),
            ("sq ft", "sqft"),
            ("square feet", "sqft"),
            ("bbq", "barbecue"),
        ];
        Self::new(
            Box::new(NoLemma),
            synonyms.iter().map(|(a, b)| (a.to_string(), b.to_string())),
        )
    }
}

impl RuleNormalizer {
    pub fn new(
        lemmatizer: Box<dyn Lemmatizer>,
        synonyms: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        Self {
            lemmatizer,
            synonyms: synonyms.into_iter().collect(),
        }
    }
}

impl Normalizer for RuleNormalizer {
    fn normalize(&self, keyword: &str) -> String {
        let cleaned: Vec<String> = keyword
            .to_lowercase()
            .split_whitespace()
            .map(|w| {
                w.trim_matches(|c: char| !c.is_alphanumeric() && c != '/' && c != '\'' && c != '-')
            })
            .filter(|w| !w.is_empty())
            .map(|w| self.lemmatizer.lemma(w))
            .collect();
        let phrase = cleaned.join(" ");
        self.synonyms.get(&phrase).cloned().unwrap_or(phrase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lowercases_and_strips_punctuation() {
        let n = RuleNormalizer::default();
        assert_eq!(n.normalize("Bedrooms."), "bedrooms");
        assert_eq!(n.normalize("  Walk In  Closet "), "walk-in closet");
        assert_eq!(n.normalize("A/C"), "ac");
        assert_eq!(n.normalize("..."), "");
    }

    #[test]
    fn plural_lemmatizer() {
        let l = PluralLemmatizer;
        assert_eq!(l.lemma("bedrooms"), "bedroom");
        assert_eq!(l.lemma("amenities"), "amenity");
        assert_eq!(l.lemma("glass"), "glass");
        assert_eq!(l.lemma("benches"), "bench");
    }
}
