//! Word-level sentiment resources: a polarity lexicon with antonyms, and the
//! synonym table used for paraphrasing.

use std::collections::HashMap;

use crate::error::{MiclError, Result};

/// Source of per-word sentiment polarity in `[-1, 1]`.
pub trait PolarityLexicon {
    fn polarity(&self, word: &str) -> Option<f64>;

    /// Word of opposite polarity used by sentiment flipping.
    fn antonym(&self, word: &str) -> Option<&str>;

    fn is_sentiment_word(&self, word: &str) -> bool {
        self.polarity(word).is_some()
    }
}

/// Built-in antonym pairs: (positive, negative, magnitude).
const SENTIMENT_PAIRS: &[(&str, &str, f64)] = &[
    ("love", "hate", 1.0),
    ("great", "terrible", 0.9),
    ("happy", "sad", 0.8),
    ("good", "bad", 0.7),
    ("wonderful", "awful", 0.9),
    ("beautiful", "ugly", 0.8),
    ("best", "worst", 1.0),
    ("amazing", "horrible", 0.9),
    ("nice", "nasty", 0.6),
    ("fun", "boring", 0.6),
    ("perfect", "broken", 0.8),
    ("glad", "upset", 0.7),
    ("excellent", "poor", 0.8),
    ("brilliant", "dull", 0.7),
    ("enjoy", "dread", 0.7),
    ("fantastic", "dreadful", 0.9),
];

/// Built-in neutral synonym pairs.
const NEUTRAL_PAIRS: &[(&str, &str)] = &[
    ("photo", "picture"),
    ("car", "vehicle"),
    ("today", "now"),
    ("street", "road"),
    ("dog", "puppy"),
    ("house", "home"),
    ("city", "town"),
    ("food", "meal"),
    ("morning", "dawn"),
    ("weather", "climate"),
    ("train", "railway"),
    ("phone", "mobile"),
    ("work", "job"),
    ("friend", "buddy"),
    ("movie", "film"),
    ("game", "match"),
    ("shop", "store"),
    ("kid", "child"),
    ("sea", "ocean"),
    ("rain", "shower"),
    ("boss", "manager"),
    ("team", "squad"),
    ("trip", "journey"),
    ("lunch", "dinner"),
    ("traffic", "congestion"),
    ("monday", "weekday"),
    ("bus", "coach"),
    ("office", "workplace"),
    ("class", "lesson"),
    ("news", "report"),
    ("party", "gathering"),
    ("sky", "clouds"),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    polarity: f64,
    antonym: Option<String>,
}

/// In-memory polarity lexicon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    entries: HashMap<String, Entry>,
    pairs: Vec<(String, String)>,
}

impl Lexicon {
    pub fn builtin() -> Self {
        let mut lex = Lexicon::default();
        for &(pos, neg, mag) in SENTIMENT_PAIRS {
            lex.insert_pair(pos, neg, mag).expect("built-in magnitudes are valid");
        }
        lex
    }

    /// Adds `positive` at `+magnitude` and `negative` at `-magnitude` as
    /// mutual antonyms.
    pub fn insert_pair(&mut self, positive: &str, negative: &str, magnitude: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&magnitude) || magnitude == 0.0 {
            return Err(MiclError::Config(format!(
                "polarity magnitude {magnitude} must be in (0, 1]"
            )));
        }
        self.entries.insert(
            positive.to_string(),
            Entry {
                polarity: magnitude,
                antonym: Some(negative.to_string()),
            },
        );
        self.entries.insert(
            negative.to_string(),
            Entry {
                polarity: -magnitude,
                antonym: Some(positive.to_string()),
            },
        );
        self.pairs.push((positive.to_string(), negative.to_string()));
        Ok(())
    }

    pub fn insert_word(&mut self, word: &str, polarity: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&polarity) {
            return Err(MiclError::Config(format!("polarity {polarity} outside [-1, 1]")));
        }
        self.entries.insert(
            word.to_string(),
            Entry {
                polarity,
                antonym: None,
            },
        );
        Ok(())
    }

    /// Parses `word<TAB>polarity[<TAB>antonym]` lines; `#` starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        let mut antonyms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let polarity: f64 = fields
                .get(1)
                .and_then(|p| p.trim().parse().ok())
                .ok_or_else(|| {
                    MiclError::Config(format!("lexicon line {}: bad polarity", lineno + 1))
                })?;
            lex.insert_word(fields[0].trim(), polarity)?;
            if let Some(ant) = fields.get(2) {
                antonyms.push((fields[0].trim().to_string(), ant.trim().to_string()));
            }
        }
        for (word, ant) in antonyms {
            if let Some(e) = lex.entries.get_mut(&word) {
                e.antonym = Some(ant);
            }
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Antonym pairs in insertion order, positive word first.
    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

impl PolarityLexicon for Lexicon {
    fn polarity(&self, word: &str) -> Option<f64> {
        self.entries.get(word).map(|e| e.polarity)
    }

    fn antonym(&self, word: &str) -> Option<&str> {
        self.entries.get(word).and_then(|e| e.antonym.as_deref())
    }
}

/// Deterministic word substitution table for paraphrasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynonymTable {
    map: HashMap<String, String>,
}

impl SynonymTable {
    /// Built-in neutral pairs plus same-polarity pairings of the lexicon's
    /// antonym pairs (consecutive pairs swap their positive words and their
    /// negative words).
    pub fn builtin(lexicon: &Lexicon) -> Self {
        let mut table = SynonymTable::default();
        for &(a, b) in NEUTRAL_PAIRS {
            table.insert_pair(a, b);
        }
        for chunk in lexicon.pairs().chunks(2) {
            if let [(p1, n1), (p2, n2)] = chunk {
                table.insert_pair(p1, p2);
                table.insert_pair(n1, n2);
            }
        }
        table
    }

    pub fn insert_pair(&mut self, a: &str, b: &str) {
        self.map.insert(a.to_string(), b.to_string());
        self.map.insert(b.to_string(), a.to_string());
    }

    pub fn synonym(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(String::as_str)
    }
}

/// The built-in neutral vocabulary, in pair order.
pub fn neutral_words() -> impl Iterator<Item = &'static str> {
    NEUTRAL_PAIRS.iter().flat_map(|&(a, b)| [a, b])
}
