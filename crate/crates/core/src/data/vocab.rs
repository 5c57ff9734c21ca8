use serde::{Deserialize, Serialize};

use crate::error::{MiclError, Result};

/// Lower-cases and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Fixed-size vocabulary mapping words to ids by FNV-1a hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingVocab {
    size: usize,
}

impl HashingVocab {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > u32::MAX as usize {
            return Err(MiclError::Config(format!("vocabulary size {size} out of range")));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn id(&self, word: &str) -> u32 {
        (fnv1a(word.as_bytes()) % self.size as u64) as u32
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<u32> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn ids_stay_in_range() {
        let v = HashingVocab::new(7).unwrap();
        for w in ["love", "hate", "photo", ""] {
            assert!(v.id(w) < 7);
        }
        assert!(HashingVocab::new(0).is_err());
    }

    #[test]
    fn tokenize_lowercases() {
        assert_eq!(tokenize("I  LOVE\tMondays"), vec!["i", "love", "mondays"]);
    }
}
