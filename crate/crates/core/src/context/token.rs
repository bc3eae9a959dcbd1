use serde::{Deserialize, Serialize};

/// Where a token came from. Only [`Provenance::Generated`] tokens are trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Generated,
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    id: u32,
    provenance: Provenance,
}

impl Token {
    pub fn new(id: u32, provenance: Provenance) -> Self {
        Self { id, provenance }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_generated(&self) -> bool {
        self.provenance == Provenance::Generated
    }
}

/// Characters that always form a token of their own.
pub const DELIMITERS: &[char] = &['{', '}', '[', ']', '(', ')', '<', '>', ':', ',', ';', '='];

fn piece_id(piece: &str) -> u32 {
    // FNV-1a
    let mut hash: u32 = 0x811c_9dc5;
    for byte in piece.as_bytes() {
        hash ^= u32::from(*byte);
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

/// Splits text into token pieces: one per whitespace-delimited word, with every
/// structural delimiter split out as its own piece.
pub fn pieces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (pos, ch) in word.char_indices() {
            if DELIMITERS.contains(&ch) {
                if start < pos {
                    out.push(&word[start..pos]);
                }
                out.push(&word[pos..pos + ch.len_utf8()]);
                start = pos + ch.len_utf8();
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

pub fn tokenize(text: &str, provenance: Provenance) -> Vec<Token> {
    pieces(text).into_iter().map(|p| Token::new(piece_id(p), provenance)).collect()
}

/// Token count of `text` under the simulation tokenizer, without allocating tokens.
pub fn count_text_tokens(text: &str) -> usize {
    let mut n = 0;
    for word in text.split_whitespace() {
        let mut in_run = false;
        for ch in word.chars() {
            if DELIMITERS.contains(&ch) {
                n += 1;
                in_run = false;
            } else if !in_run {
                n += 1;
                in_run = true;
            }
        }
    }
    n
}

/// Returns the longest prefix of `text` holding at most `limit` whitespace words.
pub fn truncate_words(text: &str, limit: usize) -> &str {
    let mut seen = 0;
    let mut in_word = false;
    for (pos, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_word {
                in_word = false;
            }
        } else if !in_word {
            if seen == limit {
                return text[..pos].trim_end();
            }
            seen += 1;
            in_word = true;
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_and_delimiters() {
        assert_eq!(
            pieces("search(query=abc, topk=1)"),
            vec!["search", "(", "query", "=", "abc", ",", "topk", "=", "1", ")"]
        );
        assert_eq!(count_text_tokens("search(query=abc, topk=1)"), 10);
        assert_eq!(count_text_tokens(""), 0);
        assert_eq!(count_text_tokens("  hello   world "), 2);
    }

    #[test]
    fn counting_agrees_with_tokenizer() {
        for text in ["a:b:c", "::", "x (y) z", "{\"k\": [1, 2]}", "plain words only"] {
            assert_eq!(count_text_tokens(text), tokenize(text, Provenance::Generated).len());
        }
    }

    #[test]
    fn ids_are_stable() {
        let a = tokenize("same word same", Provenance::Observation);
        assert_eq!(a[0].id(), a[2].id());
        assert_ne!(a[0].id(), a[1].id());
        assert!(a.iter().all(|t| !t.is_generated()));
    }

    #[test]
    fn truncation_keeps_word_prefix() {
        assert_eq!(truncate_words("a b  c d", 2), "a b");
        assert_eq!(truncate_words("a b", 5), "a b");
        assert_eq!(truncate_words("a b", 0), "");
    }
}
