//! Sentence segmentation and a deterministic toy tokenizer.
//!
//! The tokenizer is intentionally simple: lowercase, punctuation split into
//! separate tokens, whitespace-separated words, fixed vocabulary with an UNK
//! fallback. What matters for the rest of the pipeline is the SOT/EOT/PAD
//! layout contract of [`TokenSequence`], not subword fidelity.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved token ids. Word ids start at [`FIRST_WORD_ID`].
pub const PAD_ID: u32 = 0;
pub const SOT_ID: u32 = 1;
pub const EOT_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const FIRST_WORD_ID: u32 = 4;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("caption is empty after trimming")]
    EmptyCaption,
    #[error("fixed padding of {requested} exceeds available post-padding {available}")]
    FixedPadTooLarge { requested: usize, available: usize },
    #[error("sequence already carries {n_pre} pre-padding tokens")]
    AlreadyRedistributed { n_pre: usize },
}

/// A caption together with its ordered sentence decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub raw: String,
    pub sentences: Vec<String>,
}

impl Caption {
    /// Rebuild a caption from sentences, joining with single spaces.
    pub fn from_sentences(sentences: Vec<String>) -> Self {
        let raw = sentences.join(" ");
        Caption { raw, sentences }
    }

    /// Number of sentences `k`.
    pub fn k(&self) -> usize {
        self.sentences.len()
    }
}

/// Split raw text into sentences on `.`, `!` or `?` followed by whitespace
/// or end of string. Terminal punctuation stays attached to its sentence.
pub fn split_sentences(raw: &str) -> Result<Caption, TextError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(TextError::EmptyCaption);
    }
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = trimmed.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(n) => n.is_whitespace(),
            };
            if boundary {
                let s = current.trim();
                if !s.is_empty() {
                    sentences.push(s.to_string());
                }
                current.clear();
            }
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    if sentences.is_empty() {
        return Err(TextError::EmptyCaption);
    }
    Ok(Caption {
        raw: trimmed.to_string(),
        sentences,
    })
}

/// Lowercase and split text into word/punctuation tokens.
pub fn normalize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if matches!(c, '.' | ',' | '!' | '?' | ';' | ':') {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_string());
        } else {
            for lc in c.to_lowercase() {
                word.push(lc);
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Injective token-to-id mapping with reserved SOT/EOT/PAD/UNK slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), FIRST_WORD_ID + i as u32))
            .collect();
        Vocabulary { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    /// Build from a corpus of texts; word ids are assigned in sorted order
    /// so construction is independent of input ordering.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: Vec<String> = texts
            .into_iter()
            .flat_map(|t| normalize(t))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        words.sort();
        Vocabulary::from(words)
    }

    /// Total id space including the four reserved ids.
    pub fn size(&self) -> usize {
        self.words.len() + FIRST_WORD_ID as usize
    }

    pub fn encode_token(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn decode(&self, id: u32) -> Option<&str> {
        match id {
            PAD_ID => Some("<pad>"),
            SOT_ID => Some("<sot>"),
            EOT_ID => Some("<eot>"),
            UNK_ID => Some("<unk>"),
            _ => self
                .words
                .get((id - FIRST_WORD_ID) as usize)
                .map(|s| s.as_str()),
        }
    }
}

/// Fixed-length id vector with SOT/EOT/PAD bookkeeping.
///
/// Default layout is `[SOT, PAD*n_pre, tokens.., EOT, PAD*n_post]`; the
/// pre-SOT padding variant moves the pre-padding before SOT instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub sot_index: usize,
    pub eot_index: usize,
    pub n_pre: usize,
    pub n_post: usize,
    pub text_len: usize,
    pub truncated: bool,
}

impl TokenSequence {
    /// Context window length.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The ordered caption tokens (excluding specials and padding).
    pub fn caption_tokens(&self) -> &[u32] {
        let start = self.eot_index - self.text_len;
        &self.ids[start..self.eot_index]
    }

    /// Check the slot-accounting invariants; used by tests and debug paths.
    pub fn check_invariants(&self) -> Result<(), String> {
        let l = self.ids.len();
        if self.n_pre + self.text_len + self.n_post + 2 != l {
            return Err(format!(
                "slot accounting broken: {} + {} + {} + 2 != {}",
                self.n_pre, self.text_len, self.n_post, l
            ));
        }
        if self.ids[self.sot_index] != SOT_ID {
            return Err("SOT not at sot_index".into());
        }
        if self.ids[self.eot_index] != EOT_ID {
            return Err("EOT not at eot_index".into());
        }
        if self.ids[self.eot_index + 1..].iter().any(|&id| id != PAD_ID) {
            return Err("non-PAD token after EOT".into());
        }
        Ok(())
    }
}

/// How trailing padding is redistributed toward the front of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Leave the sequence as tokenized.
    None,
    /// Move a uniform `U{0..n_post}` number of PADs to just after SOT.
    Random,
    /// Move exactly `n` PADs to just after SOT.
    Fixed(usize),
    /// Like `Random`, but insert the padding before the SOT token.
    PreSot,
}

/// Tokenize a caption into the `[SOT, tokens.., EOT, PAD..]` layout.
///
/// Captions longer than `l_ctx - 2` tokens are truncated to fit and flagged;
/// EOT is always present.
pub fn tokenize(caption: &Caption, vocab: &Vocabulary, l_ctx: usize) -> TokenSequence {
    assert!(l_ctx >= 3, "context window must hold SOT, EOT and one token");
    let mut tokens: Vec<u32> = normalize(&caption.raw)
        .iter()
        .map(|t| vocab.encode_token(t))
        .collect();
    let max_text = l_ctx - 2;
    let truncated = tokens.len() > max_text;
    if truncated {
        tokens.truncate(max_text);
    }
    let text_len = tokens.len();
    let mut ids = Vec::with_capacity(l_ctx);
    ids.push(SOT_ID);
    ids.extend_from_slice(&tokens);
    ids.push(EOT_ID);
    ids.resize(l_ctx, PAD_ID);
    TokenSequence {
        ids,
        sot_index: 0,
        eot_index: text_len + 1,
        n_pre: 0,
        n_post: l_ctx - text_len - 2,
        text_len,
        truncated,
    }
}

/// Recover the normalized word sequence from a token sequence.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.caption_tokens()
        .iter()
        .filter_map(|&id| vocab.decode(id))
        .map(|s| s.to_string())
        .collect()
}

/// Move part of the trailing padding in front of the caption tokens.
///
/// The multiset of non-PAD tokens and the total length are unchanged; only
/// the offset of the caption tokens moves.
pub fn redistribute_padding<R: Rng + ?Sized>(
    seq: &TokenSequence,
    rng: &mut R,
    mode: PaddingMode,
) -> Result<TokenSequence, TextError> {
    if seq.n_pre != 0 {
        return Err(TextError::AlreadyRedistributed { n_pre: seq.n_pre });
    }
    let n_post = seq.n_post;
    let (n_pre, pre_sot) = match mode {
        PaddingMode::None => (0, false),
        PaddingMode::Random => (rng.random_range(0..=n_post), false),
        PaddingMode::Fixed(n) => {
            if n > n_post {
                return Err(TextError::FixedPadTooLarge {
                    requested: n,
                    available: n_post,
                });
            }
            (n, false)
        }
        PaddingMode::PreSot => (rng.random_range(0..=n_post), true),
    };
    if n_pre == 0 {
        return Ok(seq.clone());
    }
    let l_ctx = seq.ids.len();
    let mut ids = Vec::with_capacity(l_ctx);
    let sot_index;
    if pre_sot {
        ids.resize(n_pre, PAD_ID);
        ids.push(SOT_ID);
        sot_index = n_pre;
    } else {
        ids.push(SOT_ID);
        ids.resize(1 + n_pre, PAD_ID);
        sot_index = 0;
    }
    ids.extend_from_slice(seq.caption_tokens());
    ids.push(EOT_ID);
    ids.resize(l_ctx, PAD_ID);
    Ok(TokenSequence {
        eot_index: n_pre + seq.text_len + 1,
        sot_index,
        n_pre,
        n_post: n_post - n_pre,
        text_len: seq.text_len,
        truncated: seq.truncated,
        ids,
    })
}

/// Render a token sequence as a human-readable layout string.
pub fn render_layout(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    let parts: Vec<&str> = seq.ids.iter().filter_map(|&id| vocab.decode(id)).collect();
    format!("[{}]", parts.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(texts: &[&str]) -> Vocabulary {
        Vocabulary::build(texts.iter().copied())
    }

    #[test]
    fn splits_on_terminal_periods() {
        let c = split_sentences("A cat. A dog.").unwrap();
        assert_eq!(c.sentences, vec!["A cat.", "A dog."]);
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        let c = split_sentences("Hello world").unwrap();
        assert_eq!(c.sentences, vec!["Hello world"]);
    }

    #[test]
    fn summary_first_sentence_stays_intact() {
        let raw = "A high angle view of an old faded street corner. In the middle of \
                   the view is the orange spray painted word below a horizontal line.";
        let c = split_sentences(raw).unwrap();
        assert_eq!(
            c.sentences[0],
            "A high angle view of an old faded street corner."
        );
        assert_eq!(c.k(), 2);
    }

    #[test]
    fn blank_caption_is_rejected() {
        assert!(matches!(split_sentences("   "), Err(TextError::EmptyCaption)));
    }

    #[test]
    fn minimal_layout() {
        let v = vocab(&["cat"]);
        let c = split_sentences("cat").unwrap();
        let seq = tokenize(&c, &v, 4);
        assert_eq!(seq.ids, vec![SOT_ID, FIRST_WORD_ID, EOT_ID, PAD_ID]);
        assert_eq!(seq.eot_index, 2);
        assert_eq!(seq.n_post, 1);
        seq.check_invariants().unwrap();
    }

    #[test]
    fn exact_fill_has_no_post_padding() {
        let v = vocab(&["a b c"]);
        let c = split_sentences("a b c").unwrap();
        let seq = tokenize(&c, &v, 5);
        assert_eq!(seq.n_post, 0);
        assert!(!seq.truncated);
        seq.check_invariants().unwrap();
    }

    #[test]
    fn overlong_caption_truncates_and_keeps_eot() {
        let v = vocab(&["a b c d e"]);
        let c = split_sentences("a b c d e").unwrap();
        let seq = tokenize(&c, &v, 4);
        assert!(seq.truncated);
        assert_eq!(seq.text_len, 2);
        assert_eq!(seq.ids[3], EOT_ID);
        seq.check_invariants().unwrap();
    }

    #[test]
    fn tokenize_detokenize_round_trip() {
        let text = "The tram is old, rusty and slow. It waits near the stop!";
        let v = vocab(&[text]);
        let c = split_sentences(text).unwrap();
        let seq = tokenize(&c, &v, 32);
        assert_eq!(detokenize(&seq, &v), normalize(text));
    }

    #[test]
    fn redistribute_identity_without_post_padding() {
        let v = vocab(&["a b c"]);
        let seq = tokenize(&split_sentences("a b c").unwrap(), &v, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = redistribute_padding(&seq, &mut rng, PaddingMode::Random).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn fixed_redistribution_layout() {
        let v = vocab(&["x y"]);
        let seq = tokenize(&split_sentences("x y").unwrap(), &v, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = redistribute_padding(&seq, &mut rng, PaddingMode::Fixed(2)).unwrap();
        let x = v.encode_token("x");
        let y = v.encode_token("y");
        assert_eq!(out.ids, vec![SOT_ID, PAD_ID, PAD_ID, x, y, EOT_ID, PAD_ID]);
        assert_eq!(out.n_pre, 2);
        assert_eq!(out.n_post, 1);
        out.check_invariants().unwrap();
    }

    #[test]
    fn fixed_redistribution_overflow() {
        let v = vocab(&["x"]);
        let seq = tokenize(&split_sentences("x").unwrap(), &v, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = redistribute_padding(&seq, &mut rng, PaddingMode::Fixed(5)).unwrap_err();
        assert!(matches!(err, TextError::FixedPadTooLarge { .. }));
    }

    #[test]
    fn pre_sot_moves_sot() {
        let v = vocab(&["x"]);
        let seq = tokenize(&split_sentences("x").unwrap(), &v, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // draw until a nonzero prefix shows up
        let out = loop {
            let out = redistribute_padding(&seq, &mut rng, PaddingMode::PreSot).unwrap();
            if out.n_pre > 0 {
                break out;
            }
        };
        assert_eq!(out.sot_index, out.n_pre);
        assert_eq!(out.ids[..out.n_pre], vec![PAD_ID; out.n_pre][..]);
        out.check_invariants().unwrap();
    }

    #[test]
    fn redistribution_preserves_token_order() {
        let text = "one two three four five six.";
        let v = vocab(&[text]);
        let seq = tokenize(&split_sentences(text).unwrap(), &v, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let out = redistribute_padding(&seq, &mut rng, PaddingMode::Random).unwrap();
            assert_eq!(out.caption_tokens(), seq.caption_tokens());
            assert_eq!(out.len(), seq.len());
            out.check_invariants().unwrap();
        }
    }

    #[test]
    fn tokenize_is_deterministic() {
        let text = "A dog runs. A cat sleeps.";
        let v = vocab(&[text]);
        let c = split_sentences(text).unwrap();
        assert_eq!(tokenize(&c, &v, 16), tokenize(&c, &v, 16));
    }
}
