use super::{Chunk, CorpusError, GuidelineDocument, MIN_TARGET_CHUNK_SIZE};

/// Chunk sizing. Sizes count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkerConfig {
    pub target_size: usize,
    /// Characters of trailing context repeated at the start of the next chunk
    /// of the same block. Zero keeps chunks disjoint.
    pub overlap: usize,
}

impl ChunkerConfig {
    pub fn new(target_size: usize) -> Result<Self, CorpusError> {
        if target_size < MIN_TARGET_CHUNK_SIZE {
            return Err(CorpusError::InvalidConfig(format!(
                "target size {target_size} is below {MIN_TARGET_CHUNK_SIZE}"
            )));
        }
        Ok(ChunkerConfig {
            target_size,
            overlap: 0,
        })
    }

    pub fn with_overlap(mut self, overlap: usize) -> Result<Self, CorpusError> {
        if overlap >= self.target_size {
            return Err(CorpusError::InvalidConfig(format!(
                "overlap {overlap} must be smaller than the target size {}",
                self.target_size
            )));
        }
        self.overlap = overlap;
        Ok(self)
    }

    /// Hard upper bound on any produced chunk.
    pub fn max_chunk_chars(&self) -> usize {
        2 * self.target_size
    }
}

/// Collapses whitespace runs to single spaces and trims both ends.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Chunks each block of `doc` independently. Chunk ids are left at zero; see
/// [`assign_chunk_ids`].
pub fn chunk_document(doc: &GuidelineDocument, config: &ChunkerConfig) -> Vec<Chunk> {
    doc.blocks
        .iter()
        .flat_map(|block| {
            chunk_block(&block.text, config)
                .into_iter()
                .map(|text| Chunk::new(&doc.doc_key, block.page, block.kind, text))
        })
        .collect()
}

/// Numbers chunks `0..N` in traversal order (documents, then chunks within).
pub fn assign_chunk_ids(chunks_per_document: Vec<Vec<Chunk>>) -> Vec<Chunk> {
    chunks_per_document
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(id, mut chunk)| {
            chunk.chunk_id = id as u64;
            chunk
        })
        .collect()
}

// A packable piece of text no longer than the target size. `glued` marks a
// piece produced by cutting inside a word: no space followed it originally.
struct Unit {
    text: String,
    chars: usize,
    glued: bool,
}

/// Splits one block's text into chunk texts.
///
/// Whole sentences are packed greedily up to `target_size`. A sentence longer
/// than the target is packed word by word; a single word longer than the target
/// is cut into target-sized pieces. With zero overlap, joining the result with
/// single spaces reproduces `normalize_ws(text)` unless a word had to be cut.
pub fn chunk_block(text: &str, config: &ChunkerConfig) -> Vec<String> {
    let normalized = normalize_ws(text);
    if normalized.is_empty() {
        return Vec::new();
    }
    let target = config.target_size;

    let mut units = Vec::new();
    for sentence in sentences(&normalized) {
        let chars = sentence.chars().count();
        if chars <= target {
            units.push(Unit {
                text: sentence.to_string(),
                chars,
                glued: false,
            });
        } else {
            split_long_sentence(sentence, target, &mut units);
        }
    }

    let content = pack(units, target);
    if config.overlap == 0 {
        return content;
    }
    with_overlap(content, config.overlap)
}

fn sentences(normalized: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in normalized.char_indices() {
        if c != ' ' {
            continue;
        }
        if ends_sentence(&normalized[start..i]) {
            out.push(&normalized[start..i]);
            start = i + 1;
        }
    }
    if start < normalized.len() {
        out.push(&normalized[start..]);
    }
    out
}

fn ends_sentence(segment: &str) -> bool {
    let trimmed = segment.trim_end_matches([')', ']', '"', '\'', '\u{201d}', '\u{2019}']);
    trimmed.ends_with(['.', '!', '?'])
}

fn split_long_sentence(sentence: &str, target: usize, units: &mut Vec<Unit>) {
    let mut words = Vec::new();
    for word in sentence.split(' ') {
        let chars = word.chars().count();
        if chars <= target {
            words.push(Unit {
                text: word.to_string(),
                chars,
                glued: false,
            });
            continue;
        }
        let pieces: Vec<char> = word.chars().collect();
        let n = pieces.len().div_ceil(target);
        for (i, piece) in pieces.chunks(target).enumerate() {
            words.push(Unit {
                text: piece.iter().collect(),
                chars: piece.len(),
                glued: i + 1 < n,
            });
        }
    }
    for text in pack(words, target) {
        let chars = text.chars().count();
        units.push(Unit {
            text,
            chars,
            glued: false,
        });
    }
}

fn pack(units: Vec<Unit>, target: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut current_chars = 0;
    let mut prev_glued = false;
    for unit in units {
        let sep = usize::from(!prev_glued);
        if current_chars > 0 && current_chars + sep + unit.chars <= target {
            if sep == 1 {
                current.push(' ');
            }
            current.push_str(&unit.text);
            current_chars += sep + unit.chars;
        } else {
            if current_chars > 0 {
                out.push(std::mem::take(&mut current));
            }
            current = unit.text;
            current_chars = unit.chars;
        }
        prev_glued = unit.glued;
    }
    if current_chars > 0 {
        out.push(current);
    }
    out
}

fn with_overlap(content: Vec<String>, overlap: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(content.len());
    for (i, text) in content.iter().enumerate() {
        if i == 0 {
            out.push(text.clone());
            continue;
        }
        let mut tail: Vec<&str> = Vec::new();
        let mut tail_chars = 0;
        for word in content[i - 1].rsplit(' ') {
            let add = word.chars().count() + usize::from(!tail.is_empty());
            if tail_chars + add > overlap {
                break;
            }
            tail.push(word);
            tail_chars += add;
        }
        if tail.is_empty() {
            out.push(text.clone());
        } else {
            tail.reverse();
            out.push(format!("{} {}", tail.join(" "), text));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkKind, PageBlock};
    use proptest::prelude::*;

    fn cfg(target: usize) -> ChunkerConfig {
        ChunkerConfig::new(target).unwrap()
    }

    #[test]
    fn short_block_is_one_chunk() {
        let text = "a".repeat(249) + ".";
        let chunks = chunk_block(&text, &cfg(1000));
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].chars().count(), 250);
    }

    #[test]
    fn sentence_packing_2500_chars() {
        // 99 sentences of 24 chars and one of 25, space-joined: 2500 chars.
        let mut sentences: Vec<String> = (0..99).map(|i| format!("{:0>23}.", i)).collect();
        sentences.push(format!("{:0>24}.", 99));
        let text = sentences.join(" ");
        assert_eq!(text.chars().count(), 2500);

        let chunks = chunk_block(&text, &cfg(1000));
        assert_eq!(chunks.len(), 3);
        for c in &chunks {
            let n = c.chars().count();
            assert!((500..=1040).contains(&n), "size {n}");
            assert!(c.ends_with('.'));
        }
        assert_eq!(chunks.join(" "), text);
    }

    #[test]
    fn table_kind_is_inherited() {
        let doc = GuidelineDocument {
            doc_key: "t".into(),
            title: "t".into(),
            blocks: vec![PageBlock {
                page: 4,
                kind: ChunkKind::Table,
                text: "cell value ".repeat(300),
            }],
        };
        let chunks = chunk_document(&doc, &cfg(1000));
        assert!(chunks.len() > 1);
        assert!(chunks
            .iter()
            .all(|c| c.kind == ChunkKind::Table && c.page == 4));
    }

    #[test]
    fn ids_are_dense_across_documents() {
        let mk = |key: &str, n: usize| -> Vec<Chunk> {
            (0..n)
                .map(|i| Chunk::new(key, 1, ChunkKind::Paragraph, format!("{key}{i}")))
                .collect()
        };
        let chunks = assign_chunk_ids(vec![mk("a", 2), mk("b", 3)]);
        let ids: Vec<u64> = chunks.iter().map(|c| c.chunk_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert_eq!(chunks[2].doc_key, "b");
        assert!(assign_chunk_ids(Vec::new()).is_empty());
    }

    #[test]
    fn overlong_word_is_cut_hard() {
        let word = "x".repeat(2500);
        let text = format!("start {word} end.");
        let chunks = chunk_block(&text, &cfg(1000));
        assert!(chunks.iter().all(|c| c.chars().count() <= 1000));
        let stripped: String = chunks.concat().split_whitespace().collect();
        let expected: String = text.split_whitespace().collect();
        assert_eq!(stripped, expected);
    }

    #[test]
    fn overlap_repeats_trailing_words() {
        let text = (0..200)
            .map(|i| format!("word{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        let c = cfg(100).with_overlap(20).unwrap();
        let chunks = chunk_block(&text, &c);
        assert!(chunks.len() > 1);
        let plain = chunk_block(&text, &cfg(100));
        let prefix = chunks[1]
            .strip_suffix(plain[1].as_str())
            .unwrap()
            .trim_end();
        assert!(!prefix.is_empty() && prefix.chars().count() <= 20);
        assert!(plain[0].ends_with(prefix));
        assert!(chunks.iter().all(|c| c.chars().count() <= 200));
    }

    #[test]
    fn config_validation() {
        assert!(ChunkerConfig::new(99).is_err());
        assert!(cfg(100).with_overlap(100).is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_and_size_bound(
            words in prop::collection::vec("[a-zé]{1,30}[.!?]?", 1..300),
            seps in prop::collection::vec(prop_oneof![Just(" "), Just("  "), Just("\n"), Just("\t ")], 300),
            target in 100usize..400,
        ) {
            let mut text = String::from("  ");
            for (w, s) in words.iter().zip(&seps) {
                text.push_str(w);
                text.push_str(s);
            }
            let chunks = chunk_block(&text, &cfg(target));
            prop_assert_eq!(chunks.join(" "), normalize_ws(&text));
            for c in &chunks {
                let n = c.chars().count();
                prop_assert!(n >= 1 && n <= 2 * target);
            }
        }
    }
}
