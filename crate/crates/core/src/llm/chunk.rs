use serde::{Deserialize, Serialize};

/// Chunking defaults, in characters.
pub const DEFAULT_MAX_CHARS: usize = 4000;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;
/// How far back a boundary may move to land after a sentence terminator.
pub const SNAP_WINDOW: usize = 200;

/// A contiguous slice of the source. `char_span` counts Unicode scalar
/// values, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_index: usize,
    pub text: String,
    pub char_span: (usize, usize),
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// Split `source` into chunks of at most `max_chars` characters where each
/// chunk after the first starts `overlap_chars` before the previous one
/// ended. A boundary snaps back to just after the closest sentence
/// terminator within [`SNAP_WINDOW`] characters, else it is a hard cut.
///
/// Panics if `max_chars <= overlap_chars`.
pub fn chunk_text(source: &str, max_chars: usize, overlap_chars: usize) -> Vec<Chunk> {
    assert!(
        max_chars > overlap_chars,
        "max_chars ({max_chars}) must exceed overlap_chars ({overlap_chars})"
    );
    let chars: Vec<char> = source.chars().collect();
    // byte offset of every char position, plus the end
    let mut byte_at: Vec<usize> = source.char_indices().map(|(b, _)| b).collect();
    byte_at.push(source.len());

    let n = chars.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = if n - start <= max_chars {
            n
        } else {
            let hard = start + max_chars;
            // boundary must stay past start + overlap so the next chunk advances
            let lowest = hard
                .saturating_sub(SNAP_WINDOW)
                .max(start + overlap_chars + 1);
            (lowest..=hard)
                .rev()
                .find(|&k| is_terminator(chars[k - 1]))
                .unwrap_or(hard)
        };
        chunks.push(Chunk {
            chunk_index: chunks.len(),
            text: source[byte_at[start]..byte_at[end]].to_string(),
            char_span: (start, end),
        });
        if end == n {
            break;
        }
        start = end - overlap_chars;
    }
    chunks
}

/// Inverse of [`chunk_text`]: drop each later chunk's leading overlap.
pub fn dechunk(chunks: &[Chunk], overlap_chars: usize) -> String {
    let mut out = String::new();
    for (i, c) in chunks.iter().enumerate() {
        if i == 0 {
            out.push_str(&c.text);
        } else {
            out.extend(c.text.chars().skip(overlap_chars));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_source_is_one_chunk() {
        let c = chunk_text("Hello there. Bye.", 4000, 200);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "Hello there. Bye.");
        assert_eq!(c[0].char_span, (0, 17));
    }

    #[test]
    fn hard_cuts_without_terminators() {
        let src: String = std::iter::repeat_n("abcdefghij", 1000).collect();
        let c = chunk_text(&src, 4000, 0);
        assert_eq!(c.len(), 3);
        assert_eq!(
            c.iter().map(|c| c.char_span).collect::<Vec<_>>(),
            [(0, 4000), (4000, 8000), (8000, 10000)]
        );
        assert_eq!(dechunk(&c, 0), src);
    }

    #[test]
    fn snaps_to_sentence_end() {
        let src = format!("{}. {}", "a".repeat(90), "b".repeat(200));
        let c = chunk_text(&src, 100, 10);
        assert_eq!(c[0].char_span, (0, 91));
        assert!(c[0].text.ends_with('.'));
        assert_eq!(c[1].char_span.0, 81);
        assert_eq!(dechunk(&c, 10), src);
    }

    #[test]
    fn consecutive_chunks_overlap_exactly() {
        let src = "One. Two! Three? Four.\nFive and six. ".repeat(50);
        let c = chunk_text(&src, 120, 30);
        for w in c.windows(2) {
            assert_eq!(w[0].char_span.1 - w[1].char_span.0, 30);
            assert!(w[0].char_span.1 - w[0].char_span.0 <= 120);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn dechunk_reconstructs_source(
            src in "[a-zé .!?\n]{1,3000}",
            max in 20usize..600,
            overlap_frac in 0.0f64..0.9,
        ) {
            let overlap = ((max as f64) * overlap_frac) as usize;
            let chunks = chunk_text(&src, max, overlap);
            prop_assert_eq!(dechunk(&chunks, overlap), src.clone());
            let n = src.chars().count();
            prop_assert_eq!(chunks.first().unwrap().char_span.0, 0);
            prop_assert_eq!(chunks.last().unwrap().char_span.1, n);
            for c in &chunks {
                prop_assert!(c.char_span.1 - c.char_span.0 <= max);
            }
        }
    }
}
