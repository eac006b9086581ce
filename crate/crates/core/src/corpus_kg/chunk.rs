use serde::{Deserialize, Serialize};

use super::KgError;
use crate::text::token_spans;

/// One input document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: u64,
    pub doc_id: String,
    pub text: String,
    pub token_count: usize,
    /// Index of the first token within the document.
    pub start_token: usize,
    /// Byte range of `text` within the document.
    pub byte_start: usize,
    pub byte_end: usize,
}

/// Splits every document into windows of `chunk_size` tokens that advance by
/// `chunk_size - overlap` tokens. A chunk's text runs from its first token to
/// the start of the token after its last one, so the chunks of a document,
/// with each overlap removed once, concatenate back to the document.
pub fn chunk_corpus(
    documents: &[Document],
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, KgError> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(KgError::InvalidChunking { chunk_size, overlap });
    }
    if documents.is_empty() {
        return Err(KgError::EmptyCorpus);
    }
    let stride = chunk_size - overlap;
    let mut chunks = Vec::new();
    for doc in documents {
        let spans = token_spans(&doc.text);
        let n = spans.len();
        if n == 0 {
            log::warn!("document {} has no tokens; skipped", doc.doc_id);
            continue;
        }
        let mut start = 0;
        loop {
            let end = (start + chunk_size).min(n);
            let byte_start = if start == 0 { 0 } else { spans[start].start };
            let byte_end = if end == n { doc.text.len() } else { spans[end].start };
            chunks.push(Chunk {
                chunk_id: chunks.len() as u64,
                doc_id: doc.doc_id.clone(),
                text: doc.text[byte_start..byte_end].to_string(),
                token_count: end - start,
                start_token: start,
                byte_start,
                byte_end,
            });
            if end == n {
                break;
            }
            start += stride;
        }
    }
    if chunks.is_empty() {
        return Err(KgError::EmptyCorpus);
    }
    Ok(chunks)
}

/// Rebuilds each document from its chunks by dropping the overlapping
/// prefix of every chunk after the first.
pub fn reassemble(chunks: &[Chunk]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut last_end = 0;
    for c in chunks {
        match out.last_mut() {
            Some((doc, text)) if *doc == c.doc_id => {
                let skip = last_end - c.byte_start;
                text.push_str(&c.text[skip..]);
            }
            _ => out.push((c.doc_id.clone(), c.text.clone())),
        }
        last_end = c.byte_end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::count_tokens;
    use proptest::prelude::*;

    fn doc(tokens: usize) -> Document {
        let text = (0..tokens).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        Document { doc_id: "d".into(), text }
    }

    #[test]
    fn small_doc_single_chunk() {
        let chunks = chunk_corpus(&[doc(100)], 1200, 100).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 100);
    }

    #[test]
    fn long_doc_starts() {
        let chunks = chunk_corpus(&[doc(2400)], 1200, 100).unwrap();
        // ceil((2400 - 1200) / (1200 - 100)) + 1 = 3
        let expected = (2400usize - 1200).div_ceil(1200 - 100) + 1;
        assert_eq!(chunks.len(), expected);
        let starts: Vec<usize> = chunks.iter().map(|c| c.start_token).collect();
        assert_eq!(starts, vec![0, 1100, 2200]);
        assert!(chunks.iter().all(|c| c.token_count <= 1200));
        assert_eq!(count_tokens(&chunks[1].text), 1200);
        assert_eq!(chunks[2].token_count, 200);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(chunk_corpus(&[], 1200, 100), Err(KgError::EmptyCorpus)));
        assert!(matches!(chunk_corpus(&[doc(3)], 10, 10), Err(KgError::InvalidChunking { .. })));
    }

    proptest! {
        #[test]
        fn chunks_reassemble_documents(
            texts in prop::collection::vec("[a-z ,.!]{0,200}", 1..4),
            size in 2usize..40,
            overlap_frac in 0.0f64..1.0,
        ) {
            let overlap = ((size - 1) as f64 * overlap_frac) as usize;
            let docs: Vec<Document> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document { doc_id: format!("d{i}"), text: t.clone() })
                .collect();
            match chunk_corpus(&docs, size, overlap) {
                Ok(chunks) => {
                    for c in &chunks {
                        prop_assert!(c.token_count <= size);
                        prop_assert_eq!(count_tokens(&c.text), c.token_count);
                    }
                    let rebuilt = reassemble(&chunks);
                    let expected: Vec<(String, String)> = docs
                        .iter()
                        .filter(|d| count_tokens(&d.text) > 0)
                        .map(|d| (d.doc_id.clone(), d.text.clone()))
                        .collect();
                    prop_assert_eq!(rebuilt, expected);
                }
                Err(KgError::EmptyCorpus) => {
                    prop_assert!(docs.iter().all(|d| count_tokens(&d.text) == 0));
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
