use thiserror::Error;

use super::Entry;

/// A test case decoded word by word. Entry `i` sits at byte offset `4 * i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodedStream {
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("stream length {len} is not a multiple of 4 ({} trailing bytes)", len % 4)]
    TrailingBytes { len: usize },
    #[error("line {line}: cannot parse `{text}` as a 32-bit hex word")]
    BadHexWord { line: usize, text: String },
}

impl DecodedStream {
    pub fn from_words(words: impl IntoIterator<Item = u32>) -> Self {
        DecodedStream {
            entries: words.into_iter().map(Entry::from_word).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn offsets(&self) -> impl Iterator<Item = (usize, &Entry)> {
        self.entries.iter().enumerate().map(|(i, e)| (i * 4, e))
    }

    pub fn words(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(Entry::word)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.words().flat_map(u32::to_le_bytes).collect()
    }
}

/// Splits a little-endian byte stream into decoded entries.
pub fn decode_stream(bytes: &[u8]) -> Result<DecodedStream, StreamError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(StreamError::TrailingBytes { len: bytes.len() });
    }
    Ok(DecodedStream::from_words(
        bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])),
    ))
}

/// Parses the text seed form: one hex word per line, `#` starts a comment.
pub fn parse_hex_text(text: &str) -> Result<Vec<u32>, StreamError> {
    let mut words = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let digits = line
            .strip_prefix("0x")
            .or_else(|| line.strip_prefix("0X"))
            .unwrap_or(line);
        let word = u32::from_str_radix(digits, 16).map_err(|_| StreamError::BadHexWord {
            line: idx + 1,
            text: line.to_string(),
        })?;
        words.push(word);
    }
    Ok(words)
}

pub fn to_hex_text(words: impl IntoIterator<Item = u32>) -> String {
    words.into_iter().map(|w| format!("0x{w:08x}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_nops() {
        let stream = decode_stream(&[0x13, 0, 0, 0, 0x13, 0, 0, 0]).unwrap();
        assert_eq!(stream.len(), 2);
        for entry in &stream.entries {
            let inst = entry.as_inst().unwrap();
            assert_eq!(inst.mnemonic(), "addi");
            assert_eq!(inst.word, 0x13);
        }
    }

    #[test]
    fn empty_and_trailing() {
        assert!(decode_stream(&[]).unwrap().is_empty());
        assert_eq!(
            decode_stream(&[0; 5]),
            Err(StreamError::TrailingBytes { len: 5 })
        );
    }

    #[test]
    fn hex_text_comments_and_errors() {
        let text = "# header\n0x00000013\n  00208463  # beq\n\n0XDEADBEEF\n";
        assert_eq!(
            parse_hex_text(text).unwrap(),
            vec![0x13, 0x0020_8463, 0xdead_beef]
        );
        assert_eq!(
            parse_hex_text("0x13\nnope\n"),
            Err(StreamError::BadHexWord {
                line: 2,
                text: "nope".into()
            })
        );
        assert!(parse_hex_text("0x123456789").is_err());
    }

    proptest! {
        #[test]
        fn byte_round_trip(words in proptest::collection::vec(any::<u32>(), 0..64)) {
            let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
            let stream = decode_stream(&bytes).unwrap();
            prop_assert_eq!(stream.to_bytes(), bytes);
            prop_assert_eq!(parse_hex_text(&to_hex_text(stream.words())).unwrap(), words);
        }
    }
}
