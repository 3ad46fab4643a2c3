//! Conversions between byte offsets and LSP positions (UTF-16 columns).

use super::types::Position;

/// Line table over a document, for repeated offset/position conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIndex {
    text: String,
    line_starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        Self { text: text.to_string(), line_starts }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    fn line(&self, line: usize) -> &str {
        let start = self.line_starts[line];
        let end = self.line_starts.get(line + 1).map_or(self.text.len(), |s| *s);
        self.text[start..end].trim_end_matches(['\n', '\r'])
    }

    /// Position of a byte offset. Offsets inside a multi-byte char round down.
    pub fn position(&self, offset: usize) -> Position {
        let offset = offset.min(self.text.len());
        let line = match self.line_starts.binary_search(&offset) {
            Ok(l) => l,
            Err(l) => l - 1,
        };
        let start = self.line_starts[line];
        let text = self.line(line);
        let col = (offset - start).min(text.len());
        Position::new(line as u32, utf8_to_utf16_col(text, col))
    }

    /// Byte offset of a position. Columns past the end of a line clamp to it;
    /// lines past the end of the document are `None`.
    pub fn offset(&self, pos: Position) -> Option<usize> {
        let line = pos.line as usize;
        if line >= self.line_starts.len() {
            return None;
        }
        let text = self.line(line);
        Some(self.line_starts[line] + utf16_to_utf8_col(text, pos.character))
    }

    pub fn end_position(&self) -> Position {
        self.position(self.text.len())
    }

    pub fn contains(&self, pos: Position) -> bool {
        let line = pos.line as usize;
        line < self.line_starts.len()
            && pos.character as usize <= self.line(line).encode_utf16().count()
    }
}

/// UTF-16 column of byte column `byte_col` within `line`.
pub fn utf8_to_utf16_col(line: &str, byte_col: usize) -> u32 {
    let mut units = 0u32;
    for (i, c) in line.char_indices() {
        if i >= byte_col {
            break;
        }
        units += c.len_utf16() as u32;
    }
    units
}

/// Byte column of UTF-16 column `col` within `line`, clamped to the line end.
/// A column that falls inside a surrogate pair rounds up to the next char.
pub fn utf16_to_utf8_col(line: &str, col: u32) -> usize {
    let mut units = 0u32;
    for (i, c) in line.char_indices() {
        if units >= col {
            return i;
        }
        units += c.len_utf16() as u32;
    }
    line.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_positions() {
        let idx = LineIndex::new("ab\ncd\n");
        assert_eq!(idx.position(0), Position::new(0, 0));
        assert_eq!(idx.position(4), Position::new(1, 1));
        assert_eq!(idx.position(6), Position::new(2, 0));
        assert_eq!(idx.offset(Position::new(1, 1)), Some(4));
        assert_eq!(idx.offset(Position::new(9, 0)), None);
    }

    #[test]
    fn multibyte_columns() {
        // '∀' is 3 bytes / 1 unit, '𝔹' is 4 bytes / 2 units.
        let idx = LineIndex::new("∀ 𝔹 x");
        assert_eq!(idx.position(4), Position::new(0, 2));
        assert_eq!(idx.position(9), Position::new(0, 5));
        assert_eq!(idx.offset(Position::new(0, 5)), Some(9));
        assert_eq!(idx.offset(Position::new(0, 3)), Some(8));
    }

    #[test]
    fn crlf_lines() {
        let idx = LineIndex::new("a\r\nb");
        assert_eq!(idx.position(3), Position::new(1, 0));
        assert_eq!(idx.offset(Position::new(0, 5)), Some(1));
    }

    proptest! {
        #[test]
        fn char_boundaries_round_trip(text in "[a-z ∀→αβ𝔹\n]{0,60}") {
            let idx = LineIndex::new(&text);
            for (off, _) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
                let pos = idx.position(off);
                prop_assert_eq!(idx.offset(pos), Some(off));
            }
        }

        #[test]
        fn utf16_column_matches_std_encoder(line in "[a-z∀→𝔹]{0,30}") {
            for (off, _) in line.char_indices() {
                let expected = line[..off].encode_utf16().count() as u32;
                prop_assert_eq!(utf8_to_utf16_col(&line, off), expected);
                prop_assert_eq!(utf16_to_utf8_col(&line, expected), off);
            }
        }
    }
}
