//! Surface normalization shared by the KB, the linker and the vocabulary.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercase, map `_` to a space and collapse whitespace runs to single spaces.
pub fn normalize(surface: &str) -> String {
    let mut out = String::with_capacity(surface.len());
    let mut pending_space = false;
    for ch in surface.chars() {
        if ch == '_' || ch.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(ch.to_lowercase());
    }
    out
}

/// Split a question into normalized word units. Question marks are dropped.
pub fn tokenize(question: &str) -> Vec<String> {
    let cleaned: String = question.chars().filter(|&c| c != '?').collect();
    normalize(&cleaned)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_underscores_and_spaces() {
        assert_eq!(normalize("  Barack_Obama \t Jr "), "barack obama jr");
        assert_eq!(normalize("a__b"), "a b");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn tokenizes_question() {
        assert_eq!(tokenize("Who is Barack_Obama?"), ["who", "is", "barack", "obama"]);
    }
}
