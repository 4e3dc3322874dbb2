//! Shared text normalisation.
//!
//! Titles and model output are compared on the same token stream: lowercase,
//! with every non-alphanumeric character acting as a separator.

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation_and_case() {
        assert_eq!(tokenize("Apple, The (Sib)"), ["apple", "the", "sib"]);
        assert_eq!(normalize("  X-Men\n"), "x men");
        assert_eq!(normalize("Carlito's Way"), "carlito s way");
        assert!(tokenize("--- !!").is_empty());
        assert_eq!(tokenize("Amélie"), ["amélie"]);
    }
}
