//! Shared text handling: word tokens, sentence segmentation, normalization.

use std::sync::OnceLock;

use regex::Regex;

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:'[\p{L}\p{N}]+)*").unwrap())
}

/// Lowercased word tokens; punctuation is dropped.
pub fn words(text: &str) -> Vec<String> {
    word_re()
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .collect()
}

/// Whitespace token count.
pub fn whitespace_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Split into sentences at `.`, `!` or `?` followed by whitespace (or the end
/// of the text). Runs like `??` stay attached to their sentence. Returned
/// slices are trimmed substrings of `text`.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

/// Canonical form used for uniqueness and training-set membership checks:
/// lowercase, single spaces, no terminal punctuation.
pub fn normalize_question(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(['?', '.', '!', ' '])
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_drop_punctuation_and_keep_contractions() {
        assert_eq!(words("Don't you have MONEY?"), ["don't", "you", "have", "money"]);
    }

    #[test]
    fn sentence_split_keeps_punctuation_runs() {
        assert_eq!(sentences("Really?? Why?"), ["Really??", "Why?"]);
        assert_eq!(
            sentences("Where do you live? I moved twice."),
            ["Where do you live?", "I moved twice."]
        );
        assert_eq!(sentences("v1.2 is out"), ["v1.2 is out"]);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_question("  Where   do you LIVE ?? "), "where do you live");
    }
}
