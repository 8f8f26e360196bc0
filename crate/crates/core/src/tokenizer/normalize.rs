use std::sync::OnceLock;

use regex::Regex;

fn separators() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}\s]+").expect("static pattern"))
}

/// Lowercases `raw`, turns every run of Unicode punctuation and whitespace
/// into a single space and strips the ends.
///
/// Punctuation becomes a separator rather than being deleted, so
/// `"rock&roll"` yields `"rock roll"`.
pub fn normalize_text(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = separators().replace_all(&lowered, " ");
    collapsed.trim_matches(' ').to_string()
}

/// Splits normalized text into its space-delimited words.
pub(crate) fn words(normalized: &str) -> impl Iterator<Item = &str> {
    normalized.split(' ').filter(|w| !w.is_empty())
}
