use std::sync::LazyLock;

use regex::Regex;

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?([A-Za-z][A-Za-z0-9]*)[^<>]*>").unwrap());

// Inline formatting tags vanish; everything else (br, p, td, ...) separates words.
const INLINE: &[&str] = &[
    "a", "abbr", "b", "big", "em", "font", "i", "mark", "s", "small", "span", "strike", "strong",
    "sub", "sup", "u",
];

/// Removes well-formed HTML-like tags and normalizes whitespace.
///
/// Stray `<` characters that do not open a tag are kept as text.
pub fn strip_formatting_tags(text: &str) -> String {
    let mut current = text.to_owned();
    // Removing a tag can splice a new one together ("<<b>i>"); repeat until stable.
    loop {
        let next = TAG.replace_all(&current, |caps: &regex::Captures<'_>| {
            let name = caps[1].to_ascii_lowercase();
            if INLINE.contains(&name.as_str()) {
                ""
            } else {
                " "
            }
        });
        if next == current {
            break;
        }
        current = next.into_owned();
    }
    current.split_whitespace().collect::<Vec<_>>().join(" ")
}
