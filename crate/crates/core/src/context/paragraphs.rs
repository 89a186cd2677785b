use std::sync::LazyLock;

use regex::Regex;

use crate::model::{Block, Modality, Page};

static FIGURE_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:figure|fig\.?)\s*(\d+)").unwrap());
static TABLE_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:table|tab\.)\s*(\d+)").unwrap());

/// True if `text` refers to figure (or table) number `ordinal` as a whole number.
pub fn mentions_ordinal(text: &str, ordinal: u32, kind: Modality) -> bool {
    let re = match kind {
        Modality::Table => &*TABLE_REF,
        _ => &*FIGURE_REF,
    };
    // `\d+` is greedy, so "Figure 21" captures 21 and never equals 2.
    re.captures_iter(text)
        .any(|c| c[1].parse::<u64>().is_ok_and(|n| n == ordinal as u64))
}

/// Text blocks on the previous, same and next page that mention the ordinal,
/// in page order then reading order.
pub fn mine_referring_blocks<'a>(
    target_ordinal: u32,
    target_kind: Modality,
    previous: Option<&'a Page>,
    same: &'a Page,
    next: Option<&'a Page>,
) -> Vec<&'a Block> {
    [previous, Some(same), next]
        .into_iter()
        .flatten()
        .flat_map(|p| p.blocks.iter())
        .filter(|b| b.kind == Modality::Text && mentions_ordinal(&b.text, target_ordinal, target_kind))
        .collect()
}

/// Each text block counts as one paragraph.
pub fn mine_referring_paragraphs(
    target_ordinal: u32,
    target_kind: Modality,
    previous: Option<&Page>,
    same: &Page,
    next: Option<&Page>,
) -> Vec<String> {
    mine_referring_blocks(target_ordinal, target_kind, previous, same, next)
        .into_iter()
        .map(|b| b.text.clone())
        .collect()
}
