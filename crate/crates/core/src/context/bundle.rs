use super::caption::{detect_caption, CaptionSource};
use super::paragraphs::mine_referring_blocks;
use super::{clean_table, spell_correct, strip_formatting_tags, ContextError, Lexicon};
use crate::model::{Block, ContextBundle, ExtractedDocument, Modality, Page, TableData, NAN_CELL};

const SUMMARY_TOKENS: usize = 30;

/// Optional source of model-written table captions.
pub trait TableSummarizer {
    fn summarize(&self, table: &TableData) -> Option<String>;
}

impl<F: Fn(&TableData) -> Option<String>> TableSummarizer for F {
    fn summarize(&self, table: &TableData) -> Option<String> {
        self(table)
    }
}

/// Integers or decimals, allowing thousands separators and one trailing `%`.
pub fn is_numeric_cell(cell: &str) -> bool {
    let s: String = cell.trim().chars().filter(|&c| c != ',').collect();
    let s = s.strip_suffix('%').unwrap_or(&s);
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => digits(int) && digits(f) && !(int.is_empty() && f.is_empty()),
    }
}

/// Header names plus every non-numeric, non-empty cell, space separated.
pub fn flatten_table_context(table: &TableData) -> String {
    table
        .header
        .iter()
        .chain(table.rows.iter().flatten())
        .map(|c| c.trim())
        .filter(|c| !c.is_empty() && *c != NAN_CELL && !is_numeric_cell(c))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Assembles the searchable context of an image or table block.
///
/// Caption precedence: `caption` argument, then a "Fig./Figure N" (or
/// "Table N") sentence in the block's own text, then for tables a summary
/// built from the first cell tokens.
pub fn build_context_bundle(
    block: &Block,
    caption: Option<&str>,
    paragraphs: Vec<String>,
) -> Result<ContextBundle, ContextError> {
    let kind = block.kind;
    if kind == Modality::Text {
        return Err(ContextError::TextBlock(block.block_id.clone()));
    }
    let inner_text = match (&block.table, kind) {
        (Some(t), Modality::Table) => flatten_table_context(t),
        _ => block.text.trim().to_owned(),
    };

    let explicit = caption.map(str::trim).filter(|c| !c.is_empty());
    let (caption, ordinal) = match explicit {
        Some(c) => (
            Some(c.to_owned()),
            detect_caption(c, kind, CaptionSource::PageText).map(|h| h.ordinal),
        ),
        None => match detect_caption(&block.text, kind, CaptionSource::InImageText) {
            Some(hit) => (Some(hit.caption_text), Some(hit.ordinal)),
            None if kind == Modality::Table => {
                let head: Vec<&str> = inner_text.split_whitespace().take(SUMMARY_TOKENS).collect();
                (Some(format!("Table summary: {}", head.join(" "))), None)
            }
            None => (None, None),
        },
    };
    Ok(ContextBundle::new(
        block.block_id.clone(),
        caption,
        ordinal,
        paragraphs,
        inner_text,
    ))
}

/// Strips formatting tags everywhere, spell-corrects page text when a lexicon
/// is given, and normalizes tables.
pub fn clean_document(
    doc: &ExtractedDocument,
    lexicon: Option<&Lexicon>,
) -> Result<ExtractedDocument, ContextError> {
    let mut out = doc.clone();
    for block in out.pages.iter_mut().flat_map(|p| p.blocks.iter_mut()) {
        let mut text = strip_formatting_tags(&block.text);
        if let (Modality::Text, Some(lex)) = (block.kind, lexicon) {
            text = spell_correct(&text, lex);
        }
        block.text = text;
        if let Some(table) = &block.table {
            let mut cleaned = clean_table(&table.header, &table.rows)?;
            cleaned.caption = table
                .caption
                .as_deref()
                .map(strip_formatting_tags)
                .filter(|c| !c.is_empty());
            block.table = Some(cleaned);
        }
    }
    Ok(out)
}

/// A caption printed on the page right next to the block (after it, then before it).
fn adjacent_caption(page: &Page, index: usize, kind: Modality) -> Option<&Block> {
    let after = page.blocks.get(index + 1);
    let before = index.checked_sub(1).and_then(|i| page.blocks.get(i));
    [after, before].into_iter().flatten().find(|b| {
        b.kind == Modality::Text
            && detect_caption(&b.text, kind, CaptionSource::PageText)
                .is_some_and(|hit| b.text.trim_start().starts_with(&hit.caption_text))
    })
}

/// Builds a bundle for every image and table block of an (already cleaned) document,
/// in reading order.
pub fn contextualize_document(
    doc: &ExtractedDocument,
    summarizer: Option<&dyn TableSummarizer>,
) -> Result<Vec<ContextBundle>, ContextError> {
    let mut bundles = Vec::new();
    for (pi, page) in doc.pages.iter().enumerate() {
        let previous = pi.checked_sub(1).and_then(|i| doc.pages.get(i));
        let next = doc.pages.get(pi + 1);
        for (bi, block) in page.blocks.iter().enumerate() {
            if block.kind == Modality::Text {
                continue;
            }
            let caption_block = adjacent_caption(page, bi, block.kind);
            let mut caption: Option<String> = block
                .table
                .as_ref()
                .and_then(|t| t.caption.clone())
                .or_else(|| caption_block.map(|b| b.text.trim().to_owned()));

            let ordinal = match &caption {
                Some(c) => detect_caption(c, block.kind, CaptionSource::PageText).map(|h| h.ordinal),
                None => detect_caption(&block.text, block.kind, CaptionSource::InImageText).map(|h| h.ordinal),
            };
            if caption.is_none() && ordinal.is_none() {
                if let (Some(table), Some(s)) = (&block.table, summarizer) {
                    caption = s.summarize(table);
                }
            }

            let paragraphs = match ordinal {
                Some(n) => mine_referring_blocks(n, block.kind, previous, page, next)
                    .into_iter()
                    .filter(|b| caption_block.is_none_or(|c| c.block_id != b.block_id))
                    .map(|b| b.text.clone())
                    .collect(),
                None => Vec::new(),
            };
            bundles.push(build_context_bundle(block, caption.as_deref(), paragraphs)?);
        }
    }
    Ok(bundles)
}
