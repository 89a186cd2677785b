//! Cleaning of OCR output and context extraction for images and tables.
//!
//! Images and tables are only findable through text, so each one gets a
//! [`ContextBundle`](crate::model::ContextBundle): its caption, every
//! paragraph on the same or an adjacent page that refers to it by number,
//! and the text found inside it (map labels, table cells).

mod bundle;
mod caption;
mod clean;
mod paragraphs;
mod spell;
mod table;

use thiserror::Error;

pub use bundle::{
    build_context_bundle, clean_document, contextualize_document, flatten_table_context,
    is_numeric_cell, TableSummarizer,
};
pub use caption::{detect_caption, detect_in_image_caption, CaptionHit, CaptionSource};
pub use clean::strip_formatting_tags;
pub use paragraphs::{mentions_ordinal, mine_referring_blocks, mine_referring_paragraphs};
pub use spell::{spell_correct, Lexicon};
pub use table::clean_table;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("table header is empty")]
    EmptyHeader,
    #[error("block `{0}` is a text block; context bundles apply to images and tables")]
    TextBlock(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("reading lexicon: {0}")]
    Io(String),
}
