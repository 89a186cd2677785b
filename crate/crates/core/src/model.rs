//! Document data model and the canonical extraction format.
//!
//! One extraction file holds one layout-parsed document as UTF-8 JSON:
//!
//! ```json
//! {
//!   "doc_id": "...", "title": "...", "source_path": "...",
//!   "pages": [{"page_no": 1, "blocks": [
//!     {"block_id": "p1-b1", "kind": "text", "bbox": [0, 0, 10, 10], "text": "..."},
//!     {"block_id": "p1-b2", "kind": "image", "bbox": [...], "text": "...", "image_kind": "map"},
//!     {"block_id": "p1-b3", "kind": "table", "bbox": [...], "text": "...",
//!      "table": {"header": ["..."], "rows": [["..."]], "caption": "..."}}
//!   ]}]
//! }
//! ```
//!
//! Image and table blocks may additionally carry a `context` object (see
//! [`ContextBundle`]); it is emitted by the `contextualize` command and
//! preserved on re-parse.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid block `{block_id}`: {message}")]
    InvalidBlock { block_id: String, message: String },
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),
}

/// Result type of a block and of a query: page text, an image, or a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Table,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Image, Modality::Table];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Table => "table",
        }
    }

    /// Stable small integer used for partition arrays and on-disk tags.
    pub fn index(self) -> usize {
        match self {
            Modality::Text => 0,
            Modality::Image => 1,
            Modality::Table => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Modality> {
        Modality::ALL.get(i).copied()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            "table" => Ok(Modality::Table),
            other => Err(format!("unknown modality `{other}` (expected text, image or table)")),
        }
    }
}

/// Archaeology-specific image taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Map,
    Photograph,
    SiteLayout,
    Figure,
}

impl ImageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::Map => "map",
            ImageKind::Photograph => "photograph",
            ImageKind::SiteLayout => "site_layout",
            ImageKind::Figure => "figure",
        }
    }
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "map" => Ok(ImageKind::Map),
            "photograph" | "photo" => Ok(ImageKind::Photograph),
            "site_layout" | "site layout" | "layout" => Ok(ImageKind::SiteLayout),
            "figure" => Ok(ImageKind::Figure),
            other => Err(format!("unknown image kind `{other}`")),
        }
    }
}

/// Bounding box `[x0, y0, x1, y1]` in page pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    fn validate(&self) -> Result<(), String> {
        let all = [self.x0, self.y0, self.x1, self.y1];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("bbox coordinates must be finite and non-negative".into());
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err("bbox requires x0 <= x1 and y0 <= y1".into());
        }
        Ok(())
    }
}

/// Missing-cell sentinel written by table cleaning.
pub const NAN_CELL: &str = "NaN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// Searchable text assembled for an image or table block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub target_block_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
    #[serde(default)]
    pub referring_paragraphs: Vec<String>,
    #[serde(default)]
    pub inner_text: String,
    #[serde(default)]
    pub combined_text: String,
}

impl ContextBundle {
    pub fn new(
        target_block_id: impl Into<String>,
        caption: Option<String>,
        ordinal: Option<u32>,
        referring_paragraphs: Vec<String>,
        inner_text: String,
    ) -> Self {
        let combined_text = combine_context(caption.as_deref(), &referring_paragraphs, &inner_text);
        ContextBundle {
            target_block_id: target_block_id.into(),
            caption,
            ordinal,
            referring_paragraphs,
            inner_text,
            combined_text,
        }
    }
}

/// Caption, then paragraphs in order, then inner text; empty parts skipped, joined by `\n`.
pub fn combine_context(caption: Option<&str>, paragraphs: &[String], inner_text: &str) -> String {
    caption
        .into_iter()
        .chain(paragraphs.iter().map(String::as_str))
        .chain(std::iter::once(inner_text))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub block_id: String,
    pub kind: Modality,
    pub bbox: BBox,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_kind: Option<ImageKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextBundle>,
    /// Owning page, filled in during validation.
    #[serde(skip)]
    pub page_no: u32,
}

impl Block {
    pub fn text_block(block_id: impl Into<String>, text: impl Into<String>) -> Self {
        Block {
            block_id: block_id.into(),
            kind: Modality::Text,
            bbox: BBox::from([0.0; 4]),
            text: text.into(),
            image_kind: None,
            table: None,
            context: None,
            page_no: 0,
        }
    }

    pub fn image_block(block_id: impl Into<String>, ocr_text: impl Into<String>, kind: ImageKind) -> Self {
        Block {
            kind: Modality::Image,
            image_kind: Some(kind),
            ..Block::text_block(block_id, ocr_text)
        }
    }

    pub fn table_block(block_id: impl Into<String>, table: TableData) -> Self {
        Block {
            kind: Modality::Table,
            table: Some(table),
            ..Block::text_block(block_id, "")
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let err = |message: String| ModelError::InvalidBlock {
            block_id: self.block_id.clone(),
            message,
        };
        if self.block_id.trim().is_empty() {
            return Err(err("block_id must be non-empty".into()));
        }
        self.bbox.validate().map_err(err)?;
        match (self.kind, self.image_kind.is_some()) {
            (Modality::Image, false) => return Err(err("image block without image_kind".into())),
            (Modality::Text | Modality::Table, true) => {
                return Err(err(format!("image_kind present on a {} block", self.kind)))
            }
            _ => {}
        }
        match (self.kind, &self.table) {
            (Modality::Table, None) => return Err(err("table block without table".into())),
            (Modality::Text | Modality::Image, Some(_)) => {
                return Err(err(format!("table present on a {} block", self.kind)))
            }
            (Modality::Table, Some(t)) if t.header.is_empty() => {
                return Err(err("table header is empty".into()))
            }
            _ => {}
        }
        if self.kind == Modality::Text && self.context.is_some() {
            return Err(err("context present on a text block".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Page {
    pub page_no: u32,
    #[serde(default)]
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedDocument {
    pub doc_id: String,
    pub title: String,
    #[serde(default)]
    pub source_path: String,
    pub pages: Vec<Page>,
}

impl ExtractedDocument {
    /// Checks every invariant and stamps each block with its page number.
    pub fn validate(&mut self) -> Result<(), ModelError> {
        if self.doc_id.trim().is_empty() {
            return Err(ModelError::InvalidDocument("doc_id must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for (i, page) in self.pages.iter_mut().enumerate() {
            let expected = i as u32 + 1;
            if page.page_no != expected {
                return Err(ModelError::InvalidDocument(format!(
                    "pages must be numbered consecutively from 1: found page_no {} at position {expected}",
                    page.page_no
                )));
            }
            for block in &mut page.blocks {
                block.validate()?;
                if !seen.insert(block.block_id.clone()) {
                    return Err(ModelError::InvalidBlock {
                        block_id: block.block_id.clone(),
                        message: "duplicate block_id".into(),
                    });
                }
                block.page_no = page.page_no;
            }
        }
        Ok(())
    }

    pub fn page(&self, page_no: u32) -> Option<&Page> {
        page_no
            .checked_sub(1)
            .and_then(|i| self.pages.get(i as usize))
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.pages.iter().flat_map(|p| p.blocks.iter())
    }

    pub fn count(&self, kind: Modality) -> usize {
        self.blocks().filter(|b| b.kind == kind).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serialization is infallible")
    }
}

/// Parses and validates one canonical extraction file.
pub fn parse_extraction_file(bytes: &[u8]) -> Result<ExtractedDocument, ModelError> {
    let mut doc: ExtractedDocument =
        serde_json::from_slice(bytes).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    doc.validate()?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: String,
    pub title: String,
    pub source_path: String,
    pub num_pages: usize,
    pub num_images: usize,
    pub num_tables: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub num_documents: usize,
    pub num_pages: usize,
    pub num_images: usize,
    pub num_tables: usize,
    pub documents: Vec<DocumentEntry>,
}

impl CorpusManifest {
    pub fn document(&self, doc_id: &str) -> Option<&DocumentEntry> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn contains_page(&self, doc_id: &str, page_no: u32) -> bool {
        self.document(doc_id)
            .is_some_and(|d| page_no >= 1 && (page_no as usize) <= d.num_pages)
    }
}

pub fn build_manifest(docs: &[ExtractedDocument]) -> Result<CorpusManifest, ModelError> {
    let mut seen = HashSet::new();
    let mut manifest = CorpusManifest::default();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(ModelError::DuplicateDocId(doc.doc_id.clone()));
        }
        let entry = DocumentEntry {
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            source_path: doc.source_path.clone(),
            num_pages: doc.pages.len(),
            num_images: doc.count(Modality::Image),
            num_tables: doc.count(Modality::Table),
        };
        manifest.num_documents += 1;
        manifest.num_pages += entry.num_pages;
        manifest.num_images += entry.num_images;
        manifest.num_tables += entry.num_tables;
        manifest.documents.push(entry);
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "doc_id": "d1", "title": "Seals", "source_path": "d1.pdf",
        "pages": [{"page_no": 1, "blocks": [
            {"block_id": "b1", "kind": "text", "bbox": [0, 0, 100, 20], "text": "Harappan seal"}
        ]}]
    }"#;

    #[test]
    fn parses_minimal_document() {
        let doc = parse_extraction_file(MINIMAL.as_bytes()).unwrap();
        assert_eq!(doc.pages.len(), 1);
        assert_eq!(doc.pages[0].blocks.len(), 1);
        assert_eq!(doc.pages[0].blocks[0].text, "Harappan seal");
        assert_eq!(doc.pages[0].blocks[0].page_no, 1);
    }

    #[test]
    fn table_block_without_table_names_block() {
        let src = r#"{"doc_id": "d", "title": "t", "pages": [{"page_no": 1, "blocks": [
            {"block_id": "tbl-7", "kind": "table", "bbox": [0,0,1,1], "text": "x"}]}]}"#;
        match parse_extraction_file(src.as_bytes()) {
            Err(ModelError::InvalidBlock { block_id, .. }) => assert_eq!(block_id, "tbl-7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn image_kind_on_text_block_rejected() {
        let src = r#"{"doc_id": "d", "title": "t", "pages": [{"page_no": 1, "blocks": [
            {"block_id": "b9", "kind": "text", "bbox": [0,0,1,1], "text": "x", "image_kind": "map"}]}]}"#;
        let err = parse_extraction_file(src.as_bytes()).unwrap_err();
        assert!(matches!(err, ModelError::InvalidBlock { ref block_id, .. } if block_id == "b9"));
    }

    #[test]
    fn unknown_image_kind_rejected() {
        let src = r#"{"doc_id": "d", "title": "t", "pages": [{"page_no": 1, "blocks": [
            {"block_id": "b1", "kind": "image", "bbox": [0,0,1,1], "text": "", "image_kind": "diagram"}]}]}"#;
        assert!(matches!(
            parse_extraction_file(src.as_bytes()),
            Err(ModelError::Parse { .. })
        ));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_extraction_file(b"{\n  \"doc_id\": ").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_consecutive_pages_rejected() {
        let src = r#"{"doc_id": "d", "title": "t", "pages": [{"page_no": 2, "blocks": []}]}"#;
        assert!(matches!(
            parse_extraction_file(src.as_bytes()),
            Err(ModelError::InvalidDocument(_))
        ));
    }

    #[test]
    fn inverted_bbox_rejected() {
        let src = r#"{"doc_id": "d", "title": "t", "pages": [{"page_no": 1, "blocks": [
            {"block_id": "b1", "kind": "text", "bbox": [5,0,1,1], "text": "x"}]}]}"#;
        assert!(parse_extraction_file(src.as_bytes()).is_err());
    }

    #[test]
    fn manifest_counts() {
        assert_eq!(build_manifest(&[]).unwrap(), CorpusManifest::default());

        let doc = ExtractedDocument {
            doc_id: "d".into(),
            title: "t".into(),
            source_path: String::new(),
            pages: vec![
                Page {
                    page_no: 1,
                    blocks: vec![Block::image_block("i", "", ImageKind::Map)],
                },
                Page {
                    page_no: 2,
                    blocks: vec![Block::table_block(
                        "t",
                        TableData {
                            header: vec!["a".into()],
                            rows: vec![],
                            caption: None,
                        },
                    )],
                },
            ],
        };
        let m = build_manifest(std::slice::from_ref(&doc)).unwrap();
        assert_eq!(
            (m.num_documents, m.num_pages, m.num_images, m.num_tables),
            (1, 2, 1, 1)
        );
        assert_eq!(
            build_manifest(&[doc.clone(), doc]),
            Err(ModelError::DuplicateDocId("d".into()))
        );
    }

    #[test]
    fn combined_text_order() {
        let b = ContextBundle::new("x", Some("Fig. 1".into()), Some(1), vec!["para".into()], String::new());
        assert_eq!(b.combined_text, "Fig. 1\npara");
    }

    fn arb_block(idx: usize) -> impl Strategy<Value = Block> {
        let text = "[a-zA-Z ]{0,20}";
        prop_oneof![
            text.prop_map(move |t| Block::text_block(format!("b{idx}"), t)),
            (text, 0..4usize).prop_map(move |(t, k)| {
                let kinds = [ImageKind::Map, ImageKind::Photograph, ImageKind::SiteLayout, ImageKind::Figure];
                Block::image_block(format!("b{idx}"), t, kinds[k])
            }),
            proptest::collection::vec(proptest::collection::vec("[a-z0-9]{0,4}", 0..4), 0..3).prop_map(
                move |rows| Block::table_block(
                    format!("b{idx}"),
                    TableData { header: vec!["h".into()], rows, caption: None }
                )
            ),
        ]
    }

    fn arb_doc(id: String) -> impl Strategy<Value = ExtractedDocument> {
        proptest::collection::vec(0..4usize, 0..4).prop_flat_map(move |sizes| {
            let mut counter = 0;
            let pages: Vec<_> = sizes
                .iter()
                .map(|&n| {
                    let blocks: Vec<_> = (0..n)
                        .map(|_| {
                            counter += 1;
                            arb_block(counter)
                        })
                        .collect();
                    blocks
                })
                .collect();
            let id = id.clone();
            pages.prop_map(move |pages| {
                let mut doc = ExtractedDocument {
                    doc_id: id.clone(),
                    title: "t".into(),
                    source_path: String::new(),
                    pages: pages
                        .into_iter()
                        .enumerate()
                        .map(|(i, blocks)| Page { page_no: i as u32 + 1, blocks })
                        .collect(),
                };
                doc.validate().unwrap();
                doc
            })
        })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(doc in arb_doc("d".into())) {
            let parsed = parse_extraction_file(doc.to_json().as_bytes()).unwrap();
            prop_assert_eq!(parsed, doc);
        }

        #[test]
        fn manifest_is_additive(a in arb_doc("a".into()), b in arb_doc("b".into())) {
            let ma = build_manifest(std::slice::from_ref(&a)).unwrap();
            let mb = build_manifest(std::slice::from_ref(&b)).unwrap();
            let mab = build_manifest(&[a, b]).unwrap();
            prop_assert_eq!(mab.num_pages, ma.num_pages + mb.num_pages);
            prop_assert_eq!(mab.num_images, ma.num_images + mb.num_images);
            prop_assert_eq!(mab.num_tables, ma.num_tables + mb.num_tables);
            prop_assert_eq!(mab.num_documents, 2);
        }
    }
}
