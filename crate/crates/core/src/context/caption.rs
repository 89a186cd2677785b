use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::Modality;

static FIGURE_CAPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:fig\.|figure)\s*(\d+)").unwrap());
static TABLE_CAPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:tab\.|table)\s*(\d+)").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptionSource {
    InImageText,
    PageText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionHit {
    pub ordinal: u32,
    pub caption_text: String,
    pub source: CaptionSource,
}

/// Finds a "Fig. N ..." / "Figure N ..." caption inside OCR text from an image.
///
/// The caption runs from the keyword to the end of its sentence.
pub fn detect_in_image_caption(ocr_text: &str) -> Option<CaptionHit> {
    detect_caption(ocr_text, Modality::Image, CaptionSource::InImageText)
}

/// Caption detection for either figure (`Image`) or table keywords.
pub fn detect_caption(text: &str, kind: Modality, source: CaptionSource) -> Option<CaptionHit> {
    let re = match kind {
        Modality::Table => &*TABLE_CAPTION,
        _ => &*FIGURE_CAPTION,
    };
    for caps in re.captures_iter(text) {
        let Ok(ordinal) = caps[1].parse::<u32>() else {
            continue;
        };
        if ordinal == 0 {
            continue;
        }
        let whole = caps.get(0).unwrap();
        let rest = &text[whole.end()..];
        let end = rest
            .find(['.', '!', '?'])
            .map_or(text.len(), |i| whole.end() + i);
        let caption_text = text[whole.start()..end].trim_end().to_owned();
        return Some(CaptionHit {
            ordinal,
            caption_text,
            source,
        });
    }
    None
}
