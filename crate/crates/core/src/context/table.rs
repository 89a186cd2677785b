use super::{strip_formatting_tags, ContextError};
use crate::model::{TableData, NAN_CELL};

fn clean_cell(cell: &str) -> String {
    let stripped = strip_formatting_tags(cell);
    if stripped.is_empty() {
        NAN_CELL.to_owned()
    } else {
        stripped
    }
}

/// Forces every row to the header width (pad with `NaN`, truncate on the right)
/// and fills empty cells with `NaN`.
pub fn clean_table(header: &[String], rows: &[Vec<String>]) -> Result<TableData, ContextError> {
    if header.is_empty() {
        return Err(ContextError::EmptyHeader);
    }
    let width = header.len();
    let rows = rows
        .iter()
        .map(|row| {
            let mut cleaned: Vec<String> = row.iter().take(width).map(|c| clean_cell(c)).collect();
            cleaned.resize(width, NAN_CELL.to_owned());
            cleaned
        })
        .collect();
    Ok(TableData {
        header: header.iter().map(|h| clean_cell(h)).collect(),
        rows,
        caption: None,
    })
}
