//! JSONL document interchange.
//!
//! One document per line:
//! `{"blocks":[{"text":..,"bbox":[x0,y0,x1,y1],"class":..}],"prompt":{..},"page":{..}}`.
//! Optional block fields are omitted when absent. Box coordinates are written
//! as exact grid fractions and quantized on read.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::{
    quantize, quantize_clipped, Axis, BBox, Block, Document, ModelError, PageSize, PromptConfig,
    SemanticClass,
};

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("block {block}: {source}")]
    Model { block: usize, source: ModelError },
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<SemanticClass>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentRecord {
    blocks: Vec<BlockRecord>,
    prompt: PromptConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    page: Option<PageSize>,
}

/// Serializes a document as one JSON line (no trailing newline).
pub fn to_json_line(doc: &Document) -> String {
    let record = DocumentRecord {
        blocks: doc
            .blocks
            .iter()
            .map(|b| BlockRecord {
                text: b.text.clone(),
                bbox: b.bbox.map(|bb| bb.normalized()),
                class: b.class.clone(),
            })
            .collect(),
        prompt: doc.prompt,
        page: doc.page,
    };
    serde_json::to_string(&record).expect("document records always serialize")
}

/// Reads one JSON document. With `clip`, out-of-range coordinates are clamped
/// to the page instead of rejected. The result is structurally sound but not
/// checked against its prompt; use [`Document::violations`] for that.
pub fn from_json_line(line: &str, clip: bool) -> Result<Document, JsonlError> {
    let record: DocumentRecord = serde_json::from_str(line)?;
    let mut blocks = Vec::with_capacity(record.blocks.len());
    for (index, b) in record.blocks.into_iter().enumerate() {
        let bbox = match b.bbox {
            None => None,
            Some([x0, y0, x1, y1]) => {
                let q = |v: f64, axis: Axis| {
                    if clip {
                        Ok(quantize_clipped(v, axis))
                    } else {
                        quantize(v, axis)
                    }
                };
                let bbox = q(x0, Axis::X)
                    .and_then(|x0| Ok((x0, q(y0, Axis::Y)?)))
                    .and_then(|(x0, y0)| BBox::from_grid(x0, y0, q(x1, Axis::X)?, q(y1, Axis::Y)?))
                    .map_err(|source| JsonlError::Model {
                        block: index,
                        source,
                    })?;
                Some(bbox)
            }
        };
        blocks.push(Block {
            index,
            text: b.text,
            bbox,
            class: b.class,
        });
    }
    Ok(Document {
        blocks,
        prompt: record.prompt,
        page: record.page,
    })
}

/// Parses every non-blank line of a JSONL stream; line numbers in errors are 1-based.
pub fn read_documents(input: &str, clip: bool) -> Result<Vec<Document>, (usize, JsonlError)> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| from_json_line(l, clip).map_err(|e| (i + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::TextMode;

    #[test]
    fn round_trip_and_field_omission() {
        let mut doc = Document::new(PromptConfig::MIP);
        doc.push(Block {
            index: 0,
            text: Some("# Title".into()),
            bbox: Some(BBox::from_grid(118, 331, 901, 358).unwrap()),
            class: Some(SemanticClass::Title),
        });
        doc.page = Some(PageSize {
            width: 1650.0,
            height: 2200.0,
        });
        let line = to_json_line(&doc);
        assert!(line.contains(r#""bbox":[0.115234375,0.25859375,0.8798828125,0.2796875]"#));
        assert!(line.contains(r#""text_mode":"markdown""#));
        assert_eq!(from_json_line(&line, false).unwrap(), doc);

        let plain = Document {
            blocks: vec![Block::text_only(0, "a")],
            prompt: PromptConfig::new(TextMode::Plain, false, false).unwrap(),
            page: None,
        };
        let line = to_json_line(&plain);
        assert_eq!(
            line,
            r#"{"blocks":[{"text":"a"}],"prompt":{"text_mode":"plain","boxes":false,"classes":false}}"#
        );
    }

    #[test]
    fn out_of_range_coordinates() {
        let line = r#"{"blocks":[{"bbox":[0.1,0.1,1.2,0.5]}],"prompt":{"text_mode":"no_text","boxes":true,"classes":false}}"#;
        assert!(from_json_line(line, false).is_err());
        let doc = from_json_line(line, true).unwrap();
        assert_eq!(doc.blocks[0].bbox.unwrap().grid()[2], 1024);
    }
}
