//! Core domain types: semantic classes, grid-quantized boxes, blocks,
//! documents and the three-axis prompt configuration.
//!
//! Coordinates are stored as integer indices on a 1024 × 1280 grid, so every
//! stored box is exactly representable and serializes losslessly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Horizontal grid resolution.
pub const GRID_X: u32 = 1024;
/// Vertical grid resolution.
pub const GRID_Y: u32 = 1280;

/// Errors raised by the domain model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("coordinate {value} on axis {axis} is outside [0, 1]")]
    CoordinateOutOfRange { value: f64, axis: Axis },
    #[error("grid index {index} on axis {axis} exceeds {}", axis.grid_size())]
    GridIndexOutOfRange { index: u64, axis: Axis },
    #[error("box corners are inverted: ({x0}, {y0}) is not above-left of ({x1}, {y1})")]
    InvertedBox { x0: u32, y0: u32, x1: u32, y1: u32 },
    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),
    #[error("invalid prompt combination: {0}")]
    InvalidCombination(String),
    #[error("block {block}: {message}")]
    Contract { block: usize, message: String },
    #[error("document: {0}")]
    Document(String),
}

/// Coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const fn grid_size(self) -> u32 {
        match self {
            Axis::X => GRID_X,
            Axis::Y => GRID_Y,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

/// Maps a normalized coordinate onto the grid, rounding half away from zero.
pub fn quantize(value: f64, axis: Axis) -> Result<u32, ModelError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(ModelError::CoordinateOutOfRange { value, axis });
    }
    Ok((value * f64::from(axis.grid_size())).round() as u32)
}

/// Like [`quantize`], but clamps out-of-range (and NaN, to zero) values instead of failing.
pub fn quantize_clipped(value: f64, axis: Axis) -> u32 {
    let v = if value.is_nan() {
        0.0
    } else {
        value.clamp(0.0, 1.0)
    };
    (v * f64::from(axis.grid_size())).round() as u32
}

/// Inverse of [`quantize`]: `index / G`.
pub fn dequantize(index: u32, axis: Axis) -> Result<f64, ModelError> {
    if index > axis.grid_size() {
        return Err(ModelError::GridIndexOutOfRange {
            index: u64::from(index),
            axis,
        });
    }
    Ok(f64::from(index) / f64::from(axis.grid_size()))
}

/// Canonical surface form of a grid coordinate: the normalized value at four decimals.
///
/// Four decimals are enough for the round trip through [`quantize`] to be exact,
/// since the finest grid step (1/1280) is far wider than the rounding error.
pub fn format_coord(index: u32, axis: Axis) -> String {
    format!("{:.4}", f64::from(index) / f64::from(axis.grid_size()))
}

/// Layout role of a block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemanticClass {
    Title,
    SectionHeader,
    Text,
    ListItem,
    Formula,
    PageHeader,
    PageFooter,
    Footnote,
    Table,
    Picture,
    Caption,
    /// Any class name outside the known vocabulary, kept byte-identical.
    Other(String),
}

impl SemanticClass {
    /// Every known label, in declaration order.
    pub const KNOWN: [SemanticClass; 11] = [
        SemanticClass::Title,
        SemanticClass::SectionHeader,
        SemanticClass::Text,
        SemanticClass::ListItem,
        SemanticClass::Formula,
        SemanticClass::PageHeader,
        SemanticClass::PageFooter,
        SemanticClass::Footnote,
        SemanticClass::Table,
        SemanticClass::Picture,
        SemanticClass::Caption,
    ];

    /// Token spelling, e.g. `Section-Header`.
    pub fn label(&self) -> &str {
        match self {
            SemanticClass::Title => "Title",
            SemanticClass::SectionHeader => "Section-Header",
            SemanticClass::Text => "Text",
            SemanticClass::ListItem => "List-Item",
            SemanticClass::Formula => "Formula",
            SemanticClass::PageHeader => "Page-Header",
            SemanticClass::PageFooter => "Page-Footer",
            SemanticClass::Footnote => "Footnote",
            SemanticClass::Table => "Table",
            SemanticClass::Picture => "Picture",
            SemanticClass::Caption => "Caption",
            SemanticClass::Other(name) => name,
        }
    }

    /// Resolves a label; unknown names become [`SemanticClass::Other`].
    pub fn from_label(label: &str) -> Self {
        Self::KNOWN
            .iter()
            .find(|c| c.label() == label)
            .cloned()
            .unwrap_or_else(|| SemanticClass::Other(label.to_owned()))
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, SemanticClass::Other(_))
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for SemanticClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for SemanticClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        if label.is_empty() || label.contains('>') {
            return Err(serde::de::Error::custom(format!(
                "invalid class label {label:?}"
            )));
        }
        Ok(SemanticClass::from_label(&label))
    }
}

/// Axis-aligned box stored as grid indices (x on the 1024 grid, y on the 1280 grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    x0: u16,
    y0: u16,
    x1: u16,
    y1: u16,
}

impl BBox {
    /// Builds a box from grid indices. Degenerate boxes (zero width or height) are allowed.
    pub fn from_grid(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, ModelError> {
        for (index, axis) in [(x0, Axis::X), (y0, Axis::Y), (x1, Axis::X), (y1, Axis::Y)] {
            if index > axis.grid_size() {
                return Err(ModelError::GridIndexOutOfRange {
                    index: u64::from(index),
                    axis,
                });
            }
        }
        if x0 > x1 || y0 > y1 {
            return Err(ModelError::InvertedBox { x0, y0, x1, y1 });
        }
        Ok(BBox {
            x0: x0 as u16,
            y0: y0 as u16,
            x1: x1 as u16,
            y1: y1 as u16,
        })
    }

    /// Quantizes normalized coordinates onto the grid.
    pub fn from_normalized(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, ModelError> {
        Self::from_grid(
            quantize(x0, Axis::X)?,
            quantize(y0, Axis::Y)?,
            quantize(x1, Axis::X)?,
            quantize(y1, Axis::Y)?,
        )
    }

    /// Grid indices `[x0, y0, x1, y1]`.
    pub fn grid(&self) -> [u32; 4] {
        [
            u32::from(self.x0),
            u32::from(self.y0),
            u32::from(self.x1),
            u32::from(self.y1),
        ]
    }

    /// Normalized coordinates `[x0, y0, x1, y1]`.
    pub fn normalized(&self) -> [f64; 4] {
        let [x0, y0, x1, y1] = self.grid();
        let (gx, gy) = (f64::from(GRID_X), f64::from(GRID_Y));
        [
            f64::from(x0) / gx,
            f64::from(y0) / gy,
            f64::from(x1) / gx,
            f64::from(y1) / gy,
        ]
    }

    /// Linear denormalization to pixel space.
    pub fn to_pixels(&self, page: PageSize) -> [f64; 4] {
        let [x0, y0, x1, y1] = self.normalized();
        [
            x0 * page.width,
            y0 * page.height,
            x1 * page.width,
            y1 * page.height,
        ]
    }
}

/// Requested text formatting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    Markdown,
    Plain,
    NoText,
}

impl TextMode {
    pub fn token(self) -> &'static str {
        match self {
            TextMode::Markdown => "<output_markdown>",
            TextMode::Plain => "<output_plain>",
            TextMode::NoText => "<output_no_text>",
        }
    }
}

/// The prompt interface: text mode × boxes × classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptConfig {
    pub text_mode: TextMode,
    pub boxes: bool,
    pub classes: bool,
}

impl PromptConfig {
    /// Maximal-information prompt: markdown text, boxes and classes.
    pub const MIP: PromptConfig = PromptConfig {
        text_mode: TextMode::Markdown,
        boxes: true,
        classes: true,
    };

    /// Builds a config, rejecting the two excluded shapes.
    pub fn new(text_mode: TextMode, boxes: bool, classes: bool) -> Result<Self, ModelError> {
        let config = PromptConfig {
            text_mode,
            boxes,
            classes,
        };
        config.check()?;
        Ok(config)
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.classes && !self.boxes {
            return Err(ModelError::InvalidCombination(
                "classes require bounding boxes".into(),
            ));
        }
        if self.text_mode == TextMode::NoText && !self.boxes {
            return Err(ModelError::InvalidCombination(
                "prompt requests no output".into(),
            ));
        }
        Ok(())
    }

    pub fn has_text(&self) -> bool {
        self.text_mode != TextMode::NoText
    }

    /// Parses a concatenation of one token from each prompt family, in any order.
    pub fn from_tokens(tokens: &str) -> Result<Self, ModelError> {
        let mut text_mode = None;
        let mut boxes = None;
        let mut classes = None;
        let mut rest = tokens.trim();
        while !rest.is_empty() {
            if !rest.starts_with('<') {
                return Err(ModelError::MalformedPrompt(format!(
                    "unexpected text {rest:?}"
                )));
            }
            let end = rest.find('>').ok_or_else(|| {
                ModelError::MalformedPrompt(format!("unterminated token {rest:?}"))
            })?;
            let token = &rest[..=end];
            rest = rest[end + 1..].trim_start();

            fn set<T>(slot: &mut Option<T>, value: T, token: &str) -> Result<(), ModelError> {
                if slot.replace(value).is_some() {
                    return Err(ModelError::MalformedPrompt(format!(
                        "duplicate token family at {token}"
                    )));
                }
                Ok(())
            }
            match token {
                "<output_markdown>" => set(&mut text_mode, TextMode::Markdown, token)?,
                "<output_plain>" => set(&mut text_mode, TextMode::Plain, token)?,
                "<output_no_text>" => set(&mut text_mode, TextMode::NoText, token)?,
                "<predict_bbox>" => set(&mut boxes, true, token)?,
                "<no_bbox>" => set(&mut boxes, false, token)?,
                "<predict_classes>" => set(&mut classes, true, token)?,
                "<no_classes>" => set(&mut classes, false, token)?,
                other => {
                    return Err(ModelError::MalformedPrompt(format!(
                        "unknown token {other}"
                    )))
                }
            }
        }
        match (text_mode, boxes, classes) {
            (Some(t), Some(b), Some(c)) => Self::new(t, b, c),
            _ => Err(ModelError::MalformedPrompt(
                "expected one text, one bbox and one class token".into(),
            )),
        }
    }

    /// Canonical token string, text family first.
    pub fn to_tokens(&self) -> String {
        format!(
            "{}{}{}",
            self.text_mode.token(),
            if self.boxes {
                "<predict_bbox>"
            } else {
                "<no_bbox>"
            },
            if self.classes {
                "<predict_classes>"
            } else {
                "<no_classes>"
            }
        )
    }
}

impl FromStr for PromptConfig {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_tokens(s)
    }
}

impl fmt::Display for PromptConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_tokens())
    }
}

/// The eight prompt configurations the model accepts, in a fixed order.
pub fn valid_prompt_combinations() -> Vec<PromptConfig> {
    let mut out = Vec::with_capacity(8);
    for text_mode in [TextMode::Markdown, TextMode::Plain] {
        for (boxes, classes) in [(false, false), (true, false), (true, true)] {
            out.push(PromptConfig {
                text_mode,
                boxes,
                classes,
            });
        }
    }
    for classes in [false, true] {
        out.push(PromptConfig {
            text_mode: TextMode::NoText,
            boxes: true,
            classes,
        });
    }
    out
}

/// Page size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageSize {
    pub width: f64,
    pub height: f64,
}

/// One semantic block of a page.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: usize,
    pub text: Option<String>,
    pub bbox: Option<BBox>,
    pub class: Option<SemanticClass>,
}

impl Block {
    pub fn text_only(index: usize, text: impl Into<String>) -> Self {
        Block {
            index,
            text: Some(text.into()),
            bbox: None,
            class: None,
        }
    }
}

/// A single page of parsed output.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub blocks: Vec<Block>,
    pub prompt: PromptConfig,
    pub page: Option<PageSize>,
}

impl Document {
    pub fn new(prompt: PromptConfig) -> Self {
        Document {
            blocks: Vec::new(),
            prompt,
            page: None,
        }
    }

    /// Appends a block, assigning its index.
    pub fn push(&mut self, mut block: Block) {
        block.index = self.blocks.len();
        self.blocks.push(block);
    }

    /// Rewrites block indices to match list order.
    pub fn reindex(&mut self) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.index = i;
        }
    }

    /// Every invariant violation in the document. Empty means valid.
    ///
    /// Fields a prompt requests may be missing (lenient parses produce such
    /// blocks); fields a prompt forbids may not be present.
    pub fn violations(&self) -> Vec<ModelError> {
        let mut out = Vec::new();
        if let Err(e) = self.prompt.check() {
            out.push(e);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let mut fail = |message: String| out.push(ModelError::Contract { block: i, message });
            if b.index != i {
                fail(format!("index {} does not match position {i}", b.index));
            }
            if b.text.is_none() && b.bbox.is_none() {
                fail("block carries neither text nor a box".into());
            }
            if b.class.is_some() && b.bbox.is_none() {
                fail("class without a box".into());
            }
            if b.text.is_some() && !self.prompt.has_text() {
                fail("text present under a no-text prompt".into());
            }
            if b.bbox.is_some() && !self.prompt.boxes {
                fail("box present under a no-box prompt".into());
            }
            if b.class.is_some() && !self.prompt.classes {
                fail("class present under a no-class prompt".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
