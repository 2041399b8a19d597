//! Tokenizer, batch parser, streaming parser and serializer for the tagged
//! page output format:
//!
//! ```text
//! <x_X0><y_Y0>TEXT<x_X1><y_Y1><class_NAME>
//! ```
//!
//! repeated once per block. Coordinates are accepted either as normalized
//! decimals (`<x_0.1152>`) or as grid integers (`<x_118>`) and are emitted as
//! four-decimal normalized values. Without boxes, the output is plain text
//! and blocks are paragraphs separated by blank lines.
//!
//! The batch parser is the streaming parser fed with a single chunk, so both
//! produce the same events for any chunking of the same input.

use std::ops::Range;

use thiserror::Error;

use crate::doc_model::{
    quantize, Axis, BBox, Block, Document, ModelError, PromptConfig, SemanticClass,
};

const OPEN_X: &str = "<x_";
const OPEN_Y: &str = "<y_";
const OPEN_CLASS: &str = "<class_";
const OPENERS: [&str; 3] = [OPEN_X, OPEN_Y, OPEN_CLASS];

/// Parse failures. Every variant carries the byte offset it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("lex error at byte {offset}: {message}")]
    Lex { offset: usize, message: String },
    #[error("coordinate out of range at byte {offset}: {message}")]
    Range { offset: usize, message: String },
    #[error("grammar error at byte {offset}: {message}")]
    Grammar { offset: usize, message: String },
    #[error("prompt mismatch at byte {offset}: {message}")]
    Contract { offset: usize, message: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Lex { offset, .. }
            | ParseError::Range { offset, .. }
            | ParseError::Grammar { offset, .. }
            | ParseError::Contract { offset, .. } => *offset,
        }
    }
}

/// Errors from [`serialize`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SerializeError {
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error("block {block}: {message}")]
    Unrepresentable { block: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Grid index on the x axis.
    CoordX(u32),
    /// Grid index on the y axis.
    CoordY(u32),
    ClassTag(SemanticClass),
    TextRun(String),
}

/// One lexical unit of raw output, with its byte span in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputToken {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

impl OutputToken {
    /// The exact input bytes this token was read from.
    pub fn surface<'a>(&self, raw: &'a str) -> &'a str {
        &raw[self.span.clone()]
    }
}

/// Options shared by the batch and streaming parsers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Recover from violations instead of failing.
    pub lenient: bool,
    /// Clamp out-of-range coordinates to the page instead of failing.
    pub clip: bool,
}

impl ParseOptions {
    pub fn strict() -> Self {
        Self::default()
    }

    pub fn lenient() -> Self {
        ParseOptions {
            lenient: true,
            clip: false,
        }
    }
}

/// A recovered problem reported by lenient parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub offset: usize,
    pub message: String,
}

/// Event produced by the streaming parser.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    BlockComplete(Block),
    Diagnostic(Diagnostic),
    /// Strict-mode failure; the stream accepts no further input.
    Error(ParseError),
}

/// Result of a successful parse.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub document: Document,
    pub diagnostics: Vec<Diagnostic>,
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Token(OutputToken),
    /// A tag opener whose body is malformed or out of range.
    Malformed {
        error: ParseError,
        surface: String,
        start: usize,
    },
}

enum Opening {
    Tag(usize),
    NeedMore,
    Text,
}

fn classify_opening(rest: &str, eof: bool) -> Opening {
    for op in OPENERS {
        if rest.starts_with(op) {
            return Opening::Tag(op.len());
        }
    }
    if !eof
        && OPENERS
            .iter()
            .any(|op| op.len() > rest.len() && op.starts_with(rest))
    {
        Opening::NeedMore
    } else {
        Opening::Text
    }
}

fn parse_coord(body: &str, axis: Axis, clip: bool, offset: usize) -> Result<u32, ParseError> {
    let malformed = || ParseError::Lex {
        offset,
        message: format!("malformed {axis} coordinate {body:?}"),
    };
    let grid = axis.grid_size();
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return Err(malformed());
    }
    let out_of_range = || ParseError::Range {
        offset,
        message: format!("{axis} coordinate {body} outside the page"),
    };
    if let Some((int, frac)) = body.split_once('.') {
        if int.is_empty() || frac.is_empty() || frac.contains('.') {
            return Err(malformed());
        }
        let v: f64 = body.parse().map_err(|_| malformed())?;
        if v > 1.0 {
            return if clip { Ok(grid) } else { Err(out_of_range()) };
        }
        quantize(v, axis).map_err(|_| out_of_range())
    } else {
        let v = if body.len() > 9 {
            u64::MAX
        } else {
            body.parse::<u64>().map_err(|_| malformed())?
        };
        if v > u64::from(grid) {
            return if clip { Ok(grid) } else { Err(out_of_range()) };
        }
        Ok(v as u32)
    }
}

/// Incremental lexer. Holds back input only while a tag may still be incomplete.
#[derive(Debug, Clone, PartialEq, Default)]
struct Lexer {
    buf: String,
    /// Consumed bytes at the front of `buf`.
    pos: usize,
    /// Absolute offset of `buf[0]`.
    base: usize,
    clip: bool,
}

impl Lexer {
    fn push(&mut self, chunk: &str) {
        if self.pos > 0 {
            self.buf.drain(..self.pos);
            self.base += self.pos;
            self.pos = 0;
        }
        self.buf.push_str(chunk);
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn next(&mut self, eof: bool) -> Option<Piece> {
        let rest = &self.buf[self.pos..];
        if rest.is_empty() {
            return None;
        }
        let start = self.base + self.pos;
        let mut scan_from = 0;
        if rest.starts_with('<') {
            match classify_opening(rest, eof) {
                Opening::Tag(len) => return self.lex_tag(len, eof),
                Opening::NeedMore => return None,
                Opening::Text => scan_from = 1,
            }
        }
        let mut end = rest.len();
        while let Some(i) = rest[scan_from..].find('<') {
            let i = scan_from + i;
            match classify_opening(&rest[i..], eof) {
                Opening::Tag(_) | Opening::NeedMore => {
                    end = i;
                    break;
                }
                Opening::Text => scan_from = i + 1,
            }
        }
        let text = rest[..end].to_owned();
        self.pos += end;
        Some(Piece::Token(OutputToken {
            kind: TokenKind::TextRun(text),
            span: start..start + end,
        }))
    }

    fn lex_tag(&mut self, opener_len: usize, eof: bool) -> Option<Piece> {
        let rest = &self.buf[self.pos..];
        let start = self.base + self.pos;
        let stop = rest[opener_len..]
            .find(['>', '<', '\n'])
            .map(|i| i + opener_len);
        let (len, closed) = match stop {
            None if !eof => return None,
            None => (rest.len(), false),
            Some(q) if rest.as_bytes()[q] == b'>' => (q + 1, true),
            Some(q) => (q, false),
        };
        let surface = &rest[..len];
        let result = if !closed {
            Err(ParseError::Lex {
                offset: start,
                message: format!("unterminated tag {surface:?}"),
            })
        } else {
            let body = &rest[opener_len..len - 1];
            let opener = &rest[..opener_len];
            match opener {
                OPEN_X => parse_coord(body, Axis::X, self.clip, start).map(TokenKind::CoordX),
                OPEN_Y => parse_coord(body, Axis::Y, self.clip, start).map(TokenKind::CoordY),
                _ if body.is_empty() => Err(ParseError::Lex {
                    offset: start,
                    message: "empty class tag".into(),
                }),
                _ => Ok(TokenKind::ClassTag(SemanticClass::from_label(body))),
            }
        };
        let piece = match result {
            Ok(kind) => Piece::Token(OutputToken {
                kind,
                span: start..start + len,
            }),
            Err(error) => Piece::Malformed {
                error,
                surface: surface.to_owned(),
                start,
            },
        };
        self.pos += len;
        Some(piece)
    }
}

/// Splits raw output into tokens. Adjacent text is merged into one maximal run,
/// and the token surfaces concatenate back to `raw`.
pub fn tokenize(raw: &str) -> Result<Vec<OutputToken>, ParseError> {
    let mut lexer = Lexer::default();
    lexer.push(raw);
    let mut out: Vec<OutputToken> = Vec::new();
    while let Some(piece) = lexer.next(true) {
        match piece {
            Piece::Malformed { error, .. } => return Err(error),
            Piece::Token(tok) => match (out.last_mut(), &tok.kind) {
                (
                    Some(OutputToken {
                        kind: TokenKind::TextRun(prev),
                        span,
                    }),
                    TokenKind::TextRun(next),
                ) => {
                    prev.push_str(next);
                    span.end = tok.span.end;
                }
                _ => out.push(tok),
            },
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Block automaton

/// Position of the block automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutomatonState {
    ExpectOpenX,
    ExpectOpenY,
    InText,
    ExpectCloseY,
    ExpectClassOrNext,
    /// Lenient recovery: skipping to the next `<x_` tag.
    Resync,
    /// Strict failure; terminal.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct PartialBlock {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    text: String,
    text_rejected: bool,
}

/// Streaming parser state. Passed by value through [`StreamState::feed`].
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    prompt: PromptConfig,
    options: ParseOptions,
    lexer: Lexer,
    state: AutomatonState,
    partial: PartialBlock,
    /// Whitespace seen between blocks, kept until it is known to be harmless.
    pending_ws: String,
    /// Text collected while resynchronizing, or the current box-free paragraph buffer.
    loose_text: String,
    emitted: usize,
}

impl StreamState {
    pub fn new(prompt: PromptConfig, options: ParseOptions) -> Self {
        StreamState {
            prompt,
            options,
            lexer: Lexer {
                clip: options.clip,
                ..Lexer::default()
            },
            state: AutomatonState::ExpectOpenX,
            partial: PartialBlock::default(),
            pending_ws: String::new(),
            loose_text: String::new(),
            emitted: 0,
        }
    }

    pub fn state(&self) -> AutomatonState {
        self.state
    }

    /// Number of blocks emitted so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Consumes one chunk of output. Chunks may split tags anywhere.
    pub fn feed(mut self, chunk: &str) -> (Self, Vec<StreamEvent>) {
        let events = self.feed_mut(chunk);
        (self, events)
    }

    /// In-place variant of [`StreamState::feed`].
    pub fn feed_mut(&mut self, chunk: &str) -> Vec<StreamEvent> {
        let mut events = Vec::new();
        if self.state == AutomatonState::Failed || chunk.is_empty() {
            return events;
        }
        self.lexer.push(chunk);
        self.drain(false, &mut events);
        events
    }

    /// Signals end of input and returns the remaining events.
    pub fn finish(mut self) -> Vec<StreamEvent> {
        let mut events = Vec::new();
        if self.state == AutomatonState::Failed {
            return events;
        }
        self.drain(true, &mut events);
        if self.state == AutomatonState::Failed {
            return events;
        }
        let end = self.lexer.offset();
        if self.prompt.boxes {
            self.finish_blocks(end, &mut events);
        } else {
            self.split_paragraphs(true, &mut events);
        }
        events
    }

    fn drain(&mut self, eof: bool, events: &mut Vec<StreamEvent>) {
        while self.state != AutomatonState::Failed {
            let Some(piece) = self.lexer.next(eof) else {
                break;
            };
            if self.prompt.boxes {
                self.on_piece(piece, false, events);
            } else {
                self.on_paragraph_piece(piece, events);
            }
        }
    }

    /// Records a violation. Returns true when the caller should recover.
    fn fail(&mut self, error: ParseError, quiet: bool, events: &mut Vec<StreamEvent>) -> bool {
        if self.options.lenient {
            if !quiet {
                events.push(StreamEvent::Diagnostic(Diagnostic {
                    offset: error.offset(),
                    message: error.to_string(),
                }));
            }
            true
        } else {
            events.push(StreamEvent::Error(error));
            self.state = AutomatonState::Failed;
            false
        }
    }

    fn emit(&mut self, block: Block, events: &mut Vec<StreamEvent>) {
        let mut block = block;
        block.index = self.emitted;
        self.emitted += 1;
        events.push(StreamEvent::BlockComplete(block));
    }

    fn emit_text_only(&mut self, text: String, events: &mut Vec<StreamEvent>) {
        if self.prompt.has_text() && !text.trim().is_empty() {
            self.emit(Block::text_only(0, text), events);
        }
    }

    fn emit_partial(&mut self, class: Option<SemanticClass>, events: &mut Vec<StreamEvent>) {
        let p = std::mem::take(&mut self.partial);
        let bbox = BBox::from_grid(p.x0, p.y0, p.x1, p.y1)
            .expect("partial boxes are ordered before emission");
        let block = Block {
            index: 0,
            text: self.prompt.has_text().then_some(p.text),
            bbox: Some(bbox),
            class,
        };
        self.emit(block, events);
    }

    /// Lenient recovery: salvage the partial text and re-dispatch `piece` while resyncing.
    fn recover(&mut self, piece: Piece, events: &mut Vec<StreamEvent>) {
        let partial = std::mem::take(&mut self.partial);
        self.loose_text = partial.text;
        self.state = AutomatonState::Resync;
        self.on_piece(piece, true, events);
    }

    fn tag_error(&self, kind: &TokenKind, offset: usize, expected: &str) -> ParseError {
        match kind {
            TokenKind::ClassTag(_) if !self.prompt.classes => ParseError::Contract {
                offset,
                message: "class tag under a no-class prompt".into(),
            },
            _ => ParseError::Grammar {
                offset,
                message: format!("expected {expected}"),
            },
        }
    }

    fn on_piece(&mut self, piece: Piece, quiet: bool, events: &mut Vec<StreamEvent>) {
        use AutomatonState::*;

        let tok = match piece {
            Piece::Token(tok) => tok,
            Piece::Malformed {
                error,
                surface,
                start,
            } => {
                if !self.fail(error, quiet, events) {
                    return;
                }
                let text = OutputToken {
                    span: start..start + surface.len(),
                    kind: TokenKind::TextRun(surface),
                };
                return self.on_piece(Piece::Token(text), true, events);
            }
        };
        let offset = tok.span.start;

        match (self.state, &tok.kind) {
            (Failed, _) => {}

            (ExpectOpenX, TokenKind::CoordX(x)) => {
                self.pending_ws.clear();
                self.partial = PartialBlock {
                    x0: *x,
                    ..PartialBlock::default()
                };
                self.state = ExpectOpenY;
            }
            (ExpectOpenX, TokenKind::TextRun(t)) => {
                let skip = t.len() - t.trim_start().len();
                if skip == t.len() {
                    self.pending_ws.push_str(t);
                    return;
                }
                let err = ParseError::Grammar {
                    offset: offset + skip,
                    message: "text outside a block, expected <x_…>".into(),
                };
                if self.fail(err, quiet, events) {
                    self.loose_text = std::mem::take(&mut self.pending_ws);
                    self.loose_text.push_str(t);
                    self.state = Resync;
                }
            }
            (ExpectOpenX, kind) => {
                let err = self.tag_error(kind, offset, "<x_…>");
                if self.fail(err, quiet, events) {
                    self.loose_text = std::mem::take(&mut self.pending_ws);
                    self.state = Resync;
                }
            }

            (ExpectOpenY, TokenKind::CoordY(y)) => {
                self.partial.y0 = *y;
                self.state = InText;
            }
            (ExpectOpenY, kind) => {
                let err = self.tag_error(kind, offset, "<y_…>");
                if self.fail(err, quiet, events) {
                    self.recover(Piece::Token(tok), events);
                }
            }

            (InText, TokenKind::TextRun(t)) => {
                if self.prompt.has_text() {
                    self.partial.text.push_str(t);
                    return;
                }
                let skip = t.len() - t.trim_start().len();
                if skip == t.len() || self.partial.text_rejected {
                    return;
                }
                let err = ParseError::Contract {
                    offset: offset + skip,
                    message: "text under a no-text prompt".into(),
                };
                if self.fail(err, quiet, events) {
                    self.partial.text_rejected = true;
                }
            }
            (InText, TokenKind::CoordX(x)) => {
                self.partial.x1 = *x;
                self.state = ExpectCloseY;
            }
            (InText, kind) => {
                let err = self.tag_error(kind, offset, "text or closing <x_…>");
                if self.fail(err, quiet, events) {
                    self.recover(Piece::Token(tok), events);
                }
            }

            (ExpectCloseY, TokenKind::CoordY(y)) => {
                self.partial.y1 = *y;
                let p = &mut self.partial;
                if p.x0 > p.x1 || p.y0 > p.y1 {
                    let err = ParseError::Contract {
                        offset,
                        message: format!(
                            "inverted box ({}, {}) to ({}, {})",
                            p.x0, p.y0, p.x1, p.y1
                        ),
                    };
                    if !self.fail(err, quiet, events) {
                        return;
                    }
                    let p = &mut self.partial;
                    if p.x0 > p.x1 {
                        std::mem::swap(&mut p.x0, &mut p.x1);
                    }
                    if p.y0 > p.y1 {
                        std::mem::swap(&mut p.y0, &mut p.y1);
                    }
                }
                if self.prompt.classes {
                    self.state = ExpectClassOrNext;
                } else {
                    self.emit_partial(None, events);
                    self.state = ExpectOpenX;
                }
            }
            (ExpectCloseY, kind) => {
                let err = self.tag_error(kind, offset, "<y_…>");
                if self.fail(err, quiet, events) {
                    self.recover(Piece::Token(tok), events);
                }
            }

            (ExpectClassOrNext, TokenKind::ClassTag(class)) => {
                let class = class.clone();
                self.emit_partial(Some(class), events);
                self.pending_ws.clear();
                self.state = ExpectOpenX;
            }
            (ExpectClassOrNext, kind) => {
                if let TokenKind::TextRun(t) = kind {
                    let skip = t.len() - t.trim_start().len();
                    if skip == t.len() {
                        self.pending_ws.push_str(t);
                        return;
                    }
                    let err = ParseError::Grammar {
                        offset: offset + skip,
                        message: "expected <class_…>".into(),
                    };
                    if !self.fail(err, quiet, events) {
                        return;
                    }
                } else {
                    let err = ParseError::Grammar {
                        offset,
                        message: "expected <class_…>".into(),
                    };
                    if !self.fail(err, quiet, events) {
                        return;
                    }
                }
                // The box is complete; keep it without a class and continue.
                self.emit_partial(None, events);
                self.state = ExpectOpenX;
                self.on_piece(Piece::Token(tok), true, events);
            }

            (Resync, TokenKind::TextRun(t)) => self.loose_text.push_str(t),
            (Resync, TokenKind::CoordX(_)) => {
                let text = std::mem::take(&mut self.loose_text);
                self.emit_text_only(text, events);
                self.state = ExpectOpenX;
                self.on_piece(Piece::Token(tok), true, events);
            }
            (Resync, _) => {
                if !quiet {
                    events.push(StreamEvent::Diagnostic(Diagnostic {
                        offset,
                        message: format!("skipped stray tag at byte {offset}"),
                    }));
                }
            }
        }
    }

    fn finish_blocks(&mut self, end: usize, events: &mut Vec<StreamEvent>) {
        use AutomatonState::*;
        match self.state {
            ExpectOpenX | Failed => {}
            ExpectOpenY | InText | ExpectCloseY => {
                let err = ParseError::Grammar {
                    offset: end,
                    message: "input ends inside a block".into(),
                };
                if self.fail(err, false, events) {
                    let text = std::mem::take(&mut self.partial).text;
                    self.emit_text_only(text, events);
                }
            }
            ExpectClassOrNext => {
                let err = ParseError::Grammar {
                    offset: end,
                    message: "input ends before <class_…>".into(),
                };
                if self.fail(err, false, events) {
                    self.emit_partial(None, events);
                }
            }
            Resync => {
                let text = std::mem::take(&mut self.loose_text);
                self.emit_text_only(text, events);
            }
        }
        if self.state != Failed {
            self.state = ExpectOpenX;
        }
    }

    // Box-free output: the whole text is content, split into blank-line paragraphs.

    fn on_paragraph_piece(&mut self, piece: Piece, events: &mut Vec<StreamEvent>) {
        let text = match piece {
            // An invalid tag is not a tag at all, just text.
            Piece::Malformed { surface, .. } => surface,
            Piece::Token(tok) => match tok.kind {
                TokenKind::TextRun(t) => t,
                kind => {
                    let message = match kind {
                        TokenKind::ClassTag(_) => "class tag under a no-class prompt",
                        _ => "coordinate tag under a no-box prompt",
                    };
                    let err = ParseError::Contract {
                        offset: tok.span.start,
                        message: message.into(),
                    };
                    if !self.fail(err, false, events) {
                        return;
                    }
                    let offset = tok.span.start - self.lexer.base;
                    self.lexer.buf[offset..offset + tok.span.len()].to_owned()
                }
            },
        };
        self.loose_text.push_str(&text);
        self.split_paragraphs(false, events);
    }

    fn split_paragraphs(&mut self, eof: bool, events: &mut Vec<StreamEvent>) {
        while let Some(i) = self.loose_text.find("\n\n") {
            let run_end = self.loose_text[i..]
                .find(|c| c != '\n')
                .map(|j| i + j)
                .unwrap_or(self.loose_text.len());
            if run_end == self.loose_text.len() && !eof {
                // The separator may continue in the next chunk.
                break;
            }
            let para = self.loose_text[..i].trim_matches('\n').to_owned();
            self.loose_text.drain(..run_end);
            if !para.is_empty() {
                self.emit(Block::text_only(0, para), events);
            }
        }
        if eof {
            let para = std::mem::take(&mut self.loose_text);
            let para = para.trim_matches('\n');
            if !para.is_empty() {
                self.emit(Block::text_only(0, para), events);
            }
        }
    }
}

/// Runs the streaming parser over `raw` as one chunk and returns every event.
pub fn parse_events(raw: &str, prompt: PromptConfig, options: ParseOptions) -> Vec<StreamEvent> {
    let (state, mut events) = StreamState::new(prompt, options).feed(raw);
    events.extend(state.finish());
    events
}

/// Assembles a document from parser events; the first error aborts.
pub fn collect_events(
    events: impl IntoIterator<Item = StreamEvent>,
    prompt: PromptConfig,
) -> Result<Parsed, ParseError> {
    let mut document = Document::new(prompt);
    let mut diagnostics = Vec::new();
    for event in events {
        match event {
            StreamEvent::BlockComplete(b) => document.blocks.push(b),
            StreamEvent::Diagnostic(d) => diagnostics.push(d),
            StreamEvent::Error(e) => return Err(e),
        }
    }
    Ok(Parsed {
        document,
        diagnostics,
    })
}

/// Strictly parses one page of output.
pub fn parse_output(raw: &str, prompt: PromptConfig) -> Result<Document, ParseError> {
    parse_output_with(raw, prompt, ParseOptions::strict()).map(|p| p.document)
}

/// Parses one page of output. In lenient mode this never fails.
pub fn parse_output_with(
    raw: &str,
    prompt: PromptConfig,
    options: ParseOptions,
) -> Result<Parsed, ParseError> {
    collect_events(parse_events(raw, prompt, options), prompt)
}

// ---------------------------------------------------------------------------
// Serializer

fn check_text(block: usize, text: &str) -> Result<(), SerializeError> {
    if let Some(op) = OPENERS.iter().find(|op| text.contains(*op)) {
        return Err(SerializeError::Unrepresentable {
            block,
            message: format!("text contains the tag opener {op:?}"),
        });
    }
    Ok(())
}

/// Writes the canonical surface form of a document.
pub fn serialize(doc: &Document) -> Result<String, SerializeError> {
    use std::fmt::Write;

    doc.validate()?;
    let prompt = doc.prompt;
    let unrep = |block: usize, message: &str| SerializeError::Unrepresentable {
        block,
        message: message.into(),
    };
    let mut out = String::new();

    if !prompt.boxes {
        for (i, b) in doc.blocks.iter().enumerate() {
            let text = b.text.as_deref().ok_or_else(|| unrep(i, "missing text"))?;
            if text.is_empty() {
                return Err(unrep(i, "empty paragraph"));
            }
            if text.contains("\n\n") || text.starts_with('\n') || text.ends_with('\n') {
                return Err(unrep(
                    i,
                    "paragraph text collides with the blank-line separator",
                ));
            }
            check_text(i, text)?;
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(text);
        }
        return Ok(out);
    }

    for (i, b) in doc.blocks.iter().enumerate() {
        let bbox = b.bbox.ok_or_else(|| unrep(i, "missing box"))?;
        let [x0, y0, x1, y1] = bbox.grid();
        let text = match (&b.text, prompt.has_text()) {
            (Some(t), true) => t.as_str(),
            (None, false) => "",
            (None, true) => return Err(unrep(i, "missing text")),
            (Some(_), false) => unreachable!("rejected by validate"),
        };
        check_text(i, text)?;
        write!(
            out,
            "<x_{}><y_{}>{}<x_{}><y_{}>",
            crate::doc_model::format_coord(x0, Axis::X),
            crate::doc_model::format_coord(y0, Axis::Y),
            text,
            crate::doc_model::format_coord(x1, Axis::X),
            crate::doc_model::format_coord(y1, Axis::Y),
        )
        .expect("writing to a String");
        match (&b.class, prompt.classes) {
            (Some(c), true) => {
                let label = c.label();
                if label.is_empty() || label.contains(['<', '>', '\n']) {
                    return Err(unrep(i, "class label cannot be written as a tag"));
                }
                write!(out, "<class_{label}>").expect("writing to a String");
            }
            (None, false) => {}
            (None, true) => return Err(unrep(i, "missing class")),
            (Some(_), false) => unreachable!("rejected by validate"),
        }
    }
    Ok(out)
}

fn defuse_openers(text: &str) -> String {
    OPENERS.iter().fold(text.to_owned(), |t, op| {
        t.replace(op, &format!("< {}", &op[1..]))
    })
}

/// Rewrites a document so that [`serialize`] accepts it, describing each
/// change. Forbidden fields are dropped, tag openers in text become `< x_`,
/// blocks that cannot be written are removed and missing classes become `Text`.
pub fn make_serializable(doc: &Document) -> (Document, Vec<String>) {
    let prompt = doc.prompt;
    let mut notes = Vec::new();
    let mut out = Document {
        blocks: Vec::with_capacity(doc.blocks.len()),
        prompt,
        page: doc.page,
    };
    for (i, b) in doc.blocks.iter().enumerate() {
        let mut b = b.clone();
        if !prompt.boxes && (b.bbox.take().is_some() | b.class.take().is_some()) {
            notes.push(format!(
                "block {i}: dropped box and class under a no-box prompt"
            ));
        }
        if !prompt.classes && b.class.take().is_some() {
            notes.push(format!("block {i}: dropped class under a no-class prompt"));
        }
        if !prompt.has_text() && b.text.take().is_some() {
            notes.push(format!("block {i}: dropped text under a no-text prompt"));
        }
        if let Some(t) = &b.text {
            let mut fixed = defuse_openers(t);
            if !prompt.boxes {
                while fixed.contains("\n\n") {
                    fixed = fixed.replace("\n\n", "\n");
                }
                fixed = fixed.trim_matches('\n').to_owned();
            }
            if &fixed != t {
                notes.push(format!(
                    "block {i}: rewrote text that collides with the grammar"
                ));
                b.text = Some(fixed);
            }
        }
        if prompt.boxes {
            if b.bbox.is_none() {
                notes.push(format!("block {i}: removed, no box"));
                continue;
            }
            if prompt.has_text() && b.text.is_none() {
                b.text = Some(String::new());
            }
            if prompt.classes {
                let writable = b.class.as_ref().is_some_and(|c| {
                    !c.label().is_empty() && !c.label().contains(['<', '>', '\n'])
                });
                if !writable {
                    notes.push(format!("block {i}: class replaced by Text"));
                    b.class = Some(SemanticClass::Text);
                }
            }
        } else if b.text.as_deref().is_none_or(str::is_empty) {
            notes.push(format!("block {i}: removed, no paragraph text"));
            continue;
        }
        out.blocks.push(b);
    }
    out.reindex();
    (out, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::TextMode;

    #[test]
    fn make_serializable_repairs() {
        let mut doc = Document::new(PromptConfig::MIP);
        doc.blocks.push(Block::text_only(0, "loose"));
        doc.blocks.push(Block {
            index: 7,
            text: Some("a <x_1> b".into()),
            bbox: Some(BBox::from_grid(0, 0, 1, 1).unwrap()),
            class: None,
        });
        assert!(serialize(&doc).is_err());
        let (fixed, notes) = make_serializable(&doc);
        assert_eq!(notes.len(), 3);
        assert_eq!(
            serialize(&fixed).unwrap(),
            "<x_0.0000><y_0.0000>a < x_1> b<x_0.0010><y_0.0008><class_Text>"
        );
        let plain = PromptConfig::new(TextMode::Plain, false, false).unwrap();
        let mut doc = Document::new(plain);
        doc.push(Block::text_only(0, "\none\n\n\ntwo\n"));
        doc.push(Block::text_only(0, ""));
        let (fixed, _) = make_serializable(&doc);
        assert_eq!(serialize(&fixed).unwrap(), "one\ntwo");
    }

    const EXAMPLE: &str =
        "<x_0.1152><y_0.2586># NVIDIA Nemotron-Parse 1.1<x_0.8799><y_0.2797><class_Title>";

    fn kinds(raw: &str) -> Vec<TokenKind> {
        tokenize(raw).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn tokenize_worked_example() {
        assert_eq!(
            kinds(EXAMPLE),
            vec![
                TokenKind::CoordX(118),
                TokenKind::CoordY(331),
                TokenKind::TextRun("# NVIDIA Nemotron-Parse 1.1".into()),
                TokenKind::CoordX(901),
                TokenKind::CoordY(358),
                TokenKind::ClassTag(SemanticClass::Title),
            ]
        );
        let joined: String = tokenize(EXAMPLE)
            .unwrap()
            .iter()
            .map(|t| t.surface(EXAMPLE))
            .collect();
        assert_eq!(joined, EXAMPLE);
    }

    #[test]
    fn tokenize_trivial_inputs() {
        assert!(tokenize("").unwrap().is_empty());
        assert_eq!(
            kinds("plain text only"),
            vec![TokenKind::TextRun("plain text only".into())]
        );
        assert_eq!(
            kinds("a < b <c <xy"),
            vec![TokenKind::TextRun("a < b <c <xy".into())]
        );
    }

    #[test]
    fn grid_integer_surface_form() {
        assert_eq!(
            kinds("<x_118><y_1280>"),
            vec![TokenKind::CoordX(118), TokenKind::CoordY(1280)]
        );
    }

    #[test]
    fn malformed_tags_report_offsets() {
        assert_eq!(
            tokenize("ab<x_abc>"),
            Err(ParseError::Lex {
                offset: 2,
                message: "malformed x coordinate \"abc\"".into()
            })
        );
        assert!(matches!(
            tokenize("<y_1281>"),
            Err(ParseError::Range { offset: 0, .. })
        ));
        assert!(matches!(tokenize("<x_1.5>"), Err(ParseError::Range { .. })));
        assert!(matches!(
            tokenize("<x_0.1"),
            Err(ParseError::Lex { offset: 0, .. })
        ));
        assert!(matches!(tokenize("<class_>"), Err(ParseError::Lex { .. })));
        assert!(matches!(tokenize("<x_1.>"), Err(ParseError::Lex { .. })));
    }

    #[test]
    fn parse_worked_example() {
        let doc = parse_output(EXAMPLE, PromptConfig::MIP).unwrap();
        assert_eq!(doc.blocks.len(), 1);
        let b = &doc.blocks[0];
        assert_eq!(b.text.as_deref(), Some("# NVIDIA Nemotron-Parse 1.1"));
        assert_eq!(b.bbox.unwrap().grid(), [118, 331, 901, 358]);
        assert_eq!(b.class, Some(SemanticClass::Title));
        assert_eq!(serialize(&doc).unwrap(), EXAMPLE);
    }

    #[test]
    fn parse_empty_box_free() {
        let prompt = PromptConfig::new(TextMode::Plain, false, false).unwrap();
        assert!(parse_output("", prompt).unwrap().blocks.is_empty());
    }

    #[test]
    fn box_free_paragraphs() {
        let prompt = PromptConfig::new(TextMode::Markdown, false, false).unwrap();
        let doc = parse_output("# Head\n\npara one\nline two\n\n\n| a | b |\n", prompt).unwrap();
        let texts: Vec<_> = doc.blocks.iter().map(|b| b.text.clone().unwrap()).collect();
        assert_eq!(texts, ["# Head", "para one\nline two", "| a | b |"]);
        assert!(matches!(
            parse_output("a <x_0.1> b", prompt),
            Err(ParseError::Contract { offset: 2, .. })
        ));
        // an invalid tag is ordinary text when boxes are off
        let doc = parse_output("a <x_abc> b", prompt).unwrap();
        assert_eq!(doc.blocks[0].text.as_deref(), Some("a <x_abc> b"));
    }

    #[test]
    fn two_blocks_round_trip() {
        let mut doc = Document::new(PromptConfig::MIP);
        doc.push(Block {
            index: 0,
            text: Some("first".into()),
            bbox: Some(BBox::from_grid(10, 20, 500, 60).unwrap()),
            class: Some(SemanticClass::SectionHeader),
        });
        doc.push(Block {
            index: 1,
            text: Some("second <b>".into()),
            bbox: Some(BBox::from_grid(10, 70, 500, 200).unwrap()),
            class: Some(SemanticClass::Other("Code".into())),
        });
        let raw = serialize(&doc).unwrap();
        assert!(raw.contains("<class_Code>"));
        assert!(raw.contains("<class_Section-Header>"));
        assert_eq!(parse_output(&raw, PromptConfig::MIP).unwrap(), doc);
    }

    #[test]
    fn serialize_empty_document() {
        assert_eq!(serialize(&Document::new(PromptConfig::MIP)).unwrap(), "");
    }

    #[test]
    fn serialize_rejects_unrepresentable_text() {
        let mut doc = Document::new(PromptConfig::MIP);
        doc.push(Block {
            index: 0,
            text: Some("see <x_1>".into()),
            bbox: Some(BBox::from_grid(0, 0, 1, 1).unwrap()),
            class: Some(SemanticClass::Text),
        });
        assert!(matches!(
            serialize(&doc),
            Err(SerializeError::Unrepresentable { .. })
        ));
    }

    #[test]
    fn strict_grammar_errors() {
        let boxes = PromptConfig::new(TextMode::Plain, true, false).unwrap();
        let err = parse_output("<x_0.1><x_0.2>", boxes).unwrap_err();
        assert_eq!(
            err,
            ParseError::Grammar {
                offset: 7,
                message: "expected <y_…>".into()
            }
        );
        assert!(matches!(
            parse_output("<x_1><y_1>a<x_2><y_2><class_Text>", boxes),
            Err(ParseError::Contract { offset: 21, .. })
        ));
        assert!(matches!(
            parse_output("<x_1><y_1>a<x_2>", boxes),
            Err(ParseError::Grammar { offset: 16, .. })
        ));
        assert!(matches!(
            parse_output("<x_9><y_1>a<x_2><y_2>", boxes),
            Err(ParseError::Contract { .. })
        ));
        assert!(matches!(
            parse_output("<x_1><y_1>a<x_2><y_2>junk", boxes),
            Err(ParseError::Grammar { offset: 21, .. })
        ));
        assert!(matches!(
            parse_output("<x_1><y_1>a<x_2><y_2>", PromptConfig::MIP),
            Err(ParseError::Grammar { .. })
        ));
        let no_text = PromptConfig::new(TextMode::NoText, true, false).unwrap();
        assert!(matches!(
            parse_output("<x_1><y_1> word<x_2><y_2>", no_text),
            Err(ParseError::Contract { offset: 11, .. })
        ));
        let doc = parse_output("<x_1><y_1> <x_2><y_2>\n", no_text).unwrap();
        assert_eq!(doc.blocks[0].text, None);
    }

    #[test]
    fn whitespace_between_blocks_is_ignored() {
        let raw = format!("{EXAMPLE}\n\n{EXAMPLE}\n");
        assert_eq!(
            parse_output(&raw, PromptConfig::MIP).unwrap().blocks.len(),
            2
        );
    }

    #[test]
    fn lenient_recovery() {
        let raw = "stray <x_1><y_1>good<x_2><y_2><class_Text>oops<x_3><x_4><y_4>next<x_5><y_5><class_Caption>";
        let parsed = parse_output_with(raw, PromptConfig::MIP, ParseOptions::lenient()).unwrap();
        let texts: Vec<_> = parsed
            .document
            .blocks
            .iter()
            .map(|b| (b.text.clone().unwrap(), b.bbox.is_some()))
            .collect();
        assert_eq!(
            texts,
            vec![
                ("stray ".to_owned(), false),
                ("good".to_owned(), true),
                ("oops".to_owned(), false),
                ("next".to_owned(), true),
            ]
        );
        assert!(!parsed.diagnostics.is_empty());
        assert!(parsed.document.violations().is_empty());
    }

    #[test]
    fn lenient_missing_class_and_inverted_box() {
        let raw = "<x_9><y_9>a<x_2><y_2><x_1><y_1>b<x_2><y_2>";
        let parsed = parse_output_with(raw, PromptConfig::MIP, ParseOptions::lenient()).unwrap();
        let blocks = &parsed.document.blocks;
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].bbox.unwrap().grid(), [2, 2, 9, 9]);
        assert_eq!(blocks[0].class, None);
        assert_eq!(blocks[1].text.as_deref(), Some("b"));
        assert_eq!(parsed.diagnostics.len(), 3);
    }

    #[test]
    fn streaming_byte_at_a_time() {
        let mut state = StreamState::new(PromptConfig::MIP, ParseOptions::strict());
        let mut events = Vec::new();
        for i in 0..EXAMPLE.len() {
            let (next, ev) = state.feed(&EXAMPLE[i..i + 1]);
            state = next;
            events.extend(ev);
        }
        events.extend(state.finish());
        assert_eq!(
            events,
            parse_events(EXAMPLE, PromptConfig::MIP, ParseOptions::strict())
        );
        assert_eq!(events.len(), 1);
    }

    #[test]
    fn feeding_nothing_changes_nothing() {
        let initial = StreamState::new(PromptConfig::MIP, ParseOptions::strict());
        let (next, events) = initial.clone().feed("");
        assert_eq!(next, initial);
        assert!(events.is_empty());
    }

    #[test]
    fn streaming_error_is_terminal() {
        let boxes = PromptConfig::new(TextMode::Plain, true, false).unwrap();
        let state = StreamState::new(boxes, ParseOptions::strict());
        let (state, events) = state.feed("<x_0.1><x_0.2>");
        assert_eq!(
            events,
            vec![StreamEvent::Error(ParseError::Grammar {
                offset: 7,
                message: "expected <y_…>".into()
            })]
        );
        assert_eq!(state.state(), AutomatonState::Failed);
        let (state, events) = state.feed("<y_1>");
        assert!(events.is_empty());
        assert!(state.finish().is_empty());
    }
}
