//! Span-aware logical tables shared by the LaTeX and HTML parsers, the
//! HTML/LaTeX/Markdown emitters and table scoring.
//!
//! Parsers accept a practical subset: LaTeX `tabular`-style environments with
//! `&`, `\\`, rules, `\multicolumn` and `\multirow`; HTML tag soup with
//! `rowspan`/`colspan`. Anything else inside a cell is opaque content.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("no table found")]
    NoTable,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid table: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub row_span: usize,
    pub col_span: usize,
    pub content: String,
    #[serde(default)]
    pub header: bool,
}

impl Cell {
    pub fn new(row: usize, col: usize, content: impl Into<String>) -> Self {
        Cell {
            row,
            col,
            row_span: 1,
            col_span: 1,
            content: content.into(),
            header: false,
        }
    }

    pub fn spans(mut self, row_span: usize, col_span: usize) -> Self {
        self.row_span = row_span;
        self.col_span = col_span;
        self
    }
}

/// A logical grid whose cells tile `n_rows × n_cols` exactly.
/// Cells are kept in row-major order of their top-left corner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableModel {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<Cell>,
}

impl TableModel {
    /// Builds a table, sorting cells and checking that they tile the grid.
    pub fn new(n_rows: usize, n_cols: usize, mut cells: Vec<Cell>) -> Result<Self, TableError> {
        cells.sort_by_key(|c| (c.row, c.col));
        let t = TableModel {
            n_rows,
            n_cols,
            cells,
        };
        t.occupancy()?;
        Ok(t)
    }

    pub fn empty() -> Self {
        TableModel {
            n_rows: 0,
            n_cols: 0,
            cells: Vec::new(),
        }
    }

    /// Index of the covering cell for every grid slot.
    pub fn occupancy(&self) -> Result<Vec<Vec<usize>>, TableError> {
        let mut grid = vec![vec![usize::MAX; self.n_cols]; self.n_rows];
        for (k, c) in self.cells.iter().enumerate() {
            if c.row_span == 0 || c.col_span == 0 {
                return Err(TableError::Invalid(format!("cell {k} has a zero span")));
            }
            if c.row + c.row_span > self.n_rows || c.col + c.col_span > self.n_cols {
                return Err(TableError::Invalid(format!(
                    "cell {k} at ({}, {}) overflows the {}x{} grid",
                    c.row, c.col, self.n_rows, self.n_cols
                )));
            }
            for row in &mut grid[c.row..c.row + c.row_span] {
                for slot in &mut row[c.col..c.col + c.col_span] {
                    if *slot != usize::MAX {
                        return Err(TableError::Invalid(format!(
                            "cells {} and {k} overlap",
                            *slot
                        )));
                    }
                    *slot = k;
                }
            }
        }
        for (r, row) in grid.iter().enumerate() {
            if let Some(c) = row.iter().position(|&s| s == usize::MAX) {
                return Err(TableError::Invalid(format!(
                    "slot ({r}, {c}) is not covered"
                )));
            }
        }
        Ok(grid)
    }

    /// Cells whose top-left corner lies in `row`, left to right.
    pub fn row_cells(&self, row: usize) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.row == row)
    }

    /// Equal grid, spans and content, ignoring header flags.
    pub fn same_layout_and_content(&self, other: &TableModel) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| {
                (a.row, a.col, a.row_span, a.col_span, &a.content)
                    == (b.row, b.col, b.row_span, b.col_span, &b.content)
            })
    }
}

/// A parsed table plus anything the parser had to repair or ignore.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTable {
    pub table: TableModel,
    pub diagnostics: Vec<String>,
}

// ---------------------------------------------------------------------------
// Grid placement

#[derive(Debug, Clone)]
struct Entry {
    content: String,
    row_span: usize,
    col_span: usize,
    header: bool,
}

#[derive(Default)]
struct Grid {
    /// `true` where a slot is covered.
    taken: Vec<Vec<bool>>,
    cells: Vec<Cell>,
}

impl Grid {
    fn is_taken(&self, r: usize, c: usize) -> bool {
        self.taken
            .get(r)
            .and_then(|row| row.get(c))
            .copied()
            .unwrap_or(false)
    }

    fn mark(&mut self, r: usize, c: usize) {
        if self.taken.len() <= r {
            self.taken.resize(r + 1, Vec::new());
        }
        let row = &mut self.taken[r];
        if row.len() <= c {
            row.resize(c + 1, false);
        }
        row[c] = true;
    }

    /// Places an entry at (r, c), shrinking spans that would collide.
    fn place(&mut self, r: usize, c: usize, e: Entry, diags: &mut Vec<String>) -> usize {
        let mut cs = e.col_span;
        if let Some(k) = (c..c + cs).find(|&k| self.is_taken(r, k)) {
            diags.push(format!(
                "cell at ({r}, {c}) col_span {cs} collides; clipped to {}",
                k - c
            ));
            cs = k - c;
        }
        let mut rs = e.row_span;
        if let Some(dr) = (1..rs).find(|&dr| (c..c + cs).any(|k| self.is_taken(r + dr, k))) {
            diags.push(format!(
                "cell at ({r}, {c}) row_span {rs} collides; clipped to {dr}"
            ));
            rs = dr;
        }
        for rr in r..r + rs {
            for cc in c..c + cs {
                self.mark(rr, cc);
            }
        }
        self.cells.push(Cell {
            row: r,
            col: c,
            row_span: rs,
            col_span: cs,
            content: e.content,
            header: e.header,
        });
        cs
    }

    /// Clips to `n_rows`, fills uncovered slots with empty cells and validates.
    fn finish(mut self, n_rows: usize, min_cols: usize, diags: &mut Vec<String>) -> TableModel {
        for cell in &mut self.cells {
            if cell.row + cell.row_span > n_rows {
                diags.push(format!(
                    "cell at ({}, {}) row_span {} runs past the last row",
                    cell.row, cell.col, cell.row_span
                ));
                cell.row_span = n_rows - cell.row;
            }
        }
        let n_cols = self
            .cells
            .iter()
            .map(|c| c.col + c.col_span)
            .max()
            .unwrap_or(0)
            .max(min_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                if !self.is_taken(r, c) {
                    self.cells.push(Cell::new(r, c, ""));
                }
            }
        }
        TableModel::new(n_rows, n_cols, self.cells).expect("placement always tiles the grid")
    }
}

// ---------------------------------------------------------------------------
// LaTeX

const TABULAR_ENVS: [&str; 6] = [
    "tabular",
    "tabular*",
    "tabularx",
    "tabulary",
    "longtable",
    "array",
];
const RULES: [&str; 6] = [
    "hline",
    "toprule",
    "midrule",
    "bottomrule",
    "cline",
    "cmidrule",
];

struct TexScanner<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> TexScanner<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Reads `{...}` (brace-balanced), returning the inside.
    fn group(&mut self) -> Result<&'a str, TableError> {
        self.skip_ws();
        if !self.rest().starts_with('{') {
            return Err(TableError::Parse {
                offset: self.pos,
                message: "expected '{'".into(),
            });
        }
        let start = self.pos;
        let end = matching_brace(self.src, start)?;
        self.pos = end + 1;
        Ok(&self.src[start + 1..end])
    }

    /// Skips an optional `[...]` argument.
    fn optional(&mut self) -> Option<&'a str> {
        let save = self.pos;
        self.skip_ws();
        if self.rest().starts_with('[') {
            if let Some(end) = self.rest().find(']') {
                let inner = &self.rest()[1..end];
                self.pos += end + 1;
                return Some(inner);
            }
        }
        self.pos = save;
        None
    }

    fn control_word(&self) -> Option<&'a str> {
        let rest = self.rest();
        let body = rest.strip_prefix('\\')?;
        let len = body
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(body.len());
        (len > 0).then(|| &body[..len])
    }
}

/// Byte offset of the `}` closing the `{` at `open`.
fn matching_brace(src: &str, open: usize) -> Result<usize, TableError> {
    let bytes = src.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 1,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    Err(TableError::Parse {
        offset: open,
        message: "unbalanced '{'".into(),
    })
}

fn count_columns(spec: &str, offset: usize, diags: &mut Vec<String>) -> Result<usize, TableError> {
    let mut s = TexScanner { src: spec, pos: 0 };
    let mut n = 0;
    while let Some(ch) = s.rest().chars().next() {
        s.pos += ch.len_utf8();
        match ch {
            'l' | 'c' | 'r' | 'X' | 'S' | 'L' | 'C' | 'R' | 'J' => n += 1,
            'p' | 'm' | 'b' => {
                s.group()?;
                n += 1;
            }
            'w' | 'W' => {
                s.group()?;
                s.group()?;
                n += 1;
            }
            '@' | '!' | '>' | '<' => {
                s.group()?;
            }
            '*' => {
                let times = s.group()?;
                let inner = s.group()?;
                let times: usize = times.trim().parse().map_err(|_| TableError::Parse {
                    offset,
                    message: format!("bad repeat count {times:?} in column spec"),
                })?;
                n += times * count_columns(inner, offset, diags)?;
            }
            '|' | ':' => {}
            c if c.is_whitespace() => {}
            other => {
                diags.push(format!(
                    "unsupported column type {other:?} counted as one column"
                ));
                n += 1;
            }
        }
    }
    Ok(n)
}

fn parse_span(arg: &str, what: &str, diags: &mut Vec<String>) -> usize {
    match arg.trim().parse::<i64>() {
        Ok(n) if n >= 1 => n as usize,
        _ => {
            diags.push(format!("unsupported {what} count {arg:?}; using 1"));
            1
        }
    }
}

/// Turns a raw cell into an entry, unwrapping `\multicolumn` / `\multirow`.
fn latex_entry(raw: &str, diags: &mut Vec<String>) -> Result<Entry, TableError> {
    let mut entry = Entry {
        content: raw.trim().to_owned(),
        row_span: 1,
        col_span: 1,
        header: false,
    };
    for _ in 0..2 {
        let text = entry.content.clone();
        let mut s = TexScanner { src: &text, pos: 0 };
        match s.control_word() {
            Some("multicolumn") if entry.col_span == 1 => {
                s.pos += "\\multicolumn".len();
                let n = s.group()?;
                s.group()?;
                let inner = s.group()?;
                entry.col_span = parse_span(n, "multicolumn", diags);
                entry.content = unwrap_tail(inner, s.rest(), diags);
            }
            Some("multirow") if entry.row_span == 1 => {
                s.pos += "\\multirow".len();
                s.optional();
                let n = s.group()?;
                s.optional();
                s.group()?;
                s.optional();
                let inner = s.group()?;
                entry.row_span = parse_span(n, "multirow", diags);
                entry.content = unwrap_tail(inner, s.rest(), diags);
            }
            _ => break,
        }
    }
    Ok(entry)
}

fn unwrap_tail(inner: &str, tail: &str, diags: &mut Vec<String>) -> String {
    let inner = inner.trim();
    let tail = tail.trim();
    if tail.is_empty() {
        inner.to_owned()
    } else {
        diags.push(format!("text {tail:?} after a span macro kept as content"));
        format!("{inner} {tail}")
    }
}

/// Parses the first tabular environment in `src`.
pub fn parse_latex_table(src: &str) -> Result<TableModel, TableError> {
    parse_latex_table_verbose(src).map(|p| p.table)
}

/// [`parse_latex_table`] with parser diagnostics.
pub fn parse_latex_table_verbose(src: &str) -> Result<ParsedTable, TableError> {
    let mut diags = Vec::new();
    let (begin, env) = src
        .match_indices("\\begin{")
        .find_map(|(i, _)| {
            let rest = &src[i + 7..];
            TABULAR_ENVS
                .iter()
                .find(|e| rest.starts_with(**e) && rest[e.len()..].starts_with('}'))
                .map(|e| (i, *e))
        })
        .ok_or(TableError::NoTable)?;
    let mut s = TexScanner {
        src,
        pos: begin + 7 + env.len() + 1,
    };
    if matches!(env, "tabular*" | "tabularx" | "tabulary") {
        s.group()?;
    }
    s.optional();
    let spec_offset = s.pos;
    let spec = s.group()?;
    let min_cols = count_columns(spec, spec_offset, &mut diags)?;

    // Split the body into raw rows and cells.
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut row: Vec<String> = Vec::new();
    let mut cell = String::new();
    let mut depth = 0usize;
    let mut env_depth = 0usize;
    let mut closed = false;
    while s.pos < src.len() {
        let rest = s.rest();
        let ch = rest.chars().next().expect("non-empty");
        let top = depth == 0 && env_depth == 0;
        match ch {
            '\\' => {
                if top && rest.starts_with("\\\\") {
                    s.pos += 2;
                    s.optional();
                    row.push(std::mem::take(&mut cell));
                    rows.push(std::mem::take(&mut row));
                    continue;
                }
                match s.control_word() {
                    Some(word) => {
                        let len = 1 + word.len();
                        if top && RULES.contains(&word) {
                            s.pos += len;
                            if word == "cline" || word == "cmidrule" {
                                let save = s.pos;
                                s.skip_ws();
                                if s.rest().starts_with('(') {
                                    if let Some(e) = s.rest().find(')') {
                                        s.pos += e + 1;
                                    }
                                } else {
                                    s.pos = save;
                                }
                                s.group()?;
                            }
                            continue;
                        }
                        if word == "begin" || word == "end" {
                            let at = s.pos;
                            s.pos += len;
                            let name = s.group()?;
                            if word == "begin" {
                                env_depth += 1;
                            } else if env_depth == 0 && depth == 0 && name == env {
                                closed = true;
                                break;
                            } else if env_depth == 0 {
                                return Err(TableError::Parse {
                                    offset: at,
                                    message: format!("unexpected \\end{{{name}}}"),
                                });
                            } else {
                                env_depth -= 1;
                            }
                            cell.push_str(&src[at..s.pos]);
                            continue;
                        }
                        cell.push_str(&rest[..len]);
                        s.pos += len;
                    }
                    None => {
                        // escaped character such as \& or \%
                        let len = 1 + rest[1..].chars().next().map_or(0, char::len_utf8);
                        cell.push_str(&rest[..len]);
                        s.pos += len;
                    }
                }
                continue;
            }
            '{' => depth += 1,
            '}' => {
                if depth == 0 {
                    return Err(TableError::Parse {
                        offset: s.pos,
                        message: "unbalanced '}'".into(),
                    });
                }
                depth -= 1;
            }
            '&' if top => {
                row.push(std::mem::take(&mut cell));
                s.pos += 1;
                continue;
            }
            _ => {}
        }
        cell.push(ch);
        s.pos += ch.len_utf8();
    }
    if !closed {
        return Err(TableError::Parse {
            offset: begin,
            message: if depth > 0 {
                "unbalanced '{' in table body".into()
            } else {
                format!("missing \\end{{{env}}}")
            },
        });
    }
    row.push(cell);
    if !(row.len() == 1 && row[0].trim().is_empty()) {
        rows.push(row);
    }

    let mut grid = Grid::default();
    for (r, raw_row) in rows.iter().enumerate() {
        let mut c = 0;
        for raw in raw_row {
            let entry = latex_entry(raw, &mut diags)?;
            if grid.is_taken(r, c) {
                if !entry.content.is_empty() {
                    diags.push(format!(
                        "content {:?} under a spanning cell at ({r}, {c}) dropped",
                        entry.content
                    ));
                }
                c += entry.col_span;
                continue;
            }
            c += grid.place(r, c, entry, &mut diags).max(1);
        }
    }
    let table = grid.finish(rows.len(), min_cols, &mut diags);
    Ok(ParsedTable {
        table,
        diagnostics: diags,
    })
}

/// Emits a `tabular` environment. Rows covered by a `\multirow` from above get
/// empty placeholder entries.
pub fn emit_latex(t: &TableModel) -> String {
    let grid = t.occupancy().expect("emitters require a valid table");
    let mut out = format!("\\begin{{tabular}}{{{}}}\n", "c".repeat(t.n_cols));
    for r in 0..t.n_rows {
        let mut entries = Vec::new();
        let mut c = 0;
        while c < t.n_cols {
            let cell = &t.cells[grid[r][c]];
            let is_origin = cell.row == r && cell.col == c;
            let content = if is_origin { cell.content.as_str() } else { "" };
            let mut text = if cell.row_span > 1 && is_origin {
                format!("\\multirow{{{}}}{{*}}{{{content}}}", cell.row_span)
            } else {
                content.to_owned()
            };
            if cell.col_span > 1 {
                text = format!("\\multicolumn{{{}}}{{c}}{{{text}}}", cell.col_span);
            }
            entries.push(text);
            c += cell.col_span;
        }
        out.push_str(&entries.join(" & "));
        out.push_str(" \\\\\n");
    }
    out.push_str("\\end{tabular}");
    out
}

// ---------------------------------------------------------------------------
// HTML

enum HtmlItem<'a> {
    Open { name: String, attrs: &'a str },
    Close(String),
    Text(&'a str),
}

fn html_items(src: &str) -> Vec<(usize, HtmlItem<'_>)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < src.len() {
        let rest = &src[pos..];
        if rest.starts_with("<!--") {
            pos += rest.find("-->").map_or(rest.len(), |e| e + 3);
            continue;
        }
        if let Some(body) = rest.strip_prefix('<') {
            let closing = body.starts_with('/');
            let name_src = body.strip_prefix('/').unwrap_or(body);
            let name_len = name_src
                .find(|c: char| !c.is_ascii_alphanumeric())
                .unwrap_or(name_src.len());
            if name_len > 0 {
                if let Some(end) = rest.find('>') {
                    let name = name_src[..name_len].to_ascii_lowercase();
                    let skip = 1 + usize::from(closing) + name_len;
                    let item = if closing {
                        HtmlItem::Close(name)
                    } else {
                        HtmlItem::Open {
                            name,
                            attrs: &rest[skip.min(end)..end],
                        }
                    };
                    out.push((pos, item));
                    pos += end + 1;
                    continue;
                }
            }
        }
        let next = rest[1..].find('<').map_or(rest.len(), |i| i + 1);
        out.push((pos, HtmlItem::Text(&rest[..next])));
        pos += next;
    }
    out
}

fn attr_value(attrs: &str, key: &str) -> Option<String> {
    let lower = attrs.to_ascii_lowercase();
    let mut from = 0;
    while let Some(i) = lower[from..].find(key) {
        let at = from + i;
        from = at + key.len();
        let boundary = at == 0 || !lower.as_bytes()[at - 1].is_ascii_alphanumeric();
        let rest = lower[from..].trim_start();
        if !boundary || !rest.starts_with('=') {
            continue;
        }
        let rest = rest[1..].trim_start();
        let value = match rest.chars().next() {
            Some(q @ ('"' | '\'')) => rest[1..].split(q).next().unwrap_or(""),
            _ => rest
                .split(|c: char| c.is_whitespace() || c == '/')
                .next()
                .unwrap_or(""),
        };
        return Some(value.to_owned());
    }
    None
}

/// Decodes the common named entities and numeric references.
pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let decoded = rest.find(';').filter(|&e| e <= 10).and_then(|e| {
            let name = &rest[1..e];
            let ch = match name {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" | "#39" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ => name.strip_prefix('#').and_then(|num| {
                    let code = match num.strip_prefix(['x', 'X']) {
                        Some(hex) => u32::from_str_radix(hex, 16).ok(),
                        None => num.parse().ok(),
                    };
                    code.and_then(char::from_u32)
                }),
            };
            ch.map(|c| (c, e))
        });
        match decoded {
            Some((c, e)) => {
                out.push(c);
                rest = &rest[e + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn html_span(attrs: &str, key: &str, diags: &mut Vec<String>) -> usize {
    match attr_value(attrs, key) {
        None => 1,
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                diags.push(format!("unsupported {key}={v:?}; using 1"));
                1
            }
        },
    }
}

/// Parses the first `<table>` element of `src`. Unclosed `<td>`/`<tr>` are
/// closed implicitly; nested tables become text content of their cell.
pub fn parse_html_table(src: &str) -> Result<TableModel, TableError> {
    parse_html_table_verbose(src).map(|p| p.table)
}

/// [`parse_html_table`] with parser diagnostics.
pub fn parse_html_table_verbose(src: &str) -> Result<ParsedTable, TableError> {
    let mut diags = Vec::new();
    let items = html_items(src);
    let start = items
        .iter()
        .position(|(_, it)| matches!(it, HtmlItem::Open { name, .. } if name == "table"))
        .ok_or(TableError::NoTable)?;

    let mut rows: Vec<Vec<Entry>> = Vec::new();
    let mut in_row = false;
    let mut cell: Option<(Entry, String)> = None;
    let mut nested = 0usize;
    let mut closed = false;

    fn close_cell(cell: &mut Option<(Entry, String)>, rows: &mut [Vec<Entry>]) {
        if let Some((mut e, text)) = cell.take() {
            e.content = decode_entities(&text)
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            rows.last_mut().expect("cells open inside a row").push(e);
        }
    }

    for (_, item) in &items[start + 1..] {
        match item {
            HtmlItem::Open { name, .. } if name == "table" => nested += 1,
            HtmlItem::Close(name) if name == "table" && nested > 0 => nested -= 1,
            HtmlItem::Close(name) if name == "table" => {
                close_cell(&mut cell, &mut rows);
                closed = true;
                break;
            }
            HtmlItem::Text(text) => {
                if let Some((_, buf)) = &mut cell {
                    buf.push_str(text);
                }
            }
            _ if nested > 0 => {
                if let Some((_, buf)) = &mut cell {
                    buf.push(' ');
                }
            }
            HtmlItem::Open { name, .. } if name == "tr" => {
                close_cell(&mut cell, &mut rows);
                rows.push(Vec::new());
                in_row = true;
            }
            HtmlItem::Close(name) if name == "tr" => {
                close_cell(&mut cell, &mut rows);
                in_row = false;
            }
            HtmlItem::Open { name, attrs } if name == "td" || name == "th" => {
                close_cell(&mut cell, &mut rows);
                if !in_row {
                    rows.push(Vec::new());
                    in_row = true;
                }
                let entry = Entry {
                    content: String::new(),
                    row_span: html_span(attrs, "rowspan", &mut diags),
                    col_span: html_span(attrs, "colspan", &mut diags),
                    header: name == "th",
                };
                cell = Some((entry, String::new()));
            }
            HtmlItem::Close(name) if name == "td" || name == "th" => {
                close_cell(&mut cell, &mut rows);
            }
            HtmlItem::Open { name, .. } if name == "br" => {
                if let Some((_, buf)) = &mut cell {
                    buf.push(' ');
                }
            }
            _ => {}
        }
    }
    if !closed {
        close_cell(&mut cell, &mut rows);
        diags.push("missing </table>".into());
    }

    let mut grid = Grid::default();
    for (r, row) in rows.iter().enumerate() {
        let mut c = 0;
        for entry in row {
            while grid.is_taken(r, c) {
                c += 1;
            }
            c += grid.place(r, c, entry.clone(), &mut diags);
        }
    }
    let table = grid.finish(rows.len(), 0, &mut diags);
    Ok(ParsedTable {
        table,
        diagnostics: diags,
    })
}

/// Emits a bare `<table>`; header cells become `<th>`.
pub fn emit_html(t: &TableModel) -> String {
    let mut out = String::from("<table>");
    for r in 0..t.n_rows {
        out.push_str("<tr>");
        for cell in t.row_cells(r) {
            let tag = if cell.header { "th" } else { "td" };
            out.push('<');
            out.push_str(tag);
            if cell.col_span > 1 {
                out.push_str(&format!(" colspan=\"{}\"", cell.col_span));
            }
            if cell.row_span > 1 {
                out.push_str(&format!(" rowspan=\"{}\"", cell.row_span));
            }
            out.push('>');
            out.push_str(&escape_html(&cell.content));
            out.push_str("</");
            out.push_str(tag);
            out.push('>');
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>");
    out
}

/// Emits a pipe table. Lossy: spanned slots repeat the spanning cell's text,
/// and the first row becomes the header row.
pub fn emit_markdown(t: &TableModel) -> String {
    if t.n_rows == 0 || t.n_cols == 0 {
        return String::new();
    }
    let grid = t.occupancy().expect("emitters require a valid table");
    let render = |r: usize| {
        let cells: Vec<String> = (0..t.n_cols)
            .map(|c| {
                t.cells[grid[r][c]]
                    .content
                    .replace('|', "\\|")
                    .replace('\n', " ")
            })
            .collect();
        format!("| {} |", cells.join(" | "))
    };
    let mut lines = vec![render(0), format!("|{}", " --- |".repeat(t.n_cols))];
    lines.extend((1..t.n_rows).map(render));
    lines.join("\n")
}
