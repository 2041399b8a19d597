//! Document-level scoring and corpus aggregation.

use std::str::FromStr;

use serde::Serialize;

use super::{bleu, norm_edit_distance, normalize, teds, wer, word_f1, NormOptions};
use crate::doc_model::{Block, Document, SemanticClass};
use crate::tables::{parse_html_table, parse_latex_table, TableModel};

/// Named normalization profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalProfile {
    /// Tables and formulas excluded, markup stripped, lowercased.
    Plain,
    /// Tables and formulas excluded, markup and case kept.
    Mip,
    /// Text of table blocks only.
    Tables,
}

impl EvalProfile {
    pub fn norm_options(self) -> NormOptions {
        match self {
            EvalProfile::Plain => NormOptions::default(),
            EvalProfile::Mip => NormOptions {
                lowercase: false,
                strip_markup: false,
                ..NormOptions::default()
            },
            EvalProfile::Tables => NormOptions {
                exclude_classes: SemanticClass::KNOWN
                    .into_iter()
                    .filter(|c| *c != SemanticClass::Table)
                    .collect(),
                ..NormOptions::default()
            },
        }
    }
}

impl FromStr for EvalProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(EvalProfile::Plain),
            "mip" => Ok(EvalProfile::Mip),
            "tables" => Ok(EvalProfile::Tables),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

fn looks_like_table(text: &str) -> bool {
    text.contains("\\begin{tabular") || text.contains("<table")
}

/// Whether a block is a table: by class, or by content when classes are absent.
fn is_table(block: &Block) -> bool {
    match &block.class {
        Some(c) => *c == SemanticClass::Table,
        None => block.text.as_deref().is_some_and(looks_like_table),
    }
}

fn excluded(block: &Block, opts: &NormOptions) -> bool {
    match &block.class {
        Some(c) => opts.exclude_classes.contains(c),
        None => opts.exclude_classes.contains(&SemanticClass::Table) && is_table(block),
    }
}

/// Newline-joined text of every block not excluded by `opts`.
pub fn document_text(doc: &Document, opts: &NormOptions) -> String {
    doc.blocks
        .iter()
        .filter(|b| !excluded(b, opts))
        .filter_map(|b| b.text.as_deref())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Tables of a document in block order. Unparseable tables become empty tables.
pub fn extract_tables(doc: &Document) -> Vec<TableModel> {
    doc.blocks
        .iter()
        .filter(|b| is_table(b))
        .map(|b| {
            let text = b.text.as_deref().unwrap_or("");
            let parsed = if text.contains("<table") {
                parse_html_table(text)
            } else {
                parse_latex_table(text)
            };
            parsed.unwrap_or_else(|_| TableModel::empty())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocScores {
    pub wer: f64,
    pub f1: f64,
    pub edit_dist: f64,
    pub bleu: f64,
    /// Mean over paired tables; `None` when neither side has tables.
    pub teds: Option<f64>,
    pub s_teds: Option<f64>,
}

fn mean_table_score(
    reference: &[TableModel],
    hyp: &[TableModel],
    structure_only: bool,
) -> Option<f64> {
    let n = reference.len().max(hyp.len());
    if n == 0 {
        return None;
    }
    // Unpaired tables score zero.
    let sum: f64 = reference
        .iter()
        .zip(hyp)
        .map(|(r, h)| teds(r, h, structure_only))
        .sum();
    Some(sum / n as f64)
}

/// Scores one hypothesis page against its reference.
pub fn score_document(
    reference: &Document,
    hypothesis: &Document,
    opts: &NormOptions,
) -> DocScores {
    let ref_tokens = normalize(&document_text(reference, opts), opts);
    let hyp_tokens = normalize(&document_text(hypothesis, opts), opts);
    let ref_tables = extract_tables(reference);
    let hyp_tables = extract_tables(hypothesis);
    DocScores {
        wer: wer(&ref_tokens, &hyp_tokens),
        f1: word_f1(&ref_tokens, &hyp_tokens),
        edit_dist: norm_edit_distance(&ref_tokens.join(" "), &hyp_tokens.join(" ")),
        bleu: if ref_tokens.is_empty() && hyp_tokens.is_empty() {
            1.0
        } else {
            bleu(&ref_tokens, &hyp_tokens, 4)
        },
        teds: mean_table_score(&ref_tables, &hyp_tables, false),
        s_teds: mean_table_score(&ref_tables, &hyp_tables, true),
    }
}

/// Corpus means, folded in document order. Table scores average over the
/// documents that have tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub documents: usize,
    pub wer: f64,
    pub f1: f64,
    pub edit_dist: f64,
    pub bleu: f64,
    pub teds: Option<f64>,
    pub s_teds: Option<f64>,
}

pub fn aggregate(scores: &[DocScores]) -> Aggregate {
    let n = scores.len().max(1) as f64;
    let mean = |f: fn(&DocScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: fn(&DocScores) -> Option<f64>| {
        let vals: Vec<f64> = scores.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Aggregate {
        documents: scores.len(),
        wer: mean(|s| s.wer),
        f1: mean(|s| s.f1),
        edit_dist: mean(|s| s.edit_dist),
        bleu: mean(|s| s.bleu),
        teds: mean_opt(|s| s.teds),
        s_teds: mean_opt(|s| s.s_teds),
    }
}
