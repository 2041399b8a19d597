//! Tree-edit-distance similarity between tables.
//!
//! A table becomes `table → tr* → td*`. Cell labels carry their spans; a
//! rename between cells with equal spans costs the normalized character edit
//! distance of their contents, or nothing when scoring structure only.

use super::norm_edit_distance;
use super::ted::{tree_edit_distance, EditCosts, TreeNode};
use crate::tables::TableModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TedsLabel {
    pub tag: &'static str,
    pub row_span: usize,
    pub col_span: usize,
    pub content: String,
}

impl TedsLabel {
    fn node(tag: &'static str) -> Self {
        TedsLabel {
            tag,
            row_span: 1,
            col_span: 1,
            content: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TedsCosts {
    /// Ignore cell content (S-TEDS).
    pub structure_only: bool,
}

impl EditCosts<TedsLabel> for TedsCosts {
    fn rename(&self, from: &TedsLabel, to: &TedsLabel) -> f64 {
        if (from.tag, from.row_span, from.col_span) != (to.tag, to.row_span, to.col_span) {
            1.0
        } else if from.tag == "td" && !self.structure_only {
            norm_edit_distance(&from.content, &to.content)
        } else {
            0.0
        }
    }
}

/// Builds the scoring tree. Header flags are not part of the tree.
pub fn table_tree(t: &TableModel) -> TreeNode<TedsLabel> {
    let rows = (0..t.n_rows)
        .map(|r| {
            let cells = t
                .row_cells(r)
                .map(|c| {
                    TreeNode::leaf(TedsLabel {
                        tag: "td",
                        row_span: c.row_span,
                        col_span: c.col_span,
                        content: c.content.clone(),
                    })
                })
                .collect();
            TreeNode::new(TedsLabel::node("tr"), cells)
        })
        .collect();
    TreeNode::new(TedsLabel::node("table"), rows)
}

/// `1 − TED / max(|T_ref|, |T_hyp|)`, clamped to `[0, 1]`.
pub fn teds(reference: &TableModel, hypothesis: &TableModel, structure_only: bool) -> f64 {
    let (a, b) = (table_tree(reference), table_tree(hypothesis));
    let size = a.size().max(b.size()).max(1) as f64;
    let distance = tree_edit_distance(Some(&a), Some(&b), &TedsCosts { structure_only });
    (1.0 - distance / size).clamp(0.0, 1.0)
}
