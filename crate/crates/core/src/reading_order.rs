//! Reading-order policies.
//!
//! [`OrderPolicy::NaturalTC`] orders every block geometrically: blocks are
//! clustered into columns, columns are read left to right, and each column
//! top to bottom. [`OrderPolicy::CanonicalV11`] puts page headers first, then
//! the body in natural order, then floating elements grouped by class.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::doc_model::{Block, Document, SemanticClass};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("block {0} has no bounding box")]
    MissingBox(usize),
    #[error("block {0} has no class")]
    MissingClass(usize),
    #[error("unknown order policy {0:?} (expected v11 or tc)")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderPolicy {
    /// Page headers, then body classes, then floating classes in a fixed order.
    CanonicalV11,
    /// One geometric order over all blocks.
    NaturalTC,
}

impl FromStr for OrderPolicy {
    type Err = OrderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v11" => Ok(OrderPolicy::CanonicalV11),
            "tc" => Ok(OrderPolicy::NaturalTC),
            other => Err(OrderError::UnknownPolicy(other.to_owned())),
        }
    }
}

impl fmt::Display for OrderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderPolicy::CanonicalV11 => "v11",
            OrderPolicy::NaturalTC => "tc",
        })
    }
}

/// An adjacent inversion between the document order and the policy order.
///
/// The block at `earlier` precedes the block at `later` in the document,
/// while the policy places `later` first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderViolation {
    pub earlier: usize,
    pub later: usize,
    pub rule: String,
    pub detail: String,
}

/// Rank of a class within the canonical order. Unknown classes read as body text.
pub fn segment_rank(class: &SemanticClass) -> u8 {
    use SemanticClass::*;
    match class {
        PageHeader => 0,
        Title | SectionHeader | Text | ListItem | Formula | Other(_) => 1,
        Footnote => 2,
        PageFooter => 3,
        Table => 4,
        Picture => 5,
        Caption => 6,
    }
}

struct Geometry {
    index: usize,
    x0: i64,
    y0: i64,
    x1: i64,
}

fn geometry(blocks: &[Block], subset: &[usize]) -> Result<Vec<Geometry>, OrderError> {
    subset
        .iter()
        .map(|&i| {
            let [x0, y0, x1, _] = blocks[i].bbox.ok_or(OrderError::MissingBox(i))?.grid();
            Ok(Geometry {
                index: i,
                x0: i64::from(x0),
                y0: i64::from(y0),
                x1: i64::from(x1),
            })
        })
        .collect()
}

/// Horizontal intervals share a column when they overlap by at least half the narrower one.
fn same_column(a: &Geometry, b: &Geometry) -> bool {
    let overlap = a.x1.min(b.x1) - a.x0.max(b.x0);
    let narrower = (a.x1 - a.x0).min(b.x1 - b.x0);
    overlap >= 0 && 2 * overlap >= narrower
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn natural_order_of(blocks: &[Block], subset: &[usize]) -> Result<Vec<usize>, OrderError> {
    let geo = geometry(blocks, subset)?;
    let n = geo.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if same_column(&geo[i], &geo[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut column_left = vec![i64::MAX; n];
    for (i, &r) in roots.iter().enumerate() {
        column_left[r] = column_left[r].min(geo[i].x0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let g = &geo[i];
        (column_left[roots[i]], roots[i], g.y0, g.x0, g.index)
    });
    Ok(order.into_iter().map(|i| geo[i].index).collect())
}

/// Geometric reading order as a permutation: `result[k]` is the index of the
/// block read at position `k`.
pub fn natural_order(blocks: &[Block]) -> Result<Vec<usize>, OrderError> {
    let all: Vec<usize> = (0..blocks.len()).collect();
    natural_order_of(blocks, &all)
}

/// Canonical order: page headers, body, then footnotes, page footers, tables,
/// pictures and captions, each segment in natural order.
pub fn canonical_order_v11(blocks: &[Block]) -> Result<Vec<usize>, OrderError> {
    let mut segments: [Vec<usize>; 7] = Default::default();
    for (i, b) in blocks.iter().enumerate() {
        if b.bbox.is_none() {
            return Err(OrderError::MissingBox(i));
        }
        let class = b.class.as_ref().ok_or(OrderError::MissingClass(i))?;
        segments[usize::from(segment_rank(class))].push(i);
    }
    let mut out = Vec::with_capacity(blocks.len());
    for seg in &segments {
        out.extend(natural_order_of(blocks, seg)?);
    }
    Ok(out)
}

/// Permutation for `policy`.
pub fn policy_order(blocks: &[Block], policy: OrderPolicy) -> Result<Vec<usize>, OrderError> {
    match policy {
        OrderPolicy::CanonicalV11 => canonical_order_v11(blocks),
        OrderPolicy::NaturalTC => natural_order(blocks),
    }
}

/// Reports one violation per adjacent inversion of the policy permutation;
/// empty exactly when the document is already in policy order.
pub fn check_order(doc: &Document, policy: OrderPolicy) -> Result<Vec<OrderViolation>, OrderError> {
    let perm = policy_order(&doc.blocks, policy)?;
    let mut out = Vec::new();
    for w in perm.windows(2) {
        let (first, second) = (w[0], w[1]);
        if first < second {
            continue;
        }
        let rank = |i: usize| doc.blocks[i].class.as_ref().map(segment_rank);
        let (rule, detail) = match (policy, rank(first), rank(second)) {
            (OrderPolicy::CanonicalV11, Some(a), Some(b)) if a != b => (
                "class-segment",
                format!(
                    "{} (block {first}) must precede {} (block {second})",
                    doc.blocks[first].class.as_ref().expect("ranked"),
                    doc.blocks[second].class.as_ref().expect("ranked"),
                ),
            ),
            _ => (
                "geometry",
                format!("block {first} is read before block {second}"),
            ),
        };
        out.push(OrderViolation {
            earlier: second,
            later: first,
            rule: rule.to_owned(),
            detail,
        });
    }
    Ok(out)
}

fn apply(doc: &Document, perm: &[usize]) -> Document {
    let mut out = Document {
        blocks: perm.iter().map(|&i| doc.blocks[i].clone()).collect(),
        prompt: doc.prompt,
        page: doc.page,
    };
    out.reindex();
    out
}

/// Reorders a document under `policy`. Documents produced without boxes carry
/// no geometry and are returned unchanged.
pub fn reorder(doc: &Document, policy: OrderPolicy) -> Result<Document, OrderError> {
    if !doc.prompt.boxes {
        return Ok(doc.clone());
    }
    Ok(apply(doc, &policy_order(&doc.blocks, policy)?))
}

/// Best-effort [`reorder`]: blocks without a box keep their relative order at
/// the end of the page, and blocks without a class read as body text.
pub fn reorder_lenient(doc: &Document, policy: OrderPolicy) -> (Document, Vec<String>) {
    if !doc.prompt.boxes {
        return (doc.clone(), Vec::new());
    }
    let mut notes = Vec::new();
    let (boxed, loose): (Vec<usize>, Vec<usize>) =
        (0..doc.blocks.len()).partition(|&i| doc.blocks[i].bbox.is_some());
    for &i in &loose {
        notes.push(format!("block {i} has no box; moved to the end"));
    }
    let mut perm = match policy {
        OrderPolicy::NaturalTC => natural_order_of(&doc.blocks, &boxed).expect("boxed subset"),
        OrderPolicy::CanonicalV11 => {
            let mut segments: [Vec<usize>; 7] = Default::default();
            for &i in &boxed {
                let rank = match &doc.blocks[i].class {
                    Some(c) => segment_rank(c),
                    None => {
                        notes.push(format!("block {i} has no class; ordered as body text"));
                        1
                    }
                };
                segments[usize::from(rank)].push(i);
            }
            segments
                .iter()
                .flat_map(|s| natural_order_of(&doc.blocks, s).expect("boxed subset"))
                .collect()
        }
    };
    perm.extend(loose);
    (apply(doc, &perm), notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::{BBox, PromptConfig};

    fn block(i: usize, x: (f64, f64), y: (f64, f64), class: SemanticClass) -> Block {
        Block {
            index: i,
            text: Some(format!("b{i}")),
            bbox: Some(BBox::from_normalized(x.0, y.0, x.1, y.1).unwrap()),
            class: Some(class),
        }
    }

    fn doc(blocks: Vec<Block>) -> Document {
        let mut d = Document::new(PromptConfig::MIP);
        for b in blocks {
            d.push(b);
        }
        d
    }

    #[test]
    fn single_column_sorts_by_top_edge() {
        let ys = [0.5, 0.1, 0.9, 0.3];
        let blocks: Vec<_> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| block(i, (0.1, 0.9), (y, y + 0.05), SemanticClass::Text))
            .collect();
        assert_eq!(natural_order(&blocks).unwrap(), vec![1, 3, 0, 2]);
    }

    #[test]
    fn two_columns_read_left_then_right() {
        // interleaved input: right, left, right, left, left, right
        let spec = [
            (0.55, 0.2),
            (0.05, 0.6),
            (0.55, 0.1),
            (0.05, 0.1),
            (0.05, 0.3),
            (0.55, 0.7),
        ];
        let blocks: Vec<_> = spec
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| block(i, (x, x + 0.4), (y, y + 0.05), SemanticClass::Text))
            .collect();
        assert_eq!(natural_order(&blocks).unwrap(), vec![3, 4, 1, 2, 0, 5]);
    }

    #[test]
    fn empty_input() {
        assert!(natural_order(&[]).unwrap().is_empty());
        assert!(canonical_order_v11(&[]).unwrap().is_empty());
    }

    #[test]
    fn page_header_first_even_when_low() {
        let blocks = vec![
            block(0, (0.1, 0.9), (0.1, 0.2), SemanticClass::Text),
            block(1, (0.1, 0.9), (0.95, 0.99), SemanticClass::PageHeader),
        ];
        assert_eq!(canonical_order_v11(&blocks).unwrap(), vec![1, 0]);
    }

    #[test]
    fn trailing_classes_in_listed_order() {
        let blocks = vec![
            block(0, (0.1, 0.3), (0.1, 0.2), SemanticClass::Caption),
            block(1, (0.5, 0.9), (0.3, 0.4), SemanticClass::Picture),
            block(2, (0.2, 0.6), (0.5, 0.6), SemanticClass::Footnote),
            block(3, (0.1, 0.9), (0.05, 0.1), SemanticClass::Table),
            block(4, (0.3, 0.4), (0.9, 0.95), SemanticClass::PageFooter),
        ];
        assert_eq!(canonical_order_v11(&blocks).unwrap(), vec![2, 4, 3, 1, 0]);
    }

    #[test]
    fn caption_before_table() {
        let d = doc(vec![
            block(0, (0.1, 0.9), (0.05, 0.1), SemanticClass::Text),
            block(1, (0.1, 0.9), (0.2, 0.25), SemanticClass::Caption),
            block(2, (0.1, 0.9), (0.3, 0.6), SemanticClass::Table),
        ]);
        let v = check_order(&d, OrderPolicy::CanonicalV11).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "class-segment");
        assert_eq!((v[0].earlier, v[0].later), (1, 2));
        assert!(check_order(&d, OrderPolicy::NaturalTC).unwrap().is_empty());

        let fixed = reorder(&d, OrderPolicy::CanonicalV11).unwrap();
        assert!(check_order(&fixed, OrderPolicy::CanonicalV11)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn missing_fields_are_errors() {
        let mut b = block(0, (0.1, 0.2), (0.1, 0.2), SemanticClass::Text);
        b.class = None;
        assert_eq!(
            canonical_order_v11(&[b.clone()]),
            Err(OrderError::MissingClass(0))
        );
        b.bbox = None;
        assert_eq!(natural_order(&[b]), Err(OrderError::MissingBox(0)));
    }

    #[test]
    fn lenient_reorder_moves_unboxed_blocks_last() {
        let mut d = doc(vec![
            block(0, (0.1, 0.9), (0.5, 0.6), SemanticClass::Text),
            Block::text_only(1, "loose"),
            block(2, (0.1, 0.9), (0.1, 0.2), SemanticClass::Text),
        ]);
        d.blocks[2].class = None;
        let (out, notes) = reorder_lenient(&d, OrderPolicy::CanonicalV11);
        let texts: Vec<_> = out.blocks.iter().map(|b| b.text.clone().unwrap()).collect();
        assert_eq!(texts, ["b2", "b0", "loose"]);
        assert_eq!(notes.len(), 2);
    }

    #[test]
    fn thin_blocks_join_columns_only_when_touching() {
        let blocks = vec![
            block(0, (0.5, 0.5), (0.5, 0.6), SemanticClass::Text),
            block(1, (0.1, 0.3), (0.1, 0.2), SemanticClass::Text),
            block(2, (0.4, 0.6), (0.1, 0.2), SemanticClass::Text),
        ];
        // the zero-width rule at x=0.5 sits inside block 2's column
        assert_eq!(natural_order(&blocks).unwrap(), vec![1, 2, 0]);
    }
}
