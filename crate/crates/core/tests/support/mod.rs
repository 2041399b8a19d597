//! Independent oracles and seeded generators shared by the property tests and
//! the acceptance suite.

#![allow(dead_code)]

use std::collections::HashMap;

use docparse_core::doc_model::{
    valid_prompt_combinations, BBox, Block, Document, PromptConfig, SemanticClass,
};
use docparse_core::metrics::{EditCosts, TreeNode};
use docparse_core::tables::{Cell, TableModel};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Levenshtein: textbook recursion with memoization.

pub fn levenshtein_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(
        a: &[T],
        b: &[T],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

// ---------------------------------------------------------------------------
// Tree edit distance: minimum over all valid edit mappings.

struct Indexed<'a, L> {
    labels: Vec<&'a L>,
    post: Vec<usize>,
    /// `anc[i][j]`: node i is a proper ancestor of node j.
    anc: Vec<Vec<bool>>,
}

fn index_tree<L>(root: &TreeNode<L>) -> Indexed<'_, L> {
    fn walk<'a, L>(
        node: &'a TreeNode<L>,
        stack: &mut Vec<usize>,
        labels: &mut Vec<&'a L>,
        post: &mut Vec<usize>,
        parents: &mut Vec<Vec<usize>>,
        counter: &mut usize,
    ) {
        let me = labels.len();
        labels.push(&node.label);
        post.push(0);
        parents.push(stack.clone());
        stack.push(me);
        for c in &node.children {
            walk(c, stack, labels, post, parents, counter);
        }
        stack.pop();
        post[me] = *counter;
        *counter += 1;
    }
    let (mut labels, mut post, mut parents, mut counter) = (Vec::new(), Vec::new(), Vec::new(), 0);
    walk(
        root,
        &mut Vec::new(),
        &mut labels,
        &mut post,
        &mut parents,
        &mut counter,
    );
    let n = labels.len();
    let mut anc = vec![vec![false; n]; n];
    for (j, ps) in parents.iter().enumerate() {
        for &i in ps {
            anc[i][j] = true;
        }
    }
    Indexed { labels, post, anc }
}

/// Exhaustive search over one-to-one mappings preserving ancestry and postorder.
pub fn ted_oracle<L, C: EditCosts<L>>(a: &TreeNode<L>, b: &TreeNode<L>, costs: &C) -> f64 {
    let (ta, tb) = (index_tree(a), index_tree(b));
    let mut pairs = Vec::new();
    let mut used = vec![false; tb.labels.len()];
    let mut best = f64::INFINITY;
    search(&ta, &tb, costs, 0, &mut pairs, &mut used, &mut best);
    best
}

fn compatible<L>(
    ta: &Indexed<L>,
    tb: &Indexed<L>,
    (i1, j1): (usize, usize),
    (i2, j2): (usize, usize),
) -> bool {
    ta.anc[i1][i2] == tb.anc[j1][j2]
        && ta.anc[i2][i1] == tb.anc[j2][j1]
        && (ta.post[i1] < ta.post[i2]) == (tb.post[j1] < tb.post[j2])
}

fn search<L, C: EditCosts<L>>(
    ta: &Indexed<L>,
    tb: &Indexed<L>,
    costs: &C,
    i: usize,
    pairs: &mut Vec<(usize, usize)>,
    used: &mut Vec<bool>,
    best: &mut f64,
) {
    if i == ta.labels.len() {
        let mut cost = 0.0;
        for &(x, y) in pairs.iter() {
            cost += costs.rename(ta.labels[x], tb.labels[y]);
        }
        for x in 0..ta.labels.len() {
            if !pairs.iter().any(|p| p.0 == x) {
                cost += costs.delete(ta.labels[x]);
            }
        }
        for y in 0..tb.labels.len() {
            if !used[y] {
                cost += costs.insert(tb.labels[y]);
            }
        }
        *best = best.min(cost);
        return;
    }
    search(ta, tb, costs, i + 1, pairs, used, best);
    for j in 0..tb.labels.len() {
        if used[j] || !pairs.iter().all(|&p| compatible(ta, tb, p, (i, j))) {
            continue;
        }
        used[j] = true;
        pairs.push((i, j));
        search(ta, tb, costs, i + 1, pairs, used, best);
        pairs.pop();
        used[j] = false;
    }
}

/// Labels are multiples of 1/4; renames cost the label gap, insert and delete 0.6.
pub struct GapCosts;

impl EditCosts<f64> for GapCosts {
    fn insert(&self, _: &f64) -> f64 {
        0.6
    }
    fn delete(&self, _: &f64) -> f64 {
        0.6
    }
    fn rename(&self, a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }
}

/// Random tree with `1..=max_nodes` nodes; each new node hangs under a random earlier one.
pub fn random_tree<R: Rng, L>(
    rng: &mut R,
    max_nodes: usize,
    mut label: impl FnMut(&mut R) -> L,
) -> TreeNode<L> {
    let n = rng.gen_range(1..=max_nodes);
    let labels: Vec<L> = (0..n).map(|_| label(rng)).collect();
    let parents: Vec<usize> = (1..n).map(|i| rng.gen_range(0..i)).collect();
    fn build<L>(i: usize, labels: &mut Vec<Option<L>>, parents: &[usize]) -> TreeNode<L> {
        let kids: Vec<usize> = (1..labels.len()).filter(|&c| parents[c - 1] == i).collect();
        let children = kids
            .into_iter()
            .map(|c| build(c, labels, parents))
            .collect();
        TreeNode::new(labels[i].take().unwrap(), children)
    }
    let mut slots: Vec<Option<L>> = labels.into_iter().map(Some).collect();
    build(0, &mut slots, &parents)
}

// ---------------------------------------------------------------------------
// Tables.

fn word<R: Rng>(rng: &mut R) -> String {
    const WORDS: &[&str] = &[
        "cat", "42", "alpha", "b", "Total", "x1", "m2", "ratio", "note",
    ];
    let k = rng.gen_range(0..=2);
    (0..k)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random exact tiling with `1..=max_dim` rows and columns and spans up to `max_span`.
pub fn random_table<R: Rng>(rng: &mut R, max_dim: usize, max_span: usize) -> TableModel {
    let (rows, cols) = (rng.gen_range(1..=max_dim), rng.gen_range(1..=max_dim));
    let mut taken = vec![vec![false; cols]; rows];
    let mut cells = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if taken[r][c] {
                continue;
            }
            let free_cols = (c..cols).take_while(|&cc| !taken[r][cc]).count();
            let cs = rng.gen_range(1..=free_cols.min(max_span));
            let rs = rng.gen_range(1..=(rows - r).min(max_span));
            for row in taken.iter_mut().skip(r).take(rs) {
                for slot in row.iter_mut().skip(c).take(cs) {
                    *slot = true;
                }
            }
            cells.push(Cell::new(r, c, word(rng)).spans(rs, cs));
        }
    }
    TableModel::new(rows, cols, cells).expect("generator yields exact tilings")
}

// ---------------------------------------------------------------------------
// Documents and pages.

fn random_class<R: Rng>(rng: &mut R) -> SemanticClass {
    if rng.gen_bool(0.1) {
        SemanticClass::from_label(["Code", "Sidebar", "Key Value"].choose(rng).unwrap())
    } else {
        SemanticClass::KNOWN.choose(rng).unwrap().clone()
    }
}

pub fn random_bbox<R: Rng>(rng: &mut R) -> BBox {
    let (a, b) = (rng.gen_range(0..=1024), rng.gen_range(0..=1024));
    let (c, d) = (rng.gen_range(0..=1280), rng.gen_range(0..=1280));
    BBox::from_grid(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap()
}

fn random_text<R: Rng>(rng: &mut R, paragraph: bool) -> String {
    const PIECES: &[&str] = &[
        "word", " ", "é", "#", "<", ">", "x_", "y", "|", "0.5", "\n", "**b**", "$x$", "\\alpha",
    ];
    loop {
        let n = rng.gen_range(if paragraph { 1 } else { 0 }..8);
        let s: String = (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect();
        let opener = ["<x_", "<y_", "<class_"].iter().any(|o| s.contains(o));
        let bad_para = paragraph
            && (s.contains("\n\n") || s.starts_with('\n') || s.ends_with('\n') || s.is_empty());
        if !opener && !bad_para {
            return s;
        }
    }
}

/// Random serializable document under one of the eight prompt configurations.
pub fn random_document<R: Rng>(rng: &mut R) -> Document {
    let prompt: PromptConfig = *valid_prompt_combinations().choose(rng).unwrap();
    let mut doc = Document::new(prompt);
    for _ in 0..rng.gen_range(0..7) {
        let block = if !prompt.boxes {
            Block::text_only(0, random_text(rng, true))
        } else {
            Block {
                index: 0,
                text: prompt.has_text().then(|| random_text(rng, false)),
                bbox: Some(random_bbox(rng)),
                class: prompt.classes.then(|| random_class(rng)),
            }
        };
        doc.push(block);
    }
    doc
}

/// Random boxed and classed page.
pub fn random_page<R: Rng>(rng: &mut R, max_blocks: usize) -> Vec<Block> {
    (0..rng.gen_range(0..=max_blocks))
        .map(|i| Block {
            index: i,
            text: Some(format!("b{i}")),
            bbox: Some(random_bbox(rng)),
            class: Some(random_class(rng)),
        })
        .collect()
}

/// Vertically stacked blocks sharing one column, shuffled. Returns the page and
/// the expected top-to-bottom permutation.
pub fn random_single_column<R: Rng>(rng: &mut R, max_blocks: usize) -> (Vec<Block>, Vec<usize>) {
    let n = rng.gen_range(1..=max_blocks);
    let (left, right) = (rng.gen_range(0..400), rng.gen_range(600..=1024));
    let mut tops: Vec<u32> = rand::seq::index::sample(rng, 1200, n)
        .into_iter()
        .map(|t| t as u32)
        .collect();
    tops.sort_unstable();
    let mut blocks: Vec<Block> = tops
        .iter()
        .map(|&y| {
            // indent by less than a quarter of the column so every pair still shares it
            let x0 = left + rng.gen_range(0..(right - left) / 4);
            let x1 = right - rng.gen_range(0..(right - left) / 4);
            Block {
                index: 0,
                text: Some(format!("y{y}")),
                bbox: Some(BBox::from_grid(x0, y, x1, y + rng.gen_range(0..80)).unwrap()),
                class: Some(SemanticClass::Text),
            }
        })
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    // blocks[perm[k]] moves to position k; the block starting at tops[t] ends up at inverse[t]
    let shuffled: Vec<Block> = perm.iter().map(|&p| blocks[p].clone()).collect();
    let mut expected = vec![0; n];
    for (k, &p) in perm.iter().enumerate() {
        expected[p] = k;
    }
    blocks = shuffled;
    for (i, b) in blocks.iter_mut().enumerate() {
        b.index = i;
    }
    (blocks, expected)
}

// ---------------------------------------------------------------------------
// Multi-token prediction.

use docparse_core::mtp::{HeadLayers, LookupDecoder, Matrix, MtpWeights};

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Random weights with `d ≤ 8`, `V ≤ 16`, `m ≤ 4`, shared or per-head layers.
pub fn random_weights<R: Rng>(rng: &mut R) -> MtpWeights {
    let (d, v, m) = (
        rng.gen_range(1..=8),
        rng.gen_range(2..=16),
        rng.gen_range(1..=4),
    );
    let pairs = if m > 1 && rng.gen_bool(0.5) { m - 1 } else { 1 };
    MtpWeights {
        m,
        layers: (0..pairs)
            .map(|_| HeadLayers {
                l1: random_matrix(rng, d, d),
                l2: random_matrix(rng, d, d),
            })
            .collect(),
        head: random_matrix(rng, v, d),
        embed: random_matrix(rng, v, d),
    }
}

pub fn random_lookup<R: Rng>(rng: &mut R, d: usize) -> LookupDecoder {
    let n = rng.gen_range(1..=24);
    let states = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    LookupDecoder::new(rng.gen_range(1..=3), states).unwrap()
}

/// Triple-loop matrix product, written out independently of the library.
pub fn naive_matmul(a: &Matrix, b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b[0].len()]; a.rows()];
    for i in 0..a.rows() {
        for j in 0..b[0].len() {
            for k in 0..a.cols() {
                out[i][j] += a.get(i, k) * b[k][j];
            }
        }
    }
    out
}

/// `head · (l1 · (h + l2 · e))` via column-vector products.
pub fn mtp_oracle(w: &MtpWeights, k: usize, h: &[f64], e: &[f64]) -> Vec<f64> {
    let pair = &w.layers[if w.layers.len() == 1 { 0 } else { k - 2 }];
    let col = |v: &[f64]| v.iter().map(|x| vec![*x]).collect::<Vec<_>>();
    let l2e = naive_matmul(&pair.l2, &col(e));
    let sum: Vec<Vec<f64>> = h.iter().zip(&l2e).map(|(x, y)| vec![x + y[0]]).collect();
    let inner = naive_matmul(&pair.l1, &sum);
    naive_matmul(&w.head, &inner)
        .into_iter()
        .map(|r| r[0])
        .collect()
}

pub fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}
