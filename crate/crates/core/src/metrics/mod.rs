//! Scoring suite: text normalization, WER, word F1, normalized edit distance,
//! BLEU, ordered tree edit distance and TEDS / S-TEDS.

mod eval;
mod ted;
mod teds;

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use unicode_normalization::UnicodeNormalization;

use crate::doc_model::SemanticClass;

pub use eval::{
    aggregate, document_text, extract_tables, score_document, Aggregate, DocScores, EvalProfile,
};
pub use ted::{tree_edit_distance, EditCosts, TreeNode, UnitCosts};
pub use teds::{table_tree, teds, TedsCosts, TedsLabel};

/// Normalization flags. The default profile excludes tables and formulas,
/// strips markup and lowercases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormOptions {
    pub lowercase: bool,
    pub collapse_whitespace: bool,
    /// Remove Markdown heading/emphasis markers and TeX control sequences.
    pub strip_markup: bool,
    /// Block classes left out of document-level text.
    pub exclude_classes: BTreeSet<SemanticClass>,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            lowercase: true,
            collapse_whitespace: true,
            strip_markup: true,
            exclude_classes: [SemanticClass::Table, SemanticClass::Formula].into(),
        }
    }
}

impl NormOptions {
    /// Also leaves out page headers and footers.
    pub fn with_mask_out(mut self) -> Self {
        self.exclude_classes.insert(SemanticClass::PageHeader);
        self.exclude_classes.insert(SemanticClass::PageFooter);
        self
    }
}

fn strip_heading(line: &str) -> &str {
    let t = line.trim_start();
    let hashes = t.len() - t.trim_start_matches('#').len();
    if (1..=6).contains(&hashes) {
        let rest = &t[hashes..];
        if rest.is_empty() || rest.starts_with(char::is_whitespace) {
            return rest;
        }
    }
    line
}

/// Removes TeX control words, math delimiters and Markdown emphasis, keeping
/// the argument text they wrap.
fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut chars = strip_heading(line).chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.peek().copied() {
                    Some(n) if n.is_ascii_alphabetic() => {
                        while chars.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                            chars.next();
                        }
                        out.push(' ');
                    }
                    Some('(' | ')' | '[' | ']' | '\\') => {
                        chars.next();
                        out.push(' ');
                    }
                    Some(n) => {
                        chars.next();
                        out.push(n);
                    }
                    None => {}
                },
                '$' | '{' | '}' | '^' | '_' | '*' | '`' => {}
                '~' if chars.peek() == Some(&'~') => {
                    chars.next();
                }
                c => out.push(c),
            }
        }
    }
    out
}

/// Normalizes text into word tokens: NFKC, optional markup stripping and
/// lowercasing, then whitespace splitting.
pub fn normalize(text: &str, opts: &NormOptions) -> Vec<String> {
    let mut s: String = text.nfkc().collect();
    if opts.strip_markup {
        s = strip_markup(&s);
    }
    if opts.lowercase {
        s = s.to_lowercase();
    }
    if opts.collapse_whitespace {
        s.split_whitespace().map(str::to_owned).collect()
    } else if s.is_empty() {
        Vec::new()
    } else {
        s.split(char::is_whitespace).map(str::to_owned).collect()
    }
}

/// Levenshtein distance over arbitrary sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate: edits / max(1, |ref|).
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> f64 {
    levenshtein(reference, hypothesis) as f64 / reference.len().max(1) as f64
}

fn counts<T: Eq + Hash>(items: &[T]) -> HashMap<&T, usize> {
    let mut m = HashMap::new();
    for t in items {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Multiset word F1. Two empty lists score 1.
pub fn word_f1<T: Eq + Hash>(reference: &[T], hypothesis: &[T]) -> f64 {
    if reference.is_empty() && hypothesis.is_empty() {
        return 1.0;
    }
    let rc = counts(reference);
    let common: usize = counts(hypothesis)
        .iter()
        .map(|(t, &n)| n.min(rc.get(t).copied().unwrap_or(0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / hypothesis.len() as f64;
    let r = common as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Character Levenshtein / max(1, longer length).
pub fn norm_edit_distance(reference: &str, hypothesis: &str) -> f64 {
    let a: Vec<char> = reference.chars().collect();
    let b: Vec<char> = hypothesis.chars().collect();
    levenshtein(&a, &b) as f64 / a.len().max(b.len()).max(1) as f64
}

/// Sentence BLEU with uniform weights over 1..=`max_n`-grams.
///
/// A precision with no matches is smoothed to `1 / (total + 1)`; the brevity
/// penalty is `min(1, exp(1 - |ref| / |hyp|))`. An empty hypothesis scores 0.
pub fn bleu<T: Eq + Hash>(reference: &[T], hypothesis: &[T], max_n: usize) -> f64 {
    if hypothesis.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let total = (hypothesis.len() + 1).saturating_sub(n);
        let mut ref_grams: HashMap<&[T], usize> = HashMap::new();
        for g in reference.windows(n) {
            *ref_grams.entry(g).or_insert(0) += 1;
        }
        let mut hyp_grams: HashMap<&[T], usize> = HashMap::new();
        for g in hypothesis.windows(n) {
            *hyp_grams.entry(g).or_insert(0) += 1;
        }
        let matches: usize = hyp_grams
            .iter()
            .map(|(g, &c)| c.min(ref_grams.get(g).copied().unwrap_or(0)))
            .sum();
        let precision = if matches == 0 {
            1.0 / (total + 1) as f64
        } else {
            matches as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let (r, c) = (reference.len() as f64, hypothesis.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn normalize_examples() {
        let d = NormOptions::default();
        assert_eq!(
            normalize("# NVIDIA Nemotron-Parse 1.1", &d),
            ["nvidia", "nemotron-parse", "1.1"]
        );
        assert!(normalize("", &d).is_empty());
        assert_eq!(normalize("$x^2$ word", &d), ["x2", "word"]);
        assert_eq!(
            normalize(r"**Bold** and \textbf{tex} \(a_1\) 50\% ~~gone~~", &d),
            ["bold", "and", "tex", "a1", "50%", "gone"]
        );
        // NFKC folds compatibility forms
        assert_eq!(normalize("ﬁne Ｆｕｌｌ", &d), ["fine", "full"]);
        // a hashtag is not a heading
        assert_eq!(normalize("#tag", &d), ["#tag"]);
        let raw = NormOptions {
            lowercase: false,
            strip_markup: false,
            ..NormOptions::default()
        };
        assert_eq!(normalize("# Title", &raw), ["#", "Title"]);
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&toks("a b c"), &toks("a b c")), 0.0);
        assert!((wer(&toks("a b c"), &toks("a x c")) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wer::<String>(&[], &toks("a")), 1.0);
        assert_eq!(wer::<String>(&[], &[]), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(word_f1(&toks("a b"), &toks("a b")), 1.0);
        assert_eq!(word_f1(&toks("a b"), &toks("c d")), 0.0);
        assert!((word_f1(&toks("a a b"), &toks("a b b")) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(word_f1::<String>(&[], &[]), 1.0);
        assert_eq!(word_f1(&toks("a"), &[]), 0.0);
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(norm_edit_distance("same", "same"), 0.0);
        assert_eq!(norm_edit_distance("abc", ""), 1.0);
        assert_eq!(norm_edit_distance("", ""), 0.0);
        assert!((norm_edit_distance("kitten", "sitting") - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(norm_edit_distance("é", "e"), 1.0);
    }

    #[test]
    fn bleu_examples() {
        let s = toks("the cat sat on the mat");
        assert_eq!(bleu(&s, &s, 4), 1.0);
        assert_eq!(bleu(&s, &[], 4), 0.0);
        // (7/8 · 5/7 · 3/6 · 1/5)^(1/4) = 0.5, no brevity penalty
        let r = toks("the cat sat on the mat with me");
        let h = toks("the cat sat on a mat with me");
        assert!((bleu(&r, &h, 4) - 0.5).abs() < 1e-12);
        // smoothed 4-gram precision and a brevity penalty
        let r = toks("a b c d e f g h");
        let h = toks("a b x d e f");
        assert!((bleu(&r, &h, 4) - 0.3012643052392727).abs() < 1e-12);
    }
}
