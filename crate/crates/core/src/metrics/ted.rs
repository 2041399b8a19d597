//! Zhang–Shasha ordered tree edit distance.

/// A rooted, ordered, labeled tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode<L> {
    pub label: L,
    pub children: Vec<TreeNode<L>>,
}

impl<L> TreeNode<L> {
    pub fn leaf(label: L) -> Self {
        TreeNode {
            label,
            children: Vec::new(),
        }
    }

    pub fn new(label: L, children: Vec<TreeNode<L>>) -> Self {
        TreeNode { label, children }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeNode::size).sum::<usize>()
    }
}

/// Edit operation costs.
pub trait EditCosts<L> {
    fn insert(&self, _label: &L) -> f64 {
        1.0
    }
    fn delete(&self, _label: &L) -> f64 {
        1.0
    }
    fn rename(&self, from: &L, to: &L) -> f64;
}

/// Unit insert/delete, rename 0 on equal labels and 1 otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitCosts;

impl<L: PartialEq> EditCosts<L> for UnitCosts {
    fn rename(&self, from: &L, to: &L) -> f64 {
        if from == to {
            0.0
        } else {
            1.0
        }
    }
}

/// Postorder flattening: labels and leftmost-leaf descendants, 1-based.
struct Flat<'a, L> {
    labels: Vec<&'a L>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a, L> Flat<'a, L> {
    fn new(root: &'a TreeNode<L>) -> Self {
        let mut flat = Flat {
            labels: vec![&root.label],
            leftmost: vec![0],
            keyroots: Vec::new(),
        };
        flat.visit(root);
        // A keyroot is the highest node for each distinct leftmost leaf.
        let n = flat.labels.len() - 1;
        let mut seen = vec![false; n + 1];
        for i in (1..=n).rev() {
            let l = flat.leftmost[i];
            if !seen[l] {
                seen[l] = true;
                flat.keyroots.push(i);
            }
        }
        flat.keyroots.sort_unstable();
        flat
    }

    fn visit(&mut self, node: &'a TreeNode<L>) -> usize {
        let mut first_leaf = None;
        for child in &node.children {
            let c = self.visit(child);
            first_leaf.get_or_insert(self.leftmost[c]);
        }
        self.labels.push(&node.label);
        let me = self.labels.len() - 1;
        self.leftmost.push(first_leaf.unwrap_or(me));
        me
    }

    fn len(&self) -> usize {
        self.labels.len() - 1
    }
}

fn total<L>(node: &TreeNode<L>, cost: &dyn Fn(&L) -> f64) -> f64 {
    cost(&node.label) + node.children.iter().map(|c| total(c, cost)).sum::<f64>()
}

/// Minimal edit-script cost between two trees; `None` is the empty tree.
pub fn tree_edit_distance<L, C: EditCosts<L>>(
    a: Option<&TreeNode<L>>,
    b: Option<&TreeNode<L>>,
    costs: &C,
) -> f64 {
    let (a, b) = match (a, b) {
        (None, None) => return 0.0,
        (Some(a), None) => return total(a, &|l| costs.delete(l)),
        (None, Some(b)) => return total(b, &|l| costs.insert(l)),
        (Some(a), Some(b)) => (Flat::new(a), Flat::new(b)),
    };
    let (n, m) = (a.len(), b.len());
    let mut tree = vec![vec![0.0f64; m + 1]; n + 1];
    let mut forest = vec![vec![0.0f64; m + 1]; n + 1];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            // forest[x][y] holds the distance between forests a[li..=x] and b[lj..=y];
            // index li-1 / lj-1 stands for the empty forest.
            forest[li - 1][lj - 1] = 0.0;
            for x in li..=i {
                forest[x][lj - 1] = forest[x - 1][lj - 1] + costs.delete(a.labels[x]);
            }
            for y in lj..=j {
                forest[li - 1][y] = forest[li - 1][y - 1] + costs.insert(b.labels[y]);
            }
            for x in li..=i {
                for y in lj..=j {
                    let del = forest[x - 1][y] + costs.delete(a.labels[x]);
                    let ins = forest[x][y - 1] + costs.insert(b.labels[y]);
                    if a.leftmost[x] == li && b.leftmost[y] == lj {
                        let ren = forest[x - 1][y - 1] + costs.rename(a.labels[x], b.labels[y]);
                        forest[x][y] = del.min(ins).min(ren);
                        tree[x][y] = forest[x][y];
                    } else {
                        let sub = forest[a.leftmost[x] - 1][b.leftmost[y] - 1] + tree[x][y];
                        forest[x][y] = del.min(ins).min(sub);
                    }
                }
            }
        }
    }
    tree[n][m]
}
