//! CART classification tree with Gini impurity.
//!
//! Every feature and every midpoint between consecutive distinct values is
//! scanned. Split quality is compared exactly in integer arithmetic, and
//! among equally good splits the lowest feature index and then the lowest
//! threshold win, so the fitted tree does not depend on row order.

use crate::matrix::Matrix;

use super::CompactLabels;

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        class: usize,
    },
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

/// Split score `sum cL^2 / nL + sum cR^2 / nR` as an exact fraction
/// `num / den`; larger is purer.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(sq_left: u64, n_left: u64, sq_right: u64, n_right: u64) -> Self {
        Score {
            num: sq_left as u128 * n_right as u128 + sq_right as u128 * n_left as u128,
            den: n_left as u128 * n_right as u128,
        }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    c: usize,
    max_depth: usize,
    min_node: usize,
    nodes: Vec<Node>,
    sorted: Vec<(f64, usize)>,
}

fn majority(counts: &[u64]) -> usize {
    let mut best = 0;
    for (k, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = k;
        }
    }
    best
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = vec![0u64; self.c];
        for &i in &rows {
            counts[self.y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&n| n > 0).count() <= 1;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(&counts) });
        if pure || depth >= self.max_depth || rows.len() < self.min_node {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, &counts) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], counts: &[u64]) -> Option<(usize, f64)> {
        let n = rows.len() as u64;
        let total_sq: u64 = counts.iter().map(|c| c * c).sum();
        let mut best: Option<(Score, usize, f64)> = None;
        let mut left = vec![0u64; self.c];
        for f in 0..self.x.cols() {
            self.sorted.clear();
            self.sorted.extend(rows.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            self.sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|v| *v = 0);
            let (mut sq_left, mut sq_right) = (0u64, total_sq);
            for pos in 0..self.sorted.len() - 1 {
                let (v, k) = self.sorted[pos];
                let right_k = counts[k] - left[k];
                sq_left += 2 * left[k] + 1;
                sq_right -= 2 * right_k - 1;
                left[k] += 1;
                let next = self.sorted[pos + 1].0;
                if next <= v {
                    continue;
                }
                let n_left = pos as u64 + 1;
                let score = Score::new(sq_left, n_left, sq_right, n - n_left);
                if best.as_ref().is_none_or(|(b, _, _)| score.beats(b)) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

impl TreeModel {
    pub(crate) fn fit(features: &Matrix, labels: &CompactLabels, max_depth: usize, min_node: usize) -> Self {
        let mut b = Builder {
            x: features,
            y: &labels.labels,
            c: labels.n_classes(),
            max_depth,
            min_node,
            nodes: Vec::new(),
            sorted: Vec::with_capacity(features.rows()),
        };
        b.grow((0..features.rows()).collect(), 0);
        TreeModel { nodes: b.nodes }
    }

    /// Nodes in creation order; index 0 is the root.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn classify(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub(crate) fn predict(&self, features: &Matrix) -> Vec<usize> {
        features.iter_rows().map(|x| self.classify(x)).collect()
    }
}
