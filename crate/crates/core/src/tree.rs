//! Honest tree growth shared by the regression and causal forests.
//!
//! A tree draws a subsample without replacement, splits it into a split half
//! (used to choose splits) and an estimation half (used to populate leaves).
//! Splits must leave at least `max(min_node_size, ceil(gamma * parent))`
//! observations of *both* halves in each child. Leaves holding more than
//! `max_leaf_size` estimation observations are then cut at the median of a
//! randomly chosen column until the cap holds.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{FeatureSet, Features};
use crate::params::ForestParams;

/// Supplies the per-observation responses a node split is scored on.
///
/// A candidate split is scored `sum_children (sum_{i in child} r_i)^2 / n_child`,
/// so responses are expected to sum to zero over the node.
pub(crate) trait SplitRule: Sync {
    /// `None` keeps the node as a leaf.
    fn responses(&self, samples: &[u32]) -> Option<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Observations with `x[var] <= threshold` go left.
    Split { var: usize, threshold: f64, left: usize, right: usize },
    /// Estimation-half members are `leaf_members[start..start + len]`.
    Leaf { start: usize, len: usize },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    leaf_members: Vec<u32>,
    split_half: Vec<u32>,
    estimation_half: Vec<u32>,
    in_subsample: Vec<u64>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn split_half(&self) -> &[u32] {
        &self.split_half
    }

    pub fn estimation_half(&self) -> &[u32] {
        &self.estimation_half
    }

    /// Sorted union of both halves.
    pub fn subsample(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.split_half.iter().chain(&self.estimation_half).copied().collect();
        s.sort_unstable();
        s
    }

    #[inline]
    pub fn contains(&self, row: usize) -> bool {
        self.in_subsample
            .get(row / 64)
            .is_some_and(|word| word >> (row % 64) & 1 == 1)
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split { var, threshold, left, right } => {
                    at = if x[var] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    pub fn members(&self, node: usize) -> &[u32] {
        match self.nodes[node] {
            Node::Leaf { start, len } => &self.leaf_members[start..start + len],
            Node::Split { .. } => &[],
        }
    }

    #[inline]
    pub fn leaf_members_for(&self, x: &[f64]) -> &[u32] {
        self.members(self.leaf_index(x))
    }

    /// Estimation-half observations reaching each node, indexed like `nodes()`.
    pub fn estimation_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.nodes.len()];
        fn fill(tree: &Tree, at: usize, counts: &mut [usize]) -> usize {
            let c = match tree.nodes[at] {
                Node::Leaf { len, .. } => len,
                Node::Split { left, right, .. } => fill(tree, left, counts) + fill(tree, right, counts),
            };
            counts[at] = c;
            c
        }
        fill(self, 0, &mut counts);
        counts
    }
}

pub(crate) struct Grower<'a, R> {
    x: &'a Features,
    rule: &'a R,
    features: &'a FeatureSet,
    params: &'a ForestParams,
    mtry: usize,
    /// Every row, sorted by each usable column in turn.
    order: Vec<Vec<u32>>,
    /// Usable columns, copied out contiguously.
    columns: Vec<Vec<f64>>,
}

struct Builder {
    nodes: Vec<Node>,
    leaf_members: Vec<u32>,
    /// Split-rule responses of the node being split, indexed by row.
    responses: Vec<f64>,
    /// Side of the current cut, indexed by row.
    goes_left: Vec<bool>,
}

/// Observations reaching a node, listed once per usable column in that
/// column's order.
struct NodeRows {
    split: Vec<Vec<u32>>,
    est: Vec<Vec<u32>>,
}

#[derive(Clone, Copy)]
struct Candidate {
    pos: usize,
    threshold: f64,
    score: f64,
}

impl<'a, R: SplitRule> Grower<'a, R> {
    pub fn new(x: &'a Features, rule: &'a R, features: &'a FeatureSet, params: &'a ForestParams) -> Self {
        let order = features
            .indices()
            .iter()
            .map(|&var| {
                let mut rows: Vec<u32> = (0..x.n_rows() as u32).collect();
                rows.sort_by(|&a, &b| x.get(a as usize, var).total_cmp(&x.get(b as usize, var)));
                rows
            })
            .collect();
        let columns = features.indices().iter().map(|&var| x.column(var)).collect();
        let mtry = params.resolved_mtry(features.len());
        Self { x, rule, features, params, mtry, order, columns }
    }

    pub fn grow(&self, rng: &mut impl Rng) -> Tree {
        let n = self.x.n_rows();
        let take = ((self.params.subsample_fraction * n as f64).round() as usize).clamp(1, n);
        let mut subsample = rand::seq::index::sample(rng, n, take).into_vec();
        subsample.shuffle(rng);
        let n_split = if take < 2 {
            take
        } else {
            ((self.params.honesty_fraction * take as f64).round() as usize).clamp(1, take - 1)
        };
        let mut split_half: Vec<u32> = subsample[..n_split].iter().map(|&i| i as u32).collect();
        let mut estimation_half: Vec<u32> = subsample[n_split..].iter().map(|&i| i as u32).collect();
        split_half.sort_unstable();
        estimation_half.sort_unstable();

        let mut in_subsample = vec![0u64; n.div_ceil(64)];
        let mut side = vec![0u8; n];
        for &i in &split_half {
            side[i as usize] = 1;
        }
        for &i in &estimation_half {
            side[i as usize] = 2;
        }
        for &i in &subsample {
            in_subsample[i / 64] |= 1 << (i % 64);
        }
        let pick = |s: u8| -> Vec<Vec<u32>> {
            self.order.iter().map(|o| o.iter().copied().filter(|&i| side[i as usize] == s).collect()).collect()
        };
        let root = NodeRows { split: pick(1), est: pick(2) };

        let mut b = Builder {
            nodes: Vec::new(),
            leaf_members: Vec::with_capacity(estimation_half.len()),
            responses: vec![0.0; n],
            goes_left: vec![false; n],
        };
        self.grow_node(&mut b, root, rng);
        Tree {
            nodes: b.nodes,
            leaf_members: b.leaf_members,
            split_half,
            estimation_half,
            in_subsample,
        }
    }

    fn min_child(&self, parent: usize) -> usize {
        let by_fraction = (self.params.min_child_fraction * parent as f64).ceil() as usize;
        by_fraction.max(self.params.min_node_size)
    }

    #[inline]
    fn value(&self, row: u32, pos: usize) -> f64 {
        self.columns[pos][row as usize]
    }

    fn grow_node(&self, b: &mut Builder, rows: NodeRows, rng: &mut impl Rng) -> usize {
        let id = b.nodes.len();
        b.nodes.push(Node::Leaf { start: 0, len: 0 });

        let Some(c) = self.best_split(b, &rows, rng) else {
            self.finish_leaf(b, id, rows.est, rng);
            return id;
        };
        let (left_rows, right_rows) = self.partition(b, rows, c.pos, c.threshold);
        let left = self.grow_node(b, left_rows, rng);
        let right = self.grow_node(b, right_rows, rng);
        b.nodes[id] = Node::Split { var: self.features.indices()[c.pos], threshold: c.threshold, left, right };
        id
    }

    /// Emits a leaf, or cuts it at random medians while it exceeds the leaf cap.
    fn finish_leaf(&self, b: &mut Builder, id: usize, est: Vec<Vec<u32>>, rng: &mut impl Rng) {
        let count = est[0].len();
        if count > self.params.max_leaf_size {
            if let Some((pos, threshold)) = self.random_median_split(&est, rng) {
                self.mark(b, &est[0], pos, threshold);
                let (el, er) = split_lists(est, &b.goes_left);
                let left = b.nodes.len();
                b.nodes.push(Node::Leaf { start: 0, len: 0 });
                self.finish_leaf(b, left, el, rng);
                let right = b.nodes.len();
                b.nodes.push(Node::Leaf { start: 0, len: 0 });
                self.finish_leaf(b, right, er, rng);
                let var = self.features.indices()[pos];
                b.nodes[id] = Node::Split { var, threshold, left, right };
                return;
            }
        }
        let start = b.leaf_members.len();
        b.leaf_members.extend_from_slice(&est[0]);
        b.leaf_members[start..].sort_unstable();
        b.nodes[id] = Node::Leaf { start, len: count };
    }

    fn mark(&self, b: &mut Builder, rows: &[u32], pos: usize, threshold: f64) {
        let col = &self.columns[pos];
        for &i in rows {
            b.goes_left[i as usize] = col[i as usize] <= threshold;
        }
    }

    fn partition(&self, b: &mut Builder, rows: NodeRows, pos: usize, threshold: f64) -> (NodeRows, NodeRows) {
        self.mark(b, &rows.split[0], pos, threshold);
        self.mark(b, &rows.est[0], pos, threshold);
        let (sl, sr) = split_lists(rows.split, &b.goes_left);
        let (el, er) = split_lists(rows.est, &b.goes_left);
        (NodeRows { split: sl, est: el }, NodeRows { split: sr, est: er })
    }

    fn best_split(&self, b: &mut Builder, rows: &NodeRows, rng: &mut impl Rng) -> Option<Candidate> {
        let split = &rows.split[0];
        let n = split.len();
        let ne = rows.est[0].len();
        let min_split = self.min_child(n);
        let min_est = self.min_child(ne);
        if n < 2 * min_split || ne < 2 * min_est {
            return None;
        }
        let responses = self.rule.responses(split)?;
        let total: f64 = responses.iter().sum();
        let parent_score = total * total / n as f64;
        for (&i, &r) in split.iter().zip(&responses) {
            b.responses[i as usize] = r;
        }

        let mut positions = rand::seq::index::sample(rng, self.features.len(), self.mtry).into_vec();
        positions.sort_unstable();

        let mut best: Option<Candidate> = None;
        for pos in positions {
            let col = &self.columns[pos];
            let sorted = &rows.split[pos];
            if col[sorted[0] as usize] == col[sorted[n - 1] as usize] {
                continue;
            }
            let est = &rows.est[pos];
            let mut left_sum: f64 = sorted[..min_split - 1].iter().map(|&i| b.responses[i as usize]).sum();
            let mut est_left = 0;
            // Cut between sorted[k - 1] and sorted[k], leaving k rows on the left.
            for k in min_split..=n - min_split {
                left_sum += b.responses[sorted[k - 1] as usize];
                let lo = col[sorted[k - 1] as usize];
                let hi = col[sorted[k] as usize];
                if lo == hi {
                    continue;
                }
                let threshold = midpoint(lo, hi);
                while est_left < ne && col[est[est_left] as usize] <= threshold {
                    est_left += 1;
                }
                if est_left < min_est {
                    continue;
                }
                if ne - est_left < min_est {
                    break;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                if score > best.map_or(parent_score, |b| b.score) {
                    best = Some(Candidate { pos, threshold, score });
                }
            }
        }
        best
    }

    fn random_median_split(&self, est: &[Vec<u32>], rng: &mut impl Rng) -> Option<(usize, f64)> {
        let c = est[0].len();
        let min_est = self.min_child(c);
        if c < 2 * min_est {
            return None;
        }
        let mut positions: Vec<usize> = (0..self.features.len()).collect();
        positions.shuffle(rng);
        let half = c / 2;
        for pos in positions {
            let xs = &est[pos];
            let best_k = (min_est..=c - min_est)
                .filter(|&k| self.value(xs[k - 1], pos) < self.value(xs[k], pos))
                .min_by_key(|&k| k.abs_diff(half));
            if let Some(k) = best_k {
                return Some((pos, midpoint(self.value(xs[k - 1], pos), self.value(xs[k], pos))));
            }
        }
        None
    }
}

/// Stable partition of every list by the same row predicate.
fn split_lists(lists: Vec<Vec<u32>>, goes_left: &[bool]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let n_left = lists[0].iter().filter(|&&i| goes_left[i as usize]).count();
    let mut left = Vec::with_capacity(lists.len());
    let mut right = Vec::with_capacity(lists.len());
    for list in lists {
        let mut l = Vec::with_capacity(n_left);
        let mut r = Vec::with_capacity(list.len() - n_left);
        for i in list {
            if goes_left[i as usize] {
                l.push(i);
            } else {
                r.push(i);
            }
        }
        left.push(l);
        right.push(r);
    }
    (left, right)
}

/// Midpoint of `lo < hi` that still sends `hi` to the right child.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}
