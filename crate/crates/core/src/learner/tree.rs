use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        label: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
}

pub fn gini(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let n = labels.len() as f64;
    counts(labels).iter().map(|&(_, c)| (c as f64 / n).powi(2)).fold(1.0, |g, p| g - p)
}

fn counts(labels: &[usize]) -> Vec<(usize, usize)> {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for l in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == l => *c += 1,
            _ => out.push((l, 1)),
        }
    }
    out
}

fn majority(labels: &[usize]) -> usize {
    let mut best = (usize::MAX, 0);
    for (l, c) in counts(labels) {
        if c > best.1 {
            best = (l, c);
        }
    }
    best.0
}

/// CART with Gini impurity and midpoint thresholds.
pub fn train_tree(x: &[Vec<f64>], y: &[usize], max_depth: usize, min_leaf: usize) -> TreeModel {
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..y.len()).collect();
    grow(x, y, &idx, 0, max_depth, min_leaf.max(1), &mut nodes);
    TreeModel { nodes }
}

fn grow(
    x: &[Vec<f64>],
    y: &[usize],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let labels: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
    let id = nodes.len();
    nodes.push(Node::Leaf {
        label: if labels.is_empty() { 0 } else { majority(&labels) },
    });
    let parent = gini(&labels);
    if depth >= max_depth || parent == 0.0 || idx.len() < 2 * min_leaf {
        return id;
    }
    let dims = x[idx[0]].len();
    let n = idx.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..dims {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        for cut in min_leaf..=order.len() - min_leaf {
            let (lo, hi) = (x[order[cut - 1]][f], x[order[cut]][f]);
            if lo == hi {
                continue;
            }
            let left: Vec<usize> = order[..cut].iter().map(|&i| y[i]).collect();
            let right: Vec<usize> = order[cut..].iter().map(|&i| y[i]).collect();
            let score = (left.len() as f64 * gini(&left) + right.len() as f64 * gini(&right)) / n;
            if best.is_none_or(|(s, _, _)| score < s) {
                best = Some((score, f, lo + (hi - lo) / 2.0));
            }
        }
    }
    let Some((score, feature, threshold)) = best else {
        return id;
    };
    if score >= parent - 1e-12 {
        return id;
    }
    let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
    let left = grow(x, y, &l_idx, depth + 1, max_depth, min_leaf, nodes);
    let right = grow(x, y, &r_idx, depth + 1, max_depth, min_leaf, nodes);
    nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

impl TreeModel {
    pub fn predict(&self, q: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if q[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
