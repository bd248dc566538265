use serde::{Deserialize, Serialize};

use super::split::{leaf_weight, scan_sorted, Split};

/// One node of a regression tree, stored in a flat array. Children always
/// have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by `features`. Assumes a structurally valid tree.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if features[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }

    /// Checks child links, feature indices and leaf finiteness.
    pub(crate) fn check(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut referenced = vec![false; self.nodes.len()];
        referenced[0] = true;
        for (idx, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(format!("node {idx}: non-finite leaf value"));
                }
                Node::Leaf { .. } => {}
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(format!("node {idx}: feature {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {idx}: non-finite threshold"));
                    }
                    for child in [left, right] {
                        if child <= idx || child >= self.nodes.len() || referenced[child] {
                            return Err(format!("node {idx}: bad child link {child}"));
                        }
                        referenced[child] = true;
                    }
                }
            }
        }
        if let Some(orphan) = referenced.iter().position(|r| !r) {
            return Err(format!("node {orphan} is unreachable"));
        }
        Ok(())
    }
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2: f64,
}

/// Grows one depth-limited tree on the rows present in `sorted`, where
/// `sorted[f]` lists those rows ordered by feature `f`.
pub(crate) fn grow(
    columns: &[Vec<f64>],
    gradients: &[f64],
    hessians: &[f64],
    sorted: Vec<Vec<usize>>,
    params: &TreeParams,
) -> Tree {
    let mut builder = Builder {
        columns,
        gradients,
        hessians,
        params,
        nodes: Vec::new(),
        goes_left: vec![false; gradients.len()],
    };
    builder.build(sorted, 0);
    Tree {
        nodes: builder.nodes,
    }
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    gradients: &'a [f64],
    hessians: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        let rows = &sorted[0];
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.gradients[r], h + self.hessians[r])
        });

        let split = if depth < self.params.max_depth {
            self.best_split(&sorted)
        } else {
            None
        };
        let Some((feature, split)) = split else {
            self.nodes[idx] = Node::Leaf {
                value: leaf_weight(g, h, self.params.l2),
            };
            return idx;
        };

        let column = &self.columns[feature];
        for &r in rows {
            self.goes_left[r] = column[r] <= split.threshold;
        }
        let (mut left, mut right) = (
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
        );
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) =
                list.into_iter().partition(|&r| self.goes_left[r]);
            left.push(l);
            right.push(r);
        }
        let left_idx = self.build(left, depth + 1);
        let right_idx = self.build(right, depth + 1);
        self.nodes[idx] = Node::Split {
            feature,
            threshold: split.threshold,
            left: left_idx,
            right: right_idx,
        };
        idx
    }

    fn best_split(&self, sorted: &[Vec<usize>]) -> Option<(usize, Split)> {
        let mut best: Option<(usize, Split)> = None;
        for (feature, rows) in sorted.iter().enumerate() {
            let candidate = scan_sorted(
                rows,
                &self.columns[feature],
                self.gradients,
                self.hessians,
                self.params.min_samples_leaf,
                self.params.l2,
            );
            if let Some(split) = candidate {
                if best.is_none_or(|(_, b)| split.gain > b.gain) {
                    best = Some((feature, split));
                }
            }
        }
        best
    }
}
