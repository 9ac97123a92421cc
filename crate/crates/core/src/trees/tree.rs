use serde::{Deserialize, Serialize};

/// Binary tree stored as a flat node list; node 0 is the root.
/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn as_stump(&self) -> Option<Stump> {
        match self.nodes.as_slice() {
            [Node::Split {
                feature,
                threshold,
                left,
                right,
            }, ..] => match (&self.nodes[*left], &self.nodes[*right]) {
                (Node::Leaf { value: l }, Node::Leaf { value: r }) => Some(Stump {
                    feature: *feature,
                    threshold: *threshold,
                    left: *l,
                    right: *r,
                }),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Depth-one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    pub fn predict(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

impl From<Stump> for Tree {
    fn from(s: Stump) -> Self {
        Tree {
            nodes: vec![
                Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: s.left },
                Node::Leaf { value: s.right },
            ],
        }
    }
}

/// Column-major view of a sample matrix with per-feature presorted orders.
pub(crate) struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub sorted: Vec<Vec<usize>>,
}

impl Columns {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let cols: Vec<Vec<f64>> = (0..n_features)
            .map(|f| x.iter().map(|row| row[f]).collect())
            .collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<usize> = (0..c.len()).collect();
                idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { cols, sorted }
    }
}
