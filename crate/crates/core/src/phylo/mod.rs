//! Dated phylogenies: Newick ingestion and slicing into whole days.
//!
//! Slice `n` (counted back from `present`) covers the time interval
//! `(present - (n+1)·d, present - n·d]`, so an event falling exactly on a
//! boundary is assigned to the slice whose most recent edge it sits on.
//! Within a slice, `a[n]` counts every lineage alive at the recent edge plus
//! every leaf sampled inside the slice; `c[n]` counts internal nodes.

mod newick;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use newick::{parse_newick, to_newick};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyloError {
    #[error("newick parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported topology at offset {offset}: node has {children} children, expected 2")]
    UnsupportedTopology { offset: usize, children: usize },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("present ({present}) is earlier than the latest node time ({latest})")]
    PresentBeforeTips { present: f64, latest: f64 },
    #[error("day length must be positive, got {0}")]
    InvalidDayLength(f64),
    #[error("leaf '{0}' has no entry in the tip-date table")]
    MissingTipDate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: Option<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Calendar time; increases towards the present.
    pub time: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Binary tree with absolute node times. An empty tree has no root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedTree {
    pub nodes: Vec<TreeNode>,
    pub root: Option<usize>,
}

impl DatedTree {
    pub fn empty() -> Self {
        DatedTree {
            nodes: Vec::new(),
            root: None,
        }
    }

    /// Build and validate a tree from explicit node records.
    pub fn from_nodes(nodes: Vec<TreeNode>, root: Option<usize>) -> Result<Self, PhyloError> {
        let tree = DatedTree { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&v| self.nodes[v].is_leaf())
    }

    pub fn internal(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.nodes[v].is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn latest_time(&self) -> Option<f64> {
        self.nodes.iter().map(|n| n.time).reduce(f64::max)
    }

    /// Check the structural invariants: a single root, binary internal
    /// nodes, consistent parent links and non-decreasing times from root
    /// to leaves.
    pub fn validate(&self) -> Result<(), PhyloError> {
        let invalid = |m: String| Err(PhyloError::InvalidTree(m));
        let Some(root) = self.root else {
            return if self.nodes.is_empty() {
                Ok(())
            } else {
                invalid("nodes present but no root".into())
            };
        };
        if root >= self.nodes.len() || self.nodes[root].parent.is_some() {
            return invalid("root index invalid or root has a parent".into());
        }
        let mut n_leaves = 0;
        let mut n_internal = 0;
        for (v, node) in self.nodes.iter().enumerate() {
            if v != root && node.parent.is_none() {
                return invalid(format!("node {v} has no parent but is not the root"));
            }
            if !node.time.is_finite() {
                return invalid(format!("node {v} has a non-finite time"));
            }
            match node.children.len() {
                0 => n_leaves += 1,
                2 => n_internal += 1,
                k => return invalid(format!("node {v} has {k} children")),
            }
            for &ch in &node.children {
                if ch >= self.nodes.len() || self.nodes[ch].parent != Some(v) {
                    return invalid(format!("inconsistent parent link {v} -> {ch}"));
                }
                if self.nodes[ch].time < node.time {
                    return invalid(format!("child {ch} is older than its parent {v}"));
                }
            }
        }
        if n_leaves != n_internal + 1 {
            return invalid(format!("{n_leaves} leaves but {n_internal} internal nodes"));
        }
        // Every node reachable from the root.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                return invalid("cycle detected".into());
            }
            stack.extend(&self.nodes[v].children);
        }
        if seen.iter().any(|s| !s) {
            return invalid("disconnected nodes".into());
        }
        Ok(())
    }

    /// Re-date the tree from a table of leaf sampling times. Relative node
    /// depths come from the branch lengths; the absolute placement is the
    /// mean offset implied by the leaf dates, and leaves take their exact
    /// tabulated dates.
    pub fn with_tip_dates(&self, dates: &HashMap<String, f64>) -> Result<DatedTree, PhyloError> {
        let Some(root) = self.root else {
            return Ok(self.clone());
        };
        let base = self.nodes[root].time;
        let mut offset_sum = 0.0;
        let mut count = 0usize;
        for v in self.leaves() {
            let label = self.nodes[v].label.clone().unwrap_or_default();
            let date = *dates
                .get(&label)
                .ok_or_else(|| PhyloError::MissingTipDate(label.clone()))?;
            offset_sum += date - (self.nodes[v].time - base);
            count += 1;
        }
        let offset = offset_sum / count as f64;
        let mut out = self.clone();
        for node in out.nodes.iter_mut() {
            node.time = if node.is_leaf() {
                dates[node.label.as_deref().unwrap_or_default()]
            } else {
                node.time - base + offset
            };
        }
        out.validate()?;
        Ok(out)
    }
}

/// Per-slice lineage and coalescence counts, day 0 = most recent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSlices {
    pub a: Vec<u64>,
    pub c: Vec<u64>,
}

impl TreeSlices {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Slice index of an event at `time`, with boundary hits snapped so that
/// round-off cannot push an event across a boundary.
fn slice_index(time: f64, present: f64, day_length: f64) -> usize {
    let u = (present - time) / day_length;
    let nearest = u.round();
    let u = if (u - nearest).abs() < 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        u
    };
    u.floor().max(0.0) as usize
}

/// Slice a dated tree into days counted back from `present`.
pub fn discretize(
    tree: &DatedTree,
    day_length: f64,
    present: f64,
) -> Result<TreeSlices, PhyloError> {
    if !(day_length > 0.0) {
        return Err(PhyloError::InvalidDayLength(day_length));
    }
    let Some(root) = tree.root else {
        return Ok(TreeSlices::default());
    };
    let latest = tree.latest_time().unwrap_or(present);
    if latest > present + 1e-9 * present.abs().max(1.0) {
        return Err(PhyloError::PresentBeforeTips { present, latest });
    }
    let n_slices = slice_index(tree.nodes[root].time, present, day_length) + 1;
    let mut leaves = vec![0u64; n_slices];
    let mut coalescences = vec![0u64; n_slices];
    for node in &tree.nodes {
        let s = slice_index(node.time, present, day_length);
        if node.is_leaf() {
            leaves[s] += 1;
        } else {
            coalescences[s] += 1;
        }
    }
    let mut a = Vec::with_capacity(n_slices);
    let mut carried = 0u64;
    for s in 0..n_slices {
        let here = carried + leaves[s];
        a.push(here);
        carried = here - coalescences[s];
    }
    Ok(TreeSlices { a, c: coalescences })
}

/// Per-epidemic-day genetic data; index `n - 1` holds day `n`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyLineages {
    pub a: Vec<u64>,
    pub c: Vec<u64>,
}

impl DailyLineages {
    pub fn empty(n_days: usize) -> Self {
        DailyLineages {
            a: vec![0; n_days],
            c: vec![0; n_days],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn has_data(&self) -> bool {
        self.a.iter().any(|&a| a > 0)
    }
}

/// Result of mapping slices onto epidemic days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub lineages: DailyLineages,
    /// Slices older than day 1 that were discarded.
    pub dropped_slices: usize,
    /// Coalescences contained in the discarded slices.
    pub dropped_coalescences: u64,
}

/// Epidemic day `n` (1-based) receives slice `n_days - n`; older slices are
/// truncated and counted, days without tree coverage get `(0, 0)`.
pub fn align_to_epidemic(slices: &TreeSlices, n_days: usize) -> Alignment {
    let mut lineages = DailyLineages::empty(n_days);
    for n in 1..=n_days {
        let s = n_days - n;
        if s < slices.len() {
            lineages.a[n - 1] = slices.a[s];
            lineages.c[n - 1] = slices.c[s];
        }
    }
    let dropped_slices = slices.len().saturating_sub(n_days);
    let dropped_coalescences = slices.c.iter().skip(n_days).sum();
    Alignment {
        lineages,
        dropped_slices,
        dropped_coalescences,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ten-leaf tree whose day slices reproduce the worked example table.
    pub(crate) const FIGURE_TREE: &str = "(((L5:2.2,L6:2.2):1.3,(L7:2.4,L8:1.4):1.1):2.8,\
        ((L9:0.6,L10:0.6):2.7,((L1:1.5,L2:1.5):3.8,(L3:2.3,L4:2.3):1.8):2.2):1.0);";

    #[test]
    fn figure_table() {
        let tree = parse_newick(FIGURE_TREE, 100.0).unwrap();
        let s = discretize(&tree, 1.0, 100.0).unwrap();
        assert_eq!(s.a, vec![2, 4, 6, 7, 8, 5, 3, 3, 2]);
        assert_eq!(s.c, vec![0, 1, 0, 1, 3, 2, 0, 1, 1]);
    }

    #[test]
    fn single_leaf_and_cherry() {
        let tree = parse_newick("A;", 3.0).unwrap();
        let s = discretize(&tree, 1.0, 3.0).unwrap();
        assert_eq!((s.a, s.c), (vec![1], vec![0]));

        let tree = parse_newick("(A:1.5,B:1.5);", 0.0).unwrap();
        let s = discretize(&tree, 1.0, 0.0).unwrap();
        assert_eq!((s.a, s.c), (vec![2, 2], vec![0, 1]));
    }

    #[test]
    fn boundary_event_goes_to_slice_with_that_recent_edge() {
        // Coalescence exactly one day before the present.
        let tree = parse_newick("(A:1,B:1);", 5.0).unwrap();
        let s = discretize(&tree, 1.0, 5.0).unwrap();
        assert_eq!((s.a, s.c), (vec![2, 2], vec![0, 1]));
    }

    #[test]
    fn present_before_tips_rejected() {
        let tree = parse_newick("(A:1,B:1);", 5.0).unwrap();
        assert!(matches!(
            discretize(&tree, 1.0, 4.0),
            Err(PhyloError::PresentBeforeTips { .. })
        ));
    }

    #[test]
    fn alignment_rules() {
        let tree = parse_newick(FIGURE_TREE, 0.0).unwrap();
        let s = discretize(&tree, 1.0, 0.0).unwrap();
        let al = align_to_epidemic(&s, 9);
        assert_eq!((al.lineages.a[8], al.lineages.c[8]), (2, 0));
        assert_eq!((al.lineages.a[0], al.lineages.c[0]), (2, 1));
        assert_eq!(al.dropped_slices, 0);

        let al = align_to_epidemic(&s, 12);
        assert_eq!(&al.lineages.a[..3], &[0, 0, 0]);
        assert_eq!(al.lineages.a[3], 2);

        let al = align_to_epidemic(&s, 6);
        assert_eq!(al.dropped_slices, 3);
        assert_eq!(al.dropped_coalescences, 2);
        assert_eq!(al.lineages.a[0], 5);
    }

    #[test]
    fn tip_dates_override() {
        let tree = parse_newick("((A:1,B:2):1,C:1);", 0.0).unwrap();
        let dates: HashMap<String, f64> =
            [("A".to_string(), 2020.0), ("B".to_string(), 2021.0), ("C".to_string(), 2019.5)]
                .into_iter()
                .collect();
        let dated = tree.with_tip_dates(&dates).unwrap();
        let a = dated.leaves().find(|&v| dated.nodes[v].label.as_deref() == Some("A")).unwrap();
        assert_eq!(dated.nodes[a].time, 2020.0);
        assert!(dated.validate().is_ok());
        let mut missing = dates.clone();
        missing.remove("C");
        assert!(matches!(tree.with_tip_dates(&missing), Err(PhyloError::MissingTipDate(_))));
    }
}
