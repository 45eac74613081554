use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::clustering::squared_euclidean;
use crate::error::{CdfError, Result};

/// Clustering feature: count, linear sum and sum of squared norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringFeature {
    pub n: f64,
    pub ls: Vec<f64>,
    pub ss: f64,
}

impl ClusteringFeature {
    pub fn from_point(x: &[f64]) -> Self {
        Self {
            n: 1.0,
            ls: x.to_vec(),
            ss: x.iter().map(|v| v * v).sum(),
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            n: 0.0,
            ls: vec![0.0; dim],
            ss: 0.0,
        }
    }

    pub fn add(&mut self, other: &ClusteringFeature) {
        self.n += other.n;
        for (a, b) in self.ls.iter_mut().zip(&other.ls) {
            *a += b;
        }
        self.ss += other.ss;
    }

    pub fn merged(&self, other: &ClusteringFeature) -> ClusteringFeature {
        let mut out = self.clone();
        out.add(other);
        out
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    /// Root-mean-square distance of the members to their centroid.
    pub fn radius(&self) -> f64 {
        let c2: f64 = self.ls.iter().map(|v| (v / self.n).powi(2)).sum();
        (self.ss / self.n - c2).max(0.0).sqrt()
    }

    fn centroid_distance(&self, x: &[f64]) -> f64 {
        self.ls
            .iter()
            .zip(x)
            .map(|(l, xi)| (l / self.n - xi).powi(2))
            .sum()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<ClusteringFeature>),
    Internal(Vec<(ClusteringFeature, Node)>),
}

impl Node {
    #[cfg(test)]
    fn len(&self) -> usize {
        match self {
            Node::Leaf(e) => e.len(),
            Node::Internal(c) => c.len(),
        }
    }

    fn summary(&self, dim: usize) -> ClusteringFeature {
        let mut cf = ClusteringFeature::empty(dim);
        match self {
            Node::Leaf(entries) => entries.iter().for_each(|e| cf.add(e)),
            Node::Internal(children) => children.iter().for_each(|(c, _)| cf.add(c)),
        }
        cf
    }
}

fn closest<'a>(cfs: impl Iterator<Item = &'a ClusteringFeature>, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, cf) in cfs.enumerate() {
        let d = cf.centroid_distance(x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Splits items around the two entries whose centroids are farthest apart.
fn split<T>(items: Vec<T>, cf: impl Fn(&T) -> &ClusteringFeature) -> (Vec<T>, Vec<T>) {
    let centroids: Vec<Vec<f64>> = items.iter().map(|t| cf(t).centroid()).collect();
    let mut seeds = (0, 1, -1.0);
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            let d = squared_euclidean(&centroids[i], &centroids[j]);
            if d > seeds.2 {
                seeds = (i, j, d);
            }
        }
    }
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, item) in items.into_iter().enumerate() {
        let dl = squared_euclidean(&centroids[i], &centroids[seeds.0]);
        let dr = squared_euclidean(&centroids[i], &centroids[seeds.1]);
        if i == seeds.0 || (i != seeds.1 && dl <= dr) {
            left.push(item);
        } else {
            right.push(item);
        }
    }
    (left, right)
}

/// Height-balanced CF tree.
#[derive(Debug, Clone)]
pub struct CfTree {
    threshold: f64,
    branching: usize,
    dim: usize,
    root: Node,
}

impl CfTree {
    pub fn new(dim: usize, threshold: f64, branching: usize) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(CdfError::InvalidConfig(
                "BIRCH threshold must be positive".into(),
            ));
        }
        if branching < 2 {
            return Err(CdfError::InvalidConfig(
                "BIRCH branching factor must be at least 2".into(),
            ));
        }
        Ok(Self {
            threshold,
            branching,
            dim,
            root: Node::Leaf(Vec::new()),
        })
    }

    pub fn insert(&mut self, x: &[f64]) {
        let point = ClusteringFeature::from_point(x);
        let root = std::mem::replace(&mut self.root, Node::Leaf(Vec::new()));
        let (node, overflow) = insert_node(root, &point, self.threshold, self.branching, self.dim);
        self.root = match overflow {
            Some(sibling) => Node::Internal(vec![
                (node.summary(self.dim), node),
                (sibling.summary(self.dim), sibling),
            ]),
            None => node,
        };
    }

    /// Leaf subclusters in tree order.
    pub fn leaf_entries(&self) -> Vec<ClusteringFeature> {
        fn walk(node: &Node, out: &mut Vec<ClusteringFeature>) {
            match node {
                Node::Leaf(entries) => out.extend(entries.iter().cloned()),
                Node::Internal(children) => children.iter().for_each(|(_, c)| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

/// Inserts into `node`, returning the node and a split-off sibling on overflow.
fn insert_node(
    node: Node,
    point: &ClusteringFeature,
    threshold: f64,
    branching: usize,
    dim: usize,
) -> (Node, Option<Node>) {
    match node {
        Node::Leaf(mut entries) => {
            if !entries.is_empty() {
                let i = closest(entries.iter(), &point.ls);
                if entries[i].merged(point).radius() <= threshold {
                    entries[i].add(point);
                    return (Node::Leaf(entries), None);
                }
            }
            entries.push(point.clone());
            if entries.len() > branching {
                let (l, r) = split(entries, |e| e);
                (Node::Leaf(l), Some(Node::Leaf(r)))
            } else {
                (Node::Leaf(entries), None)
            }
        }
        Node::Internal(mut children) => {
            let i = closest(children.iter().map(|(cf, _)| cf), &point.ls);
            let child = std::mem::replace(&mut children[i].1, Node::Leaf(Vec::new()));
            let (child, sibling) = insert_node(child, point, threshold, branching, dim);
            children[i] = (child.summary(dim), child);
            if let Some(s) = sibling {
                children.insert(i + 1, (s.summary(dim), s));
            }
            if children.len() > branching {
                let (l, r) = split(children, |(cf, _)| cf);
                (Node::Internal(l), Some(Node::Internal(r)))
            } else {
                (Node::Internal(children), None)
            }
        }
    }
}

/// Builds the tree in one pass over the rows.
pub fn build_tree(data: &ArrayView2<'_, f64>, threshold: f64, branching: usize) -> Result<CfTree> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CdfError::InvalidData(
            "BIRCH input contains non-finite values".into(),
        ));
    }
    let mut tree = CfTree::new(data.ncols(), threshold, branching)?;
    for row in data.rows() {
        tree.insert(&row.to_vec());
    }
    Ok(tree)
}

/// Leaf centroids with their counts as weights.
pub fn leaf_centroids(tree: &CfTree) -> (Array2<f64>, Vec<f64>) {
    let entries = tree.leaf_entries();
    let dim = tree.dim;
    let mut centroids = Array2::zeros((entries.len(), dim));
    for (mut row, e) in centroids.rows_mut().into_iter().zip(&entries) {
        row.assign(&ndarray::Array1::from(e.centroid()));
    }
    (centroids, entries.iter().map(|e| e.n).collect())
}

impl Node {
    #[cfg(test)]
    fn depths(&self, depth: usize, out: &mut Vec<usize>) {
        match self {
            Node::Leaf(_) => out.push(depth),
            Node::Internal(children) => children.iter().for_each(|(_, c)| c.depths(depth + 1, out)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_radius(points: &[Vec<f64>]) -> f64 {
        let n = points.len() as f64;
        let dim = points[0].len();
        let c: Vec<f64> = (0..dim)
            .map(|i| points.iter().map(|p| p[i]).sum::<f64>() / n)
            .collect();
        (points.iter().map(|p| squared_euclidean(p, &c)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn large_threshold_gives_one_entry() {
        let data = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let tree = build_tree(&data.view(), 10.0, 50).unwrap();
        let entries = tree.leaf_entries();
        assert_eq!(entries.len(), 1);
        let pts: Vec<Vec<f64>> = data.rows().into_iter().map(|r| r.to_vec()).collect();
        assert!((entries[0].radius() - brute_radius(&pts)).abs() < 1e-9);
    }

    #[test]
    fn cf_is_additive() {
        let a = [vec![1.0, 2.0], vec![3.0, -1.0]];
        let b = [vec![0.5, 0.5], vec![-2.0, 4.0], vec![1.0, 1.0]];
        let cf = |ps: &[Vec<f64>]| {
            let mut c = ClusteringFeature::empty(2);
            ps.iter()
                .for_each(|p| c.add(&ClusteringFeature::from_point(p)));
            c
        };
        let all: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        assert_eq!(cf(&a).merged(&cf(&b)), cf(&all));
        assert!((cf(&all).radius() - brute_radius(&all)).abs() < 1e-9);
    }

    #[test]
    fn tight_groups_become_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 3];
        let mut rows = Vec::new();
        for i in 0..60 {
            let g = i % 3;
            let p = vec![
                centers[g][0] + rng.random_range(-0.1..0.1),
                centers[g][1] + rng.random_range(-0.1..0.1),
            ];
            groups[g].push(p.clone());
            rows.extend(p);
        }
        let data = Array2::from_shape_vec((60, 2), rows).unwrap();
        let tree = build_tree(&data.view(), 0.5, 4).unwrap();
        let entries = tree.leaf_entries();
        assert_eq!(entries.len(), 3);
        for e in &entries {
            let c = e.centroid();
            let g = groups
                .iter()
                .position(|g| (g[0][0] - c[0]).abs() < 1.0 && (g[0][1] - c[1]).abs() < 1.0)
                .unwrap();
            assert!((e.radius() - brute_radius(&groups[g])).abs() < 1e-9);
            assert_eq!(e.n as usize, groups[g].len());
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(CfTree::new(2, 0.0, 50).is_err());
        assert!(CfTree::new(2, 0.5, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn radii_bounded_counts_conserved_tree_balanced(seed in any::<u64>(), threshold in 0.05f64..1.0, branching in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = Array2::from_shape_fn((150, 3), |_| rng.random_range(-2.0..2.0));
            let tree = build_tree(&data.view(), threshold, branching).unwrap();
            let entries = tree.leaf_entries();
            prop_assert!(entries.iter().all(|e| e.radius() <= threshold + 1e-12));
            let total: f64 = entries.iter().map(|e| e.n).sum();
            prop_assert_eq!(total, 150.0);
            let mut depths = Vec::new();
            tree.root.depths(0, &mut depths);
            prop_assert!(depths.iter().all(|d| *d == depths[0]));
            prop_assert!(tree.root.len() <= branching);
        }
    }
}
