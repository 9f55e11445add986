//! Exact KD-tree over descriptor points, radius membership and greedy thinning.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::format::{read_matrix, write_atomic, write_matrix};
use crate::scalar::{sq_dist, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Median-split tree with cycling axes. The structure is never serialized;
/// it is rebuilt deterministically from the points.
#[derive(Clone, Debug)]
pub struct KdTree<T> {
    dim: usize,
    ids: Vec<String>,
    points: Vec<T>,
    nodes: Vec<Node>,
    root: usize,
}

/// Ascending distance, then ascending id.
fn closer(a: (f64, &str), b: (f64, &str)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

impl<T: Scalar> KdTree<T> {
    pub fn build(points: Vec<(String, Vec<T>)>) -> Result<Self> {
        let Some(dim) = points.first().map(|(_, v)| v.len()) else {
            return Err(Error::InvalidConfig("kd-tree needs at least one point".into()));
        };
        if dim == 0 {
            return Err(Error::InvalidConfig("kd-tree points need at least one coordinate".into()));
        }
        let mut ids = Vec::with_capacity(points.len());
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (id, v) in points {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidConfig(format!("point {id} has a non-finite coordinate")));
            }
            ids.push(id);
            flat.extend(v);
        }
        let mut tree = Self {
            dim,
            ids,
            points: flat,
            nodes: Vec::new(),
            root: 0,
        };
        let mut order: Vec<usize> = (0..tree.ids.len()).collect();
        tree.root = tree.build_node(&mut order, 0).expect("nonempty");
        Ok(tree)
    }

    fn build_node(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % self.dim;
        idx.sort_by(|&a, &b| {
            self.coord(a, axis)
                .partial_cmp(&self.coord(b, axis))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let left = self.build_node(lo, depth + 1);
        let right = self.build_node(&mut rest[1..], depth + 1);
        self.nodes.push(Node {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    fn coord(&self, i: usize, axis: usize) -> T {
        self.points[i * self.dim + axis]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Depth of the deepest leaf (a single point has depth 1).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: Option<usize>) -> usize {
            n.map_or(0, |i| 1 + walk(nodes, nodes[i].left).max(walk(nodes, nodes[i].right)))
        }
        walk(&self.nodes, Some(self.root))
    }

    fn check_dim(&self, q: &[T]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Exact nearest point as `(index, squared distance)`.
    fn nearest_index(&self, q: &[T]) -> (usize, T) {
        let mut best = (usize::MAX, T::infinity());
        self.search(Some(self.root), q, &mut best);
        best
    }

    fn search(&self, node: Option<usize>, q: &[T], best: &mut (usize, T)) {
        let Some(n) = node else { return };
        let Node {
            point,
            axis,
            left,
            right,
        } = self.nodes[n];
        let d = sq_dist(q, self.point(point));
        if best.0 == usize::MAX
            || closer((d.as_f64(), &self.ids[point]), (best.1.as_f64(), &self.ids[best.0])) == Ordering::Less
        {
            *best = (point, d);
        }
        let diff = q[axis] - self.coord(point, axis);
        let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
        self.search(near, q, best);
        // equal bound may still hold a tie with a smaller id
        if diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }

    /// Nearest stored point: `(id, euclidean distance)`, ties by ascending id.
    pub fn nearest(&self, q: &[T]) -> Result<(&str, T)> {
        self.check_dim(q)?;
        let (i, d) = self.nearest_index(q);
        Ok((&self.ids[i], d.sqrt()))
    }

    /// True iff the nearest stored point lies within `radius`.
    pub fn contains(&self, q: &[T], radius: T) -> Result<bool> {
        if !(radius >= T::zero()) {
            return Err(Error::InvalidConfig("radius must be non-negative".into()));
        }
        Ok(self.nearest(q)?.1 <= radius)
    }

    fn ids_path(matrix_path: &Path) -> PathBuf {
        let mut name = matrix_path.file_name().unwrap_or_default().to_os_string();
        name.push(".ids.json");
        matrix_path.with_file_name(name)
    }
}

impl KdTree<f32> {
    /// Writes the point matrix to `path` (`MCEB`) and the ids beside it as `<path>.ids.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let m = Tensor::from_vec(&[self.len(), self.dim], self.points.clone())?;
        write_matrix(path, &m)?;
        let ids = serde_json::to_vec(&self.ids).map_err(|e| Error::SchemaError(e.to_string()))?;
        write_atomic(&Self::ids_path(path), &ids)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m = read_matrix(path)?;
        let ids_path = Self::ids_path(path);
        let bytes = fs::read(&ids_path).map_err(|e| Error::io(ids_path.display().to_string(), e))?;
        let ids: Vec<String> =
            serde_json::from_slice(&bytes).map_err(|e| Error::SchemaError(e.to_string()))?;
        if ids.len() != m.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} points",
                ids.len(),
                m.rows()
            )));
        }
        Self::build(ids.into_iter().enumerate().map(|(i, id)| (id, m.row(i).to_vec())).collect())
    }
}

/// Greedy in-order thinning: a point is kept iff it is farther than `radius`
/// from every point kept before it. Returns kept indices in input order.
pub fn thin<T: Scalar>(points: &[Vec<T>], radius: T) -> Result<Vec<usize>> {
    if !(radius >= T::zero()) {
        return Err(Error::InvalidConfig("radius must be non-negative".into()));
    }
    let r2 = radius * radius;
    let mut kept: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if let Some(&first) = kept.first() {
            if p.len() != points[first].len() {
                return Err(Error::DimensionMismatch {
                    expected: points[first].len(),
                    got: p.len(),
                });
            }
        }
        if kept.iter().all(|&k| sq_dist(p, &points[k]) > r2) {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn named(points: &[Vec<f64>]) -> Vec<(String, Vec<f64>)> {
        points.iter().enumerate().map(|(i, p)| (format!("p{i:04}"), p.clone())).collect()
    }

    fn scan<'a>(points: &'a [(String, Vec<f64>)], q: &[f64]) -> (&'a str, f64) {
        let (id, d) = points
            .iter()
            .map(|(id, p)| (id.as_str(), sq_dist(q, p)))
            .min_by(|a, b| closer((a.1, a.0), (b.1, b.0)))
            .unwrap();
        (id, d.sqrt())
    }

    #[test]
    fn single_point_is_a_leaf() {
        let t = KdTree::build(named(&[vec![1.0, 2.0]])).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.nearest(&[1.0, 2.0]).unwrap(), ("p0000", 0.0));
        assert!(t.contains(&[1.0, 2.0], 0.0).unwrap());
    }

    #[test]
    fn duplicates_and_ties() {
        let pts = vec![
            ("b".to_string(), vec![1.0, 1.0]),
            ("a".to_string(), vec![1.0, 1.0]),
            ("c".to_string(), vec![-1.0, 1.0]),
        ];
        let t = KdTree::build(pts).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.nearest(&[1.0, 1.0]).unwrap().0, "a");
        // equidistant from a/b and c
        assert_eq!(t.nearest(&[0.0, 1.0]).unwrap().0, "a");
        let t = KdTree::build(vec![("z".to_string(), vec![0.0]), ("y".to_string(), vec![2.0])]).unwrap();
        assert_eq!(t.nearest(&[1.0]).unwrap(), ("y", 1.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            KdTree::build(vec![("a".to_string(), vec![0.0, 1.0]), ("b".to_string(), vec![0.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
        let t = KdTree::build(named(&[vec![0.0, 1.0]])).unwrap();
        assert!(matches!(t.nearest(&[0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(t.contains(&[0.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn depth_is_logarithmic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<Vec<f64>> = (0..1000).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let t = KdTree::build(named(&pts)).unwrap();
        assert_eq!(t.depth(), 10);
    }

    #[test]
    fn matches_linear_scan_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [2, 8, 32] {
            // coarse grid coordinates force distance ties
            let pts: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..dim).map(|_| rng.random_range(0..4) as f64).collect())
                .collect();
            let named = named(&pts);
            let t = KdTree::build(named.clone()).unwrap();
            for _ in 0..50 {
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(0..8) as f64 * 0.5).collect();
                let (id, d) = scan(&named, &q);
                assert_eq!(t.nearest(&q).unwrap(), (id, d));
                assert!(t.contains(&q, d).unwrap());
                if d > 0.0 {
                    assert!(!t.contains(&q, d * 0.999).unwrap());
                }
            }
        }
    }

    #[test]
    fn save_and_load_rebuild_the_same_tree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.mceb");
        let pts: Vec<(String, Vec<f32>)> =
            (0..20).map(|i| (format!("s{i}"), vec![i as f32 * 0.5, (i % 3) as f32])).collect();
        let t = KdTree::build(pts).unwrap();
        t.save(&path).unwrap();
        let back = KdTree::load(&path).unwrap();
        assert_eq!(back.ids(), t.ids());
        assert_eq!(back.nearest(&[3.1, 0.9]).unwrap(), t.nearest(&[3.1, 0.9]).unwrap());
    }

    #[test]
    fn thin_examples() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![0.1, 0.0]];
        assert_eq!(thin(&pts, 0.0).unwrap(), vec![0, 1, 3]);
        assert_eq!(thin(&pts, 0.5).unwrap(), vec![0, 1]);
        assert_eq!(thin(&pts, 2.0).unwrap(), vec![0]);
        assert_eq!(thin::<f64>(&[], 1.0).unwrap(), Vec::<usize>::new());
    }

    proptest! {
        #[test]
        fn thin_separates_and_covers(
            pts in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 0..50),
            radius in 0.0f64..1.0,
        ) {
            let kept = thin(&pts, radius).unwrap();
            for (a, &i) in kept.iter().enumerate() {
                for &j in &kept[a + 1..] {
                    prop_assert!(sq_dist(&pts[i], &pts[j]).sqrt() > radius);
                }
            }
            for p in &pts {
                prop_assert!(kept.iter().any(|&k| sq_dist(p, &pts[k]).sqrt() <= radius));
            }
        }

        #[test]
        fn query_is_independent_of_input_order(
            pts in proptest::collection::vec(proptest::collection::vec(-2i32..3, 2), 1..40),
            q in proptest::collection::vec(-2i32..3, 2),
            seed in any::<u64>(),
        ) {
            let pts: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&x| x as f64).collect()).collect();
            let q: Vec<f64> = q.iter().map(|&x| x as f64).collect();
            let mut a = named(&pts);
            let t1 = KdTree::build(a.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            a.shuffle(&mut rng);
            let t2 = KdTree::build(a).unwrap();
            prop_assert_eq!(t1.nearest(&q).unwrap(), t2.nearest(&q).unwrap());
        }
    }
}
