//! Archive-side clustering: linear dimensionality reduction, density-based
//! clustering over mutual-reachability distances, and medoid representatives.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::Archive;
use crate::types::Image;

/// Above this input dimension PCA switches from an exact covariance
/// eigendecomposition to randomized subspace iteration.
const EXACT_PCA_MAX_DIM: usize = 32;
const OVERSAMPLE: usize = 8;
const POWER_ITERATIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub target_dim: usize,
    pub min_cluster_size: usize,
    pub k_core: usize,
    pub selection: ClusterSelection,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            target_dim: 8,
            min_cluster_size: 5,
            k_core: 5,
            selection: ClusterSelection::ExcessOfMass,
            seed: 0,
        }
    }
}

/// How final clusters are read off the condensed hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelection {
    /// Most persistent clusters: a parent wins over its descendants when its
    /// own stability is at least theirs combined.
    #[default]
    ExcessOfMass,
    /// Every cluster that never splits.
    Leaf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// Cluster index per input point; `None` marks noise.
    pub assignments: Vec<Option<usize>>,
    pub clusters: Vec<Vec<usize>>,
    /// Medoid point index per cluster.
    pub representatives: Vec<usize>,
    pub dim: usize,
    pub min_cluster_size: usize,
    /// True when there were too few points to cluster and every point stands alone.
    pub degenerate: bool,
}

impl ClusterModel {
    pub fn noise(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.is_none().then_some(i))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Centres the data and projects it onto its top `target_dim` principal
/// directions, ordered by decreasing variance. Data of dimension at most
/// `target_dim` is returned unchanged.
pub fn reduce_dims(features: &[Vec<f64>], target_dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let Some(first) = features.first() else {
        return Ok(Vec::new());
    };
    let d = first.len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: d,
        });
    }
    if d <= target_dim {
        return Ok(features.to_vec());
    }
    let n = features.len();
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);

    let basis = if d <= EXACT_PCA_MAX_DIM {
        top_eigenvectors(&(x.transpose() * &x), target_dim)
    } else {
        randomized_basis(&x, target_dim, seed)
    };
    let y = x * basis;
    Ok((0..n).map(|i| y.row(i).iter().copied().collect()).collect())
}

/// Columns are the eigenvectors of the `k` largest eigenvalues, largest first.
fn top_eigenvectors(sym: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let cols: Vec<_> = order.iter().take(k).map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Approximate top-`k` right singular subspace of `x` (n×d) by seeded
/// subspace iteration, refined with a Rayleigh-Ritz step.
fn randomized_basis(x: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let l = (k + OVERSAMPLE).min(d).min(n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));
    let xt = x.transpose();
    let mut v = orthonormalize(omega);
    for _ in 0..POWER_ITERATIONS {
        let u = orthonormalize(x * &v);
        v = orthonormalize(&xt * u);
    }
    // Rayleigh-Ritz: eigenvectors of Vᵀ XᵀX V rotate V onto the Ritz vectors.
    let xv = x * &v;
    let small = xv.transpose() * xv;
    let rot = top_eigenvectors(&small, k.min(l));
    let mut basis = v * rot;
    if basis.ncols() < k {
        basis = basis.resize_horizontally(k, 0.0);
    }
    basis
}

/// Density clustering over mutual-reachability distances.
///
/// Core distance of a point is the distance to its `k`-th nearest point,
/// counting itself, with `k = min(k_core, min_cluster_size, n)`. The minimum
/// spanning tree of the mutual-reachability graph gives a single-linkage
/// hierarchy; walking it from the top, a split into two components of at
/// least `min_cluster_size` points starts two new clusters, smaller
/// components fall out of their parent as it shrinks. Final clusters are
/// chosen from that condensed tree by `selection` (excess of mass by
/// default); points outside every chosen cluster are noise. If the root
/// never splits, the single cluster keeps only the points that remained
/// until it dissolved.
///
/// Fewer than `min_cluster_size` points yields a degenerate model with every
/// point its own cluster.
pub fn density_cluster(points: &[Vec<f64>], min_cluster_size: usize, k_core: usize) -> Result<ClusterModel> {
    density_cluster_with(points, min_cluster_size, k_core, ClusterSelection::ExcessOfMass)
}

pub fn density_cluster_with(
    points: &[Vec<f64>],
    min_cluster_size: usize,
    k_core: usize,
    selection: ClusterSelection,
) -> Result<ClusterModel> {
    if min_cluster_size < 2 {
        return Err(Error::Invalid(format!("min cluster size must be at least 2, got {min_cluster_size}")));
    }
    if k_core < 1 {
        return Err(Error::Invalid("k_core must be at least 1".into()));
    }
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: dim,
        });
    }
    if n < min_cluster_size {
        return Ok(ClusterModel {
            assignments: (0..n).map(Some).collect(),
            clusters: (0..n).map(|i| vec![i]).collect(),
            representatives: (0..n).collect(),
            dim,
            min_cluster_size,
            degenerate: true,
        });
    }

    let core = core_distances(points, k_core.min(min_cluster_size).min(n));
    let mst = mutual_reachability_mst(points, &core);
    let tree = SingleLinkage::build(n, mst);
    let clusters = tree.extract(min_cluster_size, selection);

    let mut assignments = vec![None; n];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            assignments[i] = Some(c);
        }
    }
    let mut model = ClusterModel {
        assignments,
        clusters,
        representatives: Vec::new(),
        dim,
        min_cluster_size,
        degenerate: false,
    };
    model.representatives = representatives(&model, points);
    Ok(model)
}

fn core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    points
        .par_iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| sq_dist(p, q)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            kth.sqrt()
        })
        .collect()
}

/// Prim's algorithm on the implicit complete graph, O(n²) time and O(n) memory.
/// Returns `(a, b, weight)` edges.
fn mutual_reachability_mst(points: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let p = &points[current];
        let cc = core[current];
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = dist(p, &points[j]).max(cc).max(core[j]);
            if w < best[j] {
                best[j] = w;
                parent[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((parent[next], next, best[next]));
        current = next;
    }
    edges
}

struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Binary merge tree: nodes `0..n` are points, node `n + i` is the i-th merge.
struct SingleLinkage {
    n: usize,
    merges: Vec<Merge>,
}

impl SingleLinkage {
    fn build(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        edges.sort_by(|a, b| a.2.total_cmp(&b.2));
        let mut uf_parent: Vec<usize> = (0..2 * n).collect();
        let mut size = vec![1usize; 2 * n];
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for (a, b, w) in edges {
            let (ra, rb) = (find(&mut uf_parent, a), find(&mut uf_parent, b));
            let node = n + merges.len();
            uf_parent[ra] = node;
            uf_parent[rb] = node;
            size[node] = size[ra] + size[rb];
            merges.push(Merge {
                left: ra,
                right: rb,
                distance: w,
                size: size[node],
            });
        }
        SingleLinkage { n, merges }
    }

    fn size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].size
        }
    }

    fn leaves(&self, node: usize, out: &mut Vec<usize>) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                let m = &self.merges[x - self.n];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
    }

    /// Top-down walk producing the final clusters as sorted member lists.
    fn extract(&self, min_size: usize, selection: ClusterSelection) -> Vec<Vec<usize>> {
        if self.merges.is_empty() {
            return vec![vec![0]];
        }
        let root = self.n + self.merges.len() - 1;
        let mut clusters = vec![Condensed::new(None, 0.0)];
        let mut stack = vec![(root, 0usize)];
        let mut buf = Vec::new();
        while let Some((node, c)) = stack.pop() {
            if node < self.n {
                // Only reachable with a single-point component inside a live cluster.
                clusters[c].fallen.push((node, f64::INFINITY));
                continue;
            }
            let m = &self.merges[node - self.n];
            let lambda = if m.distance > 0.0 { 1.0 / m.distance } else { f64::INFINITY };
            let (ls, rs) = (self.size(m.left), self.size(m.right));
            if m.distance > 0.0 && ls >= min_size && rs >= min_size {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    clusters.push(Condensed::new(Some(c), lambda));
                    let id = clusters.len() - 1;
                    clusters[c].children.push((id, size));
                    stack.push((child, id));
                }
            } else if m.distance > 0.0 && (ls >= min_size || rs >= min_size) {
                let (big, small) = if ls >= min_size { (m.left, m.right) } else { (m.right, m.left) };
                buf.clear();
                self.leaves(small, &mut buf);
                clusters[c].fallen.extend(buf.iter().map(|&p| (p, lambda)));
                stack.push((big, c));
            } else {
                buf.clear();
                self.leaves(node, &mut buf);
                clusters[c].fallen.extend(buf.iter().map(|&p| (p, lambda)));
            }
        }

        let selected: Vec<usize> = if clusters[0].children.is_empty() {
            Vec::new()
        } else {
            match selection {
                ClusterSelection::Leaf => (1..clusters.len()).filter(|&c| clusters[c].children.is_empty()).collect(),
                ClusterSelection::ExcessOfMass => select_by_stability(&clusters),
            }
        };

        let mut result: Vec<Vec<usize>> = if selected.is_empty() {
            // The root never split: keep the points that stayed until it dissolved.
            let fallen = &clusters[0].fallen;
            let max = fallen.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
            vec![fallen.iter().filter(|&&(_, l)| l >= max).map(|&(p, _)| p).collect()]
        } else {
            selected
                .iter()
                .map(|&c| {
                    let mut members = Vec::new();
                    let mut todo = vec![c];
                    while let Some(x) = todo.pop() {
                        members.extend(clusters[x].fallen.iter().map(|&(p, _)| p));
                        todo.extend(clusters[x].children.iter().map(|&(id, _)| id));
                    }
                    members
                })
                .collect()
        };
        for members in &mut result {
            members.sort_unstable();
        }
        result.sort_by_key(|m| m[0]);
        result
    }
}

struct Condensed {
    parent: Option<usize>,
    birth: f64,
    children: Vec<(usize, usize)>,
    /// (point, lambda at which it left this cluster)
    fallen: Vec<(usize, f64)>,
}

impl Condensed {
    fn new(parent: Option<usize>, birth: f64) -> Self {
        Condensed {
            parent,
            birth,
            children: Vec::new(),
            fallen: Vec::new(),
        }
    }

    /// Excess of mass: sum over departures of (departure lambda - birth lambda), weighted by size.
    fn stability(&self, clusters: &[Condensed]) -> f64 {
        let points: f64 = self.fallen.iter().map(|&(_, l)| l - self.birth).sum();
        let kids: f64 = self
            .children
            .iter()
            .map(|&(id, size)| (clusters[id].birth - self.birth) * size as f64)
            .sum();
        points + kids
    }
}

/// Bottom-up choice between each cluster and its best descendants; the root is never chosen.
fn select_by_stability(clusters: &[Condensed]) -> Vec<usize> {
    let k = clusters.len();
    let mut value = vec![0.0; k];
    let mut chosen = vec![false; k];
    // Children always have larger ids than their parent.
    for c in (1..k).rev() {
        let own = clusters[c].stability(clusters);
        let below: f64 = clusters[c].children.iter().map(|&(id, _)| value[id]).sum();
        if clusters[c].children.is_empty() || own >= below {
            value[c] = own;
            chosen[c] = true;
        } else {
            value[c] = below;
        }
    }
    // Keep only chosen clusters with no chosen ancestor.
    (1..k)
        .filter(|&c| {
            if !chosen[c] {
                return false;
            }
            let mut p = clusters[c].parent;
            while let Some(x) = p {
                if x != 0 && chosen[x] {
                    return false;
                }
                p = clusters[x].parent;
            }
            true
        })
        .collect()
}

/// Medoid of each cluster (member minimizing summed distance to the others;
/// ties go to the lowest index).
pub fn representatives(model: &ClusterModel, points: &[Vec<f64>]) -> Vec<usize> {
    model
        .clusters
        .par_iter()
        .map(|members| {
            let mut best = (f64::INFINITY, usize::MAX);
            for &i in members {
                let s: f64 = members.iter().map(|&j| dist(&points[i], &points[j])).sum();
                if s < best.0 || (s == best.0 && i < best.1) {
                    best = (s, i);
                }
            }
            best.1
        })
        .collect()
}

/// Representative images of the archive: medoids of the clusters of the
/// reduced, flattened images, or every archived image while the archive is
/// smaller than the minimum cluster size.
pub fn refresh_representatives(archive: &Archive, cfg: &ClusterConfig) -> Result<Vec<Image>> {
    let images: Vec<&Image> = archive.images().collect();
    representative_images(&images, cfg)
}

pub fn representative_images(images: &[&Image], cfg: &ClusterConfig) -> Result<Vec<Image>> {
    if images.len() < cfg.min_cluster_size {
        return Ok(images.iter().map(|&i| i.clone()).collect());
    }
    let flat: Vec<Vec<f64>> = images.iter().map(|i| i.pixels().to_vec()).collect();
    let reduced = reduce_dims(&flat, cfg.target_dim, cfg.seed)?;
    let model = density_cluster_with(&reduced, cfg.min_cluster_size, cfg.k_core, cfg.selection)?;
    Ok(model.representatives.iter().map(|&i| images[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(x, y)| vec![x, y]).collect()
    }

    #[test]
    fn hand_example_gives_trio_and_noise() {
        let p = pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (10.0, 10.0)]);
        let m = density_cluster(&p, 3, 5).unwrap();
        assert_eq!(m.clusters, vec![vec![0, 1, 2]]);
        assert_eq!(m.assignments, vec![Some(0), Some(0), Some(0), None]);
        assert_eq!(m.representatives, vec![0]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let p = vec![vec![0.3, 0.3]; 7];
        let m = density_cluster(&p, 5, 5).unwrap();
        assert_eq!(m.clusters, vec![(0..7).collect::<Vec<_>>()]);
        assert_eq!(m.noise().count(), 0);
    }

    #[test]
    fn too_few_points_is_degenerate() {
        let p = pts(&[(0.0, 0.0), (5.0, 5.0)]);
        let m = density_cluster(&p, 5, 5).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.representatives, vec![0, 1]);
        assert!(density_cluster(&p, 1, 5).is_err());
    }

    #[test]
    fn medoid_ties_go_to_lowest_index() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let model = ClusterModel {
            assignments: vec![Some(0); 4],
            clusters: vec![vec![0, 1, 2, 3]],
            representatives: vec![],
            dim: 2,
            min_cluster_size: 2,
            degenerate: false,
        };
        assert_eq!(representatives(&model, &p), vec![0]);
        let trio = pts(&[(0.0, 1.0), (1.0, 0.0), (0.0, 0.0)]);
        let model = ClusterModel {
            clusters: vec![vec![0, 1, 2]],
            ..model
        };
        assert_eq!(representatives(&model, &trio), vec![2]);
    }

    #[test]
    fn low_dimensional_data_passes_through() {
        let p = pts(&[(1.0, 2.0), (3.0, 4.0)]);
        assert_eq!(reduce_dims(&p, 8, 0).unwrap(), p);
        assert!(reduce_dims(&[], 8, 0).unwrap().is_empty());
    }

    #[test]
    fn line_in_ten_dimensions_projects_to_first_axis() {
        let dir: Vec<f64> = (0..10).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let data: Vec<Vec<f64>> = (0..20).map(|t| dir.iter().map(|d| d * t as f64 * 0.1 + 0.5).collect()).collect();
        let y = reduce_dims(&data, 2, 0).unwrap();
        let var = |k: usize| {
            let m = y.iter().map(|r| r[k]).sum::<f64>() / y.len() as f64;
            y.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>()
        };
        let total: f64 = (0..10)
            .map(|j| {
                let m = data.iter().map(|r| r[j]).sum::<f64>() / 20.0;
                data.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>()
            })
            .sum();
        assert!((var(0) - total).abs() < 1e-9 * total);
        assert!(var(1) < 1e-9 * total);
    }
}
