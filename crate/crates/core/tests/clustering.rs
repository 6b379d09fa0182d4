use latdiff_core::clustering::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn two_blobs(seed: u64, per_blob: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    for c in [0.0, 10.0] {
        for _ in 0..per_blob {
            pts.push(vec![c + n.sample(&mut rng), c + n.sample(&mut rng)]);
        }
    }
    pts
}

#[test]
fn hand_example_trio_and_outlier() {
    let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![10.0, 10.0]];
    let m = density_cluster(&pts, 2, 2).unwrap();
    assert_eq!(m.clusters, vec![vec![0, 1, 2]]);
    assert_eq!(m.noise().collect::<Vec<_>>(), vec![3]);
    assert_eq!(pts[m.representatives[0]], vec![0.0, 0.0]);
}

#[test]
fn two_blobs_give_two_clusters() {
    for seed in 0..10 {
        let pts = two_blobs(seed, 50);
        let m = density_cluster(&pts, 5, 5).unwrap();
        assert_eq!(m.clusters.len(), 2, "seed {seed}");
        let assigned = m.assignments.iter().filter(|a| a.is_some()).count();
        assert!(assigned as f64 >= 0.9 * pts.len() as f64, "seed {seed}: {assigned}");
        // Each cluster lies within one blob.
        for c in &m.clusters {
            let first = c[0] < 50;
            assert!(c.iter().all(|&i| (i < 50) == first));
        }
    }
}

#[test]
fn representatives_are_cluster_members() {
    for seed in 0..5 {
        let mut pts = two_blobs(seed, 30);
        pts.push(vec![50.0, -50.0]);
        pts.push(vec![-40.0, 70.0]);
        let m = density_cluster(&pts, 5, 5).unwrap();
        for (c, &r) in m.clusters.iter().zip(&m.representatives) {
            assert!(c.contains(&r));
            assert!(m.assignments[r].is_some());
        }
        assert!(m.assignments[60].is_none() && m.assignments[61].is_none());
    }
}

#[test]
fn leaf_selection_is_available() {
    let pts = two_blobs(0, 50);
    let m = density_cluster_with(&pts, 5, 5, ClusterSelection::Leaf).unwrap();
    assert!(m.clusters.len() >= 2);
}

#[test]
fn permutation_only_relabels_points() {
    let pts = two_blobs(3, 40);
    let base = density_cluster(&pts, 5, 5).unwrap();
    let mut perm: Vec<usize> = (0..pts.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
    let m = density_cluster(&shuffled, 5, 5).unwrap();
    let mut a: Vec<Vec<usize>> = base.clusters.clone();
    let mut b: Vec<Vec<usize>> = m
        .clusters
        .iter()
        .map(|c| {
            let mut v: Vec<usize> = c.iter().map(|&i| perm[i]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m).powi(2)).sum();
    cov / var
}

#[test]
fn reduction_preserves_pairwise_distance_order() {
    // 64-dimensional points that live near a 3-dimensional subspace.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = Normal::new(0.0, 1.0).unwrap();
    let basis: Vec<Vec<f64>> = (0..3).map(|_| (0..64).map(|_| n.sample(&mut rng)).collect()).collect();
    let pts: Vec<Vec<f64>> = (0..80)
        .map(|_| {
            let c: Vec<f64> = (0..3).map(|_| 5.0 * n.sample(&mut rng)).collect();
            (0..64)
                .map(|j| (0..3).map(|k| c[k] * basis[k][j]).sum::<f64>() + 0.05 * n.sample(&mut rng))
                .collect()
        })
        .collect();
    let low = reduce_dims(&pts, 4, 0).unwrap();
    assert!(low.iter().all(|p| p.len() == 4));
    let d = |v: &[Vec<f64>], i: usize, j: usize| -> f64 {
        v[i].iter().zip(&v[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let (mut hi_d, mut lo_d) = (Vec::new(), Vec::new());
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            hi_d.push(d(&pts, i, j));
            lo_d.push(d(&low, i, j));
        }
    }
    let rho = spearman(&hi_d, &lo_d);
    assert!(rho >= 0.9, "rank correlation {rho}");
}

#[test]
fn small_inputs() {
    let m = density_cluster(&[vec![1.0], vec![2.0]], 5, 5).unwrap();
    assert!(m.degenerate);
    assert_eq!(m.representatives, vec![0, 1]);
    assert!(density_cluster(&[vec![1.0]], 1, 5).is_err());
    assert!(reduce_dims(&[], 3, 0).unwrap().is_empty());
}

proptest! {
    #[test]
    fn assignments_agree_with_cluster_lists(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 5..40),
        mcs in 2usize..6,
    ) {
        let m = density_cluster(&pts, mcs, 5).unwrap();
        for (ci, c) in m.clusters.iter().enumerate() {
            for &i in c {
                prop_assert_eq!(m.assignments[i], Some(ci));
            }
            prop_assert!(c.contains(&m.representatives[ci]));
        }
        let listed: usize = m.clusters.iter().map(Vec::len).sum();
        prop_assert_eq!(listed, m.assignments.iter().filter(|a| a.is_some()).count());
    }
}
