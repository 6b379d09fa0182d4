//! Ranking, selection and variation operators.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{same_len, LatentBounds, LatentVector};

/// Objective pair, both maximized: `[divergence, diversity]`.
pub type Objectives = [f64; 2];

/// Probability that a gene pair takes part in SBX recombination.
pub const SBX_GENE_PROBABILITY: f64 = 0.5;

/// `a` dominates `b` under maximization.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1])
}

/// Fast non-dominated sort. Fronts are index lists in ascending order; front 0 is best.
pub fn non_dominated_sort(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objs[i], &objs[j]) {
                dominated_by[i].push(j);
                count[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominated_by[j].push(i);
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front.
pub fn crowding_distance(front: &[Objectives]) -> Vec<f64> {
    let n = front.len();
    let mut out = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a][m].total_cmp(&front[b][m]).then(a.cmp(&b)));
        let (lo, hi) = (front[order[0]][m], front[order[n - 1]][m]);
        out[order[0]] = f64::INFINITY;
        out[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 || !range.is_finite() {
            continue;
        }
        for k in 1..n - 1 {
            out[order[k]] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / range;
        }
    }
    out
}

/// Rank and crowding of every point: fronts, then per-front crowding.
pub fn rank_and_crowd(objs: &[Objectives]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; objs.len()];
    let mut crowd = vec![0.0; objs.len()];
    for (r, front) in non_dominated_sort(objs).iter().enumerate() {
        let pts: Vec<Objectives> = front.iter().map(|&i| objs[i]).collect();
        for (&i, c) in front.iter().zip(crowding_distance(&pts)) {
            rank[i] = r;
            crowd[i] = c;
        }
    }
    (rank, crowd)
}

/// Crowded-comparison order of two contestants; `Less` means `a` is better.
pub fn crowded_cmp(rank_a: usize, crowd_a: f64, rank_b: usize, crowd_b: f64) -> Ordering {
    rank_a.cmp(&rank_b).then(crowd_b.total_cmp(&crowd_a))
}

/// Binary tournament over two distinct uniformly drawn contestants; returns
/// the winner's index. A population of one always returns 0.
pub fn tournament_select<R: Rng + ?Sized>(rank: &[usize], crowding: &[f64], rng: &mut R) -> Result<usize> {
    same_len(rank.len(), crowding.len())?;
    let n = rank.len();
    match n {
        0 => Err(Error::Empty("tournament over an empty population")),
        1 => Ok(0),
        _ => {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            Ok(match crowded_cmp(rank[a], crowding[a], rank[b], crowding[b]) {
                Ordering::Less => a,
                Ordering::Greater => b,
                Ordering::Equal => {
                    if rng.random_bool(0.5) {
                        a
                    } else {
                        b
                    }
                }
            })
        }
    }
}

/// Spread factor for SBX from a uniform draw `u` in `(0, 1)`.
pub fn sbx_beta(u: f64, eta: f64) -> f64 {
    let e = 1.0 / (eta + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    }
}

/// Offspring gene pair for spread factor `beta`, before clamping.
pub fn sbx_genes(v1: f64, v2: f64, beta: f64) -> (f64, f64) {
    (
        0.5 * ((1.0 + beta) * v1 + (1.0 - beta) * v2),
        0.5 * ((1.0 - beta) * v1 + (1.0 + beta) * v2),
    )
}

/// Simulated binary crossover. Each gene pair recombines with probability
/// [`SBX_GENE_PROBABILITY`], otherwise it is copied; results are clamped.
pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &LatentVector,
    p2: &LatentVector,
    eta: f64,
    rng: &mut R,
    bounds: &LatentBounds,
) -> Result<(LatentVector, LatentVector)> {
    same_len(p1.len(), p2.len())?;
    same_len(p1.len(), bounds.dim())?;
    let mut c1 = p1.clone();
    let mut c2 = p2.clone();
    for i in 0..p1.len() {
        if !rng.random_bool(SBX_GENE_PROBABILITY) {
            continue;
        }
        // Open interval keeps beta finite.
        let u = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let (a, b) = sbx_genes(p1.as_slice()[i], p2.as_slice()[i], sbx_beta(u, eta));
        c1.as_mut_slice()[i] = a;
        c2.as_mut_slice()[i] = b;
    }
    bounds.clamp(&mut c1);
    bounds.clamp(&mut c2);
    Ok((c1, c2))
}

/// Bounded polynomial mutation of one gene with uniform draw `u` in `[0, 1)`.
pub fn mutate_gene(x: f64, lo: f64, hi: f64, u: f64, eta: f64) -> f64 {
    let span = hi - lo;
    let e = eta + 1.0;
    let dq = if u <= 0.5 {
        let d1 = (x - lo) / span;
        (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(e)).powf(1.0 / e) - 1.0
    } else {
        let d2 = (hi - x) / span;
        1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(e)).powf(1.0 / e)
    };
    (x + dq * span).clamp(lo, hi)
}

/// Polynomial mutation applied to each gene independently with `gene_probability`.
pub fn polynomial_mutation<R: Rng + ?Sized>(
    ind: &LatentVector,
    eta: f64,
    gene_probability: f64,
    rng: &mut R,
    bounds: &LatentBounds,
) -> Result<LatentVector> {
    bounds.check(ind)?;
    let mut out = ind.clone();
    for (i, x) in out.as_mut_slice().iter_mut().enumerate() {
        if rng.random_bool(gene_probability) {
            *x = mutate_gene(*x, bounds.lo(i), bounds.hi(i), rng.random(), eta);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn sort_examples() {
        assert_eq!(non_dominated_sort(&[[1.0, 1.0], [2.0, 2.0], [0.0, 3.0]]), vec![vec![1, 2], vec![0]]);
        assert_eq!(non_dominated_sort(&[[1.0, 1.0]; 4]), vec![vec![0, 1, 2, 3]]);
        assert_eq!(
            non_dominated_sort(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]),
            vec![vec![2], vec![1], vec![0]]
        );
    }

    #[test]
    fn crowding_examples() {
        assert_eq!(
            crowding_distance(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]),
            vec![f64::INFINITY, 2.0, f64::INFINITY]
        );
        assert_eq!(crowding_distance(&[[1.0, 1.0]]), vec![f64::INFINITY]);
        assert_eq!(crowding_distance(&[[1.0, 1.0], [0.0, 2.0]]), vec![f64::INFINITY; 2]);
        // Zero range on the second objective contributes nothing.
        let c = crowding_distance(&[[0.0, 5.0], [1.0, 5.0], [3.0, 5.0]]);
        assert_eq!(c[1], 1.0);
    }

    #[test]
    fn tournament_prefers_rank_then_crowding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(tournament_select(&[1, 0], &[5.0, 0.1], &mut rng).unwrap(), 1);
            assert_eq!(tournament_select(&[0, 0], &[1.2, f64::INFINITY], &mut rng).unwrap(), 1);
        }
        assert!(tournament_select(&[], &[], &mut rng).is_err());
        assert_eq!(tournament_select(&[4], &[0.0], &mut rng).unwrap(), 0);
    }

    #[test]
    fn sbx_examples() {
        assert_eq!(sbx_genes(0.3, -0.7, 1.0), (0.3, -0.7));
        assert_eq!(sbx_genes(0.0, 1.0, 0.5), (0.25, 0.75));
        assert_eq!(sbx_beta(0.5, 15.0), 1.0);
        let b = LatentBounds::uniform(2, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LatentVector::new(vec![0.0, 0.0]);
        assert!(sbx_crossover(&p, &LatentVector::new(vec![0.0]), 15.0, &mut rng, &b).is_err());
    }

    #[test]
    fn mutation_examples() {
        assert_eq!(mutate_gene(0.3, -1.0, 1.0, 0.5, 20.0), 0.3);
        assert_eq!(mutate_gene(0.0, -1.0, 1.0, 0.0, 20.0), -1.0);
        let b = LatentBounds::uniform(1, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(polynomial_mutation(&LatentVector::new(vec![1.5]), 20.0, 1.0, &mut rng, &b).is_err());
    }

    proptest! {
        #[test]
        fn sbx_preserves_gene_mean(v1 in -1.0f64..1.0, v2 in -1.0f64..1.0, u in 0.0001f64..0.9999, eta in 1.0f64..30.0) {
            let (a, b) = sbx_genes(v1, v2, sbx_beta(u, eta));
            prop_assert!(((a + b) / 2.0 - (v1 + v2) / 2.0).abs() <= 1e-12);
        }

        #[test]
        fn mutation_stays_in_bounds(x in -1.0f64..=1.0, u in 0.0f64..1.0, eta in 0.5f64..100.0) {
            let y = mutate_gene(x, -1.0, 1.0, u, eta);
            prop_assert!((-1.0..=1.0).contains(&y));
        }

        #[test]
        fn crossover_children_stay_in_bounds(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = LatentBounds::uniform(8, -1.0, 1.0).unwrap();
            let p1 = b.sample(&mut rng);
            let p2 = b.sample(&mut rng);
            let (c1, c2) = sbx_crossover(&p1, &p2, 2.0, &mut rng, &b).unwrap();
            prop_assert!(b.contains(&c1) && b.contains(&c2));
        }
    }
}
