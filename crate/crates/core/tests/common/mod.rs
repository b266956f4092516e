#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sead::corpus::{ElementRole, FeatureSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_set(rng: &mut impl Rng, n: usize, d: usize) -> FeatureSet {
    let pts = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureSet::new(ElementRole::Agent, d, pts).unwrap()
}

pub fn rows(set: &FeatureSet) -> Vec<Vec<f64>> {
    (0..set.len())
        .map(|i| set.point(i).iter().map(|&v| f64::from(v)).collect())
        .collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum mean assignment cost over every permutation. Unequal sizes are
/// handled by replicating each point of `a` `|b|` times and each point of
/// `b` `|a|` times, which turns uniform transport into an assignment.
pub fn brute_force_emd(a: &FeatureSet, b: &FeatureSet) -> f64 {
    let (ra, rb) = (rows(a), rows(b));
    if ra.len() == rb.len() {
        let k = ra.len();
        return permutations(k)
            .into_iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| dist(&ra[i], &rb[j])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / k as f64;
    }
    let xs: Vec<&Vec<f64>> = ra.iter().flat_map(|r| std::iter::repeat_n(r, rb.len())).collect();
    let ys: Vec<&Vec<f64>> = rb.iter().flat_map(|r| std::iter::repeat_n(r, ra.len())).collect();
    let k = xs.len();
    permutations(k)
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| dist(xs[i], ys[j])).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / k as f64
}

pub fn translate(set: &FeatureSet, v: &[f32]) -> FeatureSet {
    let d = set.dim();
    let pts = set.points().iter().enumerate().map(|(i, &x)| x + v[i % d]).collect();
    FeatureSet::new(set.role(), d, pts).unwrap()
}

pub fn scale(set: &FeatureSet, s: f32) -> FeatureSet {
    let pts = set.points().iter().map(|&x| x * s).collect();
    FeatureSet::new(set.role(), set.dim(), pts).unwrap()
}

/// Coordinates on a 1/256 grid, so translations by grid vectors and scaling
/// by powers of two are exact in `f32`.
pub fn grid_set(rng: &mut impl Rng, n: usize, d: usize) -> FeatureSet {
    let pts = (0..n * d).map(|_| rng.random_range(-512i32..512) as f32 / 256.0).collect();
    FeatureSet::new(ElementRole::Agent, d, pts).unwrap()
}

pub fn grid_vector(rng: &mut impl Rng, d: usize) -> Vec<f32> {
    (0..d).map(|_| rng.random_range(-1024i32..1024) as f32 / 256.0).collect()
}
