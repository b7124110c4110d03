//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rots_core::linalg::Matrix;
use rots_core::{DependencyTree, TransportProblem, WeightedSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive probability vector.
pub fn simplex(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + r.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn cost(r: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_vec(m, n, (0..m * n).map(|_| 2.0 * r.random::<f64>()).collect())
}

pub fn problem(r: &mut ChaCha8Rng, m: usize, n: usize) -> TransportProblem {
    let c = cost(r, m, n);
    TransportProblem::new(c, simplex(r, m), simplex(r, n)).unwrap()
}

pub fn vector(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| 2.0 * r.random::<f64>() - 1.0).collect()
}

/// Sentence with positive weights and random vectors.
pub fn sentence(r: &mut ChaCha8Rng, n: usize, dim: usize) -> WeightedSequence {
    let weights = (0..n).map(|_| 0.1 + r.random::<f64>()).collect();
    let vectors = (0..n).map(|_| vector(r, dim)).collect();
    WeightedSequence::from_parts(weights, vectors).unwrap()
}

/// Random rooted tree; heads are drawn among already attached nodes, so
/// non-projective arcs occur.
pub fn tree(r: &mut ChaCha8Rng, n: usize) -> DependencyTree {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.random_range(0..=i));
    }
    let mut heads = vec![None; n];
    for k in 1..n {
        heads[order[k]] = Some(order[r.random_range(0..k)]);
    }
    let tokens = (0..n).map(|i| format!("t{i}")).collect();
    DependencyTree::new(tokens, heads).unwrap()
}

/// Random coupling of `mu` and `nu`: iterative proportional fitting of a
/// random positive matrix, written independently of the library solvers.
pub fn random_coupling(r: &mut ChaCha8Rng, mu: &[f64], nu: &[f64]) -> Matrix {
    let (m, n) = (mu.len(), nu.len());
    let mut g: Vec<f64> = (0..m * n).map(|_| 1e-3 + r.random::<f64>().powi(3)).collect();
    for _ in 0..5000 {
        for i in 0..m {
            let s: f64 = g[i * n..(i + 1) * n].iter().sum();
            for j in 0..n {
                g[i * n + j] *= mu[i] / s;
            }
        }
        for j in 0..n {
            let s: f64 = (0..m).map(|i| g[i * n + j]).sum();
            for i in 0..m {
                g[i * n + j] *= nu[j] / s;
            }
        }
    }
    Matrix::from_vec(m, n, g)
}

pub fn max_marginal_error(g: &Matrix, mu: &[f64], nu: &[f64]) -> f64 {
    let rows = g.row_sums().iter().zip(mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let cols = g.col_sums().iter().zip(nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rows.max(cols)
}

pub fn neg_entropy(g: &Matrix) -> f64 {
    g.as_slice().iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum()
}

pub fn kl(g: &Matrix, pi: &Matrix) -> f64 {
    g.as_slice()
        .iter()
        .zip(pi.as_slice())
        .filter(|(&x, _)| x > 0.0)
        .map(|(x, p)| x * (x / p).ln())
        .sum()
}
