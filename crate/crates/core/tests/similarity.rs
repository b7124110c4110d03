mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rots_core::linalg::{cosine, Matrix};
use rots_core::rpp::{compose_phrases, parent_indices, rpp_binary, rpp_from_dependency_tree};
use rots_core::similarity::{
    ac_similarity, coarse_to_fine_prior, correction_coefficient, diversity, ec_similarity, interp_similarity, prd,
    rots, wrd_similarity,
};
use rots_core::transport::{exact_ot_oracle, wrd_marginals, SolverOptions};
use rots_core::{SimilarityConfig, TransportProblem, WeightedSequence, WeightedVectors};

const OPTS: SolverOptions = SolverOptions { max_iter: 10_000, tol: 1e-9 };

fn all_scores(a: &WeightedSequence, b: &WeightedSequence, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let r1 = rpp_from_dependency_tree(&tree(&mut r, a.len()), 4);
    let r2 = rpp_from_dependency_tree(&tree(&mut r, b.len()), 4);
    let cfg = SimilarityConfig::default();
    let mut s = vec![
        ac_similarity(a, b).unwrap(),
        wrd_similarity(a, b, 0.1, OPTS).unwrap(),
        interp_similarity(a, b, 0.5, 10.0, OPTS).unwrap(),
        prd(a, b, &r1, &r2, 2, 0.1, OPTS).unwrap(),
    ];
    s.extend(rots(a, b, &r1, &r2, &cfg).unwrap().scores);
    s
}

fn swapped_scores(a: &WeightedSequence, b: &WeightedSequence, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let r1 = rpp_from_dependency_tree(&tree(&mut r, a.len()), 4);
    let r2 = rpp_from_dependency_tree(&tree(&mut r, b.len()), 4);
    let cfg = SimilarityConfig::default();
    let mut s = vec![
        ac_similarity(b, a).unwrap(),
        wrd_similarity(b, a, 0.1, OPTS).unwrap(),
        interp_similarity(b, a, 0.5, 10.0, OPTS).unwrap(),
        prd(b, a, &r2, &r1, 2, 0.1, OPTS).unwrap(),
    ];
    s.extend(rots(b, a, &r2, &r1, &cfg).unwrap().scores);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn symmetric(seed: u64, m in 1usize..=10, n in 1usize..=10) {
        let mut r = rng(seed);
        let a = sentence(&mut r, m, 6);
        let b = sentence(&mut r, n, 6);
        let x = all_scores(&a, &b, seed);
        let y = swapped_scores(&a, &b, seed);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-10, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn weight_scale_invariant(seed: u64, m in 1usize..=10, n in 1usize..=10, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let a = sentence(&mut r, m, 6);
        let b = sentence(&mut r, n, 6);
        let mut a2 = a.clone();
        a2.weights_mut().iter_mut().for_each(|w| *w *= c);
        let x = all_scores(&a, &b, seed);
        let y = all_scores(&a2, &b, seed);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn ec_with_product_is_ac(seed: u64, m in 1usize..=10, n in 1usize..=10) {
        let mut r = rng(seed);
        let a = sentence(&mut r, m, 6);
        let b = sentence(&mut r, n, 6);
        let mu: Vec<f64> = { let w = wrd_marginals(&a).unwrap(); let s: f64 = w.iter().sum(); w.iter().map(|x| x / s).collect() };
        let nu: Vec<f64> = { let w = wrd_marginals(&b).unwrap(); let s: f64 = w.iter().sum(); w.iter().map(|x| x / s).collect() };
        let g = Matrix::from_vec(m, n, mu.iter().flat_map(|x| nu.iter().map(move |y| x * y)).collect());
        prop_assert!((ec_similarity(&g, &a, &b, 1.0).unwrap() - ac_similarity(&a, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_words_reduce_to_cosine(seed: u64) {
        let mut r = rng(seed);
        let a = sentence(&mut r, 1, 5);
        let b = sentence(&mut r, 1, 5);
        let c = cosine(a.vector(0), b.vector(0));
        prop_assert!((ac_similarity(&a, &b).unwrap() - c).abs() < 1e-9);
        prop_assert!((wrd_similarity(&a, &b, 0.1, OPTS).unwrap() - c).abs() < 1e-9);
        prop_assert!((interp_similarity(&a, &b, 1.0, 10.0, OPTS).unwrap() - c).abs() < 1e-9);
        let s = rots(&a, &b, &rpp_binary(1, 4), &rpp_binary(1, 4), &SimilarityConfig::default()).unwrap();
        for x in s.scores {
            prop_assert!((x - c).abs() < 1e-9);
        }
    }

    #[test]
    fn prior_blocks_sum_to_parent(seed: u64, m in 1usize..=10, n in 1usize..=10) {
        let mut r = rng(seed);
        let r1 = rpp_from_dependency_tree(&tree(&mut r, m), 3);
        let r2 = rpp_from_dependency_tree(&tree(&mut r, n), 3);
        let (c1, f1) = (r1.level(1), r1.level(2));
        let (c2, f2) = (r2.level(1), r2.level(2));
        let (pm, pn) = (simplex(&mut r, c1.len()), simplex(&mut r, c2.len()));
        let prev = random_coupling(&mut r, &pm, &pn);
        let p1 = parent_indices(c1, f1);
        let p2 = parent_indices(c2, f2);
        let mu = simplex(&mut r, f1.len());
        let nu = simplex(&mut r, f2.len());
        let pi = coarse_to_fine_prior(&prev, &p1, &p2, &mu, &nu).unwrap();
        let mut sums = Matrix::zeros(c1.len(), c2.len());
        for i in 0..f1.len() {
            for j in 0..f2.len() {
                sums[(p1[i], p2[j])] += pi.matrix()[(i, j)];
            }
        }
        prop_assert!(sums.max_abs_diff(&prev) < 1e-12);
    }

    #[test]
    fn diversity_at_least_one(seed: u64, n in 1usize..=10) {
        let mut r = rng(seed);
        prop_assert!(diversity(&sentence(&mut r, n, 4)).unwrap() >= 1.0);
    }

    #[test]
    fn prd_on_tokens_is_wrd(seed: u64, m in 1usize..=8, n in 1usize..=8) {
        let mut r = rng(seed);
        let a = sentence(&mut r, m, 5);
        let b = sentence(&mut r, n, 5);
        let (r1, r2) = (rpp_binary(m, 3), rpp_binary(n, 3));
        let token = prd(&a, &b, &r1, &r2, 99, 0.1, OPTS).unwrap();
        prop_assert!((token - wrd_similarity(&a, &b, 0.1, OPTS).unwrap()).abs() < 1e-9);
        let k1 = prd(&a, &b, &r1, &r2, 1, 0.1, OPTS).unwrap();
        let direct = wrd_similarity(&compose_phrases(&a, r1.level(1)).unwrap(), &compose_phrases(&b, r2.level(1)).unwrap(), 0.1, OPTS).unwrap();
        prop_assert!((k1 - direct).abs() < 1e-12);
    }

    #[test]
    fn rots_level_zero_is_ac(seed: u64, m in 1usize..=10, n in 1usize..=10) {
        let mut r = rng(seed);
        let a = sentence(&mut r, m, 6);
        let b = sentence(&mut r, n, 6);
        let s = rots(&a, &b, &rpp_binary(m, 4), &rpp_binary(n, 4), &SimilarityConfig::default()).unwrap();
        prop_assert!((s.scores[0] - ac_similarity(&a, &b).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn diversity_is_one_only_for_collinear_vectors() {
    let collinear = WeightedSequence::from_parts(vec![1.0, 2.0, 0.5], vec![vec![1.0, 2.0], vec![0.5, 1.0], vec![3.0, 6.0]]).unwrap();
    assert!((diversity(&collinear).unwrap() - 1.0).abs() < 1e-14);
    let bent = WeightedSequence::from_parts(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![1.0, 0.01]]).unwrap();
    assert!(diversity(&bent).unwrap() > 1.0);
    let opposed = WeightedSequence::from_parts(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![-0.5, 0.0]]).unwrap();
    assert!(diversity(&opposed).unwrap() > 1.0);
}

#[test]
fn orthogonal_pair_correction() {
    let a = WeightedSequence::from_parts(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let b = WeightedSequence::from_parts(vec![1.0], vec![vec![0.3, 0.1]]).unwrap();
    assert!((correction_coefficient(&a, &b, 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
}

fn unit_sentence(r: &mut rand_chacha::ChaCha8Rng, n: usize, dim: usize) -> WeightedSequence {
    let vectors = (0..n)
        .map(|_| {
            let v = vector(r, dim);
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect();
    WeightedSequence::from_parts(vec![1.0; n], vectors).unwrap()
}

#[test]
fn identical_sentences_align_almost_perfectly() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let a = unit_sentence(&mut r, 6, 8);
        let w = wrd_similarity(&a, &a, 0.01, SolverOptions { max_iter: 100_000, tol: 1e-9 }).unwrap();
        assert!(w > 0.99, "{w}");
    }
}

#[test]
fn exact_plan_beats_product_on_cosines() {
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let a = sentence(&mut r, 4, 3);
        let b = sentence(&mut r, 3, 3);
        let norm = |w: Vec<f64>| { let s: f64 = w.iter().sum(); w.into_iter().map(|x| x / s).collect::<Vec<_>>() };
        let mu = norm(wrd_marginals(&a).unwrap());
        let nu = norm(wrd_marginals(&b).unwrap());
        let cos = Matrix::from_vec(4, 3, (0..4).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| cosine(a.vector(i), b.vector(j))).collect());
        let cost = Matrix::from_vec(4, 3, cos.as_slice().iter().map(|c| 1.0 - c).collect());
        let p = TransportProblem::new(cost, mu.clone(), nu.clone()).unwrap();
        let g = exact_ot_oracle(&p).unwrap().gamma;
        let s_ot: f64 = g.as_slice().iter().zip(cos.as_slice()).map(|(x, c)| x * c).sum();
        let s_ind: f64 = (0..4).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| mu[i] * nu[j] * cos[(i, j)]).sum();
        assert!(s_ot >= s_ind - 1e-9);
    }
}

#[test]
fn interp_at_alpha_zero_is_wrd() {
    for seed in 0..10 {
        let mut r = rng(2000 + seed);
        let a = sentence(&mut r, 5, 4);
        let b = sentence(&mut r, 4, 4);
        let opts = SolverOptions { max_iter: 1_000_000, tol: 1e-9 };
        let i = interp_similarity(&a, &b, 0.0, 1e-4, opts).unwrap();
        let w = wrd_similarity(&a, &b, 1e-4, opts).unwrap();
        assert!((i - w).abs() < 1e-4, "{i} vs {w}");
    }
}

#[test]
fn interp_lies_between_endpoints() {
    // Grid over eps with alpha = 1: the EC value moves from the OT end towards AC.
    let mut r = rng(77);
    let a = sentence(&mut r, 5, 4);
    let b = sentence(&mut r, 6, 4);
    let c = correction_coefficient(&a, &b, 1.0).unwrap();
    let ot_end = c * wrd_similarity(&a, &b, 1e-3, SolverOptions { max_iter: 1_000_000, tol: 1e-9 }).unwrap();
    let ac_end = ac_similarity(&a, &b).unwrap();
    let mid = interp_similarity(&a, &b, 1.0, 10.0, OPTS).unwrap();
    let (lo, hi) = if ot_end < ac_end { (ot_end, ac_end) } else { (ac_end, ot_end) };
    assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
}

#[test]
fn perturbing_a_word_lowers_rots() {
    for seed in 0..10 {
        let mut r = rng(3000 + seed);
        let dim = 12;
        let a = unit_sentence(&mut r, 6, dim);
        let t = tree(&mut r, 6);
        let rpp = rpp_from_dependency_tree(&t, 4);
        let same = rots(&a, &a, &rpp, &rpp, &SimilarityConfig::default()).unwrap();
        // Replace one word by a unit vector orthogonal to every word of the sentence.
        let k = r.random_range(0..6);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 0..6 {
            let mut v = a.vector(i).to_vec();
            for u in &basis {
                let d: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
        let mut o = vector(&mut r, dim);
        for u in &basis {
            let d: f64 = o.iter().zip(u).map(|(x, y)| x * y).sum();
            o.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        let n = o.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut b = a.clone();
        b.vector_mut(k).iter_mut().zip(&o).for_each(|(x, y)| *x = y / n);
        let pert = rots(&a, &b, &rpp, &rpp, &SimilarityConfig::default()).unwrap();
        for (s, p) in same.scores.iter().zip(&pert.scores) {
            assert!(s >= p, "{:?} vs {:?}", same.scores, pert.scores);
        }
    }
}

#[test]
fn swapped_rots_levels_match() {
    let mut r = rng(5);
    let a = sentence(&mut r, 7, 5);
    let b = sentence(&mut r, 4, 5);
    let r1 = rpp_from_dependency_tree(&tree(&mut r, 7), 4);
    let r2 = rpp_from_dependency_tree(&tree(&mut r, 4), 4);
    let cfg = SimilarityConfig::default();
    let x = rots(&a, &b, &r1, &r2, &cfg).unwrap();
    let y = rots(&b, &a, &r2, &r1, &cfg).unwrap();
    for (p, q) in x.scores.iter().zip(&y.scores) {
        assert!((p - q).abs() < 1e-10);
    }
}
