//! Structural invariants of multi-horseshoes.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use symdyn::horseshoe::{multi_horseshoe, Horseshoe, HorseshoeRequest, HorseshoeResult};
use symdyn::measures::{rho_distance, CylinderMeasure, MarkovMeasure};
use symdyn::sft::{structure_profile, topological_entropy, Sft};

/// Cyclic block frequencies of a finite word.
struct CyclicWord(Vec<usize>);

impl CylinderMeasure for CyclicWord {
    fn alphabet_size(&self) -> usize {
        2
    }

    fn cylinder(&self, block: &[usize]) -> f64 {
        let z = &self.0;
        let hits = (0..z.len())
            .filter(|&t| block.iter().enumerate().all(|(i, &a)| z[(t + i) % z.len()] == a))
            .count();
        hits as f64 / z.len() as f64
    }
}

fn two_bernoulli() -> HorseshoeResult {
    let mus = vec![
        MarkovMeasure::bernoulli(&[0.1, 0.9]).unwrap(),
        MarkovMeasure::bernoulli(&[0.9, 0.1]).unwrap(),
    ];
    multi_horseshoe(&HorseshoeRequest::new(mus, 0.1, 0.1)).unwrap()
}

fn edges(h: &Horseshoe) -> HashSet<(usize, usize)> {
    let s = &h.sft;
    (0..s.alphabet_size())
        .flat_map(|i| s.successors(i).iter().map(move |&j| (i, j)))
        .collect()
}

#[test]
fn sub_horseshoes_embed_in_the_union() {
    let res = two_bernoulli();
    let ambient = edges(&res.lambda);
    for sub in &res.lambda_i {
        for (u, v) in edges(sub) {
            assert!(ambient.contains(&(sub.nodes[u], sub.nodes[v])));
        }
        for (u, &node) in sub.nodes.iter().enumerate() {
            assert_eq!(sub.labels[u], res.lambda.labels[node]);
        }
    }
}

#[test]
fn every_horseshoe_is_irreducible_with_exact_entropy() {
    let res = two_bernoulli();
    for h in std::iter::once(&res.lambda).chain(&res.lambda_i) {
        assert!(structure_profile(&h.sft).irreducible);
        let graph = topological_entropy(&h.sft).unwrap();
        assert!((graph - h.entropy).abs() < 1e-9, "{graph} vs {}", h.entropy);
        let direct = h.word_count.ln() / h.word_length as f64;
        assert!((direct - h.entropy).abs() < 1e-12);
    }
}

#[test]
fn paths_project_to_admissible_words_that_return_to_the_marker() {
    let res = two_bernoulli();
    let base = Sft::full_shift(2);
    let n = res.block_length;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..2 {
        let glued: Vec<usize> = (0..4).flat_map(|_| res.sample_word(i, &mut rng)).collect();
        assert!(base.is_cyclically_admissible(&glued));
        for t in (0..glued.len()).step_by(n) {
            assert!(glued[t..].starts_with(&res.marker));
        }
    }
}

#[test]
fn long_words_have_profiles_near_their_measure() {
    let res = two_bernoulli();
    let zeta = 0.1;
    let mus = [
        MarkovMeasure::bernoulli(&[0.1, 0.9]).unwrap(),
        MarkovMeasure::bernoulli(&[0.9, 0.1]).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (i, mu) in mus.iter().enumerate() {
        for _ in 0..5 {
            let z: Vec<usize> = (0..10).flat_map(|_| res.sample_word(i, &mut rng)).collect();
            let d = rho_distance(&CyclicWord(z), mu, 1e-6);
            assert!(d < zeta + 0.05, "set {i}: distance {d}");
        }
    }
}

#[test]
fn listed_words_belong_to_their_sets() {
    let res = two_bernoulli();
    for i in 0..2 {
        let words = res.words(i, 5);
        assert_eq!(words.len(), 5);
        for w in &words {
            assert_eq!(w.len(), res.word_length);
            assert!(w.starts_with(&res.marker) && w.ends_with(&res.marker));
        }
        let mut sorted = words.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, words);
    }
}
