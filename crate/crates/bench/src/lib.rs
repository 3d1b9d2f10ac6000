//! Shared fixtures for the criterion benches.

use chatir_core::dialog::{Dialog, Round};
use chatir_core::index::EmbeddingCorpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-major `n * dim` uniform values in `[-1, 1)`.
pub fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

pub fn random_corpus(n: usize, dim: usize, seed: u64) -> EmbeddingCorpus {
    let ids = (0..n).map(|i| format!("img-{i:06}")).collect();
    EmbeddingCorpus::from_flat(ids, random_rows(n, dim, seed), dim).expect("valid fixture")
}

/// A dialog with `rounds` short question/answer pairs.
pub fn sample_dialog(rounds: usize) -> Dialog {
    let rounds = (0..rounds)
        .map(|i| Round::new(format!("is there anything on the left side number {i}?"), format!("yes a small red object {i}")))
        .collect();
    Dialog::with_rounds("a man riding a bicycle down a busy street", rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chatir_core::index::Retriever;

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(random_rows(3, 4, 1), random_rows(3, 4, 1));
        assert_ne!(random_rows(3, 4, 1), random_rows(3, 4, 2));
        let c = random_corpus(10, 8, 0);
        assert_eq!((c.len(), c.dim()), (10, 8));
        assert_eq!(sample_dialog(10).rounds.len(), 10);
    }
}
