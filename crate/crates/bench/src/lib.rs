//! Benchmark fixtures shared by the criterion targets.

use h2ncm_core::data::{gen_synthetic, SyntheticEpisode};
use h2ncm_core::{Split, SyntheticConfig};

/// Train and validation splits of a small synthetic dataset.
pub fn synthetic_splits(n_train: usize, n_val: usize) -> (Split, Split) {
    let d = gen_synthetic(&SyntheticConfig { n_train, n_val, n_test: 1, ..Default::default() })
        .expect("valid synthetic config");
    let eps = |v: &[SyntheticEpisode]| v.iter().map(|e| e.episode.clone()).collect();
    (
        Split::new(eps(&d.train), d.train_sets).expect("aligned sets"),
        Split::new(eps(&d.val), d.val_sets).expect("aligned sets"),
    )
}
