//! Shared fixtures for the benchmarks.

use tsr_core::scorefield::{make_checkerboard, ClassConditional, EmpiricalField, GaussianMixture};

/// Six 1D modes two apart, split into two classes of three.
pub fn six_mode_classes() -> ClassConditional {
    let means = (0..6).map(|i| vec![-5.0 + 2.0 * i as f64]).collect();
    let mix = GaussianMixture::uniform(means, 0.1).expect("valid mixture");
    ClassConditional::new(mix, vec![vec![0, 1, 2], vec![3, 4, 5]]).expect("valid classes")
}

pub fn checkerboard(n: usize) -> EmpiricalField {
    make_checkerboard(n, 0).expect("valid dataset")
}
