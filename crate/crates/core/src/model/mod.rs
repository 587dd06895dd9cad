//! Transfer functions, transfer matrices, state-space realisations and the
//! network data model.

pub mod network;
pub mod poly;
pub mod rational;
pub mod statespace;
pub mod tfmatrix;

pub use network::{
    noise_from_pattern, parse_network, validate_network, CheckItem, EntryDoc, NetworkDocument,
    NetworkSpec, NoiseDoc, ValidationReport,
};
pub use rational::RationalTransfer;
pub use statespace::{StateSpace, MINREAL_TOL, STABILITY_MARGIN};
pub use tfmatrix::{FrequencyResponse, TransferMatrix};

/// `n` uniform points on `[0, pi]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| std::f64::consts::PI * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
