//! Private spectral initialization of the shared embedding.
//!
//! Each client reduces its `S⁰` half to the label-weighted cross-term
//! statistic `Z_i = (1/(m'(m'-1))) Σ_{j₁≠j₂} y_{j₁} y_{j₂} x_{j₁} x_{j₂}ᵀ`,
//! whose expectation is the rank-one matrix `(U* v*_i)(U* v*_i)ᵀ`. The server
//! clips each `Z_i` in Frobenius norm, averages, adds Gaussian noise,
//! symmetrizes, and takes the top-k eigenvectors.
//!
//! The statistic is computed through the rank-one identity
//! `Σ_{j₁≠j₂} y_{j₁} y_{j₂} x_{j₁} x_{j₂}ᵀ = s sᵀ - Σ_j y_j² x_j x_jᵀ`
//! with `s = Σ_j y_j x_j`, which costs `O(m d²)` instead of the literal
//! `O(m² d²)` double sum; a test pins the two routes to agree exactly.

use thiserror::Error;

use crate::dp::{self, NoiseScale};
use crate::mat::Mat;
use crate::rng::StreamKey;
use crate::subspace::{self, OrthonormalBasis, SubspaceError};
use crate::synth::ClientDataset;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InitError {
    #[error("client {client} has {have} samples in S0, needs at least 2")]
    TooFewSamples { client: usize, have: usize },
    #[error("no clients supplied")]
    NoClients,
    #[error("clip bound must be positive, got {0}")]
    InvalidClipBound(f64),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
}

/// Output of the private initialization with its diagnostics.
#[derive(Debug, Clone)]
pub struct InitReport {
    pub basis: OrthonormalBasis,
    /// Fraction of clients whose statistic hit the clip bound.
    pub clip_fraction: f64,
    /// Set when the k-th eigengap of the aggregate was below 1e-12.
    pub degenerate_gap: bool,
    /// Per-entry noise standard deviation that was applied.
    pub sigma_init: f64,
}

/// The per-client initialization statistic over the `S⁰` half.
///
/// Exactly equal to the pair double sum with unbiased normalization
/// `1/(m'(m'-1))` over ordered pairs, where `m' = |S⁰|`.
pub fn client_init_statistic(dataset: &ClientDataset) -> Result<Mat, InitError> {
    let m_half = dataset.split_index;
    if m_half < 2 {
        return Err(InitError::TooFewSamples {
            client: dataset.client_id,
            have: m_half,
        });
    }
    let d = dataset.features.cols();

    // s = Σ y_j x_j and the diagonal-pair correction Σ y_j² x_j x_jᵀ.
    let mut s = alloc::vec![0.0; d];
    let mut correction = Mat::zeros(d, d);
    for j in 0..m_half {
        let y = dataset.labels[j];
        let x = dataset.features.row(j);
        for a in 0..d {
            s[a] += y * x[a];
            let ya = y * y * x[a];
            for b in 0..d {
                correction[(a, b)] += ya * x[b];
            }
        }
    }
    let mut z = Mat::outer(&s, &s);
    z.add_scaled_in_place(&correction, -1.0);
    z.scale_in_place(1.0 / (m_half as f64 * (m_half as f64 - 1.0)));
    Ok(z)
}

/// Aggregates clipped per-client statistics, adds symmetrized Gaussian noise,
/// and extracts the top-k eigenvectors.
///
/// The noise draw is a full `d x d` matrix; the noised aggregate is
/// symmetrized as `(Ẑ + Ẑᵀ)/2` before the eigendecomposition, since
/// eigenvectors of an asymmetric matrix are not well defined. Pass
/// [`NoiseScale::off`] for the non-private variant.
pub fn private_init(
    clients: &[ClientDataset],
    k: usize,
    psi_init: f64,
    noise: &NoiseScale,
    rng_key: StreamKey,
) -> Result<InitReport, InitError> {
    if clients.is_empty() {
        return Err(InitError::NoClients);
    }
    if !(psi_init > 0.0) {
        return Err(InitError::InvalidClipBound(psi_init));
    }
    let d = clients[0].features.cols();
    let n = clients.len();

    let mut aggregate = Mat::zeros(d, d);
    let mut clipped_count = 0usize;
    for c in clients {
        let mut z = client_init_statistic(c)?;
        if dp::clip_frobenius_in_place(&mut z, psi_init) {
            clipped_count += 1;
        }
        aggregate.add_scaled_in_place(&z, 1.0);
    }
    aggregate.scale_in_place(1.0 / n as f64);

    if !noise.is_off() {
        let xi = dp::gaussian_noise_matrix(d, d, noise, rng_key);
        aggregate = aggregate.add(&xi);
    }
    let z_hat = aggregate.sym_part();

    let eig = subspace::top_k_eigvecs(&z_hat, k)?;
    Ok(InitReport {
        basis: eig.basis,
        clip_fraction: clipped_count as f64 / n as f64,
        degenerate_gap: eig.degenerate_gap,
        sigma_init: noise.sigma_hat,
    })
}
