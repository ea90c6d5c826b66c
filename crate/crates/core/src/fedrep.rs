//! Federated alternating minimization for the shared embedding: per-client
//! exact least-squares head updates on one batch, embedding gradients on a
//! disjoint batch, and a clipped-noisy server aggregation step followed by QR
//! re-orthonormalization. After the final round each client fits its head on
//! its held-out half, and new clients can be onboarded against the frozen
//! embedding with no further privacy spend.
//!
//! With noise off and an infinite clip bound the same loop *is* the
//! non-private baseline; no separate implementation exists, and a test pins
//! the two configurations to bit-identical outputs.

use alloc::vec::Vec;
use thiserror::Error;

use crate::dp::{self, NoiseScale};
use crate::init::{self, InitError, InitReport};
use crate::mat::{self, Mat};
use crate::rng::{Purpose, StreamKey};
use crate::subspace::{self, OrthonormalBasis, SubspaceError, UpperTriangularFactor};
use crate::synth::ClientDataset;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Condition-number ceiling on the projected Gram matrix `UᵀXᵀXU` beyond
/// which the exact normal-equations solve is refused.
pub const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FedRepError {
    #[error("projected gram matrix is ill-conditioned (cond={cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("client {client} has {have} scheduled batches, needs {need}")]
    InsufficientBatches {
        client: usize,
        have: usize,
        need: usize,
    },
    #[error("no clients supplied")]
    NoClients,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    Init(#[from] InitError),
}

/// How the shared embedding is initialized.
#[derive(Debug, Clone)]
pub enum InitMode {
    /// Use a caller-supplied basis (e.g. from a previous run).
    Provided(OrthonormalBasis),
    /// Run the private spectral initialization on the clients' `S⁰` halves.
    PrivateInit {
        k: usize,
        psi_init: f64,
        noise: NoiseScale,
    },
    /// QR factor of a seeded Gaussian draw.
    RandomOrthonormal { k: usize },
}

/// Training configuration for one run.
#[derive(Debug, Clone)]
pub struct FedRepConfig {
    /// Server learning rate η.
    pub eta: f64,
    /// Number of alternating rounds T.
    pub rounds: usize,
    /// Per-batch sample count b.
    pub batch_size: usize,
    /// Per-user gradient clip bound ψ; `f64::INFINITY` disables clipping.
    pub clip_psi: f64,
    /// Per-round Gaussian noise on the aggregated gradient.
    pub noise: NoiseScale,
    /// Optional lower bound λ ≤ σ_min,* (client-diversity knob).
    pub sigma_min_bound: Option<f64>,
    /// Optional upper bound Λ ≥ σ_max,*; `eta_from_sigma_max_bound` turns it
    /// into the theoretical step size.
    pub sigma_max_bound: Option<f64>,
    pub init: InitMode,
}

impl FedRepConfig {
    pub fn validate(&self) -> Result<(), FedRepError> {
        assert!(self.eta > 0.0, "learning rate must be positive");
        if let (Some(lo), Some(hi)) = (self.sigma_min_bound, self.sigma_max_bound) {
            assert!(
                hi >= lo && lo > 0.0,
                "need sigma_max_bound >= sigma_min_bound > 0"
            );
        }
        Ok(())
    }
}

/// The theoretical step size `η = 1/(2Λ²)` for a known spectral upper bound.
pub fn eta_from_sigma_max_bound(sigma_max_bound: f64) -> f64 {
    1.0 / (2.0 * sigma_max_bound * sigma_max_bound)
}

/// Suggested round count `T = (Λ²/λ²)·ln(n³)` with its unspecified constant
/// fixed at one. Advisory only; callers decide whether to apply it.
pub fn suggested_rounds(sigma_max_bound: f64, sigma_min_bound: f64, n_users: usize) -> usize {
    let ratio = (sigma_max_bound * sigma_max_bound) / (sigma_min_bound * sigma_min_bound);
    let t = ratio * ((n_users as f64).powi(3)).ln();
    t.ceil().max(1.0) as usize
}

/// Current shared embedding with provenance.
#[derive(Debug, Clone)]
pub struct EmbeddingState {
    pub basis: OrthonormalBasis,
    /// Rounds applied so far.
    pub round: usize,
    /// Triangular factor of the last re-orthonormalization.
    pub r_factor: UpperTriangularFactor,
}

impl EmbeddingState {
    pub fn fresh(basis: OrthonormalBasis) -> Self {
        let k = basis.rank();
        Self {
            basis,
            round: 0,
            r_factor: UpperTriangularFactor::new(Mat::identity(k)),
        }
    }
}

/// One user's personalized head.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalHead {
    pub v: Vec<f64>,
    pub client_id: usize,
    /// Set when the batch was too small or degenerate for the exact solve
    /// and the minimum-norm pseudoinverse solution was used instead.
    pub used_pseudoinverse: bool,
}

/// Per-round diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct RoundStats {
    pub max_grad_norm: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    /// Round index; the row describes the state after this round ran.
    pub round: usize,
    /// Distance to the planted embedding, when ground truth was supplied.
    pub dist_to_u_star: Option<f64>,
    pub max_grad_norm: f64,
    pub clip_fraction: f64,
}

/// Per-round scalar trace of a training run.
#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    /// Distance of the initialization to the planted embedding.
    pub init_dist: Option<f64>,
    pub rows: Vec<TraceRow>,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: EmbeddingState,
    pub heads: Vec<LocalHead>,
    pub trace: TraceLog,
    /// Present when the run used the private spectral initialization.
    pub init_report: Option<InitReport>,
}

/// Solves the k x k symmetric positive semidefinite system `G v = rhs`
/// through an eigendecomposition. Returns the solution and whether the
/// pseudoinverse path was taken.
fn solve_gram(
    g: &Mat,
    rhs: &[f64],
    allow_pseudoinverse: bool,
) -> Result<(Vec<f64>, bool), FedRepError> {
    let k = g.rows();
    let eig = subspace::symmetric_eigen(g)?;
    let lambda_max = eig.values[0].max(0.0);
    let lambda_min = eig.values[k - 1];
    let well_conditioned = lambda_min > 0.0 && lambda_max / lambda_min < COND_LIMIT;
    if !well_conditioned && !allow_pseudoinverse {
        let cond = if lambda_min > 0.0 {
            lambda_max / lambda_min
        } else {
            f64::INFINITY
        };
        return Err(FedRepError::IllConditioned { cond });
    }
    let cutoff = 1e-12 * lambda_max;
    let mut v = alloc::vec![0.0; k];
    for j in 0..k {
        let lambda = eig.values[j];
        if lambda <= cutoff || lambda <= 0.0 {
            continue;
        }
        let q = eig.vectors.col(j);
        let coeff = mat::dot(&q, rhs) / lambda;
        for (vi, qi) in v.iter_mut().zip(&q) {
            *vi += coeff * qi;
        }
    }
    Ok((v, !well_conditioned))
}

/// Exact least-squares head `v = (UᵀXᵀXU)⁻¹ UᵀXᵀy` on one batch.
///
/// Fails with [`FedRepError::IllConditioned`] when the projected Gram matrix
/// has condition number at least 1e12 (b < k or degenerate features); callers
/// that can tolerate the minimum-norm solution use
/// [`local_head_solve_min_norm`] instead.
pub fn local_head_solve(
    u: &OrthonormalBasis,
    x: &Mat,
    y: &[f64],
    client_id: usize,
) -> Result<LocalHead, FedRepError> {
    if x.rows() == 0 {
        return Err(FedRepError::EmptyDataset);
    }
    let a = x.matmul(u.cols());
    let gram = a.tr_mul(&a);
    let rhs = a.tr_matvec(y);
    let (v, _) = solve_gram(&gram, &rhs, false)?;
    Ok(LocalHead {
        v,
        client_id,
        used_pseudoinverse: false,
    })
}

/// Head solve with a minimum-norm pseudoinverse fallback, flagged in the
/// result. This is the path the training loop uses, since b can drop below k
/// in small-sample regimes.
pub fn local_head_solve_min_norm(
    u: &OrthonormalBasis,
    x: &Mat,
    y: &[f64],
    client_id: usize,
) -> LocalHead {
    assert!(x.rows() > 0, "head solve needs at least one sample");
    let a = x.matmul(u.cols());
    let gram = a.tr_mul(&a);
    let rhs = a.tr_matvec(y);
    let (v, used_pseudoinverse) =
        solve_gram(&gram, &rhs, true).expect("pseudoinverse solve cannot fail on finite input");
    LocalHead {
        v,
        client_id,
        used_pseudoinverse,
    }
}

/// Gradient of the batch-average quadratic loss in the embedding:
/// `(2/b) Σ_j (⟨x_j, Uv⟩ - y_j) · x_j vᵀ`.
pub fn embedding_gradient(u: &OrthonormalBasis, v: &[f64], x: &Mat, y: &[f64]) -> Mat {
    let b = x.rows();
    assert!(b > 0 && b == y.len());
    let w = u.cols().matvec(v);
    let mut residuals = x.matvec(&w);
    for (r, yi) in residuals.iter_mut().zip(y) {
        *r -= yi;
    }
    let xtr = x.tr_matvec(&residuals);
    Mat::outer(&xtr, v).scale(2.0 / b as f64)
}

/// Fixed-shape pairwise summation tree (split at the midpoint), so the
/// aggregate does not depend on accumulation chunking.
fn pairwise_sum(mats: &[Mat]) -> Mat {
    match mats.len() {
        0 => panic!("pairwise_sum of empty slice"),
        1 => mats[0].clone(),
        n => {
            let mid = n / 2;
            pairwise_sum(&mats[..mid]).add(&pairwise_sum(&mats[mid..]))
        }
    }
}

/// One server aggregation step: clip each gradient to ψ, average in client
/// order, add one Gaussian noise matrix, take the η step, re-orthonormalize.
pub fn server_round(
    state: &EmbeddingState,
    client_grads: &[Mat],
    cfg: &FedRepConfig,
    noise_key: StreamKey,
) -> Result<(EmbeddingState, RoundStats), FedRepError> {
    if client_grads.is_empty() {
        return Err(FedRepError::NoClients);
    }
    let n = client_grads.len();
    let (d, k) = state.basis.cols().shape();

    let mut max_grad_norm = 0.0_f64;
    let mut clipped_count = 0usize;
    let clipped: Vec<Mat> = client_grads
        .iter()
        .map(|g| {
            assert_eq!(g.shape(), (d, k), "gradient shape mismatch");
            max_grad_norm = max_grad_norm.max(g.frob_norm());
            if cfg.clip_psi.is_finite() {
                let mut c = g.clone();
                if dp::clip_frobenius_in_place(&mut c, cfg.clip_psi) {
                    clipped_count += 1;
                }
                c
            } else {
                g.clone()
            }
        })
        .collect();

    let mut step = pairwise_sum(&clipped).scale(1.0 / n as f64);
    if !cfg.noise.is_off() {
        let noise = dp::gaussian_noise_matrix(d, k, &cfg.noise, noise_key);
        step = step.add(&noise);
    }

    let mut u_hat = state.basis.cols().clone();
    u_hat.add_scaled_in_place(&step, -cfg.eta);
    let (basis, r_factor) = subspace::qr_orthonormalize(&u_hat)?;

    Ok((
        EmbeddingState {
            basis,
            round: state.round + 1,
            r_factor,
        },
        RoundStats {
            max_grad_norm,
            clip_fraction: clipped_count as f64 / n as f64,
        },
    ))
}

fn resolve_init(
    clients: &[ClientDataset],
    cfg: &FedRepConfig,
    rng_seed: u64,
) -> Result<(OrthonormalBasis, Option<InitReport>), FedRepError> {
    let d = clients[0].features.cols();
    match &cfg.init {
        InitMode::Provided(basis) => {
            assert_eq!(basis.ambient_dim(), d, "init basis dimension mismatch");
            Ok((basis.clone(), None))
        }
        InitMode::PrivateInit { k, psi_init, noise } => {
            let key = StreamKey::new(rng_seed, Purpose::InitNoise);
            let report = init::private_init(clients, *k, *psi_init, noise, key)?;
            Ok((report.basis.clone(), Some(report)))
        }
        InitMode::RandomOrthonormal { k } => {
            let mut rng = StreamKey::new(rng_seed, Purpose::RandomInit).rng();
            let g = Mat::from_fn(d, *k, |_, _| {
                rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
            });
            let (basis, _) = subspace::qr_orthonormalize(&g)?;
            Ok((basis, None))
        }
    }
}

/// Runs the full training loop: T alternating rounds over all clients, then
/// per-client heads on the held-out halves. When `u_star` is supplied the
/// trace records the per-round distance to it.
pub fn train(
    clients: &[ClientDataset],
    cfg: &FedRepConfig,
    u_star: Option<&OrthonormalBasis>,
    rng_seed: u64,
) -> Result<TrainOutput, FedRepError> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(FedRepError::NoClients);
    }
    for c in clients {
        if c.batch_schedule.len() < 2 * cfg.rounds {
            return Err(FedRepError::InsufficientBatches {
                client: c.client_id,
                have: c.batch_schedule.len(),
                need: 2 * cfg.rounds,
            });
        }
    }

    let (basis, init_report) = resolve_init(clients, cfg, rng_seed)?;
    let mut state = EmbeddingState::fresh(basis);
    let mut trace = TraceLog {
        init_dist: u_star
            .map(|u| subspace::principal_dist(&state.basis, u).expect("shape checked")),
        rows: Vec::with_capacity(cfg.rounds),
    };

    for t in 0..cfg.rounds {
        let grads: Vec<Mat> = clients
            .iter()
            .map(|c| {
                let (head_idx, grad_idx) = c.round_batches(t);
                let (hx, hy) = c.gather(head_idx);
                let head = local_head_solve_min_norm(&state.basis, &hx, &hy, c.client_id);
                let (gx, gy) = c.gather(grad_idx);
                embedding_gradient(&state.basis, &head.v, &gx, &gy)
            })
            .collect();
        let noise_key = StreamKey::new(rng_seed, Purpose::TrainingNoise).round(t as u64);
        let (next, stats) = server_round(&state, &grads, cfg, noise_key)?;
        state = next;
        trace.rows.push(TraceRow {
            round: t,
            dist_to_u_star: u_star
                .map(|u| subspace::principal_dist(&state.basis, u).expect("shape checked")),
            max_grad_norm: stats.max_grad_norm,
            clip_fraction: stats.clip_fraction,
        });
    }

    let heads: Vec<LocalHead> = clients
        .iter()
        .map(|c| {
            let (x, y) = c.gather(&c.holdout_indices());
            local_head_solve_min_norm(&state.basis, &x, &y, c.client_id)
        })
        .collect();

    Ok(TrainOutput {
        state,
        heads,
        trace,
        init_report,
    })
}

/// Fits a head for a client that did not participate in training, against
/// the frozen embedding. A local computation: no privacy budget is spent.
pub fn onboard_new_client(
    u_priv: &OrthonormalBasis,
    dataset: &ClientDataset,
) -> Result<LocalHead, FedRepError> {
    if dataset.n_samples() == 0 {
        return Err(FedRepError::EmptyDataset);
    }
    let all: Vec<usize> = (0..dataset.n_samples()).collect();
    let (x, y) = dataset.gather(&all);
    local_head_solve(u_priv, &x, &y, dataset.client_id)
}
