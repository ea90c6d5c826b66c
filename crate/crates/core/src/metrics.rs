//! Risk evaluation against the planted model, Monte-Carlo cross-checks, and
//! the per-client gradient-descent baseline.
//!
//! For quadratic loss with isotropic features the excess population risk of
//! `(U, V)` over the planted `(U*, V*)` has the closed form
//! `(1/n) Σ_i ‖U v_i - U* v*_i‖²`, which is what [`excess_population_risk`]
//! evaluates; [`monte_carlo_risk`] estimates the same quantity from fresh
//! draws and exists to keep the closed form honest.

use alloc::vec::Vec;
use thiserror::Error;

use crate::mat::{self, Mat};
use crate::rng::{Purpose, StreamKey};
use crate::subspace;
use crate::synth::{
    label_sign, sample_ball, ClassProblem, ClientDataset, FeatureDistribution, GroundTruthModel,
    MarginStyle,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("local GD diverged on client {client} after {steps} steps")]
    Diverged { client: usize, steps: usize },
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
}

/// Closed-form excess population risk `(1/n) Σ_i ‖U v_i - U* v*_i‖²` for a
/// (not necessarily orthonormal) `d x k` embedding and `n x k` heads.
pub fn excess_population_risk(u: &Mat, heads: &Mat, model: &GroundTruthModel) -> f64 {
    assert_eq!(u.rows(), model.dim(), "embedding dimension mismatch");
    assert_eq!(u.cols(), heads.cols(), "head dimension mismatch");
    assert_eq!(heads.rows(), model.n_users(), "one head per user required");
    let n = heads.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let w = u.matvec(heads.row(i));
        let w_star = model.optimal_weights(i);
        let diff = mat::sub_vec(&w, &w_star);
        acc += mat::dot(&diff, &diff);
    }
    acc / n as f64
}

/// Excess risk of per-client weight vectors `w_i` directly (the `k = d`
/// identity lift used by the local baseline).
pub fn excess_risk_from_weights(weights: &Mat, model: &GroundTruthModel) -> f64 {
    assert_eq!(weights.cols(), model.dim());
    assert_eq!(weights.rows(), model.n_users());
    let n = weights.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let diff = mat::sub_vec(weights.row(i), &model.optimal_weights(i));
        acc += mat::dot(&diff, &diff);
    }
    acc / n as f64
}

/// Monte-Carlo excess risk: the empirical mean of `(y - ⟨x, U v_i⟩)² - R²`
/// over fresh draws, averaged over users. `n_samples` is the total budget,
/// split evenly (at least one draw per user).
pub fn monte_carlo_risk(
    u: &Mat,
    heads: &Mat,
    model: &GroundTruthModel,
    dist: &FeatureDistribution,
    n_samples: usize,
    key: StreamKey,
) -> f64 {
    assert!(n_samples >= 1);
    let n = heads.rows();
    let per_user = (n_samples / n).max(1);
    let r2 = model.noise_r * model.noise_r;
    let mut acc = 0.0;
    for i in 0..n {
        let w = u.matvec(heads.row(i));
        let w_star = model.optimal_weights(i);
        let mut rng = StreamKey::new(key.seed, Purpose::MonteCarlo)
            .client(i as u64)
            .rng();
        let mut user_acc = 0.0;
        for _ in 0..per_user {
            let x = dist.sample(&mut rng);
            let noise: f64 = if model.noise_r > 0.0 {
                model.noise_r * rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
            } else {
                0.0
            };
            let y = mat::dot(&x, &w_star) + noise;
            let resid = y - mat::dot(&x, &w);
            user_acc += resid * resid - r2;
        }
        acc += user_acc / per_user as f64;
    }
    acc / n as f64
}

/// Monte-Carlo population 0-1 loss `P[y ⟨x, U v_i⟩ <= 0]` on fresh draws
/// from the classification distribution (margin conditioning included).
/// A zero head scores zero everywhere and therefore incurs loss 1, by the
/// `score <= 0` convention.
pub fn classification_population_loss(
    u: &Mat,
    heads: &Mat,
    problem: &ClassProblem,
    n_samples: usize,
    key: StreamKey,
) -> f64 {
    assert!(n_samples >= 1);
    let n = heads.rows();
    let d = problem.u_star.ambient_dim();
    let per_user = (n_samples / n).max(1);
    let mut acc = 0.0;
    for i in 0..n {
        let w = u.matvec(heads.row(i));
        let w_star = problem.optimal_weights(i);
        let mut rng = StreamKey::new(key.seed, Purpose::MonteCarlo)
            .client(i as u64)
            .rng();
        let mut errors = 0usize;
        let mut kept = 0usize;
        let mut attempts = 0usize;
        while kept < per_user {
            let x = sample_ball(d, problem.radius, &mut rng);
            attempts += 1;
            let true_score = mat::dot(&x, &w_star);
            let keep = match problem.margin {
                MarginStyle::Natural => true,
                MarginStyle::EnforceMargin(rho) => true_score.abs() >= rho,
            };
            if !keep {
                // Rejection sampling mirrors the data distribution; guard
                // against a margin that the evaluation can never meet.
                assert!(
                    attempts < 1000 * per_user.max(1000),
                    "evaluation margin rejection rate too high"
                );
                continue;
            }
            kept += 1;
            let y = label_sign(true_score);
            if y * mat::dot(&x, &w) <= 0.0 {
                errors += 1;
            }
        }
        acc += errors as f64 / per_user as f64;
    }
    acc / n as f64
}

/// Step-size rule for the local baseline: `1/(2 λ_max)` of the per-client
/// Gram matrix `(1/m) XᵀX`, or a fixed caller-supplied rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GdRate {
    AutoHalfInverseLipschitz,
    Fixed(f64),
}

/// Per-client full-batch gradient descent on `w ∈ ℝᵈ` from `w = 0`, each
/// client fitting its own least-squares objective in isolation. Returns the
/// `n x d` matrix of final weight vectors.
///
/// Declares divergence when a client's training loss increases five steps in
/// a row.
pub fn local_gd_baseline(
    clients: &[ClientDataset],
    steps: usize,
    rate: GdRate,
) -> Result<Mat, MetricsError> {
    if let GdRate::Fixed(lr) = rate {
        if !(lr > 0.0) {
            return Err(MetricsError::InvalidLearningRate(lr));
        }
    }
    let d = clients[0].features.cols();
    let mut weights = Mat::zeros(clients.len(), d);
    for (row, c) in clients.iter().enumerate() {
        let m = c.n_samples() as f64;
        let x = &c.features;
        let lr = match rate {
            GdRate::Fixed(lr) => lr,
            GdRate::AutoHalfInverseLipschitz => {
                let sigma = subspace::spectral_norm(x);
                let lambda_max = sigma * sigma / m;
                if lambda_max == 0.0 {
                    continue; // all-zero features: w stays 0
                }
                1.0 / (2.0 * lambda_max)
            }
        };
        let mut w = alloc::vec![0.0; d];
        let loss = |w: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..c.n_samples() {
                let r = mat::dot(x.row(i), w) - c.labels[i];
                acc += r * r;
            }
            acc / m
        };
        let mut prev_loss = loss(&w);
        // Rounding floor: below this the iterate has interpolated and loss
        // wobble is noise, not divergence.
        let noise_floor = 1e-13 * (prev_loss + 1.0);
        let mut rising = 0usize;
        for step in 0..steps {
            let mut residuals = x.matvec(&w);
            for (r, y) in residuals.iter_mut().zip(&c.labels) {
                *r -= y;
            }
            let grad = x.tr_matvec(&residuals);
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= lr * 2.0 * gi / m;
            }
            let cur = loss(&w);
            if cur > prev_loss * (1.0 + 1e-9) && cur > noise_floor {
                rising += 1;
                if rising >= 5 {
                    return Err(MetricsError::Diverged {
                        client: c.client_id,
                        steps: step + 1,
                    });
                }
            } else {
                rising = 0;
            }
            prev_loss = cur;
        }
        weights.row_mut(row).copy_from_slice(&w);
    }
    Ok(weights)
}

/// Summary row: seed-averaged dist decay of a trace, used by the harness.
pub fn geometric_decay_fit(dists: &[f64]) -> Option<f64> {
    // Median per-round ratio; robust to a noisy floor.
    let mut ratios: Vec<f64> = dists
        .windows(2)
        .filter(|w| w[0] > 1e-12)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(|a, b| a.total_cmp(b));
    Some(ratios[ratios.len() / 2])
}
