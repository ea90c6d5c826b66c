//! User-level differential privacy mechanisms: Frobenius clipping, the
//! Gaussian mechanism with zCDP composition accounting, and the exponential
//! mechanism over a finite candidate set.
//!
//! Two calibration modes are exposed for the training noise. `ZcdpExact`
//! solves the tight zero-concentrated-DP composition for the smallest noise
//! scale meeting the `(ε, δ)` target. `FixedConstant` applies the explicit
//! formula `σ̂ = ψ √T √(16 ln(1.25/δ)) / (nε)`, a looser calibration kept for
//! reproducing runs that were tuned against it.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::mat::Mat;
use crate::rng::StreamKey;

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DpError {
    #[error("infeasible privacy budget: epsilon must be positive, got {0}")]
    InfeasibleBudget(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("clip bound must be positive, got {0}")]
    InvalidClipBound(f64),
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("sensitivity must be positive, got {0}")]
    InvalidSensitivity(f64),
}

/// Privacy budget and clip bounds for one end-to-end run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    /// Training-phase clip bound ψ on per-user gradient Frobenius norm.
    pub clip_psi: f64,
    /// Initialization clip bound ψ_init on per-user statistic Frobenius norm.
    pub clip_psi_init: f64,
    /// Number of noisy training rounds the budget is composed over.
    pub rounds: usize,
    pub n_users: usize,
}

impl PrivacySpec {
    pub fn validate(&self) -> Result<(), DpError> {
        if !(self.epsilon > 0.0) {
            return Err(DpError::InfeasibleBudget(self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DpError::InvalidDelta(self.delta));
        }
        if !(self.clip_psi > 0.0) {
            return Err(DpError::InvalidClipBound(self.clip_psi));
        }
        if !(self.clip_psi_init > 0.0) {
            return Err(DpError::InvalidClipBound(self.clip_psi_init));
        }
        Ok(())
    }
}

/// How the per-entry Gaussian noise standard deviation was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Tight zCDP composition plus conversion to (ε, δ)-DP.
    ZcdpExact,
    /// The explicit `√(16 ln(1.25/δ))` formula; looser than the exact
    /// accountant by roughly the hidden composition constant.
    FixedConstant,
    /// No noise (non-private baseline).
    Off,
}

/// Per-entry Gaussian standard deviation with provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScale {
    pub sigma_hat: f64,
    pub mode: NoiseMode,
}

impl NoiseScale {
    pub fn off() -> Self {
        Self {
            sigma_hat: 0.0,
            mode: NoiseMode::Off,
        }
    }

    pub fn is_off(&self) -> bool {
        self.sigma_hat == 0.0
    }
}

/// Frobenius clipping `M · min{1, τ/‖M‖_F}`. The zero matrix passes through.
pub fn clip_frobenius(m: &Mat, tau: f64) -> Mat {
    assert!(tau > 0.0, "clip bound must be positive");
    let norm = m.frob_norm();
    if norm <= tau {
        m.clone()
    } else {
        m.scale(tau / norm)
    }
}

/// In-place variant; returns `true` when the bound was active.
pub fn clip_frobenius_in_place(m: &mut Mat, tau: f64) -> bool {
    assert!(tau > 0.0, "clip bound must be positive");
    let norm = m.frob_norm();
    if norm <= tau {
        false
    } else {
        m.scale_in_place(tau / norm);
        true
    }
}

/// zCDP-to-DP conversion `ε(ρ) = ρ + 2√(ρ ln(1/δ))`.
pub fn zcdp_to_eps(rho: f64, delta: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}

/// Per-entry noise scale for `rounds` Gaussian-mechanism releases, each with
/// user-level L2 sensitivity `clip_psi / n_users` (one user changes one
/// clipped summand of the average).
///
/// `ZcdpExact` solves `ρ + 2√(ρ ln(1/δ)) = ε` for the total zCDP budget
/// `ρ = T s²/(2σ̂²)` in closed form. `FixedConstant` evaluates
/// `σ̂ = ψ √T √(16 ln(1.25/δ)) / (nε)` directly.
pub fn calibrate_training_noise(
    spec: &PrivacySpec,
    mode: NoiseMode,
) -> Result<NoiseScale, DpError> {
    if mode == NoiseMode::Off {
        return Ok(NoiseScale::off());
    }
    spec.validate()?;
    if spec.epsilon.is_infinite() {
        return Ok(NoiseScale {
            sigma_hat: 0.0,
            mode,
        });
    }
    let n = spec.n_users as f64;
    let t = spec.rounds as f64;
    let sigma_hat = match mode {
        NoiseMode::ZcdpExact => {
            let l = (1.0 / spec.delta).ln();
            // ε(ρ) is increasing in ρ; the root of ρ + 2√(ρL) = ε is
            // √ρ = √(L + ε) - √L.
            let sqrt_rho = (l + spec.epsilon).sqrt() - l.sqrt();
            let rho = sqrt_rho * sqrt_rho;
            let sensitivity = spec.clip_psi / n;
            sensitivity * (t / (2.0 * rho)).sqrt()
        }
        NoiseMode::FixedConstant => {
            spec.clip_psi * t.sqrt() * (16.0 * (1.25 / spec.delta).ln()).sqrt() / (n * spec.epsilon)
        }
        NoiseMode::Off => unreachable!(),
    };
    Ok(NoiseScale { sigma_hat, mode })
}

/// Initialization noise scale `σ̂_init = ψ_init √(2 ln(1.25/δ)) / (nε)`.
pub fn calibrate_init_noise(spec: &PrivacySpec) -> Result<NoiseScale, DpError> {
    spec.validate()?;
    if spec.epsilon.is_infinite() {
        return Ok(NoiseScale {
            sigma_hat: 0.0,
            mode: NoiseMode::FixedConstant,
        });
    }
    let n = spec.n_users as f64;
    let sigma = spec.clip_psi_init * (2.0 * (1.25 / spec.delta).ln()).sqrt() / (n * spec.epsilon);
    Ok(NoiseScale {
        sigma_hat: sigma,
        mode: NoiseMode::FixedConstant,
    })
}

/// Seed-deterministic matrix of i.i.d. `N(0, σ̂²)` entries. A zero scale
/// returns the zero matrix without consuming any randomness.
pub fn gaussian_noise_matrix(rows: usize, cols: usize, scale: &NoiseScale, key: StreamKey) -> Mat {
    if scale.sigma_hat == 0.0 {
        return Mat::zeros(rows, cols);
    }
    let mut rng = key.rng();
    Mat::from_fn(rows, cols, |_, _| {
        scale.sigma_hat * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Analytic selection weights of the exponential mechanism,
/// `w_i ∝ exp(ε s_i / (2 Δ))`, normalized to sum to one. Uses a max-score
/// shift so large scores cannot overflow.
pub fn exponential_weights(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
) -> Result<Vec<f64>, DpError> {
    if scores.is_empty() {
        return Err(DpError::EmptyCandidateSet);
    }
    if !(sensitivity > 0.0) {
        return Err(DpError::InvalidSensitivity(sensitivity));
    }
    if !(epsilon > 0.0) {
        return Err(DpError::InfeasibleBudget(epsilon));
    }
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let mut weights: Vec<f64> = scores
        .iter()
        .map(|&s| (epsilon * (s - max) / (2.0 * sensitivity)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Samples a candidate index with probability proportional to
/// `exp(ε · score / (2 · sensitivity))`.
pub fn exponential_mechanism(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
    key: StreamKey,
) -> Result<usize, DpError> {
    let weights = exponential_weights(scores, epsilon, sensitivity)?;
    let mut rng = key.rng();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}
