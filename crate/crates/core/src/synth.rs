//! Synthetic data generation: the planted model `(U*, V*)`, per-user labeled
//! regression datasets with their held-out split and per-round batch
//! schedule, and bounded-feature classification datasets.
//!
//! All sampling is keyed by `(seed, client_id, purpose)`, so a dataset is a
//! pure function of its coordinates: identical seeds reproduce bit-identical
//! data, and distinct clients draw from independent streams.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::mat::{self, Mat};
use crate::rng::{Purpose, StreamKey};
use crate::subspace::{self, OrthonormalBasis, SubspaceError};

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SynthError {
    #[error("need k <= min(d, n): k={k}, d={d}, n={n}")]
    InvalidRank { k: usize, d: usize, n: usize },
    #[error("noise level must be nonnegative, got {0}")]
    NegativeNoise(f64),
    #[error("sampled head matrix was rank deficient after {0} attempts")]
    HeadRankDeficient(usize),
    #[error("batch budget exceeded: 2*T*b = {need} > m/2 = {have}")]
    BatchBudgetExceeded { need: usize, have: usize },
    #[error("margin constraint infeasible: {accepted} of {attempts} draws accepted")]
    MarginInfeasible { accepted: usize, attempts: usize },
    #[error("feature radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
}

/// How per-user head vectors `v*_i` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadStyle {
    /// Rows i.i.d. `N(0, I_k)`.
    GaussianHeads,
    /// Gaussian rows rescaled to unit Euclidean norm.
    UnitScaledHeads,
}

/// Feature distributions with identity covariance and 1-sub-Gaussian tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    StandardGaussian,
    /// Independent ±1 coordinates.
    ScaledRademacher,
    /// Uniform on the sphere of radius √d.
    UniformSphereScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDistribution {
    pub kind: FeatureKind,
    pub dim: usize,
}

impl FeatureDistribution {
    pub fn gaussian(dim: usize) -> Self {
        Self {
            kind: FeatureKind::StandardGaussian,
            dim,
        }
    }

    /// Draws one feature vector.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self.kind {
            FeatureKind::StandardGaussian => {
                (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
            }
            FeatureKind::ScaledRademacher => (0..self.dim)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
            FeatureKind::UniformSphereScaled => {
                let mut x: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = mat::norm2(&x);
                let target = (self.dim as f64).sqrt();
                for v in &mut x {
                    *v *= target / norm;
                }
                x
            }
        }
    }
}

/// The planted model: orthonormal `U*`, per-user heads `V*`, label-noise
/// level, and the spectral quantities of `V*/√n` that drive convergence.
#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub u_star: OrthonormalBasis,
    /// `n x k`; row `i` is `v*_i`.
    pub v_star: Mat,
    pub noise_r: f64,
    /// `Γ = max_i ‖v*_i‖₂`.
    pub gamma_head: f64,
    /// k-th largest singular value of `V*/√n`; positive by the rank-k draw.
    pub sigma_min_star: f64,
    /// Largest singular value of `V*/√n`.
    pub sigma_max_star: f64,
}

impl GroundTruthModel {
    pub fn dim(&self) -> usize {
        self.u_star.ambient_dim()
    }

    pub fn rank(&self) -> usize {
        self.u_star.rank()
    }

    pub fn n_users(&self) -> usize {
        self.v_star.rows()
    }

    /// Condition number `σ_max,* / σ_min,*` of `V*/√n`.
    pub fn condition_number(&self) -> f64 {
        self.sigma_max_star / self.sigma_min_star
    }

    /// The optimal regressor `w*_i = U* v*_i` of user `i`.
    pub fn optimal_weights(&self, client: usize) -> Vec<f64> {
        self.u_star.cols().matvec(self.v_star.row(client))
    }
}

/// One user's labeled samples. The first `split_index` rows form the
/// training half `S⁰`, the rest the held-out half `S¹`. `batch_schedule`
/// holds `2T` pairwise-disjoint index sets of size `b` inside `S⁰`,
/// pre-partitioned once so that every round sees fresh samples.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: usize,
    /// `m x d` feature rows.
    pub features: Mat,
    pub labels: Vec<f64>,
    pub split_index: usize,
    pub batch_schedule: Vec<Vec<usize>>,
}

impl ClientDataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// Indices of the held-out half `S¹`.
    pub fn holdout_indices(&self) -> Vec<usize> {
        (self.split_index..self.n_samples()).collect()
    }

    /// The two disjoint batches `(B_{i,t}, B'_{i,t})` of round `t`.
    pub fn round_batches(&self, t: usize) -> (&[usize], &[usize]) {
        (&self.batch_schedule[2 * t], &self.batch_schedule[2 * t + 1])
    }

    /// Copies the rows named by `idx` into a dense `(X, y)` pair.
    pub fn gather(&self, idx: &[usize]) -> (Mat, Vec<f64>) {
        let d = self.features.cols();
        let x = Mat::from_fn(idx.len(), d, |i, j| self.features[(idx[i], j)]);
        let y = idx.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }
}

/// Samples `U*` as the QR factor of a Gaussian draw and `V*` by the chosen
/// head style, then records the derived spectral quantities.
///
/// A head draw whose `V*/√n` is numerically rank deficient is resampled up
/// to 10 times before failing.
pub fn gen_ground_truth(
    d: usize,
    k: usize,
    n: usize,
    head_style: HeadStyle,
    noise_r: f64,
    rng_seed: u64,
) -> Result<GroundTruthModel, SynthError> {
    if k == 0 || k > d || k > n {
        return Err(SynthError::InvalidRank { k, d, n });
    }
    if noise_r < 0.0 {
        return Err(SynthError::NegativeNoise(noise_r));
    }

    let mut urng = StreamKey::new(rng_seed, Purpose::GroundTruthEmbedding).rng();
    let gaussian = Mat::from_fn(d, k, |_, _| urng.sample(StandardNormal));
    let (u_star, _) = subspace::qr_orthonormalize(&gaussian)?;

    const MAX_ATTEMPTS: u64 = 10;
    for attempt in 0..MAX_ATTEMPTS {
        let mut vrng = StreamKey::new(rng_seed, Purpose::GroundTruthHeads)
            .round(attempt)
            .rng();
        let mut v_star = Mat::from_fn(n, k, |_, _| vrng.sample(StandardNormal));
        if head_style == HeadStyle::UnitScaledHeads {
            for i in 0..n {
                let norm = mat::norm2(v_star.row(i));
                for j in 0..k {
                    v_star[(i, j)] /= norm;
                }
            }
        }
        let scaled = v_star.scale(1.0 / (n as f64).sqrt());
        let gram = scaled.tr_mul(&scaled);
        let eig = subspace::symmetric_eigen(&gram)?;
        let sigma_max = eig.values[0].max(0.0).sqrt();
        let sigma_min = eig.values[k - 1].max(0.0).sqrt();
        if sigma_min <= 1e-12 * sigma_max {
            continue;
        }
        let gamma_head = (0..n)
            .map(|i| mat::norm2(v_star.row(i)))
            .fold(0.0, f64::max);
        return Ok(GroundTruthModel {
            u_star,
            v_star,
            noise_r,
            gamma_head,
            sigma_min_star: sigma_min,
            sigma_max_star: sigma_max,
        });
    }
    Err(SynthError::HeadRankDeficient(MAX_ATTEMPTS as usize))
}

/// Generates one user's dataset: `m` feature rows from `dist`, labels
/// `y = ⟨x, U* v*_i⟩ + ζ` with `ζ ~ N(0, R²)`, and a batch schedule of `2T`
/// size-`b` index sets inside `S⁰`.
///
/// The schedule comes from a seeded permutation of `S⁰` pre-partitioned into
/// `⌊(m/2)/b⌋` disjoint cells. While `2Tb <= m/2` every scheduled batch is a
/// fresh cell, so all `2T` batches are pairwise disjoint. When the sample
/// budget is shorter than that (the small-`m` regime, where `b = ⌊m/2T⌋`
/// exceeds the freshness budget), rounds cycle through the cells in order;
/// the two batches within a round are still always disjoint. A config whose
/// single round cannot fit two disjoint batches is rejected.
pub fn sample_client_data(
    model: &GroundTruthModel,
    dist: &FeatureDistribution,
    m: usize,
    rounds: usize,
    batch_size: usize,
    client_id: usize,
    rng_seed: u64,
) -> Result<ClientDataset, SynthError> {
    let half = m / 2;
    let cells = half.checked_div(batch_size).unwrap_or(0);
    if rounds > 0 && cells < 2 {
        return Err(SynthError::BatchBudgetExceeded {
            need: 2 * batch_size,
            have: half,
        });
    }
    assert_eq!(
        dist.dim,
        model.dim(),
        "feature dimension must match the model"
    );

    let key = StreamKey::new(rng_seed, Purpose::Features).client(client_id as u64);
    let mut frng = key.rng();
    let mut features = Mat::zeros(m, dist.dim);
    for i in 0..m {
        let x = dist.sample(&mut frng);
        features.row_mut(i).copy_from_slice(&x);
    }

    let w = model.optimal_weights(client_id);
    let mut nrng = StreamKey::new(rng_seed, Purpose::LabelNoise)
        .client(client_id as u64)
        .rng();
    let labels: Vec<f64> = (0..m)
        .map(|i| {
            let noise: f64 = if model.noise_r > 0.0 {
                model.noise_r * nrng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            mat::dot(features.row(i), &w) + noise
        })
        .collect();

    let mut perm: Vec<usize> = (0..half).collect();
    let mut srng = StreamKey::new(rng_seed, Purpose::BatchShuffle)
        .client(client_id as u64)
        .rng();
    for i in (1..perm.len()).rev() {
        let j = srng.random_range(0..=i);
        perm.swap(i, j);
    }
    let partition: Vec<Vec<usize>> = (0..cells)
        .map(|c| {
            let mut chunk: Vec<usize> = perm[c * batch_size..(c + 1) * batch_size].to_vec();
            chunk.sort_unstable();
            chunk
        })
        .collect();
    let batch_schedule: Vec<Vec<usize>> = (0..2 * rounds)
        .map(|j| partition[j % cells].clone())
        .collect();

    Ok(ClientDataset {
        client_id,
        features,
        labels,
        split_index: half,
        batch_schedule,
    })
}

/// Classification labels: `Natural` keeps every draw, `EnforceMargin(ρ)`
/// rejects samples with `|⟨x, U* v*_i⟩| < ρ` and redraws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginStyle {
    Natural,
    EnforceMargin(f64),
}

/// A classification ground truth: shared direction matrix, per-user heads,
/// feature ball radius, and the margin policy of the data distribution.
#[derive(Debug, Clone)]
pub struct ClassProblem {
    pub u_star: OrthonormalBasis,
    /// `n x k` heads; the optimal score of user `i` is `⟨x, U* v*_i⟩`.
    pub v_star: Mat,
    pub radius: f64,
    pub margin: MarginStyle,
}

impl ClassProblem {
    pub fn optimal_weights(&self, client: usize) -> Vec<f64> {
        self.u_star.cols().matvec(self.v_star.row(client))
    }
}

/// As [`ClientDataset`] but labels in `{-1, +1}` and features bounded in
/// Euclidean norm by `radius`. The first `split_index` rows are `S⁰`.
#[derive(Debug, Clone)]
pub struct BoundedClassDataset {
    pub client_id: usize,
    pub features: Mat,
    pub labels: Vec<f64>,
    pub radius: f64,
    pub split_index: usize,
}

impl BoundedClassDataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }
}

/// `sign` with the `sign(0) = +1` convention used for all labels.
pub fn label_sign(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Draws one point uniformly from the radius-`r` ball in `dim` dimensions.
pub fn sample_ball(dim: usize, r: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = mat::norm2(&x);
    let u: f64 = rng.random();
    let scale = r * u.powf(1.0 / dim as f64) / norm;
    for v in &mut x {
        *v *= scale;
    }
    x
}

/// Samples `n` users' classification datasets of `m` points each with labels
/// `sign(⟨x, U* v*_i⟩)`. Under `EnforceMargin(ρ)` each kept sample satisfies
/// `|⟨x, U* v*_i⟩| >= ρ`; fails with `MarginInfeasible` when fewer than 0.1%
/// of 10⁵ draws are accepted.
pub fn sample_class_data(
    problem: &ClassProblem,
    m: usize,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<BoundedClassDataset>, SynthError> {
    if problem.radius <= 0.0 {
        return Err(SynthError::InvalidRadius(problem.radius));
    }
    let d = problem.u_star.ambient_dim();
    let mut out = Vec::with_capacity(n);
    for client_id in 0..n {
        let w = problem.optimal_weights(client_id);
        let mut rng = StreamKey::new(rng_seed, Purpose::ClassFeatures)
            .client(client_id as u64)
            .rng();
        let mut features = Mat::zeros(m, d);
        let mut labels = vec![0.0; m];
        let mut attempts = 0usize;
        let mut accepted = 0usize;
        let mut row = 0usize;
        while row < m {
            let x = sample_ball(d, problem.radius, &mut rng);
            attempts += 1;
            let score = mat::dot(&x, &w);
            let keep = match problem.margin {
                MarginStyle::Natural => true,
                MarginStyle::EnforceMargin(rho) => score.abs() >= rho,
            };
            if keep {
                accepted += 1;
                features.row_mut(row).copy_from_slice(&x);
                labels[row] = label_sign(score);
                row += 1;
            }
            if attempts >= 100_000 && accepted * 1000 < attempts {
                return Err(SynthError::MarginInfeasible { accepted, attempts });
            }
        }
        out.push(BoundedClassDataset {
            client_id,
            features,
            labels,
            radius: problem.radius,
            split_index: m / 2,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::principal_dist;
    use proptest::prelude::*;

    #[test]
    fn figure_configuration_has_consistent_spectral_fields() {
        // Downscaled user count; the derived fields are what matter here.
        let model = gen_ground_truth(50, 2, 500, HeadStyle::GaussianHeads, 0.01, 7).unwrap();
        assert_eq!(model.dim(), 50);
        assert_eq!(model.rank(), 2);
        assert!(model.sigma_min_star > 0.0);
        assert!(model.sigma_max_star >= model.sigma_min_star);
        let recomputed = (0..500)
            .map(|i| mat::norm2(model.v_star.row(i)))
            .fold(0.0, f64::max);
        assert!((model.gamma_head - recomputed).abs() < 1e-12);
        assert!(model.u_star.defect() < 1e-10);
    }

    #[test]
    fn full_rank_square_embedding_is_orthogonal() {
        let model = gen_ground_truth(4, 4, 10, HeadStyle::GaussianHeads, 0.0, 3).unwrap();
        let eye = OrthonormalBasis::new(Mat::identity(4)).unwrap();
        // Equal full-rank spans coincide.
        assert!(principal_dist(&model.u_star, &eye).unwrap() < 1e-9);
    }

    #[test]
    fn unit_scaled_heads_have_unit_rows_and_collapsed_spectrum_at_k1() {
        let model = gen_ground_truth(5, 1, 3, HeadStyle::UnitScaledHeads, 0.0, 11).unwrap();
        for i in 0..3 {
            assert!((mat::norm2(model.v_star.row(i)) - 1.0).abs() < 1e-12);
        }
        // Direct SVD of the 3x1 matrix: the single singular value of V*/√3.
        let by_hand = (model.v_star.col(0).iter().map(|x| x * x).sum::<f64>() / 3.0).sqrt();
        assert!((model.sigma_max_star - by_hand).abs() < 1e-12);
        assert!((model.sigma_min_star - by_hand).abs() < 1e-12);
        assert!((model.gamma_head - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_parameters_are_validated() {
        assert!(matches!(
            gen_ground_truth(3, 4, 10, HeadStyle::GaussianHeads, 0.0, 1),
            Err(SynthError::InvalidRank { .. })
        ));
        assert!(matches!(
            gen_ground_truth(5, 3, 2, HeadStyle::GaussianHeads, 0.0, 1),
            Err(SynthError::InvalidRank { .. })
        ));
    }

    #[test]
    fn noiseless_labels_reconstruct_exactly() {
        let model = gen_ground_truth(8, 2, 5, HeadStyle::GaussianHeads, 0.0, 21).unwrap();
        let dist = FeatureDistribution::gaussian(8);
        let ds = sample_client_data(&model, &dist, 12, 2, 1, 3, 21).unwrap();
        let w = model.optimal_weights(3);
        for i in 0..12 {
            let expect = mat::dot(ds.features.row(i), &w);
            assert!((ds.labels[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn figure_batch_schedule_cycles_singletons_over_s0() {
        // m=10, T=5, b=1: ten singleton batches drawn from the five-cell
        // partition of S⁰; every round's pair is disjoint and the cells
        // cover S⁰ exactly.
        let model = gen_ground_truth(6, 2, 4, HeadStyle::GaussianHeads, 0.01, 2).unwrap();
        let dist = FeatureDistribution::gaussian(6);
        let ds = sample_client_data(&model, &dist, 10, 5, 1, 0, 2).unwrap();
        assert_eq!(ds.batch_schedule.len(), 10);
        for b in &ds.batch_schedule {
            assert_eq!(b.len(), 1);
        }
        for t in 0..5 {
            let (a, b) = ds.round_batches(t);
            assert_ne!(a, b, "round {t} reused one batch for both roles");
        }
        let mut seen: Vec<usize> = ds.batch_schedule.iter().flatten().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, (0..5).collect::<Vec<_>>());
    }

    #[test]
    fn batch_budget_violation_is_rejected() {
        // b=3 leaves only one cell in a five-sample S⁰: a single round
        // cannot form two disjoint batches.
        let model = gen_ground_truth(6, 2, 4, HeadStyle::GaussianHeads, 0.01, 2).unwrap();
        let dist = FeatureDistribution::gaussian(6);
        assert!(matches!(
            sample_client_data(&model, &dist, 10, 3, 3, 0, 2),
            Err(SynthError::BatchBudgetExceeded { need: 6, have: 5 })
        ));
    }

    #[test]
    fn gaussian_features_have_near_identity_covariance() {
        // Monte-Carlo estimate over 10⁵ draws at d=10.
        let d = 10;
        let dist = FeatureDistribution::gaussian(d);
        let mut rng = StreamKey::new(5, Purpose::Features).rng();
        let n = 100_000;
        let mut cov = Mat::zeros(d, d);
        for _ in 0..n {
            let x = dist.sample(&mut rng);
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += x[i] * x[j];
                }
            }
        }
        cov.scale_in_place(1.0 / n as f64);
        let dev = cov.sub(&Mat::identity(d));
        assert!(crate::subspace::spectral_norm(&dev) < 0.05);
    }

    #[test]
    fn all_feature_kinds_are_isotropic_unit_variance() {
        for kind in [
            FeatureKind::ScaledRademacher,
            FeatureKind::UniformSphereScaled,
        ] {
            let dist = FeatureDistribution { kind, dim: 6 };
            let mut rng = StreamKey::new(9, Purpose::Features).rng();
            let n = 50_000;
            let mut cov = Mat::zeros(6, 6);
            for _ in 0..n {
                let x = dist.sample(&mut rng);
                for i in 0..6 {
                    for j in 0..6 {
                        cov[(i, j)] += x[i] * x[j];
                    }
                }
            }
            cov.scale_in_place(1.0 / n as f64);
            assert!(
                crate::subspace::spectral_norm(&cov.sub(&Mat::identity(6))) < 0.05,
                "{kind:?} covariance deviates"
            );
        }
    }

    #[test]
    fn identical_seed_and_client_reproduce_bitwise() {
        let model = gen_ground_truth(7, 2, 6, HeadStyle::GaussianHeads, 0.5, 13).unwrap();
        let dist = FeatureDistribution::gaussian(7);
        let a = sample_client_data(&model, &dist, 8, 1, 2, 4, 13).unwrap();
        let b = sample_client_data(&model, &dist, 8, 1, 2, 4, 13).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.batch_schedule, b.batch_schedule);
        let c = sample_client_data(&model, &dist, 8, 1, 2, 5, 13).unwrap();
        assert_ne!(a.features, c.features);
    }

    fn line_problem(radius: f64, margin: MarginStyle) -> ClassProblem {
        let u = OrthonormalBasis::new(Mat::from_flat(2, 1, vec![1.0, 0.0])).unwrap();
        ClassProblem {
            u_star: u,
            v_star: Mat::from_flat(1, 1, vec![1.0]),
            radius,
            margin,
        }
    }

    #[test]
    fn class_label_matches_halfspace_side() {
        // U*v* = e₁ in the plane: x = (0.5, 0.1) lands on the positive side.
        let p = line_problem(1.0, MarginStyle::Natural);
        let w = p.optimal_weights(0);
        assert_eq!(label_sign(mat::dot(&[0.5, 0.1], &w)), 1.0);
    }

    #[test]
    fn enforced_margin_holds_for_every_sample() {
        let p = line_problem(1.0, MarginStyle::EnforceMargin(0.2));
        let data = sample_class_data(&p, 30, 1, 3).unwrap();
        let w = p.optimal_weights(0);
        for i in 0..30 {
            let s = mat::dot(data[0].features.row(i), &w);
            assert!(s.abs() >= 0.2);
            assert_eq!(data[0].labels[i], label_sign(s));
        }
    }

    #[test]
    fn separable_set_margin_verified_by_scan() {
        let model = gen_ground_truth(6, 1, 50, HeadStyle::UnitScaledHeads, 0.0, 17).unwrap();
        let p = ClassProblem {
            u_star: model.u_star.clone(),
            v_star: model.v_star.clone(),
            radius: 1.0,
            margin: MarginStyle::EnforceMargin(0.15),
        };
        let data = sample_class_data(&p, 40, 50, 17).unwrap();
        let mut min_margin = f64::INFINITY;
        for ds in &data {
            let w = p.optimal_weights(ds.client_id);
            for i in 0..ds.n_samples() {
                let s = mat::dot(ds.features.row(i), &w);
                min_margin = min_margin.min(s.abs());
                assert!(mat::norm2(ds.features.row(i)) <= 1.0 + 1e-12);
            }
        }
        assert!(min_margin >= 0.15);
    }

    #[test]
    fn infeasible_margin_is_reported() {
        // Margin above the ball radius can never be met.
        let p = line_problem(0.5, MarginStyle::EnforceMargin(0.9));
        assert!(matches!(
            sample_class_data(&p, 5, 1, 1),
            Err(SynthError::MarginInfeasible { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn prop_batch_schedule_disjoint_when_budget_allows(
            seed in 0u64..200,
            m_half in 4usize..20,
            rounds in 1usize..4,
        ) {
            let m = 2 * m_half;
            let b = m_half / (2 * rounds);
            prop_assume!(b >= 1);
            // 2*rounds*b <= m_half here, so the schedule must be fully
            // disjoint fresh cells.
            let model = gen_ground_truth(5, 2, 4, HeadStyle::GaussianHeads, 0.1, seed).unwrap();
            let dist = FeatureDistribution::gaussian(5);
            let ds = sample_client_data(&model, &dist, m, rounds, b, 0, seed).unwrap();
            let mut seen: Vec<usize> = ds.batch_schedule.iter().flatten().copied().collect();
            let total = seen.len();
            prop_assert_eq!(total, 2 * rounds * b);
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), total, "indices must be pairwise disjoint");
            prop_assert!(seen.iter().all(|&i| i < m_half));
        }
    }
}
