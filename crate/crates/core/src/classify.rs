//! Sketch-and-select representation learning for personalized margin
//! classification: a random ±1/√k' projection compresses features to k'
//! dimensions, a Frobenius-ball cover enumerates candidate low-dimensional
//! embeddings, the exponential mechanism picks one by margin-loss score, and
//! the winner is lifted back as `U^priv = Mᵀ Ũ`.
//!
//! The inner minimization over the head ball with 0-1 margin loss is solved
//! exactly for k = 1 by breakpoint enumeration and approximately for k >= 2
//! by grid search; both solvers are exposed so the approximation is an
//! explicit choice, not a silent one.

use alloc::vec::Vec;
use thiserror::Error;

use crate::dp::{self, DpError};
use crate::mat::{self, Mat};
use crate::rng::{Purpose, StreamKey};
use crate::synth::BoundedClassDataset;

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClassifyError {
    #[error("lattice cover would have ~{cardinality:.3e} elements, cap is {cap}")]
    CoverTooLarge { cardinality: f64, cap: usize },
    #[error("cover is empty")]
    EmptyCover,
    #[error("exact 1-D head solver requires k = 1, got k = {0}")]
    ExactSolverNeedsRankOne(usize),
    #[error("grid search needs at least 2 points per axis, got {0}")]
    GridTooSmall(usize),
    #[error("no users supplied")]
    NoUsers,
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// Random sign projection `M ∈ {±1/√k'}^{k' x d}`.
#[derive(Debug, Clone)]
pub struct JlSketch {
    mat: Mat,
}

impl JlSketch {
    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn target_dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn source_dim(&self) -> usize {
        self.mat.cols()
    }

    /// `Mx`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mat.matvec(x)
    }

    /// Lift a k'-dimensional embedding back to the ambient space: `Mᵀ Ũ`.
    /// The result is generally not orthonormal.
    pub fn lift(&self, u_eff: &Mat) -> Mat {
        self.mat.tr_mul(u_eff)
    }
}

/// Seeded i.i.d. sign matrix scaled by `1/√k'`.
pub fn sample_jl(d: usize, k_prime: usize, key: StreamKey) -> JlSketch {
    assert!(k_prime >= 1);
    let scale = 1.0 / (k_prime as f64).sqrt();
    let mut rng = key.rng();
    let mat = Mat::from_fn(k_prime, d, |_, _| {
        if rand::Rng::random::<bool>(&mut rng) {
            scale
        } else {
            -scale
        }
    });
    JlSketch { mat }
}

/// Target dimension `k' = ⌈c r²Γ² ln(nm/β) / ρ²⌉` or a fixed override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KPrimeRule {
    Auto { constant: f64, beta: f64 },
    Fixed(usize),
}

impl Default for KPrimeRule {
    fn default() -> Self {
        KPrimeRule::Auto {
            constant: 8.0,
            beta: 0.05,
        }
    }
}

pub fn resolve_k_prime(rule: KPrimeRule, params: &MarginParams, n: usize, m: usize) -> usize {
    match rule {
        KPrimeRule::Fixed(k) => k.max(1),
        KPrimeRule::Auto { constant, beta } => {
            let r2g2 = params.radius * params.radius * params.gamma_head * params.gamma_head;
            let val = constant * r2g2 * ((n * m) as f64 / beta).ln() / (params.rho * params.rho);
            val.ceil().max(1.0) as usize
        }
    }
}

/// Margin ρ, head-norm bound Γ, and feature radius r of one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginParams {
    pub rho: f64,
    pub gamma_head: f64,
    pub radius: f64,
}

/// One user's sketched data, split as the original dataset was.
#[derive(Debug, Clone)]
pub struct SketchedUser {
    pub client_id: usize,
    pub s0_features: Mat,
    pub s0_labels: Vec<f64>,
    pub s1_features: Mat,
    pub s1_labels: Vec<f64>,
}

/// Applies the sketch to every user's features, preserving the `S⁰`/`S¹`
/// split.
pub fn sketch_users(sketch: &JlSketch, datasets: &[BoundedClassDataset]) -> Vec<SketchedUser> {
    datasets
        .iter()
        .map(|ds| {
            let split = ds.split_index;
            let m = ds.n_samples();
            let kp = sketch.target_dim();
            let mut s0 = Mat::zeros(split, kp);
            let mut s1 = Mat::zeros(m - split, kp);
            for i in 0..m {
                let proj = sketch.apply(ds.features.row(i));
                if i < split {
                    s0.row_mut(i).copy_from_slice(&proj);
                } else {
                    s1.row_mut(i - split).copy_from_slice(&proj);
                }
            }
            SketchedUser {
                client_id: ds.client_id,
                s0_features: s0,
                s0_labels: ds.labels[..split].to_vec(),
                s1_features: s1,
                s1_labels: ds.labels[split..].to_vec(),
            }
        })
        .collect()
}

/// Fraction of samples with `y ⟨x, U_eff v⟩ <= ρ`.
pub fn margin_empirical_loss(u_eff: &Mat, v: &[f64], xs: &Mat, ys: &[f64], rho: f64) -> f64 {
    assert_eq!(xs.rows(), ys.len());
    if ys.is_empty() {
        return 0.0;
    }
    let w = u_eff.matvec(v);
    let mut failures = 0usize;
    for (i, y) in ys.iter().enumerate() {
        if y * mat::dot(xs.row(i), &w) <= rho {
            failures += 1;
        }
    }
    failures as f64 / ys.len() as f64
}

/// Head solver for the inner margin-loss minimization over `‖v‖ <= Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadSolver {
    /// Exact breakpoint enumeration; requires k = 1.
    Exact1D,
    /// Uniform axis grid over the Γ-ball with this many points per axis.
    GridSearch { points_per_axis: usize },
}

/// Result of a head minimization.
#[derive(Debug, Clone)]
pub struct BestHead {
    pub v: Vec<f64>,
    pub loss: f64,
    /// Set when the grid spacing exceeded `ρ/(2 r √k)`: the margin-loss
    /// landscape may be under-resolved.
    pub resolution_warning: bool,
}

/// Minimizes the empirical margin loss over the head ball. Ties break toward
/// the smaller-norm head, then lexicographically.
pub fn best_head_margin(
    u_eff: &Mat,
    xs: &Mat,
    ys: &[f64],
    params: &MarginParams,
    solver: HeadSolver,
) -> Result<BestHead, ClassifyError> {
    let k = u_eff.cols();
    let gamma = params.gamma_head;
    match solver {
        HeadSolver::Exact1D => {
            if k != 1 {
                return Err(ClassifyError::ExactSolverNeedsRankOne(k));
            }
            // Per-sample signed scores a_j = y_j ⟨x_j, ũ⟩; the loss as a
            // function of the scalar v is piecewise constant with breakpoints
            // at v = ρ / a_j.
            let u_col = u_eff.col(0);
            let a: Vec<f64> = (0..xs.rows())
                .map(|j| ys[j] * mat::dot(xs.row(j), &u_col))
                .collect();
            let mut candidates: Vec<f64> = alloc::vec![-gamma, 0.0, gamma];
            let mut breaks: Vec<f64> = a
                .iter()
                .filter(|&&aj| aj != 0.0)
                .map(|&aj| params.rho / aj)
                .filter(|t| t.abs() <= gamma)
                .collect();
            breaks.push(-gamma);
            breaks.push(gamma);
            breaks.sort_by(|x, y| x.total_cmp(y));
            for w in breaks.windows(2) {
                candidates.push(0.5 * (w[0] + w[1]));
            }
            let loss_at = |v: f64| -> f64 {
                if a.is_empty() {
                    return 0.0;
                }
                let fails = a.iter().filter(|&&aj| aj * v <= params.rho).count();
                fails as f64 / a.len() as f64
            };
            let mut best_v = 0.0_f64;
            let mut best_loss = f64::INFINITY;
            for &v in &candidates {
                let l = loss_at(v);
                let better = l < best_loss
                    || (l == best_loss
                        && (v.abs() < best_v.abs() || (v.abs() == best_v.abs() && v < best_v)));
                if better {
                    best_loss = l;
                    best_v = v;
                }
            }
            Ok(BestHead {
                v: alloc::vec![best_v],
                loss: best_loss,
                resolution_warning: false,
            })
        }
        HeadSolver::GridSearch { points_per_axis } => {
            if points_per_axis < 2 {
                return Err(ClassifyError::GridTooSmall(points_per_axis));
            }
            let spacing = 2.0 * gamma / (points_per_axis - 1) as f64;
            let resolution_warning =
                spacing > params.rho / (2.0 * params.radius * (k as f64).sqrt());
            let axis: Vec<f64> = (0..points_per_axis)
                .map(|i| -gamma + spacing * i as f64)
                .collect();
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut idx = alloc::vec![0usize; k];
            loop {
                let v: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
                if mat::norm2(&v) <= gamma + 1e-12 {
                    let l = margin_empirical_loss(u_eff, &v, xs, ys, params.rho);
                    let take = match &best {
                        None => true,
                        Some((bl, bv)) => {
                            l < *bl
                                || (l == *bl
                                    && (mat::norm2(&v) < mat::norm2(bv) - 1e-15
                                        || ((mat::norm2(&v) - mat::norm2(bv)).abs() <= 1e-15
                                            && v < *bv)))
                        }
                    };
                    if take {
                        best = Some((l, v));
                    }
                }
                // Odometer increment over the k-dimensional grid.
                let mut pos = 0;
                loop {
                    if pos == k {
                        let (loss, v) = best.expect("grid contains the origin");
                        return Ok(BestHead {
                            v,
                            loss,
                            resolution_warning,
                        });
                    }
                    idx[pos] += 1;
                    if idx[pos] < points_per_axis {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
            }
        }
    }
}

/// Cover construction policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverKind {
    /// Axis-aligned lattice with spacing `γ/√(k'k)` intersected with the
    /// Frobenius ball: a provable γ-cover.
    Lattice,
    /// Uniform ball samples; no cover guarantee, flagged heuristic.
    RandomNet(usize),
}

/// Parameters of the Frobenius-ball cover over `k' x k` matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverSpec {
    pub gamma: f64,
    pub k_prime: usize,
    pub k: usize,
    pub kind: CoverKind,
    /// Hard cap on lattice cardinality.
    pub cap: usize,
}

impl CoverSpec {
    pub fn new(gamma: f64, k_prime: usize, k: usize, kind: CoverKind) -> Self {
        assert!(
            gamma > 0.0 && gamma <= 1.0,
            "cover radius must lie in (0, 1]"
        );
        Self {
            gamma,
            k_prime,
            k,
            kind,
            cap: 1_000_000,
        }
    }

    /// Radius `√(2k)` of the ball that contains every sketched orthonormal
    /// embedding with high probability.
    pub fn ball_radius(&self) -> f64 {
        (2.0 * self.k as f64).sqrt()
    }
}

/// A finite candidate set of `k' x k` matrices.
#[derive(Debug, Clone)]
pub struct Cover {
    pub elements: Vec<Mat>,
    /// Whether the γ-cover property is guaranteed by construction.
    pub guaranteed: bool,
}

/// Builds the candidate set. The lattice uses truncation-toward-zero
/// rounding: for any point `p` of the ball, flooring each coordinate toward
/// zero yields a lattice point inside the ball within distance
/// `h√(k'k) = γ`, so the γ-cover property holds with every retained point.
pub fn build_cover(spec: &CoverSpec, key: StreamKey) -> Result<Cover, ClassifyError> {
    let q = spec.k_prime * spec.k;
    let radius = spec.ball_radius();
    match spec.kind {
        CoverKind::Lattice => {
            let h = spec.gamma / (q as f64).sqrt();
            let p = (radius / h).floor() as i64;
            let axis_count = (2 * p + 1) as f64;
            let cardinality = axis_count.powi(q as i32);
            if cardinality > spec.cap as f64 {
                return Err(ClassifyError::CoverTooLarge {
                    cardinality,
                    cap: spec.cap,
                });
            }
            let mut elements = Vec::new();
            let mut idx = alloc::vec![-p; q];
            'outer: loop {
                let flat: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
                if mat::norm2(&flat) <= radius {
                    elements.push(Mat::from_flat(spec.k_prime, spec.k, flat));
                }
                let mut pos = 0;
                loop {
                    if pos == q {
                        break 'outer;
                    }
                    idx[pos] += 1;
                    if idx[pos] <= p {
                        break;
                    }
                    idx[pos] = -p;
                    pos += 1;
                }
            }
            if elements.is_empty() {
                return Err(ClassifyError::EmptyCover);
            }
            Ok(Cover {
                elements,
                guaranteed: true,
            })
        }
        CoverKind::RandomNet(count) => {
            if count == 0 {
                return Err(ClassifyError::EmptyCover);
            }
            let mut rng = key.rng();
            let elements = (0..count)
                .map(|_| {
                    let flat = crate::synth::sample_ball(q, radius, &mut rng);
                    Mat::from_flat(spec.k_prime, spec.k, flat)
                })
                .collect();
            Ok(Cover {
                elements,
                guaranteed: false,
            })
        }
    }
}

/// Score of one cover element: minus the mean over users of the minimized
/// margin loss on their sketched `S⁰` half. Range `[-1, 0]`; replacing one
/// user's entire dataset moves it by at most `1/n`.
pub fn score_element(
    elem: &Mat,
    users: &[SketchedUser],
    params: &MarginParams,
    solver: HeadSolver,
) -> Result<f64, ClassifyError> {
    if users.is_empty() {
        return Err(ClassifyError::NoUsers);
    }
    let mut acc = 0.0;
    for u in users {
        let best = best_head_margin(elem, &u.s0_features, &u.s0_labels, params, solver)?;
        acc += best.loss;
    }
    Ok(-acc / users.len() as f64)
}

/// Selection report of one pipeline run.
#[derive(Debug, Clone)]
pub struct ClassifyReport {
    pub k_prime: usize,
    pub cover_size: usize,
    pub guaranteed_cover: bool,
    pub score_min: f64,
    pub score_max: f64,
    pub selected_score: f64,
    /// Rank of the selected score among all scores (0 = best).
    pub selected_rank: usize,
    pub resolution_warning: bool,
}

/// Output of [`private_classify`].
#[derive(Debug, Clone)]
pub struct ClassifyOutput {
    /// Lifted embedding `Mᵀ Ũ` (`d x k`, not orthonormal in general).
    pub u_priv: Mat,
    /// The selected cover element (`k' x k`).
    pub u_eff: Mat,
    pub sketch: JlSketch,
    /// `n x k`, one head per user, fit on the user's own `S¹` half.
    pub heads: Mat,
    pub report: ClassifyReport,
}

/// Configuration of the selection pipeline.
#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    pub params: MarginParams,
    pub epsilon: f64,
    pub cover_gamma: f64,
    pub cover_kind: CoverKind,
    pub cover_cap: usize,
    pub k_prime: KPrimeRule,
    pub solver: HeadSolver,
    /// Margin used for the final per-user head fit; zero gives the plain
    /// 0-1 loss of the algorithm's last step.
    pub head_rho: f64,
}

/// Runs the whole pipeline: sketch, cover, exponential-mechanism selection
/// with sensitivity `1/n`, lift, and per-user head fits on `S¹`.
pub fn private_classify(
    datasets: &[BoundedClassDataset],
    cfg: &ClassifyConfig,
    k: usize,
    rng_seed: u64,
) -> Result<ClassifyOutput, ClassifyError> {
    if datasets.is_empty() {
        return Err(ClassifyError::NoUsers);
    }
    let n = datasets.len();
    let d = datasets[0].features.cols();
    let m = datasets[0].n_samples();

    let k_prime = resolve_k_prime(cfg.k_prime, &cfg.params, n, m);
    let sketch = sample_jl(d, k_prime, StreamKey::new(rng_seed, Purpose::JlSigns));
    let users = sketch_users(&sketch, datasets);

    let mut cover_spec = CoverSpec::new(cfg.cover_gamma, k_prime, k, cfg.cover_kind);
    cover_spec.cap = cfg.cover_cap;
    let cover = build_cover(&cover_spec, StreamKey::new(rng_seed, Purpose::CoverNet))?;

    let scores: Vec<f64> = cover
        .elements
        .iter()
        .map(|elem| score_element(elem, &users, &cfg.params, cfg.solver))
        .collect::<Result<_, _>>()?;

    let selected = dp::exponential_mechanism(
        &scores,
        cfg.epsilon,
        1.0 / n as f64,
        StreamKey::new(rng_seed, Purpose::ExpMech),
    )?;

    let u_eff = cover.elements[selected].clone();
    let u_priv = sketch.lift(&u_eff);

    let head_params = MarginParams {
        rho: cfg.head_rho,
        ..cfg.params
    };
    let mut heads = Mat::zeros(n, k);
    let mut resolution_warning = false;
    for (i, u) in users.iter().enumerate() {
        let best = best_head_margin(
            &u_eff,
            &u.s1_features,
            &u.s1_labels,
            &head_params,
            cfg.solver,
        )?;
        resolution_warning |= best.resolution_warning;
        heads.row_mut(i).copy_from_slice(&best.v);
    }

    let score_min = scores.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let score_max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let selected_rank = scores.iter().filter(|&&s| s > scores[selected]).count();

    Ok(ClassifyOutput {
        u_priv,
        u_eff,
        sketch,
        heads,
        report: ClassifyReport {
            k_prime,
            cover_size: cover.elements.len(),
            guaranteed_cover: cover.guaranteed,
            score_min,
            score_max,
            selected_score: scores[selected],
            selected_rank,
            resolution_warning,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, HeadStyle, MarginStyle};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn jl_entries_are_signs_over_sqrt_kprime() {
        let sk = sample_jl(7, 1, StreamKey::new(1, Purpose::JlSigns));
        for &e in sk.matrix().data() {
            assert!(e == 1.0 || e == -1.0);
        }
        let sk3 = sample_jl(12, 3, StreamKey::new(2, Purpose::JlSigns));
        let scale = 1.0 / 3.0_f64.sqrt();
        for &e in sk3.matrix().data() {
            assert!((e.abs() - scale).abs() < 1e-15);
        }
        // Every row has norm √(d/k').
        for i in 0..3 {
            let rows_norm = mat::norm2(sk3.matrix().row(i));
            assert!((rows_norm - (12.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn jl_preserves_inner_products_of_unit_pairs() {
        // 100 random unit pairs in ℝ²⁰⁰ at the standard k' for τ=0.3,
        // β=0.05: at least 95 within τ.
        let d = 200;
        let tau = 0.3;
        let k_prime = (8.0 * (d as f64 / 0.05).ln() / (tau * tau)).ceil() as usize;
        let sk = sample_jl(d, k_prime, StreamKey::new(3, Purpose::JlSigns));
        let mut rng = StreamKey::new(4, Purpose::MonteCarlo).rng();
        let mut unit = || {
            let mut v: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = mat::norm2(&v);
            v.iter_mut().for_each(|x| *x /= norm);
            v
        };
        let mut preserved = 0;
        for _ in 0..100 {
            let u = unit();
            let v = unit();
            let lhs = mat::dot(&sk.apply(&u), &sk.apply(&v));
            let rhs = mat::dot(&u, &v);
            if (lhs - rhs).abs() <= tau {
                preserved += 1;
            }
        }
        assert!(preserved >= 95, "only {preserved} of 100 pairs preserved");
    }

    #[test]
    fn margin_loss_of_separated_data_is_zero_and_of_zero_head_is_one() {
        let u_eff = Mat::from_flat(2, 1, alloc::vec![1.0, 0.0]);
        let xs = Mat::from_flat(3, 2, alloc::vec![1.0, 0.0, 2.0, 0.5, -1.5, 0.2]);
        let ys = alloc::vec![1.0, 1.0, -1.0];
        assert_eq!(margin_empirical_loss(&u_eff, &[1.0], &xs, &ys, 0.0), 0.0);
        assert_eq!(margin_empirical_loss(&u_eff, &[0.0], &xs, &ys, 0.3), 1.0);
    }

    #[test]
    fn margin_loss_matches_hand_enumeration() {
        // Scores with v = 1: 0.8, 0.25, -0.6, 0.1 → y·score: 0.8, 0.25,
        // 0.6, -0.1. At ρ = 0.3 exactly two fail (0.25 and -0.1).
        let u_eff = Mat::from_flat(1, 1, alloc::vec![1.0]);
        let xs = Mat::from_flat(4, 1, alloc::vec![0.8, 0.25, -0.6, 0.1]);
        let ys = alloc::vec![1.0, 1.0, -1.0, -1.0];
        let loss = margin_empirical_loss(&u_eff, &[1.0], &xs, &ys, 0.3);
        assert!((loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_solver_finds_zero_loss_when_gamma_head_separates() {
        let u_eff = Mat::from_flat(2, 1, alloc::vec![1.0, 0.0]);
        let xs = Mat::from_flat(3, 2, alloc::vec![0.9, 0.0, 0.7, 0.1, -0.8, 0.3]);
        let ys = alloc::vec![1.0, 1.0, -1.0];
        let params = MarginParams {
            rho: 0.3,
            gamma_head: 1.0,
            radius: 1.0,
        };
        let best = best_head_margin(&u_eff, &xs, &ys, &params, HeadSolver::Exact1D).unwrap();
        assert_eq!(best.loss, 0.0);
        // v must exceed ρ/0.7 to clear the weakest positive sample.
        assert!(best.v[0] > 0.3 / 0.7);
    }

    #[test]
    fn exact_solver_handles_single_sample() {
        let u_eff = Mat::from_flat(1, 1, alloc::vec![0.5]);
        let xs = Mat::from_flat(1, 1, alloc::vec![1.0]);
        let params = MarginParams {
            rho: 0.2,
            gamma_head: 1.0,
            radius: 1.0,
        };
        let best = best_head_margin(&u_eff, &xs, &[1.0], &params, HeadSolver::Exact1D).unwrap();
        // Γ·|⟨x, ũ⟩| = 0.5 > ρ: zero loss achievable.
        assert_eq!(best.loss, 0.0);
    }

    #[test]
    fn exact_and_grid_solvers_agree_on_random_instances() {
        let params = MarginParams {
            rho: 0.25,
            gamma_head: 1.0,
            radius: 1.0,
        };
        for seed in 0..50u64 {
            let mut rng = StreamKey::new(seed, Purpose::MonteCarlo).rng();
            let m = 12;
            let u_eff = Mat::from_flat(
                3,
                1,
                alloc::vec![
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ],
            );
            let xs = Mat::from_fn(m, 3, |_, _| rng.sample(StandardNormal));
            let ys: Vec<f64> = (0..m)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let exact = best_head_margin(&u_eff, &xs, &ys, &params, HeadSolver::Exact1D).unwrap();
            let grid = best_head_margin(
                &u_eff,
                &xs,
                &ys,
                &params,
                HeadSolver::GridSearch {
                    points_per_axis: 10_001,
                },
            )
            .unwrap();
            assert!(
                (exact.loss - grid.loss).abs() < 1e-12,
                "seed {seed}: exact {} vs grid {}",
                exact.loss,
                grid.loss
            );
        }
    }

    #[test]
    fn grid_loss_is_monotone_in_resolution() {
        let params = MarginParams {
            rho: 0.25,
            gamma_head: 1.0,
            radius: 1.0,
        };
        let mut rng = StreamKey::new(77, Purpose::MonteCarlo).rng();
        let u_eff = Mat::from_fn(3, 2, |_, _| rng.sample(StandardNormal));
        let xs = Mat::from_fn(15, 3, |_, _| rng.sample(StandardNormal));
        let ys: Vec<f64> = (0..15)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut prev = f64::INFINITY;
        for res in [3, 9, 27, 81] {
            let best = best_head_margin(
                &u_eff,
                &xs,
                &ys,
                &params,
                HeadSolver::GridSearch {
                    points_per_axis: res,
                },
            )
            .unwrap();
            assert!(
                best.loss <= prev + 1e-15,
                "loss rose from {prev} at res {res}"
            );
            prev = best.loss;
        }
    }

    #[test]
    fn coarse_grid_sets_the_resolution_warning() {
        let params = MarginParams {
            rho: 0.05,
            gamma_head: 1.0,
            radius: 1.0,
        };
        let u_eff = Mat::from_flat(1, 1, alloc::vec![1.0]);
        let xs = Mat::from_flat(1, 1, alloc::vec![1.0]);
        let warn = best_head_margin(
            &u_eff,
            &xs,
            &[1.0],
            &params,
            HeadSolver::GridSearch { points_per_axis: 3 },
        )
        .unwrap();
        assert!(warn.resolution_warning);
        let fine = best_head_margin(
            &u_eff,
            &xs,
            &[1.0],
            &params,
            HeadSolver::GridSearch {
                points_per_axis: 201,
            },
        )
        .unwrap();
        assert!(!fine.resolution_warning);
    }

    #[test]
    fn one_dimensional_lattice_matches_hand_enumeration() {
        // k'=k=1, γ=1, ball radius √2: multiples of 1 inside [-√2, √2].
        let spec = CoverSpec::new(1.0, 1, 1, CoverKind::Lattice);
        let cover = build_cover(&spec, StreamKey::new(0, Purpose::CoverNet)).unwrap();
        let mut vals: Vec<f64> = cover.elements.iter().map(|m| m[(0, 0)]).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(vals, alloc::vec![-1.0, 0.0, 1.0]);
        assert!(cover.guaranteed);
    }

    #[test]
    fn lattice_cover_property_verified_by_random_probes() {
        let spec = CoverSpec::new(0.8, 2, 1, CoverKind::Lattice);
        let cover = build_cover(&spec, StreamKey::new(0, Purpose::CoverNet)).unwrap();
        let radius = spec.ball_radius();
        let mut rng = StreamKey::new(5, Purpose::MonteCarlo).rng();
        for _ in 0..10_000 {
            let p = crate::synth::sample_ball(2, radius, &mut rng);
            let nearest = cover
                .elements
                .iter()
                .map(|e| {
                    let diff = mat::sub_vec(&p, e.data());
                    mat::norm2(&diff)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= spec.gamma + 1e-12, "probe at distance {nearest}");
        }
    }

    #[test]
    fn oversized_lattice_is_rejected_with_cardinality() {
        let spec = CoverSpec::new(0.1, 10, 2, CoverKind::Lattice);
        match build_cover(&spec, StreamKey::new(0, Purpose::CoverNet)) {
            Err(ClassifyError::CoverTooLarge { cardinality, cap }) => {
                assert!(cardinality > cap as f64);
            }
            other => panic!("expected CoverTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn random_net_is_flagged_heuristic() {
        let spec = CoverSpec::new(0.5, 3, 1, CoverKind::RandomNet(64));
        let cover = build_cover(&spec, StreamKey::new(1, Purpose::CoverNet)).unwrap();
        assert_eq!(cover.elements.len(), 64);
        assert!(!cover.guaranteed);
        for e in &cover.elements {
            assert!(e.frob_norm() <= spec.ball_radius() + 1e-12);
        }
    }

    fn separable_datasets(
        d: usize,
        n: usize,
        m: usize,
        rho: f64,
        radius: f64,
        seed: u64,
    ) -> (synth::ClassProblem, Vec<BoundedClassDataset>) {
        let model =
            synth::gen_ground_truth(d, 1, n, HeadStyle::UnitScaledHeads, 0.0, seed).unwrap();
        let problem = synth::ClassProblem {
            u_star: model.u_star.clone(),
            v_star: model.v_star.clone(),
            radius,
            margin: MarginStyle::EnforceMargin(rho),
        };
        let data = synth::sample_class_data(&problem, m, n, seed).unwrap();
        (problem, data)
    }

    #[test]
    fn infinite_epsilon_weights_concentrate_on_the_argmax() {
        // Analytic-weight check of the mechanism limit on a 3-element cover.
        let scores = [-0.5, -0.1, -0.4];
        let w = dp::exponential_weights(&scores, 1e6, 1.0 / 50.0).unwrap();
        assert!(w[1] > 0.999999);
    }

    #[test]
    fn lifted_scores_match_sketched_scores() {
        // sign(⟨x, MᵀŨv⟩) = sign(⟨Mx, Ũv⟩): same bilinear form, associated
        // differently; values agree to rounding and signs agree exactly on
        // generic data.
        let (_, data) = separable_datasets(8, 4, 10, 0.2, 1.0, 31);
        let sketch = sample_jl(8, 3, StreamKey::new(32, Purpose::JlSigns));
        let u_eff = Mat::from_flat(3, 1, alloc::vec![0.4, -0.2, 0.7]);
        let u_priv = sketch.lift(&u_eff);
        let v = alloc::vec![0.9];
        for ds in &data {
            for i in 0..ds.n_samples() {
                let x = ds.features.row(i);
                let lifted = mat::dot(x, &u_priv.matvec(&v));
                let sketched = mat::dot(&sketch.apply(x), &u_eff.matvec(&v));
                assert!((lifted - sketched).abs() < 1e-12 * (1.0 + lifted.abs()));
                assert_eq!(
                    crate::synth::label_sign(lifted),
                    crate::synth::label_sign(sketched)
                );
            }
        }
    }

    #[test]
    fn score_sensitivity_is_bounded_by_one_over_n() {
        let (_, data) = separable_datasets(6, 8, 12, 0.2, 1.0, 41);
        let sketch = sample_jl(6, 3, StreamKey::new(42, Purpose::JlSigns));
        let users = sketch_users(&sketch, &data);
        let params = MarginParams {
            rho: 0.2,
            gamma_head: 1.0,
            radius: 1.0,
        };
        let mut rng = StreamKey::new(43, Purpose::MonteCarlo).rng();
        let elem = Mat::from_fn(3, 1, |_, _| rng.sample(StandardNormal));
        let base = score_element(&elem, &users, &params, HeadSolver::Exact1D).unwrap();
        // Replace one user's dataset wholesale.
        let (_, replacement) = separable_datasets(6, 8, 12, 0.2, 1.0, 44);
        let replacement_users = sketch_users(&sketch, &replacement);
        for victim in 0..8 {
            let mut perturbed = users.clone();
            perturbed[victim] = replacement_users[victim].clone();
            let s = score_element(&elem, &perturbed, &params, HeadSolver::Exact1D).unwrap();
            assert!((s - base).abs() <= 1.0 / 8.0 + 1e-12);
        }
    }

    #[test]
    fn pipeline_selects_cover_member_within_ball_and_reports() {
        let (_, data) = separable_datasets(8, 6, 16, 0.25, 1.0, 51);
        let cfg = ClassifyConfig {
            params: MarginParams {
                rho: 0.25,
                gamma_head: 1.0,
                radius: 1.0,
            },
            epsilon: 20.0,
            cover_gamma: 0.6,
            cover_kind: CoverKind::Lattice,
            cover_cap: 1_000_000,
            k_prime: KPrimeRule::Fixed(3),
            solver: HeadSolver::Exact1D,
            head_rho: 0.0,
        };
        let out = private_classify(&data, &cfg, 1, 51).unwrap();
        assert_eq!(out.u_eff.shape(), (3, 1));
        assert!(out.u_eff.frob_norm() <= (2.0_f64).sqrt() + 1e-12);
        assert_eq!(out.u_priv.shape(), (8, 1));
        assert!(out.report.score_min <= out.report.selected_score);
        assert!(out.report.selected_score <= out.report.score_max);
        assert!((-1.0..=0.0).contains(&out.report.score_min));
        assert!(out.report.cover_size > 0);
        // Determinism.
        let again = private_classify(&data, &cfg, 1, 51).unwrap();
        assert_eq!(out.u_priv, again.u_priv);
        assert_eq!(out.heads, again.heads);
    }

    #[test]
    fn single_user_pipeline_is_well_defined() {
        let (_, data) = separable_datasets(6, 1, 12, 0.25, 1.0, 61);
        let cfg = ClassifyConfig {
            params: MarginParams {
                rho: 0.25,
                gamma_head: 1.0,
                radius: 1.0,
            },
            epsilon: 5.0,
            cover_gamma: 0.8,
            cover_kind: CoverKind::Lattice,
            cover_cap: 1_000_000,
            k_prime: KPrimeRule::Fixed(2),
            solver: HeadSolver::Exact1D,
            head_rho: 0.0,
        };
        let out = private_classify(&data, &cfg, 1, 61).unwrap();
        assert_eq!(out.heads.rows(), 1);
    }

    #[test]
    fn auto_k_prime_follows_the_formula() {
        let params = MarginParams {
            rho: 0.3,
            gamma_head: 1.0,
            radius: 1.0,
        };
        let got = resolve_k_prime(
            KPrimeRule::Auto {
                constant: 8.0,
                beta: 0.05,
            },
            &params,
            50,
            40,
        );
        let want = (8.0 * (50.0 * 40.0 / 0.05_f64).ln() / 0.09).ceil() as usize;
        assert_eq!(got, want);
        assert_eq!(resolve_k_prime(KPrimeRule::Fixed(4), &params, 50, 40), 4);
    }
}
