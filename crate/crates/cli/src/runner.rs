//! Config-driven experiment execution: one deterministic cell per
//! (method, ε, seed), a thread-pool sweep over cells, and row assembly.
//!
//! Every cell regenerates its data from the seed, so each CSV row is a pure
//! function of (config, seed); worker count and scheduling cannot change any
//! value. Non-private methods run once per seed and their rows are
//! replicated across the ε grid for plotting.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use privrep_core::classify::{self, ClassifyConfig};
use privrep_core::dp::{self, NoiseMode, NoiseScale, PrivacySpec};
use privrep_core::fedrep::{self, FedRepConfig, InitMode, TrainOutput};
use privrep_core::mat::Mat;
use privrep_core::metrics::{self, GdRate};
use privrep_core::rng::{Purpose, StreamKey};
use privrep_core::subspace;
use privrep_core::synth::{
    self, ClassProblem, ClientDataset, FeatureDistribution, GroundTruthModel,
};

use crate::config::{ExperimentConfig, Method, OracleOr};

/// Salt for the disposable probe draw that calibrates ψ_init; keeps the
/// probe's random streams disjoint from the experiment's data streams.
const PSI_PROBE_SALT: u64 = 0x7073_695f_7072_6f62;

/// Total Monte-Carlo sample budget per row metric.
const MC_BUDGET: usize = 100_000;

#[derive(Debug)]
pub struct RunError {
    pub method: &'static str,
    pub epsilon: f64,
    pub seed: u64,
    pub message: String,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} failed at epsilon={}, seed={}: {}",
            self.method, self.epsilon, self.seed, self.message
        )
    }
}

impl std::error::Error for RunError {}

/// One output row of the experiment table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: &'static str,
    pub epsilon: f64,
    pub seed: u64,
    pub excess_mse: Option<f64>,
    pub zero_one_loss: Option<f64>,
    pub dist_to_ustar: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub clip_rate: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

/// Regenerates the planted model and every client's dataset from a seed.
pub fn build_problem(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(GroundTruthModel, Vec<ClientDataset>), synth::SynthError> {
    let p = &cfg.problem;
    let model = synth::gen_ground_truth(p.d, p.k, p.n, p.heads, p.noise_r, seed)?;
    let dist = FeatureDistribution {
        kind: p.features,
        dim: p.d,
    };
    let clients = (0..p.n)
        .map(|i| {
            synth::sample_client_data(
                &model,
                &dist,
                p.m,
                cfg.fedrep.rounds,
                cfg.fedrep.batch_size,
                i,
                seed,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((model, clients))
}

/// ψ_init resolution: the configured value, or the 99.9th-percentile
/// ‖Z_i‖_F over a disposable probe draw of up to 200 clients whose random
/// streams are salted away from the experiment's.
pub fn resolve_psi_init(
    cfg: &ExperimentConfig,
    model: &GroundTruthModel,
    seed: u64,
) -> Result<f64, synth::SynthError> {
    if let Some(psi) = cfg.privacy.psi_init {
        return Ok(psi);
    }
    let p = &cfg.problem;
    let dist = FeatureDistribution {
        kind: p.features,
        dim: p.d,
    };
    let probes = p.n.clamp(2, 200);
    let probe_seed = seed ^ PSI_PROBE_SALT;
    let mut norms: Vec<f64> = (0..probes)
        .map(|i| {
            let ds = synth::sample_client_data(
                model,
                &dist,
                p.m,
                cfg.fedrep.rounds,
                cfg.fedrep.batch_size,
                i,
                probe_seed,
            )?;
            Ok(privrep_core::init::client_init_statistic(&ds)
                .expect("probe clients have at least 2 samples in S0")
                .frob_norm())
        })
        .collect::<Result<Vec<_>, synth::SynthError>>()?;
    norms.sort_by(|a, b| a.total_cmp(b));
    let idx = ((0.999 * norms.len() as f64).ceil() as usize).clamp(1, norms.len()) - 1;
    Ok(norms[idx])
}

fn resolve_eta(cfg: &ExperimentConfig, model: &GroundTruthModel) -> f64 {
    match cfg.fedrep.eta {
        Some(eta) => eta,
        None => {
            let lambda_cap = match cfg.fedrep.sigma_max_bound {
                OracleOr::Value(v) => v,
                OracleOr::Oracle => model.sigma_max_star,
            };
            fedrep::eta_from_sigma_max_bound(lambda_cap)
        }
    }
}

fn bound_value(b: OracleOr, oracle: f64) -> Option<f64> {
    match b {
        OracleOr::Oracle => Some(oracle),
        OracleOr::Value(v) => Some(v),
    }
}

/// Assembles the core training config for one (ε, seed) cell. `epsilon`
/// infinite or accountant `Off` disables both noise injections but keeps the
/// clip bound, which is what the non-private baseline runs with.
pub fn fedrep_cell_config(
    cfg: &ExperimentConfig,
    model: &GroundTruthModel,
    epsilon: f64,
    psi_init: f64,
) -> Result<FedRepConfig, dp::DpError> {
    let accountant = if epsilon.is_infinite() {
        NoiseMode::Off
    } else {
        cfg.privacy.accountant
    };
    let spec = PrivacySpec {
        epsilon,
        delta: cfg.privacy.delta,
        clip_psi: if cfg.fedrep.clip_psi.is_finite() {
            cfg.fedrep.clip_psi
        } else {
            1.0
        },
        clip_psi_init: psi_init,
        rounds: cfg.fedrep.rounds.max(1),
        n_users: cfg.problem.n,
    };
    let (train_noise, init_noise) = match accountant {
        NoiseMode::Off => (NoiseScale::off(), NoiseScale::off()),
        mode => {
            if !cfg.fedrep.clip_psi.is_finite() {
                return Err(dp::DpError::InvalidClipBound(cfg.fedrep.clip_psi));
            }
            (
                dp::calibrate_training_noise(&spec, mode)?,
                dp::calibrate_init_noise(&spec)?,
            )
        }
    };
    let init = if cfg.fedrep.init_private {
        InitMode::PrivateInit {
            k: cfg.problem.k,
            psi_init,
            noise: init_noise,
        }
    } else {
        InitMode::RandomOrthonormal { k: cfg.problem.k }
    };
    Ok(FedRepConfig {
        eta: resolve_eta(cfg, model),
        rounds: cfg.fedrep.rounds,
        batch_size: cfg.fedrep.batch_size,
        clip_psi: cfg.fedrep.clip_psi,
        noise: train_noise,
        sigma_min_bound: bound_value(cfg.fedrep.sigma_min_bound, model.sigma_min_star),
        sigma_max_bound: bound_value(cfg.fedrep.sigma_max_bound, model.sigma_max_star),
        init,
    })
}

pub fn heads_matrix(out: &TrainOutput, k: usize) -> Mat {
    let mut h = Mat::zeros(out.heads.len(), k);
    for (i, head) in out.heads.iter().enumerate() {
        h.row_mut(i).copy_from_slice(&head.v);
    }
    h
}

/// One FedRep cell (private or, with infinite ε / accountant off, the
/// non-private baseline). Returns the full training output for trace
/// printing plus the assembled row.
pub fn run_fedrep_cell(
    cfg: &ExperimentConfig,
    epsilon: f64,
    seed: u64,
    method: &'static str,
) -> Result<(TrainOutput, ResultRow), RunError> {
    let fail = |message: String| RunError {
        method,
        epsilon,
        seed,
        message,
    };
    let started = Instant::now();
    let (model, clients) = build_problem(cfg, seed).map_err(|e| fail(e.to_string()))?;
    let psi_init = resolve_psi_init(cfg, &model, seed).map_err(|e| fail(e.to_string()))?;
    let core_cfg =
        fedrep_cell_config(cfg, &model, epsilon, psi_init).map_err(|e| fail(e.to_string()))?;
    let out = fedrep::train(&clients, &core_cfg, Some(&model.u_star), seed)
        .map_err(|e| fail(e.to_string()))?;

    let heads = heads_matrix(&out, cfg.problem.k);
    let excess = metrics::excess_population_risk(out.state.basis.cols(), &heads, &model);
    let dist = out
        .trace
        .rows
        .last()
        .and_then(|r| r.dist_to_u_star)
        .or(out.trace.init_dist);
    let clip_rate = if out.trace.rows.is_empty() {
        None
    } else {
        Some(
            out.trace.rows.iter().map(|r| r.clip_fraction).sum::<f64>()
                / out.trace.rows.len() as f64,
        )
    };
    let wall = started.elapsed().as_secs_f64() * 1e3;
    let row = ResultRow {
        method,
        epsilon,
        seed,
        excess_mse: Some(excess),
        zero_one_loss: None,
        dist_to_ustar: dist,
        wall_time_ms: cfg.timing.then_some(wall),
        clip_rate: if cfg.fedrep.clip_psi.is_finite() {
            clip_rate
        } else {
            None
        },
    };
    Ok((out, row))
}

fn run_local_gd_cell(cfg: &ExperimentConfig, seed: u64) -> Result<ResultRow, RunError> {
    let fail = |message: String| RunError {
        method: "local_gd",
        epsilon: f64::INFINITY,
        seed,
        message,
    };
    let started = Instant::now();
    let (model, clients) = build_problem(cfg, seed).map_err(|e| fail(e.to_string()))?;
    let rate = match cfg.local_gd.lr {
        Some(lr) => GdRate::Fixed(lr),
        None => GdRate::AutoHalfInverseLipschitz,
    };
    let weights = metrics::local_gd_baseline(&clients, cfg.local_gd.steps, rate)
        .map_err(|e| fail(e.to_string()))?;
    let excess = metrics::excess_risk_from_weights(&weights, &model);
    let wall = started.elapsed().as_secs_f64() * 1e3;
    Ok(ResultRow {
        method: "local_gd",
        epsilon: f64::INFINITY,
        seed,
        excess_mse: Some(excess),
        zero_one_loss: None,
        dist_to_ustar: None,
        wall_time_ms: cfg.timing.then_some(wall),
        clip_rate: None,
    })
}

/// Builds the classification ground truth and datasets for one seed.
pub fn build_class_problem(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(ClassProblem, Vec<synth::BoundedClassDataset>), synth::SynthError> {
    let p = &cfg.problem;
    let c = cfg
        .classify
        .as_ref()
        .expect("validated: classify section present");
    let model = synth::gen_ground_truth(p.d, p.k, p.n, p.heads, 0.0, seed)?;
    let problem = ClassProblem {
        u_star: model.u_star.clone(),
        v_star: model.v_star.clone(),
        radius: c.radius,
        margin: c.margin,
    };
    let data = synth::sample_class_data(&problem, p.m, p.n, seed)?;
    Ok((problem, data))
}

/// One classification cell; returns the pipeline output for report printing
/// plus the assembled row.
pub fn run_classify_cell(
    cfg: &ExperimentConfig,
    epsilon: f64,
    seed: u64,
) -> Result<(classify::ClassifyOutput, ResultRow), RunError> {
    let fail = |message: String| RunError {
        method: "jl_classify",
        epsilon,
        seed,
        message,
    };
    let c = cfg
        .classify
        .as_ref()
        .expect("validated: classify section present");
    let started = Instant::now();
    let (problem, data) = build_class_problem(cfg, seed).map_err(|e| fail(e.to_string()))?;
    let classify_cfg = ClassifyConfig {
        params: classify::MarginParams {
            rho: c.rho,
            gamma_head: c.gamma_head,
            radius: c.radius,
        },
        epsilon,
        cover_gamma: c.cover_gamma,
        cover_kind: c.cover_kind,
        cover_cap: c.cover_cap,
        k_prime: c.k_prime,
        solver: c.solver,
        head_rho: c.head_rho,
    };
    let out = classify::private_classify(&data, &classify_cfg, cfg.problem.k, seed)
        .map_err(|e| fail(e.to_string()))?;

    let loss = metrics::classification_population_loss(
        &out.u_priv,
        &out.heads,
        &problem,
        MC_BUDGET,
        StreamKey::new(seed, Purpose::MonteCarlo),
    );
    // Distance of the lifted span to the planted one, when the lift has
    // full column rank.
    let dist = subspace::qr_orthonormalize(&out.u_priv)
        .ok()
        .map(|(q, _)| subspace::principal_dist(&q, &problem.u_star).expect("shapes match"));
    let wall = started.elapsed().as_secs_f64() * 1e3;
    let row = ResultRow {
        method: "jl_classify",
        epsilon,
        seed,
        excess_mse: None,
        zero_one_loss: Some(loss),
        dist_to_ustar: dist,
        wall_time_ms: cfg.timing.then_some(wall),
        clip_rate: None,
    };
    Ok((out, row))
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    method: Method,
    /// `None` for ε-independent methods.
    epsilon: Option<f64>,
    seed: u64,
}

fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<Vec<ResultRow>, RunError> {
    let replicate = |row: ResultRow| -> Vec<ResultRow> {
        if cfg.privacy.epsilons.is_empty() {
            vec![row]
        } else {
            cfg.privacy
                .epsilons
                .iter()
                .map(|&e| ResultRow {
                    epsilon: e,
                    ..row.clone()
                })
                .collect()
        }
    };
    match cell.method {
        Method::PrivateFedRep => {
            let eps = cell.epsilon.expect("private cell has epsilon");
            let (_, row) = run_fedrep_cell(cfg, eps, cell.seed, "private_fedrep")?;
            Ok(vec![row])
        }
        Method::FedRep => {
            let (_, row) = run_fedrep_cell(cfg, f64::INFINITY, cell.seed, "fedrep")?;
            Ok(replicate(row))
        }
        Method::LocalGd => Ok(replicate(run_local_gd_cell(cfg, cell.seed)?)),
        Method::JlClassify => {
            let eps = cell.epsilon.expect("private cell has epsilon");
            let (_, row) = run_classify_cell(cfg, eps, cell.seed)?;
            Ok(vec![row])
        }
    }
}

/// Runs every (method, ε, seed) cell on a pool of `threads` workers and
/// returns the sorted row table. Identical configs produce identical tables
/// regardless of `threads`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentResult, RunError> {
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &seed in &cfg.seeds {
            if method.is_private() && cfg.privacy.accountant != NoiseMode::Off {
                for &eps in &cfg.privacy.epsilons {
                    cells.push(Cell {
                        method,
                        epsilon: Some(eps),
                        seed,
                    });
                }
            } else if method.is_private() {
                // Accountant off: the "private" pipeline runs noise-free once.
                cells.push(Cell {
                    method,
                    epsilon: Some(f64::INFINITY),
                    seed,
                });
            } else {
                cells.push(Cell {
                    method,
                    epsilon: None,
                    seed,
                });
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<Vec<ResultRow>, RunError>>> = Mutex::new(Vec::new());
    let workers = threads.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let outcome = run_cell(cfg, cells[i]);
                results.lock().unwrap().push(outcome);
            });
        }
    });

    let mut rows = Vec::new();
    for outcome in results.into_inner().unwrap() {
        rows.extend(outcome?);
    }
    rows.sort_by(|a, b| {
        a.method
            .cmp(b.method)
            .then(a.epsilon.total_cmp(&b.epsilon))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(ExperimentResult { rows })
}
