//! Flat `key = value` experiment configuration.
//!
//! The format is a plain text file: one `key = value` pair per line, `#`
//! comments, blank lines ignored. Keys are dotted paths (`problem.d`,
//! `privacy.delta`). Run `privrep describe-config` for the full schema.
//! Validation errors carry the offending key so a bad config points at
//! itself.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use privrep_core::classify::{CoverKind, HeadSolver, KPrimeRule};
use privrep_core::dp::NoiseMode;
use privrep_core::synth::{FeatureKind, HeadStyle, MarginStyle};

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        field: field.to_string(),
        message: message.into(),
    })
}

/// Which pipelines a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    PrivateFedRep,
    FedRep,
    LocalGd,
    JlClassify,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PrivateFedRep => "private_fedrep",
            Method::FedRep => "fedrep",
            Method::LocalGd => "local_gd",
            Method::JlClassify => "jl_classify",
        }
    }

    /// Whether the method consumes the privacy budget (one run per ε).
    pub fn is_private(self) -> bool {
        matches!(self, Method::PrivateFedRep | Method::JlClassify)
    }
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub noise_r: f64,
    pub features: FeatureKind,
    pub heads: HeadStyle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleOr {
    Oracle,
    Value(f64),
}

#[derive(Debug, Clone)]
pub struct FedRepSection {
    pub rounds: usize,
    /// `None` means "auto": η = 1/(2Λ²) from `sigma_max_bound`.
    pub eta: Option<f64>,
    pub batch_size: usize,
    pub clip_psi: f64,
    pub init_private: bool,
    pub sigma_min_bound: OracleOr,
    pub sigma_max_bound: OracleOr,
}

#[derive(Debug, Clone)]
pub struct PrivacySection {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub accountant: NoiseMode,
    /// `None` means "auto": 99.9th-percentile ‖Z_i‖_F on a disposable draw.
    pub psi_init: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ClassifySection {
    pub rho: f64,
    pub gamma_head: f64,
    pub radius: f64,
    pub k_prime: KPrimeRule,
    pub cover_gamma: f64,
    pub cover_kind: CoverKind,
    pub cover_cap: usize,
    pub solver: HeadSolver,
    pub head_rho: f64,
    pub margin: MarginStyle,
}

#[derive(Debug, Clone)]
pub struct LocalGdSection {
    pub steps: usize,
    /// `None` means the auto 1/(2 λ_max) rule.
    pub lr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub fedrep: FedRepSection,
    pub privacy: PrivacySection,
    pub classify: Option<ClassifySection>,
    pub local_gd: LocalGdSection,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub timing: bool,
    pub output_dir: String,
}

struct Raw {
    map: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        let v = self.map.get(key).map(String::as_str);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        match self.get(key) {
            Some(v) => Ok(v),
            None => err(key, "missing required key"),
        }
    }

    fn usize_req(&self, key: &str) -> Result<usize, ConfigError> {
        let raw = self.required(key)?;
        raw.parse()
            .or_else(|_| err(key, format!("expected a nonnegative integer, got `{raw}`")))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .or_else(|_| err(key, format!("expected a nonnegative integer, got `{raw}`"))),
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        let raw = self.required(key)?;
        parse_f64(key, raw)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => parse_f64(key, raw),
        }
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, ConfigError> {
    match raw {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => raw
            .parse()
            .or_else(|_| err(key, format!("expected a number, got `{raw}`"))),
    }
}

/// Parses the text form. Unknown keys are rejected so typos cannot silently
/// fall back to defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(
                &format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            );
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return err(&key, "duplicate key");
        }
    }
    let raw = Raw {
        map,
        used: Default::default(),
    };
    let cfg = build(&raw)?;
    for key in raw.map.keys() {
        if !raw.used.borrow().contains(key) {
            return err(
                key,
                "unknown key (run `privrep describe-config` for the schema)",
            );
        }
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

fn build(raw: &Raw) -> Result<ExperimentConfig, ConfigError> {
    let problem = ProblemConfig {
        d: raw.usize_req("problem.d")?,
        k: raw.usize_req("problem.k")?,
        n: raw.usize_req("problem.n")?,
        m: raw.usize_req("problem.m")?,
        noise_r: raw.f64_or("problem.noise_r", 0.0)?,
        features: match raw.get("problem.features").unwrap_or("gaussian") {
            "gaussian" => FeatureKind::StandardGaussian,
            "rademacher" => FeatureKind::ScaledRademacher,
            "sphere" => FeatureKind::UniformSphereScaled,
            other => {
                return err(
                    "problem.features",
                    format!("expected gaussian|rademacher|sphere, got `{other}`"),
                )
            }
        },
        heads: match raw.get("problem.heads").unwrap_or("gaussian") {
            "gaussian" => HeadStyle::GaussianHeads,
            "unit" => HeadStyle::UnitScaledHeads,
            other => {
                return err(
                    "problem.heads",
                    format!("expected gaussian|unit, got `{other}`"),
                )
            }
        },
    };

    let parse_oracle_or = |key: &str| -> Result<OracleOr, ConfigError> {
        match raw.get(key) {
            None | Some("oracle") => Ok(OracleOr::Oracle),
            Some(v) => Ok(OracleOr::Value(parse_f64(key, v)?)),
        }
    };

    let fedrep = FedRepSection {
        rounds: raw.usize_or("fedrep.rounds", 5)?,
        eta: match raw.get("fedrep.eta") {
            None | Some("auto") => None,
            Some(v) => Some(parse_f64("fedrep.eta", v)?),
        },
        batch_size: raw.usize_or("fedrep.batch_size", 1)?,
        clip_psi: raw.f64_or("fedrep.clip_psi", f64::INFINITY)?,
        init_private: match raw.get("fedrep.init").unwrap_or("private") {
            "private" => true,
            "random" => false,
            other => {
                return err(
                    "fedrep.init",
                    format!("expected private|random, got `{other}`"),
                )
            }
        },
        sigma_min_bound: parse_oracle_or("fedrep.sigma_min_bound")?,
        sigma_max_bound: parse_oracle_or("fedrep.sigma_max_bound")?,
    };

    let epsilons: Vec<f64> = match raw.get("privacy.epsilons") {
        None | Some("") => Vec::new(),
        Some(list) => list
            .split(',')
            .map(|tok| parse_f64("privacy.epsilons", tok.trim()))
            .collect::<Result<_, _>>()?,
    };
    let privacy = PrivacySection {
        epsilons,
        delta: raw.f64_or("privacy.delta", 1e-6)?,
        accountant: match raw.get("privacy.accountant").unwrap_or("fixed") {
            "fixed" => NoiseMode::FixedConstant,
            "zcdp" => NoiseMode::ZcdpExact,
            "off" => NoiseMode::Off,
            other => {
                return err(
                    "privacy.accountant",
                    format!("expected fixed|zcdp|off, got `{other}`"),
                )
            }
        },
        psi_init: match raw.get("privacy.psi_init") {
            None | Some("auto") => None,
            Some(v) => Some(parse_f64("privacy.psi_init", v)?),
        },
    };

    let methods: Vec<Method> = match raw.get("methods") {
        None => vec![Method::PrivateFedRep, Method::FedRep, Method::LocalGd],
        Some(list) => {
            let mut out = Vec::new();
            for tok in list.split(',') {
                out.push(match tok.trim() {
                    "private_fedrep" => Method::PrivateFedRep,
                    "fedrep" => Method::FedRep,
                    "local_gd" => Method::LocalGd,
                    "jl_classify" => Method::JlClassify,
                    other => {
                        return err(
                            "methods",
                            format!(
                            "expected private_fedrep|fedrep|local_gd|jl_classify, got `{other}`"
                        ),
                        )
                    }
                });
            }
            out
        }
    };

    let classify = if raw.map.keys().any(|k| k.starts_with("classify."))
        || methods.contains(&Method::JlClassify)
    {
        let rho = raw.f64_req("classify.rho")?;
        Some(ClassifySection {
            rho,
            gamma_head: raw.f64_or("classify.gamma_head", 1.0)?,
            radius: raw.f64_or("classify.radius", 1.0)?,
            k_prime: match raw.get("classify.k_prime") {
                None | Some("auto") => KPrimeRule::Auto {
                    constant: raw.f64_or("classify.kp_constant", 8.0)?,
                    beta: raw.f64_or("classify.kp_beta", 0.05)?,
                },
                Some(v) => {
                    // Consume the auto knobs even when unused, so configs can
                    // switch between fixed and auto without key errors.
                    let _ = raw.f64_or("classify.kp_constant", 8.0)?;
                    let _ = raw.f64_or("classify.kp_beta", 0.05)?;
                    KPrimeRule::Fixed(v.parse().or_else(|_| {
                        err(
                            "classify.k_prime",
                            format!("expected auto or an integer, got `{v}`"),
                        )
                    })?)
                }
            },
            cover_gamma: raw.f64_or("classify.cover_gamma", 0.5)?,
            cover_kind: match raw.get("classify.cover").unwrap_or("lattice") {
                "lattice" => CoverKind::Lattice,
                other => match other.strip_prefix("random:") {
                    Some(count) => CoverKind::RandomNet(count.parse().or_else(|_| {
                        err(
                            "classify.cover",
                            format!("expected lattice|random:<count>, got `{other}`"),
                        )
                    })?),
                    None => {
                        return err(
                            "classify.cover",
                            format!("expected lattice|random:<count>, got `{other}`"),
                        )
                    }
                },
            },
            cover_cap: raw.usize_or("classify.cover_cap", 1_000_000)?,
            solver: match raw.get("classify.solver").unwrap_or("exact1d") {
                "exact1d" => HeadSolver::Exact1D,
                other => match other.strip_prefix("grid:") {
                    Some(res) => HeadSolver::GridSearch {
                        points_per_axis: res.parse().or_else(|_| {
                            err(
                                "classify.solver",
                                format!("expected exact1d|grid:<res>, got `{other}`"),
                            )
                        })?,
                    },
                    None => {
                        return err(
                            "classify.solver",
                            format!("expected exact1d|grid:<res>, got `{other}`"),
                        )
                    }
                },
            },
            head_rho: raw.f64_or("classify.head_rho", 0.0)?,
            margin: match raw.get("classify.margin").unwrap_or("enforce") {
                "enforce" => MarginStyle::EnforceMargin(rho),
                "natural" => MarginStyle::Natural,
                other => {
                    return err(
                        "classify.margin",
                        format!("expected enforce|natural, got `{other}`"),
                    )
                }
            },
        })
    } else {
        None
    };

    let local_gd = LocalGdSection {
        steps: raw.usize_or("local_gd.steps", 500)?,
        lr: match raw.get("local_gd.lr") {
            None | Some("auto") => None,
            Some(v) => Some(parse_f64("local_gd.lr", v)?),
        },
    };

    let seeds: Vec<u64> = match raw.get("seeds") {
        None => vec![0],
        Some(list) => list
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .or_else(|_| err("seeds", format!("expected integers, got `{}`", tok.trim())))
            })
            .collect::<Result<_, _>>()?,
    };

    let timing = match raw.get("timing").unwrap_or("on") {
        "on" => true,
        "off" => false,
        other => return err("timing", format!("expected on|off, got `{other}`")),
    };

    let cfg = ExperimentConfig {
        problem,
        fedrep,
        privacy,
        classify,
        local_gd,
        methods,
        seeds,
        timing,
        output_dir: raw.get("output_dir").unwrap_or("out").to_string(),
    };
    validate(&cfg)?;
    Ok(cfg)
}

/// Cross-field validation mirroring the downstream modules' preconditions,
/// surfaced with config field paths.
fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let p = &cfg.problem;
    if p.d == 0 || p.k == 0 || p.n == 0 || p.m == 0 {
        return err("problem", "d, k, n, m must all be positive");
    }
    if p.k > p.d || p.k > p.n {
        return err(
            "problem.k",
            format!("need k <= min(d, n); k={}, d={}, n={}", p.k, p.d, p.n),
        );
    }
    if p.noise_r < 0.0 {
        return err("problem.noise_r", "must be nonnegative");
    }
    let f = &cfg.fedrep;
    if let Some(eta) = f.eta {
        if !(eta > 0.0) {
            return err("fedrep.eta", "must be positive");
        }
    } else if f.sigma_max_bound == OracleOr::Oracle {
        // auto eta needs a Λ; the oracle value works, nothing to check.
    }
    if f.batch_size == 0 {
        return err("fedrep.batch_size", "must be positive");
    }
    if f.rounds > 0 && 2 * f.batch_size > p.m / 2 {
        return err(
            "fedrep.batch_size",
            format!(
                "one round needs two disjoint batches: 2*b = {} exceeds |S0| = {}",
                2 * f.batch_size,
                p.m / 2
            ),
        );
    }
    if !(f.clip_psi > 0.0) {
        return err("fedrep.clip_psi", "must be positive (or inf to disable)");
    }
    if let (OracleOr::Value(lo), OracleOr::Value(hi)) = (f.sigma_min_bound, f.sigma_max_bound) {
        if !(hi >= lo && lo > 0.0) {
            return err(
                "fedrep.sigma_min_bound",
                "need sigma_max_bound >= sigma_min_bound > 0",
            );
        }
    }
    let pr = &cfg.privacy;
    let needs_budget =
        cfg.methods.iter().any(|m| m.is_private()) && pr.accountant != NoiseMode::Off;
    if needs_budget {
        if pr.epsilons.is_empty() {
            return err(
                "privacy.epsilons",
                "private methods need at least one epsilon",
            );
        }
        for &e in &pr.epsilons {
            if !(e > 0.0) {
                return err(
                    "privacy.epsilons",
                    format!("epsilon must be positive, got {e}"),
                );
            }
        }
        if !(pr.delta > 0.0 && pr.delta < 1.0) {
            return err(
                "privacy.delta",
                format!("must lie in (0, 1), got {}", pr.delta),
            );
        }
    }
    if let Some(psi) = pr.psi_init {
        if !(psi > 0.0) {
            return err("privacy.psi_init", "must be positive (or auto)");
        }
    }
    if let Some(c) = &cfg.classify {
        if !(c.rho > 0.0) {
            return err("classify.rho", "must be positive");
        }
        if !(c.gamma_head > 0.0) {
            return err("classify.gamma_head", "must be positive");
        }
        if !(c.radius > 0.0) {
            return err("classify.radius", "must be positive");
        }
        if !(c.cover_gamma > 0.0 && c.cover_gamma <= 1.0) {
            return err("classify.cover_gamma", "must lie in (0, 1]");
        }
        if c.head_rho < 0.0 {
            return err("classify.head_rho", "must be nonnegative");
        }
        if let MarginStyle::EnforceMargin(rho) = c.margin {
            if rho >= c.radius {
                return err(
                    "classify.rho",
                    format!(
                        "margin {rho} cannot be enforced inside a radius-{} ball",
                        c.radius
                    ),
                );
            }
        }
        if c.solver == HeadSolver::Exact1D && p.k != 1 {
            return err(
                "classify.solver",
                format!("exact1d requires problem.k = 1, got k = {}", p.k),
            );
        }
    } else if cfg.methods.contains(&Method::JlClassify) {
        return err(
            "classify.rho",
            "jl_classify requires the classify.* section",
        );
    }
    if cfg.methods.is_empty() {
        return err("methods", "need at least one method");
    }
    if cfg.seeds.is_empty() {
        return err("seeds", "need at least one seed");
    }
    if cfg.local_gd.steps == 0 {
        return err("local_gd.steps", "must be positive");
    }
    Ok(())
}

/// Schema text for `describe-config`.
pub fn schema() -> &'static str {
    r#"Experiment configuration: flat `key = value` lines, `#` comments.

Problem (planted model and per-user data):
  problem.d = <int>              ambient feature dimension
  problem.k = <int>              shared-embedding rank (k <= min(d, n))
  problem.n = <int>              number of users
  problem.m = <int>              samples per user (halved into S0 | S1)
  problem.noise_r = <float>      label-noise std R (default 0)
  problem.features = gaussian|rademacher|sphere   (default gaussian)
  problem.heads = gaussian|unit  head-vector style (default gaussian)

Federated training:
  fedrep.rounds = <int>          alternating rounds T (default 5)
  fedrep.eta = <float>|auto      step size; auto = 1/(2*Lambda^2) (default auto)
  fedrep.batch_size = <int>      per-round batch size b (default 1)
  fedrep.clip_psi = <float>|inf  gradient clip bound psi (default inf)
  fedrep.init = private|random   embedding initialization (default private)
  fedrep.sigma_min_bound = oracle|<float>   lambda knob (default oracle)
  fedrep.sigma_max_bound = oracle|<float>   Lambda knob (default oracle)

Privacy budget:
  privacy.epsilons = <floats,comma-separated>
  privacy.delta = <float>        (default 1e-6)
  privacy.accountant = fixed|zcdp|off       (default fixed)
  privacy.psi_init = <float>|auto            init clip bound (default auto:
                                 99.9th-percentile ||Z_i||_F on a probe draw)

Classification pipeline (required iff methods includes jl_classify):
  classify.rho = <float>         margin rho
  classify.gamma_head = <float>  head-norm bound Gamma (default 1)
  classify.radius = <float>      feature ball radius r (default 1)
  classify.k_prime = <int>|auto  sketch dimension (default auto)
  classify.kp_constant = <float> auto-k' constant c (default 8)
  classify.kp_beta = <float>     auto-k' failure prob beta (default 0.05)
  classify.cover_gamma = <float> cover radius gamma in (0,1] (default 0.5)
  classify.cover = lattice|random:<count>    (default lattice)
  classify.cover_cap = <int>     lattice cardinality cap (default 1000000)
  classify.solver = exact1d|grid:<res>       head solver (default exact1d)
  classify.head_rho = <float>    margin for the final head fit (default 0)
  classify.margin = enforce|natural          data margin policy (default enforce)

Local baseline:
  local_gd.steps = <int>         (default 500)
  local_gd.lr = <float>|auto     (default auto: 1/(2*lambda_max) per client)

Run control:
  methods = private_fedrep,fedrep,local_gd,jl_classify
                                 (default private_fedrep,fedrep,local_gd)
  seeds = <ints,comma-separated> (default 0)
  timing = on|off                wall_time_ms column; off makes output
                                 byte-reproducible (default on)
  output_dir = <path>            (default out)
"#
}
