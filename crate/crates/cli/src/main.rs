//! Command-line harness for private personalized representation learning:
//! synthetic-data dumps, single training runs, the private spectral
//! initialization on its own, the sketch-and-select classification pipeline,
//! and full ε-sweep experiments with CSV and SVG output.

use privrep_cli::{config, csvout, plot, runner};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use privrep_core::dp::NoiseMode;
use privrep_core::rng::{Purpose, StreamKey};
use privrep_core::{init, subspace};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "privrep",
    about = "Private personalized representation learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep cells.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump every client's dataset as one CSV per client.
    Synth(CommonArgs),
    /// Run one training cell at the first configured epsilon and print the
    /// per-round trace.
    Train(CommonArgs),
    /// Run the private spectral initialization alone.
    InitOnly(CommonArgs),
    /// Run the sketch-and-select classification pipeline once.
    Classify(CommonArgs),
    /// Run the full (method, epsilon, seed) sweep; emit CSV and SVG.
    Sweep(CommonArgs),
    /// Print the configuration schema.
    DescribeConfig,
}

enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

fn load(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = config::load_config(&args.config).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn first_epsilon(cfg: &ExperimentConfig) -> f64 {
    if cfg.privacy.accountant == NoiseMode::Off {
        f64::INFINITY
    } else {
        cfg.privacy
            .epsilons
            .first()
            .copied()
            .unwrap_or(f64::INFINITY)
    }
}

fn cmd_synth(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let dir = ensure_out_dir(&cfg)?;
    let seed = cfg.seeds[0];
    let (_, clients) =
        runner::build_problem(&cfg, seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    for ds in &clients {
        let path = dir.join(format!("client_{:05}.csv", ds.client_id));
        csvout::dump_client_csv(ds, &path).map_err(|e| CliError::Io(e.to_string()))?;
    }
    println!("wrote {} client files to {}", clients.len(), dir.display());
    Ok(())
}

fn cmd_train(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let seed = cfg.seeds[0];
    let epsilon = first_epsilon(&cfg);
    let (out, row) = runner::run_fedrep_cell(&cfg, epsilon, seed, "private_fedrep")
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    if let Some(report) = &out.init_report {
        println!(
            "init: sigma_init={:.6e} clip_fraction={:.3} degenerate_gap={}",
            report.sigma_init, report.clip_fraction, report.degenerate_gap
        );
    }
    if let Some(d0) = out.trace.init_dist {
        println!("round -- dist_to_ustar {d0:.6e} (initialization)");
    }
    for r in &out.trace.rows {
        println!(
            "round {:2} dist_to_ustar {} max_grad_norm {:.4e} clip_fraction {:.3}",
            r.round,
            r.dist_to_u_star
                .map_or("NA".to_string(), |d| format!("{d:.6e}")),
            r.max_grad_norm,
            r.clip_fraction
        );
    }
    let pseudo = out.heads.iter().filter(|h| h.used_pseudoinverse).count();
    if pseudo > 0 {
        println!(
            "note: {pseudo} of {} final heads used the minimum-norm pseudoinverse",
            out.heads.len()
        );
    }
    println!(
        "final: epsilon={} excess_mse={} dist_to_ustar={}",
        float_str(row.epsilon),
        row.excess_mse.map_or("NA".into(), |v| format!("{v:.6e}")),
        row.dist_to_ustar
            .map_or("NA".into(), |v| format!("{v:.6e}")),
    );
    Ok(())
}

fn cmd_init_only(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let seed = cfg.seeds[0];
    let epsilon = first_epsilon(&cfg);
    let (model, clients) =
        runner::build_problem(&cfg, seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    let psi_init = runner::resolve_psi_init(&cfg, &model, seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let core_cfg = runner::fedrep_cell_config(&cfg, &model, epsilon, psi_init)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let noise = match &core_cfg.init {
        privrep_core::fedrep::InitMode::PrivateInit { noise, .. } => *noise,
        _ => privrep_core::dp::NoiseScale::off(),
    };
    let report = init::private_init(
        &clients,
        cfg.problem.k,
        psi_init,
        &noise,
        StreamKey::new(seed, Purpose::InitNoise),
    )
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    let dist = subspace::principal_dist(&report.basis, &model.u_star)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    println!(
        "init-only: epsilon={} psi_init={:.6e} sigma_init={:.6e} clip_fraction={:.3} degenerate_gap={} dist_to_ustar={:.6e}",
        float_str(epsilon),
        psi_init,
        report.sigma_init,
        report.clip_fraction,
        report.degenerate_gap,
        dist
    );
    Ok(())
}

fn cmd_classify(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    if cfg.classify.is_none() {
        return Err(CliError::Config(
            "classify requires the classify.* config section".into(),
        ));
    }
    let seed = cfg.seeds[0];
    let epsilon = first_epsilon(&cfg);
    if !epsilon.is_finite() {
        return Err(CliError::Config(
            "classify needs a finite epsilon (the exponential mechanism has no off switch)".into(),
        ));
    }
    let (out, row) = runner::run_classify_cell(&cfg, epsilon, seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let r = &out.report;
    println!(
        "classify: k_prime={} cover_size={} guaranteed={} scores=[{:.4},{:.4}] selected={:.4} rank={} warn_resolution={}",
        r.k_prime,
        r.cover_size,
        r.guaranteed_cover,
        r.score_min,
        r.score_max,
        r.selected_score,
        r.selected_rank,
        r.resolution_warning
    );
    println!(
        "final: epsilon={} zero_one_loss={} dist_to_ustar={}",
        float_str(epsilon),
        row.zero_one_loss
            .map_or("NA".into(), |v| format!("{v:.6e}")),
        row.dist_to_ustar
            .map_or("NA".into(), |v| format!("{v:.6e}")),
    );
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let dir = ensure_out_dir(&cfg)?;
    let result = runner::run_experiment(&cfg, args.threads)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let csv_path = dir.join("results.csv");
    let svg_path = dir.join("results.svg");
    csvout::emit_csv(&result, &csv_path).map_err(|e| CliError::Io(e.to_string()))?;
    plot::emit_plot(&result, &svg_path).map_err(|e| CliError::Io(e.to_string()))?;
    println!(
        "wrote {} rows to {} and {}",
        result.rows.len(),
        csv_path.display(),
        svg_path.display()
    );
    Ok(())
}

fn float_str(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::InitOnly(a) => cmd_init_only(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::DescribeConfig => {
            print!("{}", config::schema());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
