//! Command-line driver: metric estimation, classification experiments,
//! synthetic subspace-recovery runs, and perturbation property reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ejop::harness::config::{ExperimentConfig, RecoverConfig};
use ejop::harness::experiment::{emit_report, report_table, run_experiment};
use ejop::harness::io;
use ejop::jacobian::{estimate_ejop, EjopOptions, GradientGateConfig};
use ejop::neighbors::NeighborIndex;
use ejop::spectral::{eigendecompose, eigenvalue_perturbation_trials, sin_theta_trials};
use ejop::synthetic::{model_from_name, recovery_experiment, RecoveryCell};
use ejop::{EstimatorParams, LabeledDataset};

#[derive(Parser)]
#[command(
    name = "ejop",
    about = "Expected Jacobian outer-product metric estimation and experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set h_grid=0.5,1.0 (repeatable; applied
    /// after the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the EJOP on the whole dataset and export the matrix + transform.
    Estimate(ConfigArgs),
    /// One train/val/test evaluation; prints the result table.
    Classify(ConfigArgs),
    /// The full multi-run protocol; writes reports into output_dir.
    Experiment(ConfigArgs),
    /// Synthetic subspace-recovery experiment; writes a CSV of diagnostics.
    Recover(ConfigArgs),
    /// Run the eigenvalue / eigenspace perturbation suites and print slack
    /// statistics.
    ProptestReport {
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a default config file for a verb (experiment or recover).
    PrintConfig {
        #[arg(value_parser = ["experiment", "recover"])]
        kind: String,
    },
}

fn split_override(entry: &str) -> Result<(&str, &str)> {
    entry
        .split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .with_context(|| format!("override {entry:?} is not KEY=VALUE"))
}

fn load_experiment_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for entry in &args.overrides {
        let (k, v) = split_override(entry)?;
        config.set_key(k, v)?;
    }
    Ok(config)
}

fn load_recover_config(args: &ConfigArgs) -> Result<RecoverConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            RecoverConfig::parse(&text)?
        }
        None => RecoverConfig::default(),
    };
    for entry in &args.overrides {
        let (k, v) = split_override(entry)?;
        config.set_key(k, v)?;
    }
    Ok(config)
}

fn load_configured_dataset(config: &ExperimentConfig) -> Result<(LabeledDataset, String)> {
    if config.dataset_path.is_empty() {
        bail!("config needs dataset_path");
    }
    let path = Path::new(&config.dataset_path);
    let labels = config.labels_path.as_ref().map(PathBuf::from);
    let ds = io::load_dataset(path, config.dataset_format, labels.as_deref())?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Ok((ds, name))
}

fn cmd_estimate(args: &ConfigArgs) -> Result<()> {
    let config = load_experiment_config(args)?;
    let (ds, name) = load_configured_dataset(&config)?;
    let h = *config.h_grid.first().context("h_grid must be nonempty")?;
    let t = *config.t_grid.first().context("t_grid must be nonempty")?;
    eprintln!(
        "estimating EJOP on {name}: n={} d={} c={} (h={h}, t={t})",
        ds.n(),
        ds.dim(),
        ds.class_count()
    );
    let index = NeighborIndex::build(&ds)?;
    let params = EstimatorParams::new(h, t, config.delta, config.kernel)?;
    let gate = GradientGateConfig::with_mode(ds.n(), ds.dim(), config.delta, config.gate_mode)?;
    let g = estimate_ejop(&index, &params, &gate, &EjopOptions::default(), None)?;
    let transform = eigendecompose(&g)?;

    let out = Path::new(&config.output_dir);
    fs::create_dir_all(out)?;
    let matrix_path = out.join(format!("{name}.gop"));
    let transform_path = out.join(format!("{name}.transform"));
    io::export_ejop_matrix(&g, &matrix_path)?;
    io::export_transform(&transform, &transform_path)?;
    let top: Vec<String> = transform
        .eigvals()
        .iter()
        .take(5)
        .map(|l| format!("{l:.3e}"))
        .collect();
    println!(
        "wrote {} and {} (top eigenvalues: {})",
        matrix_path.display(),
        transform_path.display(),
        top.join(", ")
    );
    Ok(())
}

fn cmd_classify(args: &ConfigArgs) -> Result<()> {
    let mut config = load_experiment_config(args)?;
    config.runs = 1;
    let (ds, name) = load_configured_dataset(&config)?;
    let report = run_experiment(&config, &ds, &name)?;
    print!("{}", report_table(&report));
    Ok(())
}

fn cmd_experiment(args: &ConfigArgs) -> Result<()> {
    let config = load_experiment_config(args)?;
    let (ds, name) = load_configured_dataset(&config)?;
    let report = run_experiment(&config, &ds, &name)?;
    emit_report(&report, Path::new(&config.output_dir))?;
    print!("{}", report_table(&report));
    println!("reports written to {}", config.output_dir);
    Ok(())
}

fn cmd_recover(args: &ConfigArgs) -> Result<()> {
    let config = load_recover_config(args)?;
    let model = model_from_name(
        &config.link,
        config.d,
        config.r,
        config.noise,
        config.sampling,
        config.model_seed,
    )?;
    let cells = recovery_experiment(&model, &config.recovery_config())?;

    let out = Path::new(&config.output_dir);
    fs::create_dir_all(out)?;
    let mut csv = String::from(RecoveryCell::csv_header());
    csv.push('\n');
    for cell in &cells {
        csv.push_str(&cell.to_csv_row());
        csv.push('\n');
    }
    let csv_path = out.join("recovery.csv");
    fs::write(&csv_path, csv)?;

    for &n in &config.n_grid {
        let mut vals: Vec<f64> = cells
            .iter()
            .filter(|c| c.n == n)
            .map(|c| c.sin_theta)
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        println!("n={n}: median sin_theta = {:.4}", vals[vals.len() / 2]);
    }
    println!("cells written to {}", csv_path.display());
    Ok(())
}

fn cmd_proptest_report(trials: usize, seed: u64) -> Result<()> {
    let (spectral, frobenius) = eigenvalue_perturbation_trials(trials, 2..=10, seed);
    println!(
        "eigenvalue variation (spectral):  held {}/{} trials, slack min {:.3e}, median {:.3e}",
        spectral.held, spectral.trials, spectral.min_slack, spectral.median_slack
    );
    println!(
        "eigenvalue variation (frobenius): held {}/{} trials, slack min {:.3e}, median {:.3e}",
        frobenius.held, frobenius.trials, frobenius.min_slack, frobenius.median_slack
    );
    let st = sin_theta_trials(trials, 3..=10, 0.5, seed.wrapping_add(1));
    println!(
        "eigenspace variation (sin-theta): held {}/{} trials ({} gap-degenerate skips), slack min {:.3e}, median {:.3e}",
        st.held,
        st.trials - st.skipped,
        st.skipped,
        st.min_slack,
        st.median_slack
    );
    if spectral.held != spectral.trials
        || frobenius.held != frobenius.trials
        || st.held != st.trials - st.skipped
    {
        bail!("a perturbation inequality failed");
    }
    Ok(())
}

fn main() -> Result<()> {
    // Worker-count override; everything else comes from config/flags.
    if let Ok(workers) = std::env::var("EJOP_WORKERS") {
        let n: usize = workers
            .parse()
            .with_context(|| format!("EJOP_WORKERS={workers} is not a number"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing worker pool")?;
    }

    let cli = Cli::parse();
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Recover(args) => cmd_recover(args),
        Command::ProptestReport { trials, seed } => cmd_proptest_report(*trials, *seed),
        Command::PrintConfig { kind } => {
            match kind.as_str() {
                "experiment" => print!("{}", ExperimentConfig::default().serialize()),
                "recover" => print!("{}", RecoverConfig::default().serialize()),
                _ => unreachable!("clap validates"),
            }
            Ok(())
        }
    }
}
