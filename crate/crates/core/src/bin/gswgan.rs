//! Operator surface: reproducible training runs, accountant queries,
//! sampling from released checkpoints, and the pixel-flip debugging
//! scenario.
//!
//! Exit codes: 0 success, 1 configuration error, 2 privacy-budget halt,
//! 3 I/O error.

use clap::{Args, Parser, Subcommand};
use gswgan::accountant::PrivacyLedger;
use gswgan::checkpoint::GeneratorCheckpoint;
use gswgan::config::{parse_kv_file, DatasetSpec, TrainConfig};
use gswgan::data::write_samples_csv;
use gswgan::error::Error;
use gswgan::federated::{bug_scenario, clients_from_partition, conservation_holds, server_train};
use gswgan::gan::{generate_from, sample_labels, sample_latent};
use gswgan::rng::seeded;
use gswgan::trainer::{train, write_metrics_csv, RunManifest, TrainOutcome};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gswgan",
    about = "Differentially private GAN training via selective gradient sanitization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Centralized training with per-shard discriminators.
    TrainCentral(TrainArgs),
    /// Simulated federated training; discriminators stay on clients.
    TrainFederated(TrainArgs),
    /// Pure privacy-budget query; touches no data.
    Accountant(AccountantArgs),
    /// Draw labeled samples from a released generator checkpoint.
    Sample(SampleArgs),
    /// Pixel-flip debugging task on glyph clients.
    BugScenario(BugArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file; flags override file entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: "ring" or "glyphs".
    #[arg(long, default_value = "ring")]
    dataset: String,
    #[arg(long)]
    modes: Option<u32>,
    #[arg(long)]
    n_per_mode: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    data_std: Option<f64>,
    #[arg(long)]
    glyph_classes: Option<u32>,
    #[arg(long)]
    glyph_count: Option<usize>,
    #[arg(long)]
    glyph_noise: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,

    #[arg(long)]
    gamma: Option<f64>,
    /// Federated client count; sets gamma = 1/clients.
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    clip_bound: Option<f64>,
    #[arg(long)]
    warm_iters: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    n_dis: Option<u32>,
    #[arg(long)]
    batch: Option<u32>,
    #[arg(long)]
    eta_d: Option<f64>,
    #[arg(long)]
    eta_g: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    lambda_gp: Option<f64>,
    /// Required to run with sigma = 0.
    #[arg(long)]
    non_private: bool,
    #[arg(long)]
    epsilon_ceiling: Option<f64>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    metrics_every: Option<u64>,
    /// Output directory; defaults under the output root.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AccountantArgs {
    #[arg(long, default_value_t = 1.07)]
    sigma: f64,
    #[arg(long, default_value_t = 0.001)]
    gamma: f64,
    #[arg(long, default_value_t = 32)]
    batch: u32,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BugArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    clients_per_pool: usize,
    #[arg(long, default_value_t = 64)]
    glyphs_per_client: usize,
    #[arg(long, default_value_t = 4)]
    glyph_classes: u32,
    #[arg(long, default_value_t = 0.02)]
    glyph_noise: f64,
    #[arg(long)]
    flip_fraction: f64,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    non_private: bool,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    warm_iters: Option<u64>,
    #[arg(long)]
    batch: Option<u32>,
    #[arg(long)]
    eta_d: Option<f64>,
    #[arg(long)]
    eta_g: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Io(_) | Error::Json(_) | Error::CorruptCheckpoint(_) => ExitCode::from(3),
        Error::BudgetExceeded { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os("GSWGAN_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn resolve_config(args: &TrainArgs) -> Result<TrainConfig, Error> {
    let mut config = TrainConfig::default();
    if let Some(path) = &args.config {
        config.apply_kv(&parse_kv_file(path)?)?;
    }
    let mut overrides: BTreeMap<String, String> = BTreeMap::new();
    macro_rules! flag {
        ($field:ident) => {
            if let Some(v) = &args.$field {
                overrides.insert(stringify!($field).to_string(), v.to_string());
            }
        };
    }
    flag!(gamma);
    flag!(sigma);
    flag!(clip_bound);
    flag!(warm_iters);
    flag!(steps);
    flag!(n_dis);
    flag!(batch);
    flag!(eta_d);
    flag!(eta_g);
    flag!(delta);
    flag!(seed);
    flag!(latent_dim);
    flag!(lambda_gp);
    flag!(epsilon_ceiling);
    flag!(optimizer);
    flag!(metrics_every);
    if let Some(k) = args.clients {
        if k == 0 {
            return Err(Error::InvalidConfig("clients must be >= 1".into()));
        }
        overrides.insert("gamma".into(), format!("{}", 1.0 / k as f64));
    }
    config.apply_kv(&overrides)?;
    if args.non_private {
        config.non_private = true;
    }
    config.validate()?;
    Ok(config)
}

fn resolve_dataset(args: &TrainArgs) -> Result<DatasetSpec, Error> {
    match args.dataset.as_str() {
        "ring" => {
            let mut spec = DatasetSpec::default_ring();
            if let DatasetSpec::Ring {
                modes,
                n_per_mode,
                radius,
                std,
                seed,
            } = &mut spec
            {
                if let Some(v) = args.modes {
                    *modes = v;
                }
                if let Some(v) = args.n_per_mode {
                    *n_per_mode = v;
                }
                if let Some(v) = args.radius {
                    *radius = v;
                }
                if let Some(v) = args.data_std {
                    *std = v;
                }
                if let Some(v) = args.data_seed {
                    *seed = v;
                }
            }
            Ok(spec)
        }
        "glyphs" => {
            let mut spec = DatasetSpec::default_glyphs();
            if let DatasetSpec::Glyphs {
                classes,
                n,
                noise,
                seed,
                ..
            } = &mut spec
            {
                if let Some(v) = args.glyph_classes {
                    *classes = v;
                }
                if let Some(v) = args.glyph_count {
                    *n = v;
                }
                if let Some(v) = args.glyph_noise {
                    *noise = v;
                }
                if let Some(v) = args.data_seed {
                    *seed = v;
                }
            }
            Ok(spec)
        }
        other => Err(Error::InvalidConfig(format!("unknown dataset {other:?}"))),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_common_artifacts(
    dir: &Path,
    manifest: &RunManifest,
    records: &[gswgan::accountant::LedgerRecord],
    checkpoint: &GeneratorCheckpoint,
) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("manifest.json"), manifest)?;
    let mut ledger = BufWriter::new(File::create(dir.join("ledger.jsonl"))?);
    for rec in records {
        serde_json::to_writer(&mut ledger, rec)?;
        ledger.write_all(b"\n")?;
    }
    ledger.flush()?;
    checkpoint.save(&dir.join("generator.ckpt"))?;
    Ok(())
}

fn report_epsilon(outcome_ledger: &PrivacyLedger, delta: f64) {
    match outcome_ledger.to_dp(delta) {
        Ok((eps, order)) => println!("epsilon={eps} at delta={delta} (order {order})"),
        Err(_) => println!("epsilon=undefined (non-private run)"),
    }
}

fn finish_train(dir: &Path, outcome: &TrainOutcome, delta: f64) -> Result<ExitCode, Error> {
    write_common_artifacts(dir, &outcome.manifest, &outcome.ledger_records, &outcome.checkpoint)?;
    let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(&mut metrics, &outcome.metrics)?;
    metrics.flush()?;
    println!("artifacts written to {}", dir.display());
    if let Some(step) = outcome.budget_halt {
        println!("privacy budget ceiling reached; halted after step {step}");
        report_epsilon(&outcome.ledger, delta);
        return Ok(ExitCode::from(2));
    }
    report_epsilon(&outcome.ledger, delta);
    Ok(ExitCode::SUCCESS)
}

fn cmd_train_central(args: &TrainArgs) -> Result<ExitCode, Error> {
    let config = resolve_config(args)?;
    let dataset = resolve_dataset(args)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| out_root().join(format!("central-seed{}", config.seed)));
    let outcome = train(&dataset, &config)?;
    finish_train(&dir, &outcome, config.delta)
}

fn cmd_train_federated(args: &TrainArgs) -> Result<ExitCode, Error> {
    let config = resolve_config(args)?;
    let dataset = resolve_dataset(args)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| out_root().join(format!("federated-seed{}", config.seed)));
    let mut clients = clients_from_partition(&dataset, &config)?;
    let outcome = server_train(&mut clients, &dataset, &config, |_, _| true)?;
    assert!(
        conservation_holds(&outcome.wire, &clients),
        "wire accounting violated"
    );

    fs::create_dir_all(&dir)?;
    write_common_artifacts(
        &dir,
        &outcome.manifest,
        &outcome.ledger_records,
        &outcome.checkpoint,
    )?;
    let mut wire = BufWriter::new(File::create(dir.join("wire_stats.csv"))?);
    outcome.wire.write_csv(&mut wire)?;
    wire.flush()?;
    println!(
        "wire totals: server->client {} bytes, client->server {} bytes over {} steps",
        outcome.wire.total_server_to_client(),
        outcome.wire.total_client_to_server(),
        outcome.wire.per_step.len()
    );
    println!("artifacts written to {}", dir.display());
    if let Some(step) = outcome.budget_halt {
        println!("privacy budget ceiling reached; halted after step {step}");
        report_epsilon(&outcome.ledger, config.delta);
        return Ok(ExitCode::from(2));
    }
    report_epsilon(&outcome.ledger, config.delta);
    Ok(ExitCode::SUCCESS)
}

fn cmd_accountant(args: &AccountantArgs) -> Result<ExitCode, Error> {
    if args.steps == 0 {
        return Err(Error::InvalidConfig(
            "epsilon undefined: zero training steps accumulated".into(),
        ));
    }
    let mut ledger = PrivacyLedger::new(args.gamma, args.sigma, args.batch)?;
    ledger.accumulate(args.steps);
    let (eps, order) = ledger.to_dp(args.delta)?;
    println!(
        "epsilon={eps} at delta={} (best order {order}, sigma={}, gamma={}, batch={}, steps={})",
        args.delta, args.sigma, args.gamma, args.batch, args.steps
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: &SampleArgs) -> Result<ExitCode, Error> {
    let ckpt = GeneratorCheckpoint::load(&args.checkpoint)?;
    let classes = ckpt.spec.cond_width as u32;
    let latent = ckpt.spec.input_dim;
    let mut rng = seeded(args.seed);
    let labels = sample_labels(args.n, classes, &mut rng);
    let z = sample_latent(args.n, latent, &mut rng);
    let samples = if args.n == 0 {
        gswgan::Tensor::zeros(0, ckpt.spec.output_dim)
    } else {
        generate_from(&ckpt.spec, &ckpt.params, &z, &labels)?
    };
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_samples_csv(&mut w, &samples, &labels)?;
            w.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            write_samples_csv(&mut out, &samples, &labels)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bug_scenario(args: &BugArgs) -> Result<ExitCode, Error> {
    let mut config = TrainConfig::default();
    if let Some(path) = &args.config {
        config.apply_kv(&parse_kv_file(path)?)?;
    }
    if let Some(v) = args.sigma {
        config.sigma = v;
    }
    if args.non_private {
        config.non_private = true;
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.warm_iters {
        config.warm_iters = v;
    }
    if let Some(v) = args.batch {
        config.batch = v;
    }
    if let Some(v) = args.eta_d {
        config.eta_d = v;
    }
    if let Some(v) = args.eta_g {
        config.eta_g = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;

    let (report, suspected, clean) = bug_scenario(
        &config,
        args.clients_per_pool,
        args.glyphs_per_client,
        args.glyph_classes,
        args.glyph_noise,
        args.flip_fraction,
    )?;
    println!(
        "suspected pool mean intensity: {:.4}",
        report.suspected_mean_intensity
    );
    println!(
        "clean pool mean intensity:     {:.4}",
        report.clean_mean_intensity
    );
    println!(
        "opposite sides of 0.5: {}; Welch t = {:.3}, p = {:.4}; suspected pool bimodal: {}",
        report.opposite_sides_of_half, report.welch_t, report.p_value, report.suspected_bimodal
    );
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("bug_report.json"), &report)?;
        suspected.save(&dir.join("suspected_pool.ckpt"))?;
        clean.save(&dir.join("clean_pool.ckpt"))?;
        println!("report written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Die quietly when stdout closes early, e.g. piped into `head`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainCentral(args) => cmd_train_central(args),
        Command::TrainFederated(args) => cmd_train_federated(args),
        Command::Accountant(args) => cmd_accountant(args),
        Command::Sample(args) => cmd_sample(args),
        Command::BugScenario(args) => cmd_bug_scenario(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
