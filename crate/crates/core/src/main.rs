//! Command-line surface: deterministic experiment stages from phantom
//! generation through evaluation, driven by flags with optional
//! `key = value` config files (flags win). Every command echoes its
//! resolved configuration to a `.cfg` sidecar next to its primary output.
//!
//! Exit codes: 0 success, 2 usage/parameter/I-O, 3 file format,
//! 4 numeric failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use proxmri::config::ExperimentConfig;
use proxmri::denoiser::{
    load_weights, save_weights, DenoiserWeights, NetConfig, TrainConfig,
};
use proxmri::error::{Error, Result};
use proxmri::forward::{estimate_coil_maps, simulate_acquisition, ForwardModel};
use proxmri::io;
use proxmri::metrics::{evaluate_suite, EvalCase, Method};
use proxmri::phantom::{build_dataset, CoilMaps, Dataset, Split};
use proxmri::recon::{recon_pgd, ReconConfig};
use proxmri::rng::{derive_seed, purpose};
use proxmri::sampling::{cartesian1d_mask, radial_mask, random2d_mask};

#[derive(Parser)]
#[command(
    name = "proxmri",
    version,
    about = "Plug-and-play learned-proximal MRI reconstruction at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantom datasets and coil sensitivity maps
    Phantom(PhantomArgs),
    /// Sampling-mask utilities
    Mask(MaskCommand),
    /// Simulate a k-space acquisition of one image
    Acquire(AcquireArgs),
    /// Train the proximal denoising network
    Train(TrainArgs),
    /// Reconstruct an image from undersampled k-space
    Recon(ReconArgs),
    /// Evaluate reconstruction methods over a test set
    Eval(EvalArgs),
    /// PSNR/SSIM over iterations for a list of lambda values
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Configuration file (key = value); flags override its entries
    #[arg(long, global = false)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::empty()),
        }
    }
}

/// Flag beats config beats default; records the winner for the sidecar.
macro_rules! resolve {
    ($resolved:expr, $key:literal, $flag:expr, $cfg_get:expr, $default:expr) => {{
        let value = match $flag {
            Some(v) => v,
            None => match $cfg_get? {
                Some(v) => v,
                None => $default,
            },
        };
        $resolved.set($key, &value);
        value
    }};
}

fn out_dir_default(cfg: &ExperimentConfig, sub: &str) -> Option<PathBuf> {
    cfg.get("out_dir").map(|d| Path::new(d).join(sub))
}

fn require_path(flag: Option<PathBuf>, fallback: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or(fallback).ok_or_else(|| {
        Error::Parameter(format!("{what} not given (flag or out_dir in the config required)"))
    })
}

fn write_sidecar(primary: &Path, resolved: &ExperimentConfig) -> Result<()> {
    let mut name = primary
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".cfg");
    let path = primary.with_file_name(name);
    std::fs::write(path, resolved.to_text())?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- phantom

#[derive(Args)]
struct PhantomArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    coils: Option<usize>,
    /// Output directory for the dataset and coil maps
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_phantom(args: PhantomArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let seed = resolve!(resolved, "seed", args.seed, cfg.get_u64("seed"), 0);
    let n_train = resolve!(resolved, "n_train", args.n_train, cfg.get_usize("n_train"), 200);
    let n_test = resolve!(resolved, "n_test", args.n_test, cfg.get_usize("n_test"), 50);
    let size = resolve!(resolved, "size", args.size, cfg.get_usize("size"), 64);
    let coils = resolve!(resolved, "coils", args.coils, cfg.get_usize("coils"), 4);
    let out = require_path(args.out, out_dir_default(&cfg, "data"), "--out")?;

    std::fs::create_dir_all(&out)?;
    let (train, test) = build_dataset(seed, n_train, n_test, size)?;
    for (i, img) in train.images.iter().enumerate() {
        io::write_image(img, &out.join(format!("train_{i:03}.cim")))?;
    }
    for (i, img) in test.images.iter().enumerate() {
        io::write_image(img, &out.join(format!("test_{i:03}.cim")))?;
    }
    let maps = proxmri::phantom::generate_coil_maps(seed, coils, size)?;
    io::write_coil_maps(&maps, &out.join("coils.cmp"))?;
    write_sidecar(&out.join("phantom"), &resolved)?;
    println!(
        "wrote {} train + {} test images and {}-coil maps to {}",
        n_train,
        n_test,
        coils,
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- mask

#[derive(Args)]
struct MaskCommand {
    #[command(subcommand)]
    action: MaskAction,
}

#[derive(Subcommand)]
enum MaskAction {
    /// Generate a sampling mask
    Gen(MaskArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MaskKindArg {
    Cartesian,
    Random,
    Radial,
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Mask family
    #[arg(long, value_enum)]
    kind: Option<MaskKindArg>,
    #[arg(long)]
    size: Option<usize>,
    /// Sampled k-space fraction (cartesian/random)
    #[arg(long)]
    fraction: Option<f64>,
    /// Spoke count (radial)
    #[arg(long)]
    spokes: Option<usize>,
    /// Fully sampled central lines / block size
    #[arg(long)]
    acs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_mask(args: MaskArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let kind = match args.kind {
        Some(k) => k,
        None => match cfg.get("mask_kind") {
            Some("cartesian") => MaskKindArg::Cartesian,
            Some("random") => MaskKindArg::Random,
            Some("radial") => MaskKindArg::Radial,
            Some(other) => {
                return Err(Error::Parameter(format!("unknown mask_kind '{other}'")));
            }
            None => MaskKindArg::Cartesian,
        },
    };
    resolved.set(
        "mask_kind",
        match kind {
            MaskKindArg::Cartesian => "cartesian",
            MaskKindArg::Random => "random",
            MaskKindArg::Radial => "radial",
        },
    );
    let size = resolve!(resolved, "size", args.size, cfg.get_usize("size"), 64);
    let out = require_path(args.out, out_dir_default(&cfg, "mask.msk"), "--out")?;

    let mask = match kind {
        MaskKindArg::Cartesian => {
            let fraction = resolve!(resolved, "fraction", args.fraction, cfg.get_f64("fraction"), 0.3);
            let acs = resolve!(resolved, "acs", args.acs, cfg.get_usize("acs"), 12);
            let seed = resolve!(resolved, "seed", args.seed, cfg.get_u64("seed"), 0);
            cartesian1d_mask(size, size, fraction, acs, seed)?
        }
        MaskKindArg::Random => {
            let fraction = resolve!(resolved, "fraction", args.fraction, cfg.get_f64("fraction"), 0.2);
            let acs = resolve!(resolved, "acs", args.acs, cfg.get_usize("acs"), 12);
            let seed = resolve!(resolved, "seed", args.seed, cfg.get_u64("seed"), 0);
            random2d_mask(size, size, fraction, acs, seed)?
        }
        MaskKindArg::Radial => {
            let spokes = resolve!(resolved, "spokes", args.spokes, cfg.get_usize("spokes"), 40);
            radial_mask(size, size, spokes)?
        }
    };
    ensure_parent(&out)?;
    io::write_mask(&mask, &out)?;
    write_sidecar(&out, &resolved)?;
    println!(
        "wrote {} mask ({}x{}, sampled fraction {:.4}) to {}",
        mask.kind().tag(),
        size,
        size,
        proxmri::sampling::mask_fraction(&mask),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- acquire

#[derive(Args)]
struct AcquireArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Ground-truth image (CIM1)
    #[arg(long)]
    image: Option<PathBuf>,
    /// Coil maps (CMP1)
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Sampling mask (MSK1)
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Complex-noise standard deviation on sampled k-space locations
    #[arg(long)]
    kspace_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_acquire(args: AcquireArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let sigma = resolve!(resolved, "kspace_sigma", args.kspace_sigma, cfg.get_f64("kspace_sigma"), 0.0);
    let seed = resolve!(resolved, "seed", args.seed, cfg.get_u64("seed"), 0);
    let image = require_path(args.image, out_dir_default(&cfg, "data/test_000.cim"), "--image")?;
    let maps = require_path(args.maps, out_dir_default(&cfg, "data/coils.cmp"), "--maps")?;
    let mask = require_path(args.mask, out_dir_default(&cfg, "mask.msk"), "--mask")?;
    let out = require_path(args.out, out_dir_default(&cfg, "y.ksp"), "--out")?;

    let image = io::read_image(&image)?;
    let maps = io::read_coil_maps(&maps)?;
    let mask = io::read_mask(&mask)?;
    let y = simulate_acquisition(&image, &maps, &mask, sigma, seed)?;
    ensure_parent(&out)?;
    io::write_kspace(&y, &out)?;
    write_sidecar(&out, &resolved)?;
    println!("wrote {}-coil k-space to {}", y.coils(), out.display());
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Directory holding train_*.cim images
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    unroll_steps: Option<usize>,
    #[arg(long)]
    inner_alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    probe_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weights output (WGT1)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch loss trace CSV
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

fn load_split(dir: &Path, prefix: &str, seed: u64, split: Split) -> Result<Dataset> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with(prefix) && n.ends_with(".cim"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Parameter(format!(
            "no {prefix}*.cim images found in {}",
            dir.display()
        )));
    }
    let images = paths
        .iter()
        .map(|p| io::read_image(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { images, split, seed })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let net = NetConfig {
        filters: resolve!(resolved, "filters", args.filters, cfg.get_usize("filters"), 16),
        depth: resolve!(resolved, "depth", args.depth, cfg.get_usize("depth"), 4),
        unroll_steps: resolve!(resolved, "unroll_steps", args.unroll_steps, cfg.get_usize("unroll_steps"), 3),
        inner_alpha: resolve!(resolved, "inner_alpha", args.inner_alpha, cfg.get_f64("inner_alpha"), 0.5),
    };
    let sigma = resolve!(resolved, "sigma", args.sigma, cfg.get_f64("sigma"), 0.03);
    let train_cfg = TrainConfig {
        noise_sigma: sigma,
        penalty_weight: sigma * sigma,
        probes: resolve!(resolved, "probes", args.probes, cfg.get_usize("probes"), 1),
        probe_eps: resolve!(resolved, "probe_eps", args.probe_eps, cfg.get_f64("probe_eps"), 1e-3),
        learning_rate: resolve!(resolved, "lr", args.lr, cfg.get_f64("lr"), 1e-3),
        batch_size: resolve!(resolved, "batch", args.batch, cfg.get_usize("batch"), 8),
        epochs: resolve!(resolved, "epochs", args.epochs, cfg.get_usize("epochs"), 200),
        seed: resolve!(resolved, "seed", args.seed, cfg.get_u64("seed"), 0),
    };
    let data = require_path(args.data, out_dir_default(&cfg, "data"), "--data")?;
    let out = require_path(args.out, out_dir_default(&cfg, "weights.wgt"), "--out")?;
    let loss_csv = args
        .loss_csv
        .or(out_dir_default(&cfg, "train_loss.csv"))
        .unwrap_or_else(|| out.with_extension("loss.csv"));

    let dataset = load_split(&data, "train_", train_cfg.seed, Split::Train)?;
    eprintln!(
        "training on {} images ({} epochs, sigma {})...",
        dataset.images.len(),
        train_cfg.epochs,
        sigma
    );
    let outcome = proxmri::denoiser::train(&dataset, &net, &train_cfg)?;
    ensure_parent(&out)?;
    save_weights(&outcome.weights, &out)?;
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    ensure_parent(&loss_csv)?;
    std::fs::write(&loss_csv, csv)?;
    write_sidecar(&out, &resolved)?;
    println!(
        "wrote weights to {} (final loss {:.6})",
        out.display(),
        outcome.loss_trace.last().unwrap()
    );
    Ok(())
}

// ------------------------------------------------------------------ recon

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Pgd,
    Sense,
    Fista,
    Zerofill,
}

#[derive(Args)]
struct ReconArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Solver to run
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    kspace: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Coil maps file; omitted: estimate from the calibration region
    #[arg(long)]
    maps: Option<PathBuf>,
    /// ACS size for coil-map estimation when --maps is omitted
    #[arg(long)]
    acs: Option<usize>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    l1_lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Magnitude preview (PGM P5)
    #[arg(long)]
    preview: Option<PathBuf>,
    /// Per-iteration PSNR/SSIM CSV (needs --reference)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground-truth image for tracing
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn load_model(
    mask_path: &Path,
    maps_path: Option<&Path>,
    kspace: &proxmri::forward::KSpaceData,
    acs: usize,
) -> Result<ForwardModel> {
    let mask = io::read_mask(mask_path)?;
    let maps: CoilMaps = match maps_path {
        Some(p) => io::read_coil_maps(p)?,
        None => estimate_coil_maps(kspace, acs)?,
    };
    ForwardModel::new(mask, maps)
}

fn cmd_recon(args: ReconArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let method_name = match args.method {
        MethodArg::Pgd => "pgd",
        MethodArg::Sense => "sense",
        MethodArg::Fista => "fista",
        MethodArg::Zerofill => "zerofill",
    };
    resolved.set("methods", method_name);
    let lambda = resolve!(resolved, "lambda", args.lambda, cfg.get_f64("lambda"), 0.1);
    let step_size = resolve!(resolved, "step_size", args.step_size, cfg.get_f64("step_size"), 1.0);
    let iterations = resolve!(resolved, "iterations", args.iterations, cfg.get_usize("iterations"), 100);
    let l1_lambda = resolve!(resolved, "l1_lambda", args.l1_lambda, cfg.get_f64("l1_lambda"), 0.005);
    let acs = resolve!(resolved, "acs", args.acs, cfg.get_usize("acs"), 12);

    let kspace_path = require_path(args.kspace, out_dir_default(&cfg, "y.ksp"), "--kspace")?;
    let mask_path = require_path(args.mask, out_dir_default(&cfg, "mask.msk"), "--mask")?;
    let maps_path = args.maps.or(out_dir_default(&cfg, "data/coils.cmp"));
    let out = require_path(
        args.out,
        out_dir_default(&cfg, &format!("recon_{method_name}.cim")),
        "--out",
    )?;

    let y = io::read_kspace(&kspace_path)?;
    // A maps path from out_dir conventions may not exist; fall back to
    // calibration in that case.
    let maps_path = maps_path.filter(|p| p.exists());
    let model = load_model(&mask_path, maps_path.as_deref(), &y, acs)?;

    let recon_cfg = ReconConfig {
        lambda,
        step_size,
        iterations,
        trace: args.trace.is_some(),
    };
    let reference = args.reference.map(|p| io::read_image(&p)).transpose()?;
    if args.trace.is_some() && reference.is_none() {
        return Err(Error::Parameter("--trace requires --reference".into()));
    }

    let (image, trace) = match args.method {
        MethodArg::Pgd => {
            let weights_path = require_path(
                args.weights,
                out_dir_default(&cfg, "weights.wgt"),
                "--weights",
            )?;
            let weights: DenoiserWeights = load_weights(&weights_path)?;
            recon_pgd(&model, &y, Some(&weights), &recon_cfg, reference.as_ref())?
        }
        MethodArg::Sense => {
            let cfg0 = ReconConfig { lambda: 0.0, ..recon_cfg };
            recon_pgd(&model, &y, None, &cfg0, reference.as_ref())?
        }
        MethodArg::Fista => {
            let x = proxmri::recon::recon_fista_l1wavelet(&model, &y, l1_lambda, iterations)?;
            (x, Vec::new())
        }
        MethodArg::Zerofill => {
            let x = proxmri::recon::recon_zero_filled(&model, &y)?;
            (x, Vec::new())
        }
    };

    ensure_parent(&out)?;
    io::write_image(&image, &out)?;
    if let Some(preview) = &args.preview {
        ensure_parent(preview)?;
        io::write_pgm(&image, preview)?;
    }
    if let Some(trace_path) = &args.trace {
        let mut csv = String::from("iter,psnr_db,ssim\n");
        for p in &trace {
            csv.push_str(&format!("{},{},{}\n", p.iter, p.psnr_db, p.ssim));
        }
        ensure_parent(trace_path)?;
        std::fs::write(trace_path, csv)?;
    }
    write_sidecar(&out, &resolved)?;
    if let Some(reference) = &reference {
        let value = proxmri::metrics::psnr(&image, reference)?;
        println!("{method_name}: PSNR {value:.2} dB -> {}", out.display());
    } else {
        println!("{method_name} -> {}", out.display());
    }
    Ok(())
}

// ------------------------------------------------------------------- eval

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Directory holding test_*.cim images and coils.cmp
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    maps: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Comma-separated method list
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    l1_lambda: Option<f64>,
    #[arg(long)]
    kspace_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV output
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let methods_str = resolve!(
        resolved,
        "methods",
        args.methods,
        Ok::<_, Error>(cfg.get("methods").map(|s| s.to_string())),
        "zerofill,sense,fista,pgd".to_string()
    );
    let lambda = resolve!(resolved, "lambda", args.lambda, cfg.get_f64("lambda"), 0.1);
    let step_size = resolve!(resolved, "step_size", args.step_size, cfg.get_f64("step_size"), 1.0);
    let iterations = resolve!(resolved, "iterations", args.iterations, cfg.get_usize("iterations"), 100);
    let l1_lambda = resolve!(resolved, "l1_lambda", args.l1_lambda, cfg.get_f64("l1_lambda"), 0.005);
    let kspace_sigma = resolve!(resolved, "kspace_sigma", args.kspace_sigma, cfg.get_f64("kspace_sigma"), 0.0);
    let seed = resolve!(resolved, "seed", args.seed, cfg.get_u64("seed"), 0);

    let data = require_path(args.data, out_dir_default(&cfg, "data"), "--data")?;
    let mask_path = require_path(args.mask, out_dir_default(&cfg, "mask.msk"), "--mask")?;
    let maps_path = require_path(
        args.maps,
        out_dir_default(&cfg, "data/coils.cmp"),
        "--maps",
    )?;
    let out = require_path(args.out, out_dir_default(&cfg, "eval.csv"), "--out")?;

    let mask = io::read_mask(&mask_path)?;
    let maps = io::read_coil_maps(&maps_path)?;
    let test = load_split(&data, "test_", seed, Split::Test)?;

    let recon_cfg = ReconConfig { lambda, step_size, iterations, trace: false };
    let mut weights_store: Option<DenoiserWeights> = None;
    let mut methods: Vec<Method<'_>> = Vec::new();
    let needs_weights = methods_str.split(',').any(|m| m.trim() == "pgd");
    if needs_weights {
        let weights_path = require_path(
            args.weights,
            out_dir_default(&cfg, "weights.wgt"),
            "--weights",
        )?;
        weights_store = Some(load_weights(&weights_path)?);
    }
    for item in methods_str.split(',') {
        match item.trim() {
            "zerofill" => methods.push(Method::ZeroFilled),
            "sense" => methods.push(Method::Sense { cfg: recon_cfg.clone() }),
            "fista" => methods.push(Method::Fista { l1_lambda, iterations }),
            "pgd" => methods.push(Method::Pgd {
                weights: weights_store.as_ref().expect("loaded above"),
                cfg: recon_cfg.clone(),
            }),
            other => {
                return Err(Error::Parameter(format!("unknown method '{other}'")));
            }
        }
    }

    let mut cases = Vec::with_capacity(test.images.len());
    for (i, image) in test.images.iter().enumerate() {
        let case_seed = derive_seed(seed, purpose::KSPACE_NOISE, i as u64);
        let y = simulate_acquisition(image, &maps, &mask, kspace_sigma, case_seed)?;
        cases.push(EvalCase {
            id: format!("test_{i:03}"),
            model: ForwardModel::new(mask.clone(), maps.clone())?,
            y,
            reference: image.clone(),
        });
    }

    let rows = evaluate_suite(&cases, &methods)?;
    let mut csv = String::from("case_id,method,mask_type,fraction,psnr_db,ssim\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.case_id, row.method, row.mask_type, row.fraction, row.psnr_db, row.ssim
        ));
    }
    ensure_parent(&out)?;
    std::fs::write(&out, csv)?;
    write_sidecar(&out, &resolved)?;
    println!(
        "evaluated {} cases x {} methods -> {}",
        cases.len(),
        methods.len(),
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------ sweep

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    kspace: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    maps: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Ground-truth image the traces are scored against
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Comma-separated lambda values
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut resolved = ExperimentConfig::empty();
    let lambdas_str = resolve!(
        resolved,
        "lambdas",
        args.lambdas,
        Ok::<_, Error>(cfg.get("lambdas").map(|s| s.to_string())),
        "0,0.05,0.1,0.2,0.5".to_string()
    );
    let iterations = resolve!(resolved, "iterations", args.iterations, cfg.get_usize("iterations"), 100);

    let lambdas = lambdas_str
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad lambda '{s}'")))
        })
        .collect::<Result<Vec<f64>>>()?;

    let kspace_path = require_path(args.kspace, out_dir_default(&cfg, "y.ksp"), "--kspace")?;
    let mask_path = require_path(args.mask, out_dir_default(&cfg, "mask.msk"), "--mask")?;
    let maps_path = require_path(args.maps, out_dir_default(&cfg, "data/coils.cmp"), "--maps")?;
    let weights_path = require_path(args.weights, out_dir_default(&cfg, "weights.wgt"), "--weights")?;
    let reference_path = require_path(
        args.reference,
        out_dir_default(&cfg, "data/test_000.cim"),
        "--reference",
    )?;
    let out = require_path(args.out, out_dir_default(&cfg, "sweep.csv"), "--out")?;

    let y = io::read_kspace(&kspace_path)?;
    let mask = io::read_mask(&mask_path)?;
    let maps = io::read_coil_maps(&maps_path)?;
    let weights = load_weights(&weights_path)?;
    let reference = io::read_image(&reference_path)?;
    let model = ForwardModel::new(mask, maps)?;

    let rows = proxmri::recon::lambda_sweep(&model, &y, &weights, &lambdas, iterations, &reference)?;
    let mut csv = String::from("lambda,iter,psnr_db,ssim\n");
    for row in &rows {
        csv.push_str(&format!("{},{},{},{}\n", row.lambda, row.iter, row.psnr_db, row.ssim));
    }
    ensure_parent(&out)?;
    std::fs::write(&out, csv)?;
    write_sidecar(&out, &resolved)?;
    println!("swept {} lambda values x {} iterations -> {}", lambdas.len(), iterations, out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom(args) => cmd_phantom(args),
        Command::Mask(cmd) => match cmd.action {
            MaskAction::Gen(args) => cmd_mask(args),
        },
        Command::Acquire(args) => cmd_acquire(args),
        Command::Train(args) => cmd_train(args),
        Command::Recon(args) => cmd_recon(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
