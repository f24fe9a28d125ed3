use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use epgd::{corpus, load_image, load_prior, save_image, save_prior, threads};
use epgd_core::prior::{train_gmm, EmOptions};
use epgd_core::{denoise_with, DenoiseConfig, QualityReport};

/// Patch-group denoising with an external GMM prior guiding internal
/// dictionary learning.
#[derive(Parser)]
#[command(name = "epgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a patch-group GMM prior from a folder of clean images.
    TrainPrior(TrainArgs),
    /// Denoise an image with a trained prior.
    Denoise(DenoiseArgs),
    /// Print PSNR and SSIM between two images.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Folder of clean PNG/PPM images.
    #[arg(long)]
    images: PathBuf,
    /// Output prior file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    k: usize,
    #[arg(long, default_value_t = 6)]
    patch: usize,
    #[arg(long, default_value_t = 10)]
    group: usize,
    #[arg(long, default_value_t = 31)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on the number of patch groups (uniformly sampled with the seed).
    #[arg(long)]
    max_groups: Option<usize>,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    prior: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Sparsity weight λ (unit-intensity scale).
    #[arg(long, default_value_t = 0.001)]
    lambda: f64,
    /// Number of frozen external atoms.
    #[arg(long, default_value_t = 54)]
    r: usize,
    /// Dictionary-learning iterations per cluster.
    #[arg(long, default_value_t = 2)]
    t: usize,
    /// Outer denoising iterations.
    #[arg(long, default_value_t = 4)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clean reference image; enables per-iteration PSNR/SSIM.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

fn train_prior(args: &TrainArgs) -> Result<()> {
    let cfg = DenoiseConfig {
        patch_size: args.patch,
        group_size: args.group,
        window: args.window,
        components: args.k,
        external_atoms: 0,
        seed: args.seed,
        ..DenoiseConfig::default()
    };
    println!(
        "train-prior: p={} M={} W={} K={} seed={}",
        cfg.patch_size, cfg.group_size, cfg.window, cfg.components, cfg.seed
    );
    cfg.validate()?;
    let paths = corpus::list_images(&args.images)
        .with_context(|| format!("cannot read image folder {}", args.images.display()))?;
    if paths.is_empty() {
        bail!("no PNG or PPM images found in {}", args.images.display());
    }
    let images = corpus::load_images(&paths)?;
    let groups = corpus::training_groups(&images, &cfg, args.max_groups, args.seed)?;
    println!("images: {}  patch groups: {}", images.len(), groups.len());

    let start = Instant::now();
    let opts = EmOptions {
        seed: args.seed,
        ..EmOptions::default()
    };
    let fit = train_gmm(&groups, args.k, &opts).context("training failed")?;
    println!(
        "EM iterations: {} ({}) in {:.4} s",
        fit.log_likelihood.len(),
        if fit.converged {
            "converged"
        } else {
            "iteration cap reached"
        },
        start.elapsed().as_secs_f64()
    );
    println!("final log-likelihood: {:.4}", fit.final_log_likelihood());
    for (k, c) in fit.prior.components().iter().enumerate() {
        println!("component {k}: weight {:.4}", c.weight);
    }
    save_prior(&fit.prior, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn denoise(args: &DenoiseArgs) -> Result<()> {
    let prior = load_prior(&args.prior)?;
    let noisy = load_image(&args.input)?;
    let reference = args.reference.as_ref().map(load_image).transpose()?;
    let cfg = DenoiseConfig {
        patch_size: prior.patch_size(),
        components: prior.len(),
        external_atoms: args.r,
        lambda: args.lambda,
        dict_iters: args.t,
        iterations: args.iters,
        stride: args.stride,
        seed: args.seed,
        ..DenoiseConfig::default()
    };
    if cfg.external_atoms > prior.dim() {
        bail!(
            "prior dimension mismatch: prior has {}x{} patches (dimension {}) but --r is {}",
            prior.patch_size(),
            prior.patch_size(),
            prior.dim(),
            cfg.external_atoms
        );
    }
    println!(
        "denoise: p={} M={} W={} K={} r={} lambda={:.4} T={} iters={} stride={} seed={}",
        cfg.patch_size,
        cfg.group_size,
        cfg.window,
        cfg.components,
        cfg.external_atoms,
        cfg.lambda,
        cfg.dict_iters,
        cfg.iterations,
        cfg.stride,
        cfg.seed
    );
    if let Some(r) = &reference {
        let q = QualityReport::compare(&noisy, r)?;
        println!("input: PSNR: {:.4} dB  SSIM: {:.4}", q.psnr_db, q.ssim);
    }
    let mut clock = Instant::now();
    let mut quality_err = None;
    let out = denoise_with(&noisy, &prior, &cfg, |ite, estimate| {
        let secs = clock.elapsed().as_secs_f64();
        match reference
            .as_ref()
            .map(|r| QualityReport::compare(estimate, r))
        {
            Some(Ok(q)) => println!(
                "iteration {ite}: {secs:.4} s  PSNR: {:.4} dB  SSIM: {:.4}",
                q.psnr_db, q.ssim
            ),
            Some(Err(e)) => {
                quality_err.get_or_insert(e);
            }
            None => println!("iteration {ite}: {secs:.4} s"),
        }
        clock = Instant::now();
    })?;
    if let Some(e) = quality_err {
        return Err(e).context("cannot compare against --ref");
    }
    save_image(&out, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let a = load_image(&args.a)?;
    let b = load_image(&args.b)?;
    let q = QualityReport::compare(&a, &b)?;
    println!("PSNR: {:.4} dB  SSIM: {:.4}", q.psnr_db, q.ssim);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match threads::build_pool() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::TrainPrior(args) => train_prior(args),
        Command::Denoise(args) => denoise(args),
        Command::Eval(args) => eval(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
