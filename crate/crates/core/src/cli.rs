//! The `spectral-percept` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::audio::{self, AudioClip};
use crate::fit::{self, FitConfig, LossKind};
use crate::gradients::{compare_gradients, finite_diff_grad, MetricKind};
use crate::metrics::{MetricReport, MsSsimParams, NlpdParams};
use crate::quantization::{bits_per_pixel, compression_ratio, entropy_bound, EntropyInputs, SOURCE_BPP};
use crate::spectrogram::{
    decode_sgram, is_sgram, mel_spectrogram, reconstruct_audio, save_sgram, MelParams, PhaseInit,
    Spectrogram,
};
use crate::Grid;

/// Caps the worker pool used by batch comparisons.
pub const THREADS_ENV: &str = "SPECTRAL_PERCEPT_THREADS";

/// 99th-percentile relative error below which `gradcheck` succeeds.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "spectral-percept", version, about = "Perceptual spectrogram metrics and the mel pipeline around them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a log-mel spectrogram from a WAV file and write it as SGRAM.
    Spectrogram {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        mel: MelArgs,
    },
    /// Compute MSE, NLPD and MS-SSIM between spectrogram pairs.
    Compare(CompareArgs),
    /// Reconstruct audio from an SGRAM file with Griffin-Lim.
    Invert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 32)]
        gl_iters: usize,
        /// Start from seeded random phases instead of zero phase.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a spectrogram to a target by gradient descent on a metric.
    Fit(FitArgs),
    /// Entropy bound, bits per pixel and compression ratio of a quantized latent.
    Entropy {
        #[arg(long, default_value_t = 256)]
        width: u64,
        #[arg(long, default_value_t = 256)]
        height: u64,
        /// Number of stride-2 downsampling layers.
        #[arg(long, default_value_t = 4)]
        layers: u32,
        /// Latent channels.
        #[arg(long, default_value_t = 128)]
        channels: u64,
        /// Quantization centers.
        #[arg(long, default_value_t = 2)]
        centers: u64,
    },
    /// Compare analytic and finite-difference gradients on a random pair.
    Gradcheck {
        #[arg(long, value_parser = clap::value_parser!(MetricKind))]
        metric: MetricKind,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step; 1e-3 for mse and 1e-4 otherwise by default.
        #[arg(long)]
        h: Option<f64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MelArgs {
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub n_fft: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub target_frames: Option<usize>,
}

impl MelArgs {
    pub fn params(&self) -> Result<MelParams> {
        let d = MelParams::default();
        let p = MelParams {
            sample_rate: self.sample_rate.unwrap_or(d.sample_rate),
            n_fft: self.n_fft.unwrap_or(d.n_fft),
            hop: self.hop.unwrap_or(d.hop),
            n_mels: self.n_mels.unwrap_or(d.n_mels),
            eps: self.eps.unwrap_or(d.eps),
            target_frames: self.target_frames.unwrap_or(d.target_frames),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference input (WAV or SGRAM).
    #[arg(required_unless_present = "manifest")]
    pub reference: Option<PathBuf>,
    /// Degraded input (WAV or SGRAM).
    #[arg(required_unless_present = "manifest")]
    pub degraded: Option<PathBuf>,
    /// File of `ref deg` pairs, one per line; relative paths are taken from
    /// the manifest's directory.
    #[arg(long, conflicts_with_all = ["reference", "degraded"])]
    pub manifest: Option<PathBuf>,
    /// Emit CSV instead of JSON.
    #[arg(long)]
    pub csv: bool,
    /// MS-SSIM scales (default: 5, fewer for small grids).
    #[arg(long)]
    pub scales: Option<usize>,
    /// NLPD pyramid levels (default: 5, fewer for small grids).
    #[arg(long)]
    pub levels: Option<usize>,
    #[command(flatten)]
    pub mel: MelArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(LossKind))]
    pub loss: LossKind,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

impl clap::ValueEnum for MetricKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[MetricKind::Mse, MetricKind::MsSsim, MetricKind::Nlpd]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        let v = clap::builder::PossibleValue::new(self.name());
        Some(match self {
            MetricKind::MsSsim => v.aliases(["ms_ssim", "ms-ssim"]),
            _ => v,
        })
    }
}

impl clap::ValueEnum for LossKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[LossKind::Mse, LossKind::Nlpd, LossKind::NegMsSsim]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        let v = clap::builder::PossibleValue::new(self.name());
        Some(match self {
            LossKind::NegMsSsim => v.aliases(["msssim", "ms_ssim", "ms-ssim"]),
            _ => v,
        })
    }
}

/// Parses the process arguments and runs the command, reporting errors on stderr.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Spectrogram { input, output, mel } => cmd_spectrogram(&input, &output, &mel),
        Command::Compare(args) => cmd_compare(&args),
        Command::Invert {
            input,
            output,
            gl_iters,
            seed,
        } => cmd_invert(&input, &output, gl_iters, seed),
        Command::Fit(args) => cmd_fit(&args),
        Command::Entropy {
            width,
            height,
            layers,
            channels,
            centers,
        } => cmd_entropy(EntropyInputs {
            width,
            height,
            n: layers,
            m: channels,
            levels: centers,
        }),
        Command::Gradcheck { metric, size, seed, h } => cmd_gradcheck(metric, size, seed, h),
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

/// A WAV clip resampled to the parameters' rate and run through the mel pipeline.
fn wav_to_spectrogram(bytes: &[u8], path: &Path, params: &MelParams) -> Result<Spectrogram> {
    let clip = audio::read_wav(bytes).with_context(|| format!("cannot decode {}", path.display()))?;
    let clip = if clip.sample_rate == params.sample_rate {
        clip
    } else {
        audio::resample(&clip, params.sample_rate)?
    };
    Ok(mel_spectrogram(&clip, params)?)
}

/// Loads a WAV or SGRAM input, detected by magic bytes and then by extension.
fn load_any(path: &Path, params: &MelParams) -> Result<Spectrogram> {
    let bytes = read_input(path)?;
    if is_sgram(&bytes) {
        return decode_sgram(&bytes).with_context(|| format!("cannot decode {}", path.display()));
    }
    if bytes.starts_with(b"RIFF") {
        return wav_to_spectrogram(&bytes, path, params);
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("wav") | Some("wave") => wav_to_spectrogram(&bytes, path, params),
        Some("sgram") | Some("sgrm") => {
            decode_sgram(&bytes).with_context(|| format!("cannot decode {}", path.display()))
        }
        _ => bail!("{}: neither a WAV nor an SGRAM file", path.display()),
    }
}

fn cmd_spectrogram(input: &Path, output: &Path, mel: &MelArgs) -> Result<ExitCode> {
    let params = mel.params()?;
    let bytes = read_input(input)?;
    let spec = wav_to_spectrogram(&bytes, input, &params)?;
    save_sgram(&spec, output)?;
    let (h, w) = spec.dim();
    println!("{h}x{w} log_lo={} log_hi={}", spec.log_lo, spec.log_hi);
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRecord {
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(rename = "deg")]
    pub degraded: String,
    pub mse: f64,
    pub nlpd: f64,
    pub ms_ssim: f64,
    pub ms_ssim_scales: usize,
    pub nlpd_levels: usize,
}

fn metric_params(h: usize, w: usize, scales: Option<usize>, levels: Option<usize>) -> Result<(MsSsimParams, NlpdParams)> {
    let ms = match scales {
        Some(n) => MsSsimParams::with_scales(n)?,
        None => MsSsimParams::for_size(h, w)?,
    };
    let nl = match levels {
        Some(n) => NlpdParams::with_levels(n),
        None => NlpdParams::for_size(h, w)?,
    };
    Ok((ms, nl))
}

fn compare_pair(reference: &Path, degraded: &Path, args: &CompareArgs, mel: &MelParams) -> Result<CompareRecord> {
    let a = load_any(reference, mel)?.to_grid();
    let b = load_any(degraded, mel)?.to_grid();
    if a.dim() != b.dim() {
        bail!(
            "{} is {}x{} but {} is {}x{}",
            reference.display(),
            a.nrows(),
            a.ncols(),
            degraded.display(),
            b.nrows(),
            b.ncols()
        );
    }
    let (h, w) = a.dim();
    let (ms, nl) = metric_params(h, w, args.scales, args.levels)?;
    let report = MetricReport::compute(&a, &b, &ms, &nl)?;
    if ![report.mse, report.nlpd, report.ms_ssim].iter().all(|v| v.is_finite()) {
        bail!("non-finite metric for {} vs {}", reference.display(), degraded.display());
    }
    Ok(CompareRecord {
        reference: reference.display().to_string(),
        degraded: degraded.display().to_string(),
        mse: report.mse,
        nlpd: report.nlpd,
        ms_ssim: report.ms_ssim,
        ms_ssim_scales: ms.scales,
        nlpd_levels: nl.levels,
    })
}

/// Reads `ref deg` pairs separated by whitespace or a comma. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 2 {
            bail!("{}:{}: expected two columns, found {}", path.display(), n + 1, cols.len());
        }
        pairs.push((base.join(cols[0]), base.join(cols[1])));
    }
    Ok(pairs)
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("{THREADS_ENV} must be a positive integer, got 0");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode> {
    let mel = args.mel.params()?;
    let pairs = match (&args.manifest, &args.reference, &args.degraded) {
        (Some(m), _, _) => read_manifest(m)?,
        (None, Some(r), Some(d)) => vec![(r.clone(), d.clone())],
        _ => bail!("give either two inputs or --manifest"),
    };
    let records: Vec<CompareRecord> = worker_pool()?.install(|| {
        pairs
            .par_iter()
            .map(|(r, d)| compare_pair(r, d, args, &mel))
            .collect::<Result<_>>()
    })?;

    if args.csv {
        println!("ref,deg,mse,nlpd,ms_ssim");
        for r in &records {
            println!("{},{},{},{},{}", r.reference, r.degraded, r.mse, r.nlpd, r.ms_ssim);
        }
    } else {
        let out = json!({
            "params": {
                "mel": mel,
                "ms_ssim": MsSsimParams::default(),
                "nlpd": NlpdParams::default(),
            },
            "records": records,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_invert(input: &Path, output: &Path, iters: usize, seed: Option<u64>) -> Result<ExitCode> {
    let bytes = read_input(input)?;
    let spec = decode_sgram(&bytes).with_context(|| format!("cannot decode {}", input.display()))?;
    let init = seed.map_or(PhaseInit::Zero, PhaseInit::Random);
    let clip: AudioClip = reconstruct_audio(&spec, iters, init)?;
    audio::write_wav_pcm16(output, &clip)?;
    println!(
        "{} samples at {} Hz ({:.3} s)",
        clip.len(),
        clip.sample_rate,
        clip.duration_secs()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(args: &FitArgs) -> Result<ExitCode> {
    let bytes = read_input(&args.target)?;
    let target_spec =
        decode_sgram(&bytes).with_context(|| format!("cannot decode {}", args.target.display()))?;
    let target = target_spec.to_grid();
    let cfg = FitConfig {
        loss: args.loss,
        max_steps: args.steps,
        initial_step: args.step_size,
        seed: args.seed,
        tolerance: args.tolerance,
    };
    let result = fit::fit_spectrogram(&target, &cfg)?;
    let report = fit::fit_report(&result, &target)?;
    let out = Spectrogram::from_grid(
        &result.final_grid,
        target_spec.params.clone(),
        target_spec.log_lo,
        target_spec.log_hi,
    )?;
    save_sgram(&out, &args.out)?;
    let summary = json!({
        "loss": cfg.loss,
        "steps_taken": result.steps_taken,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "initial_loss": result.loss_trajectory.first(),
        "final_loss": result.loss_trajectory.last(),
        "report": report,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn cmd_entropy(inp: EntropyInputs) -> Result<ExitCode> {
    let bits = entropy_bound(&inp)?;
    let bpp = bits_per_pixel(bits, inp.width, inp.height);
    let ratio = compression_ratio(bpp, SOURCE_BPP);
    println!("{} bits, {:?} bpp, {}:1", format_number(bits), bpp, format_number(ratio));
    Ok(ExitCode::SUCCESS)
}

/// Default finite-difference step for `gradcheck`.
pub fn default_step(metric: MetricKind) -> f64 {
    match metric {
        MetricKind::Mse => 1e-3,
        _ => 1e-4,
    }
}

fn cmd_gradcheck(kind: MetricKind, size: usize, seed: u64, h: Option<f64>) -> Result<ExitCode> {
    let metric = kind.for_size(size, size)?;
    let h = h.unwrap_or_else(|| default_step(kind));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Grid::from_shape_fn((size, size), |_| rng.gen::<f64>());
    let b = Grid::from_shape_fn((size, size), |_| rng.gen::<f64>());
    let analytic = metric.gradient(&a, &b)?;
    let numeric = finite_diff_grad(&metric, &a, &b, h)?;
    let agreement = compare_gradients(&analytic, &numeric);
    let pass = agreement.p99_rel < GRADCHECK_TOLERANCE;
    println!(
        "metric={kind} size={size} h={h:e} max_rel={:.3e} p99_rel={:.3e} {}",
        agreement.max_rel,
        agreement.p99_rel,
        if pass { "ok" } else { "FAILED" }
    );
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
