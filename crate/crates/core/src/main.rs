use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use purikit::harness::{emit_report, run_eval, EvalConfig, ReportFormat};
use purikit::imgcore::{load_image, save_image};
use purikit::masking::MaskSource;
use purikit::metrics::{external_metric, perturbation_stats, MetricRegistry};
use purikit::perturbsim::{generate, parse_epsilon, PerturbKind, PerturbSpec};
use purikit::purify::{purify, BlendMode, PurifyParams};
use purikit::srbackend::SrBackendSpec;
use purikit::transforms::{quant_tables_for_quality, ResampleKernel, Subsampling, TransformChain};
use purikit::Error;

/// Image transformations, region-wise purification and robustness evaluation.
#[derive(Parser, Debug)]
#[command(name = "purikit", version)]
struct Cli {
    /// Log verbosity (error, warn, info, debug); also read from RUST_LOG.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    cmd: Command,
}

// Parsed once per process, so the size of the purify variant does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand, Debug)]
enum Command {
    /// Apply a transformation chain to an image.
    Transform(TransformArgs),
    /// Purify an image (JPEG + down-sampling + SR on the face, SR on the background).
    Purify(PurifyArgs),
    /// Compare two images with a metric and print its value.
    Metric(MetricArgs),
    /// Add a synthetic bounded perturbation to an image.
    Perturb(PerturbArgs),
    /// Run a batch evaluation from a TOML config.
    Evaluate(EvaluateArgs),
    /// Print the 8x8 JPEG quantization tables for a quality factor.
    QuantTables(QuantArgs),
}

#[derive(Args, Debug)]
struct TransformArgs {
    /// Input PNG.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Steps separated by `;`, e.g. `jpeg:q=75;resize:f=0.5,k=lanczos3`.
    #[arg(long)]
    chain: TransformChain,
}

#[derive(Args, Debug)]
struct PurifyArgs {
    /// Input PNG.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Weight of the protected image in the face-path blend.
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// JPEG quality of the face path, or `none` to skip the JPEG stage.
    #[arg(long, default_value = "75")]
    jpeg_q: String,
    /// Chroma subsampling of the face-path JPEG (444 or 420).
    #[arg(long, default_value = "420")]
    subsampling: Subsampling,
    /// Integer down-sampling factor; SR backends must upscale by the same factor.
    #[arg(long, default_value_t = 2)]
    down: u32,
    /// Resampling kernel for down-sampling.
    #[arg(long, default_value = "lanczos3")]
    kernel: ResampleKernel,
    /// Face-path blend: `convex` ((1-λ)s + λx̂) or `literal` (s + λx̂, clamped).
    #[arg(long, default_value = "convex")]
    blend: BlendMode,
    /// Face SR backend: `identity`, `interp[:k=..,s=..]` or `external[:s=..,t=..]:<cmd>`.
    /// Defaults to Lanczos-3 interpolation at the down factor.
    #[arg(long)]
    face_sr: Option<SrBackendSpec>,
    /// General SR backend, same syntax as --face-sr.
    #[arg(long)]
    general_sr: Option<SrBackendSpec>,
    /// Mask source: `ellipse[:cx=..,cy=..,rx=..,ry=..]`, `file:<png>` or `external:<cmd>`.
    #[arg(long, default_value = "ellipse")]
    mask: MaskSource,
    /// Feather radius in pixels (default max(2, width/64)).
    #[arg(long)]
    feather: Option<f64>,
    /// Use the mask without feathering.
    #[arg(long)]
    hard_mask: bool,
    /// Directory receiving x_jd.png, x_f.png, x_g.png and mask.png.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricArgs {
    /// First image (or directory for set-level external metrics).
    #[arg(long)]
    a: PathBuf,
    /// Second image (or directory).
    #[arg(long)]
    b: PathBuf,
    /// psnr, ssim, mse, or any name when --cmd is given.
    #[arg(long)]
    name: String,
    /// External backend run as `<cmd> <name> <a> <b>`.
    #[arg(long)]
    cmd: Option<String>,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    /// Input PNG.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// uniform, sign, checkerboard[:p=2] or sinusoid[:p=64,o=h|v].
    #[arg(long, default_value = "sign")]
    kind: PerturbKind,
    /// l∞ budget, e.g. `8/255` or `0.03`.
    #[arg(long, default_value = "8/255", value_parser = parse_epsilon)]
    eps: f64,
    /// Noise seed (ignored by checkerboard and sinusoid).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Report path (overrides the config); `-` prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json (default: config, then file extension).
    #[arg(long)]
    format: Option<ReportFormat>,
    /// Worker threads (PURIKIT_WORKERS takes precedence).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct QuantArgs {
    /// Quality factor 1-100.
    #[arg(long)]
    q: u32,
}

/// Writes to stdout, ignoring a closed pipe (`purikit ... | head`).
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn format_table(name: &str, t: &[u16; 64]) -> String {
    let mut s = format!("{name}:\n");
    for row in t.chunks(8) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>3}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

fn run(cli: Cli) -> purikit::Result<()> {
    match cli.cmd {
        Command::Transform(a) => {
            let img = load_image(&a.input)?;
            save_image(&a.chain.apply(&img)?, &a.out)?;
        }
        Command::Purify(a) => {
            let sr_default = || {
                if a.down == 1 {
                    Ok(SrBackendSpec::identity())
                } else {
                    SrBackendSpec::interp(ResampleKernel::default(), a.down)
                }
            };
            let params = PurifyParams {
                lambda: a.lambda,
                jpeg_q: match a.jpeg_q.as_str() {
                    "none" => None,
                    q => Some(
                        q.parse()
                            .map_err(|_| Error::InvalidParameter(format!("--jpeg-q {q:?}")))?,
                    ),
                },
                subsampling: a.subsampling,
                down_factor: a.down,
                down_kernel: a.kernel,
                blend_mode: a.blend,
                face_sr: a.face_sr.clone().map_or_else(sr_default, Ok)?,
                general_sr: a.general_sr.clone().map_or_else(sr_default, Ok)?,
                mask_source: a.mask.clone(),
                feather_radius: a.feather,
                hard_mask: a.hard_mask,
            };
            let img = load_image(&a.input)?;
            let out = purify(&img, &params, a.trace_dir.is_some())?;
            save_image(&out.image, &a.out)?;
            if let (Some(dir), Some(trace)) = (&a.trace_dir, &out.trace) {
                trace.save(dir)?;
                for (stage, s) in &trace.timings {
                    eprintln!("{stage}: {s:.4} s");
                }
            }
        }
        Command::Metric(a) => {
            let mut reg = MetricRegistry::with_natives();
            let value = match &a.cmd {
                Some(cmd) => {
                    reg.register_external(&a.name, cmd, None, None)?;
                    external_metric(&reg, &a.name, &a.a, &a.b)?.value
                }
                None => {
                    let (x, y) = (load_image(&a.a)?, load_image(&a.b)?);
                    reg.evaluate_native(&a.name, &x, &y)?.value
                }
            };
            emit(&format!("{value:?}\n"));
        }
        Command::Perturb(a) => {
            let img = load_image(&a.input)?;
            let spec = PerturbSpec::new(a.kind, a.eps, a.seed)?;
            let out = generate(&img, &spec)?;
            save_image(&out, &a.out)?;
            let st = perturbation_stats(&img, &out)?;
            eprintln!("linf {:.6} l2 {:.6} mean_abs {:.6}", st.linf, st.l2, st.mean_abs);
        }
        Command::Evaluate(a) => {
            let mut cfg = EvalConfig::from_toml_file(&a.config)?;
            if let Some(w) = a.workers {
                cfg.workers = Some(w);
            }
            if let Some(f) = a.format {
                cfg.output.format = Some(f);
            }
            let to_stdout = a.out.as_deref() == Some(std::path::Path::new("-"));
            if let Some(o) = a.out.filter(|_| !to_stdout) {
                cfg.output.path = Some(o);
            }
            let report = run_eval(&cfg)?;
            let format = cfg.output.resolved_format();
            match (&cfg.output.path, to_stdout) {
                (Some(p), false) => emit_report(&report, p, format)?,
                _ => emit(&report.render(format)?),
            }
            for f in &report.failures {
                eprintln!("failed: {} [{}]: {}", f.file, f.setting, f.error);
            }
        }
        Command::QuantTables(a) => {
            let t = quant_tables_for_quality(a.q)?;
            emit(&format!(
                "{}\n{}",
                format_table("luminance", &t.luminance),
                format_table("chrominance", &t.chrominance)
            ));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
