//! `mfdnet` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 a verification check failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{compare, estimate, CostConvention, CostReport};
use crate::graph::{build_model, forward, Form, GraphSpec, ModelConfig, Variant};
use crate::image::{crop, pad_to_multiple, RgbImage};
use crate::reparam::{fold_graph, verify_fold};
use crate::weights::{self, init_random, InitScheme, InitSpec, WeightStore};
use crate::{Error, Result, Shape, Tensor};

#[derive(Debug, Parser)]
#[command(
    name = "mfdnet",
    version,
    about = "MFDNet inference, folding and cost tools"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Denoise a binary PPM image.
    Denoise {
        #[arg(long)]
        model: String,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        arch: ArchArgs,
    },
    /// Fold train-form weights into deploy-form weights.
    Fold {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        model: String,
        #[command(flatten)]
        arch: ArchArgs,
    },
    /// Print MACs, memory traffic and parameters.
    Cost {
        /// Comma-separated model list. Without it the baseline flags are used.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long, default_value = "1280x720")]
        input_size: String,
        #[arg(long)]
        bytes_per_elem: Option<u64>,
        #[arg(long, value_enum, default_value_t = Convention::Calibrated)]
        convention: Convention,
        #[arg(long, default_value = "deploy")]
        form: String,
        /// Also print one line per layer.
        #[arg(long)]
        per_layer: bool,
    },
    /// Check RepConv folding on seeded random branches.
    VerifyFold {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f32,
    },
    /// Time forward passes on random weights.
    Bench {
        #[arg(long)]
        model: String,
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long, default_value = "256x256")]
        size: String,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "deploy")]
        form: String,
    },
    /// Write a seeded weight file for a model.
    InitRandom {
        #[arg(long)]
        model: String,
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "train")]
        form: String,
        #[arg(long, value_enum, default_value_t = Scheme::Kaiming)]
        scheme: Scheme,
        /// Scales the Kaiming bounds.
        #[arg(long, default_value_t = 1.0)]
        gain: f32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ArchArgs {
    /// Channel width (baseline / custom).
    #[arg(long)]
    width: Option<usize>,
    /// Conv+activation depth (baseline).
    #[arg(long)]
    blocks: Option<usize>,
    /// Downsampling factor (baseline).
    #[arg(long)]
    factor: Option<usize>,
    /// MFDB count (custom).
    #[arg(long)]
    mfdbs: Option<usize>,
    /// RepConvs per MFDB (custom).
    #[arg(long)]
    repconvs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    Calibrated,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    Kaiming,
    Zeros,
    Identity,
}

impl From<Scheme> for InitScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Kaiming => InitScheme::KaimingUniform,
            Scheme::Zeros => InitScheme::Zeros,
            Scheme::Identity => InitScheme::Identity,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.cmd, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Cmd, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Cmd::Denoise {
            model,
            weights,
            input,
            output,
            arch,
        } => denoise(&model, &arch, &weights, &input, &output, out),
        Cmd::Fold {
            input,
            output,
            model,
            arch,
        } => fold(&model, &arch, &input, &output, out),
        Cmd::Cost {
            model,
            arch,
            input_size,
            bytes_per_elem,
            convention,
            form,
            per_layer,
        } => {
            let (w, h) = parse_size(&input_size)?;
            let mut cv = match convention {
                Convention::Calibrated => CostConvention::calibrated(),
                Convention::Full => CostConvention::default(),
            };
            if let Some(b) = bytes_per_elem {
                if b == 0 {
                    return Err(Error::Usage("--bytes-per-elem must be positive".into()));
                }
                cv.bytes_per_elem = b;
            }
            let form: Form = form.parse()?;
            let models = match &model {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
                None => vec!["baseline".to_string()],
            };
            let mut rows: Vec<(String, CostReport)> = Vec::new();
            for m in &models {
                let cfg = config(m, &arch, form)?;
                let g = build_model(&cfg)?;
                rows.push((label(&cfg), estimate(&g, Shape::new(1, 3, h, w), &cv)?));
            }
            let refs: Vec<(&str, &CostReport)> =
                rows.iter().map(|(l, r)| (l.as_str(), r)).collect();
            write!(out, "{}", compare(&refs))?;
            if per_layer {
                for (l, r) in &rows {
                    writeln!(out, "\n{l}")?;
                    for c in &r.per_layer {
                        writeln!(
                            out,
                            "  {:>4} {:<40} {:>14} {:>10} {:>14} {:>14}",
                            c.id, c.kind, c.macs, c.params, c.read, c.write
                        )?;
                    }
                }
            }
            Ok(0)
        }
        Cmd::VerifyFold { seed, trials, tol } => {
            let t0 = Instant::now();
            let r = verify_fold(seed, trials, tol);
            writeln!(
                out,
                "trials={} max_abs_diff={:.3e} tol={:.1e} time={:.2}s {}",
                r.trials,
                r.max_abs_diff,
                r.tol,
                t0.elapsed().as_secs_f64(),
                if r.pass { "PASS" } else { "FAIL" }
            )?;
            Ok(if r.pass { 0 } else { 2 })
        }
        Cmd::Bench {
            model,
            arch,
            size,
            runs,
            threads,
            form,
        } => {
            let (w, h) = parse_size(&size)?;
            let cfg = config(&model, &arch, form.parse()?)?;
            let g = build_model(&cfg)?;
            let ws = init_random(&g, &InitSpec::new(0, InitScheme::KaimingUniform));
            let x = seeded_input(0, h, w);
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                pool = pool.num_threads(n);
            }
            let pool = pool
                .build()
                .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
            let times = pool.install(|| -> Result<Vec<f64>> {
                for _ in 0..3 {
                    forward(&g, &ws, &x)?;
                }
                (0..runs.max(1))
                    .map(|_| {
                        let t0 = Instant::now();
                        forward(&g, &ws, &x)?;
                        Ok(t0.elapsed().as_secs_f64() * 1e3)
                    })
                    .collect()
            })?;
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = times.iter().cloned().fold(0.0, f64::max);
            writeln!(
                out,
                "{} {}x{} threads={} runs={} mean={:.1}ms min={:.1}ms max={:.1}ms",
                label(&cfg),
                w,
                h,
                pool.current_num_threads(),
                times.len(),
                mean,
                min,
                max
            )?;
            Ok(0)
        }
        Cmd::InitRandom {
            model,
            arch,
            seed,
            form,
            scheme,
            gain,
            out: path,
        } => {
            if !(gain.is_finite() && gain >= 0.0) {
                return Err(Error::Usage(
                    "--gain must be finite and non-negative".into(),
                ));
            }
            let cfg = config(&model, &arch, form.parse()?)?;
            let g = build_model(&cfg)?;
            let ws = init_random(&g, &InitSpec::new(seed, scheme.into()).with_gain(gain));
            weights::save(&ws, &path)?;
            writeln!(
                out,
                "wrote {} tensors ({} parameters) to {}",
                ws.len(),
                ws.param_count(),
                path.display()
            )?;
            Ok(0)
        }
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Usage(format!("size `{s}` is not WxH"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn config(model: &str, a: &ArchArgs, form: Form) -> Result<ModelConfig> {
    let variant: Variant = model.parse()?;
    let cfg = match variant {
        Variant::Baseline => ModelConfig::baseline(
            a.width.unwrap_or(48),
            a.blocks.unwrap_or(16),
            a.factor.unwrap_or(4),
        ),
        Variant::Custom => {
            let mut c = ModelConfig::mfdnet(Variant::Custom, form);
            c.width = a.width.unwrap_or(c.width);
            c.mfdbs = a.mfdbs.unwrap_or(c.mfdbs);
            c.repconvs = a.repconvs.unwrap_or(c.repconvs);
            c
        }
        v => ModelConfig::mfdnet(v, form),
    };
    cfg.check()?;
    Ok(cfg)
}

fn label(cfg: &ModelConfig) -> String {
    match cfg.variant {
        Variant::Baseline => format!("C{}_N{} (f{})", cfg.width, cfg.blocks, cfg.factor),
        Variant::Custom => format!("custom C{} M{} K{}", cfg.width, cfg.mfdbs, cfg.repconvs),
        v => v.name().to_string(),
    }
}

fn form_of(w: &WeightStore) -> Form {
    if w.names().any(|n| n.ends_with(".expand.w")) {
        Form::Train
    } else {
        Form::Deploy
    }
}

/// Deterministic 1x3xHxW input in [0, 1].
pub fn seeded_input(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(1, 3, h, w);
    Tensor::new(
        shape,
        (0..shape.numel()).map(|_| rng.gen::<f32>()).collect(),
    )
    .expect("non-empty")
}

fn load_checked(model: &str, arch: &ArchArgs, path: &Path) -> Result<(GraphSpec, WeightStore)> {
    let ws = weights::load(path)?;
    let cfg = config(model, arch, form_of(&ws))?;
    let g = build_model(&cfg)?;
    g.check_weights(&ws)?;
    Ok((g, ws))
}

fn denoise(
    model: &str,
    arch: &ArchArgs,
    weights_path: &Path,
    input: &Path,
    output: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let (g, ws) = load_checked(model, arch, weights_path)?;
    let img = RgbImage::read(input)?;
    let x = img.to_tensor();
    let padded = pad_to_multiple(&x, g.required_multiple);
    let y = forward(&g, &ws, &padded)?;
    let y = crop(&y, img.height, img.width);
    weights::mfdw::write_atomic(output, &RgbImage::from_tensor(&y).to_ppm())?;
    writeln!(
        out,
        "{} {}x{} -> {}",
        g.label,
        img.width,
        img.height,
        output.display()
    )?;
    Ok(0)
}

fn fold(
    model: &str,
    arch: &ArchArgs,
    input: &Path,
    output: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let (g, ws) = load_checked(model, arch, input)?;
    if g.form == Form::Deploy {
        weights::save(&ws, output)?;
        writeln!(out, "already deploy form; copied {} tensors", ws.len())?;
        return Ok(0);
    }
    let (dg, dw) = fold_graph(&g, &ws)?;
    let m = g.required_multiple.max(1);
    let side = 64usize.div_ceil(m) * m;
    let x = seeded_input(0, side, side);
    let a = forward(&g, &ws, &x)?;
    let b = forward(&dg, &dw, &x)?;
    let diff = a.max_abs_diff(&b)?;
    let peak = a.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    weights::save(&dw, output)?;
    writeln!(
        out,
        "folded {} RepConv sites; {} -> {} tensors; probe max_abs_diff={:.3e} relative={:.3e}",
        g.repconv_sites(),
        ws.len(),
        dw.len(),
        diff,
        diff / peak.max(f32::MIN_POSITIVE)
    )?;
    Ok(0)
}
