//! The work behind each subcommand, independent of argument parsing.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use mssnet_core::audit::{audit_variant, AuditReport, ANCHORS, MAC_CONVENTION, MAC_TOL, PARAM_TOL};
use mssnet_core::autodiff::{GradCheckOptions, GradCheckReport};
use mssnet_core::metrics::{psnr, ssim_with, SsimMode};
use mssnet_core::model::{build_model, preset, ChannelPlan, Model, ModelConfig};
use mssnet_core::train::{blur, motion_kernel, synthetic_image, train, HistoryRow, Precision};
use mssnet_core::unet::UNetChannels;
use mssnet_core::verify::check_gradients;
use mssnet_core::{Real, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::DatasetLayout;
use crate::error::{CliError, Result};
use crate::image_io::{load_image, save_image};
use crate::weights::{load_weights, save_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    KeyValue,
}

/// Aligned text report with per-module rows, totals and anchor deltas.
pub fn render_audit_text(r: &AuditReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "variant     {}", r.variant.as_deref().unwrap_or("(custom)"));
    let _ = writeln!(s, "resolution  {}x{} (HxW, assumed)", r.height, r.width);
    let _ = writeln!(s, "convention  {MAC_CONVENTION}");
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<28} {:>14} {:>14}", "module", "params", "GMACs");
    for row in r.modules() {
        let _ = writeln!(s, "{:<28} {:>14} {:>14.3}", row.name, row.params, row.macs / 1e9);
    }
    let _ = writeln!(s, "{:<28} {:>14} {:>14.3}", "total", r.total_params, r.macs_g());
    let _ = writeln!(s);
    match (&r.anchor, r.param_delta(), r.mac_delta()) {
        (Some(a), Some(p), Some(m)) => {
            let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "anchor ({})", a.source);
            let _ = writeln!(
                s,
                "  params  {:>9.4}M expected {:>9.2}M  delta {:+.2}%  tol {:.0}%  {}",
                r.params_m(),
                p.expected,
                100.0 * p.relative(),
                100.0 * PARAM_TOL,
                verdict(p.within(PARAM_TOL))
            );
            let _ = writeln!(
                s,
                "  MACs    {:>9.2}G expected {:>9.2}G  delta {:+.2}%  tol {:.0}%  {}",
                r.macs_g(),
                m.expected,
                100.0 * m.relative(),
                100.0 * MAC_TOL,
                verdict(m.within(MAC_TOL))
            );
        }
        _ => {
            let _ = writeln!(s, "anchor (none)");
        }
    }
    s
}

/// One `key = value` line per fact.
pub fn render_audit_kv(r: &AuditReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "variant = {}", r.variant.as_deref().unwrap_or("(custom)"));
    let _ = writeln!(s, "height = {}", r.height);
    let _ = writeln!(s, "width = {}", r.width);
    let _ = writeln!(s, "mac_convention = {MAC_CONVENTION}");
    for row in r.modules() {
        let _ = writeln!(s, "module.{}.params = {}", row.name, row.params);
        let _ = writeln!(s, "module.{}.macs = {}", row.name, row.macs);
    }
    let _ = writeln!(s, "total.params = {}", r.total_params);
    let _ = writeln!(s, "total.macs = {}", r.total_macs);
    if let (Some(a), Some(p), Some(m)) = (&r.anchor, r.param_delta(), r.mac_delta()) {
        let _ = writeln!(s, "anchor.source = {}", a.source);
        let _ = writeln!(s, "anchor.params_m = {}", p.expected);
        let _ = writeln!(s, "anchor.macs_g = {}", m.expected);
        let _ = writeln!(s, "delta.params.absolute_m = {}", p.absolute());
        let _ = writeln!(s, "delta.params.relative = {}", p.relative());
        let _ = writeln!(s, "delta.macs.absolute_g = {}", m.absolute());
        let _ = writeln!(s, "delta.macs.relative = {}", m.relative());
        let _ = writeln!(s, "pass.params = {}", p.within(PARAM_TOL));
        let _ = writeln!(s, "pass.macs = {}", m.within(MAC_TOL));
    }
    s
}

/// Audits one variant, or every anchored variant for `"all"`. Returns
/// whether every anchor held.
pub fn audit(variant: &str, height: usize, width: usize, format: ReportFormat, out: &mut dyn Write) -> Result<bool> {
    let names: Vec<&str> = if variant == "all" {
        ANCHORS.iter().map(|a| a.variant).collect()
    } else {
        vec![variant]
    };
    let mut ok = true;
    for (i, name) in names.iter().enumerate() {
        let r = audit_variant(name, height, width)?;
        ok &= r.passed();
        let text = match format {
            ReportFormat::Text => render_audit_text(&r),
            ReportFormat::KeyValue => render_audit_kv(&r),
        };
        if i > 0 {
            writeln!(out).map_err(|e| CliError::io("<stdout>", e))?;
        }
        write!(out, "{text}").map_err(|e| CliError::io("<stdout>", e))?;
    }
    Ok(ok)
}

/// The variant's wiring with channels shrunk to 4/6/8, so that a 64-bit
/// finite-difference check stays cheap.
pub fn gradcheck_config(variant: &str) -> Result<ModelConfig> {
    let mut cfg = preset(variant)?;
    if variant != "tiny" {
        cfg.channels = ChannelPlan::Uniform(UNetChannels::new(4, 6, 8));
        cfg.base_channels = 4;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn gradcheck(variant: &str, tol: f64, seed: u64) -> Result<GradCheckReport> {
    let cfg = gradcheck_config(variant)?;
    let m = cfg.size_multiple();
    let x = Tensor::uniform([1, 3, m, m], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let opts = GradCheckOptions {
        tol,
        seed,
        ..GradCheckOptions::default()
    };
    Ok(check_gradients(&cfg, &x, opts)?)
}

/// Where the run config of a checkpoint is stored.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Builds the checkpoint's variant (from its sidecar unless overridden) and
/// loads the weights.
pub fn load_model(weights: &Path, variant: Option<&str>) -> Result<Model<f32>> {
    let variant = match variant {
        Some(v) => v.to_string(),
        None => RunConfig::load(&sidecar_path(weights))?.variant,
    };
    let mut model = build_model::<f32>(&preset(&variant)?, 0)?;
    load_weights(weights, &mut model.store)?;
    Ok(model)
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let i = i.rem_euclid(period);
    (if i >= n as isize { period - i } else { i }) as usize
}

/// Reflection-pads the bottom and right edges up to a multiple of `m`.
pub fn pad_to_multiple<T: Real>(t: &Tensor<T>, m: usize) -> Tensor<T> {
    let s = t.shape();
    let (h, w) = (s.h.div_ceil(m) * m, s.w.div_ceil(m) * m);
    if (h, w) == (s.h, s.w) {
        return t.clone();
    }
    Tensor::from_fn([s.n, s.c, h, w], |n, c, y, x| {
        t.get(n, c, reflect(y as isize, s.h), reflect(x as isize, s.w))
    })
}

pub fn crop<T: Real>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let s = t.shape();
    Tensor::from_fn([s.n, s.c, h, w], |n, c, y, x| t.get(n, c, y, x))
}

/// Deblurs an image of any size.
pub fn deblur(model: &Model<f32>, img: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = img.shape();
    let padded = pad_to_multiple(img, model.config().size_multiple());
    Ok(crop(&model.infer(&padded)?, s.h, s.w))
}

pub fn infer(weights: &Path, variant: Option<&str>, input: &Path, output: &Path) -> Result<()> {
    let model = load_model(weights, variant)?;
    let img = load_image::<f32>(input)?;
    save_image(&deblur(&model, &img)?, output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub images: Vec<ImageScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Scores every pair of `data`, in parallel, aggregated in file-name order.
pub fn evaluate(model: &Model<f32>, data: &DatasetLayout, mode: SsimMode) -> Result<EvalSummary> {
    let images = data
        .names
        .par_iter()
        .map(|name| {
            let pair = data.load_pair::<f32>(name)?;
            let out = deblur(model, &pair.blurred)?;
            Ok(ImageScore {
                name: name.clone(),
                psnr: psnr(&out, &pair.sharp)?,
                ssim: ssim_with(&out, &pair.sharp, mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = images.len() as f64;
    Ok(EvalSummary {
        mean_psnr: images.iter().map(|s| s.psnr).sum::<f64>() / n,
        mean_ssim: images.iter().map(|s| s.ssim).sum::<f64>() / n,
        images,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataOptions {
    /// Sharp sources; synthetic images are drawn when absent.
    pub sharp: Option<PathBuf>,
    pub out: PathBuf,
    pub len: usize,
    pub angle: f64,
    pub seed: u64,
    /// Synthetic images to draw.
    pub count: usize,
    /// Side of synthetic images.
    pub size: usize,
}

/// Writes blurred/sharp pairs in the dataset layout. Returns the file names.
pub fn make_toy_data(opts: &ToyDataOptions) -> Result<Vec<String>> {
    let layout = DatasetLayout::create(&opts.out)?;
    let kernel = motion_kernel(opts.len, opts.angle);
    let sources: Vec<(String, Tensor<f64>)> = match &opts.sharp {
        Some(dir) => {
            let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| CliError::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            names.sort();
            names
                .iter()
                .map(|p| {
                    let stem = p.file_stem().unwrap_or_default().to_string_lossy();
                    Ok((format!("{stem}.png"), load_image(p)?))
                })
                .collect::<Result<_>>()?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..opts.count)
                .map(|i| (format!("{i:04}.png"), synthetic_image(opts.size, opts.size, &mut rng)))
                .collect()
        }
    };
    let mut written = Vec::with_capacity(sources.len());
    for (name, sharp) in sources {
        save_image(&blur(&sharp, &kernel), &layout.blur_path(&name))?;
        save_image(&sharp, &layout.sharp_path(&name))?;
        written.push(name);
    }
    Ok(written)
}

pub const HISTORY_HEADER: &str = "iteration,lr,cont,freq,total";

pub fn history_line<T: Real>(row: &HistoryRow<T>) -> String {
    let r = &row.report;
    format!("{},{:e},{},{},{}", row.iter, row.lr, r.cont, r.freq, r.total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    pub epochs: f64,
}

/// Trains `cfg.variant` on `data`, writing checkpoints (plus sidecar config)
/// to `out` and the loss history as CSV to `history`.
pub fn run_training(cfg: &RunConfig, data: &Path, out: &Path, history: &Path) -> Result<TrainSummary> {
    match cfg.precision() {
        Some(Precision::F64) => train_as::<f64>(cfg, data, out, history),
        _ => train_as::<f32>(cfg, data, out, history),
    }
}

fn train_as<T: Real>(cfg: &RunConfig, data: &Path, out: &Path, history: &Path) -> Result<TrainSummary> {
    let layout = DatasetLayout::open(data)?;
    let pairs = layout.load_pairs::<T>()?;
    let tc = cfg.train_config().ok_or_else(|| CliError::Failed("bad precision".into()))?;
    let mut model = build_model::<T>(&cfg.model_config()?, cfg.seed)?;
    let sidecar = sidecar_path(out);
    let mut csv = String::from(HISTORY_HEADER);
    csv.push('\n');
    let mut failure = None;
    let rows = train(&mut model, &pairs, &tc, |row, m| {
        csv.push_str(&history_line(row));
        csv.push('\n');
        let every = cfg.checkpoint_every;
        if every > 0 && (row.iter + 1) % every == 0 {
            if let Err(e) = save_weights(&m.store, out).map_err(CliError::from).and_then(|_| cfg.save(&sidecar)) {
                failure = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    save_weights(&model.store, out)?;
    cfg.save(&sidecar)?;
    if let Some(dir) = history.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(history, csv).map_err(|e| CliError::io(history, e))?;
    let loss = |r: &HistoryRow<T>| Real::to_f64(r.report.total);
    Ok(TrainSummary {
        iterations: rows.len(),
        first_loss: rows.first().map(loss).unwrap_or(f64::NAN),
        last_loss: rows.last().map(loss).unwrap_or(f64::NAN),
        epochs: tc.epochs(pairs.len()),
    })
}
