use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use octa_core::eval::{self, Psnr, SlabSpec};
use octa_core::io::{self, Volume};
use octa_core::models::initial_octa;
use octa_core::phantom::{make_vessel_scene, simulate_repeats, SceneParams};
use octa_core::recon::{reconstruct, IterationTrace, TraceReference};
use octa_core::volume::{normalize_amplitudes, subsample_repeats};
use octa_core::{AngioModel, AngioVolume, EnFaceImage, RepeatScanVolume, RepeatSelection};
use serde_json::json;

use crate::config::{self, ConfigLayer};
use crate::manifest::{manifest_path_for, RunManifest};
use crate::{
    CliError, CompareArgs, EnfaceArgs, MedianArgs, OctaArgs, PhantomArgs, ReconArgs, RepeatArgs,
};

pub const TRACE_HEADER: &str = "# octa-trace v1";
pub const COMPARE_HEADER: &str = "# octa-compare v1";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_shape(s: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<_> = s.split('x').map(|p| p.trim().parse::<usize>()).collect();
    match parts.as_slice() {
        [Ok(b), Ok(a), Ok(d)] => Ok([*b, *a, *d]),
        _ => Err(CliError::Usage(format!("shape {s:?} is not BxAxS"))),
    }
}

fn parse_selection(s: &str, n_r: usize) -> Result<RepeatSelection, CliError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") {
        return Ok(RepeatSelection::All);
    }
    if s.contains(',') {
        let idx = s
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("repeat indices {s:?}: {e}")))?;
        return Ok(RepeatSelection::Indices(idx));
    }
    let k = s
        .parse::<usize>()
        .map_err(|e| CliError::Usage(format!("repeat selection {s:?}: {e}")))?;
    Ok(RepeatSelection::from_count(k, n_r)?)
}

fn load_repeats(path: &Path, args: &RepeatArgs) -> Result<RepeatScanVolume, CliError> {
    let y = io::load_repeats(path)?;
    let selection = parse_selection(&args.use_repeats, y.dims().n_r)?;
    let y = subsample_repeats(&y, &selection)?;
    Ok(if args.normalize {
        normalize_amplitudes(&y)
    } else {
        y
    })
}

pub fn phantom(args: &PhantomArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let shape = match &args.shape {
        Some(s) => parse_shape(s)?,
        None => [args.size; 3],
    };
    if args.repeats < 2 {
        return Err(CliError::Usage(format!(
            "need at least 2 repeats, got {}",
            args.repeats
        )));
    }
    let params = SceneParams {
        shape,
        n_vessels: args.vessels,
        vessel_variance: args.vessel_variance,
        background_variance: args.background_variance,
        seed: args.seed,
    };
    let scene = make_vessel_scene(params)?;
    let noise_seed = args.seed.wrapping_add(1);
    let y = simulate_repeats(&scene, args.repeats, noise_seed)?;

    create_dir(&args.out_dir)?;
    let x_path = args.out_dir.join("x_true.octv");
    let y_path = args.out_dir.join("repeats.octv");
    let scene_path = args.out_dir.join("scene.txt");
    io::save_angio(&scene.x_true, &x_path)?;
    io::save_repeats(&y, &y_path)?;
    write_text(&scene_path, &scene.manifest_text())?;

    let mut m = RunManifest::new("phantom");
    m.seed = Some(args.seed);
    m.output("x_true", &x_path)
        .output("repeats", &y_path)
        .output("scene", &scene_path)
        .parameters(json!({
            "shape": shape,
            "repeats": args.repeats,
            "vessels": args.vessels,
            "vessel_variance": args.vessel_variance,
            "background_variance": args.background_variance,
            "noise_seed": noise_seed,
            "slab": scene.slab.to_string(),
            "vessel_fraction": scene.vessel_fraction(),
        }));
    m.write(&args.out_dir.join("manifest.json"), started)?;
    eprintln!(
        "phantom {}x{}x{}, {} repeats, slab {} -> {}",
        shape[0],
        shape[1],
        shape[2],
        args.repeats,
        scene.slab,
        args.out_dir.display()
    );
    Ok(())
}

pub fn octa(args: &OctaArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let model: AngioModel = args.model.parse()?;
    let y = load_repeats(&args.input, &args.repeats)?;
    let x0 = initial_octa(&y, model)?;
    io::save_angio(&x0, &args.out)?;

    let mut m = RunManifest::new("octa");
    m.input("repeats", &args.input)
        .output("volume", &args.out)
        .parameters(json!({
            "model": model.name(),
            "use_repeats": args.repeats.use_repeats,
            "n_repeats": y.dims().n_r,
            "normalize": args.repeats.normalize,
        }));
    m.write(&manifest_path_for(&args.out), started)
}

fn flag_layer(args: &ReconArgs) -> ConfigLayer {
    ConfigLayer {
        model: args.model.clone(),
        regularizer: args.regularizer.clone(),
        step_size: args.step_size,
        n_iter: args.n_iter,
        n_reg: args.n_reg,
        threshold: args.threshold,
        levels: args.levels,
        threshold_mode: args.threshold_mode.clone(),
        tv_weight: args.tv_weight,
        tv_inner_iterations: args.tv_inner_iterations,
        stop_tol: args.stop_tol,
        floor: args.floor,
        overshoot_guard: args.overshoot_guard,
    }
}

fn fmt_psnr(p: Psnr) -> String {
    p.to_string()
}

pub fn trace_csv(trace: &IterationTrace) -> String {
    let metrics = trace.has_metrics();
    let mut s = String::new();
    s.push_str(TRACE_HEADER);
    s.push('\n');
    s.push_str(if metrics {
        "iteration,mse_vs_initial,psnr_db,ssim\n"
    } else {
        "iteration,mse_vs_initial\n"
    });
    for r in &trace.records {
        let _ = write!(s, "{},{}", r.iteration, r.mse_vs_initial);
        if metrics {
            let psnr = r.psnr.map(fmt_psnr).unwrap_or_default();
            let ssim = r.ssim.map(|v| v.to_string()).unwrap_or_default();
            let _ = write!(s, ",{psnr},{ssim}");
        }
        s.push('\n');
    }
    s
}

pub fn recon(args: &ReconArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let file = args.config.as_deref().map(ConfigLayer::load).transpose()?;
    let (cfg, layers) = config::resolve(file, flag_layer(args))?;
    let y = load_repeats(&args.input, &args.repeats)?;

    let reference = match &args.reference {
        Some(path) => {
            let x_true = io::load_angio(path)?;
            let slab = args.slab.unwrap_or(SlabSpec::full(x_true.shape()[2]));
            Some(TraceReference::new(x_true, slab, args.percentile)?)
        }
        None => None,
    };

    let (x, trace) = reconstruct(&y, &cfg, reference.as_ref())?;

    create_dir(&args.out_dir)?;
    let x_path = args.out_dir.join("recon.octv");
    let trace_path = args.out_dir.join("trace.csv");
    io::save_angio(&x, &x_path)?;
    write_text(&trace_path, &trace_csv(&trace))?;

    let mut m = RunManifest::new("recon");
    m.input("repeats", &args.input);
    if let Some(c) = &args.config {
        m.input("config", c);
    }
    if let Some(r) = &args.reference {
        m.input("reference", r);
    }
    m.output("volume", &x_path)
        .output("trace", &trace_path)
        .parameters(json!({
            "config": layers,
            "use_repeats": args.repeats.use_repeats,
            "n_repeats": y.dims().n_r,
            "normalize": args.repeats.normalize,
            "slab": reference.as_ref().map(|r| r.slab.to_string()),
            "percentile": args.percentile,
            "iterations_run": trace.records.last().map(|r| r.iteration),
            "stopped_at": trace.stopped_at,
        }));
    m.write(&args.out_dir.join("manifest.json"), started)?;
    if let Some(last) = trace.records.last() {
        eprintln!(
            "recon {} + {}: {} iterations, mse vs initial {:e}",
            cfg.model,
            cfg.regularizer.kind(),
            last.iteration,
            last.mse_vs_initial
        );
    }
    Ok(())
}

fn slab_or_full(slab: Option<SlabSpec>, x: &AngioVolume) -> SlabSpec {
    slab.unwrap_or(SlabSpec::full(x.shape()[2]))
}

pub fn enface(args: &EnfaceArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let x = io::load_angio(&args.input)?;
    let slab = slab_or_full(args.slab, &x);
    let mut img = eval::enface_percentile(&x, slab, args.percentile)?;
    if let Some(t) = args.threshold {
        img = eval::background_threshold(&img, t)?;
    }
    let norm = eval::export_png(&img, &args.out, args.bit_depth)?;

    let mut m = RunManifest::new("enface");
    m.input("volume", &args.input)
        .output("image", &args.out)
        .output("normalization", &eval::export::sidecar_path(&args.out))
        .parameters(json!({
            "slab": slab.to_string(),
            "percentile": args.percentile,
            "threshold": args.threshold,
            "bit_depth": args.bit_depth,
            "min": norm.min,
            "max": norm.max,
        }));
    m.write(&manifest_path_for(&args.out), started)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub target: &'static str,
    pub psnr: Psnr,
    pub ssim: Option<f64>,
}

fn image_row(
    target: &'static str,
    a: &EnFaceImage,
    b: &EnFaceImage,
) -> Result<CompareRow, CliError> {
    let range = eval::reference_range(b);
    Ok(CompareRow {
        target,
        psnr: eval::psnr(a, b, range)?,
        ssim: match eval::ssim(a, b, range) {
            Ok(v) => Some(v),
            Err(octa_core::Error::InvalidDims(_)) => None,
            Err(e) => return Err(e.into()),
        },
    })
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = format!("{COMPARE_HEADER}\ntarget,psnr_db,ssim\n");
    for r in rows {
        let ssim = r.ssim.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.target, fmt_psnr(r.psnr), ssim);
    }
    s
}

fn load_either(path: &Path) -> Result<Result<AngioVolume, EnFaceImage>, CliError> {
    if is_png(path) {
        return Ok(Err(eval::read_png(path)?));
    }
    match io::load_volume(path)? {
        Volume::Angio(x) => Ok(Ok(x)),
        Volume::Repeats(_) => Err(CliError::Data(format!(
            "{}: expected an angiography volume, found a repeat volume",
            path.display()
        ))),
    }
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let a = load_either(&args.candidate)?;
    let b = load_either(&args.reference)?;
    let mut slab_used = None;
    let rows = match (&a, &b) {
        (Ok(a), Ok(b)) => {
            let range = eval::reference_range(b);
            let slab = slab_or_full(args.slab, b);
            slab_used = Some(slab);
            let ea = eval::enface_percentile(a, slab, args.percentile)?;
            let eb = eval::enface_percentile(b, slab, args.percentile)?;
            let ta = eval::background_threshold(&ea, args.threshold)?;
            let tb = eval::background_threshold(&eb, args.threshold)?;
            vec![
                CompareRow {
                    target: "volume",
                    psnr: eval::psnr(a, b, range)?,
                    ssim: None,
                },
                image_row("enface", &ea, &eb)?,
                image_row("enface_thresholded", &ta, &tb)?,
            ]
        }
        (Err(a), Err(b)) => vec![image_row("image", a, b)?],
        _ => {
            return Err(CliError::Usage(
                "cannot compare a volume with an image".into(),
            ))
        }
    };
    write_text(&args.out, &compare_csv(&rows))?;
    for r in &rows {
        println!(
            "{:<20} psnr {:>10} dB  ssim {}",
            r.target,
            fmt_psnr(r.psnr),
            r.ssim
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into())
        );
    }

    let mut m = RunManifest::new("compare");
    m.input("candidate", &args.candidate)
        .input("reference", &args.reference)
        .output("table", &args.out)
        .parameters(json!({
            "slab": slab_used.map(|s| s.to_string()),
            "percentile": args.percentile,
            "threshold": args.threshold,
        }));
    m.write(&manifest_path_for(&args.out), started)
}

pub fn median(args: &MedianArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let x = io::load_angio(&args.input)?;
    io::save_angio(&eval::median_filter_3d(&x), &args.out)?;
    let mut m = RunManifest::new("median");
    m.input("volume", &args.input)
        .output("volume", &args.out)
        .parameters(json!({ "window": 3 }));
    m.write(&manifest_path_for(&args.out), started)
}
