use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lensdof_cli::frame::{render_png, FocusSpec, Frame, RenderSettings};
use lensdof_cli::scene::LoadRequest;
use lensdof_cli::{router, SceneStore};
use lensdof_core::dataset::{
    self, eval_refocus, synthesize_dataset, variant_name, DatasetManifest, RefocusInput, SceneEval,
    Split,
};
use lensdof_core::depth::fit_scale;
use lensdof_core::fit::{fit_lens, FitConfig};
use lensdof_core::io::{self, DepthEncoding};
use lensdof_core::synthetic::{generate, SceneSpec};
use lensdof_core::{CocProfile, CocShape, DefocusRenderer, GammaSpec, LensParams};
use serde::{Deserialize, Serialize};

/// Thin-lens depth-of-field rendering, lens fitting and dataset tools.
#[derive(Parser)]
#[command(name = "lensdof", version)]
struct Cli {
    /// Worker threads for rendering (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a defocused image from an all-in-focus image and its depth.
    Render(RenderArgs),
    /// Recover aperture and focus from a defocused observation.
    Fit(FitArgs),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Scale-align a dense depth prediction to sparse depth samples.
    AlignDepth(AlignArgs),
    #[command(subcommand)]
    Scene(SceneCommand),
    /// Serve the HTTP/JSON API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Render every scene image under every lens preset, with a manifest.
    Synth(SynthArgs),
    /// Fit lens parameters for the images of a synthesized dataset.
    Fit(DatasetFitArgs),
    /// Score fitted parameters and test renders against a dataset.
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum SceneCommand {
    /// Write procedural RGB-D frames as a scene directory.
    Gen(SceneGenArgs),
}

#[derive(Args)]
struct DepthInput {
    /// Depth map (.pfm, or 16-bit .png with --depth-range).
    #[arg(long)]
    depth: PathBuf,
    /// Metric depth of the 16-bit PNG values 0 and 65535, as `near,far`.
    #[arg(long, value_parser = parse_depth_range)]
    depth_range: Option<DepthEncoding>,
}

#[derive(Args, Clone)]
struct BokehArgs {
    #[arg(long, default_value = "circle")]
    shape: CocShape,
    /// Polygon rotation in radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rotation: f64,
    /// Steepness of the CoC edge.
    #[arg(long, default_value_t = lensdof_core::optics::DEFAULT_ALPHA)]
    alpha: f64,
    /// CoC radius clamp in pixels.
    #[arg(long, default_value_t = lensdof_core::optics::DEFAULT_MAX_RADIUS_PX)]
    max_radius: f64,
    #[arg(long, default_value_t = lensdof_core::optics::DEFAULT_GAMMA)]
    gamma: f64,
}

impl BokehArgs {
    fn profile(&self) -> CocProfile {
        CocProfile {
            alpha: self.alpha,
            shape: self.shape,
            shape_rotation: self.rotation,
            max_radius_px: self.max_radius,
        }
    }
}

#[derive(Args, Clone)]
struct PresetArgs {
    /// Aperture presets of the grid.
    #[arg(long, value_delimiter = ',', default_values_t = dataset::DEFAULT_APERTURE_PRESETS)]
    apertures: Vec<f64>,
    /// Focus presets of the grid.
    #[arg(long, value_delimiter = ',', default_values_t = dataset::DEFAULT_FOCUS_PRESETS)]
    focuses: Vec<f64>,
}

#[derive(Args)]
struct RenderArgs {
    /// All-in-focus PNG.
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    depth: DepthInput,
    #[arg(long, required_unless_present = "grid", allow_negative_numbers = true)]
    aperture: Option<f64>,
    /// Focus as normalized disparity in (0, 1].
    #[arg(
        long,
        conflicts_with = "focus_pixel",
        required_unless_present_any = ["focus_pixel", "grid"],
        allow_negative_numbers = true
    )]
    focus: Option<f64>,
    /// Focus on the depth at pixel `x,y`.
    #[arg(long, value_parser = parse_pixel)]
    focus_pixel: Option<(usize, usize)>,
    #[command(flatten)]
    bokeh: BokehArgs,
    /// Shrink the aperture away from the focal plane.
    #[arg(long)]
    adaptation: bool,
    /// Render the preset grid into the `--out` directory instead of one image.
    #[arg(long, conflicts_with_all = ["aperture", "focus", "focus_pixel", "adaptation"])]
    grid: bool,
    #[command(flatten)]
    presets: PresetArgs,
    /// Output PNG, or output directory with --grid.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// All-in-focus PNG.
    #[arg(long)]
    sharp: PathBuf,
    #[command(flatten)]
    depth: DepthInput,
    /// Defocused PNG to explain.
    #[arg(long)]
    observed: PathBuf,
    /// JSON optimizer settings; unset fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-iteration trace as JSON lines.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Fitted parameters as JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene directory with `images/*.png` and `depth/*.pfm`.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    presets: PresetArgs,
    #[command(flatten)]
    bokeh: BokehArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitFilter {
    Test,
    All,
}

#[derive(Args)]
struct DatasetFitArgs {
    /// Manifest of a synthesized dataset.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitFilter,
    /// Directory for re-rendered test images (default: next to `--out`).
    #[arg(long)]
    render_dir: Option<PathBuf>,
    /// Results JSON for `dataset eval`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset manifest; repeat for several scenes.
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    /// Results JSON, one per manifest and in the same order.
    #[arg(long, required = true)]
    results: Vec<PathBuf>,
    /// Render test entries that have no render, using their fitted parameters.
    #[arg(long)]
    render_missing: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    /// Dense depth prediction (.pfm, or 16-bit .png with --depth-range).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_parser = parse_depth_range)]
    depth_range: Option<DepthEncoding>,
    /// Sparse samples as CSV (`x,y,depth`) or JSON.
    #[arg(long)]
    sparse: PathBuf,
    /// Aligned depth map (.pfm).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SceneGenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Seed of the first frame; frame `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "LENSDOF_ADDR", default_value = "127.0.0.1:8080")]
    addr: String,
    /// Scene directory to load at startup; repeatable.
    #[arg(long)]
    scene: Vec<PathBuf>,
}

/// A bad flag value or configuration file; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or("expected `x,y`")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(x)?, parse(y)?))
}

fn parse_depth_range(s: &str) -> Result<DepthEncoding, String> {
    let (near, far) = s.split_once(',').ok_or("expected `near,far`")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let (near, far) = (parse(near)?, parse(far)?);
    if !(near > 0.0 && far > near) {
        return Err(format!("need 0 < near < far, got {near},{far}"));
    }
    Ok(DepthEncoding { near, far })
}

/// Reads a fit configuration, naming the offending field on failure.
fn read_fit_config(path: Option<&Path>) -> anyhow::Result<FitConfig> {
    let Some(path) = path else {
        return Ok(FitConfig::default());
    };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg: FitConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        usage(format!(
            "{}: field `{field}`: {}",
            path.display(),
            e.inner()
        ))
    })?;
    cfg.validate()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn load_frame(image: &Path, depth: &DepthInput) -> anyhow::Result<Frame> {
    Ok(Frame::load(
        image,
        &depth.depth,
        depth.depth_range.as_ref(),
    )?)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn to_json_line<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn cmd_render(args: RenderArgs) -> anyhow::Result<()> {
    let frame = load_frame(&args.image, &args.depth)?;
    let base = RenderSettings {
        shape: args.bokeh.shape,
        rotation: args.bokeh.rotation,
        alpha: args.bokeh.alpha,
        max_radius_px: args.bokeh.max_radius,
        gamma: args.bokeh.gamma,
        adaptation: args.adaptation,
        ..RenderSettings::default()
    };
    if args.grid {
        let presets = dataset::preset_grid(&args.presets.apertures, &args.presets.focuses)?;
        std::fs::create_dir_all(&args.out)
            .with_context(|| format!("creating {}", args.out.display()))?;
        for (k, lens) in presets.iter().enumerate() {
            let settings = RenderSettings {
                aperture: lens.aperture,
                focus: FocusSpec::Disparity(lens.focus),
                ..base.clone()
            };
            write_file(
                &args.out.join(variant_name(&frame.name, k)),
                &render_png(&frame, &settings)?,
            )?;
        }
        eprintln!("wrote {} presets to {}", presets.len(), args.out.display());
        return Ok(());
    }
    let focus = match (args.focus, args.focus_pixel) {
        (Some(f), None) => FocusSpec::Disparity(f),
        (None, Some((x, y))) => FocusSpec::Pixel { x, y },
        _ => return Err(usage("give exactly one of --focus or --focus-pixel")),
    };
    let settings = RenderSettings {
        aperture: args.aperture.expect("required by clap"),
        focus,
        ..base
    };
    write_file(&args.out, &render_png(&frame, &settings)?)
}

#[derive(Serialize)]
struct FitOutput {
    aperture: f64,
    focus: f64,
    loss: f64,
    iterations: usize,
    best_iteration: usize,
    converged: bool,
    converged_at: Option<usize>,
    adaptation_started: Option<usize>,
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let cfg = read_fit_config(args.config.as_deref())?;
    let frame = load_frame(&args.sharp, &args.depth)?;
    let observed = io::read_png(&args.observed)?;
    let (lens, trace) = match fit_lens(frame.color(), frame.depth(), &observed, &cfg) {
        Ok(result) => result,
        Err(lensdof_core::Error::Divergence { iteration, trace }) => {
            if let Some(path) = &args.trace_out {
                let mut buf = Vec::new();
                trace.write_jsonl(&mut buf)?;
                write_file(path, &buf)?;
            }
            bail!("optimization diverged at iteration {iteration}");
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &args.trace_out {
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf)?;
        write_file(path, &buf)?;
    }
    let loss = trace
        .entries
        .iter()
        .find(|e| e.iteration == trace.best_iteration)
        .map_or(f64::NAN, |e| e.loss);
    let out = to_json_line(&FitOutput {
        aperture: lens.aperture,
        focus: lens.focus,
        loss,
        iterations: trace.entries.len(),
        best_iteration: trace.best_iteration,
        converged: trace.converged,
        converged_at: trace.converged_at,
        adaptation_started: trace.adaptation_started,
    })?;
    match &args.out {
        Some(path) => write_file(path, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let presets = dataset::preset_grid(&args.presets.apertures, &args.presets.focuses)?;
    let gamma = GammaSpec::new(args.bokeh.gamma)?;
    let manifest = synthesize_dataset(
        &args.scene,
        &presets,
        &args.bokeh.profile(),
        &gamma,
        &args.out,
    )?;
    eprintln!(
        "wrote {} images from {} sources ({} presets) to {}",
        manifest.entries.len(),
        manifest.sources.len(),
        presets.len(),
        args.out.join(dataset::MANIFEST_FILE).display()
    );
    Ok(())
}

/// Fitted parameters per manifest entry; input to `dataset eval`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultsFile {
    results: Vec<ResultEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultEntry {
    /// The manifest entry's `image`.
    image: String,
    aperture: f64,
    focus: f64,
    /// Test render PNG, relative to the results file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    render: Option<String>,
}

fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn source_renderer(
    manifest: &DatasetManifest,
    base: &Path,
    source: &str,
) -> anyhow::Result<DefocusRenderer> {
    let src = manifest
        .source(source)
        .with_context(|| format!("manifest has no source `{source}`"))?;
    let color = io::read_png(&base.join(&src.sharp))?;
    let depth = io::read_pfm(&base.join(&src.depth))?;
    Ok(DefocusRenderer::new(
        &color,
        &depth,
        &manifest.profile,
        &manifest.gamma,
    )?)
}

fn cmd_dataset_fit(args: DatasetFitArgs) -> anyhow::Result<()> {
    let cfg = read_fit_config(args.config.as_deref())?;
    let manifest = DatasetManifest::read(&args.manifest)?;
    let base = manifest_base(&args.manifest);
    let out_base = manifest_base(&args.out);
    let render_dir = args
        .render_dir
        .clone()
        .unwrap_or_else(|| out_base.join("renders"));
    let cfg = FitConfig {
        profile: manifest.profile,
        gamma: manifest.gamma,
        ..cfg
    };
    let mut results = Vec::new();
    for entry in &manifest.entries {
        if matches!(args.split, SplitFilter::Test) && entry.split != Split::Test {
            continue;
        }
        let renderer = source_renderer(&manifest, &base, &entry.source)?;
        let observed = io::read_png(&base.join(&entry.image))?;
        let (lens, trace) = lensdof_core::fit::fit_with_renderer(&renderer, &observed, &cfg)
            .with_context(|| format!("fitting {}", entry.image))?;
        let render = if entry.split == Split::Test {
            let name = Path::new(&entry.image)
                .file_name()
                .context("entry without file name")?;
            let path = render_dir.join(name);
            write_file(&path, &io::encode_png(&renderer.render(&lens)?.image))?;
            let rel = path.strip_prefix(&out_base).unwrap_or(&path);
            Some(rel.to_string_lossy().replace('\\', "/"))
        } else {
            None
        };
        eprintln!(
            "{}: A {:.4} F {:.4} (gt {:.4} {:.4}, {} iterations)",
            entry.image,
            lens.aperture,
            lens.focus,
            entry.gt_aperture,
            entry.gt_focus,
            trace.entries.len()
        );
        results.push(ResultEntry {
            image: entry.image.clone(),
            aperture: lens.aperture,
            focus: lens.focus,
            render,
        });
    }
    write_file(
        &args.out,
        to_json_line(&ResultsFile { results })?.as_bytes(),
    )
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    if args.manifest.len() != args.results.len() {
        return Err(usage(format!(
            "{} manifests but {} results files",
            args.manifest.len(),
            args.results.len()
        )));
    }
    let mut loaded = Vec::new();
    for (manifest_path, results_path) in args.manifest.iter().zip(&args.results) {
        let manifest = DatasetManifest::read(manifest_path)?;
        let base = manifest_base(manifest_path);
        let text = std::fs::read_to_string(results_path)
            .with_context(|| format!("reading {}", results_path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let file: ResultsFile = serde_path_to_error::deserialize(de).map_err(|e| {
            usage(format!(
                "{}: field `{}`: {}",
                results_path.display(),
                e.path(),
                e.inner()
            ))
        })?;
        let results_base = manifest_base(results_path);
        let mut inputs = Vec::with_capacity(file.results.len());
        for r in file.results {
            let fitted = LensParams::new(r.aperture, r.focus)
                .with_context(|| format!("result for {}", r.image))?;
            let render = match &r.render {
                Some(rel) => Some(io::read_png(&results_base.join(rel))?),
                None if args.render_missing => {
                    let entry = manifest
                        .entries
                        .iter()
                        .find(|e| e.image == r.image && e.split == Split::Test);
                    match entry {
                        Some(e) => Some(
                            source_renderer(&manifest, &base, &e.source)?
                                .render(&fitted)?
                                .image,
                        ),
                        None => None,
                    }
                }
                None => None,
            };
            // round-trip through PNG so a re-rendered image scores like a stored one
            let render = render
                .map(|img| io::decode_png(&io::encode_png(&img)))
                .transpose()?;
            inputs.push(RefocusInput {
                image: r.image,
                fitted,
                render,
            });
        }
        loaded.push((manifest, base, inputs));
    }
    let scenes: Vec<SceneEval> = loaded
        .iter()
        .map(|(manifest, base, results)| SceneEval {
            manifest,
            base_dir: base,
            results,
        })
        .collect();
    let report = eval_refocus(&scenes)?;
    let json = to_json_line(&report)?;
    if let Some(path) = &args.json_out {
        write_file(path, json.as_bytes())?;
    }
    print!("{json}");
    eprint!("{}", report.to_table());
    Ok(())
}

fn cmd_align(args: AlignArgs) -> anyhow::Result<()> {
    let pred = io::read_depth(&args.pred, args.depth_range.as_ref())?;
    let sparse = io::read_sparse_depth(&args.sparse, pred.width(), pred.height())?;
    let params = fit_scale(&pred, &sparse)?;
    let before = lensdof_core::depth::silog_loss(&pred, &sparse, 0.0)?;
    let after = lensdof_core::depth::silog_loss(&pred, &sparse, params.log_scale)?;
    println!("s* = {:.6}", params.log_scale);
    println!("scale = {:.6}", params.scale());
    println!("silog = {after:.6} (unaligned {before:.6})");
    println!("samples = {}", sparse.len());
    if let Some(out) = &args.out {
        io::write_pfm(out, &params.apply(&pred)?)?;
    }
    Ok(())
}

fn cmd_scene_gen(args: SceneGenArgs) -> anyhow::Result<()> {
    if args.frames == 0 || args.width == 0 || args.height == 0 {
        return Err(usage("--frames, --width and --height must be positive"));
    }
    let frames: Vec<_> = (0..args.frames)
        .map(|i| {
            let (color, depth) = generate(&SceneSpec::new(
                args.width,
                args.height,
                args.seed + i as u64,
            ));
            (format!("frame_{i:03}"), color, depth)
        })
        .collect();
    dataset::write_scene(&args.out, &frames)?;
    eprintln!("wrote {} frames to {}", frames.len(), args.out.display());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<()> {
    let store = Arc::new(SceneStore::new());
    for dir in &args.scene {
        let scene = store.load(&LoadRequest {
            scene_dir: Some(dir.clone()),
            ..LoadRequest::default()
        })?;
        eprintln!(
            "loaded {} as {} ({} frames)",
            dir.display(),
            scene.id,
            scene.frames().len()
        );
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(store)).await?;
        Ok(())
    })
}

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(usage("--threads must be positive"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Render(args) => cmd_render(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Dataset(DatasetCommand::Synth(args)) => cmd_synth(args),
        Command::Dataset(DatasetCommand::Fit(args)) => cmd_dataset_fit(args),
        Command::Dataset(DatasetCommand::Eval(args)) => cmd_eval(args),
        Command::AlignDepth(args) => cmd_align(args),
        Command::Scene(SceneCommand::Gen(args)) => cmd_scene_gen(args),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
