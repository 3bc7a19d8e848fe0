use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dsm_core::codec::CompressionSpec;
use dsm_core::estimators::Estimator;
use dsm_core::frames::ChannelSelect;
use dsm_core::metrics::{Roi, SsimParams};
use dsm_core::pipeline::{self, IngestConfig, TreeManifest};
use dsm_core::scenario::{standard_grid, ActivityLayout, ScenarioConfig};
use dsm_core::synth::IlluminationProfile;

#[derive(Parser)]
#[command(name = "dsm", version, about = "Dynamic speckle synthesis, compression and activity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scenario and write the bmp ground truth plus compressed variants.
    Simulate(SimulateArgs),
    /// Activity maps, SSI maps and the mean-SSI table for every set of a tree.
    Analyze(AnalyzeArgs),
    /// Mean normalized temporal correlation curve per variant.
    Correlate(CorrelateArgs),
    /// Group recorded frames into sets and write them as a tree.
    Ingest(IngestArgs),
    /// ROI-averaged activity per set and variant.
    Timeseries(TimeseriesArgs),
}

#[derive(Args)]
struct EstimatorArgs {
    /// s1, s2, s2:<q> or s1norm; defaults to the tree's estimator.
    #[arg(long, short = 'e')]
    estimator: Option<Estimator>,
    /// Stabilizer q; implies the S2 estimator.
    #[arg(long, short = 'q')]
    q: Option<f64>,
    /// Time lag m in frames.
    #[arg(long, short = 'm')]
    lag: Option<usize>,
}

impl EstimatorArgs {
    fn resolve(&self) -> Result<Option<Estimator>> {
        match (self.estimator, self.q) {
            (Some(e @ (Estimator::S1 | Estimator::S1Norm)), Some(_)) => bail!("--q only applies to S2, not {e}"),
            (_, Some(q)) if !(q >= 0.0 && q.is_finite()) => bail!("--q must be >= 0, got {q}"),
            (_, Some(q)) => Ok(Some(Estimator::S2 { q })),
            (e, None) => Ok(e),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long, short = 's', conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: logos, logos-gaussian, constant or disks.
    #[arg(long, short = 'p', default_value = "logos")]
    preset: String,
    /// Output tree directory.
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Square frame size for presets, in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Frames per set.
    #[arg(long, short = 'n')]
    frames: Option<usize>,
    /// Compression grid, e.g. `bmp,jpg:70,jp2:6`; `standard` is the full grid.
    #[arg(long, short = 'c', value_delimiter = ',')]
    compression: Vec<String>,
    /// Normalized pupil cutoff in (0, 0.5].
    #[arg(long)]
    cutoff: Option<f64>,
    /// Gaussian beam radius in pixels; 0 switches to uniform illumination.
    #[arg(long)]
    omega: Option<f64>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Also run `analyze` on the written tree.
    #[arg(long)]
    analyze: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    tree: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// SSI window size (odd).
    #[arg(long, default_value_t = 11)]
    window: usize,
}

#[derive(Args)]
struct CorrelateArgs {
    tree: PathBuf,
    /// Largest lag; defaults to the tree's setting or 40.
    #[arg(long)]
    n_tau: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    /// Glob for the frame files, taken in lexical order.
    #[arg(long)]
    pattern: String,
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// red, green, blue or luminance.
    #[arg(long, default_value = "red")]
    channel: ChannelSelect,
    /// Frame interval in seconds.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Frames per set; all frames form one set when omitted.
    #[arg(long)]
    frames_per_set: Option<usize>,
    /// Label for the interval between sets, e.g. "2 min".
    #[arg(long)]
    set_spacing: Option<String>,
    #[arg(long, short = 'c', value_delimiter = ',', default_value = "bmp")]
    compression: Vec<String>,
    #[arg(long, short = 'e', default_value = "s1")]
    estimator: Estimator,
    #[arg(long, short = 'm', default_value_t = 10)]
    lag: usize,
}

#[derive(Args)]
struct TimeseriesArgs {
    tree: PathBuf,
    /// Region `x0,y0,width,height`; a centered 100x100 box when omitted.
    #[arg(long)]
    roi: Option<Roi>,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

fn parse_grid(items: &[String]) -> Result<Vec<CompressionSpec>> {
    let mut grid = Vec::new();
    for item in items {
        if item.eq_ignore_ascii_case("standard") {
            grid.extend(standard_grid());
        } else {
            grid.push(item.parse::<CompressionSpec>()?);
        }
    }
    Ok(grid)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut scenario = match &args.scenario {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::preset(&args.preset, args.size, args.frames.unwrap_or(256), args.seed.unwrap_or(1))?,
    };
    let syn = &mut scenario.synthesis;
    if let Some(seed) = args.seed {
        syn.seed = seed;
    }
    if let Some(n) = args.frames {
        syn.n_frames = n;
    }
    if args.nx.is_some() || args.ny.is_some() {
        if matches!(scenario.layout, ActivityLayout::Masks { .. }) {
            bail!("--nx/--ny cannot resize a mask layout; the masks fix the frame size");
        }
        syn.nx = args.nx.unwrap_or(syn.nx);
        syn.ny = args.ny.unwrap_or(syn.ny);
    }
    if let Some(c) = args.cutoff {
        syn.cutoff = c;
    }
    match args.omega {
        Some(0.0) => syn.illumination = IlluminationProfile::Uniform,
        Some(omega) => syn.illumination = IlluminationProfile::Gaussian { omega },
        None => {}
    }
    if !args.compression.is_empty() {
        scenario.analysis.compression = parse_grid(&args.compression)?;
    }
    if let Some(e) = args.estimator.resolve()? {
        scenario.analysis.estimator = e;
    }
    match args.estimator.lag {
        Some(m) => scenario.analysis.lag = m,
        None => scenario.analysis.lag = scenario.analysis.lag.min(scenario.synthesis.n_frames.saturating_sub(1)).max(1),
    }

    let summary = pipeline::simulate(&scenario, &args.out)?;
    log::info!("scenario {} ({})", scenario.name, &summary.scenario_hash[..12]);
    for (i, set) in summary.sizes.iter().enumerate() {
        for r in set {
            println!(
                "set {i} {:<10} mean {:>9.0} B  ratio {:>6.2}",
                r.spec.label(),
                r.mean_bytes(),
                r.mean_ratio()
            );
        }
    }
    println!("wrote {}", summary.root.display());
    if args.analyze {
        analyze_tree(&args.out, None, None, SsimParams::default())?;
    }
    Ok(())
}

fn analyze_tree(tree: &Path, estimator: Option<Estimator>, lag: Option<usize>, params: SsimParams) -> Result<()> {
    let sets = pipeline::analyze_tree(tree, estimator, lag, params)?;
    for set in &sets {
        println!("{}", set.set_dir.display());
        for v in &set.variants {
            match &v.ssi {
                Some(r) => println!("  {:<10} mean SSI {:.4}", v.spec.label(), r.mean_ssi),
                None => println!("  {:<10} ground truth", v.spec.label()),
            }
        }
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let params = SsimParams {
        window: args.window,
        ..SsimParams::default()
    };
    params.validate()?;
    analyze_tree(&args.tree, args.estimator.resolve()?, args.estimator.lag, params)
}

fn correlate(args: &CorrelateArgs) -> Result<()> {
    let manifest = TreeManifest::load(&args.tree)?;
    let curves = pipeline::correlate_tree(&args.tree, args.n_tau)?;
    for (dir, set) in manifest.set_dirs(&args.tree).iter().zip(&curves) {
        println!("{}", dir.display());
        for (spec, curve) in set {
            let last = curve.rho.len() - 1;
            println!("  {:<10} rho({last}) = {:.4}", spec.label(), curve.rho[last]);
        }
    }
    Ok(())
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let cfg = IngestConfig {
        pattern: args.pattern.clone(),
        channel: args.channel,
        dt: args.dt,
        frames_per_set: args.frames_per_set,
        set_spacing: args.set_spacing.clone(),
        compression: parse_grid(&args.compression)?,
        estimator: args.estimator,
        lag: args.lag,
    };
    let summary = pipeline::ingest(&cfg, &args.out).with_context(|| format!("ingesting '{}'", args.pattern))?;
    println!(
        "{} sets of {} frames written to {}",
        summary.sets,
        summary.frames_per_set,
        args.out.display()
    );
    if summary.skipped > 0 {
        println!("{} trailing frames ignored", summary.skipped);
    }
    Ok(())
}

fn timeseries(args: &TimeseriesArgs) -> Result<()> {
    let roi = match args.roi {
        Some(roi) => roi,
        None => {
            let manifest = TreeManifest::load(&args.tree)?;
            let first = manifest.set_dirs(&args.tree).into_iter().next().context("tree has no sets")?;
            let set = pipeline::load_set(&manifest, &first)?;
            let seq = &set[0].1;
            let (h, w) = (seq.height(), seq.width());
            Roi::centered((h, w), 100.min(w), 100.min(h))
        }
    };
    let series = pipeline::timeseries_tree(&args.tree, args.estimator.resolve()?, args.estimator.lag, roi)?;
    for s in &series {
        let values: Vec<String> = s.points.iter().map(|p| format!("{:.3}", p.1)).collect();
        println!("{:<10} {}", s.label, values.join(" "));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Correlate(a) => correlate(a),
        Command::Ingest(a) => ingest(a),
        Command::Timeseries(a) => timeseries(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    msg = format!("{msg}: {text}");
                }
            }
            eprintln!("dsm: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
