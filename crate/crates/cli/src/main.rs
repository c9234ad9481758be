use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdsal::advection::{advect, flow_map, write_pathlines_csv, BoundaryPolicy};
use crowdsal::eval::{f_measure_lines, match_detections, summary_table, GroundTruth};
use crowdsal::flowfield::{downsample_to_grid, mean_flow, save_flo, synth_scene, SceneSpec};
use crowdsal::pipeline::{
    load_input, run_pipeline, sub_seed, window_starts, ConfigOverrides, PipelineConfig, SCORES_SIDECAR,
};
use crowdsal::ranking::{Polarity, RegionSet};
use crowdsal::raster::{read_scores, render_heatmap, write_graymap, ScoreSidecar};
use crowdsal::stability::ftle_field;
use crowdsal::{Error, GridSpec, Result};

#[derive(Parser)]
#[command(name = "crowdsal", version, about = "Crowd motion saliency from dense optical flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write saliency artifacts.
    Analyze(PipelineArgs),
    /// Render a scene document into a directory of .flo frames plus ground truth.
    Synth(SynthArgs),
    /// Score detected regions against ground truth.
    Eval(EvalArgs),
    /// Dump one intermediate stage.
    Inspect(InspectArgs),
}

#[derive(Args, Clone, Default)]
struct PipelineArgs {
    /// Config file (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flow directory, frame pattern (frame_%04d.flo) or scene document (.toml).
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    tau: Option<usize>,
    /// Particle grid as COLSxROWS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Number of random queries.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    high_pct: Option<f64>,
    #[arg(long)]
    low_pct: Option<f64>,
    #[arg(long)]
    epsilon_static: Option<f64>,
    #[arg(long)]
    min_region: Option<usize>,
    #[arg(long, value_enum)]
    boundary: Option<Boundary>,
    #[arg(long)]
    fps: Option<f64>,
    /// Analyze a single window (0-based).
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Boundary {
    Extrapolate,
    Clamp,
}

fn parse_grid(s: &str) -> std::result::Result<[usize; 2], String> {
    let (c, r) = s.split_once(['x', 'X']).ok_or("expected COLSxROWS")?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok([p(c)?, p(r)?])
}

impl PipelineArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            input: self.input.clone(),
            output: self.output.clone(),
            tau: self.tau,
            grid: self.grid,
            dt: self.dt,
            alpha: self.alpha,
            k: self.k,
            queries: self.queries,
            seed: self.seed,
            high_pct: self.high_pct,
            low_pct: self.low_pct,
            epsilon_static: self.epsilon_static,
            min_region: self.min_region,
            boundary: self.boundary.map(|b| match b {
                Boundary::Extrapolate => BoundaryPolicy::Extrapolate,
                Boundary::Clamp => BoundaryPolicy::Clamp,
            }),
            fps: self.fps,
            window: self.window,
        }
    }

    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = read_text(path)?;
            ConfigOverrides::from_toml(&text)?.apply(&mut cfg);
        }
        self.overrides().apply(&mut cfg);
        if cfg.input.as_os_str().is_empty() {
            return Err(Error::Parameter("no input given (--input or config file)".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene document.
    scene: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Seed for the noise stream when the scene does not fix one.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Window length used for the ground-truth files.
    #[arg(long, default_value_t = 50)]
    tau: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Detected regions (regions.toml from analyze).
    #[arg(long)]
    regions: PathBuf,
    /// Ground truth document.
    #[arg(long)]
    truth: PathBuf,
    /// IoU a match must exceed.
    #[arg(long, default_value_t = 0.5)]
    thresh: f64,
    /// Which detections to score.
    #[arg(long, value_enum, default_value_t = PolarityFilter::All)]
    polarity: PolarityFilter,
    /// Also write the full report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PolarityFilter {
    All,
    High,
    Low,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    /// Interval-averaged flow (.flo).
    Mean,
    /// Block-averaged particle-grid flow (.flo).
    Grid,
    /// Particle trajectories (CSV).
    Pathlines,
    /// FTLE field (16-bit P5 graymap plus bounds sidecar).
    Ftle,
    /// Heatmap re-rendered from a score dump (P6).
    Heatmap,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    /// Destination file.
    #[arg(long = "out")]
    out: PathBuf,
    /// Score dump for `--stage heatmap`; its sidecar is read from the same directory.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn analyze(args: &PipelineArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let outputs = run_pipeline(&cfg)?;
    for out in &outputs {
        let a = &out.analysis;
        for d in &a.diagnostics {
            log::info!("window at frame {}: {d}", a.start);
        }
        println!(
            "{}: frames {}..{}, {} high / {} low regions",
            out.dir.display(),
            a.start,
            a.start + cfg.tau,
            a.regions.count(Polarity::High),
            a.regions.count(Polarity::Low),
        );
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut scene = SceneSpec::from_toml(&read_text(&args.scene)?)?;
    if let Some(noise) = scene.noise.as_mut() {
        noise.seed.get_or_insert(sub_seed(args.seed, "noise"));
    }
    let seq = synth_scene(&scene)?;
    fs::create_dir_all(&args.output)?;
    for (i, f) in seq.frames().iter().enumerate() {
        save_flo(f, args.output.join(format!("frame_{i:04}.flo")))?;
    }
    let starts = window_starts(seq.len(), args.tau);
    for (w, &start) in starts.iter().enumerate() {
        let name = if starts.len() == 1 {
            "truth.toml".to_string()
        } else {
            format!("truth_window_{w:04}.toml")
        };
        fs::write(args.output.join(name), scene.ground_truth(start, args.tau).to_toml())?;
    }
    println!("{} frames written to {}", seq.len(), args.output.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let regions = RegionSet::from_toml(&read_text(&args.regions)?)?;
    let truth = GroundTruth::from_toml(&read_text(&args.truth)?)?;
    let boxes: Vec<_> = regions
        .regions
        .iter()
        .filter(|r| match args.polarity {
            PolarityFilter::All => true,
            PolarityFilter::High => r.polarity == Polarity::High,
            PolarityFilter::Low => r.polarity == Polarity::Low,
        })
        .map(|r| r.bbox)
        .collect();
    let report = match_detections(&boxes, &truth, args.thresh);
    let counts: Vec<_> = report.categories.iter().map(|c| (c.category, c.counts)).collect();
    print!("{}", summary_table(&counts));
    print!("{}", f_measure_lines(&counts));
    if report.unattributed_false > 0 {
        println!("unattributed false detections: {}", report.unattributed_false);
    }
    println!("F-measure: {:.4}", report.f_measure);
    if let Some(path) = &args.report {
        fs::write(path, report.to_toml())?;
    }
    Ok(())
}

fn inspect(args: &InspectArgs) -> Result<()> {
    if let Stage::Heatmap = args.stage {
        let scores_path = args
            .scores
            .as_ref()
            .ok_or_else(|| Error::Parameter("--stage heatmap needs --scores".into()))?;
        let bytes = fs::read(scores_path).map_err(|e| Error::Input {
            path: scores_path.clone(),
            detail: e.to_string(),
        })?;
        let scores = read_scores(&bytes)?;
        let sidecar_path = scores_path.with_file_name(SCORES_SIDECAR);
        let side = ScoreSidecar::from_toml(&read_text(&sidecar_path)?)?;
        if scores.len() != side.n || side.n != side.cols * side.rows {
            return Err(Error::Format {
                field: "scores",
                detail: format!("{} scores for a {}x{} grid", scores.len(), side.cols, side.rows),
            });
        }
        let layout = GridSpec::new(side.cols, side.rows).blocks(side.width, side.height)?;
        fs::write(&args.out, render_heatmap(&scores, &layout).to_ppm())?;
        return Ok(());
    }

    let cfg = args.pipeline.resolve()?;
    let (seq, _) = load_input(&cfg)?;
    let starts = window_starts(seq.len(), cfg.tau);
    let w = cfg.window.unwrap_or(0);
    let start = *starts.get(w).ok_or_else(|| {
        Error::Range(format!("window {w} not available: {} frames, tau = {}", seq.len(), cfg.tau))
    })?;
    let mean = mean_flow(&seq, start, cfg.tau)?;
    let grid = cfg.grid_spec();
    match args.stage {
        Stage::Mean => save_flo(&mean, &args.out)?,
        Stage::Grid => save_flo(&downsample_to_grid(&mean, grid)?, &args.out)?,
        Stage::Pathlines => {
            let seeds = grid.blocks(mean.width(), mean.height())?.centers();
            let lines = advect(&mean, &seeds, cfg.steps()?, cfg.dt, cfg.boundary)?;
            let file = fs::File::create(&args.out)?;
            write_pathlines_csv(&lines, std::io::BufWriter::new(file))?;
        }
        Stage::Ftle => {
            let disp = flow_map(&mean, grid, cfg.steps()?, cfg.dt, cfg.boundary)?;
            let phi = ftle_field(&disp)?;
            write_graymap(&args.out, &phi.phi, grid.cols, grid.rows)?;
        }
        Stage::Heatmap => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
