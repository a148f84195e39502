//! `promptcrop` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

use std::fmt::Display;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use promptcrop::cost::{compare_costs, ModelShape};
use promptcrop::format::{read_prompt_file, read_video_file, write_prompt_file, write_video_file};
use promptcrop::pipeline::{read_manifest, write_manifest, Manifest};
use promptcrop::similarity::{frame_scores, token_score_map};
use promptcrop::synth::{evaluate, generate_planted, read_truth, run_trials, write_truth, BenchConfig};
use promptcrop::temporal::StrategyKind;
use promptcrop::tensor::{pool_width, repeat_width};
use promptcrop::{run_pipeline, GridShape, PipelineConfig, Preset, RoiConfig, TemporalStrategy};

#[derive(Parser)]
#[command(
    name = "promptcrop",
    version,
    about = "Prompt-guided frame sampling and RoI cropping for video tokens"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic video with planted prompt-correlated content.
    Synth(SynthArgs),
    /// Print frame scores (and optionally one token score map).
    Score(ScoreArgs),
    /// Prune a video to its prompt-relevant tokens.
    Sample(SampleArgs),
    /// Estimate transformer prefill cost for token counts.
    Cost(CostArgs),
    /// Score a sampling manifest against synthetic ground truth.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output video (VFT).
    #[arg(long)]
    out: PathBuf,
    /// Output prompt embedding (VPE).
    #[arg(long)]
    prompt: PathBuf,
    /// Output ground truth (JSON).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    /// Working grid after pre-pooling; the written video is `pre-pool` times wider.
    #[arg(long, default_value = "24x12")]
    grid: GridShape,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Number of planted frames.
    #[arg(long, default_value_t = 3)]
    planted: usize,
    /// Planted box size on the working grid.
    #[arg(long = "box", default_value = "8x6")]
    box_dims: GridShape,
    #[arg(long, default_value_t = 8.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    pre_pool: usize,
    /// Print the ground truth as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    prompt: PathBuf,
    #[arg(long, default_value_t = 2)]
    pre_pool: usize,
    /// Also print the token score map of this frame.
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PipelineFlags {
    /// Starting configuration; the flags below override it.
    #[arg(long, default_value = "fv-513")]
    preset: String,
    #[arg(long)]
    strategy: Option<String>,
    /// Frames to keep.
    #[arg(long)]
    frames: Option<usize>,
    /// Evenly spaced frames within a hybrid selection.
    #[arg(long)]
    uniform_frames: Option<usize>,
    /// RoI area ratio in (0, 1].
    #[arg(long = "roi")]
    alpha: Option<f64>,
    #[arg(long)]
    pre_pool: Option<usize>,
    /// Use one box for all frames, from the mean score map.
    #[arg(long)]
    shared_box: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    prompt: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Expected input grid; the run fails if the video differs.
    #[arg(long)]
    grid: Option<GridShape>,
    /// Token payload output (VFT, 1 x 1 x L grid).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest output (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Print the manifest to standard output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Token count of the configuration being costed.
    #[arg(long)]
    tokens: u64,
    /// Other configurations as LABEL=TOKENS, comma separated.
    #[arg(long, value_delimiter = ',')]
    compare: Vec<String>,
    #[arg(long, default_value = "ours")]
    label: String,
    #[arg(long, default_value_t = ModelShape::LLAMA_7B.layers)]
    layers: u64,
    #[arg(long, default_value_t = ModelShape::LLAMA_7B.d_model)]
    d_model: u64,
    #[arg(long, default_value_t = ModelShape::LLAMA_7B.d_ff)]
    d_ff: u64,
    #[arg(long, default_value_t = ModelShape::LLAMA_7B.n_heads)]
    heads: u64,
    #[arg(long)]
    json: bool,
}

/// Either checks one manifest against `--truth`, or with `--trials` runs a
/// seeded planted-signal benchmark in-process.
#[derive(Args)]
struct VerifyArgs {
    #[arg(long, required_unless_present = "trials", requires = "truth")]
    manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    truth: Option<PathBuf>,
    /// Token payload to check against the manifest's token_count.
    #[arg(long, requires = "manifest")]
    tokens: Option<PathBuf>,
    /// Number of synthetic trials to run instead of reading a manifest.
    #[arg(long, conflicts_with = "manifest")]
    trials: Option<usize>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long, default_value_t = 16)]
    video_frames: usize,
    /// Working grid of the synthetic videos.
    #[arg(long, default_value = "24x12")]
    grid: GridShape,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    planted: usize,
    #[arg(long = "box", default_value = "8x6")]
    box_dims: GridShape,
    #[arg(long, default_value_t = 8.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail (exit 1) when frame recall is below this.
    #[arg(long, default_value_t = 0.0)]
    min_recall: f64,
    /// Fail (exit 1) when mean IoU is below this.
    #[arg(long, default_value_t = 0.0)]
    min_iou: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl From<promptcrop::Error> for CliError {
    fn from(e: promptcrop::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn invalid(msg: impl Display) -> CliError {
    CliError::Invalid(msg.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

/// Prefixes any failure with the file it concerns.
fn at_path<T>(path: &Path, result: promptcrop::Result<T>) -> CliResult<T> {
    result.map_err(|e| match CliError::from(e) {
        CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
    })
}

fn emit(text: &str) -> CliResult {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn emit_json(value: &impl Serialize) -> CliResult {
    emit(&serde_json::to_string_pretty(value).map_err(invalid)?)
}

fn synth(args: SynthArgs) -> CliResult {
    let bench = BenchConfig {
        t_total: args.frames,
        grid: args.grid,
        dim: args.dim,
        planted_count: args.planted,
        box_dims: (args.box_dims.h, args.box_dims.w),
        snr: args.snr,
        trials: 1,
        seed: args.seed,
        pipeline: PipelineConfig::default(),
    };
    let (spec, prompt) = bench.trial_setup(0)?;
    let video = repeat_width(&generate_planted(&spec, &prompt)?, args.pre_pool)?;
    at_path(&args.out, write_video_file(&args.out, &video))?;
    at_path(&args.prompt, write_prompt_file(&args.prompt, &prompt))?;
    let truth = spec.truth();
    at_path(&args.truth, write_truth(&args.truth, &truth))?;
    if args.json {
        emit(&truth.to_json())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreReport {
    grid: [usize; 2],
    frame_scores: Vec<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    token_scores: Option<FrameMap>,
}

#[derive(Serialize)]
struct FrameMap {
    frame: usize,
    scores: Vec<Vec<f32>>,
}

fn score(args: ScoreArgs) -> CliResult {
    let video = pool_width(&at_path(&args.video, read_video_file(&args.video))?, args.pre_pool)?;
    let prompt = at_path(&args.prompt, read_prompt_file(&args.prompt))?;
    let scores = frame_scores(&video, &prompt)?;
    let grid = video.grid();
    let token_scores = match args.frame {
        Some(f) => {
            let map = token_score_map(&video, f, &prompt)?;
            Some(FrameMap {
                frame: f,
                scores: map.scores().chunks(grid.w).map(<[f32]>::to_vec).collect(),
            })
        }
        None => None,
    };
    let report = ScoreReport {
        grid: [grid.h, grid.w],
        frame_scores: scores.as_slice().to_vec(),
        token_scores,
    };
    if args.json {
        return emit_json(&report);
    }
    let mut text = String::from("frame  score\n");
    for (i, s) in report.frame_scores.iter().enumerate() {
        text.push_str(&format!("{i:>5}  {s:+.6}\n"));
    }
    if let Some(map) = &report.token_scores {
        text.push_str(&format!("\ntoken scores, frame {} ({})\n", map.frame, grid));
        for row in &map.scores {
            let cells: Vec<String> = row.iter().map(|s| format!("{s:+.3}")).collect();
            text.push_str(&cells.join(" "));
            text.push('\n');
        }
    }
    emit(&text)
}

fn pipeline_config(args: &PipelineFlags) -> CliResult<PipelineConfig> {
    let mut config = args.preset.parse::<Preset>()?.config();
    let kind = match &args.strategy {
        Some(s) => s.parse::<StrategyKind>()?,
        None => config.strategy.kind(),
    };
    let k_total = args.frames.unwrap_or(config.strategy.k_total());
    if args.uniform_frames.is_some() && kind != StrategyKind::Hybrid {
        return Err(invalid("--uniform-frames only applies to --strategy hybrid"));
    }
    config.strategy = TemporalStrategy::new(kind, k_total, args.uniform_frames)?;
    if let Some(alpha) = args.alpha {
        config.roi = RoiConfig::new(alpha)?;
    }
    if let Some(p) = args.pre_pool {
        config.pre_pool_width_factor = p;
    }
    config.shared_box |= args.shared_box;
    config.validate()?;
    Ok(config)
}

fn sample(args: SampleArgs) -> CliResult {
    let config = pipeline_config(&args.pipeline)?;
    let video = at_path(&args.video, read_video_file(&args.video))?;
    if let Some(expected) = args.grid {
        if video.grid() != expected {
            return Err(invalid(format!(
                "video grid is {}, --grid says {expected}",
                video.grid()
            )));
        }
    }
    let prompt = at_path(&args.prompt, read_prompt_file(&args.prompt))?;
    let working = config.working_grid(video.grid())?;
    let (tokens, plan) = run_pipeline(&video, &prompt, &config)?;
    let manifest = Manifest::new(&config, working, &plan, &tokens);
    if let Some(path) = &args.out {
        at_path(path, write_video_file(path, &tokens.to_video()?))?;
    }
    if let Some(path) = &args.manifest {
        at_path(path, write_manifest(path, &manifest))?;
    }
    if args.json {
        emit(&manifest.to_json())?;
    } else if args.manifest.is_none() {
        emit(&format!(
            "{} tokens from frames {:?}",
            manifest.token_count, manifest.selected_frames
        ))?;
    }
    Ok(())
}

fn cost(args: CostArgs) -> CliResult {
    let shape = ModelShape::new(args.layers, args.d_model, args.d_ff, args.heads)?;
    let mut inputs = vec![(args.label.clone(), args.tokens)];
    for item in args.compare.iter().filter(|s| !s.is_empty()) {
        let (label, count) = item
            .split_once('=')
            .ok_or_else(|| invalid(format!("--compare entry {item:?} is not LABEL=TOKENS")))?;
        let count = count
            .trim()
            .parse::<u64>()
            .map_err(|_| invalid(format!("--compare entry {item:?} has a bad token count")))?;
        inputs.push((label.trim().to_string(), count));
    }
    let report = compare_costs(&inputs, &shape)?;
    if args.json {
        emit_json(&report)
    } else {
        emit(&report.to_text())
    }
}

#[derive(Serialize)]
struct VerifyReport {
    frame_recall: f64,
    mean_iou: f64,
    selected_frames: Vec<usize>,
    planted_frames: Vec<usize>,
    token_count: usize,
    passed: bool,
}

#[derive(Serialize)]
struct BenchSummary {
    trials: usize,
    mean_frame_recall: f64,
    mean_iou: f64,
    full_recall_fraction: f64,
    iou_at_least_half_fraction: f64,
    passed: bool,
}

fn verify(args: VerifyArgs) -> CliResult {
    match (&args.manifest, &args.truth, args.trials) {
        (Some(manifest), Some(truth), None) => verify_manifest(&args, manifest, truth),
        (None, None, Some(trials)) => verify_trials(&args, trials),
        _ => Err(invalid("verify needs either --manifest with --truth, or --trials")),
    }
}

fn verify_manifest(args: &VerifyArgs, manifest: &PathBuf, truth: &PathBuf) -> CliResult {
    let manifest = at_path(manifest, read_manifest(manifest))?;
    let truth = at_path(truth, read_truth(truth))?;
    let plan = manifest.plan()?;
    let mut dim = 1;
    if let Some(path) = &args.tokens {
        let payload = at_path(path, read_video_file(path))?;
        let count = payload.frames() * payload.grid().area();
        if count != manifest.token_count {
            return Err(invalid(format!(
                "token payload holds {count} tokens, manifest says {}",
                manifest.token_count
            )));
        }
        dim = payload.dim();
    }
    let planted_frames = truth.planted_frames.clone();
    // evaluation only needs the geometry; dim is carried for completeness
    let spec = truth.into_spec(plan.frame_scores.len(), manifest.grid()?, dim)?;
    let bench = evaluate(&plan, &spec)?;
    let passed = bench.frame_recall >= args.min_recall && bench.mean_iou >= args.min_iou;
    let report = VerifyReport {
        frame_recall: bench.frame_recall,
        mean_iou: bench.mean_iou,
        selected_frames: manifest.selected_frames.clone(),
        planted_frames,
        token_count: manifest.token_count,
        passed,
    };
    if args.json {
        emit_json(&report)?;
    } else {
        emit(&format!(
            "frame recall {:.3}, mean IoU {:.3}, {} tokens: {}",
            report.frame_recall,
            report.mean_iou,
            report.token_count,
            if passed { "ok" } else { "below threshold" }
        ))?;
    }
    threshold_result(passed, report.frame_recall, report.mean_iou, args)
}

fn verify_trials(args: &VerifyArgs, trials: usize) -> CliResult {
    if trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    let mut bench = BenchConfig {
        t_total: args.video_frames,
        grid: args.grid,
        dim: args.dim,
        planted_count: args.planted,
        box_dims: (args.box_dims.h, args.box_dims.w),
        snr: args.snr,
        trials,
        seed: args.seed,
        pipeline: pipeline_config(&args.pipeline)?,
    };
    if args.pipeline.alpha.is_none() {
        bench.pipeline.roi = bench.matched_roi()?;
    }
    let report = run_trials(&bench)?;
    let passed = report.frame_recall >= args.min_recall && report.mean_iou >= args.min_iou;
    let summary = BenchSummary {
        trials,
        mean_frame_recall: report.frame_recall,
        mean_iou: report.mean_iou,
        full_recall_fraction: report.fraction_full_recall(),
        iou_at_least_half_fraction: report.fraction_iou_at_least(0.5),
        passed,
    };
    if args.json {
        emit_json(&summary)?;
    } else {
        emit(&format!(
            "{} trials: mean recall {:.3} (full in {:.1}%), mean IoU {:.3} (>= 0.5 in {:.1}%)",
            trials,
            summary.mean_frame_recall,
            summary.full_recall_fraction * 100.0,
            summary.mean_iou,
            summary.iou_at_least_half_fraction * 100.0
        ))?;
    }
    threshold_result(passed, report.frame_recall, report.mean_iou, args)
}

fn threshold_result(passed: bool, recall: f64, iou: f64, args: &VerifyArgs) -> CliResult {
    if passed {
        return Ok(());
    }
    Err(invalid(format!(
        "verification below threshold (recall {recall:.3} vs {}, IoU {iou:.3} vs {})",
        args.min_recall, args.min_iou
    )))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Score(a) => score(a),
        Command::Sample(a) => sample(a),
        Command::Cost(a) => cost(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
