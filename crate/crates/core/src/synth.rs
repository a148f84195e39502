//! Synthetic videos with planted prompt-correlated content, and scoring of
//! sampler output against that ground truth.
//!
//! Every token is a draw of `D` standard normals from a ChaCha8 stream seeded
//! by the spec's seed. Tokens inside the planted frames and box get
//! `snr * prompt_direction` added; all other tokens have their component along
//! the prompt removed, so their cosine with the prompt is zero up to rounding.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, PipelineConfig, SamplePlan};
use crate::spatial::{RoiBox, RoiConfig};
use crate::tensor::{repeat_width, unit_direction, GridShape, PromptEmbedding, VideoFeatures};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub t_total: usize,
    pub grid: GridShape,
    pub dim: usize,
    /// Sorted, distinct frame indices carrying the signal.
    pub planted_frames: Vec<usize>,
    pub planted_box: RoiBox,
    pub snr: f64,
    pub seed: u64,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_total == 0 || self.dim == 0 {
            return Err(Error::invalid("plant spec needs at least one frame and one channel"));
        }
        if self.planted_frames.windows(2).any(|w| w[0] >= w[1])
            || self.planted_frames.last().is_some_and(|&f| f >= self.t_total)
        {
            return Err(Error::invalid(format!(
                "planted frames {:?} must be increasing and below {}",
                self.planted_frames, self.t_total
            )));
        }
        self.planted_box.validate(self.grid)?;
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be finite and >= 0, got {}", self.snr)));
        }
        Ok(())
    }

    pub fn is_planted(&self, frame: usize, row: usize, col: usize) -> bool {
        self.planted_box.contains(row, col) && self.planted_frames.binary_search(&frame).is_ok()
    }

    pub fn truth(&self) -> Truth {
        Truth {
            planted_frames: self.planted_frames.clone(),
            planted_box: self.planted_box,
            snr: self.snr,
            seed: self.seed,
        }
    }
}

/// Ground truth as written to `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub planted_frames: Vec<usize>,
    pub planted_box: RoiBox,
    pub snr: f64,
    pub seed: u64,
}

impl Truth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Combines the truth with the video geometry it was generated for.
    pub fn into_spec(self, t_total: usize, grid: GridShape, dim: usize) -> Result<PlantSpec> {
        let spec = PlantSpec {
            t_total,
            grid,
            dim,
            planted_frames: self.planted_frames,
            planted_box: self.planted_box,
            snr: self.snr,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn write_truth(path: impl AsRef<Path>, truth: &Truth) -> Result<()> {
    let mut text = truth.to_json();
    text.push('\n');
    Ok(fs::write(path, text)?)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Truth> {
    Truth::from_json(&fs::read_to_string(path)?)
}

pub fn generate_planted(spec: &PlantSpec, prompt: &PromptEmbedding) -> Result<VideoFeatures> {
    spec.validate()?;
    if prompt.dim() != spec.dim {
        return Err(Error::invalid(format!(
            "prompt dim {} does not match plant spec dim {}",
            prompt.dim(),
            spec.dim
        )));
    }
    let direction = unit_direction(prompt.data()).unwrap_or_else(|| vec![0.0; spec.dim]);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise = vec![0.0f64; spec.dim];
    let mut data = Vec::with_capacity(spec.t_total * spec.grid.area() * spec.dim);
    for t in 0..spec.t_total {
        for h in 0..spec.grid.h {
            for w in 0..spec.grid.w {
                noise.iter_mut().for_each(|z| *z = rng.sample(StandardNormal));
                if spec.is_planted(t, h, w) {
                    data.extend(noise.iter().zip(&direction).map(|(z, p)| (z + spec.snr * p) as f32));
                } else {
                    let along: f64 = noise.iter().zip(&direction).map(|(z, p)| z * p).sum();
                    data.extend(noise.iter().zip(&direction).map(|(z, p)| (z - along * p) as f32));
                }
            }
        }
    }
    VideoFeatures::new(spec.t_total, spec.grid, spec.dim, data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub selected_frames: Vec<usize>,
    pub frame_recall: f64,
    pub mean_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    /// Mean over trials.
    pub frame_recall: f64,
    /// Mean over trials.
    pub mean_iou: f64,
    pub trials: Vec<TrialRecord>,
}

impl BenchReport {
    fn from_trials(trials: Vec<TrialRecord>) -> Self {
        let n = trials.len().max(1) as f64;
        Self {
            frame_recall: trials.iter().map(|t| t.frame_recall).sum::<f64>() / n,
            mean_iou: trials.iter().map(|t| t.mean_iou).sum::<f64>() / n,
            trials,
        }
    }

    pub fn fraction_full_recall(&self) -> f64 {
        self.fraction(|t| t.frame_recall == 1.0)
    }

    pub fn fraction_iou_at_least(&self, threshold: f64) -> f64 {
        self.fraction(|t| t.mean_iou >= threshold)
    }

    fn fraction(&self, pred: impl Fn(&TrialRecord) -> bool) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.trials.iter().filter(|t| pred(t)).count() as f64 / self.trials.len() as f64
    }
}

/// Frame recall and box IoU of one plan against the spec it was sampled from.
///
/// IoU is averaged over the planted frames that were selected; zero if none were.
pub fn evaluate(plan: &SamplePlan, spec: &PlantSpec) -> Result<BenchReport> {
    spec.validate()?;
    if spec.planted_frames.is_empty() {
        return Err(Error::invalid("cannot evaluate recall with no planted frames"));
    }
    if plan.frame_scores.len() != spec.t_total {
        return Err(Error::invalid(format!(
            "plan scored {} frames, spec has {}",
            plan.frame_scores.len(),
            spec.t_total
        )));
    }
    let selected = plan.frame_selection.indices();
    if plan.boxes.len() != selected.len() {
        return Err(Error::invalid("plan has a different number of boxes and frames"));
    }
    if let Some(&last) = selected.last() {
        if last >= spec.t_total {
            return Err(Error::invalid(format!("selected frame {last} out of range")));
        }
    }
    for roi in &plan.boxes {
        roi.validate(spec.grid)?;
    }

    let ious: Vec<f64> = selected
        .iter()
        .zip(&plan.boxes)
        .filter(|(f, _)| spec.planted_frames.binary_search(f).is_ok())
        .map(|(_, roi)| roi.iou(&spec.planted_box))
        .collect();
    let frame_recall = ious.len() as f64 / spec.planted_frames.len() as f64;
    let mean_iou = if ious.is_empty() {
        0.0
    } else {
        ious.iter().sum::<f64>() / ious.len() as f64
    };
    Ok(BenchReport::from_trials(vec![TrialRecord {
        seed: spec.seed,
        selected_frames: selected.to_vec(),
        frame_recall,
        mean_iou,
    }]))
}

/// A batch of seeded planted-signal trials.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub t_total: usize,
    /// Working grid; the generated video is widened by the pipeline's pre-pool factor.
    pub grid: GridShape,
    pub dim: usize,
    pub planted_count: usize,
    pub box_dims: (usize, usize),
    pub snr: f64,
    pub trials: usize,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

impl BenchConfig {
    /// RoI ratio whose crop area equals the planted box area.
    pub fn matched_roi(&self) -> Result<RoiConfig> {
        RoiConfig::new((self.box_dims.0 * self.box_dims.1) as f64 / self.grid.area() as f64)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    /// Random planted frames, box position and prompt for one trial.
    pub fn trial_setup(&self, trial: usize) -> Result<(PlantSpec, PromptEmbedding)> {
        let (bh, bw) = self.box_dims;
        if self.planted_count > self.t_total || bh == 0 || bw == 0 || bh > self.grid.h || bw > self.grid.w {
            return Err(Error::invalid("planted frames or box do not fit the video"));
        }
        let seed = self.trial_seed(trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut planted_frames = index::sample(&mut rng, self.t_total, self.planted_count).into_vec();
        planted_frames.sort_unstable();
        let planted_box = RoiBox {
            top: rng.random_range(0..=self.grid.h - bh),
            left: rng.random_range(0..=self.grid.w - bw),
            height: bh,
            width: bw,
        };
        let prompt = random_prompt(self.dim, &mut rng)?;
        let spec = PlantSpec {
            t_total: self.t_total,
            grid: self.grid,
            dim: self.dim,
            planted_frames,
            planted_box,
            snr: self.snr,
            seed,
        };
        spec.validate()?;
        Ok((spec, prompt))
    }

    pub fn run_trial(&self, trial: usize) -> Result<TrialRecord> {
        let (spec, prompt) = self.trial_setup(trial)?;
        let video = generate_planted(&spec, &prompt)?;
        let video = repeat_width(&video, self.pipeline.pre_pool_width_factor)?;
        let (_, plan) = run_pipeline(&video, &prompt, &self.pipeline)?;
        let report = evaluate(&plan, &spec)?;
        Ok(report.trials.into_iter().next().expect("evaluate yields one trial"))
    }
}

/// Standard-normal prompt vector.
pub fn random_prompt(dim: usize, rng: &mut impl Rng) -> Result<PromptEmbedding> {
    PromptEmbedding::new((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect())
}

/// Runs every trial (in parallel; results are per-seed and order-stable).
pub fn run_trials(config: &BenchConfig) -> Result<BenchReport> {
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| config.run_trial(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport::from_trials(trials))
}
