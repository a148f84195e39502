//! Temporal then spatial sampling in one pass, plus the JSON manifest that
//! records each pruning decision.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{frame_scores, token_score_map, FrameScores, TokenScoreMap};
use crate::spatial::{crop_roi, roi_dims, roi_from_map, RoiBox, RoiConfig};
use crate::temporal::{FrameSelection, StrategyKind, TemporalStrategy};
use crate::tensor::{pool_width, GridShape, PromptEmbedding, VideoFeatures};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub strategy: TemporalStrategy,
    pub roi: RoiConfig,
    /// Width pooling applied before anything else; 2 maps a 24x24 grid to 24x12.
    pub pre_pool_width_factor: usize,
    /// Use one box for every frame, taken from the mean score map.
    pub shared_box: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Preset::Fv513.config()
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if self.pre_pool_width_factor == 0 {
            return Err(Error::invalid("pre-pool factor must be at least 1"));
        }
        Ok(())
    }

    /// Grid the samplers see once the input has been width-pooled.
    pub fn working_grid(&self, input: GridShape) -> Result<GridShape> {
        if self.pre_pool_width_factor == 0 || !input.w.is_multiple_of(self.pre_pool_width_factor) {
            return Err(Error::invalid(format!(
                "grid width {} is not divisible by pre-pool factor {}",
                input.w, self.pre_pool_width_factor
            )));
        }
        GridShape::new(input.h, input.w / self.pre_pool_width_factor)
    }
}

/// Named configurations matching published token budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// 3 prompt-selected frames, RoI ratio 0.6: 513 tokens.
    Fv513,
    /// 6 prompt-selected frames, RoI ratio 0.6: 1026 tokens.
    Fv1026,
    /// 3 prompt-selected frames, no cropping: 864 tokens.
    Fv864Full,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fv513, Preset::Fv1026, Preset::Fv864Full];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fv513 => "fv-513",
            Preset::Fv1026 => "fv-1026",
            Preset::Fv864Full => "fv-864-full",
        }
    }

    pub fn config(&self) -> PipelineConfig {
        let (k, alpha) = match self {
            Preset::Fv513 => (3, 0.6),
            Preset::Fv1026 => (6, 0.6),
            Preset::Fv864Full => (3, 1.0),
        };
        PipelineConfig {
            strategy: TemporalStrategy::Prompt { k },
            roi: RoiConfig::new(alpha).expect("preset ratio is valid"),
            pre_pool_width_factor: 2,
            shared_box: false,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown preset {s:?} (expected fv-513, fv-1026 or fv-864-full)"
            ))
        })
    }
}

/// Everything decided during one pruning pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub frame_selection: FrameSelection,
    /// One box per selected frame, in the same order.
    pub boxes: Vec<RoiBox>,
    /// Scores of every candidate frame, before selection.
    pub frame_scores: FrameScores,
}

/// The pruned token sequence: selected frames in order, each cropped and
/// flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTokens {
    dim: usize,
    data: Vec<f32>,
}

impl SampledTokens {
    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The sequence as a `1 x 1 x count x dim` tensor, the on-disk payload layout.
    pub fn to_video(&self) -> Result<VideoFeatures> {
        VideoFeatures::new(1, GridShape::new(1, self.count())?, self.dim, self.data.clone())
    }
}

pub fn run_pipeline(
    features: &VideoFeatures,
    prompt: &PromptEmbedding,
    config: &PipelineConfig,
) -> Result<(SampledTokens, SamplePlan)> {
    config.validate()?;
    let pooled = pool_width(features, config.pre_pool_width_factor)?;
    let scores = frame_scores(&pooled, prompt)?;
    let selection = config.strategy.select(&scores)?;

    let maps: Vec<TokenScoreMap> = selection
        .indices()
        .par_iter()
        .map(|&i| token_score_map(&pooled, i, prompt))
        .collect::<Result<_>>()?;
    let boxes: Vec<RoiBox> = if config.shared_box {
        let roi = roi_from_map(&TokenScoreMap::mean(&maps)?, config.roi)?;
        vec![roi; maps.len()]
    } else {
        maps.par_iter()
            .map(|m| roi_from_map(m, config.roi))
            .collect::<Result<_>>()?
    };

    let mut data = Vec::new();
    for (&i, roi) in selection.indices().iter().zip(&boxes) {
        data.extend(crop_roi(&pooled, i, roi)?.data);
    }
    let tokens = SampledTokens {
        dim: pooled.dim(),
        data,
    };
    let plan = SamplePlan {
        frame_selection: selection,
        boxes,
        frame_scores: scores,
    };
    Ok((tokens, plan))
}

/// Token budget of `config` on `t_available` frames whose working (post-pool)
/// grid is `grid`.
pub fn expected_token_count(config: &PipelineConfig, t_available: usize, grid: GridShape) -> usize {
    let (h, w) = roi_dims(config.roi, grid);
    config.strategy.k_total().min(t_available) * h * w
}

/// On-disk record of a pruning decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub strategy: StrategyKind,
    pub alpha: f64,
    /// Working grid `[H, W]` the boxes refer to.
    pub grid: [usize; 2],
    pub pre_pool: usize,
    pub frame_scores: Vec<f32>,
    pub selected_frames: Vec<usize>,
    pub boxes: Vec<RoiBox>,
    pub token_count: usize,
}

impl Manifest {
    pub fn new(config: &PipelineConfig, grid: GridShape, plan: &SamplePlan, tokens: &SampledTokens) -> Self {
        Self {
            version: MANIFEST_VERSION,
            strategy: config.strategy.kind(),
            alpha: config.roi.alpha(),
            grid: [grid.h, grid.w],
            pre_pool: config.pre_pool_width_factor,
            frame_scores: plan.frame_scores.as_slice().to_vec(),
            selected_frames: plan.frame_selection.indices().to_vec(),
            boxes: plan.boxes.clone(),
            token_count: tokens.count(),
        }
    }

    pub fn grid(&self) -> Result<GridShape> {
        GridShape::new(self.grid[0], self.grid[1])
    }

    /// Rebuilds the plan, checking it against the recorded grid and counts.
    pub fn plan(&self) -> Result<SamplePlan> {
        let grid = self.grid()?;
        let frame_scores = FrameScores::new(self.frame_scores.clone())?;
        let frame_selection = FrameSelection::new(self.selected_frames.clone(), frame_scores.len())?;
        if self.boxes.len() != frame_selection.len() {
            return Err(Error::invalid(format!(
                "manifest lists {} boxes for {} frames",
                self.boxes.len(),
                frame_selection.len()
            )));
        }
        for roi in &self.boxes {
            roi.validate(grid)?;
        }
        let implied: usize = self.boxes.iter().map(RoiBox::area).sum();
        if implied != self.token_count {
            return Err(Error::invalid(format!(
                "manifest token_count {} disagrees with box areas ({implied})",
                self.token_count
            )));
        }
        Ok(SamplePlan {
            frame_selection,
            boxes: self.boxes.clone(),
            frame_scores,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion(manifest.version));
        }
        manifest.plan()?;
        Ok(manifest)
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let mut text = manifest.to_json();
    text.push('\n');
    Ok(fs::write(path, text)?)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    Manifest::from_json(&fs::read_to_string(path)?)
}
