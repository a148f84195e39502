//! Prompt relatedness at frame and token granularity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    cosine_with_direction, global_avg_pool, unit_direction, GridShape, PromptEmbedding, VideoFeatures,
};

/// One cosine score per frame, indexed by frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameScores(Vec<f32>);

impl FrameScores {
    pub fn new(scores: Vec<f32>) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("frame score {bad} outside [-1, 1]")));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-position cosine scores of one frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScoreMap {
    grid: GridShape,
    scores: Vec<f32>,
}

impl TokenScoreMap {
    pub fn new(grid: GridShape, scores: Vec<f32>) -> Result<Self> {
        if scores.len() != grid.area() {
            return Err(Error::invalid(format!(
                "score map has {} entries, grid {grid} needs {}",
                scores.len(),
                grid.area()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("score map contains non-finite values"));
        }
        Ok(Self { grid, scores })
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.scores[row * self.grid.w + col]
    }

    /// Elementwise mean of several maps over the same grid.
    pub fn mean(maps: &[TokenScoreMap]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::invalid("mean of zero score maps"))?;
        if maps.iter().any(|m| m.grid != first.grid) {
            return Err(Error::invalid("score maps have different grids"));
        }
        let n = maps.len() as f64;
        let scores = (0..first.scores.len())
            .map(|i| (maps.iter().map(|m| f64::from(m.scores[i])).sum::<f64>() / n) as f32)
            .collect();
        Self::new(first.grid, scores)
    }
}

fn check_dims(features: &VideoFeatures, prompt: &PromptEmbedding) -> Result<()> {
    if features.dim() != prompt.dim() {
        return Err(Error::invalid(format!(
            "video dim {} does not match prompt dim {}",
            features.dim(),
            prompt.dim()
        )));
    }
    Ok(())
}

/// Cosine between each frame's pooled feature and the prompt.
pub fn frame_scores(features: &VideoFeatures, prompt: &PromptEmbedding) -> Result<FrameScores> {
    check_dims(features, prompt)?;
    let scores = match unit_direction(prompt.data()) {
        None => vec![0.0; features.frames()],
        Some(dir) => (0..features.frames())
            .map(|i| global_avg_pool(features, i).map(|v| cosine_with_direction(v.data(), &dir)))
            .collect::<Result<_>>()?,
    };
    Ok(FrameScores(scores))
}

/// Cosine between every token of one frame and the prompt.
pub fn token_score_map(
    features: &VideoFeatures,
    frame_index: usize,
    prompt: &PromptEmbedding,
) -> Result<TokenScoreMap> {
    check_dims(features, prompt)?;
    let frame = features.frame(frame_index)?;
    let scores = match unit_direction(prompt.data()) {
        None => vec![0.0; features.grid().area()],
        Some(dir) => frame
            .chunks_exact(features.dim())
            .map(|token| cosine_with_direction(token, &dir))
            .collect(),
    };
    Ok(TokenScoreMap {
        grid: features.grid(),
        scores,
    })
}
