//! Frame selection: uniform spacing, prompt-guided top-k, or both.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::FrameScores;
use crate::tensor::VideoFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Uniform,
    Prompt,
    Hybrid,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::Prompt => "prompt",
            StrategyKind::Hybrid => "hybrid",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(StrategyKind::Uniform),
            "prompt" => Ok(StrategyKind::Prompt),
            "hybrid" => Ok(StrategyKind::Hybrid),
            other => Err(Error::invalid(format!(
                "unknown strategy {other:?} (expected uniform, prompt or hybrid)"
            ))),
        }
    }
}

/// How many frames to keep and how to pick them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalStrategy {
    Uniform {
        k: usize,
    },
    Prompt {
        k: usize,
    },
    /// `k_uniform` evenly spaced frames, topped up to `k_total` with the
    /// best-scoring frames not already chosen.
    Hybrid {
        k_total: usize,
        k_uniform: usize,
    },
}

impl TemporalStrategy {
    pub fn new(kind: StrategyKind, k_total: usize, k_uniform: Option<usize>) -> Result<Self> {
        let strategy = match kind {
            StrategyKind::Uniform => TemporalStrategy::Uniform { k: k_total },
            StrategyKind::Prompt => TemporalStrategy::Prompt { k: k_total },
            StrategyKind::Hybrid => TemporalStrategy::Hybrid {
                k_total,
                k_uniform: k_uniform.unwrap_or(k_total.div_ceil(2)),
            },
        };
        strategy.validate()?;
        Ok(strategy)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TemporalStrategy::Uniform { k } | TemporalStrategy::Prompt { k } if k == 0 => {
                Err(Error::invalid("frame count must be at least 1"))
            }
            TemporalStrategy::Hybrid { k_total, k_uniform } if k_uniform == 0 || k_uniform > k_total => {
                Err(Error::invalid(format!(
                    "hybrid needs 1 <= uniform frames ({k_uniform}) <= total frames ({k_total})"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            TemporalStrategy::Uniform { .. } => StrategyKind::Uniform,
            TemporalStrategy::Prompt { .. } => StrategyKind::Prompt,
            TemporalStrategy::Hybrid { .. } => StrategyKind::Hybrid,
        }
    }

    pub fn k_total(&self) -> usize {
        match *self {
            TemporalStrategy::Uniform { k } | TemporalStrategy::Prompt { k } => k,
            TemporalStrategy::Hybrid { k_total, .. } => k_total,
        }
    }

    pub fn select(&self, scores: &FrameScores) -> Result<FrameSelection> {
        match *self {
            TemporalStrategy::Uniform { k } => select_uniform(scores.len(), k),
            TemporalStrategy::Prompt { k } => select_prompt_guided(scores, k),
            TemporalStrategy::Hybrid { k_total, k_uniform } => select_hybrid(scores, k_total, k_uniform),
        }
    }
}

/// Chronologically ordered, duplicate-free frame indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameSelection(Vec<usize>);

impl FrameSelection {
    /// Validates that `indices` are strictly increasing and below `t_total`.
    pub fn new(indices: Vec<usize>, t_total: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "frame indices {indices:?} are not strictly increasing"
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= t_total {
                return Err(Error::invalid(format!(
                    "frame index {last} out of range for {t_total} frames"
                )));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Center-of-bin sampling: frame `floor((j + 0.5) * t_total / k)` for each bin `j`.
pub fn select_uniform(t_total: usize, k: usize) -> Result<FrameSelection> {
    if t_total == 0 || k == 0 {
        return Err(Error::invalid(format!(
            "uniform sampling needs at least one frame and k >= 1 (t_total={t_total}, k={k})"
        )));
    }
    let mut indices: Vec<usize> = (0..k).map(|j| (2 * j + 1) * t_total / (2 * k)).collect();
    indices.dedup();
    Ok(FrameSelection(indices))
}

/// Frame indices ordered best-first: higher score, then earlier frame.
fn ranked(scores: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// The `min(k, T)` highest-scoring frames, returned in chronological order.
pub fn select_prompt_guided(scores: &FrameScores, k: usize) -> Result<FrameSelection> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot select from zero frame scores"));
    }
    if k == 0 {
        return Err(Error::invalid("frame count must be at least 1"));
    }
    let mut picked = ranked(scores.as_slice());
    picked.truncate(k);
    picked.sort_unstable();
    Ok(FrameSelection(picked))
}

pub fn select_hybrid(scores: &FrameScores, k_total: usize, k_uniform: usize) -> Result<FrameSelection> {
    TemporalStrategy::Hybrid { k_total, k_uniform }.validate()?;
    if scores.is_empty() {
        return Err(Error::invalid("cannot select from zero frame scores"));
    }
    let t_total = scores.len();
    let mut picked = select_uniform(t_total, k_uniform)?.0;
    let budget = k_total.min(t_total) - picked.len();
    let fill: Vec<usize> = ranked(scores.as_slice())
        .into_iter()
        .filter(|i| picked.binary_search(i).is_err())
        .take(budget)
        .collect();
    picked.extend(fill);
    picked.sort_unstable();
    Ok(FrameSelection(picked))
}

/// Copies the selected frames, in order, into a new tensor.
pub fn gather_frames(features: &VideoFeatures, selection: &FrameSelection) -> Result<VideoFeatures> {
    if selection.is_empty() {
        return Err(Error::invalid("cannot gather zero frames"));
    }
    let mut data = Vec::with_capacity(selection.len() * features.frame_len());
    for &i in selection.indices() {
        data.extend_from_slice(features.frame(i)?);
    }
    VideoFeatures::new(selection.len(), features.grid(), features.dim(), data)
}
