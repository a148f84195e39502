//! Prompt-guided RoI cropping inside a frame.
//!
//! The `K = alpha * H * W` tokens most similar to the prompt vote for a
//! centroid; a box with sides `sqrt(alpha) * H` by `sqrt(alpha) * W` is
//! centred there, slid back inside the grid if needed, and cropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{token_score_map, TokenScoreMap};
use crate::tensor::{GridShape, PromptEmbedding, VideoFeatures};

/// Rectangle of tokens, in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoiBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl RoiBox {
    pub fn full(grid: GridShape) -> Self {
        Self {
            top: 0,
            left: 0,
            height: grid.h,
            width: grid.w,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self, grid: GridShape) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.top + self.height > grid.h || self.left + self.width > grid.w {
            return Err(Error::invalid(format!("box {self:?} does not fit a {grid} grid")));
        }
        Ok(())
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.top + self.height).contains(&row) && (self.left..self.left + self.width).contains(&col)
    }

    /// Intersection area over union area.
    pub fn iou(&self, other: &RoiBox) -> f64 {
        let overlap =
            |a0: usize, alen: usize, b0: usize, blen: usize| (a0 + alen).min(b0 + blen).saturating_sub(a0.max(b0));
        let inter = overlap(self.top, self.height, other.top, other.height)
            * overlap(self.left, self.width, other.left, other.width);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return 0.0;
        }
        inter as f64 / union as f64
    }
}

/// Fraction of the frame area the RoI keeps, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RoiConfig {
    alpha: f64,
}

impl RoiConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("RoI ratio must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl TryFrom<f64> for RoiConfig {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<RoiConfig> for f64 {
    fn from(c: RoiConfig) -> f64 {
        c.alpha
    }
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Tokens voting for the centroid: `max(1, round(alpha * H * W))`.
pub fn roi_token_count(config: RoiConfig, grid: GridShape) -> usize {
    let k = round_half_up(config.alpha * grid.area() as f64) as usize;
    k.clamp(1, grid.area())
}

/// Box size `(round(sqrt(alpha) * H), round(sqrt(alpha) * W))`, each at least 1.
pub fn roi_dims(config: RoiConfig, grid: GridShape) -> (usize, usize) {
    let side = config.alpha.sqrt();
    let h = round_half_up(side * grid.h as f64) as usize;
    let w = round_half_up(side * grid.w as f64) as usize;
    (h.clamp(1, grid.h), w.clamp(1, grid.w))
}

/// Positions of the `k` best scores, ties broken row-major, returned row-major.
pub fn top_k_positions(map: &TokenScoreMap, k: usize) -> Result<Vec<(usize, usize)>> {
    let grid = map.grid();
    if k == 0 || k > grid.area() {
        return Err(Error::invalid(format!(
            "top-k of {k} outside 1..={} positions",
            grid.area()
        )));
    }
    let scores = map.scores();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let by_rank = |&a: &usize, &b: &usize| scores[b].total_cmp(&scores[a]).then(a.cmp(&b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_unstable();
    Ok(order.into_iter().map(|i| (i / grid.w, i % grid.w)).collect())
}

/// Mean row and column of `positions`, unrounded.
pub fn roi_center(positions: &[(usize, usize)]) -> Result<(f64, f64)> {
    if positions.is_empty() {
        return Err(Error::invalid("centroid of zero positions"));
    }
    let n = positions.len() as f64;
    let (sh, sw) = positions
        .iter()
        .fold((0.0f64, 0.0f64), |(sh, sw), &(h, w)| (sh + h as f64, sw + w as f64));
    Ok((sh / n, sw / n))
}

/// Centres a `dims` box on `center` and slides it inside the grid.
pub fn clamp_box(center: (f64, f64), dims: (usize, usize), grid: GridShape) -> Result<RoiBox> {
    let (height, width) = dims;
    if height == 0 || width == 0 || height > grid.h || width > grid.w {
        return Err(Error::invalid(format!(
            "box of {height}x{width} does not fit a {grid} grid"
        )));
    }
    if !center.0.is_finite() || !center.1.is_finite() {
        return Err(Error::invalid("box center must be finite"));
    }
    let place = |c: f64, len: usize, limit: usize| {
        let start = round_half_up(c - (len as f64 - 1.0) / 2.0);
        start.clamp(0.0, (limit - len) as f64) as usize
    };
    Ok(RoiBox {
        top: place(center.0, height, grid.h),
        left: place(center.1, width, grid.w),
        height,
        width,
    })
}

/// A cropped `grid.h x grid.w x dim` block of tokens, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CroppedFrame {
    pub grid: GridShape,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl CroppedFrame {
    pub fn token_count(&self) -> usize {
        self.grid.area()
    }
}

pub fn crop_roi(features: &VideoFeatures, frame_index: usize, roi: &RoiBox) -> Result<CroppedFrame> {
    let grid = features.grid();
    roi.validate(grid)?;
    let frame = features.frame(frame_index)?;
    let dim = features.dim();
    let mut data = Vec::with_capacity(roi.area() * dim);
    for row in roi.top..roi.top + roi.height {
        let start = (row * grid.w + roi.left) * dim;
        data.extend_from_slice(&frame[start..start + roi.width * dim]);
    }
    Ok(CroppedFrame {
        grid: GridShape::new(roi.height, roi.width)?,
        dim,
        data,
    })
}

/// Top-K, centroid, box size and clamping applied to one score map.
pub fn roi_from_map(map: &TokenScoreMap, config: RoiConfig) -> Result<RoiBox> {
    let grid = map.grid();
    let positions = top_k_positions(map, roi_token_count(config, grid))?;
    let center = roi_center(&positions)?;
    clamp_box(center, roi_dims(config, grid), grid)
}

/// Scores one frame against the prompt and crops its RoI.
pub fn spatial_sample_frame(
    features: &VideoFeatures,
    frame_index: usize,
    prompt: &PromptEmbedding,
    config: RoiConfig,
) -> Result<(RoiBox, CroppedFrame)> {
    let map = token_score_map(features, frame_index, prompt)?;
    let roi = roi_from_map(&map, config)?;
    let crop = crop_roi(features, frame_index, &roi)?;
    Ok((roi, crop))
}
