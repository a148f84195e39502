//! Dense feature tensors and the vector primitives built on them.
//!
//! Values are stored as `f32`; every reduction accumulates in `f64` and is
//! rounded back once at the end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of a frame's token grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub h: usize,
    pub w: usize,
}

impl GridShape {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!("grid must be at least 1x1, got {h}x{w}")));
        }
        Ok(Self { h, w })
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.h, self.w)
    }
}

impl std::str::FromStr for GridShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("grid {s:?} is not of the form HxW")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("grid {s:?} is not of the form HxW")))
        };
        GridShape::new(parse(h)?, parse(w)?)
    }
}

/// Visual tokens of a video: `frames x grid.h x grid.w x dim`, row-major
/// (frame, row, column, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    frames: usize,
    grid: GridShape,
    dim: usize,
    data: Vec<f32>,
}

impl VideoFeatures {
    pub fn new(frames: usize, grid: GridShape, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 || grid.h == 0 || grid.w == 0 {
            return Err(Error::invalid(format!(
                "video shape must be non-empty, got {frames}x{grid}x{dim}"
            )));
        }
        let expected = element_count(&[frames, grid.h, grid.w, dim])?;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "video data has {} values, shape {frames}x{grid}x{dim} needs {expected}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            frames,
            grid,
            dim,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(frame, row, col, channel)` for every element.
    pub fn from_fn(
        frames: usize,
        grid: GridShape,
        dim: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * grid.area() * dim);
        for t in 0..frames {
            for h in 0..grid.h {
                for w in 0..grid.w {
                    for d in 0..dim {
                        data.push(f(t, h, w, d));
                    }
                }
            }
        }
        Self::new(frames, grid, dim, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.grid.area() * self.dim
    }

    pub fn frame(&self, index: usize) -> Result<&[f32]> {
        self.check_frame(index)?;
        let len = self.frame_len();
        Ok(&self.data[index * len..(index + 1) * len])
    }

    /// The embedding at `(row, col)` of frame `index`.
    pub fn token(&self, index: usize, row: usize, col: usize) -> Result<&[f32]> {
        if row >= self.grid.h || col >= self.grid.w {
            return Err(Error::invalid(format!(
                "token ({row}, {col}) outside {} grid",
                self.grid
            )));
        }
        let frame = self.frame(index)?;
        let start = (row * self.grid.w + col) * self.dim;
        Ok(&frame[start..start + self.dim])
    }

    pub(crate) fn check_frame(&self, index: usize) -> Result<()> {
        if index >= self.frames {
            return Err(Error::invalid(format!(
                "frame index {index} out of range for {} frames",
                self.frames
            )));
        }
        Ok(())
    }
}

/// Text prompt encoded into the visual token space.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    data: Vec<f32>,
}

impl PromptEmbedding {
    pub fn new(data: Vec<f32>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("prompt embedding must have at least one channel"));
        }
        check_finite(&data)?;
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The same embedding multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.data.iter().map(|x| x * factor).collect())
    }
}

/// Global-average-pooled representation of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameVector {
    data: Vec<f32>,
}

impl FrameVector {
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

pub(crate) fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::invalid(format!("shape {dims:?} overflows")))
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Unit-length direction of `v` in `f64`, or `None` for the zero vector.
///
/// The vector is first divided by its largest magnitude. Division is
/// correctly rounded, so whenever `v` is an exact positive multiple of
/// another vector both produce bitwise-identical directions.
pub(crate) fn unit_direction(v: &[f32]) -> Option<Vec<f64>> {
    let peak = peak_abs(v);
    if peak == 0.0 {
        return None;
    }
    let scaled: Vec<f64> = v.iter().map(|&x| f64::from(x) / peak).collect();
    let norm = scaled.iter().map(|x| x * x).sum::<f64>().sqrt();
    Some(scaled.into_iter().map(|x| x / norm).collect())
}

fn peak_abs(v: &[f32]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(f64::from(x).abs()))
}

/// Cosine between `u` and a direction already produced by [`unit_direction`].
pub(crate) fn cosine_with_direction(u: &[f32], direction: &[f64]) -> f32 {
    debug_assert_eq!(u.len(), direction.len());
    let peak = peak_abs(u);
    if peak == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0f64;
    let mut sq = 0.0f64;
    for (&x, &p) in u.iter().zip(direction) {
        let s = f64::from(x) / peak;
        dot += s * p;
        sq += s * s;
    }
    ((dot / sq.sqrt()).clamp(-1.0, 1.0)) as f32
}

/// Scales `v` to unit L2 norm. The zero vector maps to itself.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    check_finite(v).map_err(|_| Error::invalid("cannot normalize a non-finite vector"))?;
    Ok(match unit_direction(v) {
        Some(dir) => dir.into_iter().map(|x| x as f32).collect(),
        None => vec![0.0; v.len()],
    })
}

/// Cosine similarity clamped to `[-1, 1]`; zero when either side has zero norm.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "cosine of vectors with different dims {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::invalid("cosine of a non-finite vector"));
    }
    Ok(match unit_direction(v) {
        Some(dir) => cosine_with_direction(u, &dir),
        None => 0.0,
    })
}

/// Per-channel mean over every token of one frame.
pub fn global_avg_pool(features: &VideoFeatures, frame_index: usize) -> Result<FrameVector> {
    let frame = features.frame(frame_index)?;
    let dim = features.dim();
    let mut acc = vec![0.0f64; dim];
    for token in frame.chunks_exact(dim) {
        for (a, &x) in acc.iter_mut().zip(token) {
            *a += f64::from(x);
        }
    }
    let n = features.grid().area() as f64;
    Ok(FrameVector {
        data: acc.into_iter().map(|a| (a / n) as f32).collect(),
    })
}

/// Averages every `factor` horizontally adjacent tokens, shrinking the grid width.
pub fn pool_width(features: &VideoFeatures, factor: usize) -> Result<VideoFeatures> {
    let grid = features.grid();
    if factor == 0 || !grid.w.is_multiple_of(factor) {
        return Err(Error::invalid(format!(
            "grid width {} is not divisible by pooling factor {factor}",
            grid.w
        )));
    }
    if factor == 1 {
        return Ok(features.clone());
    }
    let dim = features.dim();
    let out_grid = GridShape::new(grid.h, grid.w / factor)?;
    let mut data = Vec::with_capacity(features.data().len() / factor);
    let mut acc = vec![0.0f64; dim];
    // a run of `factor` consecutive tokens within a row is one output token
    for group in features.data().chunks_exact(factor * dim) {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for token in group.chunks_exact(dim) {
            for (a, &x) in acc.iter_mut().zip(token) {
                *a += f64::from(x);
            }
        }
        data.extend(acc.iter().map(|a| (a / factor as f64) as f32));
    }
    VideoFeatures::new(features.frames(), out_grid, dim, data)
}

/// Repeats every token `factor` times along the width; the inverse of
/// [`pool_width`] for tensors built this way.
pub fn repeat_width(features: &VideoFeatures, factor: usize) -> Result<VideoFeatures> {
    if factor == 0 {
        return Err(Error::invalid("repeat factor must be at least 1"));
    }
    let grid = features.grid();
    let dim = features.dim();
    let out_grid = GridShape::new(grid.h, grid.w * factor)?;
    let mut data = Vec::with_capacity(features.data().len() * factor);
    for token in features.data().chunks_exact(dim) {
        for _ in 0..factor {
            data.extend_from_slice(token);
        }
    }
    VideoFeatures::new(features.frames(), out_grid, dim, data)
}
