//! Brute-force reference implementations. These deliberately avoid the
//! library's kernels: plain index loops, full sorts and `f64` arithmetic.

#![allow(dead_code)]

use promptcrop::spatial::RoiBox;
use promptcrop::{GridShape, PromptEmbedding, VideoFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_video(rng: &mut impl Rng, frames: usize, h: usize, w: usize, dim: usize) -> VideoFeatures {
    let grid = GridShape::new(h, w).unwrap();
    VideoFeatures::from_fn(frames, grid, dim, |_, _, _, _| rng.random_range(-2.0f32..2.0)).unwrap()
}

pub fn random_prompt(rng: &mut impl Rng, dim: usize) -> PromptEmbedding {
    PromptEmbedding::new((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn at(v: &VideoFeatures, t: usize, h: usize, w: usize, d: usize) -> f64 {
    let g = v.grid();
    f64::from(v.data()[((t * g.h + h) * g.w + w) * v.dim() + d])
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

pub fn prompt64(p: &PromptEmbedding) -> Vec<f64> {
    p.data().iter().map(|&x| f64::from(x)).collect()
}

pub fn pool(v: &VideoFeatures, t: usize) -> Vec<f64> {
    let g = v.grid();
    (0..v.dim())
        .map(|d| {
            let mut sum = 0.0;
            for h in 0..g.h {
                for w in 0..g.w {
                    sum += at(v, t, h, w, d);
                }
            }
            sum / (g.h * g.w) as f64
        })
        .collect()
}

pub fn frame_scores(v: &VideoFeatures, p: &PromptEmbedding) -> Vec<f64> {
    let p = prompt64(p);
    (0..v.frames()).map(|t| cosine(&pool(v, t), &p)).collect()
}

pub fn token_map(v: &VideoFeatures, t: usize, p: &PromptEmbedding) -> Vec<f64> {
    let p = prompt64(p);
    let g = v.grid();
    let mut out = Vec::new();
    for h in 0..g.h {
        for w in 0..g.w {
            let token: Vec<f64> = (0..v.dim()).map(|d| at(v, t, h, w, d)).collect();
            out.push(cosine(&token, &p));
        }
    }
    out
}

/// Full sort by (score desc, row, col), keep k, re-sort row-major.
pub fn top_k(scores: &[f32], w: usize, k: usize) -> Vec<(usize, usize)> {
    let mut all: Vec<(f32, usize, usize)> = scores.iter().enumerate().map(|(i, &s)| (s, i / w, i % w)).collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut kept: Vec<(usize, usize)> = all.into_iter().take(k).map(|(_, h, w)| (h, w)).collect();
    kept.sort();
    kept
}

pub fn center(positions: &[(usize, usize)]) -> (f64, f64) {
    let mut sh = 0.0;
    let mut sw = 0.0;
    for &(h, w) in positions {
        sh += h as f64;
        sw += w as f64;
    }
    (sh / positions.len() as f64, sw / positions.len() as f64)
}

pub fn pool_width(v: &VideoFeatures, factor: usize) -> Vec<f64> {
    let g = v.grid();
    let mut out = Vec::new();
    for t in 0..v.frames() {
        for h in 0..g.h {
            for wo in 0..g.w / factor {
                for d in 0..v.dim() {
                    let s: f64 = (0..factor).map(|k| at(v, t, h, wo * factor + k, d)).sum();
                    out.push(s / factor as f64);
                }
            }
        }
    }
    out
}

pub fn crop(v: &VideoFeatures, t: usize, b: &RoiBox) -> Vec<f32> {
    let mut out = Vec::new();
    for i in 0..b.height {
        for j in 0..b.width {
            for d in 0..v.dim() {
                out.push(at(v, t, b.top + i, b.left + j, d) as f32);
            }
        }
    }
    out
}

pub fn uniform(t_total: usize, k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for j in 0..k {
        let i = ((j as f64 + 0.5) * t_total as f64 / k as f64).floor() as usize;
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Sort-based top-k by (score desc, index asc), returned ascending.
pub fn prompt_top_k(scores: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<usize> = idx.into_iter().take(k).collect();
    kept.sort();
    kept
}

pub fn hybrid(scores: &[f32], k_total: usize, k_uniform: usize) -> Vec<usize> {
    let mut chosen = uniform(scores.len(), k_uniform);
    let target = k_total.min(scores.len());
    while chosen.len() < target {
        let mut best: Option<usize> = None;
        for i in 0..scores.len() {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen.sort();
    chosen
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// top-K, centroid, sqrt(alpha) box, clamp: composed from the oracles above.
pub fn roi_box(scores: &[f32], grid: GridShape, alpha: f64) -> RoiBox {
    let area = (grid.h * grid.w) as f64;
    let k = round_half_up(alpha * area).max(1) as usize;
    let (hc, wc) = center(&top_k(scores, grid.w, k));
    let bh = round_half_up(alpha.sqrt() * grid.h as f64).clamp(1, grid.h as i64);
    let bw = round_half_up(alpha.sqrt() * grid.w as f64).clamp(1, grid.w as i64);
    let top = round_half_up(hc - (bh as f64 - 1.0) / 2.0).clamp(0, grid.h as i64 - bh);
    let left = round_half_up(wc - (bw as f64 - 1.0) / 2.0).clamp(0, grid.w as i64 - bw);
    RoiBox {
        top: top as usize,
        left: left as usize,
        height: bh as usize,
        width: bw as usize,
    }
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, y)| (f64::from(x) - y).abs())
        .fold(0.0, f64::max)
}
