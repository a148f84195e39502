//! Dense-transformer FLOP accounting for prefill and decode.
//!
//! Per layer, a sequence of `L` tokens costs
//!
//! ```text
//! attention    = 8 * L * d_model^2  +  4 * L^2 * d_model
//! feed-forward = 4 * L * d_model * d_ff
//! ```
//!
//! (QKV and output projections, the two attention matmuls, the two FFN
//! matmuls; a multiply-accumulate counts as two operations). Only orderings
//! and ratios are meaningful; no attempt is made to predict seconds.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelShape {
    pub layers: u64,
    pub d_model: u64,
    pub d_ff: u64,
    pub n_heads: u64,
}

impl ModelShape {
    /// 7B-class decoder: 32 layers, d_model 4096, d_ff 11008, 32 heads.
    pub const LLAMA_7B: ModelShape = ModelShape {
        layers: 32,
        d_model: 4096,
        d_ff: 11008,
        n_heads: 32,
    };

    pub fn new(layers: u64, d_model: u64, d_ff: u64, n_heads: u64) -> Result<Self> {
        let shape = Self {
            layers,
            d_model,
            d_ff,
            n_heads,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.d_model == 0 || self.d_ff == 0 || self.n_heads == 0 {
            return Err(Error::invalid(format!("model shape fields must all be >= 1: {self:?}")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostEstimate {
    pub prefill_flops: u128,
    /// Cost of generating one token with the `L` prefilled tokens in context.
    pub per_token_decode_flops: u128,
    /// Attention FLOPs over total prefill FLOPs.
    pub attention_share: f64,
}

pub fn estimate_prefill(tokens: u64, shape: &ModelShape) -> CostEstimate {
    if tokens == 0 {
        return CostEstimate::default();
    }
    let l = u128::from(tokens);
    let d = u128::from(shape.d_model);
    let ff = u128::from(shape.d_ff);
    let layers = u128::from(shape.layers);

    let attention = 8 * l * d * d + 4 * l * l * d;
    let feed_forward = 4 * l * d * ff;
    let decode = 8 * d * d + 4 * l * d + 4 * d * ff;

    CostEstimate {
        prefill_flops: layers * (attention + feed_forward),
        per_token_decode_flops: layers * decode,
        attention_share: attention as f64 / (attention + feed_forward) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEntry {
    pub label: String,
    pub tokens: u64,
    pub estimate: CostEstimate,
    /// Prefill cost relative to the first input entry; `None` when that entry costs nothing.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub shape: ModelShape,
    pub baseline: String,
    /// Cheapest first; equal costs keep their input order.
    pub entries: Vec<CostEntry>,
}

pub fn compare_costs(inputs: &[(String, u64)], shape: &ModelShape) -> Result<CostReport> {
    shape.validate()?;
    let (baseline, base_tokens) = inputs
        .first()
        .ok_or_else(|| Error::invalid("cost comparison needs at least one entry"))?;
    let base = estimate_prefill(*base_tokens, shape).prefill_flops;
    let mut entries: Vec<CostEntry> = inputs
        .iter()
        .map(|(label, tokens)| {
            let estimate = estimate_prefill(*tokens, shape);
            CostEntry {
                label: label.clone(),
                tokens: *tokens,
                ratio: (base > 0).then(|| estimate.prefill_flops as f64 / base as f64),
                estimate,
            }
        })
        .collect();
    entries.sort_by_key(|e| e.estimate.prefill_flops);
    Ok(CostReport {
        shape: *shape,
        baseline: baseline.clone(),
        entries,
    })
}

impl CostReport {
    /// Aligned-column text rendering.
    pub fn to_text(&self) -> String {
        let width = self.entries.iter().map(|e| e.label.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>14}  {:>14}  {:>10}  {:>8}",
            "label", "tokens", "prefill_TFLOP", "decode_GFLOP", "attn_share", "ratio"
        );
        for e in &self.entries {
            let ratio = e.ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>14.3}  {:>14.3}  {:>10.4}  {:>8}",
                e.label,
                e.tokens,
                e.estimate.prefill_flops as f64 / 1e12,
                e.estimate.per_token_decode_flops as f64 / 1e9,
                e.estimate.attention_share,
                ratio
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: ModelShape = ModelShape::LLAMA_7B;

    #[test]
    fn zero_tokens_cost_nothing() {
        assert_eq!(estimate_prefill(0, &SHAPE), CostEstimate::default());
    }

    #[test]
    fn hand_computed_small_shape() {
        let shape = ModelShape::new(2, 4, 8, 2).unwrap();
        let e = estimate_prefill(3, &shape);
        // attention 8*3*16 + 4*9*4 = 528, ffn 4*3*4*8 = 384
        assert_eq!(e.prefill_flops, 2 * (528 + 384));
        assert_eq!(e.per_token_decode_flops, 2 * (8 * 16 + 4 * 3 * 4 + 4 * 4 * 8));
        assert!((e.attention_share - 528.0 / 912.0).abs() < 1e-12);
    }

    #[test]
    fn published_token_counts_order() {
        let a = estimate_prefill(2648, &SHAPE).prefill_flops;
        let b = estimate_prefill(3456, &SHAPE).prefill_flops;
        let c = estimate_prefill(3680, &SHAPE).prefill_flops;
        assert!(a < b && b < c);
    }

    #[test]
    fn doubling_is_superlinear() {
        for l in [1u64, 17, 513, 4096] {
            assert!(estimate_prefill(2 * l, &SHAPE).prefill_flops > 2 * estimate_prefill(l, &SHAPE).prefill_flops);
        }
    }

    #[test]
    fn compare_ranks_cheapest_first() {
        let inputs = vec![
            ("SF-LLaVA".to_string(), 3680),
            ("ours".to_string(), 2648),
            ("IG-VLM".to_string(), 3456),
        ];
        let report = compare_costs(&inputs, &SHAPE).unwrap();
        let labels: Vec<&str> = report.entries.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["ours", "IG-VLM", "SF-LLaVA"]);
        assert_eq!(report.baseline, "SF-LLaVA");
        assert_eq!(report.entries[2].ratio, Some(1.0));
        assert!(report.entries[0].ratio.unwrap() < 1.0);
        assert!(report.to_text().lines().count() == 4);
    }

    #[test]
    fn compare_edge_cases() {
        let single = compare_costs(&[("x".into(), 10)], &SHAPE).unwrap();
        assert_eq!(single.entries[0].ratio, Some(1.0));
        let equal = compare_costs(&[("a".into(), 10), ("b".into(), 10)], &SHAPE).unwrap();
        assert_eq!(equal.entries[0].label, "a");
        assert_eq!(equal.entries[0].estimate, equal.entries[1].estimate);
        assert!(compare_costs(&[], &SHAPE).is_err());
        let zero = compare_costs(&[("z".into(), 0), ("b".into(), 10)], &SHAPE).unwrap();
        assert!(zero.entries.iter().all(|e| e.ratio.is_none()));
    }

    #[test]
    fn shape_validation() {
        assert!(ModelShape::new(0, 8, 8, 1).is_err());
        assert!(ModelShape::new(1, 10, 8, 3).is_err());
        assert!(ModelShape::new(1, 12, 8, 3).is_ok());
    }
}
