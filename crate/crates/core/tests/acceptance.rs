//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! cargo test -p promptcrop --test acceptance

mod common;

use std::time::{Duration, Instant};

use promptcrop::cost::{estimate_prefill, ModelShape};
use promptcrop::format::{decode_prompt, decode_video, encode_prompt, encode_video};
use promptcrop::pipeline::{expected_token_count, Manifest};
use promptcrop::similarity::{frame_scores, TokenScoreMap};
use promptcrop::spatial::{crop_roi, roi_center, top_k_positions, RoiBox};
use promptcrop::synth::{run_trials, BenchConfig, Truth};
use promptcrop::temporal::gather_frames;
use promptcrop::tensor::{global_avg_pool, pool_width};
use promptcrop::{run_pipeline, GridShape, PipelineConfig, Preset, PromptEmbedding, RoiConfig, TemporalStrategy};
use rand::Rng;

const FLOAT_TOL: f64 = 1e-5;
const ORACLE_INSTANCES: usize = 1000;
const BENCH_TRIALS: usize = 1000;
const BENCH_SNR: f64 = 8.0;
const BENCH_FRAMES: usize = 16;
const BENCH_PLANTED: usize = 3;
const BENCH_DIM: usize = 64;
/// Planted block size on the 24x12 working grid (rows 4..=11, cols 2..=7 in the
/// reference example); its position is random per trial.
const BENCH_BOX: (usize, usize) = (8, 6);

/// Name, runtime limit, check.
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!("{} [{:.2?}]", out.detail, took);
    if let Some(limit) = limit {
        if took >= limit {
            out.passed = false;
            out.detail = format!("{} exceeded {:?}", out.detail, limit);
        }
    }
    out
}

fn grid(h: usize, w: usize) -> GridShape {
    GridShape::new(h, w).unwrap()
}

fn roi_ratio_table() -> Outcome {
    let mut rng = common::rng(1);
    let video = common::random_video(&mut rng, BENCH_FRAMES, 24, 24, BENCH_DIM);
    let prompt = common::random_prompt(&mut rng, BENCH_DIM);
    let mut mismatches = Vec::new();
    for (alpha, want) in [(0.4, 360), (0.5, 408), (0.6, 513), (0.7, 600), (1.0, 864)] {
        let config = PipelineConfig {
            strategy: TemporalStrategy::Prompt { k: 3 },
            roi: RoiConfig::new(alpha).unwrap(),
            pre_pool_width_factor: 2,
            shared_box: false,
        };
        let (tokens, _) = run_pipeline(&video, &prompt, &config).unwrap();
        let predicted = expected_token_count(&config, BENCH_FRAMES, grid(24, 12));
        if tokens.count() != want || predicted != want {
            mismatches.push(format!(
                "alpha {alpha}: got {} (predicted {predicted}), want {want}",
                tokens.count()
            ));
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "360/408/513/600/864 exact".into()
        } else {
            mismatches.join("; ")
        },
    )
}

fn preset_counts() -> Outcome {
    let mut rng = common::rng(2);
    let video = common::random_video(&mut rng, 16, 24, 24, BENCH_DIM);
    let prompt = common::random_prompt(&mut rng, BENCH_DIM);
    let got: Vec<usize> = [Preset::Fv513, Preset::Fv1026]
        .iter()
        .map(|p| run_pipeline(&video, &prompt, &p.config()).unwrap().0.count())
        .collect();
    check(
        got == [513, 1026],
        format!("fv-513 -> {}, fv-1026 -> {}", got[0], got[1]),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = common::rng(3);
    let mut failures: Vec<String> = Vec::new();
    let mut worst = 0.0f64;
    let mut fail = |name: &str, i: usize| failures.push(format!("{name}#{i}"));

    for i in 0..ORACLE_INSTANCES {
        let t = rng.random_range(1..=16);
        let h = rng.random_range(1..=24);
        let w = 2 * rng.random_range(1..=6);
        let d = rng.random_range(1..=64);
        let video = common::random_video(&mut rng, t, h, w, d);
        let prompt = common::random_prompt(&mut rng, d);
        let frame = rng.random_range(0..t);

        // frame scoring
        let scores = frame_scores(&video, &prompt).unwrap();
        let err = common::max_abs_diff(scores.as_slice(), &common::frame_scores(&video, &prompt));
        worst = worst.max(err);
        if err > FLOAT_TOL {
            fail("frame_scores", i);
        }

        // pooling: global average and width pooling
        let pooled = global_avg_pool(&video, frame).unwrap();
        let err = common::max_abs_diff(pooled.data(), &common::pool(&video, frame));
        worst = worst.max(err);
        if err > FLOAT_TOL {
            fail("global_avg_pool", i);
        }
        let narrowed = pool_width(&video, 2).unwrap();
        let err = common::max_abs_diff(narrowed.data(), &common::pool_width(&video, 2));
        worst = worst.max(err);
        if err > FLOAT_TOL {
            fail("pool_width", i);
        }

        // top-K on a map with deliberate ties
        let scores: Vec<f32> = (0..h * w).map(|_| rng.random_range(-16i32..16) as f32 / 16.0).collect();
        let map = TokenScoreMap::new(grid(h, w), scores.clone()).unwrap();
        let k = rng.random_range(1..=h * w);
        let positions = top_k_positions(&map, k).unwrap();
        if positions != common::top_k(&scores, w, k) {
            fail("top_k", i);
        }

        // centroid
        let (hc, wc) = roi_center(&positions).unwrap();
        let (oh, ow) = common::center(&positions);
        if (hc - oh).abs() > FLOAT_TOL || (wc - ow).abs() > FLOAT_TOL {
            fail("centroid", i);
        }

        // cropping
        let bh = rng.random_range(1..=h);
        let bw = rng.random_range(1..=w);
        let roi = RoiBox {
            top: rng.random_range(0..=h - bh),
            left: rng.random_range(0..=w - bw),
            height: bh,
            width: bw,
        };
        if crop_roi(&video, frame, &roi).unwrap().data != common::crop(&video, frame, &roi) {
            fail("crop", i);
        }
    }
    check(
        failures.is_empty(),
        format!("{ORACLE_INSTANCES} instances x 6 kernels, worst float error {worst:.2e}, failures {failures:?}"),
    )
}

fn bench_config(strategy: TemporalStrategy) -> BenchConfig {
    let mut config = BenchConfig {
        t_total: BENCH_FRAMES,
        grid: grid(24, 12),
        dim: BENCH_DIM,
        planted_count: BENCH_PLANTED,
        box_dims: BENCH_BOX,
        snr: BENCH_SNR,
        trials: BENCH_TRIALS,
        seed: 2024,
        pipeline: Preset::Fv513.config(),
    };
    config.pipeline.strategy = strategy;
    config.pipeline.roi = config.matched_roi().unwrap();
    config
}

fn temporal_benchmark() -> Outcome {
    let prompt = run_trials(&bench_config(TemporalStrategy::Prompt { k: BENCH_PLANTED })).unwrap();
    let uniform = run_trials(&bench_config(TemporalStrategy::Uniform { k: BENCH_PLANTED })).unwrap();
    let full = prompt.fraction_full_recall();
    check(
        full >= 0.95 && uniform.frame_recall <= 0.5,
        format!(
            "prompt-guided full recall in {:.1}% of trials (>= 95%), uniform mean recall {:.3} (<= 0.5)",
            full * 100.0,
            uniform.frame_recall
        ),
    )
}

fn spatial_benchmark() -> Outcome {
    let report = run_trials(&bench_config(TemporalStrategy::Prompt { k: BENCH_PLANTED })).unwrap();
    let frac = report.fraction_iou_at_least(0.5);
    check(
        frac >= 0.95,
        format!(
            "mean IoU >= 0.5 in {:.1}% of trials (>= 95%), overall mean IoU {:.3}",
            frac * 100.0,
            report.mean_iou
        ),
    )
}

fn cost_ordering() -> Outcome {
    let mut rng = common::rng(6);
    let mut shapes = vec![
        ModelShape::LLAMA_7B,
        ModelShape::new(1, 1, 1, 1).unwrap(),
        ModelShape::new(60, 7168, 20480, 56).unwrap(),
    ];
    for _ in 0..200 {
        let heads = rng.random_range(1..=64);
        shapes.push(
            ModelShape::new(
                rng.random_range(1..=96),
                heads * rng.random_range(1..=256),
                rng.random_range(1..=65536),
                heads,
            )
            .unwrap(),
        );
    }
    let ordered = shapes.iter().all(|s| {
        let c = |l| estimate_prefill(l, s).prefill_flops;
        c(2648) < c(3456) && c(3456) < c(3680)
    });
    let seven_b = ModelShape::LLAMA_7B;
    let monotone = (1..8192u64)
        .all(|l| estimate_prefill(l + 1, &seven_b).prefill_flops > estimate_prefill(l, &seven_b).prefill_flops);
    check(
        ordered && monotone,
        format!(
            "2648 < 3456 < 3680 on {} shapes: {ordered}; strictly increasing over L in 1..=8192: {monotone}",
            shapes.len()
        ),
    )
}

fn invariance_suite() -> Outcome {
    let mut rng = common::rng(7);
    let mut problems = Vec::new();
    for i in 0..50 {
        let d = rng.random_range(1..=64);
        let video = common::random_video(&mut rng, 16, 24, 24, d);
        let prompt = common::random_prompt(&mut rng, d);
        let config = [Preset::Fv513, Preset::Fv1026, Preset::Fv864Full][i % 3].config();
        let (tokens, plan) = run_pipeline(&video, &prompt, &config).unwrap();

        // positive prompt scaling: powers of two, and integers on a coarse prompt
        for c in [0.25f32, 2.0, 1024.0] {
            if run_pipeline(&video, &prompt.scaled(c).unwrap(), &config).unwrap().1 != plan {
                problems.push(format!("scale {c} changed plan #{i}"));
            }
        }
        let coarse =
            PromptEmbedding::new((0..d).map(|_| rng.random_range(-64i32..=64) as f32 / 8.0).collect()).unwrap();
        let coarse = if coarse.data().iter().all(|&x| x == 0.0) {
            PromptEmbedding::new(vec![1.0; d]).unwrap()
        } else {
            coarse
        };
        let (_, coarse_plan) = run_pipeline(&video, &coarse, &config).unwrap();
        for c in [3.0f32, 10.0] {
            if run_pipeline(&video, &coarse.scaled(c).unwrap(), &config).unwrap().1 != coarse_plan {
                problems.push(format!("scale {c} changed coarse plan #{i}"));
            }
        }

        // determinism
        let (tokens2, plan2) = run_pipeline(&video, &prompt, &config).unwrap();
        let manifest = Manifest::new(&config, grid(24, 12), &plan, &tokens);
        if tokens2 != tokens
            || plan2 != plan
            || Manifest::new(&config, grid(24, 12), &plan2, &tokens2).to_json() != manifest.to_json()
        {
            problems.push(format!("non-deterministic run #{i}"));
        }

        // alpha = 1 is a pure gather of the pooled frames
        if config.roi.alpha() == 1.0 {
            let pooled = pool_width(&video, 2).unwrap();
            let gathered = gather_frames(&pooled, &plan.frame_selection).unwrap();
            if tokens.data() != gathered.data() {
                problems.push(format!("alpha 1.0 not identity #{i}"));
            }
        }

        // bitwise round-trips
        let v_bytes = encode_video(&video);
        if decode_video(&v_bytes)
            .map(|v| encode_video(&v) != v_bytes)
            .unwrap_or(true)
        {
            problems.push(format!("VFT round-trip #{i}"));
        }
        let p_bytes = encode_prompt(&prompt);
        if decode_prompt(&p_bytes)
            .map(|p| encode_prompt(&p) != p_bytes)
            .unwrap_or(true)
        {
            problems.push(format!("VPE round-trip #{i}"));
        }
        let back = Manifest::from_json(&manifest.to_json()).unwrap();
        if back != manifest || back.plan().unwrap() != plan {
            problems.push(format!("manifest round-trip #{i}"));
        }
        let (spec, _) = bench_config(TemporalStrategy::Prompt { k: 3 }).trial_setup(i).unwrap();
        if Truth::from_json(&spec.truth().to_json()).unwrap() != spec.truth() {
            problems.push(format!("truth round-trip #{i}"));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "scaling, identity gather, round-trips, determinism hold on 50 videos".into()
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [Criterion; 7] = [
        ("roi-ratio token table", secs(1), roi_ratio_table),
        ("preset token counts", None, preset_counts),
        ("oracle equivalence", secs(60), oracle_equivalence),
        ("planted temporal benchmark", secs(120), temporal_benchmark),
        ("planted spatial benchmark", None, spatial_benchmark),
        ("cost-model ordering", None, cost_ordering),
        ("invariance suite", None, invariance_suite),
    ];

    let mut failed = 0;
    for (name, limit, run) in criteria {
        let out = timed(limit, run);
        failed += usize::from(!out.passed);
        println!("{} {name}: {}", if out.passed { "PASS" } else { "FAIL" }, out.detail);
    }
    println!(
        "N/A  QA accuracy/score reproduction: requires external VLM weights and GPT grading; \
         covered by the stand-in suites above"
    );

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
