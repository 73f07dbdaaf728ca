//! One line per acceptance criterion. Run a subset with
//! `cargo test --test acceptance -- 4 6`. Criterion 8 (the desk end-to-end
//! run, hours on one core) only runs with `TOPOFORMER_FULL_E2E=1`.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use common::physics::*;
use topoformer::autodiff::{Graph, Rng};
use topoformer::dataset::{
    derive_seed, generate_dataset, read_dataset, sample_problem, write_dataset, Dataset,
    GeneratorConfig,
};
use topoformer::eval::{bench_speedup, evaluate, EvalOptions, ModelPredictor};
use topoformer::fea::LinearSolver;
use topoformer::losses::connected_components;
use topoformer::losses::LossWeights;
use topoformer::problem::LoadShape;
use topoformer::problem::ProblemKind;
use topoformer::simp::{optimize_static, OptimizerConfig};
use topoformer::train::{
    evaluate_loss, finetune, train, widen_for_dynamic, FinetuneGroup, FinetuneGroups, TrainConfig,
    TrainOutputs,
};
use topoformer::vit::{probe_forward, Mode};
use topoformer::vit::{ViT, ViTConfig};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: u32,
    title: &'static str,
    /// Runtime budget in seconds.
    budget: f64,
    run: fn() -> Option<Check>,
}

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria = [
        Criterion {
            id: 1,
            title: "FEA correctness",
            budget: 1.0,
            run: c1_fea,
        },
        Criterion {
            id: 2,
            title: "static SIMP",
            budget: 30.0,
            run: c2_simp,
        },
        Criterion {
            id: 3,
            title: "dynamics",
            budget: 60.0,
            run: c3_dynamics,
        },
        Criterion {
            id: 4,
            title: "autodiff",
            budget: 120.0,
            run: c4_autodiff,
        },
        Criterion {
            id: 5,
            title: "losses",
            budget: 60.0,
            run: c5_losses,
        },
        Criterion {
            id: 6,
            title: "model contract",
            budget: 600.0,
            run: c6_model,
        },
        Criterion {
            id: 7,
            title: "training",
            budget: 900.0,
            run: c7_training,
        },
        Criterion {
            id: 8,
            title: "desk end-to-end",
            budget: 7200.0,
            run: c8_end_to_end,
        },
        Criterion {
            id: 9,
            title: "speedup direction",
            budget: 600.0,
            run: c9_speedup,
        },
    ];
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.id))
    {
        let t = Instant::now();
        let res = (c.run)();
        let secs = t.elapsed().as_secs_f64();
        let (verdict, detail) = match res {
            None => ("SKIPPED", "set TOPOFORMER_FULL_E2E=1 to run".to_string()),
            Some(Ok((ok, d))) if ok && secs <= c.budget => ("PASS", d),
            Some(Ok((ok, d))) => {
                failed += 1;
                let why = if ok { "over runtime budget; " } else { "" };
                ("FAIL", format!("{why}{d}"))
            }
            Some(Err(e)) => {
                failed += 1;
                ("FAIL", format!("error: {e}"))
            }
        };
        println!(
            "criterion {} ({}): {verdict} | {detail} | {secs:.1}s of {:.0}s",
            c.id, c.title, c.budget
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn e2e_dir() -> PathBuf {
    std::env::var_os("TOPOFORMER_E2E_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("e2e"))
}

/// Generate once and reuse: generation is deterministic in its seed.
fn cached_dataset(
    name: &str,
    kind: ProblemKind,
    n: usize,
    seed: u64,
) -> Result<Dataset, topoformer::Error> {
    let path = e2e_dir().join(name);
    if let Ok(ds) = read_dataset(&path) {
        if ds.len() == n && ds.kind() == kind {
            return Ok(ds);
        }
    }
    let t = Instant::now();
    let ds = generate_dataset(kind, n, seed, &GeneratorConfig::default())?;
    eprintln!(
        "generated {n} {kind} samples in {:.0}s",
        t.elapsed().as_secs_f64()
    );
    write_dataset(&path, &ds)?;
    Ok(ds)
}

fn c8_end_to_end() -> Option<Check> {
    if std::env::var("TOPOFORMER_FULL_E2E").ok().as_deref() != Some("1") {
        return None;
    }
    Some((|| -> Check {
        let dir = e2e_dir();
        std::fs::create_dir_all(&dir)?;
        let all = cached_dataset("static.tds", ProblemKind::Static, 2000, 2024)?;
        let (tr, val) = all.split(200)?;
        let cfg = TrainConfig::default();
        let ckpt = dir.join("static");
        let model = match ViT::load(ckpt.join("final.ckpt")) {
            Ok((m, _)) => m,
            Err(_) => {
                let out = TrainOutputs { dir: ckpt.clone() };
                let t = Instant::now();
                let m = train(
                    &cfg,
                    ViT::init(&ViTConfig::desk(), cfg.seed)?,
                    &tr,
                    Some(&out),
                )?
                .model;
                eprintln!("static training took {:.0}s", t.elapsed().as_secs_f64());
                m
            }
        };
        let ev = evaluate(
            &ModelPredictor {
                model: &model,
                batch: 32,
            },
            &val,
            &EvalOptions::default(),
        )?;
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&(&ev.report, &ev.vf_matched))?,
        )?;
        let r = &ev.report;
        let ce = r.mean_ce_pct.unwrap_or(f64::INFINITY);

        let dyn_all = cached_dataset("dynamic.tds", ProblemKind::Dynamic, 150, 2025)?;
        let (dtr, dval) = dyn_all.split(50)?;
        let base = widen_for_dynamic(&model)?;
        let w = LossWeights::default();
        let before = evaluate_loss(&base, &dval.samples, &w, 32)?.total;
        let ft_cfg = TrainConfig {
            iterations: 2000,
            batch_size: 16,
            warmup: 100,
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        let groups = FinetuneGroups::new([FinetuneGroup::DecoderLayers])?;
        let out = TrainOutputs {
            dir: dir.join("finetune"),
        };
        let tuned = finetune(&model, &groups, &dtr, &ft_cfg, Some(&out))?.model;
        let after = evaluate_loss(&tuned, &dval.samples, &w, 32)?.total;
        let ok = ce < 30.0 && r.mean_vf_err_pct < 5.0 && after < before;
        Ok((
            ok,
            format!(
                "mean CE {ce:.2}% (< 30, {} failed excluded, {:.1}% over 30), VF err {:.2}% (< 5), \
                 dynamic val loss {before:.4} -> {after:.4} after decoder-layers fine-tune",
                r.failed, r.ce_over_30_pct, r.mean_vf_err_pct
            ),
        ))
    })())
}

fn verdict(ok: bool, detail: String) -> Check {
    Ok((ok, detail))
}

fn c1_fea() -> Option<Check> {
    Some({
        let mut patch = 0.0f64;
        for (w, h) in [(1, 1), (3, 2), (8, 5)] {
            for solver in [LinearSolver::Cholesky, LinearSolver::pcg()] {
                patch = patch.max(patch_test_error(w, h, &solver));
            }
        }
        let mut lu = 0.0f64;
        for w in 1..=8 {
            for h in 1..=8 {
                lu = lu.max(lu_oracle_error(
                    w,
                    h,
                    (w * 10 + h) as u64,
                    &LinearSolver::Cholesky,
                ));
            }
        }
        verdict(
            patch < 1e-8 && lu < 1e-10,
            format!("patch test {patch:.1e} (< 1e-8), dense-LU oracle {lu:.1e} (< 1e-10) on 64 grids up to 8x8"),
        )
    })
}

fn c2_simp() -> Option<Check> {
    Some((|| -> Check {
        let r = optimize_static(&cantilever_16x8(0.4), &OptimizerConfig::default())?;
        let mean = r.density.mean();
        let (c0, c1) = (r.history[0], *r.history.last().unwrap());
        let fd = (0..5).map(static_fd_error).fold(0.0, f64::max);
        verdict(
            r.iterations <= 300 && (mean - 0.4).abs() <= 1e-3 && c1 < c0 && fd < 1e-3,
            format!(
                "{} iterations (<= 300), mean density {mean:.5} (0.4 +- 1e-3), compliance {c0:.2} -> {c1:.2}, \
                 4x4 sensitivity FD error {fd:.1e} (< 1e-3)",
                r.iterations
            ),
        )
    })())
}

fn c3_dynamics() -> Option<Check> {
    Some({
        let drift = sdof_energy_drift(1000, 0.01);
        let period = sdof_period_error(1e-3, 5);
        let fd = [
            (0, LoadShape::Sine),
            (1, LoadShape::Step),
            (2, LoadShape::Impulse),
        ]
        .into_iter()
        .map(|(s, l)| dynamic_fd_error(s, l))
        .fold(0.0, f64::max);
        verdict(
            drift < 1e-6 && period < 5e-3 && fd < 5e-2,
            format!(
                "energy drift {drift:.1e} over 1000 steps (< 1e-6), period error {:.4}% at dt 1e-3 (< 0.5%), \
                 4x4 dynamic sensitivity FD error {fd:.1e} (< 5e-2)",
                period * 100.0
            ),
        )
    })
}

fn c4_autodiff() -> Option<Check> {
    Some((|| -> Check {
        let mut worst = (0.0f64, "");
        let cases = common::op_cases();
        for (i, case) in cases.iter().enumerate() {
            let e = common::op_gradcheck(case, 100, 1000 + i as u64)?;
            if e > worst.0 {
                worst = (e, case.name);
            }
        }
        let (vit, fm) = common::vit_gradcheck(&common::mini_desk(), 3, 50)?;
        verdict(
            worst.0 < 1e-4 && vit < 1e-3,
            format!(
                "{} ops x 100 gradchecks, worst {:.1e} ({}) (< 1e-4); grid-16 ViT on 50 parameters {vit:.1e} (< 1e-3, FM term {fm:.3})",
                cases.len(),
                worst.0,
                worst.1
            ),
        )
    })())
}

fn c5_losses() -> Option<Check> {
    Some((|| -> Check {
        let mut rng = Rng::new(5);
        let mut agree = 0;
        for _ in 0..1000 {
            let s = common::random_grid(&mut rng, 16);
            agree += (connected_components(&s, 16, 16).1 == common::union_find_count(&s, 16, 16))
                as usize;
        }
        let cases = common::loss_closed_forms()?;
        let wrong: Vec<String> = cases
            .iter()
            .filter(|(_, got, want)| got != want)
            .map(|(n, got, want)| format!("{n}: {got} != {want}"))
            .collect();
        verdict(
            agree == 1000 && wrong.is_empty(),
            format!(
                "union-find agreement {agree}/1000; {}/{} closed forms exact{}",
                cases.len() - wrong.len(),
                cases.len(),
                if wrong.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", wrong.join("; "))
                }
            ),
        )
    })())
}

fn c6_model() -> Option<Check> {
    Some((|| -> Check {
        let mut shapes_ok = true;
        let mut names = Vec::new();
        for (name, cfg) in [
            ("tiny", ViTConfig::tiny()),
            ("small", ViTConfig::small()),
            ("base", ViTConfig::base()),
            ("large", ViTConfig::large()),
            ("huge", ViTConfig::huge()),
        ] {
            let (batch, _) = common::synthetic_batch(&cfg, 1, 9);
            let y = probe_forward(&cfg, 1, &batch)?;
            let ok = y.shape() == [1, 64, 64] && y.data().iter().all(|&v| v > 0.0 && v < 1.0);
            shapes_ok &= ok;
            names.push(format!("{name} {}", if ok { "ok" } else { "bad" }));
        }
        let desk = ViTConfig {
            mask_ratio: 0.0,
            ..ViTConfig::desk()
        };
        let m = ViT::init(&desk, 1)?;
        let (batch, _) = common::synthetic_batch(&desk, 2, 5);
        let mut g = Graph::new();
        let out = m.forward(&mut g, &batch, Mode::Inference)?;
        let pred = g.value(out.pred);
        shapes_ok &= pred.shape() == [2, 64, 64] && pred.data().iter().all(|&v| v > 0.0 && v < 1.0);
        let t = desk.seq_len();
        let mut row_err = 0.0f64;
        for a in &out.attention {
            for row in g.value(*a).data().chunks(t) {
                row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        let mut rng = Rng::new(0);
        let train = m.forward(&mut g, &batch, Mode::Train(&mut rng))?;
        let same = g.value(train.pred) == g.value(out.pred);
        verdict(
            shapes_ok && row_err < 1e-12 && same,
            format!(
                "64x64 outputs in (0,1): {}, desk ok; attention row error {row_err:.1e} (< 1e-12); \
                 mask 0 training equals inference bit-exactly: {same}",
                names.join(", ")
            ),
        )
    })())
}

fn c7_training() -> Option<Check> {
    Some((|| -> Check {
        let data = generate_dataset(ProblemKind::Static, 8, 31, &GeneratorConfig::default())?;
        let cfg = TrainConfig {
            iterations: 2000,
            batch_size: 8,
            lr: 1e-3,
            warmup: 100,
            mask_ratio: Some(0.0),
            augment: false,
            weights: LossWeights::pixel_only(),
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        let fit = train(&cfg, ViT::init(&ViTConfig::desk(), 0)?, &data, None)?.model;
        let mse = evaluate_loss(&fit, &data.samples, &LossWeights::pixel_only(), 8)?.pixel;

        let small = common::small_dataset(ProblemKind::Static, 8, 4, 16);
        let short = TrainConfig {
            iterations: 20,
            batch_size: 4,
            warmup: 2,
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        let base = ViT::init(&common::mini_desk(), 2)?;
        let a = train(&short, base.clone(), &small, None)?;
        let b = train(&short, base.clone(), &small, None)?;
        let deterministic = a.log == b.log && a.model == b.model;

        let dynamic = common::small_dataset(ProblemKind::Dynamic, 4, 6, 16);
        let groups = FinetuneGroups::new([FinetuneGroup::DecoderLayers])?;
        let tuned = finetune(&base, &groups, &dynamic, &short, None)?.model;
        let (moved, stuck) = common::freeze_violations(&widen_for_dynamic(&base)?, &tuned, &groups);
        verdict(
            mse < 0.01 && deterministic && moved.is_empty() && stuck.is_empty(),
            format!(
                "overfit 8 samples: pixel MSE {mse:.5} after 2000 steps (< 0.01); loss curves bit-exact: {deterministic}; \
                 frozen parameters moved: {}, trained parameters unchanged: {}",
                moved.len(),
                stuck.len()
            ),
        )
    })())
}

fn c9_speedup() -> Option<Check> {
    Some((|| -> Check {
        let cfg = GeneratorConfig::default();
        let model = match ViT::load(e2e_dir().join("static/final.ckpt")) {
            Ok((m, _)) => m,
            Err(_) => ViT::init(&ViTConfig::desk(), 0)?,
        };
        let statics = (0..5)
            .map(|i| sample_problem(derive_seed(77, i, 0), ProblemKind::Static, &cfg.sampler))
            .collect::<Result<Vec<_>, _>>()?;
        let dynamics: Vec<_> = statics
            .iter()
            .enumerate()
            .map(|(i, s)| topoformer::ProblemSpec {
                shape: Some(if i % 2 == 0 {
                    LoadShape::Sine
                } else {
                    LoadShape::Impulse
                }),
                ..*s
            })
            .collect();
        let s = bench_speedup(&model, &statics, &cfg)?;
        let d = bench_speedup(&widen_for_dynamic(&model)?, &dynamics, &cfg)?;
        verdict(
            s.ratio > 10.0 && d.ratio > 100.0,
            format!(
                "static {:.1}x ({:.3}s vs {:.4}s, > 10), dynamic {:.0}x ({:.2}s vs {:.4}s, > 100) on 5 shared specs",
                s.ratio, s.optimizer_mean_s, s.inference_mean_s, d.ratio, d.optimizer_mean_s, d.inference_mean_s
            ),
        )
    })())
}
