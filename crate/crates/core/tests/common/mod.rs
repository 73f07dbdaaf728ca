#![allow(dead_code)]

use topoformer::autodiff::{gradcheck, Graph, Rng, Tensor, Var};
use topoformer::Result;

pub type Build = fn(&mut Graph, &[Var]) -> Result<Var>;

/// One op under gradcheck: a name, input shapes and the graph it builds.
pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub build: Build,
}

fn case(name: &'static str, shapes: &[&[usize]], build: Build) -> OpCase {
    OpCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        build,
    }
}

pub fn op_cases() -> Vec<OpCase> {
    const X: &[usize] = &[3, 4, 5];
    vec![
        case("matmul_shared", &[X, &[5, 3]], |g, v| g.matmul(v[0], v[1])),
        case("matmul_batched", &[X, &[3, 5, 2]], |g, v| {
            g.matmul(v[0], v[1])
        }),
        case("add_same", &[X, X], |g, v| g.add(v[0], v[1])),
        case("add_bias", &[X, &[5]], |g, v| g.add(v[0], v[1])),
        case("add_column", &[X, &[3, 4, 1]], |g, v| g.add(v[0], v[1])),
        case("add_general", &[&[3, 1, 5], &[4, 1]], |g, v| {
            g.add(v[0], v[1])
        }),
        case("sub", &[X, &[4, 5]], |g, v| g.sub(v[0], v[1])),
        case("mul_same", &[X, X], |g, v| g.mul(v[0], v[1])),
        case("mul_broadcast", &[X, &[3, 1, 5]], |g, v| g.mul(v[0], v[1])),
        case("affine", &[X], |g, v| g.affine(v[0], -1.7, 0.3)),
        case("reshape", &[X], |g, v| {
            let r = g.reshape(v[0], &[12, 5])?;
            g.mul(r, r)
        }),
        case("permute", &[X], |g, v| {
            let p = g.permute(v[0], &[2, 0, 1])?;
            g.mul(p, p)
        }),
        case("transpose", &[X, &[3, 5, 4]], |g, v| {
            let t = g.transpose(v[0])?;
            g.mul(t, v[1])
        }),
        case("slice", &[X], |g, v| {
            let s = g.slice(v[0], 1, 1, 2)?;
            g.mul(s, s)
        }),
        case("concat", &[X, &[3, 4, 2]], |g, v| {
            let c = g.concat(&[v[0], v[1]], 2)?;
            g.mul(c, c)
        }),
        case("gather_rows", &[&[12, 5]], |g, v| {
            let r = g.gather_rows(v[0], &[3, 0, 3, 11, 7])?;
            g.mul(r, r)
        }),
        case("softmax", &[X], |g, v| g.softmax(v[0])),
        case("layer_norm", &[X, &[5], &[5]], |g, v| {
            g.layer_norm(v[0], v[1], v[2])
        }),
        case("gelu", &[X], |g, v| g.gelu(v[0])),
        case("sigmoid", &[X], |g, v| g.sigmoid(v[0])),
        case("abs", &[X], |g, v| g.abs(v[0])),
        case("sum", &[X], |g, v| {
            let p = g.mul(v[0], v[0])?;
            g.sum(p)
        }),
        case("mean", &[X], |g, v| {
            let p = g.mul(v[0], v[0])?;
            g.mean(p)
        }),
        case("sum_last", &[X], |g, v| {
            let s = g.sum_last(v[0])?;
            g.mul(s, s)
        }),
        case("mse_loss", &[X, X], |g, v| g.mse_loss(v[0], v[1])),
    ]
}

/// Random inputs for `case`, kept away from zero so `abs` stays smooth.
pub fn random_inputs(case: &OpCase, rng: &mut Rng) -> Vec<Tensor> {
    case.shapes
        .iter()
        .map(|s| {
            Tensor::from_fn(s, |_| {
                let m = rng.range(0.05, 2.0);
                if rng.uniform() < 0.5 {
                    -m
                } else {
                    m
                }
            })
        })
        .collect()
}

/// Worst relative error of `case` across `instances` random draws.
pub fn op_gradcheck(case: &OpCase, instances: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inputs = random_inputs(case, &mut rng);
        let r = gradcheck(case.build, &inputs, 1e-5, None)?;
        worst = worst.max(r.max_rel_error);
    }
    Ok(worst)
}

use topoformer::fea::FieldImage;
use topoformer::losses::{total_loss, LossWeights, Targets};
use topoformer::vit::{Batch, Mode, ViT, ViTConfig};

/// Grid-16, patch-4 variant of the desk model.
pub fn mini_desk() -> ViTConfig {
    ViTConfig {
        grid: 16,
        patch: 4,
        ..ViTConfig::desk()
    }
}

/// Random fields, conditions and targets with loads on the top edge.
pub fn synthetic_batch(cfg: &ViTConfig, b: usize, seed: u64) -> (Batch, Targets) {
    let mut rng = Rng::new(seed);
    let n = cfg.grid;
    let fields: Vec<FieldImage> = (0..b)
        .map(|_| FieldImage {
            nelx: n,
            nely: n,
            sed: (0..n * n).map(|_| rng.uniform()).collect(),
            vm: (0..n * n).map(|_| rng.uniform()).collect(),
        })
        .collect();
    let conds: Vec<Vec<f64>> = (0..b)
        .map(|_| (0..cfg.cond_dim).map(|_| rng.uniform()).collect())
        .collect();
    let refs: Vec<&FieldImage> = fields.iter().collect();
    let batch = Batch::new(cfg, &refs, &conds).unwrap();
    let targets = Targets {
        topology: Tensor::from_fn(&[b, n, n], |_| (rng.uniform() < 0.4) as u8 as f64),
        vf: (0..b).map(|_| rng.range(0.3, 0.6)).collect(),
        load: (0..b).map(|_| 1 + rng.index(n - 2)).collect(),
    };
    (batch, targets)
}

fn vit_loss(model: &ViT, batch: &Batch, targets: &Targets, mask_seed: u64) -> Result<(Graph, Var)> {
    let mut g = Graph::new();
    let mut rng = Rng::new(mask_seed);
    let out = model.forward(&mut g, batch, Mode::Train(&mut rng))?;
    let t = total_loss(
        &mut g,
        out.pred,
        targets,
        &LossWeights::default(),
        &out.masked,
        model.cfg.patch,
    )?;
    Ok((g, t.total))
}

/// Central-difference check of the full training loss against backprop on
/// `n` parameter scalars drawn uniformly over the whole model. The decoder
/// bias is striped so the thresholded prediction splits into several
/// components well away from the threshold, which exercises the
/// floating-material term without finite differences crossing it.
/// Returns the worst relative error and the floating-material value.
pub fn vit_gradcheck(cfg: &ViTConfig, seed: u64, n: usize) -> Result<(f64, f64)> {
    let mut model = ViT::init(cfg, seed)?;
    let p = cfg.patch;
    let id = model.params.id("decoder.b")?;
    model.params.set(
        id,
        Tensor::from_fn(&[p * p], |i| if i % p == 0 { -3.0 } else { 3.0 }),
    );
    let (batch, targets) = synthetic_batch(cfg, 2, seed ^ 0xBA7C);
    let (mut g, loss) = vit_loss(&model, &batch, &targets, seed)?;
    let fm = {
        let mut g2 = Graph::new();
        let out = model.forward(&mut g2, &batch, Mode::Inference)?;
        let l = topoformer::losses::floating_material_loss(&mut g2, out.pred, &targets.load, 0.5)?;
        g2.value(l).item()?
    };
    g.backward(loss)?;
    let mut rng = Rng::new(seed ^ 0x5A3);
    let sizes: Vec<usize> = model.params.iter().map(|(_, _, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for flat in rng.choose(total, n) {
        let (mut pi, mut off) = (0, flat);
        while off >= sizes[pi] {
            off -= sizes[pi];
            pi += 1;
        }
        let pid = topoformer::autodiff::ParamId(pi);
        let analytic = g.param_grad(pid).map_or(0.0, |d| d[off]);
        let base = model.params.get(pid).data()[off];
        let mut eval = |v: f64| -> Result<f64> {
            model.params.get_mut(pid).data_mut()[off] = v;
            let (g, l) = vit_loss(&model, &batch, &targets, seed)?;
            g.value(l).item()
        };
        let numeric = (eval(base + h)? - eval(base - h)?) / (2.0 * h);
        model.params.get_mut(pid).data_mut()[off] = base;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok((worst, fm))
}
pub mod physics;

/// Generator settings for small-grid datasets.
pub fn small_generator(n: usize) -> topoformer::dataset::GeneratorConfig {
    use topoformer::dataset::{GeneratorConfig, SamplerConfig};
    GeneratorConfig {
        sampler: SamplerConfig {
            grid: topoformer::Grid::square(n).unwrap(),
            ..SamplerConfig::default()
        },
        ..GeneratorConfig::default()
    }
}

/// Seeded dataset on an `n x n` grid.
pub fn small_dataset(
    kind: topoformer::ProblemKind,
    count: usize,
    seed: u64,
    n: usize,
) -> topoformer::dataset::Dataset {
    topoformer::dataset::generate_dataset(kind, count, seed, &small_generator(n)).unwrap()
}

/// Parameters that broke the freeze contract after fine-tuning: frozen ones
/// that moved, and trained ones that did not.
pub fn freeze_violations(
    widened: &topoformer::vit::ViT,
    tuned: &topoformer::vit::ViT,
    groups: &topoformer::train::FinetuneGroups,
) -> (Vec<String>, Vec<String>) {
    let layers = widened.cfg.layers;
    let mut moved = Vec::new();
    let mut stuck = Vec::new();
    for (id, name, before) in widened.params.iter() {
        let same = tuned.params.get(id).data() == before.data();
        match (groups.contains(name, layers), same) {
            (false, false) => moved.push(name.to_string()),
            (true, true) => stuck.push(name.to_string()),
            _ => {}
        }
    }
    (moved, stuck)
}

/// Union-find over 4-neighbor edges.
pub fn union_find_count(solid: &[bool], w: usize, h: usize) -> usize {
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let c = y * w + x;
            if !solid[c] {
                continue;
            }
            for n in [(x + 1 < w).then(|| c + 1), (y + 1 < h).then(|| c + w)]
                .into_iter()
                .flatten()
            {
                if solid[n] {
                    let (a, b) = (find(&mut parent, c), find(&mut parent, n));
                    parent[a] = b;
                }
            }
        }
    }
    (0..w * h)
        .filter(|&c| solid[c] && find(&mut parent, c) == c)
        .count()
}

pub fn random_grid(rng: &mut Rng, n: usize) -> Vec<bool> {
    let p = rng.range(0.2, 0.8);
    (0..n * n).map(|_| rng.uniform() < p).collect()
}

/// One closed-form loss case: name, computed value, expected value.
pub type ClosedForm = (&'static str, f64, f64);

fn loss_of(
    pred: &[f64],
    side: usize,
    f: impl FnOnce(&mut Graph, Var) -> Result<Var>,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.leaf(Tensor::new(&[1, side, side], pred.to_vec())?)?;
    let l = f(&mut g, p)?;
    g.value(l).item()
}

/// The constructed loss and component cases with exact expected values.
pub fn loss_closed_forms() -> Result<Vec<ClosedForm>> {
    use topoformer::losses::{
        connected_components, floating_material_loss, load_discrepancy_loss, pixel_loss,
        total_loss, vf_loss, LossWeights, Targets, FM_THRESHOLD,
    };
    let n = 4;
    let full = |v: f64| vec![v; n * n];
    let target = |g: &mut Graph, v: Vec<f64>| g.constant(Tensor::new(&[1, n, n], v).unwrap());
    // Solid left half: one component, load at (0, 0), volume 0.5.
    let half: Vec<f64> = (0..n * n).map(|i| (i % n < 2) as u8 as f64).collect();
    // Columns 0 and 3: two equal components, load in the first.
    let split: Vec<f64> = (0..n * n)
        .map(|i| (i % n == 0 || i % n == 3) as u8 as f64)
        .collect();
    let mut at_load = full(0.2);
    let mut cases = vec![
        (
            "pixel: pred = target",
            loss_of(&half, n, |g, p| {
                let t = target(g, half.clone())?;
                pixel_loss(g, p, t)
            })?,
            0.0,
        ),
        (
            "pixel: zeros vs ones",
            loss_of(&full(0.0), n, |g, p| {
                let t = target(g, full(1.0))?;
                pixel_loss(g, p, t)
            })?,
            1.0,
        ),
        (
            "vf: pred = f",
            loss_of(&full(0.5), n, |g, p| vf_loss(g, p, &[0.5]))?,
            0.0,
        ),
        (
            "vf: ones, f = 0.4",
            loss_of(&full(1.0), n, |g, p| vf_loss(g, p, &[0.4]))?,
            0.6,
        ),
        (
            "vf: zeros, f = 0.3",
            loss_of(&full(0.0), n, |g, p| vf_loss(g, p, &[0.3]))?,
            0.3,
        ),
    ];
    for (rho, want) in [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)] {
        at_load[5] = rho;
        let v = loss_of(&at_load, n, |g, p| load_discrepancy_loss(g, p, &[5]))?;
        cases.push(("load: density at load element", v, want));
    }
    let rect: Vec<bool> = (0..36)
        .map(|i| (1..4).contains(&(i % 6)) && (2..5).contains(&(i / 6)))
        .collect();
    cases.push((
        "components: rectangle",
        connected_components(&rect, 6, 6).1 as f64,
        1.0,
    ));
    let diag = [true, false, false, true];
    cases.push((
        "components: diagonal pixels",
        connected_components(&diag, 2, 2).1 as f64,
        2.0,
    ));
    let fm = |d: &[f64]| {
        loss_of(d, n, |g, p| {
            floating_material_loss(g, p, &[0], FM_THRESHOLD)
        })
    };
    cases.push(("fm: one loaded component", fm(&half)?, 0.0));
    cases.push(("fm: two equal components", fm(&split)?, 0.5));
    cases.push(("fm: all void", fm(&full(0.0))?, 1.0));
    let targets = Targets {
        topology: Tensor::new(&[1, n, n], half.clone())?,
        vf: vec![0.5],
        load: vec![0],
    };
    let total = |w: LossWeights, pred: &[f64]| -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::new(&[1, n, n], pred.to_vec())?)?;
        let t = total_loss(&mut g, p, &targets, &w, &[], n)?;
        Ok((g.value(t.total).item()?, g.value(t.pixel).item()?))
    };
    cases.push((
        "total: exact feasible prediction",
        total(LossWeights::default(), &half)?.0,
        0.0,
    ));
    let (t, px) = total(LossWeights::pixel_only(), &split)?;
    cases.push(("total: pixel-only weights equal pixel loss", t, px));
    Ok(cases)
}
