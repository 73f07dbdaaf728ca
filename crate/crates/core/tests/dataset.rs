mod common;

use common::{small_dataset, small_generator};
use topoformer::dataset::{
    augment, generate_dataset, model_inputs, read_dataset, sample_problem, write_dataset,
    SamplerConfig, Transform,
};
use topoformer::eval::compliance_of_design;
use topoformer::{Grid, LoadShape, ProblemKind};

#[test]
fn sampler_marginals_over_ten_thousand_seeds() {
    let cfg = SamplerConfig::default();
    let n = 10_000;
    let mut angles = [0usize; 6];
    let mut counts = [0usize; 5];
    let mut sine = 0;
    let mut vf_sum = 0.0;
    let boundary = cfg.grid.boundary_elements();
    let mut hits = vec![0usize; cfg.grid.n_elements()];
    for seed in 0..n as u64 {
        let s = sample_problem(seed, ProblemKind::Dynamic, &cfg).unwrap();
        s.validate().unwrap();
        angles[s.load.angle_index.unwrap() as usize] += 1;
        counts[s.bc.count()] += 1;
        sine += (s.shape == Some(LoadShape::Sine)) as usize;
        assert!((cfg.vf_min..=cfg.vf_max).contains(&s.vf));
        vf_sum += s.vf;
        hits[s.load.element(&cfg.grid)] += 1;
    }
    let share = |c: usize| c as f64 / n as f64;
    for a in angles {
        assert!((share(a) - 1.0 / 6.0).abs() < 0.015, "{angles:?}");
    }
    assert_eq!(counts[0], 0);
    for c in &counts[1..] {
        assert!((share(*c) - 0.25).abs() < 0.02, "{counts:?}");
    }
    assert!((share(sine) - 0.5).abs() < 0.02);
    assert!((vf_sum / n as f64 - 0.4).abs() < 0.003);
    // Load elements are uniform over the boundary ring: about 40 hits each.
    let expected = n as f64 / boundary.len() as f64;
    for &(ex, ey) in &boundary {
        let h = hits[cfg.grid.element_index(ex, ey)] as f64;
        assert!(h > 0.4 * expected && h < 1.8 * expected, "({ex},{ey}): {h}");
    }
    assert_eq!(hits.iter().sum::<usize>(), n);
}

#[test]
fn generation_is_seeded_and_round_trips() {
    let a = small_dataset(ProblemKind::Static, 4, 99, 16);
    let b = small_dataset(ProblemKind::Static, 4, 99, 16);
    assert_eq!(a, b);
    let c = small_dataset(ProblemKind::Static, 4, 100, 16);
    assert_ne!(a.samples, c.samples);
    // A longer run shares its prefix.
    let longer = generate_dataset(ProblemKind::Static, 5, 99, &small_generator(16)).unwrap();
    assert_eq!(longer.samples[..4], a.samples[..]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.tds");
    write_dataset(&path, &a).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), a);
}

#[test]
fn stored_inputs_match_a_fresh_solve() {
    let cfg = small_generator(16);
    for s in &small_dataset(ProblemKind::Dynamic, 2, 3, 16).samples {
        let (fields, fft) = model_inputs(&s.spec, &cfg).unwrap();
        assert_eq!(fields, s.fields);
        assert_eq!(fft, s.fft);
        assert_eq!(s.condition().len(), topoformer::problem::DYNAMIC_COND_DIM);
    }
}

#[test]
fn augmentation_is_closed_and_physical() {
    let cfg = small_generator(16);
    let data = small_dataset(ProblemKind::Static, 3, 12, 16);
    for s in &data.samples {
        let images = augment(s);
        assert_eq!(images[0], *s);
        assert!(images.len() >= 2, "at least the identity and one image");
        for img in &images {
            img.spec.validate().unwrap();
            assert_eq!(img.topology.mean(), s.topology.mean());
            let c = compliance_of_design(&img.spec, &img.topology, &cfg.optimizer, &cfg.dynamics)
                .unwrap();
            assert!(
                (c - s.gt_compliance).abs() <= 1e-9 * s.gt_compliance,
                "{c} vs {}",
                s.gt_compliance
            );
            // Fields of the transformed problem are the transformed fields.
            let (fields, _) = model_inputs(&img.spec, &cfg).unwrap();
            for (a, b) in fields.sed.iter().zip(&img.fields.sed) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn quarter_turns_compose_to_identity() {
    let grid = Grid::square(16).unwrap();
    let spec = sample_problem(
        5,
        ProblemKind::Static,
        &SamplerConfig {
            grid,
            ..SamplerConfig::default()
        },
    )
    .unwrap();
    let mut s = spec;
    for _ in 0..4 {
        s = Transform::Rot90.spec(&s).unwrap();
    }
    // Quarter turns leave the 60 degree lattice, so only the force survives.
    assert_eq!(
        (s.bc, s.load.ex, s.load.ey, s.vf),
        (spec.bc, spec.load.ex, spec.load.ey, spec.vf)
    );
    assert!((s.load.fx - spec.load.fx).abs() < 1e-12 && (s.load.fy - spec.load.fy).abs() < 1e-12);
    let twice = Transform::MirrorX
        .spec(&Transform::MirrorX.spec(&spec).unwrap())
        .unwrap();
    assert_eq!(twice, spec);
}
