mod common;

use std::sync::OnceLock;

use common::{freeze_violations, mini_desk, small_dataset};
use topoformer::dataset::Dataset;
use topoformer::train::{
    finetune, train, widen_for_dynamic, FinetuneGroup, FinetuneGroups, TrainConfig, TrainOutputs,
};
use topoformer::vit::{ViT, ViTConfig};
use topoformer::{Error, ProblemKind};

fn static_data() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| small_dataset(ProblemKind::Static, 12, 7, 16))
}

fn dynamic_data() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| small_dataset(ProblemKind::Dynamic, 6, 8, 16))
}

fn short(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 4,
        warmup: 2,
        lr: 1e-3,
        checkpoint_every: 0,
        ..TrainConfig::default()
    }
}

fn base() -> ViT {
    ViT::init(&mini_desk(), 11).unwrap()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let cfg = TrainConfig {
        lr: 0.0,
        ..short(5)
    };
    let out = train(&cfg, base(), static_data(), None).unwrap();
    assert_eq!(out.model.params, base().params);
    assert_eq!(out.log.len(), 5);
}

#[test]
fn same_seed_gives_identical_curves() {
    let a = train(&short(8), base(), static_data(), None).unwrap();
    let b = train(&short(8), base(), static_data(), None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.params, b.model.params);
    let other = TrainConfig {
        seed: 1,
        ..short(8)
    };
    let c = train(&other, base(), static_data(), None).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn outputs_are_written_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let out = TrainOutputs {
        dir: dir.path().join("run"),
    };
    let cfg = TrainConfig {
        checkpoint_every: 3,
        ..short(6)
    };
    let r = train(&cfg, base(), static_data(), Some(&out)).unwrap();
    let csv = std::fs::read_to_string(out.log_path()).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("step,"));
    assert!(out.checkpoint_path(Some(3)).exists());
    let (m, _) = ViT::load(out.checkpoint_path(None)).unwrap();
    assert_eq!(m, r.model);
}

#[test]
fn zero_step_finetune_is_the_widened_base() {
    let groups = FinetuneGroups::new([FinetuneGroup::ClassProjection]).unwrap();
    let out = finetune(&base(), &groups, dynamic_data(), &short(0), None).unwrap();
    assert_eq!(out.model, widen_for_dynamic(&base()).unwrap());
}

#[test]
fn finetune_leaves_frozen_groups_bit_equal() {
    for g in FinetuneGroup::ALL {
        let groups = FinetuneGroups::new([g]).unwrap();
        let tuned = finetune(&base(), &groups, dynamic_data(), &short(10), None)
            .unwrap()
            .model;
        let widened = widen_for_dynamic(&base()).unwrap();
        let (moved, stuck) = freeze_violations(&widened, &tuned, &groups);
        assert!(moved.is_empty(), "{g}: frozen parameters moved: {moved:?}");
        assert!(
            stuck.is_empty(),
            "{g}: trained parameters unchanged: {stuck:?}"
        );
    }
}

#[test]
fn empty_group_set_is_rejected() {
    assert!(FinetuneGroups::new([]).is_err());
}

#[test]
fn schema_mismatches_are_rejected() {
    let dyn_model = ViT::init(
        &ViTConfig {
            cond_dim: topoformer::problem::DYNAMIC_COND_DIM,
            ..mini_desk()
        },
        0,
    )
    .unwrap();
    assert!(matches!(
        train(&short(1), dyn_model, static_data(), None),
        Err(Error::Schema(_))
    ));
    let groups = FinetuneGroups::parse("decoder_projection").unwrap();
    assert!(matches!(
        finetune(&base(), &groups, static_data(), &short(1), None),
        Err(Error::Schema(_))
    ));
    let wrong_grid = ViT::init(&ViTConfig::desk(), 0).unwrap();
    assert!(matches!(
        train(&short(1), wrong_grid, static_data(), None),
        Err(Error::Schema(_))
    ));
}
