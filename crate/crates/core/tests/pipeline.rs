mod common;

use common::small_model;
use heartformer::acquisition::{make_record, MisalignmentLevel, RecordSpec};
use heartformer::evalmetrics::{sa_cd, total_loss, StageMask};
use heartformer::heartformer::{replication_baseline, HeartFormer, Mode, ModelConfig, Sample, TrainConfig, Trainer};

fn toy_spec() -> RecordSpec {
    RecordSpec {
        sparse_points: 64,
        dense_points: 256,
        surface_points: 4000,
        ..RecordSpec::desk()
    }
}

fn toy_samples(n: usize, seed: u64) -> Vec<Sample> {
    let model = small_model();
    (0..n as u64)
        .map(|i| {
            let r = make_record(&model, &toy_spec(), MisalignmentLevel::ALL[(i % 5) as usize], seed + i).unwrap();
            Sample {
                sparse: r.sparse,
                gt: r.dense_gt,
            }
        })
        .collect()
}

#[test]
fn cold_start_is_replication() {
    let net = HeartFormer::new(ModelConfig::toy()).unwrap();
    for s in toy_samples(3, 40) {
        let out = net.forward(&s.sparse, Mode::Eval).unwrap();
        assert_eq!(out.p_mid, out.p_coarse.replicate(2));
        assert_eq!(out.p_fine, out.p_coarse.replicate(16));
        let l = total_loss(out.stages(), &s.gt, StageMask::ALL).unwrap();
        let c = sa_cd(&out.p_coarse, &s.gt).unwrap().value;
        assert!((l.total - 3.0 * c).abs() <= 1e-12 * c);
    }
}

#[test]
fn train_mode_jitters_global_keypoints_only() {
    let net = HeartFormer::new(ModelConfig::toy()).unwrap();
    let s = &toy_samples(1, 41)[0];
    let a = net.sample(&s.sparse, Mode::Eval).unwrap();
    let b = net.sample(&s.sparse, Mode::Train { jitter_seed: 5 }).unwrap();
    assert_eq!(a.sub, b.sub);
    assert_eq!(a.glo.groups, b.glo.groups);
    assert_ne!(a.glo.points, b.glo.points);
    assert_eq!(a.glo.points.labels(), b.glo.points.labels());
    assert_eq!(net.sample(&s.sparse, Mode::Train { jitter_seed: 5 }).unwrap(), b);
}

#[test]
fn stage_sizes_and_labels() {
    let cfg = ModelConfig::toy();
    let net = HeartFormer::new(cfg.clone()).unwrap();
    for s in toy_samples(3, 50) {
        let out = net.forward(&s.sparse, Mode::Eval).unwrap();
        assert_eq!(out.p_coarse.len(), cfg.n_c);
        assert_eq!(out.p_mid.len(), 2 * cfg.n_c);
        assert_eq!(out.p_fine.len(), 16 * cfg.n_c);
        assert_eq!(out.f_glo.shape(), &[cfg.half(), cfg.c]);
        let base = replication_baseline(&s.sparse, &cfg).unwrap();
        assert_eq!(base.len(), cfg.fine());
    }
}

#[test]
fn short_training_run_reduces_loss_and_resumes_identically() {
    let train = toy_samples(8, 60);
    let val = toy_samples(4, 70);
    let mcfg = ModelConfig::toy();
    let tcfg = TrainConfig {
        epochs: 6,
        batch_size: 4,
        base_lr: 3e-3,
        warmup_epochs: 1,
        ..TrainConfig::desk()
    };
    let mut full = Trainer::new(mcfg.clone(), tcfg.clone(), train.len()).unwrap();
    full.run(&train, &val, None).unwrap();
    assert_eq!(full.history.len(), 6);
    assert!(full.history[5].val[2] < full.history[0].val[2]);

    // An interrupted run: the 6-epoch schedule, stopped after 3.
    let mut first = Trainer::new(mcfg, tcfg, train.len()).unwrap();
    first.config.epochs = 3;
    first.run(&train, &val, None).unwrap();
    let mut resumed = Trainer::resume(&first.checkpoint(), Some(6)).unwrap();
    resumed.run(&train, &val, None).unwrap();
    assert_eq!(resumed.loss_csv(), full.loss_csv());
    assert_eq!(resumed.checkpoint().to_bytes(), full.checkpoint().to_bytes());
}

#[test]
fn every_stage_mask_trains() {
    let train = toy_samples(4, 80);
    for mask in StageMask::ablation_rows() {
        let tcfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            mask,
            ..TrainConfig::desk()
        };
        let mut t = Trainer::new(ModelConfig::toy(), tcfg, train.len()).unwrap();
        t.run(&train, &train, None).unwrap();
        assert!(t.history[0].train_loss.is_finite());
    }
}
