use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mvdet_bench::{box_pairs, flat_ground, random_cloud};
use mvdet_core::bev::rasterize;
use mvdet_core::geometry::{bev_iou, project_box_to_image};
use mvdet_core::header::{build_dataset, ChannelScaler, DatasetConfig, ToyHeaderModel};
use mvdet_core::mask::{build_sparse_depth_map, foreground_mask};
use mvdet_core::synth::{generate_proposals, generate_scene, ProposalConfig, ProposalMode};
use mvdet_core::{BevConfig, LossWeights, MaskConfig, SceneSpec};

fn bench_bev_iou(c: &mut Criterion) {
    let pairs = box_pairs(256, 1);
    c.bench_function("bev_iou/256 pairs", |b| {
        b.iter(|| pairs.iter().map(|(p, q)| bev_iou(black_box(p), black_box(q))).sum::<f64>())
    });
}

fn bench_rasterize(c: &mut Criterion) {
    let cloud = random_cloud(100_000, 2);
    let plane = flat_ground();
    let cfg = BevConfig::default();
    c.bench_function("rasterize/100k points", |b| {
        b.iter(|| rasterize(black_box(&cloud), &plane, &cfg).expect("valid config"))
    });
}

fn bench_mask(c: &mut Criterion) {
    let scene = generate_scene(&SceneSpec { seed: 3, ..SceneSpec::default() }).expect("scene");
    let proposals = generate_proposals(&scene, ProposalMode::Perturb, &ProposalConfig::default());
    let size = scene.image_size();
    let projected: Vec<_> =
        proposals.iter().filter_map(|p| project_box_to_image(&p.proposal.box3d, &scene.calib, size).ok()).collect();
    let cfg = MaskConfig::default();

    c.bench_function("mask/sparse depth map", |b| {
        b.iter(|| build_sparse_depth_map(black_box(&scene.cloud), &scene.calib, size))
    });
    let depth = build_sparse_depth_map(&scene.cloud, &scene.calib, size);
    c.bench_function(&format!("mask/{} proposals", projected.len()), |b| {
        b.iter(|| projected.iter().map(|p| foreground_mask(&depth, p, &cfg).expect("mask").kept()).sum::<usize>())
    });
}

fn bench_header(c: &mut Criterion) {
    let cfg = DatasetConfig::default();
    let mut data = build_dataset(&cfg, 0..2).expect("dataset");
    let scaler = ChannelScaler::fit(&data);
    data.standardize(&scaler);
    let model = ToyHeaderModel::new(cfg.model_config(), 7);
    let n = data.len().min(64);
    let inputs = &data.inputs()[..n];
    let targets = &data.targets()[..n];
    let weights = LossWeights::default();

    c.bench_function(&format!("header/forward x{n}"), |b| {
        b.iter(|| {
            for i in inputs {
                black_box(model.forward(i).expect("forward"));
            }
        })
    });
    c.bench_function(&format!("header/loss and gradient x{n}"), |b| {
        b.iter(|| model.loss_and_gradient(inputs, targets, &weights).expect("loss"))
    });
}

criterion_group!(benches, bench_bev_iou, bench_rasterize, bench_mask, bench_header);
criterion_main!(benches);
