//! The eleven acceptance criteria, run in sequence. Each prints one PASS/FAIL line; the test fails
//! if any criterion does.

use std::time::{Duration, Instant};

use mvdet_core::augment::{flip_scene, Frame};
use mvdet_core::bev::{density, rasterize};
use mvdet_core::codec::{decode_box_with_heading, encode_box, encode_orientation};
use mvdet_core::geometry::{bev_iou, image_iou, normalize_angle};
use mvdet_core::header::{run_lambda_ablation, run_mask_ablation, ExperimentConfig, HeaderInput};
use mvdet_core::kitti::{parse_calibration, parse_labels, parse_point_cloud, write_labels, Point};
use mvdet_core::labeling::{
    assign_labels, average_precision, precision_recall, EvalFrame, EvalGt, View,
};
use mvdet_core::loss::{total_loss, HeaderOutputs, SampleTargets};
use mvdet_core::mask::{cell_medians, compute_mask};
use mvdet_core::synth::{split_view_fixture, generate_scene};
use mvdet_core::{
    BevConfig, BoxDims, ForegroundMask, GroundPlane, GroundTruthLabel, LabelState, LossWeights, MaskConfig,
    ModelConfig, ObjectClass, OrientedBox3D, RawPointCloud, SceneSpec, ThresholdTable, ToyHeaderModel,
};
use nalgebra::{Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// 1 --------------------------------------------------------------------

fn mask_rule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=9);
        let cfg = MaskConfig { k, n: 1, eps1: rng.random_range(0.0..1.5), eps2: rng.random_range(0.0..0.5) };
        let d_min = rng.random_range(0.5..40.0);
        let d_max = d_min + rng.random_range(0.0..6.0);
        // Medians cluster on the interval ends so the closed bounds matter.
        let edges = [0.0, cfg.eps2, d_min - cfg.eps1, d_max + cfg.eps1];
        let medians: Vec<f64> = (0..k * k)
            .map(|_| match rng.random_range(0..4) {
                0 => edges[rng.random_range(0..4)],
                1 => edges[rng.random_range(0..4)] + rng.random_range(-1e-9..1e-9),
                _ => rng.random_range(0.0..50.0),
            })
            .map(|m: f64| m.max(0.0))
            .collect();
        let mask = compute_mask(&medians, d_min, d_max, &cfg).unwrap();
        for (m, &got) in medians.iter().zip(&mask.cells) {
            let inside = (d_min - cfg.eps1 <= *m && *m <= d_max + cfg.eps1) || (0.0 <= *m && *m <= cfg.eps2);
            mismatches += usize::from(got != u8::from(inside));
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatching cells over 1000 tuples"))
}

// 2 --------------------------------------------------------------------

fn median_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (k, n) = (rng.random_range(1..=8), rng.random_range(1..=6));
        let side = k * n;
        let zero_rate = rng.random_range(0.0..1.0);
        let grid: Vec<f64> = (0..side * side)
            .map(|_| {
                if rng.random_bool(zero_rate) {
                    0.0
                } else if rng.random_bool(0.2) {
                    10.0 // repeated values
                } else {
                    rng.random_range(0.1..80.0)
                }
            })
            .collect();
        let cfg = MaskConfig { k, n, ..Default::default() };
        let got = cell_medians(&grid, &cfg).unwrap();
        for ci in 0..k {
            for cj in 0..k {
                let mut v = Vec::new();
                for r in 0..n {
                    for c in 0..n {
                        let d = grid[(ci * n + r) * side + cj * n + c];
                        if d != 0.0 {
                            v.push(d);
                        }
                    }
                }
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let want = match v.len() {
                    0 => 0.0,
                    l if l % 2 == 1 => v[l / 2],
                    l => (v[l / 2 - 1] + v[l / 2]) / 2.0,
                };
                mismatches += usize::from(got[ci * k + cj].to_bits() != want.to_bits());
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatching medians over 1000 grids"))
}

// 3 --------------------------------------------------------------------

fn footprint_contains(b: &OrientedBox3D, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - b.center.x, y - b.center.y);
    let (c, s) = (b.yaw.cos(), b.yaw.sin());
    (dx * c + dy * s).abs() <= b.dims.l / 2.0 && (-dx * s + dy * c).abs() <= b.dims.w / 2.0
}

fn grid_iou(a: &OrientedBox3D, b: &OrientedBox3D, samples: usize) -> f64 {
    let pts: Vec<Point2<f64>> = a.footprint().into_iter().chain(b.footprint()).collect();
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.x), h.max(p.x)));
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.y), h.max(p.y)));
    let (mut ia, mut ib, mut both) = (0usize, 0usize, 0usize);
    for i in 0..samples {
        let x = x0 + (i as f64 + 0.5) / samples as f64 * (x1 - x0);
        for j in 0..samples {
            let y = y0 + (j as f64 + 0.5) / samples as f64 * (y1 - y0);
            let (in_a, in_b) = (footprint_contains(a, x, y), footprint_contains(b, x, y));
            ia += usize::from(in_a);
            ib += usize::from(in_b);
            both += usize::from(in_a && in_b);
        }
    }
    both as f64 / (ia + ib - both) as f64
}

fn flat_box(x: f64, y: f64, l: f64, w: f64, yaw: f64) -> OrientedBox3D {
    OrientedBox3D::new(Point3::new(x, y, 0.0), BoxDims::new(l, w, 1.0), yaw)
}

fn rotated_iou() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = flat_box(0.0, 0.0, rng.random_range(0.5..5.0), rng.random_range(0.5..3.0), rng.random_range(-3.2..3.2));
        let b = flat_box(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.5..5.0),
            rng.random_range(0.5..3.0),
            rng.random_range(-3.2..3.2),
        );
        worst = worst.max((bev_iou(&a, &b) - grid_iou(&a, &b, 400)).abs());
    }
    let unit = |x: f64, y: f64| flat_box(x, y, 1.0, 1.0, 0.0);
    let fixtures = [
        (unit(0.0, 0.0), unit(0.5, 0.0), 1.0 / 3.0),
        (unit(0.0, 0.0), unit(0.5, 0.5), 1.0 / 7.0),
        (unit(0.0, 0.0), unit(0.0, 0.0), 1.0),
        (unit(0.0, 0.0), unit(1.0, 0.0), 0.0),
        (unit(0.0, 0.0), unit(3.0, 0.0), 0.0),
        (flat_box(0.0, 0.0, 2.0, 2.0, 0.0), unit(0.0, 0.0), 0.25),
        (unit(0.0, 0.0), flat_box(0.0, 0.0, 1.0, 1.0, std::f64::consts::FRAC_PI_2), 1.0),
    ];
    let fixture_err = fixtures.iter().map(|(a, b, want)| (bev_iou(a, b) - want).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 1e-2 && fixture_err <= 1e-9,
        format!("max |iou - grid| {worst:.2e} (tol 1e-2); fixtures max err {fixture_err:.1e} (tol 1e-9)"),
    )
}

// 4 --------------------------------------------------------------------

fn depth_aligned_fixture() -> Outcome {
    let fx = split_view_fixture();
    let view = fx.view();
    let labels = assign_labels(&fx.proposals, &[fx.gt], view, &ThresholdTable::default()).unwrap();
    let gt_2d = view.project(&fx.gt.box3d).unwrap();
    let mut split = 0;
    for (i, p) in fx.proposals.iter().enumerate() {
        let bev = bev_iou(&p.box3d, &fx.gt.box3d);
        let img = view.project(&p.box3d).map_or(0.0, |b| image_iou(&b, &gt_2d));
        let marked = labels.bev[i].state == LabelState::Negative && labels.img[i].state == LabelState::Positive(ObjectClass::Car);
        if bev < 0.3 && img > 0.7 && marked {
            split += 1;
        }
    }
    outcome(split >= 2, format!("{split} proposals with BEV IoU < 0.3, image IoU > 0.7, labeled neg/pos"))
}

// 5 --------------------------------------------------------------------

fn threshold_table() -> Outcome {
    let ious = [0.40, 0.45, 0.55, 0.60, 0.65, 0.70];
    // N negative, I ignore, P positive.
    let expected = [
        (ObjectClass::Car, View::Bev, "NNIIPP"),
        (ObjectClass::Car, View::Image, "NNIIIP"),
        (ObjectClass::Pedestrian, View::Bev, "NPPPPP"),
        (ObjectClass::Pedestrian, View::Image, "NIIPPP"),
        (ObjectClass::Cyclist, View::Bev, "NPPPPP"),
        (ObjectClass::Cyclist, View::Image, "NIIPPP"),
    ];
    let table = ThresholdTable::default();
    let mut wrong = Vec::new();
    for (class, view, states) in expected {
        for (iou, code) in ious.iter().zip(states.chars()) {
            let want = match code {
                'N' => LabelState::Negative,
                'I' => LabelState::Ignore,
                _ => LabelState::Positive(class),
            };
            let got = table.state(class, view, *iou).unwrap();
            if got != want {
                wrong.push(format!("{class:?}/{view:?}@{iou}: {got:?} != {want:?}"));
            }
        }
    }
    outcome(wrong.is_empty(), if wrong.is_empty() { "36 boundary fixtures".to_string() } else { wrong.join(", ") })
}

// 6 --------------------------------------------------------------------

fn random_targets(rng: &mut ChaCha8Rng, c: usize) -> SampleTargets {
    let mut class = || match rng.random_range(0..4) {
        0 => None,
        1 => Some(0),
        _ => Some(rng.random_range(0..c)),
    };
    let (bev_class, img_class) = (class(), class());
    SampleTargets {
        bev_class,
        img_class,
        bev_reg: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        img_reg: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        angle: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
    }
}

/// Which side of every smooth-L1 kink each regression residual is on.
fn residual_sides(o: &HeaderOutputs, t: &SampleTargets) -> Vec<bool> {
    let pairs = [(&o.s_fusion[..], &t.bev_reg[..]), (&o.s_img[..], &t.img_reg[..]), (&o.s_bev[..], &t.bev_reg[..]), (&o.a_fusion[..], &t.angle[..])];
    pairs.iter().flat_map(|(p, q)| p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs() < 1.0)).collect()
}

fn loss_fd(rng: &mut ChaCha8Rng) -> (usize, usize, f64) {
    let (n, c, h) = (8, 4, 1e-5);
    let w = LossWeights {
        lambda_cls: rng.random_range(0.1..2.0),
        lambda_reg: rng.random_range(0.1..2.0),
        lambda_ang: rng.random_range(0.1..2.0),
        lambda_sub_cls: rng.random_range(0.0..2.0),
        lambda_sub_reg: rng.random_range(0.0..2.0),
    };
    let targets: Vec<SampleTargets> = (0..n).map(|_| random_targets(rng, c)).collect();
    let mut outputs: Vec<HeaderOutputs> = (0..n)
        .map(|_| {
            let mut o = HeaderOutputs::zeros(c);
            (0..o.len()).for_each(|i| *o.entry_mut(i) = rng.random_range(-2.5..2.5));
            o
        })
        .collect();
    let grads = total_loss(&outputs, &targets, &w).unwrap().grads;
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for s in 0..n {
        let analytic = grads[s].flatten();
        let base = residual_sides(&outputs[s], &targets[s]);
        for i in 0..outputs[s].len() {
            let orig = *outputs[s].entry_mut(i);
            *outputs[s].entry_mut(i) = orig + h;
            let (plus, side_p) = (total_loss(&outputs, &targets, &w).unwrap().total, residual_sides(&outputs[s], &targets[s]));
            *outputs[s].entry_mut(i) = orig - h;
            let (minus, side_m) = (total_loss(&outputs, &targets, &w).unwrap().total, residual_sides(&outputs[s], &targets[s]));
            *outputs[s].entry_mut(i) = orig;
            if side_p != base || side_m != base {
                skipped += 1;
                continue;
            }
            worst = worst.max(rel_err(analytic[i], (plus - minus) / (2.0 * h)));
            checked += 1;
        }
    }
    (checked, skipped, worst)
}

fn model_kinks(model: &ToyHeaderModel, inputs: &[HeaderInput<'_>], targets: &[SampleTargets]) -> Vec<bool> {
    let mut out = Vec::new();
    for (input, t) in inputs.iter().zip(targets) {
        let (o, a) = model.forward_cached(input).unwrap();
        out.extend(a.z_img.iter().chain(&a.z_bev).map(|&z| z > 0.0));
        out.extend(residual_sides(&o, t));
    }
    out
}

fn model_fd(rng: &mut ChaCha8Rng) -> (usize, usize, f64) {
    let h = 1e-4;
    let cfg = ModelConfig { k: 3, hidden: 8, num_scores: 4 };
    let mut model = ToyHeaderModel::zeros(cfg);
    model.params.iter_mut().for_each(|p| *p = rng.random_range(-0.5..0.5));
    let raw: Vec<(Vec<f32>, Vec<f32>, ForegroundMask)> = (0..8)
        .map(|_| {
            let img = (0..cfg.image_inputs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bev = (0..cfg.bev_inputs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cells = (0..cfg.k * cfg.k).map(|_| u8::from(rng.random_bool(0.7))).collect();
            (img, bev, ForegroundMask { k: cfg.k, cells })
        })
        .collect();
    let inputs: Vec<HeaderInput<'_>> = raw.iter().map(|(i, b, m)| HeaderInput { image: i, bev: b, mask: m }).collect();
    let targets: Vec<SampleTargets> = (0..inputs.len()).map(|_| random_targets(rng, cfg.num_scores)).collect();
    let w = LossWeights::with_sub_ratio(rng.random_range(0.0..2.0));
    let (_, grad) = model.loss_and_gradient(&inputs, &targets, &w).unwrap();
    let base = model_kinks(&model, &inputs, &targets);
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for i in 0..model.num_params() {
        let orig = model.params[i];
        model.params[i] = orig + h;
        let plus = model.loss_and_gradient(&inputs, &targets, &w).unwrap().0.total;
        let kp = model_kinks(&model, &inputs, &targets);
        model.params[i] = orig - h;
        let minus = model.loss_and_gradient(&inputs, &targets, &w).unwrap().0.total;
        let km = model_kinks(&model, &inputs, &targets);
        model.params[i] = orig;
        if kp != base || km != base {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel_err(grad[i], (plus - minus) / (2.0 * h)));
        checked += 1;
    }
    (checked, skipped, worst)
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut lc, mut ls, mut lw) = (0, 0, 0.0f64);
    let (mut mc, mut ms, mut mw) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let (c, s, w) = loss_fd(&mut rng);
        (lc, ls, lw) = (lc + c, ls + s, lw.max(w));
        let (c, s, w) = model_fd(&mut rng);
        (mc, ms, mw) = (mc + c, ms + s, mw.max(w));
    }
    outcome(
        lw <= 1e-4 && mw <= 1e-3,
        format!(
            "loss: worst rel err {lw:.2e} over {lc} entries ({ls} at kinks skipped); \
             model: {mw:.2e} over {mc} params ({ms} skipped)"
        ),
    )
}

// 7, 8 -----------------------------------------------------------------

fn lambda_ablation() -> Outcome {
    let (low, high) = run_lambda_ablation(&ExperimentConfig::default(), [0.001, 1.0]).unwrap();
    let (a, b) = (low.mean(), high.mean());
    let img = b.image_accuracy - a.image_accuracy;
    let fusion = b.fusion_accuracy - a.fusion_accuracy;
    outcome(
        img >= 0.05 && fusion >= -0.01,
        format!(
            "image {:.4} -> {:.4} ({:+.2} pts, need >= +5); fusion {:.4} -> {:.4} ({:+.2} pts, need >= -1)",
            a.image_accuracy,
            b.image_accuracy,
            100.0 * img,
            a.fusion_accuracy,
            b.fusion_accuracy,
            100.0 * fusion
        ),
    )
}

fn mask_ablation() -> Outcome {
    let (on, off) = run_mask_ablation(&ExperimentConfig::clutter_heavy()).unwrap();
    let (heavy_on, heavy_off) = (on.mean().fusion_accuracy, off.mean().fusion_accuracy);
    let (on, off) = run_mask_ablation(&ExperimentConfig::clutter_free()).unwrap();
    let (free_on, free_off) = (on.mean().fusion_accuracy, off.mean().fusion_accuracy);
    outcome(
        heavy_on >= heavy_off && (free_on - free_off).abs() <= 0.02,
        format!(
            "clutter-heavy fusion {heavy_on:.4} with vs {heavy_off:.4} without; \
             clutter-free {free_on:.4} vs {free_off:.4} (|diff| {:.2} pts, need <= 2)",
            100.0 * (free_on - free_off).abs()
        ),
    )
}

// 9 --------------------------------------------------------------------

fn bev_conservation() -> Outcome {
    let cfg = BevConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let plane = GroundPlane::from_coefficients(0.01, 0.03, 1.0, 1.7).unwrap();
    let mut points: Vec<Point> = (0..100_000)
        .map(|_| {
            Point::new(
                rng.random_range(-5.0..75.0),
                rng.random_range(-45.0..45.0),
                rng.random_range(-2.5..1.5),
                rng.random(),
            )
        })
        .collect();
    // A dense stack in one cell to exercise saturation.
    points.extend((0..40).map(|i| Point::new(20.03, 0.04, -1.0 + 0.01 * i as f32, 0.5)));
    let cloud = RawPointCloud::new(points);
    let map = rasterize(&cloud, &plane, &cfg).unwrap();

    let in_range = cloud
        .points
        .iter()
        .filter(|p| {
            let q = p.position();
            let h = plane.height(&q);
            (cfg.x_range.0..=cfg.x_range.1).contains(&q.x)
                && (cfg.y_range.0..=cfg.y_range.1).contains(&q.y)
                && (cfg.height_range.0..=cfg.height_range.1).contains(&h)
        })
        .count();
    let counted: u64 = map.counts.iter().map(|&c| c as u64).sum();

    let saturates = (15..=100_000).all(|n| density(n) == 1.0) && (0..15).all(|n| density(n) < 1.0);
    let dc = map.density_channel();
    let cells_ok = (0..map.rows * map.cols).all(|cell| {
        let d = map.data[cell * map.channels + dc];
        if map.counts[cell] >= 15 {
            d == 1.0
        } else {
            d < 1.0
        }
    });
    let busiest = map.counts.iter().copied().max().unwrap_or(0);

    let mirror = RawPointCloud::new(cloud.points.iter().map(|p| Point { y: -p.y, ..*p }).collect());
    let flipped = rasterize(&mirror, &plane.mirrored(1), &cfg).unwrap();
    let expected = map.mirrored_y();
    let bitwise = flipped.counts == expected.counts
        && flipped.data.iter().zip(&expected.data).all(|(a, b)| a.to_bits() == b.to_bits());

    outcome(
        counted == in_range as u64 && saturates && cells_ok && busiest >= 15 && bitwise,
        format!(
            "counts {counted} / in-range {in_range}; density saturation {saturates} (cells {cells_ok}, max count {busiest}); \
             mirror bitwise {bitwise}"
        ),
    )
}

// 10 -------------------------------------------------------------------

fn codec_round_trip(rng: &mut ChaCha8Rng) -> f64 {
    let plane = GroundPlane::from_coefficients(0.02, -0.01, 1.0, 1.65).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dims = BoxDims::new(rng.random_range(0.5..5.0), rng.random_range(0.4..2.5), rng.random_range(0.8..2.5));
        let c = Point3::new(rng.random_range(5.0..60.0), rng.random_range(-20.0..20.0), rng.random_range(-1.5..0.5));
        let gt = OrientedBox3D::new(c, dims, rng.random_range(-3.1..3.1));
        let jitter = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2));
        let proposal = OrientedBox3D::new(c + jitter, BoxDims::new(dims.l * 1.1, dims.w * 0.9, dims.h), gt.yaw + 0.2);
        let enc = encode_box(&gt, &proposal, &plane);
        let back = decode_box_with_heading(&enc, &proposal, &plane, &encode_orientation(gt.yaw)).unwrap();
        let errs = [
            (back.center - gt.center).norm(),
            (back.dims.l - gt.dims.l).abs(),
            (back.dims.w - gt.dims.w).abs(),
            (back.dims.h - gt.dims.h).abs(),
            normalize_angle(back.yaw - gt.yaw).abs(),
        ];
        worst = errs.into_iter().fold(worst, f64::max);
    }
    worst
}

fn random_label(rng: &mut ChaCha8Rng) -> GroundTruthLabel {
    let left = rng.random_range(0.0..1200.0);
    let top = rng.random_range(0.0..350.0);
    GroundTruthLabel {
        class_name: ["Car", "Pedestrian", "Cyclist", "Van", "DontCare"][rng.random_range(0..5)].to_string(),
        truncation: rng.random_range(0.0..1.0),
        occlusion: rng.random_range(0..4),
        alpha: rng.random_range(-3.1..3.1),
        bbox2d: mvdet_core::AxisAlignedBox2D::new(left, top, left + rng.random_range(1.0..200.0), top + rng.random_range(1.0..100.0)),
        dimensions: [rng.random_range(0.5..4.0), rng.random_range(0.3..3.0), rng.random_range(0.3..6.0)],
        location: [rng.random_range(-30.0..30.0), rng.random_range(-1.0..3.0), rng.random_range(1.0..80.0)],
        rotation_y: rng.random_range(-3.1..3.1),
        score: rng.random_bool(0.5).then(|| rng.random_range(0.0..1.0)),
    }
}

/// Largest field error after write→parse, in units of the printed precision
/// (0.5 means exactly at the rounding bound).
fn label_round_trip(rng: &mut ChaCha8Rng) -> (f64, bool) {
    let labels: Vec<GroundTruthLabel> = (0..1000).map(|_| random_label(rng)).collect();
    let back = parse_labels(&write_labels(&labels)).unwrap();
    let mut worst = 0.0f64;
    let mut exact = back.len() == labels.len();
    for (a, b) in labels.iter().zip(&back) {
        exact &= a.class_name == b.class_name && a.occlusion == b.occlusion && a.score.is_some() == b.score.is_some();
        let two = [
            a.truncation - b.truncation,
            a.alpha - b.alpha,
            a.bbox2d.left - b.bbox2d.left,
            a.bbox2d.top - b.bbox2d.top,
            a.bbox2d.right - b.bbox2d.right,
            a.bbox2d.bottom - b.bbox2d.bottom,
            a.rotation_y - b.rotation_y,
        ]
        .into_iter()
        .chain((0..3).map(|i| a.dimensions[i] - b.dimensions[i]))
        .chain((0..3).map(|i| a.location[i] - b.location[i]));
        worst = two.map(|d| d.abs() / 0.01).fold(worst, f64::max);
        if let (Some(x), Some(y)) = (a.score, b.score) {
            worst = worst.max((x - y).abs() / 1e-4);
        }
    }
    (worst, exact)
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn label_bits(l: &GroundTruthLabel) -> Vec<f64> {
    let b = l.bbox2d;
    let mut v = vec![l.truncation, l.alpha, b.left, b.top, b.right, b.bottom, l.rotation_y];
    v.extend(l.dimensions);
    v.extend(l.location);
    v
}

/// Flips a synthetic frame, as read back from its KITTI files, twice.
fn flip_involution() -> (bool, bool, bool, usize, usize) {
    let spec = SceneSpec { seed: 10, objects: 8, ..Default::default() };
    let scene = generate_scene(&spec).unwrap();
    let k = scene.to_kitti();
    let frame = Frame {
        cloud: parse_point_cloud(&k.velodyne).unwrap(),
        image: scene.image.clone(),
        calib: parse_calibration(&k.calib).unwrap(),
        labels: parse_labels(&k.label).unwrap(),
    };
    let twice = flip_scene(&flip_scene(&frame));
    let cloud = frame.cloud.points.len() == twice.cloud.points.len()
        && frame.cloud.points.iter().zip(&twice.cloud.points).all(|(p, q)| {
            [p.x, p.y, p.z, p.reflectance].map(f32::to_bits) == [q.x, q.y, q.z, q.reflectance].map(f32::to_bits)
        });
    let image = frame.image == twice.image;
    let flat = |c: &mvdet_core::CalibrationSet| {
        let mut v: Vec<f64> = c.camera_projection.iter().copied().collect();
        v.extend(c.rectification.iter());
        v.extend(c.lidar_to_camera.iter());
        v
    };
    let calib = same_bits(&flat(&frame.calib), &flat(&twice.calib));
    let labels_off = frame.labels.iter().zip(&twice.labels).filter(|(a, b)| !same_bits(&label_bits(a), &label_bits(b))).count();
    (cloud && image, calib, labels_off == 0, labels_off, frame.labels.len())
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let codec = codec_round_trip(&mut rng);
    let (label_units, label_exact) = label_round_trip(&mut rng);
    let (sensor, calib, labels, labels_off, n_labels) = flip_involution();
    outcome(
        codec <= 1e-6 && label_units <= 0.5 + 1e-9 && label_exact && sensor && calib && labels,
        format!(
            "codec max err {codec:.1e} (tol 1e-6); label round trip {label_units:.3} of printed precision \
             (tol 0.5, text fields exact {label_exact}); flip twice bitwise: cloud+image {sensor}, calib {calib}, \
             labels {labels} ({labels_off}/{n_labels} differ)"
        ),
    )
}

// 11 -------------------------------------------------------------------

/// Greedy matching written out for a single frame with distinct scores;
/// (recall, precision) after each detection.
fn brute_force_pr(frame: &EvalFrame, threshold: f64) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..frame.detections.len()).collect();
    order.sort_by(|&a, &b| frame.detections[b].1.partial_cmp(&frame.detections[a].1).unwrap());
    let n_gt = frame.gts.iter().filter(|g| !g.ignore).count() as f64;
    let mut taken = vec![false; frame.gts.len()];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut out = Vec::new();
    for d in order {
        let best = (0..frame.gts.len())
            .filter(|&g| !taken[g])
            .map(|g| (g, bev_iou(&frame.detections[d].0, &frame.gts[g].box3d)))
            .filter(|&(_, iou)| iou >= threshold)
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        match best {
            Some((g, _)) => {
                taken[g] = true;
                tp += 1.0;
            }
            None => fp += 1.0,
        }
        out.push((tp / n_gt, tp / (tp + fp)));
    }
    out
}

fn interpolated_40(curve: &[(f64, f64)]) -> f64 {
    let mut sum = 0.0;
    for k in 1..=40 {
        let r = k as f64 / 40.0;
        sum += curve.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
    }
    sum / 40.0
}

fn ap_machinery() -> Outcome {
    let gt = |x: f64| EvalGt { box3d: flat_box(x, 0.0, 4.0, 2.0, 0.0), ignore: false };
    let frame = EvalFrame {
        detections: vec![
            (flat_box(0.0, 0.0, 4.0, 2.0, 0.0), 0.9),
            (flat_box(20.0, 5.0, 4.0, 2.0, 0.0), 0.8),
            (flat_box(10.1, 0.0, 4.0, 2.0, 0.0), 0.7),
        ],
        gts: vec![gt(0.0), gt(10.0)],
    };
    let frames = [frame.clone()];
    let curve = precision_recall(&frames, 0.7);
    let oracle = brute_force_pr(&frame, 0.7);
    let ap = average_precision(&frames, 0.7);
    let want = interpolated_40(&oracle);
    let hand = (20.0 * 1.0 + 20.0 * (2.0 / 3.0)) / 40.0;
    let self_eval = EvalFrame {
        detections: frame.gts.iter().map(|g| (g.box3d, 1.0)).collect(),
        gts: frame.gts.clone(),
    };
    let self_ap = average_precision(&[self_eval], 0.7);
    outcome(
        curve == oracle && ap == want && (ap - hand).abs() < 1e-12 && self_ap == 1.0,
        format!("AP {ap} (brute force {want}, by hand 5/6); PR curve matches {}; self-evaluation AP {self_ap}", curve == oracle),
    )
}

// ----------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("foreground mask rule", Duration::from_secs(1), mask_rule),
        ("cell median oracle", Duration::from_secs(5), median_oracle),
        ("rotated BEV IoU", Duration::from_secs(30), rotated_iou),
        ("depth-aligned label split", Duration::from_secs(1), depth_aligned_fixture),
        ("threshold table boundaries", Duration::from_secs(1), threshold_table),
        ("gradient check", Duration::from_secs(60), gradient_check),
        ("sub-loss ablation direction", Duration::from_secs(600), lambda_ablation),
        ("mask ablation direction", Duration::from_secs(600), mask_ablation),
        ("BEV rasterization conservation", Duration::from_secs(5), bev_conservation),
        ("round trips", Duration::from_secs(5), round_trips),
        ("AP machinery", Duration::from_secs(1), ap_machinery),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let pass = out.pass && took <= limit;
        println!(
            "criterion {:>2} {name}: {} in {:.2}s (limit {}s): {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs(),
            out.detail
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
