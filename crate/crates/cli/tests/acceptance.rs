//! Acceptance suite: one test per acceptance criterion, each printing one
//! PASS line (run with `--nocapture` to see them; a failed test is the FAIL
//! line). Expected values are frozen from published results or derived from
//! independent oracles coded directly in this file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctseg::backend::{image_fingerprint, FakeEmbedder, FakeSegmenter};
use ctseg::classifier::{
    classify_scan, embed_and_sequence, forward, loss_from_raw, plan_aligned, plan_first_l,
    rnn_forward, train, train_step, Adam, ClassifierConfig, FeatureMode, Params, RoutingPlan,
    RoutingStrategy, SequenceFeatures, TrainOptions, TrainSample,
};
use ctseg::metrics::{evaluate, f1, macro_f1};
use ctseg::pipeline::{
    compute_bbox, crop_with_mask, filter_mask_indices, segment_slice, select_roi, CropEntry,
    CropSet, PipelineConfig, RoiMode,
};
use ctseg::synthetic::{
    crop_feature4, planted_set, two_lung_phantom, write_volume_pngs, PlantedPatternOptions,
};
use ctseg::volume::{load_scan, save_mask, ClassLabel};
use ctseg::{BoundingBox, EmbeddingVec, Mask, RoiTarget, ScanVolume, SliceImage, TextPromptSet};

fn pass(name: &str, detail: String) {
    println!("acceptance: {name}: PASS ({detail})");
}

#[test]
fn a01_paper_scale_results_out_of_scope() {
    // Full-scale published scores need restricted clinical datasets and
    // GPU-scale training; the oracle and property suites below stand in for
    // them. Nothing to execute.
    pass(
        "paper-scale-results-note",
        "substituted by the oracle/property suites below".into(),
    );
}

/// Published comparison rows: (label, printed macro %, per-class F1 %s).
const TABLE1: [(&str, f64, [f64; 2]); 9] = [
    ("baseline-a", 87.87, [78.80, 96.95]),
    ("baseline-a+pipeline", 89.87, [81.50, 97.25]),
    ("baseline-b", 89.11, [80.92, 97.31]),
    ("baseline-b+pipeline", 90.61, [82.22, 97.51]),
    ("baseline-c", 89.11, [80.78, 97.45]),
    ("baseline-c+pipeline", 90.61, [82.08, 97.65]),
    ("classifier-unsegmented", 93.06, [92.18, 93.95]),
    ("classifier-conventional-seg", 95.06, [94.18, 95.95]),
    ("classifier-with-pipeline", 96.81, [95.68, 97.95]),
];

#[test]
fn a02_metric_arithmetic_reproduction() {
    let start = Instant::now();
    let mut bad_rows = Vec::new();
    for (label, printed_macro, per_class) in TABLE1 {
        let fractions: Vec<f64> = per_class.iter().map(|v| v / 100.0).collect();
        let computed = macro_f1(&fractions) * 100.0;
        let diff = (computed - printed_macro).abs();
        println!(
            "  table-1 row {label}: mean(per-class) {computed:.3} vs printed {printed_macro:.2} (|diff| {diff:.3})"
        );
        if diff > 0.01 {
            bad_rows.push(format!(
                "{label}: mean {computed:.3} vs printed {printed_macro:.2}"
            ));
        }
    }
    let mc3_f1 = f1(0.7943, 0.9843) * 100.0;
    assert!(
        (mc3_f1 - 87.92).abs() <= 0.01,
        "table-2 harmonic combination {mc3_f1:.4} vs printed 87.92"
    );
    assert!(start.elapsed().as_secs() < 1, "metric check too slow");
    assert!(
        bad_rows.is_empty(),
        "table-1 rows where the printed macro is not the mean of the printed \
         per-class F1s (the published table is internally inconsistent for \
         these rows):\n  {}",
        bad_rows.join("\n  ")
    );
    pass(
        "metric-arithmetic-reproduction",
        format!("9 macro rows and table-2 f1 {mc3_f1:.4} within 0.01"),
    );
}

/// Independent brute force: fake-embedder features, cosine, and argmax coded
/// from their documented definitions.
fn oracle_select(crops: &CropSet, w: &[f64]) -> (usize, f64) {
    let mut best_i = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (i, e) in crops.entries.iter().enumerate() {
        let v = crop_feature4(&e.crop);
        let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nw = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        let s = (dot / (nv * nw)).clamp(-1.0, 1.0);
        if s > best_s {
            best_s = s;
            best_i = i;
        }
    }
    (best_i, best_s)
}

fn random_crop(rng: &mut ChaCha8Rng) -> SliceImage {
    let h = rng.gen_range(2..10);
    let w = rng.gen_range(2..10);
    let on = (rng.gen_range(0..w), rng.gen_range(0..h));
    SliceImage::from_fn(h, w, |x, y| {
        if (x, y) == on {
            0.9
        } else if (x * 7 + y * 3) % 4 == 0 {
            0.0
        } else {
            ((x * 11 + y * 5) % 10) as f32 / 10.0
        }
    })
    .unwrap()
}

#[test]
fn a03_roi_selection_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let embedder = FakeEmbedder::new();
    let trials = 1200;
    for trial in 0..trials {
        let n = rng.gen_range(2..=20);
        let crops = CropSet {
            entries: (0..n)
                .map(|i| CropEntry {
                    source_mask_index: i,
                    crop: random_crop(&mut rng),
                })
                .collect(),
        };
        let wv: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let w = EmbeddingVec::new(wv.clone()).unwrap();
        let (got_i, got_s) = select_roi(&crops, &embedder, &w).unwrap();
        let (want_i, want_s) = oracle_select(&crops, &wv);
        assert_eq!(got_i, want_i, "trial {trial}: index mismatch");
        assert!((got_s - want_s).abs() < 1e-12, "trial {trial}: score mismatch");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "roi oracle too slow: {elapsed:?}");
    pass(
        "roi-selection-oracle",
        format!("{trials} randomized instances exact in {elapsed:.2?}"),
    );
}

#[test]
fn a04_bounding_box_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let trials = 1500;
    let mut checked = 0;
    for _ in 0..trials {
        let h = rng.gen_range(1..40);
        let w = rng.gen_range(1..40);
        let density = rng.gen_range(0.02..0.6);
        let bits: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(density)).collect();
        let mask = Mask::from_bits(h, w, bits);
        if mask.is_empty() {
            assert!(compute_bbox(&mask).is_err());
            continue;
        }
        // all-pixel scan oracle
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    xmin = xmin.min(x);
                    ymin = ymin.min(y);
                    xmax = xmax.max(x);
                    ymax = ymax.max(y);
                }
            }
        }
        assert_eq!(
            compute_bbox(&mask).unwrap(),
            BoundingBox::new(xmin, ymin, xmax, ymax)
        );
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert!(checked >= 1000, "only {checked} non-empty masks drawn");
    assert!(elapsed.as_secs() < 10, "bbox oracle too slow: {elapsed:?}");
    pass(
        "bounding-box-oracle",
        format!("{checked} random masks exact in {elapsed:.2?}"),
    );
}

#[test]
fn a05_area_filter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let trials = 1000;
    for _ in 0..trials {
        let (h, w) = (20usize, 20usize);
        let image_area = h * w;
        let n = rng.gen_range(0..12);
        let masks: Vec<Mask> = (0..n)
            .map(|_| {
                let area = rng.gen_range(0..=image_area);
                Mask::from_fn(h, w, |x, y| y * w + x < area)
            })
            .collect();
        let tau: f64 = rng.gen_range(0.0..0.5);
        let kept = filter_mask_indices(&masks, tau, image_area);
        // direct re-evaluation of the documented rule
        let oracle: Vec<usize> = (0..masks.len())
            .filter(|&i| {
                let a = masks[i].area() as f64;
                a > tau * image_area as f64 && a < 0.9 * image_area as f64
            })
            .collect();
        assert_eq!(kept, oracle);
    }
    pass(
        "area-filter-oracle",
        format!("{trials} random mask lists, exact set equality"),
    );
}

#[test]
fn a06_end_to_end_phantom() {
    let start = Instant::now();
    let ph = two_lung_phantom();
    let segmenter = FakeSegmenter::new().with_image(&ph.slice, ph.parts());
    let right_crop = crop_with_mask(&ph.slice, &ph.right_lung).unwrap();
    let left_crop = crop_with_mask(&ph.slice, &ph.left_lung).unwrap();
    let embedder = FakeEmbedder::new()
        .with_text("right lung", crop_feature4(&right_crop))
        .with_text("left lung", crop_feature4(&left_crop));
    let cfg = PipelineConfig {
        roi_mode: RoiMode::PerLung,
        targets: vec![
            RoiTarget {
                name: "right_lung".into(),
                prompts: TextPromptSet::new(vec!["right lung".into()]).unwrap(),
            },
            RoiTarget {
                name: "left_lung".into(),
                prompts: TextPromptSet::new(vec!["left lung".into()]).unwrap(),
            },
        ],
        ..PipelineConfig::default()
    };
    let out = segment_slice(&ph.slice, &segmenter, &embedder, &cfg).unwrap();
    let expected = ph.right_lung.union(&ph.left_lung);
    assert_eq!(out.mask, expected, "final mask is not the ellipse union");
    for (x, y) in ph.blob.foreground() {
        assert!(!out.mask.get(x, y), "central blob leaked into the final mask");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 5, "phantom too slow: {elapsed:?}");
    pass(
        "end-to-end-phantom",
        format!(
            "final mask == right ∪ left ({} px), blob excluded, {elapsed:.2?}",
            expected.area()
        ),
    );
}

#[test]
fn a07_routing_plan_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let trials = 2000;
    for _ in 0..trials {
        let t = rng.gen_range(1..=1000);
        let l = rng.gen_range(1..=t);
        for plan in [plan_first_l(t, l).unwrap(), plan_aligned(t, l).unwrap()] {
            assert_eq!(plan.l(), l);
            for w in plan.positions().windows(2) {
                assert!(w[0] < w[1], "positions not strictly increasing");
            }
            assert!(*plan.positions().last().unwrap() < t);
        }
        let aligned = plan_aligned(t, l).unwrap();
        if l >= 2 {
            assert_eq!(aligned.positions()[0], 0);
            assert_eq!(*aligned.positions().last().unwrap(), t - 1);
        }
    }
    for t in [1usize, 2, 17, 700, 1000] {
        let identity = plan_aligned(t, t).unwrap();
        assert_eq!(identity.positions(), (0..t).collect::<Vec<_>>().as_slice());
    }
    pass(
        "routing-plan-properties",
        format!("{trials} random (t, l) draws plus identity checks"),
    );
}

fn toy_cfg() -> ClassifierConfig {
    ClassifierConfig {
        t: 8,
        rnn_units: 4,
        dense_units: 5,
        dropout_keep: 1.0,
        num_classes: 2,
        routing: RoutingStrategy::Aligned,
        feature_dim: 6,
        input_hw: (8, 8),
    }
}

fn toy_features(cfg: &ClassifierConfig, plan: RoutingPlan, rng: &mut ChaCha8Rng) -> SequenceFeatures {
    let rows: Vec<Vec<f64>> = (0..plan.l())
        .map(|_| (0..cfg.feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    SequenceFeatures::from_rows(cfg.t, cfg.feature_dim, &rows, plan).unwrap()
}

#[test]
fn a08_gradient_masking_toy_scale() {
    let start = Instant::now();
    let cfg = toy_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut params = Params::init(&cfg, &mut rng).unwrap();
    // plans [0,1,2] and [0,4,7]: batch union leaves {3,5,6} unselected
    let sf_a = toy_features(&cfg, plan_first_l(cfg.t, 3).unwrap(), &mut rng);
    let sf_b = toy_features(
        &cfg,
        RoutingPlan::new(vec![0, 4, 7], cfg.t).unwrap(),
        &mut rng,
    );
    let batch = vec![(&sf_a, 0usize), (&sf_b, 1usize)];
    let unselected = [3usize, 5, 6];
    let units = cfg.rnn_units;

    // batch loss as a function of the parameters, via the public forward
    let batch_loss = |p: &Params| -> f64 {
        batch
            .iter()
            .map(|(sf, label)| -forward(sf, p).unwrap().probabilities()[*label].ln())
            .sum::<f64>()
            / batch.len() as f64
    };

    // analytic gradient of the dense layer: mean over per-sample grads,
    // which a zero-input row keeps at exactly zero
    let analytic = {
        let mut grads = ctseg::classifier::Grads::zeros_like(&params);
        for (sf, label) in &batch {
            let raw = rnn_forward(sf, &params);
            let base = loss_from_raw(&raw, sf.plan(), &params, *label).unwrap();
            assert!(base.is_finite());
            let (_, g) = ctseg::classifier::loss_and_grads(sf, &params, *label).unwrap();
            grads.add_assign(&g);
        }
        grads.scale(1.0 / batch.len() as f64);
        grads
    };
    let mut zero_count = 0;
    for &pos in &unselected {
        for row in pos * units..(pos + 1) * units {
            for &g in analytic.w1.row(row) {
                assert_eq!(g, 0.0, "analytic gradient nonzero at position {pos}");
                zero_count += 1;
            }
        }
    }

    // central finite differences on every unselected dense weight
    let eps = 1e-5;
    for &pos in &unselected {
        for row in pos * units..(pos + 1) * units {
            for col in 0..cfg.dense_units {
                let orig = params.w1[(row, col)];
                params.w1[(row, col)] = orig + eps;
                let lp = batch_loss(&params);
                params.w1[(row, col)] = orig - eps;
                let lm = batch_loss(&params);
                params.w1[(row, col)] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!(
                    fd.abs() < 1e-6,
                    "finite difference {fd} at unselected position {pos}"
                );
            }
        }
    }

    // finite differences also agree on a few selected weights (sanity)
    {
        let (_, g0) = ctseg::classifier::loss_and_grads(&sf_a, &params, 0).unwrap();
        let (_, g1) = ctseg::classifier::loss_and_grads(&sf_b, &params, 1).unwrap();
        for &(row, col) in &[(0usize, 0usize), (1, 2), (4 * units - 1, 1)] {
            let analytic = (g0.w1[(row, col)] + g1.w1[(row, col)]) / 2.0;
            let orig = params.w1[(row, col)];
            params.w1[(row, col)] = orig + eps;
            let lp = batch_loss(&params);
            params.w1[(row, col)] = orig - eps;
            let lm = batch_loss(&params);
            params.w1[(row, col)] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (fd - analytic).abs() < 1e-6 * (1.0 + analytic.abs()),
                "selected weight ({row},{col}): fd {fd} vs analytic {analytic}"
            );
        }
    }

    // one optimizer step leaves unselected rows bit-identical
    let before = params.w1.clone();
    let mut adam = Adam::new(&params);
    train_step(&batch, &mut params, &mut adam, 0.05, 1).unwrap();
    for &pos in &unselected {
        for row in pos * units..(pos + 1) * units {
            for col in 0..cfg.dense_units {
                assert_eq!(
                    params.w1[(row, col)].to_bits(),
                    before[(row, col)].to_bits(),
                    "unselected weight moved at ({row},{col})"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "gradient check too slow: {elapsed:?}");
    pass(
        "gradient-masking-toy-scale",
        format!(
            "{zero_count} unselected weights: analytic 0, central differences < 1e-6, bit-identical after a step ({elapsed:.2?})"
        ),
    );
}


#[test]
fn a09_output_invariance() {
    let cfg = toy_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let params = Params::init(&cfg, &mut rng).unwrap();
    let mut max_delta: f64 = 0.0;
    for l in [1, 3, 5, 8] {
        let sf = toy_features(&cfg, plan_aligned(cfg.t, l).unwrap(), &mut rng);
        let raw = rnn_forward(&sf, &params);
        for label in 0..cfg.num_classes {
            let base = loss_from_raw(&raw, sf.plan(), &params, label).unwrap();
            let mut perturbed = raw.clone();
            for pos in 0..cfg.t {
                if !sf.plan().contains(pos) {
                    for v in perturbed.row_mut(pos).iter_mut() {
                        *v += rng.gen_range(-25.0..25.0);
                    }
                }
            }
            let after = loss_from_raw(&perturbed, sf.plan(), &params, label).unwrap();
            max_delta = max_delta.max((base - after).abs());
        }
    }
    assert!(
        max_delta < 1e-9,
        "perturbing non-plan recurrent outputs changed the loss by {max_delta}"
    );
    pass(
        "output-invariance",
        format!("max loss change {max_delta:.2e} < 1e-9"),
    );
}

#[test]
fn a10_probability_validity() {
    let cfg = toy_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let params = Params::init(&cfg, &mut rng).unwrap();
    let mut checked = 0;
    let lengths = [1, cfg.t / 2, cfg.t];
    for trial in 0..100 {
        let l = lengths[trial % lengths.len()];
        let sf = toy_features(&cfg, plan_aligned(cfg.t, l).unwrap(), &mut rng);
        let out = forward(&sf, &params).unwrap();
        let sum: f64 = out.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "probabilities sum to {sum}");
        assert!(out
            .probabilities()
            .iter()
            .all(|&p| (0.0..=1.0).contains(&p)));
        checked += 1;
    }
    pass(
        "probability-validity",
        format!("{checked} random inputs over l in {{1, t/2, t}}"),
    );
}

#[test]
fn a11_desk_scale_learning() {
    let start = Instant::now();
    let cfg = ClassifierConfig {
        t: 16,
        rnn_units: 16,
        dense_units: 16,
        dropout_keep: 1.0,
        num_classes: 2,
        routing: RoutingStrategy::Aligned,
        feature_dim: 16,
        input_hw: (64, 64),
    };
    let opts = PlantedPatternOptions::default();
    let mut data_rng = ChaCha8Rng::seed_from_u64(2024);
    let train_set = planted_set("train", 10, &opts, &mut data_rng);
    let held_out = planted_set("test", 10, &opts, &mut data_rng);
    let train_opts = TrainOptions {
        steps: 200,
        lr: 3e-3,
        batch_size: 5,
        seed: 7,
        workers: 2,
    };
    let to_samples = |volumes: &[ScanVolume], params: &Params| -> Vec<TrainSample> {
        volumes
            .iter()
            .map(|v| {
                let (h, w) = v.slices()[0].dims();
                let masks = vec![Mask::full(h, w); v.len()];
                TrainSample {
                    features: embed_and_sequence(
                        v,
                        &masks,
                        &cfg,
                        &params.extractor,
                        FeatureMode::Inference,
                        2,
                    )
                    .unwrap(),
                    label: v.label.unwrap().index(),
                }
            })
            .collect()
    };
    let run_once = || {
        let init = {
            let mut rng = ChaCha8Rng::seed_from_u64(train_opts.seed);
            Params::init(&cfg, &mut rng).unwrap()
        };
        let samples = to_samples(&train_set, &init);
        train(&samples, cfg.clone(), train_opts).unwrap()
    };
    let (params, log) = run_once();
    let (params2, log2) = run_once();
    assert_eq!(log, log2, "training log differs between identical runs");
    assert_eq!(params, params2, "trained parameters differ between identical runs");

    let pairs: Vec<(usize, usize)> = held_out
        .iter()
        .map(|v| {
            let (h, w) = v.slices()[0].dims();
            let masks = vec![Mask::full(h, w); v.len()];
            let out = classify_scan(v, &masks, &cfg, &params, 2).unwrap();
            (v.label.unwrap().index(), out.predicted_class())
        })
        .collect();
    let report = evaluate(&pairs, &ClassLabel::names());
    let elapsed = start.elapsed();
    assert!(
        report.macro_f1 >= 0.95,
        "held-out macro F1 {:.4} below 0.95",
        report.macro_f1
    );
    assert!(elapsed.as_secs() < 300, "learning run too slow: {elapsed:?}");
    pass(
        "desk-scale-learning",
        format!(
            "held-out macro F1 {:.2}% after {} steps in {elapsed:.1?}, reruns identical",
            report.macro_f1 * 100.0,
            log.len()
        ),
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ctseg")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn dir_digest(dir: &Path) -> Vec<(String, String)> {
    use sha2::{Digest, Sha256};
    let mut files: Vec<PathBuf> = walk_files(dir);
    files.sort();
    files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(dir).unwrap().display().to_string();
            let digest = format!("{:x}", Sha256::digest(fs::read(f).unwrap()));
            (rel, digest)
        })
        .collect()
}

fn walk_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk_files(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn a12_segment_and_train_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    // --- fixture: phantom scan with a fully configured fake backend
    let ph = two_lung_phantom();
    let data_root = tmp.path().join("data");
    let scan_dir = data_root.join("scan01");
    let volume = ScanVolume::new("scan01", vec![ph.slice.clone(); 3], None).unwrap();
    write_volume_pngs(&volume, &scan_dir).unwrap();
    let loaded = load_scan(&scan_dir, None).unwrap();
    let parts_dir = tmp.path().join("parts");
    fs::create_dir_all(&parts_dir).unwrap();
    for (name, mask) in [
        ("right.mask.png", &ph.right_lung),
        ("left.mask.png", &ph.left_lung),
        ("blob.mask.png", &ph.blob),
        ("bg.mask.png", &ph.background),
    ] {
        save_mask(mask, &parts_dir.join(name)).unwrap();
    }
    let mut fake_cfg = String::new();
    for slice in loaded.slices() {
        let fp = image_fingerprint(slice);
        for name in ["right.mask.png", "left.mask.png", "blob.mask.png", "bg.mask.png"] {
            fake_cfg.push_str(&format!("mask\t{fp}\t../parts/{name}\n"));
        }
    }
    let rv = crop_feature4(&crop_with_mask(&loaded.slices()[0], &ph.right_lung).unwrap());
    let lv = crop_feature4(&crop_with_mask(&loaded.slices()[0], &ph.left_lung).unwrap());
    fake_cfg.push_str(&format!("text\tright lung\t{} {} {} {}\n", rv[0], rv[1], rv[2], rv[3]));
    fake_cfg.push_str(&format!("text\tleft lung\t{} {} {} {}\n", lv[0], lv[1], lv[2], lv[3]));
    let fake_dir = tmp.path().join("fake");
    fs::create_dir_all(&fake_dir).unwrap();
    fs::write(fake_dir.join("fake.tsv"), fake_cfg).unwrap();
    let cfg_path = tmp.path().join("run.toml");
    fs::write(
        &cfg_path,
        format!(
            r#"[run]
backend = "fake"
fake_config = "{}"

[pipeline]
grid_n = 8

[[pipeline.targets]]
name = "right_lung"
prompts = ["right lung"]

[[pipeline.targets]]
name = "left_lung"
prompts = ["left lung"]

[classifier]
t = 8
rnn_units = 8
dense_units = 8
dropout_keep = 0.8
feature_dim = 8
input_height = 32
input_width = 32

[training]
learning_rate = 0.003
batch_size = 5
steps = 25
"#,
            fake_dir.join("fake.tsv").display()
        ),
    )
    .unwrap();

    // --- segment twice
    let mut seg_digests = Vec::new();
    for run in 0..2 {
        let out_root = tmp.path().join(format!("seg{run}"));
        let output = run_cli(&[
            "--config",
            cfg_path.to_str().unwrap(),
            "--data-root",
            data_root.to_str().unwrap(),
            "--output-root",
            out_root.to_str().unwrap(),
            "--workers",
            "3",
            "--seed",
            "5",
            "segment",
        ]);
        assert!(
            output.status.success(),
            "segment failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        seg_digests.push(dir_digest(&out_root));
    }
    assert_eq!(seg_digests[0], seg_digests[1], "segment outputs differ across reruns");
    assert!(!seg_digests[0].is_empty());

    // --- train twice on labeled planted volumes
    let opts = PlantedPatternOptions {
        min_len: 4,
        max_len: 8,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let train_root = tmp.path().join("train_data");
    let volumes = planted_set("scan", 6, &opts, &mut rng);
    let mut manifest = String::new();
    for v in &volumes {
        write_volume_pngs(v, &train_root.join(&v.scan_id)).unwrap();
        manifest.push_str(&format!("{}\t{}\n", v.scan_id, v.label.unwrap()));
    }
    let manifest_path = tmp.path().join("manifest.tsv");
    fs::write(&manifest_path, manifest).unwrap();
    let mut train_digests = Vec::new();
    for run in 0..2 {
        let out_root = tmp.path().join(format!("train{run}"));
        let output = run_cli(&[
            "--config",
            cfg_path.to_str().unwrap(),
            "--data-root",
            train_root.to_str().unwrap(),
            "--output-root",
            out_root.to_str().unwrap(),
            "--workers",
            "2",
            "--seed",
            "11",
            "train",
            "--manifest",
            manifest_path.to_str().unwrap(),
            "--unsegmented",
        ]);
        assert!(
            output.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        train_digests.push(dir_digest(&out_root));
    }
    assert_eq!(train_digests[0], train_digests[1], "train outputs differ across reruns");
    pass(
        "segment-and-train-determinism",
        format!(
            "{} segment artifacts and {} train artifacts byte-identical across reruns",
            seg_digests[0].len(),
            train_digests[0].len()
        ),
    );
}
