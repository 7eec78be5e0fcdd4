//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use camsel::cam::{grad_cam_layer, LayerDump};
use camsel::evaluate::{iou, read_pair_matrix_csv, read_reference_csv, threshold_map, top1_report, topk_select_from_matrix};
use camsel::pipeline::{run_pipeline, SyntheticScenario};
use camsel::selection::{cluster_classes, cluster_classes_observed, KMeansConfig};
use camsel::tensorio::Tensor;
use common::*;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn table1_top1() -> Outcome {
    let start = Instant::now();
    let pm = read_pair_matrix_csv(fixture("table1.csv")).map_err(|e| e.to_string())?;
    let report = top1_report(&pm);
    let elapsed = start.elapsed();
    let (names, rows) = read_reference_csv(fixture("table1_reference.csv")).map_err(|e| e.to_string())?;
    let row = |label: &str| rows.iter().find(|r| r.label == label).ok_or(format!("no {label} row"));
    let top1 = row("Top1")?;
    check(report.per_class.len() == 20, "expected 20 classes")?;
    let mut worst = 0.0f64;
    for (name, &published) in names.iter().zip(&top1.values) {
        let got = report.get(name).ok_or(format!("class {name} missing"))?.miou;
        worst = worst.max((got - published).abs());
    }
    check(worst <= 1e-4, format!("per-class deviation {worst:.2e} > 1e-4"))?;
    check(
        (report.average - 0.3986).abs() <= 5e-4,
        format!("average {:.5} not 0.3986 +- 5e-4", report.average),
    )?;
    let gc = row("Grad-CAM")?;
    let gc_mean = gc.values.iter().sum::<f64>() / gc.values.len() as f64;
    check(
        (gc_mean - 0.2724).abs() <= 5e-4 && (gc.average - 0.2724).abs() <= 5e-4,
        format!("Grad-CAM row mean {gc_mean:.5}"),
    )?;
    let bird = pm.class_index("bird").unwrap();
    let dog = pm.class_index("dog").unwrap();
    check(topk_select_from_matrix(&pm, 0, 1).map_err(|e| e.to_string())? == vec![bird], "aeroplane best row is not bird")?;
    check(topk_select_from_matrix(&pm, 1, 1).map_err(|e| e.to_string())? == vec![dog], "bicycle best row is not dog")?;
    check(elapsed.as_secs_f64() < 1.0, format!("took {elapsed:?}"))?;
    Ok(format!(
        "20/20 within {worst:.1e}, avg {:.4}, Grad-CAM row mean {gc_mean:.4} (Top1 - Grad-CAM = {:.4}), {:.1} ms",
        report.average,
        report.average - gc_mean,
        elapsed.as_secs_f64() * 1e3
    ))
}

fn grad_cam_oracle() -> Outcome {
    let mut r = rng(2024);
    let dumps = 120;
    let mut worst = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..dumps {
        let c = r.gen_range(1..=8);
        let s = r.gen_range(1..=16);
        let d = random_dump(&mut r, 1, c, s, s);
        let got = grad_cam_layer(&d).map_err(|e| e.to_string())?;
        for (a, b) in got.values().iter().zip(brute_grad_cam(&d)) {
            worst = worst.max((a - b).abs());
        }
        for f in [0.5f32, 2.0, 10.0] {
            let g: Vec<f32> = d.gradients().data().iter().map(|v| v * f).collect();
            let scaled = LayerDump::new(1, d.features().clone(), Tensor::new(vec![c, s, s], g).unwrap())
                .map_err(|e| e.to_string())?;
            let other = grad_cam_layer(&scaled).map_err(|e| e.to_string())?;
            for (a, b) in got.values().iter().zip(other.values()) {
                worst_scale = worst_scale.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-6, format!("oracle deviation {worst:.2e}"))?;
    check(worst_scale <= 1e-6, format!("scale deviation {worst_scale:.2e}"))?;
    Ok(format!(
        "{dumps} dumps: max oracle deviation {worst:.1e}, max scale deviation {worst_scale:.1e} over {{0.5, 2, 10}}"
    ))
}

fn iou_exhaustive() -> Outcome {
    let mut pairs = 0usize;
    for p in 0u32..512 {
        let pm = mask_from_bits(3, 3, p);
        for g in 0u32..512 {
            let gm = mask_from_bits(3, 3, g);
            let union = (p | g).count_ones();
            let expect = (union > 0).then(|| (p & g).count_ones() as f64 / union as f64);
            let got = iou(&pm, &gm).map_err(|e| e.to_string())?;
            check(got == expect, format!("masks {p:09b}/{g:09b}: {got:?} vs {expect:?}"))?;
            pairs += 1;
        }
    }
    let mut r = rng(99);
    for i in 0..100 {
        let m = random_map(&mut r, 8, 8);
        let mut ts: Vec<f64> = (0..10).map(|_| r.gen_range(0.0..=1.0)).collect();
        ts.push(0.15);
        ts.sort_by(f64::total_cmp);
        for w in ts.windows(2) {
            check(
                threshold_map(&m, w[1]).is_subset_of(&threshold_map(&m, w[0])),
                format!("map {i}: mask({}) not within mask({})", w[1], w[0]),
            )?;
        }
    }
    Ok(format!("{pairs} mask pairs exact; threshold monotone on 100 maps"))
}

fn clustering_recovery() -> Outcome {
    let mut parts = Vec::new();
    for (label, blocks) in [("two-block", vec![10, 10]), ("four-block", vec![5, 5, 5, 5])] {
        let (planted, sim) = planted_blocks(&blocks);
        let k = blocks.len();
        let mut hits = 0;
        let mut single_start = 0;
        for seed in 0..100 {
            let out = cluster_classes(&sim, &KMeansConfig::new(k, 4, seed)).map_err(|e| e.to_string())?;
            hits += co_membership_equal(&out.clustering.assignment, &planted) as usize;
            let mut one = KMeansConfig::new(k, 4, seed);
            one.restarts = 1;
            let out = cluster_classes(&sim, &one).map_err(|e| e.to_string())?;
            single_start += co_membership_equal(&out.clustering.assignment, &planted) as usize;
        }
        check(hits >= 95, format!("{label}: {hits}/100 recovered"))?;
        parts.push(format!("{label} {hits}/100 (single start {single_start}/100)"));
    }
    let (_, sim) = planted_blocks(&[5, 5, 5, 5]);
    let mut moves = 0;
    let mut violations = 0;
    for seed in 0..20 {
        cluster_classes_observed(&sim, &KMeansConfig::new(4, 4, seed), |_, a| {
            moves += 1;
            let mut sizes = [0; 4];
            for &c in a {
                sizes[c] += 1;
            }
            violations += sizes.iter().any(|&s| s < 4) as usize;
        })
        .map_err(|e| e.to_string())?;
    }
    check(violations == 0, format!("{violations} moves broke min_size"))?;
    parts.push(format!("min_size held after all {moves} observed moves"));
    Ok(parts.join("; "))
}

fn end_to_end() -> Outcome {
    let mut parts = Vec::new();
    for (groups, size, seed) in [(3, 4, 7), (4, 5, 11)] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let scenario = SyntheticScenario::complementary(groups, size, 16 + 4 * (groups - 3));
        let cfg = scenario.write(seed, dir.path()).map_err(|e| e.to_string())?;
        let summary = run_pipeline(&cfg, dir.path()).map_err(|e| e.to_string())?;
        let fused = summary.fused.average;
        let best_single = summary.single.iter().map(|s| s.report.average).fold(0.0, f64::max);
        check(
            summary.single.iter().all(|s| fused > s.report.average),
            format!("{groups} parts: fused {fused} not above every single-pair score"),
        )?;
        check(
            (fused - 1.0).abs() <= 1.0 / 255.0,
            format!("{groups} parts: fused mIoU {fused} not 1.0 +- 1/255"),
        )?;
        parts.push(format!(
            "{groups} parts ({} classes): fused {fused:.4} vs best single {best_single:.4}",
            scenario.n()
        ));
    }
    Ok(parts.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    SyntheticScenario::complementary(3, 4, 16)
        .write(5, dir.path())
        .map_err(|e| e.to_string())?;
    let config = dir.path().join("synth.json");
    let run = |mode: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_camsel"))
            .args(["run", "--config"])
            .arg(&config)
            .args(["--mode", mode])
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())?;
        let run_dir = dir.path().join("run");
        let files = camsel::pipeline::manifest::walk(&run_dir).map_err(|e| e.to_string())?;
        let snapshot = files
            .into_iter()
            .map(|f| {
                let bytes = std::fs::read(run_dir.join(&f)).unwrap();
                (f, bytes)
            })
            .collect();
        std::fs::remove_dir_all(&run_dir).map_err(|e| e.to_string())?;
        Ok(snapshot)
    };
    let mut compared = 0;
    for mode in ["cluster", "random"] {
        let a = run(mode)?;
        let b = run(mode)?;
        check(a.len() == b.len(), "different file sets")?;
        for ((fa, ba), (fb, bb)) in a.iter().zip(&b) {
            check(fa == fb && ba == bb, format!("{mode}: {fa} differs between runs"))?;
        }
        for needed in ["manifest.json", "report.csv", "report.json"] {
            check(a.iter().any(|(f, _)| f == needed), format!("{needed} not written"))?;
        }
        compared += a.len();
    }
    Ok(format!("{compared} output files byte-identical across repeated runs (cluster and random modes)"))
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("table1-top1", table1_top1),
        ("grad-cam-oracle", grad_cam_oracle),
        ("iou-exhaustive", iou_exhaustive),
        ("clustering-recovery", clustering_recovery),
        ("end-to-end-complementarity", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
