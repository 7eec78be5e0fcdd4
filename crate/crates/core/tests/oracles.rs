//! Library routes checked against independent reference computations.
#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeMap;

use camsel::cam::{fuse_classes, fuse_layers, generate_pair_map, grad_cam_layer, LayerMode, PairDump};
use camsel::evaluate::{iou, miou_per_class, threshold_map, topk_fused_eval, top1_report, PairMatrix};
use camsel::selection::{cluster_candidates, select_by_rank, select_from_clusters, Clustering};
use camsel::similarity::{build_similarity, rank_classes, symmetrize, ProbabilityRecord, SimilarityMatrix};
use camsel::tensorio::{resize_bilinear, ActivationMap, BinaryMask};
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn names(n: usize) -> Vec<String> {
    camsel::similarity::default_class_names(n)
}

fn random_probs(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

#[test]
fn resize_matches_textbook_bilinear() {
    let mut r = rng(11);
    for _ in 0..50 {
        let (sh, sw) = (r.gen_range(1..7), r.gen_range(1..7));
        let (h, w) = (r.gen_range(1..12), r.gen_range(1..12));
        let m = random_map(&mut r, sh, sw);
        let got = resize_bilinear(&m, h, w);
        assert_close(got.values(), &brute_resize(m.values(), sh, sw, h, w), 1e-6);
    }
}

#[test]
fn similarity_matches_accumulation_oracle() {
    let mut r = rng(3);
    let n = 4;
    let records: Vec<ProbabilityRecord> = (0..10)
        .map(|k| ProbabilityRecord {
            image_id: format!("im{k}"),
            true_class: r.gen_range(0..n),
            probs: random_probs(&mut r, n),
        })
        .collect();
    let mut expect = [[0.0f64; 4]; 4];
    for rec in &records {
        for j in 0..n {
            if j != rec.true_class {
                expect[rec.true_class][j] += rec.probs[j];
            }
        }
    }
    let b = build_similarity(&records, n).unwrap().matrix;
    for i in 0..n {
        assert_close(b.row(i), &expect[i], 1e-6);
    }
}

#[test]
fn ranking_matches_sort_oracle() {
    let mut r = rng(5);
    for _ in 0..30 {
        let n = r.gen_range(2..10);
        // coarse values so ties happen
        let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0..4) as f64).collect();
        let b = SimilarityMatrix::new(names(n), v).unwrap();
        let t = r.gen_range(0..n);
        let mut pairs: Vec<(f64, usize)> = (0..n).filter(|&j| j != t).map(|j| (-b.get(t, j), j)).collect();
        pairs.sort_by(|a, c| a.partial_cmp(c).unwrap());
        let expect: Vec<usize> = pairs.into_iter().map(|(_, j)| j).collect();
        assert_eq!(rank_classes(&b, t).unwrap().order, expect);
    }
}

#[test]
fn symmetrize_equals_its_transpose() {
    let mut r = rng(8);
    let n = 7;
    let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..5.0)).collect();
    let b = SimilarityMatrix::new(names(n), v).unwrap();
    let s = symmetrize(&b);
    for i in 0..n {
        for j in 0..n {
            assert_eq!(s.get(i, j), s.get(j, i));
            if i != j {
                assert!((s.get(i, j) - (b.get(i, j) + b.get(j, i)) / 2.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn rank_positions_one_to_n_are_the_top_n() {
    let mut r = rng(1);
    let n = 9;
    let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect();
    let b = SimilarityMatrix::new(names(n), v).unwrap();
    let ranking = rank_classes(&b, 2).unwrap();
    let set = select_by_rank(&ranking, &[1, 2, 3, 4]).unwrap();
    assert_eq!(set.members, ranking.order[..4].to_vec());
}

#[test]
fn cluster_selection_matches_sort_and_index_oracle() {
    let mut r = rng(21);
    let n = 12;
    for trial in 0..20 {
        let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect();
        let b = SimilarityMatrix::new(names(n), v).unwrap();
        let mut assignment: Vec<usize> = (0..n).map(|i| i % 3).collect();
        assignment.shuffle(&mut r);
        let clustering = Clustering {
            n,
            num_clusters: 3,
            min_size: 4,
            seed: trial,
            assignment: assignment.clone(),
            class_names: names(n),
        };
        let target = r.gen_range(0..n);
        let got = select_from_clusters(&clustering, &b, target, 2).unwrap();
        let mut expect = Vec::new();
        for cl in 0..3 {
            let mut cands: Vec<usize> = (0..n).filter(|&c| assignment[c] == cl && c != target).collect();
            // stable sort on descending similarity keeps ascending index on ties
            cands.sort_by(|&a, &c| b.get(target, c).partial_cmp(&b.get(target, a)).unwrap());
            expect.push(cands[1.min(cands.len() - 1)]);
        }
        assert_eq!(got.members, expect);
    }
}

#[test]
fn grad_cam_matches_pixel_oracle() {
    let mut r = rng(2);
    for _ in 0..30 {
        let c = r.gen_range(1..5);
        let (h, w) = (r.gen_range(1..9), r.gen_range(1..9));
        let d = random_dump(&mut r, 1, c, h, w);
        assert_close(grad_cam_layer(&d).unwrap().values(), &brute_grad_cam(&d), 1e-6);
    }
}

#[test]
fn fuse_layers_matches_formula_oracle() {
    let mut r = rng(4);
    let maps: Vec<ActivationMap> = (0..4).map(|_| random_map(&mut r, 8, 8)).collect();
    let mut raw = vec![0.0; 64];
    for p in 0..64 {
        let s: f64 = maps.iter().map(|m| m.values()[p]).sum();
        raw[p] = s * maps[3].values()[p];
    }
    assert_close(fuse_layers(&maps, 8, 8).unwrap().values(), &normalize(&raw), 1e-6);
}

#[test]
fn fuse_classes_matches_mean_oracle() {
    let mut r = rng(6);
    let maps: Vec<ActivationMap> = (0..4).map(|_| random_map(&mut r, 5, 7)).collect();
    let mean: Vec<f64> = (0..35)
        .map(|p| maps.iter().map(|m| m.values()[p]).sum::<f64>() / 4.0)
        .collect();
    assert_close(fuse_classes(&maps).unwrap().values(), &normalize(&mean), 1e-6);
}

#[test]
fn pair_map_is_the_composition_of_both_oracles() {
    let mut r = rng(10);
    let layers = vec![
        random_dump(&mut r, 1, 3, 8, 8),
        random_dump(&mut r, 2, 4, 4, 4),
        random_dump(&mut r, 3, 2, 2, 2),
    ];
    let p = PairDump::new("im", 0, 1, layers.clone()).unwrap();
    let layer_maps: Vec<Vec<f64>> = layers.iter().map(brute_grad_cam).collect();
    let sizes = [(8, 8), (4, 4), (2, 2)];
    let up: Vec<Vec<f64>> = layer_maps
        .iter()
        .zip(sizes)
        .map(|(m, (h, w))| brute_resize(m, h, w, 8, 8))
        .collect();
    let raw: Vec<f64> = (0..64).map(|i| (up[0][i] + up[1][i] + up[2][i]) * up[2][i]).collect();
    let got = generate_pair_map(&p, LayerMode::Multi, None).unwrap();
    assert_close(got.values(), &normalize(&raw), 1e-6);

    let last = generate_pair_map(&p, LayerMode::Final, None).unwrap();
    assert_close(last.values(), &up[2], 1e-6);
}

#[test]
fn threshold_matches_elementwise_oracle() {
    let mut r = rng(12);
    for _ in 0..20 {
        let m = random_map(&mut r, 6, 5);
        let t = r.gen_range(0.0..=1.0);
        let mask = threshold_map(&m, t);
        for (i, &v) in m.values().iter().enumerate() {
            assert_eq!(mask.bits()[i], v >= t);
        }
    }
}

#[test]
fn iou_spec_example_via_sets() {
    let gt = mask_from_bits(2, 4, 0b0000_1111);
    let pred = mask_from_bits(2, 4, 0b0001_0011);
    assert_eq!(iou(&pred, &gt).unwrap(), Some(0.4));
    assert_eq!(set_iou(&pred, &gt), Some(0.4));
}

#[test]
fn miou_matches_flat_recomputation() {
    let mut r = rng(14);
    let n = 3;
    let mut maps = BTreeMap::new();
    let mut gts = BTreeMap::new();
    let mut class_of = BTreeMap::new();
    for k in 0..15 {
        let key = format!("im{k:02}");
        maps.insert(key.clone(), random_map(&mut r, 4, 4));
        let bits: u32 = if k == 3 { 0 } else { r.gen_range(0..1 << 16) };
        gts.insert(key.clone(), mask_from_bits(4, 4, bits));
        class_of.insert(key, k % n);
    }
    // flat oracle: list of (class, iou) then group
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (key, m) in &maps {
        let pred = BinaryMask::new(4, 4, m.values().iter().map(|&v| v >= 0.15).collect()).unwrap();
        if let Some(v) = set_iou(&pred, &gts[key]) {
            rows.push((class_of[key], v));
        }
    }
    let mut means = Vec::new();
    for c in 0..n {
        let vals: Vec<f64> = rows.iter().filter(|(k, _)| *k == c).map(|(_, v)| *v).collect();
        if !vals.is_empty() {
            means.push((c, vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    let report = miou_per_class(&maps, &gts, &class_of, &names(n), 0.15).unwrap();
    assert_eq!(report.per_class.len(), means.len());
    for (s, (c, m)) in report.per_class.iter().zip(&means) {
        assert_eq!(s.index, *c);
        assert!((s.miou - m).abs() < 1e-12);
    }
    let avg = means.iter().map(|(_, m)| m).sum::<f64>() / means.len() as f64;
    assert!((report.average - avg).abs() < 1e-12);
}

/// Four classes whose objects (columns 0..6 of 8) are two halves; comparison
/// class `(c + 1) % 4` lights the left half and `(c + 2) % 4` the right half.
#[test]
fn top2_beats_top1_on_planted_complementary_parts() {
    let n = 4;
    let (h, w) = (4, 8);
    let half = |left: bool| {
        let lit = |x: usize| if left { x < 3 } else { (3..6).contains(&x) };
        let v = (0..h * w).map(|i| if lit(i % w) { 1.0 } else { 0.0 }).collect();
        ActivationMap::new(h, w, v).unwrap()
    };
    let full = BinaryMask::new(h, w, (0..h * w).map(|i| i % w < 6).collect()).unwrap();
    let mut pair_maps = BTreeMap::new();
    let mut gts = BTreeMap::new();
    let mut class_of = BTreeMap::new();
    let mut pm_values = vec![None; n * n];
    for c in 0..n {
        let key = format!("im{c}");
        gts.insert(key.clone(), full.clone());
        class_of.insert(key.clone(), c);
        for s in (0..n).filter(|&s| s != c) {
            let m = if s == (c + 1) % n {
                half(true)
            } else if s == (c + 2) % n {
                half(false)
            } else {
                ActivationMap::zeros(h, w)
            };
            pm_values[s * n + c] = Some(if m.is_zero() { 0.0 } else { 0.5 });
            pair_maps.insert((key.clone(), s), m);
        }
    }
    let pm = PairMatrix::new(names(n), pm_values).unwrap();
    let top1 = top1_report(&pm).average;
    let k1 = topk_fused_eval(1, &pm, &pair_maps, &gts, &class_of, 0.15).unwrap();
    let k2 = topk_fused_eval(2, &pm, &pair_maps, &gts, &class_of, 0.15).unwrap();
    assert!((k1.average - top1).abs() < 1e-12);
    assert!((k2.average - 1.0).abs() < 1e-12);
    assert!(k2.average > top1);
}

#[test]
fn candidates_cover_every_non_target_class() {
    let mut r = rng(30);
    let n = 10;
    let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect();
    let b = SimilarityMatrix::new(names(n), v).unwrap();
    let clustering = Clustering {
        n,
        num_clusters: 2,
        min_size: 2,
        seed: 0,
        assignment: (0..n).map(|i| i % 2).collect(),
        class_names: names(n),
    };
    let target = 4;
    let cands = cluster_candidates(&clustering, &b, target).unwrap();
    let max = cands.iter().map(Vec::len).max().unwrap();
    let mut seen: Vec<usize> = (1..=max)
        .flat_map(|k| select_from_clusters(&clustering, &b, target, k).unwrap().members)
        .collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen, (0..n).filter(|&c| c != target).collect::<Vec<_>>());
}
