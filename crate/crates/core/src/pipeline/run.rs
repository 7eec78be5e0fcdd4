//! The full select -> activate -> fuse -> evaluate chain.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cam::{fuse_classes, generate_pair_map, read_pair_dump, LayerMode};
use crate::evaluate::{miou_per_class, EvalReport};
use crate::selection::{
    cluster_classes, select_by_rank, select_from_clusters, select_random, Clustering,
    KMeansConfig, RepresentativeSet,
};
use crate::similarity::{build_similarity, rank_classes, read_probability_log, symmetrize, SimilarityMatrix};
use crate::tensorio::{
    read_mask_pgm, resize_bilinear, write_map_pgm, write_tensor, ActivationMap, BinaryMask,
};
use crate::{Error, Result};

use super::config::{resolve, PipelineConfig, SelectionMode};
use super::manifest::{walk, Manifest};

/// One scored unit: an image and one class present in it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sample {
    pub image_id: String,
    pub class: usize,
}

impl Sample {
    pub fn key(&self) -> String {
        format!("{}/{}", self.image_id, self.class)
    }
}

/// Reads `<dir>/<image_id>/<class>.pgm` masks, sorted by image then class.
pub fn read_groundtruth(dir: &Path) -> Result<BTreeMap<Sample, BinaryMask>> {
    let mut out = BTreeMap::new();
    for rel in walk(dir)? {
        let Some((image_id, file)) = rel.split_once('/') else {
            continue;
        };
        let Some(class) = file.strip_suffix(".pgm").and_then(|c| c.parse().ok()) else {
            continue;
        };
        let mask = read_mask_pgm(dir.join(&rel))?;
        out.insert(
            Sample {
                image_id: image_id.to_string(),
                class,
            },
            mask,
        );
    }
    Ok(out)
}

/// Chooses the representative set of every class.
pub fn select_all(
    cfg: &PipelineConfig,
    sim: &SimilarityMatrix,
    clustering: Option<&Clustering>,
) -> Result<Vec<RepresentativeSet>> {
    let n = sim.n();
    (0..n)
        .map(|target| {
            Ok(match cfg.selection_mode {
                SelectionMode::Random => {
                    // one stream per target, all derived from the run seed
                    let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(target as u64);
                    select_random(n, target, cfg.num_clusters, seed)?
                }
                SelectionMode::RankA | SelectionMode::RankB | SelectionMode::Rank => {
                    select_by_rank(&rank_classes(sim, target)?, &cfg.positions())?
                }
                SelectionMode::Cluster => {
                    let c = clustering.ok_or_else(|| Error::Config("cluster mode needs a clustering".into()))?;
                    select_from_clusters(c, sim, target, cfg.cluster_k)?
                }
            })
        })
        .collect()
}

pub fn cluster_for(cfg: &PipelineConfig, sim: &SimilarityMatrix) -> Result<Clustering> {
    let kcfg = KMeansConfig {
        restarts: cfg.restarts,
        ..KMeansConfig::new(cfg.num_clusters, cfg.min_cluster_size, cfg.seed)
    };
    Ok(cluster_classes(&symmetrize(sim), &kcfg)?.clustering)
}

/// Pair map for one sample and comparison class, at the groundtruth size.
pub fn pair_map(
    dumps: &Path,
    sample: &Sample,
    comparison: usize,
    mode: LayerMode,
    size: (usize, usize),
) -> Result<ActivationMap> {
    let dump = read_pair_dump(dumps, &sample.image_id, sample.class, comparison)?;
    let map = generate_pair_map(&dump, mode, None)?;
    Ok(if map.dims() == size {
        map
    } else {
        resize_bilinear(&map, size.0, size.1)
    })
}

pub(crate) fn write_map(out: &Path, rel_stem: &str, map: &ActivationMap, manifest: &mut Manifest) -> Result<()> {
    let camt = format!("{rel_stem}.camt");
    let pgm = format!("{rel_stem}.pgm");
    if let Some(parent) = out.join(&camt).parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_tensor(&map.to_tensor(), out.join(&camt))?;
    write_map_pgm(map, out.join(&pgm))?;
    manifest.output(out, &camt)?;
    manifest.output(out, &pgm)
}

pub(crate) fn write_text(out: &Path, rel: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    let path = out.join(rel);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    manifest.output(out, rel)
}

pub(crate) fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotReport {
    /// Position in each target's representative list.
    pub slot: usize,
    pub report: EvalReport,
}

/// Result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub method: String,
    pub fused: EvalReport,
    /// Scores of each representative slot's pair maps on their own.
    pub single: Vec<SlotReport>,
    pub warnings: Vec<String>,
}

fn class_map(samples: &[Sample]) -> BTreeMap<String, usize> {
    samples.iter().map(|s| (s.key(), s.class)).collect()
}

/// Runs every stage and writes all artifacts plus `manifest.json` to
/// `cfg.paths.out` (relative paths resolve against `base`).
pub fn run_pipeline(cfg: &PipelineConfig, base: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    for (name, p) in [
        ("probabilities", &cfg.paths.probabilities),
        ("dumps", &cfg.paths.dumps),
        ("groundtruth", &cfg.paths.groundtruth),
        ("out", &cfg.paths.out),
    ] {
        if p.is_empty() {
            return Err(Error::Config(format!("paths.{name} is empty")));
        }
    }
    let probs = resolve(base, &cfg.paths.probabilities);
    let dumps = resolve(base, &cfg.paths.dumps);
    let gt_dir = resolve(base, &cfg.paths.groundtruth);
    let out = resolve(base, &cfg.paths.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let mut manifest = Manifest::new("run");
    manifest.method = Some(cfg.method_label());
    manifest.config_hash = Some(cfg.hash());
    manifest.input(&cfg.paths.probabilities, &probs)?;
    manifest.input_tree(&cfg.paths.dumps, &dumps)?;
    manifest.input_tree(&cfg.paths.groundtruth, &gt_dir)?;

    // S: similarity, clustering, representatives
    let (records, n) = read_probability_log(&probs)?;
    if n != cfg.class_names.len() {
        return Err(Error::Config(format!(
            "{}: {n} probability columns but {} class names",
            probs.display(),
            cfg.class_names.len()
        )));
    }
    let built = build_similarity(&records, n)?;
    let sim = built.matrix.with_class_names(cfg.class_names.clone())?;
    let warnings: Vec<String> = built
        .empty_classes
        .iter()
        .map(|&c| format!("class {} has no probability records", cfg.class_names[c]))
        .collect();
    manifest.warnings = warnings.clone();
    crate::similarity::write_similarity_csv(&sim, out.join("similarity.csv"))?;
    manifest.output(&out, "similarity.csv")?;

    let clustering = match cfg.selection_mode {
        SelectionMode::Cluster => {
            let c = cluster_for(cfg, &sim)?;
            write_text(&out, "clusters.json", &json(&c), &mut manifest)?;
            Some(c)
        }
        _ => None,
    };
    let reps = select_all(cfg, &sim, clustering.as_ref())?;
    write_text(&out, "representatives.json", &json(&reps), &mut manifest)?;

    // A: pair maps; F: fusion
    let gts = read_groundtruth(&gt_dir)?;
    let samples: Vec<Sample> = gts.keys().cloned().collect();
    let slots = reps.iter().map(|r| r.members.len()).max().unwrap_or(0);
    let mut fused = BTreeMap::new();
    let mut per_slot = vec![BTreeMap::new(); slots];
    for sample in &samples {
        if sample.class >= n {
            return Err(Error::Config(format!(
                "groundtruth {} names class {} of {n}",
                sample.key(),
                sample.class
            )));
        }
        let size = gts[sample].dims();
        let mut maps = Vec::new();
        for (slot, &comparison) in reps[sample.class].members.iter().enumerate() {
            let map = pair_map(&dumps, sample, comparison, cfg.layer_mode, size)?;
            let stem = format!("maps/{}/{}_vs_{}", sample.image_id, sample.class, comparison);
            write_map(&out, &stem, &map, &mut manifest)?;
            per_slot[slot].insert(sample.key(), map.clone());
            maps.push(map);
        }
        let f = fuse_classes(&maps)?;
        write_map(&out, &format!("fused/{}", sample.key()), &f, &mut manifest)?;
        fused.insert(sample.key(), f);
    }

    // evaluation
    let gt_by_key: BTreeMap<String, BinaryMask> =
        gts.iter().map(|(s, m)| (s.key(), m.clone())).collect();
    let class_of = class_map(&samples);
    let report = miou_per_class(&fused, &gt_by_key, &class_of, &cfg.class_names, cfg.threshold)?;
    write_text(&out, "report.csv", &report.to_csv(), &mut manifest)?;
    write_text(&out, "report.json", &report.to_json(), &mut manifest)?;
    let single = per_slot
        .iter()
        .enumerate()
        .map(|(slot, maps)| {
            Ok(SlotReport {
                slot,
                report: miou_per_class(maps, &gt_by_key, &class_of, &cfg.class_names, cfg.threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(&out, "single_pair_reports.json", &json(&single), &mut manifest)?;
    write_text(&out, "config.json", &cfg.to_json(), &mut manifest)?;
    manifest.write(&out)?;

    Ok(RunSummary {
        out_dir: out,
        method: cfg.method_label(),
        fused: report,
        single,
        warnings,
    })
}
