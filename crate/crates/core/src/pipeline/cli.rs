//! The `camsel` command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cam::{fuse_classes, generate_pair_map, list_pair_dumps, read_pair_dump, LayerMode};
use crate::evaluate::{
    miou_per_class, read_pair_matrix_csv, read_reference_csv, top1_report, topk_fused_eval,
    topk_select_from_matrix, DEFAULT_THRESHOLD,
};
use crate::selection::{
    cluster_classes, Clustering, KMeansConfig, RepresentativeSet, DEFAULT_MAX_ITER,
    DEFAULT_RESTARTS,
};
use crate::similarity::{
    build_similarity, default_class_names, read_probability_log, read_similarity_csv, symmetrize,
    write_similarity_csv,
};
use crate::tensorio::{read_tensor, ActivationMap, BinaryMask};
use crate::{Error, Result};

use super::config::{Overrides, PipelineConfig, SelectionMode};
use super::manifest::{walk, Manifest};
use super::run::{json, read_groundtruth, run_pipeline, select_all, write_map, write_text, Sample};
use super::scenario::SyntheticScenario;

#[derive(Debug, Parser)]
#[command(name = "camsel", version, about = "Representative-class CAM selection and fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the class-similarity matrix from a probability log.
    BuildSim(BuildSimArgs),
    /// Cluster classes by mean pairwise similarity.
    Cluster(ClusterArgs),
    /// Choose representative comparison classes per target.
    Select(SelectArgs),
    /// Compute a pair map for every pair dump.
    Cam(CamArgs),
    /// Fuse pair maps over each target's representatives.
    Fuse(FuseArgs),
    /// Score fused maps against groundtruth masks.
    Eval(EvalArgs),
    /// Top-k analysis over a pairwise mIoU table.
    Table1(Table1Args),
    /// Write a synthetic scenario with a known answer.
    Generate(GenerateArgs),
    /// Run the whole chain from a config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct BuildSimArgs {
    #[arg(long)]
    pub probs: PathBuf,
    /// Comma-separated class names (default: class_0, class_1, ...).
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub sim: PathBuf,
    /// Number of clusters.
    #[arg(long = "n", default_value_t = 4)]
    pub num_clusters: usize,
    #[arg(long, default_value_t = 4)]
    pub min_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub sim: PathBuf,
    #[arg(long, default_value = "cluster")]
    pub mode: SelectionMode,
    /// clusters.json, required for `--mode cluster`.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// k' for cluster mode.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=4))]
    pub k: u64,
    /// 1-based positions for `--mode rank`.
    #[arg(long, value_delimiter = ',')]
    pub positions: Option<Vec<usize>>,
    /// Representatives per target for random mode.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only this target class (default: every class).
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub dumps: PathBuf,
    #[arg(long, default_value = "multi")]
    pub layer_mode: LayerMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory of `<image>/<target>_vs_<comparison>.camt` pair maps.
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub representatives: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `<image>/<class>.camt` fused maps.
    #[arg(long)]
    pub fused: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub top: usize,
    /// Published summary rows to compare against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Pair maps (`<image>/<target>_vs_<comparison>.camt`) for k > 1 scoring.
    #[arg(long, requires = "gt")]
    pub pair_maps: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario JSON; without it the complementary preset is used.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub groups: usize,
    #[arg(long, default_value_t = 4)]
    pub group_size: usize,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub mode: Option<SelectionMode>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=4))]
    pub k: Option<u64>,
    #[arg(long)]
    pub layer_mode: Option<LayerMode>,
    /// Output directory (relative to the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn label(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// `(image_id, target, comparison)` for `<image>/<t>_vs_<s>.camt`.
fn parse_pair_map_path(rel: &str) -> Option<(String, usize, usize)> {
    let (image, file) = rel.split_once('/')?;
    let (t, s) = file.strip_suffix(".camt")?.split_once("_vs_")?;
    Some((image.to_string(), t.parse().ok()?, s.parse().ok()?))
}

fn read_map(path: &Path) -> Result<ActivationMap> {
    Ok(ActivationMap::from_tensor(&read_tensor(path)?).map_err(|e| e.in_file(path))?)
}

fn names_for(classes: Option<Vec<String>>, n: usize) -> Result<Vec<String>> {
    match classes {
        Some(names) if names.len() != n => Err(Error::Config(format!(
            "{} class names for {n} classes",
            names.len()
        ))),
        Some(names) => Ok(names),
        None => Ok(default_class_names(n)),
    }
}

/// Executes a parsed command; returns the one-line summary.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::BuildSim(a) => build_sim(a),
        Command::Cluster(a) => cluster(a),
        Command::Select(a) => select(a),
        Command::Cam(a) => cam(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a),
        Command::Table1(a) => table1(a),
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
    }
}

fn build_sim(a: BuildSimArgs) -> Result<String> {
    let (records, n) = read_probability_log(&a.probs)?;
    let built = build_similarity(&records, n)?;
    let sim = built.matrix.with_class_names(names_for(a.classes, n)?)?;
    mkdir(&a.out)?;
    let mut m = Manifest::new("build-sim");
    m.input(label(&a.probs), &a.probs)?;
    m.warnings = built
        .empty_classes
        .iter()
        .map(|&c| format!("class {} has no probability records", sim.class_names()[c]))
        .collect();
    write_similarity_csv(&sim, a.out.join("similarity.csv"))?;
    m.output(&a.out, "similarity.csv")?;
    let warnings = m.warnings.len();
    m.write(&a.out)?;
    Ok(format!(
        "build-sim: {} records, {n} classes, {warnings} warnings -> {}",
        records.len(),
        a.out.join("similarity.csv").display()
    ))
}

fn cluster(a: ClusterArgs) -> Result<String> {
    let sim = read_similarity_csv(&a.sim)?;
    let cfg = KMeansConfig {
        max_iter: a.max_iter,
        restarts: a.restarts,
        ..KMeansConfig::new(a.num_clusters, a.min_size, a.seed)
    };
    let outcome = cluster_classes(&symmetrize(&sim), &cfg)?;
    mkdir(&a.out)?;
    let mut m = Manifest::new("cluster");
    m.input(label(&a.sim), &a.sim)?;
    write_text(&a.out, "clusters.json", &json(&outcome.clustering), &mut m)?;
    m.write(&a.out)?;
    Ok(format!(
        "cluster: sizes {:?}, {} passes (restart {}), converged={}",
        outcome.clustering.sizes(),
        outcome.passes,
        outcome.restart,
        outcome.converged
    ))
}

fn select(a: SelectArgs) -> Result<String> {
    let sim = read_similarity_csv(&a.sim)?;
    let mut cfg = PipelineConfig::new(sim.class_names().to_vec());
    cfg.selection_mode = a.mode;
    cfg.cluster_k = a.k as usize;
    cfg.rank_positions = a.positions.clone();
    cfg.num_clusters = a.count;
    cfg.seed = a.seed;
    cfg.validate()?;
    let mut m = Manifest::new("select");
    m.input(label(&a.sim), &a.sim)?;
    let clustering: Option<Clustering> = match (a.mode, &a.clusters) {
        (SelectionMode::Cluster, Some(p)) => {
            m.input(label(p), p)?;
            Some(read_json(p)?)
        }
        (SelectionMode::Cluster, None) => {
            return Err(Error::Config("--mode cluster needs --clusters".into()))
        }
        _ => None,
    };
    let mut reps = select_all(&cfg, &sim, clustering.as_ref())?;
    if let Some(t) = a.target {
        reps.retain(|r| r.target == t);
        if reps.is_empty() {
            return Err(Error::Config(format!("target {t} out of range")));
        }
    }
    mkdir(&a.out)?;
    write_text(&a.out, "representatives.json", &json(&reps), &mut m)?;
    m.write(&a.out)?;
    let first = &reps[0];
    Ok(format!(
        "select: {} targets, mode {:?}; class {} -> {:?}",
        reps.len(),
        a.mode,
        first.target,
        first.members
    ))
}

fn cam(a: CamArgs) -> Result<String> {
    let keys = list_pair_dumps(&a.dumps)?;
    mkdir(&a.out)?;
    let mut m = Manifest::new("cam");
    m.input_tree(&label(&a.dumps), &a.dumps)?;
    for k in &keys {
        let dump = read_pair_dump(&a.dumps, &k.image_id, k.target, k.comparison)?;
        let map = generate_pair_map(&dump, a.layer_mode, None)?;
        let stem = format!("maps/{}/{}_vs_{}", k.image_id, k.target, k.comparison);
        write_map(&a.out, &stem, &map, &mut m)?;
    }
    m.write(&a.out)?;
    Ok(format!("cam: {} pair maps -> {}", keys.len(), a.out.join("maps").display()))
}

fn fuse(a: FuseArgs) -> Result<String> {
    let reps: Vec<RepresentativeSet> = read_json(&a.representatives)?;
    let by_target: BTreeMap<usize, &RepresentativeSet> = reps.iter().map(|r| (r.target, r)).collect();
    let mut m = Manifest::new("fuse");
    m.input(label(&a.representatives), &a.representatives)?;
    let mut samples = BTreeMap::new();
    for rel in walk(&a.maps)? {
        if let Some((image, t, _)) = parse_pair_map_path(&rel) {
            samples.insert(Sample { image_id: image, class: t }, ());
        }
    }
    mkdir(&a.out)?;
    let mut fused = 0;
    for sample in samples.keys() {
        let Some(set) = by_target.get(&sample.class) else {
            continue;
        };
        let mut maps = Vec::new();
        for &s in &set.members {
            let rel = format!("{}/{}_vs_{}.camt", sample.image_id, sample.class, s);
            let path = a.maps.join(&rel);
            m.input(format!("{}/{rel}", label(&a.maps)), &path)?;
            maps.push(read_map(&path)?);
        }
        let f = fuse_classes(&maps)?;
        write_map(&a.out, &format!("fused/{}", sample.key()), &f, &mut m)?;
        fused += 1;
    }
    m.write(&a.out)?;
    Ok(format!("fuse: {fused} fused maps -> {}", a.out.join("fused").display()))
}

fn eval(a: EvalArgs) -> Result<String> {
    let gts = read_groundtruth(&a.gt)?;
    let mut m = Manifest::new("eval");
    m.input_tree(&label(&a.gt), &a.gt)?;
    let mut maps = BTreeMap::new();
    let mut class_of = BTreeMap::new();
    for rel in walk(&a.fused)? {
        let Some((image, file)) = rel.split_once('/') else { continue };
        let Some(class) = file.strip_suffix(".camt").and_then(|c| c.parse::<usize>().ok()) else {
            continue;
        };
        let sample = Sample { image_id: image.to_string(), class };
        let path = a.fused.join(&rel);
        m.input(format!("{}/{rel}", label(&a.fused)), &path)?;
        maps.insert(sample.key(), read_map(&path)?);
        class_of.insert(sample.key(), class);
    }
    let n = class_of.values().max().map_or(0, |c| c + 1);
    let names = match a.classes {
        Some(names) if names.len() >= n => names,
        Some(names) => {
            return Err(Error::Config(format!("{} class names but class index {} seen", names.len(), n - 1)))
        }
        None => default_class_names(n),
    };
    let gt_by_key: BTreeMap<String, BinaryMask> = gts.into_iter().map(|(s, g)| (s.key(), g)).collect();
    let report = miou_per_class(&maps, &gt_by_key, &class_of, &names, a.threshold)?;
    mkdir(&a.out)?;
    write_text(&a.out, "report.csv", &report.to_csv(), &mut m)?;
    write_text(&a.out, "report.json", &report.to_json(), &mut m)?;
    m.write(&a.out)?;
    Ok(format!(
        "eval: {} classes, avg mIoU {:.4} at T={}",
        report.per_class.len(),
        report.average,
        a.threshold
    ))
}

fn table1(a: Table1Args) -> Result<String> {
    let pm = read_pair_matrix_csv(&a.matrix)?;
    let mut lines = Vec::new();
    let report = if a.top == 1 && a.pair_maps.is_none() {
        top1_report(&pm)
    } else if let (Some(maps_dir), Some(gt_dir)) = (&a.pair_maps, &a.gt) {
        let gts = read_groundtruth(gt_dir)?;
        let mut pair_maps = BTreeMap::new();
        for rel in walk(maps_dir)? {
            if let Some((image, t, s)) = parse_pair_map_path(&rel) {
                let key = Sample { image_id: image, class: t }.key();
                pair_maps.insert((key, s), read_map(&maps_dir.join(&rel))?);
            }
        }
        let class_of = gts.keys().map(|s| (s.key(), s.class)).collect();
        let gt_by_key = gts.into_iter().map(|(s, g)| (s.key(), g)).collect();
        topk_fused_eval(a.top, &pm, &pair_maps, &gt_by_key, &class_of, a.threshold)?
    } else {
        // k > 1 needs the maps; list the selection only
        for c in 0..pm.n() {
            let rows = topk_select_from_matrix(&pm, c, a.top)?;
            let names: Vec<&str> = rows.iter().map(|&r| pm.class_names()[r].as_str()).collect();
            lines.push(format!("{}: {}", pm.class_names()[c], names.join(", ")));
        }
        if let Some(out) = &a.out {
            mkdir(out)?;
            let mut m = Manifest::new("table1");
            m.input(label(&a.matrix), &a.matrix)?;
            write_text(out, "selection.txt", &(lines.join("\n") + "\n"), &mut m)?;
            m.write(out)?;
        }
        lines.push(format!("table1: top-{} selection for {} classes (scores need --pair-maps and --gt)", a.top, pm.n()));
        return Ok(lines.join("\n"));
    };
    for s in &report.per_class {
        lines.push(format!("{:<12} {:.4}", s.class, s.miou));
    }
    if let Some(path) = &a.reference {
        let (names, rows) = read_reference_csv(path)?;
        let label = format!("Top{}", a.top);
        if let Some(row) = rows.iter().find(|r| r.label == label) {
            let worst = names
                .iter()
                .zip(&row.values)
                .filter_map(|(name, &v)| report.get(name).map(|s| (s.miou - v).abs()))
                .fold(0.0f64, f64::max);
            lines.push(format!(
                "reference {label}: avg {:.4}, max per-class deviation {worst:.2e}",
                row.average
            ));
        }
    }
    if let Some(out) = &a.out {
        mkdir(out)?;
        let mut m = Manifest::new("table1");
        m.input(label(&a.matrix), &a.matrix)?;
        write_text(out, "report.csv", &report.to_csv(), &mut m)?;
        write_text(out, "report.json", &report.to_json(), &mut m)?;
        m.write(out)?;
    }
    lines.push(format!("table1: top-{} avg {:.4}", a.top, report.average));
    Ok(lines.join("\n"))
}

fn generate(a: GenerateArgs) -> Result<String> {
    let scenario = match &a.scenario {
        Some(p) => SyntheticScenario::load(p)?,
        None => SyntheticScenario::complementary(a.groups, a.group_size, a.size),
    };
    let cfg = scenario.write(a.seed, &a.out)?;
    Ok(format!(
        "generate: {} classes x {} images -> {} (config {})",
        scenario.n(),
        scenario.images_per_class,
        a.out.display(),
        a.out.join("synth.json").display()
    ) + &format!(", method {}", cfg.method_label()))
}

fn run(a: RunArgs) -> Result<String> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = a.out.as_ref().map(|o| {
        // flag paths are relative to the working directory, not the config
        std::path::absolute(o).unwrap_or_else(|_| o.clone()).to_string_lossy().into_owned()
    });
    cfg.apply(&Overrides {
        seed: a.seed,
        threshold: a.threshold,
        mode: a.mode,
        k: a.k.map(|k| k as usize),
        layer_mode: a.layer_mode,
        out,
    });
    let summary = run_pipeline(&cfg, &base)?;
    let best_single = summary
        .single
        .iter()
        .map(|s| s.report.average)
        .fold(0.0f64, f64::max);
    Ok(format!(
        "run: {} fused mIoU {:.4} (best single pair {:.4}) -> {}",
        summary.method,
        summary.fused.average,
        best_single,
        summary.out_dir.display()
    ))
}
