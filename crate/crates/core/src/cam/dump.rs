//! On-disk layout of pair dumps:
//!
//! ```text
//! <root>/<image_id>/<target>_vs_<comparison>/layer<k>_features.camt
//! <root>/<image_id>/<target>_vs_<comparison>/layer<k>_gradients.camt
//! ```
//!
//! `target` and `comparison` are class indices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{CamError, LayerDump, PairDump};
use crate::tensorio::{read_tensor, write_tensor};

pub const FEATURES_SUFFIX: &str = "_features.camt";
pub const GRADIENTS_SUFFIX: &str = "_gradients.camt";

/// Identifies one pair dump.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DumpKey {
    pub image_id: String,
    pub target: usize,
    pub comparison: usize,
}

pub fn pair_dir(root: &Path, image_id: &str, target: usize, comparison: usize) -> PathBuf {
    root.join(image_id).join(format!("{target}_vs_{comparison}"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CamError + '_ {
    move |source| CamError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_pair_name(name: &str) -> Option<(usize, usize)> {
    let (t, c) = name.split_once("_vs_")?;
    Some((t.parse().ok()?, c.parse().ok()?))
}

fn parse_layer_name(name: &str) -> Option<usize> {
    name.strip_prefix("layer")?
        .strip_suffix(FEATURES_SUFFIX)?
        .parse()
        .ok()
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>, CamError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        out.push((name, entry.path()));
    }
    out.sort();
    Ok(out)
}

pub fn write_pair_dump(root: &Path, dump: &PairDump) -> Result<(), CamError> {
    let dir = pair_dir(root, &dump.image_id, dump.target, dump.comparison);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for layer in dump.layers() {
        let k = layer.layer_id;
        write_tensor(layer.features(), dir.join(format!("layer{k}{FEATURES_SUFFIX}")))?;
        write_tensor(layer.gradients(), dir.join(format!("layer{k}{GRADIENTS_SUFFIX}")))?;
    }
    Ok(())
}

/// Reads every `layer<k>` tensor pair of a dump, ordered by `k`.
pub fn read_pair_dump(
    root: &Path,
    image_id: &str,
    target: usize,
    comparison: usize,
) -> Result<PairDump, CamError> {
    let dir = pair_dir(root, image_id, target, comparison);
    let mut layers = BTreeMap::new();
    for (name, path) in sorted_entries(&dir)? {
        if let Some(k) = parse_layer_name(&name) {
            let grads = dir.join(format!("layer{k}{GRADIENTS_SUFFIX}"));
            let dump = LayerDump::new(k, read_tensor(&path)?, read_tensor(&grads)?)
                .map_err(|e| CamError::BadDumpPath(format!("{}: {e}", dir.display())))?;
            layers.insert(k, dump);
        }
    }
    if layers.is_empty() {
        return Err(CamError::BadDumpPath(format!(
            "{}: no layer<k>{FEATURES_SUFFIX} files",
            dir.display()
        )));
    }
    PairDump::new(image_id, target, comparison, layers.into_values().collect())
}

/// Every pair dump under `root`, sorted by image id, target, comparison.
pub fn list_pair_dumps(root: &Path) -> Result<Vec<DumpKey>, CamError> {
    let mut keys = Vec::new();
    for (image_id, image_path) in sorted_entries(root)? {
        if !image_path.is_dir() {
            continue;
        }
        for (name, path) in sorted_entries(&image_path)? {
            if !path.is_dir() {
                continue;
            }
            let (target, comparison) = parse_pair_name(&name)
                .ok_or_else(|| CamError::BadDumpPath(path.display().to_string()))?;
            keys.push(DumpKey {
                image_id: image_id.clone(),
                target,
                comparison,
            });
        }
    }
    keys.sort();
    Ok(keys)
}
