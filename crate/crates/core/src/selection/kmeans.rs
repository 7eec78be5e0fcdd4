//! Improved k-means over a similarity matrix.
//!
//! Classes have no coordinates, only pairwise similarities, so there is no
//! centroid. Instead a class is compared with a cluster through its mean
//! similarity to that cluster's members, and moves to the cluster it is most
//! similar to on average.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::similarity::SimilarityMatrix;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 10;

/// A partition of `n` classes into `num_clusters` clusters, each holding at
/// least `min_size` classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub n: usize,
    #[serde(rename = "N")]
    pub num_clusters: usize,
    pub min_size: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Members of each cluster in ascending class order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (class, &c) in self.assignment.iter().enumerate() {
            out[c].push(class);
        }
        out
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.assignment.len() != self.n || self.class_names.len() != self.n {
            return Err(SelectionError::InvalidClustering(format!(
                "assignment covers {} of {} classes",
                self.assignment.len(),
                self.n
            )));
        }
        if let Some(&c) = self.assignment.iter().find(|&&c| c >= self.num_clusters) {
            return Err(SelectionError::InvalidClustering(format!(
                "cluster id {c} >= {}",
                self.num_clusters
            )));
        }
        if let Some((id, size)) = self
            .sizes()
            .into_iter()
            .enumerate()
            .find(|&(_, s)| s < self.min_size)
        {
            return Err(SelectionError::InvalidClustering(format!(
                "cluster {id} has {size} classes, below min_size {}",
                self.min_size
            )));
        }
        Ok(())
    }

    /// Two clusterings describe the same partition up to relabeling.
    pub fn same_partition(&self, other: &[usize]) -> bool {
        same_partition(&self.assignment, other)
    }
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub num_clusters: usize,
    pub min_size: usize,
    pub seed: u64,
    /// Cap on full passes over the classes, per restart.
    pub max_iter: usize,
    /// Independent random starts; the best-scoring one is kept.
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(num_clusters: usize, min_size: usize, seed: u64) -> Self {
        KMeansConfig {
            num_clusters,
            min_size,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

/// One accepted reassignment, reported to observers after it is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub restart: usize,
    pub pass: usize,
    pub class: usize,
    pub from: usize,
    pub to: usize,
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    pub clustering: Clustering,
    /// Restart that produced `clustering`.
    pub restart: usize,
    /// Passes used by that restart (the final no-move pass included).
    pub passes: usize,
    /// `false` when that restart stopped on `max_iter` rather than a quiet pass.
    pub converged: bool,
    /// Sum over classes of mean similarity to the rest of their cluster.
    pub score: f64,
}

/// Mean of `sim[class][m]` over the members `m != class` of each cluster.
/// Clusters with no other member get `-inf`.
fn cluster_means(sim: &SimilarityMatrix, assignment: &[usize], k: usize, class: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (m, &c) in assignment.iter().enumerate() {
        if m != class {
            sums[c] += sim.get(class, m);
            counts[c] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { f64::NEG_INFINITY } else { s / c as f64 })
        .collect()
}

/// Total within-cluster mean similarity; higher is better.
pub fn partition_score(sim: &SimilarityMatrix, assignment: &[usize], k: usize) -> f64 {
    (0..assignment.len())
        .map(|i| {
            let own = cluster_means(sim, assignment, k, i)[assignment[i]];
            if own.is_finite() {
                own
            } else {
                0.0
            }
        })
        .sum()
}

fn initial_partition(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut assignment = vec![0; n];
    for (pos, &class) in order.iter().enumerate() {
        assignment[class] = pos % k;
    }
    assignment
}

fn run_once(
    sim: &SimilarityMatrix,
    cfg: &KMeansConfig,
    mut assignment: Vec<usize>,
    restart: usize,
    observer: &mut dyn FnMut(&Move, &[usize]),
) -> (Vec<usize>, usize, bool) {
    let k = cfg.num_clusters;
    let mut sizes = vec![0usize; k];
    for &c in &assignment {
        sizes[c] += 1;
    }
    for pass in 1..=cfg.max_iter {
        let mut moved = false;
        for class in 0..assignment.len() {
            let current = assignment[class];
            let means = cluster_means(sim, &assignment, k, class);
            let mut best = 0;
            for c in 1..k {
                if means[c] > means[best] {
                    best = c;
                }
            }
            if best != current && means[best] > means[current] && sizes[current] > cfg.min_size {
                assignment[class] = best;
                sizes[current] -= 1;
                sizes[best] += 1;
                moved = true;
                observer(
                    &Move {
                        restart,
                        pass,
                        class,
                        from: current,
                        to: best,
                    },
                    &assignment,
                );
            }
        }
        if !moved {
            return (assignment, pass, true);
        }
    }
    (assignment, cfg.max_iter, false)
}

/// Clusters classes by mean pairwise similarity.
///
/// Each restart draws a seeded shuffle and deals classes round-robin into
/// clusters, then sweeps classes in ascending order, moving a class to the
/// cluster with the highest mean similarity when that is strictly better than
/// its current cluster and the source keeps at least `min_size` classes.
/// Sweeps stop after a pass without moves or after `max_iter` passes. The
/// restart with the best [`partition_score`] wins (earliest on ties), so
/// `restarts = 1` is the plain single-start algorithm.
pub fn cluster_classes(
    sim: &SimilarityMatrix,
    cfg: &KMeansConfig,
) -> Result<KMeansOutcome, SelectionError> {
    cluster_classes_observed(sim, cfg, |_, _| {})
}

/// [`cluster_classes`] with a callback after every accepted move.
pub fn cluster_classes_observed(
    sim: &SimilarityMatrix,
    cfg: &KMeansConfig,
    mut observer: impl FnMut(&Move, &[usize]),
) -> Result<KMeansOutcome, SelectionError> {
    let n = sim.n();
    let k = cfg.num_clusters;
    if k < 2 {
        return Err(SelectionError::TooFewClusters(k));
    }
    if cfg.min_size == 0 {
        return Err(SelectionError::ZeroMinSize);
    }
    if k * cfg.min_size > n {
        return Err(SelectionError::Infeasible {
            n,
            num_clusters: k,
            min_size: cfg.min_size,
        });
    }
    if cfg.restarts == 0 {
        return Err(SelectionError::ZeroRestarts);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<usize>, usize, usize, bool, f64)> = None;
    for restart in 0..cfg.restarts {
        let init = initial_partition(&mut rng, n, k);
        let (assignment, passes, converged) = run_once(sim, cfg, init, restart, &mut observer);
        let score = partition_score(sim, &assignment, k);
        if best.as_ref().is_none_or(|b| score > b.4) {
            best = Some((assignment, restart, passes, converged, score));
        }
    }
    let (assignment, restart, passes, converged, score) = best.expect("restarts >= 1");
    let clustering = Clustering {
        n,
        num_clusters: k,
        min_size: cfg.min_size,
        seed: cfg.seed,
        assignment,
        class_names: sim.class_names().to_vec(),
    };
    clustering.validate()?;
    Ok(KMeansOutcome {
        clustering,
        restart,
        passes,
        converged,
        score,
    })
}
