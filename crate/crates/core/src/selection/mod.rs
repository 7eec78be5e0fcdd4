//! Representative-class selection.
//!
//! Given a target class, pick `N` comparison classes whose per-pair maps will
//! be fused. Three deployable strategies are provided:
//!
//! * [`select_random`]: seeded draw without replacement.
//! * [`select_by_rank`]: fixed 1-based positions in the similarity ranking
//!   ([`RANK_A`], [`RANK_B`]).
//! * [`select_from_clusters`]: the `k'`-th most similar class from each
//!   cluster produced by [`cluster_classes`].

mod kmeans;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{
    cluster_classes, cluster_classes_observed, partition_score, same_partition, Clustering,
    KMeansConfig, KMeansOutcome, Move, DEFAULT_MAX_ITER, DEFAULT_RESTARTS,
};

use crate::similarity::{ClassRanking, SimilarityMatrix};

/// Ranking positions of the "Rank-a" preset.
pub const RANK_A: [usize; 4] = [3, 9, 14, 17];
/// Ranking positions of the "Rank-b" preset.
pub const RANK_B: [usize; 4] = [3, 8, 13, 18];

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("cannot pick {requested} classes from {available} candidates")]
    TooMany { requested: usize, available: usize },
    #[error("class index {index} out of range for {n} classes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("rank position {position} out of range 1..={max}")]
    PositionOutOfRange { position: usize, max: usize },
    #[error("rank position {0} repeated")]
    DuplicatePosition(usize),
    #[error("k' must be at least 1")]
    ZeroK,
    #[error("need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("min_size must be positive")]
    ZeroMinSize,
    #[error("restarts must be positive")]
    ZeroRestarts,
    #[error("infeasible clustering: {num_clusters} clusters x min_size {min_size} > {n} classes")]
    Infeasible {
        n: usize,
        num_clusters: usize,
        min_size: usize,
    },
    #[error("invalid clustering: {0}")]
    InvalidClustering(String),
    #[error("cluster {0} contains no class other than the target")]
    NoCandidate(usize),
}

/// Which strategy produced a [`RepresentativeSet`], with its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Random { seed: u64 },
    Rank { positions: Vec<usize> },
    Cluster { k: usize, seed: u64 },
}

/// The comparison classes chosen for one target class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentativeSet {
    pub target: usize,
    pub members: Vec<usize>,
    pub strategy: Strategy,
}

impl RepresentativeSet {
    pub fn is_valid(&self) -> bool {
        let mut seen = self.members.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len() == self.members.len() && !self.members.contains(&self.target)
    }
}

/// Draws `count` distinct classes other than `target`.
pub fn select_random(
    n: usize,
    target: usize,
    count: usize,
    seed: u64,
) -> Result<RepresentativeSet, SelectionError> {
    if target >= n {
        return Err(SelectionError::IndexOutOfRange { index: target, n });
    }
    if count > n - 1 {
        return Err(SelectionError::TooMany {
            requested: count,
            available: n - 1,
        });
    }
    let mut candidates: Vec<usize> = (0..n).filter(|&c| c != target).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (picked, _) = candidates.partial_shuffle(&mut rng, count);
    Ok(RepresentativeSet {
        target,
        members: picked.to_vec(),
        strategy: Strategy::Random { seed },
    })
}

/// Picks `order[p - 1]` for each 1-based position `p`.
pub fn select_by_rank(
    ranking: &ClassRanking,
    positions: &[usize],
) -> Result<RepresentativeSet, SelectionError> {
    let max = ranking.order.len();
    let mut members = Vec::with_capacity(positions.len());
    for (i, &p) in positions.iter().enumerate() {
        if p == 0 || p > max {
            return Err(SelectionError::PositionOutOfRange { position: p, max });
        }
        if positions[..i].contains(&p) {
            return Err(SelectionError::DuplicatePosition(p));
        }
        members.push(ranking.order[p - 1]);
    }
    Ok(RepresentativeSet {
        target: ranking.target,
        members,
        strategy: Strategy::Rank {
            positions: positions.to_vec(),
        },
    })
}

/// Candidates of each cluster (target removed), most similar to `target` first.
pub fn cluster_candidates(
    clustering: &Clustering,
    sim: &SimilarityMatrix,
    target: usize,
) -> Result<Vec<Vec<usize>>, SelectionError> {
    clustering.validate()?;
    if target >= clustering.n {
        return Err(SelectionError::IndexOutOfRange {
            index: target,
            n: clustering.n,
        });
    }
    if sim.n() != clustering.n {
        return Err(SelectionError::InvalidClustering(format!(
            "clustering has {} classes, similarity matrix {}",
            clustering.n,
            sim.n()
        )));
    }
    let row = sim.row(target);
    let mut out = Vec::with_capacity(clustering.num_clusters);
    for (id, mut members) in clustering.members().into_iter().enumerate() {
        members.retain(|&c| c != target);
        if members.is_empty() {
            return Err(SelectionError::NoCandidate(id));
        }
        members.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        out.push(members);
    }
    Ok(out)
}

/// Picks the `k`-th most similar class (1-based) from every cluster, falling
/// back to the least similar candidate when a cluster has fewer than `k`.
///
/// `sim` is the raw (row-oriented) similarity matrix; rows are read from the
/// target's point of view.
pub fn select_from_clusters(
    clustering: &Clustering,
    sim: &SimilarityMatrix,
    target: usize,
    k: usize,
) -> Result<RepresentativeSet, SelectionError> {
    if k == 0 {
        return Err(SelectionError::ZeroK);
    }
    let members = cluster_candidates(clustering, sim, target)?
        .into_iter()
        .map(|cands| cands[(k - 1).min(cands.len() - 1)])
        .collect();
    Ok(RepresentativeSet {
        target,
        members,
        strategy: Strategy::Cluster {
            k,
            seed: clustering.seed,
        },
    })
}
