//! Sequence matching between two videos.
//!
//! A level is matched in two passes over the candidate pairs in scope. The first
//! pass gathers first-segment distances and picks the retention threshold as
//! their `1/lambda` quantile; the second runs the segmented distance with early
//! abort and keeps every pair at or below the threshold that shares at least
//! one moving state.

mod distance;
mod hierarchy;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use distance::{
    first_segment_distance, overlap, segment_overlap, segmented_distance, sequence_distance, Overlap,
    SegmentedDistance,
};
pub use hierarchy::{
    child_scope, quadtree_round_evaluations, quadtree_total_evaluations, run_hierarchy, run_hierarchy_with,
    HierarchyPlan, LevelContext, LevelResult,
};

use crate::error::{Error, Result};
use crate::motion_state::{snap, LevelSequences};
use crate::sequence::PatchId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchTriplet {
    pub a: PatchId,
    pub b: PatchId,
    pub dist: f64,
    /// Created or improved by random search / propagation.
    #[serde(default)]
    pub refined: bool,
}

impl MatchTriplet {
    pub fn new(a: PatchId, b: PatchId, dist: f64) -> Self {
        MatchTriplet { a, b, dist, refined: false }
    }

    fn sort_key(&self) -> (f64, usize, usize, usize, usize) {
        (self.dist, self.a.row, self.a.col, self.b.row, self.b.col)
    }
}

/// Ascending by distance; ties break on (a row, a col, b row, b col).
pub fn sort_triplets(triplets: &mut [MatchTriplet]) {
    triplets.sort_by(|x, y| x.sort_key().partial_cmp(&y.sort_key()).expect("distances are never NaN"));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Quantile divisor: the retention threshold is the `1/lambda` quantile.
    pub lambda: f64,
    /// Early abort after this many segments exceed the threshold.
    pub max_bad_segments: usize,
    pub min_motion_frac: f64,
    pub keep_one_to_many: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams { lambda: 6.0, max_bad_segments: 1, min_motion_frac: 1.0 / 30.0, keep_one_to_many: true }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 1.0) {
            return Err(Error::InvalidParameter("lambda must be at least 1".into()));
        }
        if self.max_bad_segments < 1 {
            return Err(Error::InvalidParameter("max_bad_segments must be at least 1".into()));
        }
        Ok(())
    }
}

/// Patches with enough motion to be worth matching, as a row-major mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidates {
    mask: Vec<bool>,
    cols: usize,
}

impl Candidates {
    pub fn contains_index(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn contains(&self, id: PatchId) -> bool {
        self.mask[id.row * self.cols + id.col]
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keeps a patch iff its popcount is at least `len * min_motion_frac`.
pub fn candidate_set(seqs: &LevelSequences, len: usize, min_motion_frac: f64) -> Candidates {
    let cutoff = snap(len as f64 * min_motion_frac);
    Candidates {
        mask: seqs.seqs.iter().map(|s| s.ones() > 0 && s.ones() as f64 >= cutoff).collect(),
        cols: seqs.geometry.cols,
    }
}

/// Nearest-rank `1/lambda` quantile: the `ceil(m / lambda)`-th smallest value.
pub fn select_threshold(distances: &[f64], lambda: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::NoCandidates);
    }
    if !(lambda >= 1.0) {
        return Err(Error::InvalidParameter("lambda must be at least 1".into()));
    }
    let m = distances.len();
    let rank = (snap(m as f64 / lambda).ceil() as usize).clamp(1, m);
    let mut sorted = distances.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(rank - 1, |a, b| a.partial_cmp(b).expect("no NaN distances"));
    Ok(*kth)
}

/// Which B patches each A patch is compared against.
#[derive(Clone, Debug, PartialEq)]
pub enum Scope {
    /// Every A candidate against every B candidate.
    Global,
    /// A patch index to sorted B patch indices.
    Local(BTreeMap<usize, Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelMatch {
    /// Retained triplets, sorted.
    pub triplets: Vec<MatchTriplet>,
    /// `None` when nothing was in scope.
    pub threshold: Option<f64>,
    /// Number of (A, B) pairs evaluated.
    pub evaluations: u64,
}

fn pairs_in_scope(a_cands: &Candidates, b_cands: &Candidates, scope: &Scope) -> Vec<(usize, Vec<usize>)> {
    match scope {
        Scope::Global => {
            let bs: Vec<usize> = b_cands.indices().collect();
            if bs.is_empty() {
                return Vec::new();
            }
            a_cands.indices().map(|a| (a, bs.clone())).collect()
        }
        Scope::Local(map) => map
            .iter()
            .filter(|(a, _)| a_cands.contains_index(**a))
            .map(|(&a, bs)| (a, bs.iter().copied().filter(|&b| b_cands.contains_index(b)).collect::<Vec<_>>()))
            .filter(|(_, bs)| !bs.is_empty())
            .collect(),
    }
}

/// Matches one level. Both sequence sets must already share length and segment size.
pub fn match_level(
    a: &LevelSequences,
    b: &LevelSequences,
    a_cands: &Candidates,
    b_cands: &Candidates,
    scope: &Scope,
    params: &MatchParams,
) -> LevelMatch {
    let pairs = pairs_in_scope(a_cands, b_cands, scope);
    let evaluations = pairs.iter().map(|(_, bs)| bs.len() as u64).sum();

    let first: Vec<f64> = pairs
        .par_iter()
        .flat_map_iter(|(ai, bs)| bs.iter().map(move |&bi| first_segment_distance(&a.seqs[*ai], &b.seqs[bi])))
        .collect();
    let Ok(threshold) = select_threshold(&first, params.lambda) else {
        return LevelMatch { triplets: Vec::new(), threshold: None, evaluations };
    };

    let mut triplets: Vec<MatchTriplet> = pairs
        .par_iter()
        .flat_map_iter(|(ai, bs)| {
            let sa = &a.seqs[*ai];
            bs.iter().filter_map(move |&bi| {
                let sb = &b.seqs[bi];
                let r = segmented_distance(sa, sb, threshold, params.max_bad_segments);
                (!r.aborted && r.overlap.both > 0 && r.distance <= threshold).then(|| MatchTriplet::new(sa.patch, sb.patch, r.distance))
            })
        })
        .collect();
    sort_triplets(&mut triplets);
    if !params.keep_one_to_many {
        let mut seen = std::collections::HashSet::new();
        triplets.retain(|t| seen.insert(t.a));
    }
    LevelMatch { triplets, threshold: Some(threshold), evaluations }
}

/// Best triplet per A patch, in sorted order.
pub fn best_per_a(triplets: &[MatchTriplet]) -> Vec<MatchTriplet> {
    let mut sorted = triplets.to_vec();
    sort_triplets(&mut sorted);
    let mut seen = std::collections::HashSet::new();
    sorted.retain(|t| seen.insert(t.a));
    sorted
}
