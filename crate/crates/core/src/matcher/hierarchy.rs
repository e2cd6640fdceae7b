//! Coarse-to-fine quadtree matching.
//!
//! Level 0 is matched globally. Every retained pair `(p_A, p_B)` at level `i`
//! hands its A-children a search scope made of the B-children of `p_B`, so the
//! per-parent work is `n_s^2 x n_s^2` comparisons instead of a full-grid scan.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{candidate_set, match_level, Candidates, MatchParams, MatchTriplet, Scope};
use crate::error::{Error, Result};
use crate::motion_state::{GridGeometry, LevelSequences, LevelSpec, SequenceSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyPlan {
    /// Coarse to fine.
    pub levels: Vec<LevelSpec>,
    /// Children per side when a patch is subdivided.
    pub branching: usize,
}

impl HierarchyPlan {
    pub fn new(levels: Vec<LevelSpec>, branching: usize) -> Result<Self> {
        let plan = HierarchyPlan { levels, branching };
        plan.validate()?;
        Ok(plan)
    }

    /// Tiled levels from `coarsest` down to `finest`, halving each time.
    pub fn quadtree(coarsest: usize, finest: usize) -> Result<Self> {
        let mut levels = Vec::new();
        let mut p = coarsest;
        while p >= finest && p > 0 {
            levels.push(LevelSpec::tiled(p));
            if p % 2 != 0 {
                break;
            }
            p /= 2;
        }
        if levels.last().map(|l| l.patch_size) != Some(finest) {
            return Err(Error::InvalidParameter(format!("{finest} is not {coarsest} halved a whole number of times")));
        }
        HierarchyPlan::new(levels, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("hierarchy needs at least one level".into()));
        }
        if self.branching < 2 {
            return Err(Error::InvalidParameter("branching must be at least 2".into()));
        }
        for pair in self.levels.windows(2) {
            if pair[0].patch_size != pair[1].patch_size * self.branching {
                return Err(Error::InvalidParameter(format!(
                    "level patch {} is not {} / {}",
                    pair[1].patch_size, pair[0].patch_size, self.branching
                )));
            }
        }
        for l in &self.levels {
            if l.stride == 0 || l.stride > l.patch_size {
                return Err(Error::InvalidParameter(format!("bad stride {} for patch {}", l.stride, l.patch_size)));
            }
        }
        Ok(())
    }
}

impl Default for HierarchyPlan {
    fn default() -> Self {
        HierarchyPlan::quadtree(64, 8).expect("64 halves to 8")
    }
}

/// Evaluations in round `t` (1-based) of a fully matched tree: `n_s^(2t+2)`.
pub fn quadtree_round_evaluations(branching: u64, t: u32) -> u64 {
    branching.pow(2 * t + 2)
}

/// Closed form of the total over all rounds for a final `grid x grid`
/// partition: `n_s^4 / (n_s^2 - 1) * (grid^2 - 1)`.
pub fn quadtree_total_evaluations(branching: u64, grid: u64) -> u64 {
    let b2 = branching * branching;
    b2 * b2 * (grid * grid - 1) / (b2 - 1)
}

/// What a between-level hook gets to see.
pub struct LevelContext<'a> {
    pub level: usize,
    pub a: &'a LevelSequences,
    pub b: &'a LevelSequences,
    pub a_cands: &'a Candidates,
    pub b_cands: &'a Candidates,
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub level: usize,
    pub spec: LevelSpec,
    /// Output of level matching, before any hook.
    pub matched: Vec<MatchTriplet>,
    /// Output after the hook; this is what seeds the next level.
    pub triplets: Vec<MatchTriplet>,
    pub threshold: Option<f64>,
    pub evaluations: u64,
    pub a_candidates: usize,
    pub b_candidates: usize,
    pub match_time: Duration,
    pub refine_time: Duration,
}

/// Search scope for the level below `parents`.
pub fn child_scope(
    parents: &[MatchTriplet],
    a_parent: &GridGeometry,
    b_parent: &GridGeometry,
    a_child: &GridGeometry,
    b_child: &GridGeometry,
) -> Scope {
    let dilation = if b_child.stride < b_child.patch_size { b_child.stride as isize } else { 0 };
    let mut scope: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for t in parents {
        let (ax, ay) = a_parent.origin(t.a.row, t.a.col);
        let pa = a_parent.patch_size as isize;
        let (ar, ac) = a_child.patches_within(ax as isize, ay as isize, ax as isize + pa, ay as isize + pa);
        let (bx, by) = b_parent.origin(t.b.row, t.b.col);
        let pb = b_parent.patch_size as isize;
        let (bx, by) = (bx as isize, by as isize);
        let (br, bc) = b_child.patches_within(bx - dilation, by - dilation, bx + pb + dilation, by + pb + dilation);
        let bs: Vec<usize> = br.flat_map(|r| bc.clone().map(move |c| (r, c))).map(|(r, c)| b_child.index(r, c)).collect();
        for r in ar {
            for c in ac.clone() {
                scope.entry(a_child.index(r, c)).or_default().extend(bs.iter().copied());
            }
        }
    }
    Scope::Local(scope.into_iter().map(|(a, bs)| (a, bs.into_iter().collect())).collect())
}

fn check_levels(set: &SequenceSet, plan: &HierarchyPlan, which: &str) -> Result<()> {
    if set.levels.len() != plan.levels.len() {
        return Err(Error::InvalidParameter(format!(
            "video {which} has {} levels, plan has {}",
            set.levels.len(),
            plan.levels.len()
        )));
    }
    for (l, spec) in set.levels.iter().zip(&plan.levels) {
        if l.spec() != *spec {
            return Err(Error::InvalidParameter(format!("video {which} level {} does not match plan", l.level)));
        }
    }
    Ok(())
}

/// Plain hierarchical matching with no between-level processing.
pub fn run_hierarchy(
    a: &SequenceSet,
    b: &SequenceSet,
    plan: &HierarchyPlan,
    params: &MatchParams,
) -> Result<Vec<LevelResult>> {
    run_hierarchy_with(a, b, plan, params, |_, t| t)
}

/// Hierarchical matching; `between` may rewrite each level's triplets (e.g.
/// refinement) before they seed the next level.
pub fn run_hierarchy_with<F>(
    a: &SequenceSet,
    b: &SequenceSet,
    plan: &HierarchyPlan,
    params: &MatchParams,
    mut between: F,
) -> Result<Vec<LevelResult>>
where
    F: FnMut(&LevelContext<'_>, Vec<MatchTriplet>) -> Vec<MatchTriplet>,
{
    plan.validate()?;
    params.validate()?;
    check_levels(a, plan, "A")?;
    check_levels(b, plan, "B")?;
    if a.seg_len != b.seg_len {
        return Err(Error::InvalidParameter("videos were built with different segment lengths".into()));
    }
    let len = a.len.min(b.len);
    let (a, b) = (a.truncated(len), b.truncated(len));

    let mut results: Vec<LevelResult> = Vec::with_capacity(plan.levels.len());
    for (level, spec) in plan.levels.iter().enumerate() {
        let (la, lb) = (&a.levels[level], &b.levels[level]);
        let a_cands = candidate_set(la, len, params.min_motion_frac);
        let b_cands = candidate_set(lb, len, params.min_motion_frac);
        let scope = match results.last() {
            None => Scope::Global,
            Some(parent) => child_scope(
                &parent.triplets,
                &a.levels[level - 1].geometry,
                &b.levels[level - 1].geometry,
                &la.geometry,
                &lb.geometry,
            ),
        };

        let started = Instant::now();
        let m = match_level(la, lb, &a_cands, &b_cands, &scope, params);
        let match_time = started.elapsed();

        let ctx = LevelContext { level, a: la, b: lb, a_cands: &a_cands, b_cands: &b_cands, threshold: m.threshold };
        let started = Instant::now();
        let triplets = between(&ctx, m.triplets.clone());
        let refine_time = started.elapsed();

        results.push(LevelResult {
            level,
            spec: *spec,
            matched: m.triplets,
            triplets,
            threshold: m.threshold,
            evaluations: m.evaluations,
            a_candidates: a_cands.len(),
            b_candidates: b_cands.len(),
            match_time,
            refine_time,
        });
    }
    Ok(results)
}
