//! Match refinement: random search around each match, then rounds of
//! propagation to spatial neighbors.
//!
//! Propagation is Jacobi-style: every adoption decision in a round reads only
//! the map as it stood at the start of the round, so the result does not depend
//! on traversal order or thread scheduling. Random draws come from a generator
//! keyed on `(seed, level, patch, round)` for the same reason.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{best_per_a, sequence_distance, sort_triplets, LevelContext, MatchTriplet};
use crate::sequence::PatchId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Propagation rounds after random search.
    pub iterations: usize,
    /// Radius decay per random-search step, in (0, 1).
    pub alpha: f64,
    /// Initial search radius in patches; `None` uses the larger grid dimension.
    pub w0: Option<f64>,
    pub trials_per_level: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams { iterations: 3, alpha: 0.5, w0: None, trials_per_level: 1 }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
        }
        if let Some(w0) = self.w0 {
            if !(w0 >= 0.0) {
                return Err(Error::InvalidParameter("w0 must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub b: PatchId,
    pub dist: f64,
    pub refined: bool,
}

/// Best known B match per A patch at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchMap {
    pub level: usize,
    /// Keyed by A (row, col).
    pub entries: BTreeMap<(usize, usize), Entry>,
    pub rng_seed: u64,
}

impl MatchMap {
    pub fn new(level: usize, rng_seed: u64) -> Self {
        MatchMap { level, entries: BTreeMap::new(), rng_seed }
    }

    /// Seeds from the best triplet per A patch.
    pub fn from_triplets(level: usize, triplets: &[MatchTriplet], rng_seed: u64) -> Self {
        let entries = best_per_a(triplets)
            .into_iter()
            .map(|t| ((t.a.row, t.a.col), Entry { b: t.b, dist: t.dist, refined: t.refined }))
            .collect();
        MatchMap { level, entries, rng_seed }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_triplets(&self) -> Vec<MatchTriplet> {
        let mut out: Vec<MatchTriplet> = self
            .entries
            .iter()
            .map(|(&(r, c), e)| MatchTriplet {
                a: PatchId::new(self.level, r, c),
                b: e.b,
                dist: e.dist,
                refined: e.refined,
            })
            .collect();
        sort_triplets(&mut out);
        out
    }
}

/// Radii `w0 * alpha^i` down to (and including) the last one of at least one patch.
pub fn search_radii(w0: f64, alpha: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = w0;
    while r >= 1.0 {
        radii.push(r);
        r *= alpha;
    }
    radii
}

/// Generator for one patch in one round; independent of evaluation order.
pub fn patch_rng(seed: u64, level: usize, row: usize, col: usize, round: u64) -> ChaCha8Rng {
    crate::seed::rng_for(seed, &[level as u64, row as u64, col as u64, round])
}

const RANDOM_SEARCH_ROUND: u64 = u64::MAX;

fn offset_patch(id: PatchId, dr: isize, dc: isize, rows: usize, cols: usize) -> Option<PatchId> {
    let r = id.row as isize + dr;
    let c = id.col as isize + dc;
    (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols).then(|| PatchId::new(id.level, r as usize, c as usize))
}

/// Samples replacement B patches at exponentially shrinking offsets around
/// each current match; keeps a sample only if strictly closer.
pub fn random_search(mm: &MatchMap, ctx: &LevelContext<'_>, params: &RefineParams) -> MatchMap {
    let g = ctx.b.geometry;
    let w0 = params.w0.unwrap_or(g.rows.max(g.cols) as f64);
    let radii = search_radii(w0, params.alpha);
    let items: Vec<((usize, usize), Entry)> = mm.entries.iter().map(|(k, v)| (*k, *v)).collect();
    let updated: Vec<((usize, usize), Entry)> = items
        .par_iter()
        .map(|&((r, c), e)| {
            let mut best = e;
            if best.dist == 0.0 {
                return ((r, c), best);
            }
            let mut rng = patch_rng(mm.rng_seed, mm.level, r, c, RANDOM_SEARCH_ROUND);
            let sa = ctx.a.get(r, c);
            for &radius in &radii {
                for _ in 0..params.trials_per_level {
                    let dx: f64 = rng.random_range(-1.0..=1.0);
                    let dy: f64 = rng.random_range(-1.0..=1.0);
                    let (dr, dc) = ((radius * dy).round() as isize, (radius * dx).round() as isize);
                    if (dr, dc) == (0, 0) {
                        continue;
                    }
                    let Some(cand) = offset_patch(e.b, dr, dc, g.rows, g.cols) else { continue };
                    if !ctx.b_cands.contains(cand) {
                        continue;
                    }
                    let d = sequence_distance(sa, ctx.b.seq(cand));
                    if d < best.dist {
                        best = Entry { b: cand, dist: d, refined: true };
                    }
                }
            }
            ((r, c), best)
        })
        .collect();
    MatchMap { level: mm.level, entries: updated.into_iter().collect(), rng_seed: mm.rng_seed }
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Best proposal for A patch `(row, col)` from its neighbors' matches in `snapshot`.
pub(crate) fn propose(snapshot: &MatchMap, ctx: &LevelContext<'_>, threshold: f64, row: usize, col: usize) -> Option<Entry> {
    let (ga, gb) = (ctx.a.geometry, ctx.b.geometry);
    let current = snapshot.entries.get(&(row, col)).copied();
    if current.is_some_and(|e| e.dist == 0.0) {
        return None;
    }
    let sa = ctx.a.get(row, col);
    let mut best: Option<Entry> = None;
    for (dr, dc) in NEIGHBORS {
        let (nr, nc) = (row as isize + dr, col as isize + dc);
        if nr < 0 || nc < 0 || nr as usize >= ga.rows || nc as usize >= ga.cols {
            continue;
        }
        let Some(n) = snapshot.entries.get(&(nr as usize, nc as usize)) else { continue };
        let Some(cand) = offset_patch(n.b, -dr, -dc, gb.rows, gb.cols) else { continue };
        if !ctx.b_cands.contains(cand) || current.is_some_and(|e| e.b == cand) {
            continue;
        }
        let d = sequence_distance(sa, ctx.b.seq(cand));
        if best.is_none_or(|b| d < b.dist) {
            best = Some(Entry { b: cand, dist: d, refined: true });
        }
    }
    let best = best?;
    let beats = current.is_none_or(|e| best.dist < e.dist);
    (beats && best.dist < 1.0 && best.dist <= threshold).then_some(best)
}

/// One synchronous propagation round over every A candidate.
pub fn propagate(mm: &MatchMap, ctx: &LevelContext<'_>) -> MatchMap {
    let Some(threshold) = ctx.threshold else { return mm.clone() };
    if mm.is_empty() {
        return mm.clone();
    }
    let a_indices: Vec<usize> = ctx.a_cands.indices().collect();
    let cols = ctx.a.geometry.cols;
    let proposals: Vec<((usize, usize), Entry)> = a_indices
        .par_iter()
        .filter_map(|&i| {
            let (r, c) = (i / cols, i % cols);
            propose(mm, ctx, threshold, r, c).map(|e| ((r, c), e))
        })
        .collect();
    let mut out = mm.clone();
    out.entries.extend(proposals);
    out
}

/// Random search followed by `iterations` propagation rounds; returns the
/// refined best match per A patch.
pub fn refine_level(
    triplets: &[MatchTriplet],
    ctx: &LevelContext<'_>,
    params: &RefineParams,
    rng_seed: u64,
) -> Vec<MatchTriplet> {
    refine_level_traced(triplets, ctx, params, rng_seed).0
}

/// [`refine_level`] that also reports the map size after random search
/// (index 0) and after each propagation round.
pub fn refine_level_traced(
    triplets: &[MatchTriplet],
    ctx: &LevelContext<'_>,
    params: &RefineParams,
    rng_seed: u64,
) -> (Vec<MatchTriplet>, Vec<usize>) {
    if triplets.is_empty() || ctx.threshold.is_none() {
        return (triplets.to_vec(), vec![0; params.iterations + 1]);
    }
    let mut mm = MatchMap::from_triplets(ctx.level, triplets, rng_seed);
    mm = random_search(&mm, ctx, params);
    let mut trace = vec![mm.len()];
    let mut settled = false;
    for _ in 0..params.iterations {
        if !settled {
            let next = propagate(&mm, ctx);
            settled = next == mm;
            mm = next;
        }
        trace.push(mm.len());
    }
    (mm.to_triplets(), trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{candidate_set, Candidates};
    use rand::SeedableRng;
    use crate::motion_state::{GridGeometry, LevelSequences};
    use crate::sequence::StateSequence;

    struct Fixture {
        a: LevelSequences,
        b: LevelSequences,
        ac: Candidates,
        bc: Candidates,
    }

    impl Fixture {
        fn ctx(&self, threshold: f64) -> LevelContext<'_> {
            LevelContext { level: 0, a: &self.a, b: &self.b, a_cands: &self.ac, b_cands: &self.bc, threshold: Some(threshold) }
        }
    }

    fn level(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Vec<bool>) -> LevelSequences {
        let seqs = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| StateSequence::from_bits(PatchId::new(0, r, c), &f(r, c), 500))
            .collect();
        LevelSequences { level: 0, geometry: GridGeometry { patch_size: 8, stride: 8, rows, cols }, seqs }
    }

    fn signature(key: u64, len: usize) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        (0..len).map(|_| rng.random_bool(0.3)).collect()
    }

    /// B is A shifted right by `shift` columns; every patch moves.
    fn translated(rows: usize, cols: usize, shift: usize) -> Fixture {
        let len = 200;
        let a = level(rows, cols, |r, c| signature((r * 1000 + c) as u64, len));
        let b = level(rows, cols, |r, c| {
            if c >= shift { signature((r * 1000 + c - shift) as u64, len) } else { signature(900_000 + (r * 1000 + c) as u64, len) }
        });
        let (ac, bc) = (candidate_set(&a, len, 1.0 / 30.0), candidate_set(&b, len, 1.0 / 30.0));
        Fixture { a, b, ac, bc }
    }

    #[test]
    fn radii_decay() {
        assert_eq!(search_radii(8.0, 0.5), vec![8.0, 4.0, 2.0, 1.0]);
        assert!(search_radii(0.5, 0.5).is_empty());
    }

    #[test]
    fn perfect_map_is_unchanged() {
        let fx = translated(6, 10, 2);
        let ctx = fx.ctx(0.2);
        let mut mm = MatchMap::new(0, 9);
        for r in 0..6 {
            for c in 0..8 {
                mm.entries.insert((r, c), Entry { b: PatchId::new(0, r, c + 2), dist: 0.0, refined: false });
            }
        }
        assert_eq!(random_search(&mm, &ctx, &RefineParams::default()), mm);
        assert_eq!(propagate(&mm, &ctx), mm);
    }

    #[test]
    fn empty_map_stays_empty() {
        let fx = translated(4, 6, 1);
        let ctx = fx.ctx(0.5);
        let mm = MatchMap::new(0, 1);
        assert!(propagate(&mm, &ctx).is_empty());
        assert!(refine_level(&[], &ctx, &RefineParams::default(), 1).is_empty());
    }

    #[test]
    fn static_grid_has_no_candidates() {
        let a = level(4, 4, |_, _| vec![false; 100]);
        let (ac, bc) = (candidate_set(&a, 100, 1.0 / 30.0), candidate_set(&a, 100, 1.0 / 30.0));
        let fx = Fixture { b: a.clone(), a, ac, bc };
        let ctx = fx.ctx(1.0);
        let mut mm = MatchMap::new(0, 0);
        mm.entries.insert((0, 0), Entry { b: PatchId::new(0, 0, 0), dist: 1.0, refined: false });
        assert_eq!(propagate(&mm, &ctx), mm);
    }

    /// Reachability oracle: after k rounds from one correct seed, every moving
    /// patch within Chebyshev radius k whose counterpart exists is matched.
    #[test]
    fn propagation_reaches_chebyshev_radius() {
        let (rows, cols, shift) = (9, 12, 2);
        let fx = translated(rows, cols, shift);
        let ctx = fx.ctx(0.05);
        let mut mm = MatchMap::new(0, 3);
        mm.entries.insert((4, 4), Entry { b: PatchId::new(0, 4, 4 + shift), dist: 0.0, refined: false });
        for k in 1..=4usize {
            mm = propagate(&mm, &ctx);
            for r in 0..rows {
                for c in 0..cols {
                    let reachable = r.abs_diff(4).max(c.abs_diff(4)) <= k && c + shift < cols;
                    let got = mm.entries.get(&(r, c));
                    if reachable {
                        let e = got.unwrap_or_else(|| panic!("({r},{c}) not reached after {k} rounds"));
                        assert_eq!(e.b, PatchId::new(0, r, c + shift));
                        assert_eq!(e.dist, 0.0);
                    } else if r.abs_diff(4).max(c.abs_diff(4)) > k {
                        assert!(got.is_none(), "({r},{c}) reached too early at round {k}");
                    }
                }
            }
        }
    }

    #[test]
    fn refine_covers_neighborhood_of_seed() {
        let fx = translated(9, 12, 2);
        let ctx = fx.ctx(0.05);
        let seed = [MatchTriplet::new(PatchId::new(0, 4, 4), PatchId::new(0, 4, 6), 0.0)];
        let out = refine_level(&seed, &ctx, &RefineParams::default(), 5);
        for r in 1..=7 {
            for c in 1..=7 {
                assert!(out.iter().any(|t| (t.a.row, t.a.col) == (r, c) && (t.b.row, t.b.col) == (r, c + 2)));
            }
        }
    }

    #[test]
    fn snapshot_semantics_are_order_independent() {
        let fx = translated(7, 9, 1);
        let ctx = fx.ctx(0.6);
        let mut mm = MatchMap::new(0, 4);
        mm.entries.insert((3, 3), Entry { b: PatchId::new(0, 3, 4), dist: 0.0, refined: false });
        mm.entries.insert((0, 0), Entry { b: PatchId::new(0, 5, 5), dist: 0.55, refined: false });
        let forward = propagate(&mm, &ctx);
        let mut backward = mm.clone();
        let idx: Vec<usize> = fx.ac.indices().collect();
        for &i in idx.iter().rev() {
            let (r, c) = (i / 9, i % 9);
            if let Some(e) = propose(&mm, &ctx, 0.6, r, c) {
                backward.entries.insert((r, c), e);
            }
        }
        assert_eq!(forward, backward);
    }

    #[test]
    fn random_search_finds_out_of_scope_match() {
        let fx = translated(12, 16, 5);
        let ctx = fx.ctx(1.0);
        let start = PatchId::new(0, 6, 6);
        let d0 = sequence_distance(fx.a.get(6, 3), fx.b.seq(start));
        let mut mm = MatchMap::new(0, 0);
        mm.entries.insert((6, 3), Entry { b: start, dist: d0, refined: false });
        let params = RefineParams { trials_per_level: 200, w0: Some(8.0), ..RefineParams::default() };
        let mut found = 0;
        for seed in 0..20 {
            mm.rng_seed = seed;
            let out = random_search(&mm, &ctx, &params);
            if out.entries[&(6, 3)].b == PatchId::new(0, 6, 8) {
                found += 1;
            }
        }
        assert_eq!(found, 20);
    }

    #[test]
    fn refinement_never_degrades_and_is_deterministic() {
        let fx = translated(8, 10, 3);
        let ctx = fx.ctx(0.7);
        let seeds: Vec<MatchTriplet> = (0..8)
            .flat_map(|r| (0..10).map(move |c| (r, c)))
            .filter(|(r, c)| (r + c) % 3 == 0)
            .map(|(r, c)| {
                let b = PatchId::new(0, (r + 1) % 8, c);
                MatchTriplet::new(PatchId::new(0, r, c), b, sequence_distance(fx.a.get(r, c), fx.b.seq(b)))
            })
            .collect();
        let out = refine_level(&seeds, &ctx, &RefineParams::default(), 42);
        assert_eq!(out, refine_level(&seeds, &ctx, &RefineParams::default(), 42));
        for s in &seeds {
            let after = out.iter().find(|t| t.a == s.a).expect("seeded patch survives");
            assert!(after.dist <= s.dist);
        }
        for t in &out {
            assert!(fx.ac.contains(t.a) && fx.bc.contains(t.b));
            assert!((0.0..=1.0).contains(&t.dist));
        }
    }

    #[test]
    fn zero_iterations_is_random_search_only() {
        let fx = translated(6, 8, 2);
        let ctx = fx.ctx(0.5);
        let seeds = vec![MatchTriplet::new(PatchId::new(0, 2, 2), PatchId::new(0, 2, 4), 0.0)];
        let params = RefineParams { iterations: 0, ..RefineParams::default() };
        assert_eq!(refine_level(&seeds, &ctx, &params, 1), seeds);
    }
}
