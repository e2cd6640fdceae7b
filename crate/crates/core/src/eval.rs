//! Scoring match sets against a ground-truth homography.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{sort_triplets, MatchTriplet};
use crate::motion_state::{snap, GridGeometry};

const SINGULAR_EPS: f64 = 1e-9;

/// Projective map from A pixel coordinates to B pixel coordinates, `h[2][2] = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Normalizes so the bottom-right entry is 1.
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self> {
        let m = Matrix3::from_fn(|r, c| rows[r][c]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("homography entries must be finite".into()));
        }
        if m[(2, 2)].abs() <= SINGULAR_EPS {
            return Err(Error::SingularHomography(m[(2, 2)]));
        }
        let m = m / m[(2, 2)];
        let det = m.determinant();
        if det.abs() <= SINGULAR_EPS {
            return Err(Error::SingularHomography(det));
        }
        Ok(Homography { m })
    }

    pub fn identity() -> Self {
        Homography { m: Matrix3::identity() }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0) }
    }

    pub fn scaling(sx: f64, sy: f64) -> Result<Self> {
        Homography::new([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.m[(r, c)]))
    }

    pub fn determinant(&self) -> f64 {
        self.m.determinant()
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.m.try_inverse().ok_or(Error::SingularHomography(self.determinant()))?;
        Homography::new(std::array::from_fn(|r| std::array::from_fn(|c| inv[(r, c)])))
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self> {
        let m = self.m * first.m;
        Homography::new(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])))
    }

    pub fn apply(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        apply_homography(self, (x, y))
    }

    pub fn is_identity(&self) -> bool {
        self.m == Matrix3::identity()
    }

    /// Parses nine whitespace-separated reals in row-major order.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse { what: "homography", detail: format!("{t:?}: {e}") }))
            .collect::<Result<_>>()?;
        if vals.len() != 9 {
            return Err(Error::Parse { what: "homography", detail: format!("expected 9 values, found {}", vals.len()) });
        }
        Homography::new(std::array::from_fn(|r| std::array::from_fn(|c| vals[3 * r + c])))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Homography::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for Homography {
    /// Three lines of three values; `{:?}` on f64 round-trips exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..3 {
            writeln!(f, "{:?} {:?} {:?}", self.m[(r, 0)], self.m[(r, 1)], self.m[(r, 2)])?;
        }
        Ok(())
    }
}

pub fn apply_homography(h: &Homography, p: (f64, f64)) -> Result<(f64, f64)> {
    let v = h.m * Vector3::new(p.0, p.1, 1.0);
    if v.z.abs() <= SINGULAR_EPS {
        return Err(Error::PointAtInfinity);
    }
    Ok((v.x / v.z, v.y / v.z))
}

/// Pixel-space endpoints of a match.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchCenters {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub patch_size: usize,
}

impl MatchCenters {
    pub fn of(t: &MatchTriplet, a_geom: &GridGeometry, b_geom: &GridGeometry) -> Self {
        MatchCenters {
            a: a_geom.center(t.a.row, t.a.col),
            b: b_geom.center(t.b.row, t.b.col),
            patch_size: a_geom.patch_size,
        }
    }
}

/// Euclidean distance between the projected A center and the B center.
pub fn pixel_distance(m: &MatchCenters, h: &Homography) -> Result<f64> {
    let (x, y) = apply_homography(h, m.a)?;
    Ok((x - m.b.0).hypot(y - m.b.1))
}

/// `ceil(2 * max(|dx|, |dy|) / P)`: 0 for coincident centers, 1 within the
/// same patch footprint, 2 within the ring of surrounding patches.
pub fn patch_distance(pred: (f64, f64), gt: (f64, f64), patch_size: usize) -> u64 {
    assert!(patch_size >= 1, "patch size must be positive");
    let m = (pred.0 - gt.0).abs().max((pred.1 - gt.1).abs());
    snap(2.0 * m / patch_size as f64).ceil() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    /// Share of matches kept, most confident first.
    pub cum_fraction: f64,
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_matches: usize,
    /// `None` when there are no matches.
    pub mean_px_dist: Option<f64>,
    pub acc_at: Vec<CurvePoint>,
    pub patch_acc_at: Vec<CurvePoint>,
    pub ranked_surface: Vec<SurfacePoint>,
}

impl EvalReport {
    pub fn acc(&self, threshold: f64) -> Option<f64> {
        self.acc_at.iter().find(|p| p.threshold == threshold).map(|p| p.fraction)
    }

    pub fn patch_acc(&self, threshold: f64) -> Option<f64> {
        self.patch_acc_at.iter().find(|p| p.threshold == threshold).map(|p| p.fraction)
    }
}

pub const DEFAULT_PX_THRESHOLDS: [f64; 10] = [1.0, 2.0, 3.0, 5.0, 8.0, 10.0, 15.0, 20.0, 30.0, 50.0];
pub const DEFAULT_PATCH_THRESHOLDS: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];

fn fraction_within(values: &[f64], t: f64) -> f64 {
    values.iter().filter(|&&v| v <= t).count() as f64 / values.len() as f64
}

/// Scores every triplet independently; one-to-many matches each count.
pub fn score(
    matches: &[MatchTriplet],
    a_geom: &GridGeometry,
    b_geom: &GridGeometry,
    h: &Homography,
    px_thresholds: &[f64],
    patch_thresholds: &[f64],
) -> Result<EvalReport> {
    let mut sorted = matches.to_vec();
    sort_triplets(&mut sorted);
    let centers: Vec<(MatchCenters, f64)> = sorted.iter().map(|t| (MatchCenters::of(t, a_geom, b_geom), t.dist)).collect();
    score_centers(&centers, h, px_thresholds, patch_thresholds)
}

/// Scores `(centers, dist)` pairs. Ranking uses `dist`, ties keep input order.
pub fn score_centers(
    matches: &[(MatchCenters, f64)],
    h: &Homography,
    px_thresholds: &[f64],
    patch_thresholds: &[f64],
) -> Result<EvalReport> {
    if matches.is_empty() {
        return Ok(EvalReport { n_matches: 0, mean_px_dist: None, acc_at: vec![], patch_acc_at: vec![], ranked_surface: vec![] });
    }
    let mut sorted = matches.to_vec();
    sorted.sort_by(|x, y| x.1.total_cmp(&y.1));
    let mut px = Vec::with_capacity(sorted.len());
    let mut patch = Vec::with_capacity(sorted.len());
    for (m, _) in &sorted {
        let projected = apply_homography(h, m.a)?;
        px.push((projected.0 - m.b.0).hypot(projected.1 - m.b.1));
        patch.push(patch_distance(projected, m.b, m.patch_size) as f64);
    }
    let n = px.len();
    let mut px_t = px_thresholds.to_vec();
    px_t.sort_by(f64::total_cmp);
    let mut patch_t = patch_thresholds.to_vec();
    patch_t.sort_by(f64::total_cmp);

    let acc_at = px_t.iter().map(|&t| CurvePoint { threshold: t, fraction: fraction_within(&px, t) }).collect();
    let patch_acc_at = patch_t.iter().map(|&t| CurvePoint { threshold: t, fraction: fraction_within(&patch, t) }).collect();
    let mut ranked_surface = Vec::new();
    for step in 1..=10 {
        let cum_fraction = step as f64 / 10.0;
        let k = ((snap(n as f64 * cum_fraction)).ceil() as usize).clamp(1, n);
        for &t in &px_t {
            ranked_surface.push(SurfacePoint { cum_fraction, threshold: t, accuracy: fraction_within(&px[..k], t) });
        }
    }
    Ok(EvalReport {
        n_matches: n,
        mean_px_dist: Some(px.iter().sum::<f64>() / n as f64),
        acc_at,
        patch_acc_at,
        ranked_surface,
    })
}

/// Mean distance across several scenes, both ways it can be pooled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenes: usize,
    pub total_matches: usize,
    /// Over all matches of all scenes.
    pub pooled_mean_px_dist: Option<f64>,
    /// Average of the per-scene means, scenes without matches skipped.
    pub mean_of_scene_means: Option<f64>,
}

pub fn aggregate(reports: &[EvalReport]) -> Aggregate {
    let total_matches = reports.iter().map(|r| r.n_matches).sum();
    let with: Vec<(usize, f64)> = reports.iter().filter_map(|r| r.mean_px_dist.map(|m| (r.n_matches, m))).collect();
    let pooled = (total_matches > 0).then(|| with.iter().map(|(n, m)| *n as f64 * m).sum::<f64>() / total_matches as f64);
    let per_scene = (!with.is_empty()).then(|| with.iter().map(|(_, m)| m).sum::<f64>() / with.len() as f64);
    Aggregate { scenes: reports.len(), total_matches, pooled_mean_px_dist: pooled, mean_of_scene_means: per_scene }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::PatchId;
    use proptest::prelude::*;

    fn grid(p: usize, rows: usize, cols: usize) -> GridGeometry {
        GridGeometry { patch_size: p, stride: p, rows, cols }
    }

    #[test]
    fn apply_examples() {
        assert_eq!(apply_homography(&Homography::identity(), (10.0, 20.0)).unwrap(), (10.0, 20.0));
        assert_eq!(apply_homography(&Homography::translation(5.0, -3.0), (0.0, 0.0)).unwrap(), (5.0, -3.0));
        assert_eq!(apply_homography(&Homography::scaling(2.0, 2.0).unwrap(), (3.0, 4.0)).unwrap(), (6.0, 8.0));
    }

    #[test]
    fn point_at_infinity() {
        let h = Homography::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(apply_homography(&h, (-1.0, 5.0)), Err(Error::PointAtInfinity)));
    }

    #[test]
    fn singular_rejected() {
        let r = Homography::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(r, Err(Error::SingularHomography(_))));
    }

    #[test]
    fn normalizes_and_round_trips_text() {
        let h = Homography::new([[2.0, 0.2, 10.0], [0.1, 2.0, -4.0], [0.0002, 0.0, 2.0]]).unwrap();
        assert_eq!(h.rows()[2][2], 1.0);
        assert_eq!(h.rows()[0][0], 1.0);
        assert_eq!(Homography::parse(&h.to_string()).unwrap(), h);
        assert!(Homography::parse("1 0 0 0 1 0 0 0").is_err());
        assert!(Homography::parse("1 0 0 0 1 0 0 0 x").is_err());
    }

    #[test]
    fn inverse_undoes() {
        let h = Homography::new([[1.1, 0.05, 3.0], [-0.02, 0.95, 7.0], [1e-4, -2e-4, 1.0]]).unwrap();
        let inv = h.inverse().unwrap();
        let (x, y) = h.apply(100.0, 50.0).unwrap();
        let (u, v) = inv.apply(x, y).unwrap();
        assert!((u - 100.0).abs() < 1e-9 && (v - 50.0).abs() < 1e-9);
        assert!(h.compose(&inv).unwrap().rows().iter().flatten().zip([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn pixel_distance_examples() {
        let g = grid(8, 10, 10);
        let t = |a: (usize, usize), b: (usize, usize)| MatchTriplet::new(PatchId::new(0, a.0, a.1), PatchId::new(0, b.0, b.1), 0.0);
        let same = MatchCenters::of(&t((2, 3), (2, 3)), &g, &g);
        assert_eq!(pixel_distance(&same, &Homography::identity()).unwrap(), 0.0);
        let shifted = MatchCenters::of(&t((2, 3), (2, 5)), &g, &g);
        assert_eq!(pixel_distance(&shifted, &Homography::translation(16.0, 0.0)).unwrap(), 0.0);
        let short = MatchCenters::of(&t((2, 3), (2, 4)), &g, &g);
        assert_eq!(pixel_distance(&short, &Homography::translation(16.0, 0.0)).unwrap(), 8.0);
    }

    #[test]
    fn patch_distance_examples() {
        assert_eq!(patch_distance((5.0, 5.0), (5.0, 5.0), 8), 0);
        assert_eq!(patch_distance((3.0, 0.0), (0.0, 0.0), 8), 1);
        assert_eq!(patch_distance((8.0, 4.0), (0.0, 0.0), 8), 2);
        assert_eq!(patch_distance((4.0 + 1e-12, 0.0), (0.0, 0.0), 8), 1);
    }

    #[test]
    fn score_counts() {
        let g = grid(8, 4, 20);
        let h = Homography::translation(16.0, 0.0);
        let exact: Vec<MatchTriplet> =
            (0..4).map(|r| MatchTriplet::new(PatchId::new(0, r, 0), PatchId::new(0, r, 2), 0.1)).collect();
        let rep = score(&exact, &g, &g, &h, &[1.0, 5.0], &[0.0, 1.0]).unwrap();
        assert!(rep.acc_at.iter().chain(&rep.patch_acc_at).all(|p| p.fraction == 1.0));
        assert_eq!(rep.mean_px_dist, Some(0.0));

        // Two exact, two off by 10 px (B center 10 px right of the target).
        let g2 = GridGeometry { patch_size: 8, stride: 2, rows: 4, cols: 40 };
        let mut half = exact[..0].to_vec();
        for r in 0..2 {
            half.push(MatchTriplet::new(PatchId::new(0, r, 0), PatchId::new(0, r, 8), 0.1));
            half.push(MatchTriplet::new(PatchId::new(0, r + 2, 0), PatchId::new(0, r + 2, 13), 0.2));
        }
        let rep = score(&half, &g2, &g2, &h, &[5.0, 10.0], &[]).unwrap();
        assert_eq!(rep.acc(5.0), Some(0.5));
        assert_eq!(rep.acc(10.0), Some(1.0));
        assert_eq!(rep.mean_px_dist, Some(5.0));
    }

    #[test]
    fn empty_score() {
        let g = grid(8, 2, 2);
        let rep = score(&[], &g, &g, &Homography::identity(), &[1.0], &[1.0]).unwrap();
        assert_eq!(rep.n_matches, 0);
        assert!(rep.acc_at.is_empty() && rep.ranked_surface.is_empty());
    }

    #[test]
    fn confident_prefix_beats_whole() {
        // Error grows with dist: lower dist means a closer B patch.
        let g = GridGeometry { patch_size: 8, stride: 1, rows: 1, cols: 200 };
        let h = Homography::identity();
        let m: Vec<MatchTriplet> = (0..50)
            .map(|i| MatchTriplet::new(PatchId::new(0, 0, 0), PatchId::new(0, 0, i * 2), i as f64 / 50.0))
            .collect();
        let rep = score(&m, &g, &g, &h, &[20.0], &[]).unwrap();
        let top20 = rep.ranked_surface.iter().find(|p| (p.cum_fraction - 0.2).abs() < 1e-12).unwrap();
        let all = rep.ranked_surface.iter().find(|p| p.cum_fraction == 1.0).unwrap();
        assert!(top20.accuracy >= all.accuracy);
        assert_eq!(all.accuracy, rep.acc(20.0).unwrap());
        assert_eq!(top20.accuracy, 1.0);
    }

    #[test]
    fn aggregate_means() {
        let r = |n, m| EvalReport { n_matches: n, mean_px_dist: m, acc_at: vec![], patch_acc_at: vec![], ranked_surface: vec![] };
        let a = aggregate(&[r(3, Some(1.0)), r(1, Some(5.0)), r(0, None)]);
        assert_eq!(a.total_matches, 4);
        assert_eq!(a.pooled_mean_px_dist, Some(2.0));
        assert_eq!(a.mean_of_scene_means, Some(3.0));
    }

    #[test]
    fn within_square_brute_force() {
        for p in [4usize, 8, 16] {
            let half = p as f64 / 2.0;
            let bound = 2 * p as i64;
            for dx in -bound..=bound {
                for dy in -bound..=bound {
                    let inside = (dx as f64).abs() <= half && (dy as f64).abs() <= half;
                    let d = patch_distance((dx as f64 + 0.5, dy as f64 - 0.5), (0.5, -0.5), p);
                    assert_eq!(d <= 1, inside, "P={p} offset=({dx},{dy})");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn patch_distance_symmetric(x1 in -500.0..500.0f64, y1 in -500.0..500.0f64, x2 in -500.0..500.0f64, y2 in -500.0..500.0f64, p in 1usize..64) {
            prop_assert_eq!(patch_distance((x1, y1), (x2, y2), p), patch_distance((x2, y2), (x1, y1), p));
        }

        #[test]
        fn curves_monotone(offsets in proptest::collection::vec((0usize..30, 0usize..4), 1..60)) {
            let g = GridGeometry { patch_size: 8, stride: 2, rows: 8, cols: 40 };
            let m: Vec<MatchTriplet> = offsets.iter().enumerate()
                .map(|(i, &(c, r))| MatchTriplet::new(PatchId::new(0, 0, 5), PatchId::new(0, r, c), i as f64 / 100.0))
                .collect();
            let rep = score(&m, &g, &g, &Homography::identity(), &DEFAULT_PX_THRESHOLDS, &DEFAULT_PATCH_THRESHOLDS).unwrap();
            for w in rep.acc_at.windows(2).chain(rep.patch_acc_at.windows(2)) {
                prop_assert!(w[0].fraction <= w[1].fraction);
            }
            prop_assert!(rep.ranked_surface.iter().all(|s| (0.0..=1.0).contains(&s.accuracy)));
        }
    }
}
