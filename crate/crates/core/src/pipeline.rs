//! End-to-end run: state sequences for both videos, hierarchical matching,
//! and refinement after every level.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::MatchCenters;
use crate::matcher::{run_hierarchy_with, LevelResult, MatchTriplet};
use crate::motion_state::{build_sequences, GridGeometry, SequenceSet};
use crate::refine::refine_level;
use crate::sequence::PatchId;
use crate::video_io::FrameSource;

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub a: SequenceSet,
    pub b: SequenceSet,
    pub levels: Vec<LevelResult>,
    pub state_time: Duration,
}

impl PipelineOutput {
    pub fn finest(&self) -> &LevelResult {
        self.levels.last().expect("a plan has at least one level")
    }

    pub fn geometries(&self, level: usize) -> (GridGeometry, GridGeometry) {
        (self.a.levels[level].geometry, self.b.levels[level].geometry)
    }

    pub fn match_file(&self, level: usize) -> MatchFile {
        let (ga, gb) = self.geometries(level);
        MatchFile::new(&self.levels[level], &ga, &gb)
    }

    /// Number of states actually compared.
    pub fn states(&self) -> usize {
        self.a.len.min(self.b.len)
    }
}

/// Runs hierarchical matching on prebuilt sequences.
pub fn match_sequences(a: &SequenceSet, b: &SequenceSet, config: &Config) -> Result<Vec<LevelResult>> {
    let refine = config.refine.clone();
    let (enabled, seed) = (config.refine_enabled, config.rng_seed);
    run_hierarchy_with(a, b, &config.plan, &config.matching, |ctx, triplets| {
        if enabled {
            refine_level(&triplets, ctx, &refine, seed)
        } else {
            triplets
        }
    })
}

pub fn run_pipeline(a: &dyn FrameSource, b: &dyn FrameSource, config: &Config) -> Result<PipelineOutput> {
    config.validate()?;
    let started = Instant::now();
    let (sa, sb) = rayon::join(
        || build_sequences(a, &config.plan.levels, &config.thresholds, config.max_states),
        || build_sequences(b, &config.plan.levels, &config.thresholds, config.max_states),
    );
    let (sa, sb) = (sa?, sb?);
    let state_time = started.elapsed();
    let levels = match_sequences(&sa, &sb, config)?;
    Ok(PipelineOutput { a: sa, b: sb, levels, state_time })
}

/// One match as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// Grid (row, col) in A.
    pub a: [usize; 2],
    pub b: [usize; 2],
    /// Patch centers, (x, y) pixels.
    pub a_px: [f64; 2],
    pub b_px: [f64; 2],
    pub dist: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refined: bool,
}

/// Contents of a `matches_L{level}.json` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchFile {
    pub level: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub matches: Vec<MatchRecord>,
}

impl MatchFile {
    pub fn new(result: &LevelResult, a_geom: &GridGeometry, b_geom: &GridGeometry) -> Self {
        let matches = result
            .triplets
            .iter()
            .map(|t| {
                let c = MatchCenters::of(t, a_geom, b_geom);
                MatchRecord {
                    a: [t.a.row, t.a.col],
                    b: [t.b.row, t.b.col],
                    a_px: [c.a.0, c.a.1],
                    b_px: [c.b.0, c.b.1],
                    dist: t.dist,
                    refined: t.refined,
                }
            })
            .collect();
        MatchFile { level: result.level, patch_size: result.spec.patch_size, stride: result.spec.stride, matches }
    }

    pub fn file_name(level: usize) -> String {
        format!("matches_L{level}.json")
    }

    pub fn triplets(&self) -> Vec<MatchTriplet> {
        self.matches
            .iter()
            .map(|m| MatchTriplet {
                a: PatchId::new(self.level, m.a[0], m.a[1]),
                b: PatchId::new(self.level, m.b[0], m.b[1]),
                dist: m.dist,
                refined: m.refined,
            })
            .collect()
    }

    pub fn centers(&self) -> Vec<(MatchCenters, f64)> {
        self.matches
            .iter()
            .map(|m| {
                let c = MatchCenters { a: (m.a_px[0], m.a_px[1]), b: (m.b_px[0], m.b_px[1]), patch_size: self.patch_size };
                (c, m.dist)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("match records always serialize") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Homography;
    use crate::synth::{make_pair, PairSpec, SceneSpec};

    fn small_config() -> Config {
        let mut c = Config::parse("levels=16,8\nseg_len=50\n").unwrap().config;
        c.max_states = None;
        c
    }

    #[test]
    fn self_match_has_zero_distance() {
        let scene = SceneSpec::random(128, 96, 161, 4, 3);
        let (a, b, _) = make_pair(&PairSpec::new(scene, Homography::identity())).unwrap();
        let out = run_pipeline(&a, &b, &small_config()).unwrap();
        let finest = out.finest();
        assert!(!finest.triplets.is_empty());
        let best = crate::matcher::best_per_a(&finest.triplets);
        assert!(best.iter().all(|t| t.dist == 0.0));
        let exact = best.iter().filter(|t| (t.a.row, t.a.col) == (t.b.row, t.b.col)).count();
        assert!(exact * 10 >= best.len() * 9, "{exact} of {}", best.len());
    }

    #[test]
    fn static_videos_match_nothing() {
        let scene = SceneSpec::random(64, 64, 21, 0, 1);
        let (a, b, _) = make_pair(&PairSpec::new(scene, Homography::identity())).unwrap();
        let out = run_pipeline(&a, &b, &small_config()).unwrap();
        assert!(out.levels.iter().all(|l| l.triplets.is_empty()));
    }

    #[test]
    fn match_file_round_trip() {
        let scene = SceneSpec::random(96, 64, 81, 3, 8);
        let (a, b, _) = make_pair(&PairSpec::new(scene, Homography::translation(8.0, 0.0))).unwrap();
        let out = run_pipeline(&a, &b, &small_config()).unwrap();
        let f = out.match_file(1);
        let back: MatchFile = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.triplets(), out.levels[1].triplets);
        let json = f.to_json();
        assert!(json.contains("\"a_px\""));
        assert_eq!(json.contains("\"refined\""), f.matches.iter().any(|m| m.refined));
    }
}
