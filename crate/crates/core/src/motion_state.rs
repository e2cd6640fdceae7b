//! Motion-state construction.
//!
//! Frames are consumed in triplets `(2t, 2t+1, 2t+2)`; each triplet yields one
//! binary motion mask, one integral image over that mask, and one motion state
//! per patch at every hierarchy level. Patch counts at all levels are rectangle
//! sums over the same integral image, so a coarse patch's count is exactly the
//! sum of the counts of the fine patches that tile it.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{PatchId, StateSequence};
use crate::video_io::{Frame, FrameSource, MIN_FRAMES};

/// Thresholds for mask and state construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Per-pixel absolute difference threshold, in gray levels.
    pub t1: u8,
    /// Motion-pixel fraction for the finest level.
    pub t2_frac: f64,
    /// Motion-pixel fraction for aggregated coarser levels.
    pub t3_frac: f64,
    pub seg_len: usize,
    pub min_motion_frac: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { t1: 4, t2_frac: 1.0 / 6.0, t3_frac: 1.0 / 6.0, seg_len: 500, min_motion_frac: 1.0 / 30.0 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.t1 < 1 {
            return bad("t1 must be at least 1");
        }
        for (name, f) in [("t2_frac", self.t2_frac), ("t3_frac", self.t3_frac)] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(&format!("{name} must lie in (0, 1]"));
            }
        }
        if self.seg_len < 1 {
            return bad("seg_len must be at least 1");
        }
        if !(0.0..1.0).contains(&self.min_motion_frac) {
            return bad("min_motion_frac must lie in [0, 1)");
        }
        Ok(())
    }
}

/// One hierarchy level: square patch side and grid stride, both in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub patch_size: usize,
    pub stride: usize,
}

impl LevelSpec {
    pub fn new(patch_size: usize, stride: usize) -> Self {
        LevelSpec { patch_size, stride }
    }

    pub fn tiled(patch_size: usize) -> Self {
        LevelSpec { patch_size, stride: patch_size }
    }

    pub fn area(&self) -> usize {
        self.patch_size * self.patch_size
    }
}

/// Patch grid laid over a (possibly cropped) image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub patch_size: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl GridGeometry {
    pub fn over(spec: LevelSpec, width: usize, height: usize) -> Result<Self> {
        let LevelSpec { patch_size, stride } = spec;
        if patch_size == 0 || stride == 0 || stride > patch_size {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= stride <= patch_size, got patch {patch_size} stride {stride}"
            )));
        }
        if patch_size > width.min(height) {
            return Err(Error::InvalidParameter(format!(
                "patch size {patch_size} exceeds image {width}x{height}"
            )));
        }
        Ok(GridGeometry {
            patch_size,
            stride,
            rows: (height - patch_size) / stride + 1,
            cols: (width - patch_size) / stride + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Top-left pixel of a patch.
    pub fn origin(&self, row: usize, col: usize) -> (usize, usize) {
        (col * self.stride, row * self.stride)
    }

    /// Continuous-coordinate patch center: `origin + P/2 - 0.5`.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        let (x0, y0) = self.origin(row, col);
        let half = self.patch_size as f64 / 2.0 - 0.5;
        (x0 as f64 + half, y0 as f64 + half)
    }

    /// Rows and columns of patches lying entirely inside the pixel rectangle
    /// `[x0, x1) x [y0, y1)`, as half-open index ranges.
    pub fn patches_within(
        &self,
        x0: isize,
        y0: isize,
        x1: isize,
        y1: isize,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let axis = |lo: isize, hi: isize, n: usize| {
            let s = self.stride as isize;
            let p = self.patch_size as isize;
            let first = if lo <= 0 { 0 } else { (lo + s - 1) / s };
            let last_excl = if hi - p < 0 { 0 } else { (hi - p) / s + 1 };
            let first = first.max(0) as usize;
            let last_excl = (last_excl.max(0) as usize).min(n);
            first.min(last_excl)..last_excl
        };
        (axis(y0, y1, self.rows), axis(x0, x1, self.cols))
    }
}

/// Binary motion flags for one state index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionMask {
    pub state_index: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major, one byte per pixel, values 0 or 1.
    pub bits: Vec<u8>,
}

impl MotionMask {
    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

fn check_same_dims(frames: &[&Frame]) -> Result<()> {
    let (w, h) = (frames[0].width, frames[0].height);
    for f in &frames[1..] {
        if (f.width, f.height) != (w, h) {
            return Err(Error::DimensionMismatch {
                index: f.index,
                expected_w: w,
                expected_h: h,
                found_w: f.width,
                found_h: f.height,
            });
        }
    }
    Ok(())
}

/// Three-frame differencing: a pixel moves iff both consecutive absolute
/// differences exceed `t1`.
pub fn motion_mask(prev: &Frame, mid: &Frame, next: &Frame, t1: u8) -> Result<MotionMask> {
    check_same_dims(&[prev, mid, next])?;
    let (w, h) = (mid.width, mid.height);
    let mut bits = vec![0u8; w * h];
    if w > 0 {
        bits.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let off = y * w;
            let (p, m, n) = (&prev.data[off..off + w], &mid.data[off..off + w], &next.data[off..off + w]);
            for x in 0..w {
                let d1 = m[x].abs_diff(p[x]);
                let d2 = n[x].abs_diff(m[x]);
                row[x] = (d1 > t1 && d2 > t1) as u8;
            }
        });
    }
    Ok(MotionMask { state_index: prev.index / 2, width: w, height: h, bits })
}

/// Summed-area table with a zero top row and left column.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<u32>,
}

impl IntegralImage {
    pub fn of_mask(mask: &MotionMask) -> Self {
        let (w, h) = (mask.width, mask.height);
        let stride = w + 1;
        let mut table = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut run = 0u32;
            for x in 0..w {
                run += mask.bits[y * w + x] as u32;
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + run;
            }
        }
        IntegralImage { width: w, height: h, table }
    }

    /// Sum over the rectangle with top-left `(x, y)` and size `w x h`.
    #[inline]
    pub fn sum(&self, x: usize, y: usize, w: usize, h: usize) -> u32 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let s = self.width + 1;
        let (x1, y1) = (x + w, y + h);
        self.table[y1 * s + x1] + self.table[y * s + x] - self.table[y * s + x1] - self.table[y1 * s + x]
    }
}

/// Per-patch motion-pixel counts for one state at one level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountGrid {
    pub state_index: usize,
    pub level: usize,
    pub geometry: GridGeometry,
    pub counts: Vec<u32>,
}

impl CountGrid {
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[self.geometry.index(row, col)]
    }
}

fn counts_from_integral(integral: &IntegralImage, geometry: GridGeometry) -> Vec<u32> {
    let p = geometry.patch_size;
    (0..geometry.rows)
        .flat_map(|r| (0..geometry.cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (x, y) = geometry.origin(r, c);
            integral.sum(x, y, p, p)
        })
        .collect()
}

/// Counts motion pixels in every `patch_size` square placed every `stride` pixels.
pub fn count_patches(mask: &MotionMask, patch_size: usize, stride: usize) -> Result<CountGrid> {
    let geometry = GridGeometry::over(LevelSpec::new(patch_size, stride), mask.width, mask.height)?;
    let integral = IntegralImage::of_mask(mask);
    Ok(CountGrid { state_index: mask.state_index, level: 0, geometry, counts: counts_from_integral(&integral, geometry) })
}

/// Sums each 2x2 block of a tiled child grid into its parent.
pub fn sum_children(child: &CountGrid) -> Result<CountGrid> {
    let g = child.geometry;
    if g.stride != g.patch_size {
        return Err(Error::InvalidParameter("child grid must be tiled (stride = patch size)".into()));
    }
    let geometry = GridGeometry { patch_size: g.patch_size * 2, stride: g.stride * 2, rows: g.rows / 2, cols: g.cols / 2 };
    let mut counts = Vec::with_capacity(geometry.len());
    for r in 0..geometry.rows {
        for c in 0..geometry.cols {
            counts.push(
                child.get(2 * r, 2 * c)
                    + child.get(2 * r, 2 * c + 1)
                    + child.get(2 * r + 1, 2 * c)
                    + child.get(2 * r + 1, 2 * c + 1),
            );
        }
    }
    Ok(CountGrid { state_index: child.state_index, level: child.level.saturating_sub(1), geometry, counts })
}

/// Rounds `x` to the nearest integer when it is within float noise of one.
pub(crate) fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// State of a patch: 1 iff `count > frac * patch_area`.
pub fn patch_state(count: u32, patch_area: usize, frac: f64) -> bool {
    count as f64 > snap(frac * patch_area as f64)
}

/// All state sequences of one level, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSequences {
    pub level: usize,
    pub geometry: GridGeometry,
    pub seqs: Vec<StateSequence>,
}

impl LevelSequences {
    pub fn get(&self, row: usize, col: usize) -> &StateSequence {
        &self.seqs[self.geometry.index(row, col)]
    }

    pub fn seq(&self, id: PatchId) -> &StateSequence {
        self.get(id.row, id.col)
    }

    pub fn spec(&self) -> LevelSpec {
        LevelSpec::new(self.geometry.patch_size, self.geometry.stride)
    }
}

/// State sequences of one video at every hierarchy level.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSet {
    /// Sequence length shared by every patch.
    pub len: usize,
    pub seg_len: usize,
    pub levels: Vec<LevelSequences>,
}

impl SequenceSet {
    pub fn truncated(&self, len: usize) -> SequenceSet {
        if len >= self.len {
            return self.clone();
        }
        SequenceSet {
            len,
            seg_len: self.seg_len,
            levels: self
                .levels
                .iter()
                .map(|l| LevelSequences {
                    level: l.level,
                    geometry: l.geometry,
                    seqs: l.seqs.iter().map(|s| s.truncated(len)).collect(),
                })
                .collect(),
        }
    }
}

/// Number of states obtainable from `frame_count` frames, capped by `max_states`.
pub fn state_count(frame_count: usize, max_states: Option<usize>) -> usize {
    let available = frame_count.saturating_sub(1) / 2;
    max_states.map_or(available, |m| m.min(available))
}

/// Crops a dimension down to a multiple of the coarsest patch.
pub fn cropped_extent(extent: usize, coarsest_patch: usize) -> usize {
    extent / coarsest_patch * coarsest_patch
}

pub fn validate_levels(levels: &[LevelSpec]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("at least one level is required".into()));
    }
    for pair in levels.windows(2) {
        if pair[1].patch_size >= pair[0].patch_size {
            return Err(Error::InvalidParameter("levels must be ordered coarse to fine".into()));
        }
    }
    Ok(())
}

/// Streams `src` once and builds per-level state sequences.
pub fn build_sequences(
    src: &dyn FrameSource,
    levels: &[LevelSpec],
    th: &Thresholds,
    max_states: Option<usize>,
) -> Result<SequenceSet> {
    th.validate()?;
    validate_levels(levels)?;
    if max_states == Some(0) {
        return Err(Error::InvalidParameter("max_states must be at least 1".into()));
    }
    if src.frame_count() < MIN_FRAMES {
        return Err(Error::TooFewFrames { found: src.frame_count(), required: MIN_FRAMES });
    }
    let (w, h) = src.dimensions();
    let coarsest = levels[0].patch_size;
    let (cw, ch) = (cropped_extent(w, coarsest), cropped_extent(h, coarsest));
    let geometries = levels
        .iter()
        .map(|&spec| GridGeometry::over(spec, cw, ch))
        .collect::<Result<Vec<_>>>()?;

    let len = state_count(src.frame_count(), max_states);
    let finest = levels.len() - 1;
    let mut out: Vec<LevelSequences> = geometries
        .iter()
        .enumerate()
        .map(|(level, &geometry)| LevelSequences {
            level,
            geometry,
            seqs: (0..geometry.rows)
                .flat_map(|r| (0..geometry.cols).map(move |c| (r, c)))
                .map(|(r, c)| StateSequence::zeros(PatchId::new(level, r, c), len, th.seg_len))
                .collect(),
        })
        .collect();

    let mut prev = src.read_frame(0)?;
    for t in 0..len {
        let (mid, next) = rayon::join(|| src.read_frame(2 * t + 1), || src.read_frame(2 * t + 2));
        let (mid, next) = (mid?, next?);
        let mask = motion_mask(&prev, &mid, &next, th.t1)?;
        let integral = IntegralImage::of_mask(&mask);
        for (level, seqs) in out.iter_mut().enumerate() {
            let frac = if level == finest { th.t2_frac } else { th.t3_frac };
            let geometry = seqs.geometry;
            let counts = counts_from_integral(&integral, geometry);
            let area = geometry.patch_size * geometry.patch_size;
            for (seq, &count) in seqs.seqs.iter_mut().zip(&counts) {
                if patch_state(count, area, frac) {
                    seq.set(t);
                }
            }
        }
        prev = next;
    }
    Ok(SequenceSet { len, seg_len: th.seg_len, levels: out })
}

const MAGIC: &[u8; 4] = b"FLSQ";
const VERSION: u16 = 1;

/// Serializes sequences in the `states.bin` layout: header, then each level's
/// sequences in grid row-major order as contiguous little-endian `u64` words.
pub fn write_states(mut w: impl Write, set: &SequenceSet) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(set.levels.len() as u16).to_le_bytes())?;
    for l in &set.levels {
        let g = l.geometry;
        for v in [g.patch_size, g.stride, g.rows, g.cols] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
    }
    w.write_all(&(set.len as u32).to_le_bytes())?;
    w.write_all(&(set.seg_len as u32).to_le_bytes())?;
    for l in &set.levels {
        for s in &l.seqs {
            for word in s.to_packed_words() {
                w.write_all(&word.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_states(mut r: impl Read) -> Result<SequenceSet> {
    let bad = |d: &str| Error::Parse { what: "states.bin", detail: d.to_string() };
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io("states.bin", e))?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let u16_at = |b: &[u8]| u16::from_le_bytes([b[0], b[1]]);
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let version = u16_at(take(2)?);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n_levels = u16_at(take(2)?) as usize;
    let mut geoms = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let v: Vec<usize> = (0..4).map(|_| take(4).map(u32_at)).collect::<Result<_>>()?;
        geoms.push(GridGeometry { patch_size: v[0], stride: v[1], rows: v[2], cols: v[3] });
    }
    let len = u32_at(take(4)?);
    let seg_len = u32_at(take(4)?);
    if seg_len == 0 {
        return Err(bad("zero segment length"));
    }
    let words = len.div_ceil(64);
    let mut levels = Vec::with_capacity(n_levels);
    for (level, geometry) in geoms.into_iter().enumerate() {
        let mut seqs = Vec::with_capacity(geometry.len());
        for r in 0..geometry.rows {
            for c in 0..geometry.cols {
                let raw = take(words * 8)?;
                let packed: Vec<u64> =
                    raw.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect();
                seqs.push(StateSequence::from_packed_words(PatchId::new(level, r, c), len, seg_len, &packed));
            }
        }
        levels.push(LevelSequences { level, geometry, seqs });
    }
    Ok(SequenceSet { len, seg_len, levels })
}

pub fn save_states(path: impl AsRef<Path>, set: &SequenceSet) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_states(&mut bytes, set).map_err(|e| Error::io(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_states(path: impl AsRef<Path>) -> Result<SequenceSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_states(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::MemoryVideo;
    use proptest::prelude::*;

    fn frame(index: usize, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Frame::new(index, w, h, data).unwrap()
    }

    fn mask_from(w: usize, h: usize, bits: Vec<u8>) -> MotionMask {
        MotionMask { state_index: 0, width: w, height: h, bits }
    }

    fn naive_count(mask: &MotionMask, x0: usize, y0: usize, p: usize) -> u32 {
        let mut n = 0;
        for y in y0..y0 + p {
            for x in x0..x0 + p {
                n += mask.bits[y * mask.width + x] as u32;
            }
        }
        n
    }

    #[test]
    fn static_scene_has_no_motion() {
        let f = |i| frame(i, 16, 12, |x, y| (x * 7 + y * 3) as u8);
        let m = motion_mask(&f(0), &f(1), &f(2), 4).unwrap();
        assert_eq!(m.ones(), 0);
    }

    #[test]
    fn conjunction_rule() {
        let a = frame(0, 2, 1, |_, _| 100);
        let b = frame(1, 2, 1, |_, _| 105);
        let c = frame(2, 2, 1, |x, _| if x == 0 { 110 } else { 105 });
        let m = motion_mask(&a, &b, &c, 4).unwrap();
        assert_eq!(m.bits, vec![1, 0]);
        // Exactly at the threshold is not motion.
        let d = frame(2, 2, 1, |_, _| 109);
        let e = frame(1, 2, 1, |_, _| 104);
        assert_eq!(motion_mask(&a, &e, &d, 4).unwrap().bits, vec![0, 0]);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = frame(0, 4, 4, |_, _| 0);
        let b = frame(1, 4, 3, |_, _| 0);
        assert!(matches!(motion_mask(&a, &b, &a, 4), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn count_examples() {
        let zeros = mask_from(16, 16, vec![0; 256]);
        assert!(count_patches(&zeros, 8, 8).unwrap().counts.iter().all(|&c| c == 0));
        let ones = mask_from(16, 16, vec![1; 256]);
        assert!(count_patches(&ones, 8, 8).unwrap().counts.iter().all(|&c| c == 64));

        let mut bits = vec![0; 256];
        bits[0] = 1;
        let single = mask_from(16, 16, bits);
        let grid = count_patches(&single, 8, 4).unwrap();
        assert_eq!((grid.geometry.rows, grid.geometry.cols), (3, 3));
        for r in 0..3 {
            for c in 0..3 {
                let contains = r * 4 == 0 && c * 4 == 0;
                assert_eq!(grid.get(r, c), contains as u32, "patch ({r},{c})");
            }
        }
    }

    #[test]
    fn count_rejects_bad_geometry() {
        let m = mask_from(8, 8, vec![0; 64]);
        assert!(count_patches(&m, 16, 16).is_err());
        assert!(count_patches(&m, 4, 5).is_err());
        assert!(count_patches(&m, 4, 0).is_err());
    }

    #[test]
    fn patch_state_strict_threshold() {
        assert!(!patch_state(0, 64, 1.0 / 6.0));
        assert!(patch_state(11, 64, 1.0 / 6.0));
        assert!(!patch_state(10, 64, 1.0 / 6.0));
        // 36/6 = 6 exactly; strict rule keeps 6 as 0.
        assert!(!patch_state(6, 36, 1.0 / 6.0));
        assert!(patch_state(7, 36, 1.0 / 6.0));
    }

    #[test]
    fn patches_within_rect() {
        let g = GridGeometry { patch_size: 8, stride: 8, rows: 4, cols: 4 };
        assert_eq!(g.patches_within(8, 0, 24, 16), (0..2, 1..3));
        assert_eq!(g.patches_within(-8, -8, 100, 100), (0..4, 0..4));
        let g = GridGeometry { patch_size: 8, stride: 4, rows: 7, cols: 7 };
        // Patches at x0 in {4, 8, 12} with x0 + 8 <= 20.
        assert_eq!(g.patches_within(4, 0, 20, 8).1, 1..4);
    }

    #[test]
    fn state_count_bookkeeping() {
        assert_eq!(state_count(3000, None), 1499);
        assert_eq!(state_count(3000, Some(400)), 400);
        assert_eq!(state_count(3, None), 1);
        assert_eq!(state_count(4, None), 1);
        assert_eq!(state_count(5, None), 2);
        for n in 3..50 {
            assert!(2 * state_count(n, None) + 1 <= n);
        }
    }

    #[test]
    fn static_video_gives_zero_sequences() {
        let frames = (0..9).map(|i| frame(i, 32, 32, |x, y| (x ^ y) as u8)).collect();
        let video = MemoryVideo::new(frames).unwrap();
        let set = build_sequences(&video, &[LevelSpec::tiled(16), LevelSpec::tiled(8)], &Thresholds::default(), None)
            .unwrap();
        assert_eq!(set.len, 4);
        assert!(set.levels.iter().all(|l| l.seqs.iter().all(|s| s.ones() == 0)));
    }

    /// A high-contrast checkerboard square that jumps by its own width every state.
    #[test]
    fn jumping_square_matches_pixel_simulation() {
        let (w, h) = (64, 32);
        let sq = 16;
        let pos = |frame: usize| -> (usize, usize) {
            // Positions change every frame; texture makes interior pixels change too.
            let step = frame % 4;
            (4 + step * 12, 4 + (frame % 3) * 5)
        };
        let render = |i: usize| {
            let (px, py) = pos(i);
            frame(i, w, h, |x, y| {
                if x >= px && x < px + sq && y >= py && y < py + sq {
                    if ((x - px) / 2 + (y - py) / 2 + i) % 2 == 0 { 230 } else { 30 }
                } else {
                    128
                }
            })
        };
        let frames: Vec<Frame> = (0..21).map(render).collect();
        let video = MemoryVideo::new(frames.clone()).unwrap();
        let th = Thresholds::default();
        let set = build_sequences(&video, &[LevelSpec::tiled(8)], &th, None).unwrap();
        assert_eq!(set.len, 10);

        // Oracle: brute-force per-pixel conjunction, per-cell counting.
        let lv = &set.levels[0];
        for t in 0..set.len {
            let (a, b, c) = (&frames[2 * t], &frames[2 * t + 1], &frames[2 * t + 2]);
            for r in 0..lv.geometry.rows {
                for col in 0..lv.geometry.cols {
                    let mut n = 0;
                    for y in r * 8..r * 8 + 8 {
                        for x in col * 8..col * 8 + 8 {
                            let d1 = (b.get(x, y) as i32 - a.get(x, y) as i32).abs();
                            let d2 = (c.get(x, y) as i32 - b.get(x, y) as i32).abs();
                            n += (d1 > 4 && d2 > 4) as u32;
                        }
                    }
                    assert_eq!(lv.get(r, col).get(t), n as f64 > 64.0 / 6.0, "t={t} cell=({r},{col})");
                }
            }
        }
        assert!(lv.seqs.iter().any(|s| s.ones() > 0));
    }

    #[test]
    fn cropping_to_coarsest_patch() {
        let frames = (0..3).map(|i| frame(i, 70, 50, |_, _| 0)).collect();
        let video = MemoryVideo::new(frames).unwrap();
        let set = build_sequences(&video, &[LevelSpec::tiled(16), LevelSpec::tiled(8)], &Thresholds::default(), None)
            .unwrap();
        assert_eq!((set.levels[0].geometry.cols, set.levels[0].geometry.rows), (4, 3));
        assert_eq!((set.levels[1].geometry.cols, set.levels[1].geometry.rows), (8, 6));
    }

    #[test]
    fn states_bin_round_trip() {
        let frames = (0..11)
            .map(|i| frame(i, 32, 32, |x, y| if (x + i * 3) % 7 < 3 && y < 20 { 200 } else { 10 }))
            .collect();
        let video = MemoryVideo::new(frames).unwrap();
        let th = Thresholds { seg_len: 3, ..Thresholds::default() };
        let set = build_sequences(&video, &[LevelSpec::tiled(16), LevelSpec::new(8, 4)], &th, None).unwrap();
        let mut bytes = Vec::new();
        write_states(&mut bytes, &set).unwrap();
        assert_eq!(&bytes[..4], b"FLSQ");
        assert_eq!(read_states(bytes.as_slice()).unwrap(), set);
        assert!(read_states(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn integral_matches_naive(
            w in 8usize..40, h in 8usize..40, seed in any::<u64>(), p in 1usize..8, s in 1usize..8
        ) {
            let s = s.min(p);
            let bits: Vec<u8> = (0..w * h).map(|i| ((seed.rotate_left((i % 64) as u32) ^ (i as u64 * 0x9E37)) % 3 == 0) as u8).collect();
            let mask = mask_from(w, h, bits);
            let grid = count_patches(&mask, p, s).unwrap();
            for r in 0..grid.geometry.rows {
                for c in 0..grid.geometry.cols {
                    let (x, y) = grid.geometry.origin(r, c);
                    prop_assert_eq!(grid.get(r, c), naive_count(&mask, x, y, p));
                }
            }
        }

        #[test]
        fn parent_count_is_sum_of_children(k in 1usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u32>()) {
            let (w, h) = (cols * 2 * k, rows * 2 * k);
            let data: Vec<u8> = (0..w * h).map(|i| (((i as u64 + seed as u64) * 2654435761) >> 7 & 1) as u8).collect();
            let mask = mask_from(w, h, data);
            let child = count_patches(&mask, k, k).unwrap();
            let parent = count_patches(&mask, 2 * k, 2 * k).unwrap();
            prop_assert_eq!(sum_children(&child).unwrap().counts, parent.counts);
        }

        #[test]
        fn inversion_preserves_mask(vals in proptest::collection::vec(any::<u8>(), 3 * 24), t1 in 1u8..40) {
            let mk = |i: usize, inv: bool| {
                let d: Vec<u8> = vals[i * 24..(i + 1) * 24].iter().map(|&v| if inv { 255 - v } else { v }).collect();
                Frame::new(i, 6, 4, d).unwrap()
            };
            let m = motion_mask(&mk(0, false), &mk(1, false), &mk(2, false), t1).unwrap();
            let mi = motion_mask(&mk(0, true), &mk(1, true), &mk(2, true), t1).unwrap();
            prop_assert_eq!(m, mi);
        }
    }
}
