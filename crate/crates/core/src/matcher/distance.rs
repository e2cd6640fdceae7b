//! Synchronized-motion distance between two state sequences.
//!
//! `d = 1 - 2|s1 & s2| / (|s1| + |s2|)`, where `|.|` counts ones. Only shared
//! motion contributes; shared stillness does not, so quiet patches cannot
//! absorb each other. Two empty supports are maximally distant.

use crate::sequence::StateSequence;

/// Integer numerator and denominator of the distance, before division.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overlap {
    /// Ones in `s1 & s2`.
    pub both: u64,
    /// Ones in `s1` plus ones in `s2`.
    pub total: u64,
}

impl Overlap {
    pub fn distance(self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            (self.total - 2 * self.both) as f64 / self.total as f64
        }
    }

    pub fn is_empty(self) -> bool {
        self.total == 0
    }
}

impl std::ops::AddAssign for Overlap {
    fn add_assign(&mut self, rhs: Overlap) {
        self.both += rhs.both;
        self.total += rhs.total;
    }
}

#[inline]
fn and_ones(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as u64).sum()
}

fn check_aligned(s1: &StateSequence, s2: &StateSequence) {
    assert_eq!(s1.len(), s2.len(), "sequences must be truncated to a common length before matching");
    assert_eq!(s1.seg_len(), s2.seg_len(), "sequences must share a segment length");
}

/// Overlap over segment `k`.
pub fn segment_overlap(s1: &StateSequence, s2: &StateSequence, k: usize) -> Overlap {
    Overlap {
        both: and_ones(s1.segment_words(k), s2.segment_words(k)),
        total: (s1.ones_per_segment()[k] + s2.ones_per_segment()[k]) as u64,
    }
}

/// Overlap over the whole sequence.
pub fn overlap(s1: &StateSequence, s2: &StateSequence) -> Overlap {
    check_aligned(s1, s2);
    let both = (0..s1.n_segments()).map(|k| and_ones(s1.segment_words(k), s2.segment_words(k))).sum();
    Overlap { both, total: s1.ones() as u64 + s2.ones() as u64 }
}

pub fn sequence_distance(s1: &StateSequence, s2: &StateSequence) -> f64 {
    overlap(s1, s2).distance()
}

/// Distance of the first segment only; what threshold selection is based on.
pub fn first_segment_distance(s1: &StateSequence, s2: &StateSequence) -> f64 {
    check_aligned(s1, s2);
    if s1.n_segments() == 0 {
        return 1.0;
    }
    segment_overlap(s1, s2, 0).distance()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentedDistance {
    /// Full-sequence distance; meaningful only when not aborted.
    pub distance: f64,
    pub aborted: bool,
    pub segments_evaluated: usize,
    /// Accumulated numerator/denominator over the evaluated segments.
    pub overlap: Overlap,
}

/// Evaluates segment by segment, giving up once `max_bad` segments exceed
/// `per_seg_threshold`. Segments in which neither sequence moves carry no
/// evidence and never count as bad.
pub fn segmented_distance(
    s1: &StateSequence,
    s2: &StateSequence,
    per_seg_threshold: f64,
    max_bad: usize,
) -> SegmentedDistance {
    check_aligned(s1, s2);
    let mut acc = Overlap::default();
    let mut bad = 0usize;
    for k in 0..s1.n_segments() {
        let seg = segment_overlap(s1, s2, k);
        acc += seg;
        if !seg.is_empty() && seg.distance() > per_seg_threshold {
            bad += 1;
            if bad >= max_bad {
                return SegmentedDistance { distance: acc.distance(), aborted: true, segments_evaluated: k + 1, overlap: acc };
            }
        }
    }
    SegmentedDistance { distance: acc.distance(), aborted: false, segments_evaluated: s1.n_segments(), overlap: acc }
}
