//! Distance between motion signatures, and the segmented early abort that
//! skips most of the work for clearly unrelated pairs.

use flowmatch::matcher::{segmented_distance, sequence_distance};
use flowmatch::sequence::{PatchId, StateSequence};

fn seq(col: usize, bits: impl Fn(usize) -> bool) -> StateSequence {
    let bits: Vec<bool> = (0..2000).map(bits).collect();
    StateSequence::from_bits(PatchId::new(0, 0, col), &bits, 500)
}

fn main() {
    let walker = seq(0, |t| (t / 7) % 3 == 0);
    let same_walker = seq(1, |t| (t / 7) % 3 == 0);
    let late_walker = seq(2, |t| ((t + 3) / 7) % 3 == 0);
    let other = seq(3, |t| (t * 31 + 5) % 11 < 3);
    let still = seq(4, |_| false);

    for (name, s) in [("same", &same_walker), ("shifted", &late_walker), ("unrelated", &other), ("still", &still)] {
        let full = sequence_distance(&walker, s);
        let seg = segmented_distance(&walker, s, 0.2, 1);
        println!(
            "{name:>9}: d = {full:.3}; with threshold 0.2 {} after {} of {} segments",
            if seg.aborted { "aborted" } else { "kept" },
            seg.segments_evaluated,
            walker.n_segments()
        );
    }
}
