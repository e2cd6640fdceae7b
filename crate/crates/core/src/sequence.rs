//! Bit-packed binary motion-state sequences.
//!
//! Each sequence is stored segment-aligned: segment `k` owns
//! `words_per_segment` consecutive `u64` words, with unused high bits zero. This
//! keeps per-segment AND/popcount a straight word loop with no masking.

use serde::{Deserialize, Serialize};

/// Identifies one patch: hierarchy level plus grid row/column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatchId {
    pub level: usize,
    pub row: usize,
    pub col: usize,
}

impl PatchId {
    pub fn new(level: usize, row: usize, col: usize) -> Self {
        PatchId { level, row, col }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSequence {
    pub patch: PatchId,
    len: usize,
    seg_len: usize,
    words: Vec<u64>,
    seg_ones: Vec<u32>,
}

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl StateSequence {
    /// An all-zero sequence of `len` states.
    pub fn zeros(patch: PatchId, len: usize, seg_len: usize) -> Self {
        assert!(seg_len >= 1, "segment length must be positive");
        let n_segs = len.div_ceil(seg_len);
        StateSequence {
            patch,
            len,
            seg_len,
            words: vec![0; n_segs * words_for(seg_len)],
            seg_ones: vec![0; n_segs],
        }
    }

    pub fn from_bits(patch: PatchId, bits: &[bool], seg_len: usize) -> Self {
        let mut s = Self::zeros(patch, bits.len(), seg_len);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i);
            }
        }
        s
    }

    #[inline]
    fn word_bit(&self, index: usize) -> (usize, u64) {
        let seg = index / self.seg_len;
        let within = index % self.seg_len;
        (seg * words_for(self.seg_len) + within / 64, 1u64 << (within % 64))
    }

    /// Sets state `index` to 1.
    pub fn set(&mut self, index: usize) {
        assert!(index < self.len, "state index {index} out of range {}", self.len);
        let (w, bit) = self.word_bit(index);
        if self.words[w] & bit == 0 {
            self.words[w] |= bit;
            self.seg_ones[index / self.seg_len] += 1;
        }
    }

    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len);
        let (w, bit) = self.word_bit(index);
        self.words[w] & bit != 0
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn seg_len(&self) -> usize {
        self.seg_len
    }

    pub fn n_segments(&self) -> usize {
        self.seg_ones.len()
    }

    /// Number of states in segment `k` (only the last may be short).
    pub fn segment_len(&self, k: usize) -> usize {
        let start = k * self.seg_len;
        (self.len - start).min(self.seg_len)
    }

    pub fn segment_words(&self, k: usize) -> &[u64] {
        let wps = words_for(self.seg_len);
        &self.words[k * wps..(k + 1) * wps]
    }

    pub fn ones_per_segment(&self) -> &[u32] {
        &self.seg_ones
    }

    pub fn ones(&self) -> u32 {
        self.seg_ones.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Keeps the first `len` states.
    pub fn truncated(&self, len: usize) -> StateSequence {
        if len >= self.len {
            return self.clone();
        }
        let mut out = StateSequence::zeros(self.patch, len, self.seg_len);
        let wps = words_for(self.seg_len);
        for k in 0..out.n_segments() {
            let seg_bits = out.segment_len(k);
            for j in 0..words_for(seg_bits) {
                let mut w = self.words[k * wps + j];
                let bits_here = (seg_bits - j * 64).min(64);
                if bits_here < 64 {
                    w &= (1u64 << bits_here) - 1;
                }
                out.words[k * wps + j] = w;
            }
            out.seg_ones[k] = out.segment_words(k).iter().map(|w| w.count_ones()).sum();
        }
        out
    }

    /// Contiguous little-endian packing: bit `i` of the stream is state `i`.
    pub fn to_packed_words(&self) -> Vec<u64> {
        let mut out = vec![0u64; words_for(self.len)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 64] |= 1 << (i % 64);
            }
        }
        out
    }

    pub fn from_packed_words(patch: PatchId, len: usize, seg_len: usize, packed: &[u64]) -> Self {
        let mut s = StateSequence::zeros(patch, len, seg_len);
        for i in 0..len {
            if packed[i / 64] >> (i % 64) & 1 == 1 {
                s.set(i);
            }
        }
        s
    }
}
