use std::cmp::Ordering;
use std::fmt;

/// A binary latent vector `s ∈ {0,1}^H`, stored as its sorted active indices.
///
/// States order lexicographically on their bit strings (bit 0 first), so
/// `0000 < 0001 < 0010 < 0100 < 1000 < 1010`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryState {
    h: usize,
    active: Vec<usize>,
}

impl BinaryState {
    pub fn zeros(h: usize) -> Self {
        BinaryState { h, active: Vec::new() }
    }

    pub fn ones(h: usize) -> Self {
        BinaryState { h, active: (0..h).collect() }
    }

    pub fn singleton(h: usize, idx: usize) -> Self {
        assert!(idx < h, "singleton index {idx} out of range for H = {h}");
        BinaryState { h, active: vec![idx] }
    }

    /// Panics if an index is `>= h`; duplicates are removed.
    pub fn from_active(h: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut active: Vec<usize> = indices.into_iter().collect();
        active.sort_unstable();
        active.dedup();
        assert!(active.last().is_none_or(|&i| i < h), "active index out of range for H = {h}");
        BinaryState { h, active }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        BinaryState {
            h: bits.len(),
            active: bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
        }
    }

    /// Bit `i` of `mask` is latent `i`.
    pub fn from_mask(h: usize, mask: u64) -> Self {
        debug_assert!(h >= 64 || mask >> h == 0);
        BinaryState {
            h,
            active: (0..h.min(64)).filter(|&i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn popcount(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.active.binary_search(&idx).is_ok()
    }

    pub fn bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.h];
        for &i in &self.active {
            bits[i] = true;
        }
        bits
    }

    pub fn as_f64(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.h];
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }
}

impl Ord for BinaryState {
    fn cmp(&self, other: &Self) -> Ordering {
        // The first index in the symmetric difference decides: whoever has
        // that bit set is larger.
        let (a, b) = (&self.active, &other.active);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
            }
        }
        match (i < a.len(), j < b.len()) {
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => self.h.cmp(&other.h),
        }
    }
}

impl PartialOrd for BinaryState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BinaryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
