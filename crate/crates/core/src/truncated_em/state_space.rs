use std::cmp::Ordering;

use super::TruncationConfig;
use crate::model::BinaryState;

/// Truncated state space `K_n` of one data point and the selected latent
/// set `I_n` it was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    index_set: Vec<usize>,
    states: Vec<BinaryState>,
}

impl StateSpace {
    /// `K_n` for a given sorted `index_set`, in canonical state order.
    pub fn from_index_set(h: usize, index_set: Vec<usize>, cfg: &TruncationConfig) -> Self {
        let mut states = subset_states(h, &index_set, 0, cfg.gamma);
        if cfg.include_singletons {
            states.extend(
                (0..h)
                    .filter(|i| index_set.binary_search(i).is_err())
                    .map(|i| BinaryState::singleton(h, i)),
            );
        }
        states.sort();
        StateSpace { index_set, states }
    }

    /// Every one of the `2^H` states.
    pub fn full(h: usize) -> Self {
        Self::from_index_set(h, (0..h).collect(), &TruncationConfig::full(h))
    }

    /// Builds a space from an explicit state list (sorted and deduplicated).
    pub fn from_states(index_set: Vec<usize>, mut states: Vec<BinaryState>) -> Self {
        states.sort();
        states.dedup();
        StateSpace { index_set, states }
    }

    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    pub fn states(&self) -> &[BinaryState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains(&self, s: &BinaryState) -> bool {
        self.states.binary_search(s).is_ok()
    }
}

/// All states whose active set lies in `index_set` with
/// `min_bits <= popcount <= max_bits`.
pub(crate) fn subset_states(h: usize, index_set: &[usize], min_bits: usize, max_bits: usize) -> Vec<BinaryState> {
    let k = index_set.len();
    debug_assert!(k < 64);
    (0..1u64 << k)
        .filter(|m| (min_bits..=max_bits).contains(&(m.count_ones() as usize)))
        .map(|m| BinaryState::from_active(h, (0..k).filter(|&b| m >> b & 1 == 1).map(|b| index_set[b])))
        .collect()
}

/// The `h_prime` indices with the largest scores, ties broken toward the
/// lower index, returned sorted ascending.
pub fn select_indices(scores: &[f64], h_prime: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // NaN scores rank last
    order.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => {
            scores[a].is_nan().cmp(&scores[b].is_nan()).then(a.cmp(&b))
        }
        Some(o) => o,
    });
    let mut top: Vec<usize> = order.into_iter().take(h_prime).collect();
    top.sort_unstable();
    top
}

/// `K_n` from selection scores.
pub fn build_state_space(scores: &[f64], cfg: &TruncationConfig) -> StateSpace {
    StateSpace::from_index_set(scores.len(), select_indices(scores, cfg.h_prime), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(space: &StateSpace) -> Vec<String> {
        space.states().iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_enumerated_example() {
        let space = build_state_space(&[3.0, 1.0, 2.0, 0.0], &TruncationConfig::new(2, 2));
        assert_eq!(space.index_set(), &[0, 2]);
        assert_eq!(names(&space), ["0000", "0001", "0010", "0100", "1000", "1010"]);
    }

    #[test]
    fn no_truncation_gives_everything() {
        let space = build_state_space(&[0.1, 0.5, -1.0], &TruncationConfig::full(3));
        assert_eq!(space.len(), 8);
        assert_eq!(space, StateSpace::full(3));
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(select_indices(&[1.0; 6], 3), vec![0, 1, 2]);
        assert_eq!(select_indices(&[0.0, 2.0, 2.0, 1.0], 2), vec![1, 2]);
        assert_eq!(select_indices(&[f64::NAN, 0.0, 1.0], 2), vec![1, 2]);
    }

    #[test]
    fn singletons_can_be_disabled() {
        let mut cfg = TruncationConfig::new(2, 1);
        cfg.include_singletons = false;
        let space = build_state_space(&[3.0, 1.0, 2.0, 0.0], &cfg);
        assert_eq!(names(&space), ["0000", "0010", "1000"]);
        assert_eq!(space.len(), cfg.states_per_point(4));
    }
}
