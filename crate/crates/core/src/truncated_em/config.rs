use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation parameters: the `h_prime` best-scoring latents of each point
/// span its state space, with at most `gamma` of them active at once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub h_prime: usize,
    pub gamma: usize,
    /// Add every singleton state, including those outside the selected set.
    pub include_singletons: bool,
}

impl TruncationConfig {
    pub fn new(h_prime: usize, gamma: usize) -> Self {
        TruncationConfig {
            h_prime,
            gamma,
            include_singletons: true,
        }
    }

    /// No truncation: every one of the `2^H` states.
    pub fn full(h: usize) -> Self {
        Self::new(h, h)
    }

    pub fn validate(&self, h: usize) -> Result<()> {
        if !(1 <= self.gamma && self.gamma <= self.h_prime && self.h_prime <= h) {
            return Err(Error::InvalidConfig(format!(
                "truncation needs 1 <= gamma <= H' <= H (gamma = {}, H' = {}, H = {h})",
                self.gamma, self.h_prime
            )));
        }
        if self.h_prime >= 64 {
            return Err(Error::InvalidConfig(format!("H' = {} is too large to enumerate", self.h_prime)));
        }
        Ok(())
    }

    /// `|K_n| = Σ_{γ'=0}^{γ} C(H', γ') + (H − H')` (the last term only with
    /// singletons enabled).
    pub fn states_per_point(&self, h: usize) -> usize {
        let inside: usize = (0..=self.gamma).map(|g| binomial(self.h_prime, g)).sum();
        if self.include_singletons {
            inside + h - self.h_prime
        } else {
            inside
        }
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn state_counts() {
        assert_eq!(TruncationConfig::new(2, 2).states_per_point(4), 6);
        assert_eq!(TruncationConfig::full(6).states_per_point(6), 64);
        assert_eq!(TruncationConfig::new(5, 3).states_per_point(16), 26 + 11);
    }

    #[test]
    fn validation() {
        assert!(TruncationConfig::new(5, 3).validate(10).is_ok());
        assert!(TruncationConfig::new(5, 6).validate(10).is_err());
        assert!(TruncationConfig::new(11, 3).validate(10).is_err());
        assert!(TruncationConfig::new(3, 0).validate(10).is_err());
    }
}
