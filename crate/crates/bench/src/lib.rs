//! Benchmark fixtures.

use spikeslab::datagen::bars_dataset;
use spikeslab::{random_init, Dataset, ModelParams, NoiseMode};

/// Bars data with `h` latents and `n` points, plus a random initialization.
pub fn bars_fixture(h: usize, n: usize) -> (Dataset, ModelParams) {
    let (data, _) = bars_dataset(h, n, 7).expect("valid bars fixture");
    let init = random_init(&data, h, NoiseMode::Homoscedastic, 8).expect("valid init");
    (data, init)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let (data, init) = bars_fixture(10, 50);
        assert_eq!((data.d(), data.n()), (25, 50));
        assert_eq!(init.h(), 10);
    }
}
