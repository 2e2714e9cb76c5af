//! Evaluation metrics: Amari index, PSNR and the KL divergence implied by
//! a Q-value.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::denoise::GrayImage;
use crate::error::{Error, Result};

/// A scalar metric aggregated over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub n_trials: usize,
    /// Sample standard deviation across trials (`0` for a single trial).
    pub std: f64,
}

impl MetricReport {
    pub fn single(name: impl Into<String>, value: f64) -> Self {
        MetricReport {
            name: name.into(),
            value,
            n_trials: 1,
            std: 0.0,
        }
    }

    /// Mean and sample standard deviation of `samples`.
    pub fn from_samples(name: impl Into<String>, samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
        let std = if n > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MetricReport {
            name: name.into(),
            value: mean,
            n_trials: n,
            std,
        }
    }
}

pub const METRIC_CSV_HEADER: &str = "name,value,n_trials,std";

pub fn write_metrics_csv<W: Write>(mut out: W, reports: &[MetricReport]) -> std::io::Result<()> {
    writeln!(out, "{METRIC_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{},{:.17e},{},{:.17e}", r.name, r.value, r.n_trials, r.std)?;
    }
    Ok(())
}

/// Amari index between a learned square basis `w` and the generating basis
/// `w_gen`, computed from `O = W⁻¹ W_gen` after scaling every column of both
/// bases to unit length (only orientations are compared):
///
/// ```text
/// A = 1/(2H(H−1)) Σ_{h,h'} ( |O_hh'| / max_k |O_hk| + |O_hh'| / max_k |O_kh'| ) − 1/(H−1)
/// ```
pub fn amari_index(w: &DMatrix<f64>, w_gen: &DMatrix<f64>) -> Result<f64> {
    amari_index_flagged(w, w_gen).map(|(a, _)| a)
}

/// Like [`amari_index`]; the flag reports that `w` was too ill-conditioned
/// for a direct solve and a regularized pseudo-inverse was used.
pub fn amari_index_flagged(w: &DMatrix<f64>, w_gen: &DMatrix<f64>) -> Result<(f64, bool)> {
    let h = w.ncols();
    if w.nrows() != h {
        return Err(Error::dims("Amari index basis", "square matrix", format!("{}x{}", w.nrows(), h)));
    }
    if w_gen.shape() != (h, h) {
        return Err(Error::dims("Amari index generating basis", format!("{h}x{h}"), format!("{:?}", w_gen.shape())));
    }
    if w.iter().chain(w_gen.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite basis".into()));
    }
    let w = &unit_columns(w)?;
    let w_gen = &unit_columns(w_gen)?;
    let svd = w.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let (o, flagged) = if smin > 1e-12 * smax {
        match w.clone().lu().solve(w_gen) {
            Some(o) => (o, false),
            None => (pinv_solve(w, w_gen, smax)?, true),
        }
    } else {
        (pinv_solve(w, w_gen, smax)?, true)
    };
    Ok((amari_of(&o), flagged))
}

fn unit_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("basis has a zero column".into()));
        }
        col /= norm;
    }
    Ok(out)
}

fn pinv_solve(w: &DMatrix<f64>, w_gen: &DMatrix<f64>, smax: f64) -> Result<DMatrix<f64>> {
    if !(smax > 0.0) {
        return Err(Error::NumericalFailure {
            context: "Amari index",
            state: None,
            condition: f64::INFINITY,
        });
    }
    let pinv = w
        .clone()
        .pseudo_inverse(1e-12 * smax)
        .map_err(|_| Error::NumericalFailure {
            context: "Amari index",
            state: None,
            condition: f64::INFINITY,
        })?;
    Ok(pinv * w_gen)
}

/// The index itself, given `O`.
pub fn amari_of(o: &DMatrix<f64>) -> f64 {
    let h = o.nrows();
    if h < 2 {
        return 0.0;
    }
    let a = o.abs();
    let row_max: Vec<f64> = (0..h).map(|r| a.row(r).max()).collect();
    let col_max: Vec<f64> = (0..h).map(|c| a.column(c).max()).collect();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..h {
            if row_max[r] > 0.0 {
                total += a[(r, c)] / row_max[r];
            }
            if col_max[c] > 0.0 {
                total += a[(r, c)] / col_max[c];
            }
        }
    }
    let hf = h as f64;
    total / (2.0 * hf * (hf - 1.0)) - 1.0 / (hf - 1.0)
}

/// `20 log10(peak / RMSE)`; `+∞` when the images are identical.
pub fn psnr(clean: &GrayImage, test: &GrayImage, peak: f64) -> Result<f64> {
    if clean.shape() != test.shape() {
        return Err(Error::dims(
            "PSNR images",
            format!("{:?}", clean.shape()),
            format!("{:?}", test.shape()),
        ));
    }
    let mse = clean
        .pixels()
        .iter()
        .zip(test.pixels().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / clean.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / mse.sqrt()).log10())
}

/// `KL(q_n ‖ p) = −ln Q`.
pub fn kl_from_q(q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidInput(format!("Q-value must lie in (0, 1], got {q}")));
    }
    Ok(-q.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn amari_hand_example() {
        let o = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert_abs_diff_eq!(amari_of(&o), 0.25, epsilon = 1e-15);
        // unit columns of W_gen = O: [1, 0] and [0.5, 1]/√1.25
        let b = 0.5 / 1.25f64.sqrt();
        let want = ((1.0 + b) + 1.0 + 1.0 + (b / (1.0 / 1.25f64.sqrt()) + 1.0)) / 4.0 - 1.0;
        assert_abs_diff_eq!(amari_index(&DMatrix::identity(2, 2), &o).unwrap(), want, epsilon = 1e-15);
    }

    #[test]
    fn amari_zero_for_scaled_permutation() {
        let w_gen = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -1.0, 0.5, 1.5, 0.2, -0.4, 0.9, 1.1]);
        assert!(amari_index(&w_gen, &w_gen).unwrap().abs() < 1e-12);
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 0.2, 5.0]));
        let w = &w_gen * p * s;
        assert!(amari_index(&w, &w_gen).unwrap().abs() < 1e-12);
    }

    #[test]
    fn amari_rejects_non_square() {
        assert!(amari_index(&DMatrix::zeros(3, 2), &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = GrayImage::new(DMatrix::from_element(4, 4, 0.0)).unwrap();
        let b = GrayImage::new(DMatrix::from_element(4, 4, 255.0)).unwrap();
        assert_abs_diff_eq!(psnr(&a, &b, 255.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let c = GrayImage::new(DMatrix::from_element(3, 4, 0.0)).unwrap();
        assert!(psnr(&a, &c, 255.0).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_from_q(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_from_q((-1.0f64).exp()).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_from_q(0.99).unwrap(), 0.01005, epsilon = 1e-5);
        assert!(kl_from_q(0.0).is_err());
        assert!(kl_from_q(1.5).is_err());
    }

    #[test]
    fn report_statistics() {
        let r = MetricReport::from_samples("a", &[1.0, 3.0]);
        assert_eq!(r.value, 2.0);
        assert_abs_diff_eq!(r.std, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(MetricReport::from_samples("b", &[4.0]).std, 0.0);
    }
}
