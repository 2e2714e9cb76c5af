use nalgebra::DMatrix;

/// Number of generating columns matched by some learned column with
/// `|cos| > threshold`.
pub fn matched_columns(learned: &DMatrix<f64>, generating: &DMatrix<f64>, threshold: f64) -> usize {
    generating
        .column_iter()
        .filter(|g| {
            let gn = g.norm();
            gn > 0.0
                && learned.column_iter().any(|l| {
                    let ln = l.norm();
                    ln > 0.0 && (l.dot(g) / (ln * gn)).abs() > threshold
                })
        })
        .count()
}

/// Number of learned columns whose best-matching generating column has
/// `|cos| > threshold`.
pub fn hit_columns(learned: &DMatrix<f64>, generating: &DMatrix<f64>, threshold: f64) -> usize {
    matched_columns(generating, learned, threshold)
}

/// Counts of `values` in `bins` equal-width bins over `[0, 1]`.
pub fn unit_histogram(values: impl IntoIterator<Item = f64>, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}
