//! Pool-adjacent-violators isotonic regression.

/// Least-squares non-decreasing fit of `y` with positive weights `w`
/// (unit weights when `None`).
pub fn non_decreasing(y: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (i, &v) in y.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i]);
        blocks.push((v, wi, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let total = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / total, total, l1 + l2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, len)| std::iter::repeat_n(m, len))
        .collect()
}

/// Least-squares non-increasing fit.
pub fn non_increasing(y: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    non_decreasing(&neg, w).into_iter().map(|v| -v).collect()
}
