// Order-independent descriptive statistics: values are sorted before summation.

pub(crate) fn sorted_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    sorted_sum(values) / values.len() as f64
}

/// Population standard deviation (divides by `n`).
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let m = mean(values);
    if values.len() == 1 {
        return (m, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (m, (sorted_sum(&squares) / values.len() as f64).sqrt())
}
