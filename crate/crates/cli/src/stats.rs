//! Median and formatting helpers shared by the run summary and the
//! comparison report.
//!
//! Steps-to-convergence is a censored quantity: a seed that never converged
//! has no finite value, so it sorts above every finite count and any order
//! statistic that lands on it is reported as "none" instead of a number.

/// Median with the even-count midpoint averaged. `None` on empty input.
pub fn median_f64(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Median steps-to-convergence across seeds; non-converged seeds sort last
/// and make the median `None` when one lands in the middle.
pub fn median_steps(steps: &[Option<usize>]) -> Option<f64> {
    if steps.is_empty() {
        return None;
    }
    let mut keys: Vec<usize> = steps.iter().map(|s| s.unwrap_or(usize::MAX)).collect();
    keys.sort_unstable();
    let finite = |v: usize| (v != usize::MAX).then_some(v as f64);
    let n = keys.len();
    if n % 2 == 1 {
        finite(keys[n / 2])
    } else {
        Some((finite(keys[n / 2 - 1])? + finite(keys[n / 2])?) / 2.0)
    }
}

/// Fastest convergence among seeds that converged; `None` if none did.
pub fn min_steps(steps: &[Option<usize>]) -> Option<usize> {
    steps.iter().filter_map(|s| *s).min()
}

/// Slowest convergence; `None` if any seed never converged, because the
/// distribution's maximum is then beyond the horizon rather than a number.
pub fn max_steps(steps: &[Option<usize>]) -> Option<usize> {
    if steps.is_empty() || steps.iter().any(|s| s.is_none()) {
        return None;
    }
    steps.iter().filter_map(|s| *s).max()
}

/// Renders an optional statistic, using "none" for missing values.
pub fn fmt_opt<T: std::fmt::Display>(value: Option<T>) -> String {
    value.map_or_else(|| "none".to_string(), |v| v.to_string())
}
