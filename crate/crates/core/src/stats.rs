//! Small statistics helpers: empirical CDFs and nearest-rank percentiles.

/// Right-continuous empirical CDF evaluated at the sorted sample points.
///
/// Returns `(value, F(value))` pairs over the distinct sample values in
/// ascending order; the last probability is always 1. Empty input yields
/// an empty series (logged as a warning).
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    if samples.is_empty() {
        log::warn!("empirical_cdf called with no samples; returning empty series");
        return Vec::new();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => out.push((x, p)),
        }
    }
    out
}

/// Nearest-rank percentile: with the samples sorted ascending, the value at
/// 1-based rank `ceil(p/100 * n)`, clamped into range.
///
/// `samples` need not be sorted; `p` in (0, 100]. Panics on empty input —
/// callers own the empty-set convention.
pub fn nearest_rank_percentile(samples: &[f64], p: f64) -> f64 {
    assert!(!samples.is_empty(), "percentile of empty sample set");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    let rank = rank.clamp(1, n);
    sorted[rank - 1]
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cdf_of_three_distinct_samples() {
        let cdf = empirical_cdf(&[1.0, 2.0, 3.0]);
        assert_eq!(cdf, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
    }

    #[test]
    fn cdf_of_equal_samples_is_single_step() {
        let cdf = empirical_cdf(&[5.0, 5.0, 5.0, 5.0]);
        assert_eq!(cdf, vec![(5.0, 1.0)]);
    }

    #[test]
    fn cdf_of_empty_is_empty() {
        assert!(empirical_cdf(&[]).is_empty());
    }

    #[test]
    fn nearest_rank_examples() {
        let xs = [2.0, 4.0, 6.0, 8.0, 10.0];
        assert_eq!(nearest_rank_percentile(&xs, 5.0), 2.0); // rank ceil(0.25) = 1
        assert_eq!(nearest_rank_percentile(&xs, 50.0), 6.0);
        assert_eq!(nearest_rank_percentile(&xs, 100.0), 10.0);
        assert_eq!(nearest_rank_percentile(&[7.0], 5.0), 7.0);
    }

    proptest! {
        #[test]
        fn cdf_is_monotone_and_ends_at_one(samples in prop::collection::vec(0.0f64..1e9, 1..200)) {
            let cdf = empirical_cdf(&samples);
            prop_assert_eq!(cdf.last().unwrap().1, 1.0);
            for pair in cdf.windows(2) {
                prop_assert!(pair[0].0 < pair[1].0);
                prop_assert!(pair[0].1 < pair[1].1);
            }
        }

        #[test]
        fn percentile_is_attained_sample(samples in prop::collection::vec(0.0f64..1e9, 1..100),
                                         p in 1.0f64..100.0) {
            let v = nearest_rank_percentile(&samples, p);
            prop_assert!(samples.contains(&v));
        }
    }
}
