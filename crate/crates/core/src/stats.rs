//! Exact binomial confidence intervals.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Two-sided Clopper–Pearson interval for `k` successes in `trials`.
pub fn clopper_pearson(k: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || k > trials {
        return Err(Error::domain("trials", format!("need 0 <= k <= T with T >= 1, got {k}/{trials}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    let tail = (1.0 - confidence) / 2.0;
    let (k, t) = (k as f64, trials as f64);
    // lower: P[Bin(T, p) >= k] = tail, i.e. I_p(k, T - k + 1) = tail
    let lower = if k == 0.0 {
        0.0
    } else {
        invert_increasing(|p| beta_reg(k, t - k + 1.0, p), tail)
    };
    // upper: P[Bin(T, p) <= k] = tail, i.e. I_p(k + 1, T - k) = 1 - tail
    let upper = if k == t {
        1.0
    } else {
        invert_increasing(|p| beta_reg(k + 1.0, t - k, p), 1.0 - tail)
    };
    Ok((lower, upper))
}

/// Root of `f(p) = target` for `f` increasing on `[0, 1]`.
fn invert_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes_has_closed_form_upper() {
        let (lo, hi) = clopper_pearson(0, 1000, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        // (1 - p)^T = 0.025
        let want = 1.0 - 0.025f64.powf(1.0 / 1000.0);
        assert!((hi - want).abs() < 1e-12, "{hi} vs {want}");
    }

    #[test]
    fn all_successes_has_closed_form_lower() {
        let (lo, hi) = clopper_pearson(500, 500, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(1.0 / 500.0)).abs() < 1e-12);
    }

    #[test]
    fn interval_contains_point_estimate() {
        for (k, t) in [(1, 10), (5, 10), (9, 10), (37, 2000), (1999, 2000)] {
            let (lo, hi) = clopper_pearson(k, t, 0.95).unwrap();
            let p = k as f64 / t as f64;
            assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        }
    }

    #[test]
    fn known_value() {
        // 5/10 at 95%: (0.187086, 0.812914)
        let (lo, hi) = clopper_pearson(5, 10, 0.95).unwrap();
        assert!((lo - 0.187086).abs() < 1e-6);
        assert!((hi - 0.812914).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(clopper_pearson(3, 2, 0.95).is_err());
        assert!(clopper_pearson(0, 0, 0.95).is_err());
    }
}
