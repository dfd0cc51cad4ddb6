use std::fmt;

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub const Z_95: f64 = 1.959_963_984_540_054;

/// One evaluation metric. Proportions carry a 95% interval.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub trials: u64,
    pub ci: Option<(f64, f64)>,
    pub skipped: u64,
    pub warning: Option<String>,
}

impl EvalReport {
    pub fn proportion(metric: impl Into<String>, successes: u64, trials: u64) -> Self {
        EvalReport {
            metric: metric.into(),
            value: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            trials,
            ci: Some(wilson_interval(successes, trials, Z_95)),
            skipped: 0,
            warning: None,
        }
    }

    pub fn scalar(metric: impl Into<String>, value: f64, trials: u64) -> Self {
        EvalReport {
            metric: metric.into(),
            value,
            trials,
            ci: None,
            skipped: 0,
            warning: None,
        }
    }

    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci.is_some_and(|(lo, hi)| lo <= x && x <= hi)
    }

    pub fn ci_excludes(&self, x: f64) -> bool {
        self.ci.is_some_and(|(lo, hi)| x < lo || x > hi)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "metric={} value={:.6} n={}", self.metric, self.value, self.trials)?;
        if let Some((lo, hi)) = self.ci {
            write!(f, " ci_low={lo:.6} ci_high={hi:.6}")?;
        }
        if self.skipped > 0 {
            write!(f, " skipped={}", self.skipped)?;
        }
        if let Some(w) = &self.warning {
            write!(f, " warning=\"{w}\"")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_interval() {
        // 50/100: centre 0.5, half-width 1.96 * sqrt(0.25/100 + 1.96^2/40000) / (1 + 1.96^2/100).
        let (lo, hi) = wilson_interval(50, 100, Z_95);
        let z2 = Z_95 * Z_95;
        let half = Z_95 * (0.0025 + z2 / 40_000.0).sqrt() / (1.0 + z2 / 100.0);
        assert!((lo - (0.5 - half)).abs() < 1e-12 && (hi - (0.5 + half)).abs() < 1e-12);
        assert!((lo - 0.4038).abs() < 1e-4);
    }

    #[test]
    fn extreme_counts_stay_in_range() {
        let (lo, hi) = wilson_interval(0, 20, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.2);
        let (lo, hi) = wilson_interval(20, 20, Z_95);
        assert!(lo > 0.8 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn display_is_key_value() {
        let r = EvalReport::proportion("matching_accuracy", 3, 4);
        let s = r.to_string();
        assert!(s.starts_with("metric=matching_accuracy value=0.750000 n=4 ci_low="));
        assert!(!EvalReport::scalar("x", 1.0, 2).to_string().contains("ci_"));
    }

    proptest! {
        #[test]
        fn interval_brackets_the_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
            let k = (frac * n as f64).round() as u64;
            let r = EvalReport::proportion("p", k, n);
            let (lo, hi) = r.ci.unwrap();
            prop_assert!(0.0 <= lo && lo <= r.value + 1e-12 && r.value <= hi + 1e-12 && hi <= 1.0);
        }
    }
}
