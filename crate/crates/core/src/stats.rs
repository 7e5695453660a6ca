//! Small statistics toolbox shared by the probes and the alignment code.
//!
//! Distribution functions come from `statrs`; everything else (ranks,
//! correlation, ANOVA decomposition, quantiles) is written out here because
//! the conventions matter: average ranks for ties, `n - 1` standard
//! deviations, type-7 quantiles.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator). Zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 1-based ranks with ties sharing the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Result of a correlation. `degenerate` is set when one of the inputs has
/// zero variance; `r` is then NaN (Pearson) or 0 (Spearman, see
/// [`spearman`]) and `p` is NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub degenerate: bool,
}

fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value for a correlation coefficient via the t transform.
fn correlation_p(r: f64, n: usize) -> f64 {
    if n < 3 {
        return f64::NAN;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Pearson correlation with a two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, got: x.len() });
    }
    Ok(match pearson_r(x, y) {
        Some(r) => Correlation { r, p: correlation_p(r, x.len()), n: x.len(), degenerate: false },
        None => Correlation { r: f64::NAN, p: f64::NAN, n: x.len(), degenerate: true },
    })
}

/// Spearman correlation: Pearson on average ranks.
///
/// A constant input gives `r = 0` with `degenerate = true`.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, got: x.len() });
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    Ok(match pearson_r(&rx, &ry) {
        Some(r) => Correlation { r, p: correlation_p(r, x.len()), n: x.len(), degenerate: false },
        None => Correlation { r: 0.0, p: f64::NAN, n: x.len(), degenerate: true },
    })
}

/// Upper tail of Student's t with `df` degrees of freedom.
pub fn t_sf(t: f64, df: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    StudentsT::new(0.0, 1.0, df).expect("df > 0").sf(t)
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("df > 0").sf(x)
}

/// One-way ANOVA decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub eta_squared: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// One-way ANOVA over `groups`.
///
/// Zero within-group variance with nonzero between-group variance gives
/// `f = f64::MAX` and `p = 0`; when both are zero, `f = 0`, `p = 1`.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, got: groups.len() });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::PopulationTooSmall { needed: 2, got: g.len() });
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let ss_total = ss_between + ss_within;
    let eta_squared = if ss_total > 0.0 { ss_between / ss_total } else { 0.0 };
    let (f, p) = if ss_within > 0.0 {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        let dist = FisherSnedecor::new(df_between as f64, df_within as f64).expect("df > 0");
        (f, dist.sf(f))
    } else if ss_between > 0.0 {
        (f64::MAX, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(Anova { f, p, eta_squared, ss_between, ss_within, df_between, df_within })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(average_ranks(&[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn quantile_type7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn pearson_exact_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let c = pearson(&x, &y).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert!(c.p < 1e-10);
        let c = pearson(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c.r + 1.0).abs() < 1e-12);
        assert!(c.p.is_nan(), "two points leave no degrees of freedom");
        let c = pearson(&[1.0, 1.0, 1.0], &x[..3]).unwrap();
        assert!(c.degenerate && c.r.is_nan() && c.p.is_nan());
    }

    #[test]
    fn pearson_p_value_matches_reference() {
        // r = 0.5, n = 10 → t = 1.63299, two-sided p = 0.1411133
        let p = correlation_p(0.5, 10);
        assert!((p - 0.141_113_28).abs() < 1e-7, "{p}");
    }

    #[test]
    fn spearman_degenerate_reports_zero() {
        let c = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.r, 0.0);
    }

    #[test]
    fn anova_conventions() {
        let a = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!((a.f, a.eta_squared), (0.0, 0.0));
        let a = one_way_anova(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(a.f, f64::MAX);
        assert_eq!(a.p, 0.0);
        assert_eq!(a.eta_squared, 1.0);
        let a = one_way_anova(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!((a.f, a.p), (0.0, 1.0));
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn anova_reference_values() {
        // sums of squares by hand
        let a = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.5]]).unwrap();
        let (g, m3) = (45.5 / 9.0, 24.5 / 3.0);
        let ss_b = 3.0 * ((2.0f64 - g).powi(2) + (5.0f64 - g).powi(2) + (m3 - g).powi(2));
        let ss_w = 2.0 + 2.0 + [7.0, 8.0, 9.5].iter().map(|x: &f64| (x - m3).powi(2)).sum::<f64>();
        assert!((a.ss_between - ss_b).abs() < 1e-10);
        assert!((a.ss_within - ss_w).abs() < 1e-10);
        assert!((a.f - (ss_b / 2.0) / (ss_w / 6.0)).abs() < 1e-10);
        // F = 23.88372, p = 0.0013896 (scipy.stats.f_oneway)
        assert!((a.f - 23.883_720_930).abs() < 1e-8);
        assert!((a.p - 0.001_389_618_6).abs() < 1e-8);
    }
}
