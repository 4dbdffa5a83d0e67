//! Small descriptive statistics shared across modules.

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). `data` need not be sorted.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn std_dev(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(data);
    (data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Interquartile range.
pub fn iqr(data: &[f64]) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

/// Mean and standard error of the mean.
pub fn mean_se(data: &[f64]) -> (f64, f64) {
    let n = data.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(data);
    let se = if n > 1 { std_dev(data) / (n as f64).sqrt() } else { 0.0 };
    (m, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let d = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 1.0), 4.0);
        assert_eq!(quantile(&d, 0.5), 2.5);
        assert_eq!(quantile(&d, 0.25), 1.75);
        assert_eq!(iqr(&d), 1.5);
    }

    #[test]
    fn moments() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(mean(&d), 3.0);
        assert!((std_dev(&d) - 2.5f64.sqrt()).abs() < 1e-15);
        let (m, se) = mean_se(&d);
        assert_eq!(m, 3.0);
        assert!((se - (2.5f64 / 5.0).sqrt()).abs() < 1e-15);
    }
}
