//! Mann-Whitney U tests and percentile-bootstrap intervals for medians.

use rand::Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest `n_a * n_b` for which untied samples get an exact p-value.
pub const EXACT_LIMIT: usize = 400;
pub const DEFAULT_RESAMPLES: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(Error::Argument(format!("sample `{label}` is empty")));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Argument(format!("sample `{label}` contains NaN")));
        }
        Ok(SampleSet { label, values })
    }

    pub fn median(&self) -> f64 {
        median(&self.values)
    }
}

/// Median with the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MannWhitney {
    /// Pairs `(a_i, b_j)` with `a_i > b_j`, ties counting one half.
    pub u_a: f64,
    pub u_b: f64,
    /// Two-sided.
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Mann-Whitney U test with midranks. Exact when there are no ties
/// and `n_a * n_b <= EXACT_LIMIT`; otherwise the normal approximation with
/// tie and continuity corrections.
pub fn mann_whitney_u(a: &SampleSet, b: &SampleSet) -> Result<MannWhitney> {
    for s in [a, b] {
        if s.values.is_empty() {
            return Err(Error::Argument(format!("sample `{}` is empty", s.label)));
        }
    }
    let na = a.values.len();
    let nb = b.values.len();
    let mut pooled: Vec<(f64, bool)> = a
        .values
        .iter()
        .map(|&v| (v, true))
        .chain(b.values.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let n = pooled.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += midrank * pooled[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;

    if tie_term == 0.0 && na * nb <= EXACT_LIMIT {
        let p_value = exact_p(na, nb, u_a.round() as usize);
        return Ok(MannWhitney { u_a, u_b, p_value, exact: true });
    }

    let mean = (na * nb) as f64 / 2.0;
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u_a, u_b, p_value, exact: false })
}

/// Number of orderings of `na` a's and `nb` b's giving each value of U_a.
fn u_distribution(na: usize, nb: usize) -> Vec<u64> {
    let max_u = na * nb;
    // table[i][j] = counts for i a's and j b's
    let mut prev: Vec<Vec<u64>> = (0..=nb).map(|_| vec![0; max_u + 1]).collect();
    for row in prev.iter_mut() {
        row[0] = 1;
    }
    for _i in 1..=na {
        let mut cur: Vec<Vec<u64>> = (0..=nb).map(|_| vec![0; max_u + 1]).collect();
        cur[0][0] = 1;
        for j in 1..=nb {
            for u in 0..=max_u {
                // largest element is an a (beats all j b's) or a b
                let from_a = if u >= j { prev[j][u - j] } else { 0 };
                cur[j][u] = from_a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(nb)
}

fn exact_p(na: usize, nb: usize, u: usize) -> f64 {
    let counts = u_distribution(na, nb);
    let total: u64 = counts.iter().sum();
    let lower: u64 = counts[..=u].iter().sum();
    let upper: u64 = counts[u..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

/// Percentile bootstrap interval for the median.
pub fn bootstrap_median_ci<R: Rng + ?Sized>(
    x: &SampleSet,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if resamples == 0 {
        return Err(Error::Argument("need at least one resample".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Argument(format!("confidence level must be in (0, 1), got {level}")));
    }
    let n = x.values.len();
    let mut buf = vec![0.0; n];
    let mut medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = x.values[rng.random_range(0..n)];
            }
            median(&buf)
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let lo = ((alpha / 2.0) * resamples as f64).floor() as usize;
    let hi = (((1.0 - alpha / 2.0) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    Ok((medians[lo.min(resamples - 1)], medians[hi]))
}
