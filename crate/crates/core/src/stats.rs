//! Nonparametric significance machinery: exact Mann-Whitney U, percentile
//! bootstrap intervals, Cohen's d and leave-one-out resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of group arrangements, C(n_a + n_b, n_a), for which the
/// exact null distribution is used.
pub const EXACT_ARRANGEMENT_LIMIT: u128 = 1_000_000;

pub const DEFAULT_SEED: u64 = 0x5EED_E407;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n_a: usize,
    pub n_b: usize,
}

/// Mid-ranks (1-based) of the pooled sample, doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank ((i+1) + j) / 2
        let doubled = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = doubled;
        }
        i = j;
    }
    ranks
}

pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Two-sided Mann-Whitney U test. `U = min(U_a, U_b)`.
///
/// The exact p-value counts, over every way of choosing which pooled
/// observations belong to group `a`, how many give a `U_a` at least as
/// extreme as observed, and doubles the smaller tail (capped at 1). Ties
/// keep their mid-ranks in every arrangement. Above
/// [`EXACT_ARRANGEMENT_LIMIT`] arrangements a tie-corrected normal
/// approximation with continuity correction is used instead.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "Mann-Whitney U needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let rank_sum_a2: u64 = ranks[..n_a].iter().sum();
    // 2·U_a = 2·R_a − n_a(n_a+1)
    let offset2 = (n_a * (n_a + 1)) as u64;
    let u_a2 = rank_sum_a2 - offset2;
    let u_a = u_a2 as f64 / 2.0;
    let u_b = (n_a * n_b) as f64 - u_a;
    let statistic = u_a.min(u_b);

    let arrangements = binomial((n_a + n_b) as u64, n_a as u64);
    if arrangements <= EXACT_ARRANGEMENT_LIMIT {
        let dist = rank_sum_distribution(&ranks, n_a);
        let (mut lower, mut upper) = (0u128, 0u128);
        for (sum2, &count) in dist.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let sum2 = sum2 as u64;
            if sum2 <= rank_sum_a2 {
                lower += count;
            }
            if sum2 >= rank_sum_a2 {
                upper += count;
            }
        }
        let tail = lower.min(upper);
        let p_value = ((2 * tail) as f64 / arrangements as f64).min(1.0);
        return Ok(TestResult {
            statistic,
            p_value,
            method: TestMethod::Exact,
            n_a,
            n_b,
        });
    }

    let n = (n_a + n_b) as f64;
    let mean = (n_a * n_b) as f64 / 2.0;
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt();
        libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method: TestMethod::NormalApprox,
        n_a,
        n_b,
    })
}

/// `dist[s]` = number of size-`k` subsets of `ranks` whose (doubled) rank
/// sum is `s`.
fn rank_sum_distribution(ranks: &[u64], k: usize) -> Vec<u128> {
    let max_sum: u64 = {
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable();
        sorted.iter().rev().take(k).sum()
    };
    let width = max_sum as usize + 1;
    // table[j][s]: subsets of size j with sum s among items seen so far
    let mut table = vec![vec![0u128; width]; k + 1];
    table[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for j in (1..=k).rev() {
            let (lo, hi) = table.split_at_mut(j);
            let prev = &lo[j - 1];
            let cur = &mut hi[0];
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    table.swap_remove(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Linear-interpolated quantile of sorted data (the "linear" convention).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval for `mean(a) − mean(b)`.
///
/// Resample `i` draws from its own ChaCha8 stream (`seed`, stream `i`), so
/// the interval depends only on the seed and not on evaluation order.
pub fn bootstrap_ci(
    a: &[f64],
    b: &[f64],
    n_resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<Interval> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "bootstrap needs two non-empty samples".into(),
        ));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    if n_resamples < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 resamples, got {n_resamples}"
        )));
    }
    let resample_mean = |rng: &mut ChaCha8Rng, x: &[f64]| {
        (0..x.len())
            .map(|_| x[rng.random_range(0..x.len())])
            .sum::<f64>()
            / x.len() as f64
    };
    let mut diffs: Vec<f64> = (0..n_resamples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            resample_mean(&mut rng, a) - resample_mean(&mut rng, b)
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    Ok(Interval {
        lower: quantile_sorted(&diffs, alpha / 2.0),
        upper: quantile_sorted(&diffs, 1.0 - alpha / 2.0),
    })
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Cohen's d with the pooled (n−1) standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "Cohen's d needs at least 2 observations per sample".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b))
        / (na + nb - 2.0))
        .sqrt();
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return Err(Error::UndefinedEffect);
    }
    Ok(diff / pooled)
}

/// `out[i] = reduce(samples without element i)`.
pub fn loo_means<T: Clone>(samples: &[T], reduce: impl Fn(&[T]) -> f64) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "leave-one-out needs at least 2 samples".into(),
        ));
    }
    let mut buf = Vec::with_capacity(samples.len() - 1);
    Ok((0..samples.len())
        .map(|i| {
            buf.clear();
            buf.extend(samples[..i].iter().cloned());
            buf.extend(samples[i + 1..].iter().cloned());
            reduce(&buf)
        })
        .collect())
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    (m, var.sqrt())
}
